//! Command-line front end. Flags override the matching keys of an optional
//! TOML config file; see the README for the layout.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::complexity::{
    check_eps_schedule, check_m_schedule, greedy_rows, mdim_estimate, sep_rate, symbolic_mdim_table, symbolic_rows,
    symbolic_sep_estimate, CloudSpec, ComplexityReport, CountMode, CountRow, CountValue, MdimEstimate,
};
use crate::error::Error;
use crate::horseshoe::{build_chained, build_pseudo_horseshoe, AnyHorseshoe, HorseshoeParams};
use crate::katok::{
    horseshoe_gap_table, katok_csv, katok_entropy, variational_gap, GapMode, GapTable, MeasureKind, MeasureSpec,
    DEFAULT_MASS_DELTAS,
};
use crate::markov_check::{verify_stage, PieceReport};
use crate::systems::SystemHandle;

pub const SEED_ENV: &str = "MDIMLAB_SEED";

/// δ used when building a single horseshoe without `--delta`.
pub const DEFAULT_DELTA: f64 = 0.25;
/// δ used for family tables (`--k-schedule`) without `--delta`. The finite-k
/// ratio is `n (1 - ln 2δ / ln ε_k)`, so δ close to 1/2 has the least bias.
pub const DEFAULT_FAMILY_DELTA: f64 = 0.45;

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    /// Verification ran and found a failing piece.
    Verification(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(Error::Schedule(_)) => 4,
            CliError::Lib(Error::Format(_)) => 1,
            CliError::Lib(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Verification(s) => write!(f, "verification failed: {s}"),
            CliError::Io(s) => write!(f, "{s}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Lib(Error::InvalidParams(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "mdimlab",
    version,
    about = "Separated/spanning counts, mean dimension estimates and pseudo-horseshoes"
)]
pub struct Cli {
    /// TOML config; flags win over its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed; falls back to the config, then to $MDIMLAB_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a pseudo-horseshoe (or a chained one with --p) and write it as JSON.
    Build(BuildArgs),
    /// Check every Markov piece of a horseshoe file; exit 3 on any failure.
    Verify(VerifyArgs),
    /// Separated counts and Sep-rate fits.
    Sep(CountArgs),
    /// Finite-scale metric mean dimension table.
    Mdim(CountArgs),
    /// Katok ε-entropy of a sampled measure.
    Katok(KatokArgs),
    /// Katok rate against Sep rate per scale.
    Gap(GapArgs),
}

macro_rules! mergeable {
    ($t:ident { $($f:ident),* $(,)? }) => {
        impl $t {
            /// Fields set here win; the rest come from `fallback`.
            pub fn merged(self, fallback: Self) -> Self {
                $t { $($f: self.$f.or(fallback.$f)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Period; builds a chained horseshoe when given.
    #[arg(long)]
    pub p: Option<usize>,
    /// Chart bi-Lipschitz bound for chained horseshoes.
    #[arg(long, alias = "C")]
    pub c: Option<f64>,
    #[arg(long)]
    pub fill: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(BuildArgs {
    n,
    delta,
    k,
    p,
    c,
    fill,
    out
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    /// Horseshoe JSON file.
    pub input: Option<PathBuf>,
    /// Sampled-mode lattice resolution per face axis; 0 skips sampling.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Cap for the exact robustness radius search; 0 skips it.
    #[arg(long)]
    pub robustness_cap: Option<f64>,
    /// Verdict report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(VerifyArgs {
    input,
    resolution,
    robustness_cap,
    out
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    Identity,
    Rotation,
    Doubling,
    Cat,
    Horseshoe,
    Chained,
}

/// System selection shared by the counting commands (`[system]` in config).
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemArgs {
    #[arg(long, value_enum)]
    pub system: Option<SystemName>,
    /// Load a horseshoe file instead of building one.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dimension of identity/doubling systems.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Rotation angles, comma separated.
    #[arg(long)]
    pub angles: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, alias = "C")]
    pub c: Option<f64>,
}
mergeable!(SystemArgs {
    system,
    input,
    dim,
    angles,
    n,
    delta,
    k,
    p,
    c
});

impl SystemArgs {
    /// Lets command structs merge their flattened system flags like any
    /// other optional field.
    fn or(self, fallback: Self) -> Self {
        self.merged(fallback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudKind {
    Lattice,
    Uniform,
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Greedy,
    Symbolic,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub sys: SystemArgs,
    /// Scales: `0.1,0.05`, `2^-6` or an exponent range `2^-4:2^-9`.
    #[arg(long)]
    pub eps: Option<String>,
    /// Orbit lengths: `4:16`, `1,2,3` or a mix.
    #[arg(long)]
    pub m: Option<String>,
    /// Horseshoe family indices for symbolic tables, e.g. `1:16`.
    #[arg(long)]
    pub k_schedule: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    #[arg(long, value_enum)]
    pub cloud: Option<CloudKind>,
    /// Lattice points per axis.
    #[arg(long)]
    pub res: Option<usize>,
    /// Uniform sample size.
    #[arg(long)]
    pub count: Option<usize>,
    /// Itinerary depth of a cell-center cloud.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Also compute greedy spanning counts.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub spanning: Option<bool>,
    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(CountArgs {
    sys,
    eps,
    m,
    k_schedule,
    mode,
    cloud,
    res,
    count,
    depth,
    spanning,
    out
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureName {
    Lebesgue,
    Bernoulli,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KatokArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub sys: SystemArgs,
    #[arg(long, value_enum)]
    pub measure: Option<MeasureName>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub mass_delta: Option<f64>,
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(KatokArgs {
    sys,
    measure,
    eps,
    mass_delta,
    m,
    count,
    out
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapModeName {
    Auto,
    Sampled,
    CellOracle,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub sys: SystemArgs,
    #[arg(long, value_enum)]
    pub measure: Option<MeasureName>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub k_schedule: Option<String>,
    /// Mass defects to maximize over, comma separated.
    #[arg(long)]
    pub mass_deltas: Option<String>,
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, value_enum)]
    pub gap_mode: Option<GapModeName>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(GapArgs {
    sys,
    measure,
    eps,
    k_schedule,
    mass_deltas,
    m,
    count,
    gap_mode,
    out
});

/// Layout of the `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub system: SystemArgs,
    #[serde(default)]
    pub build: BuildArgs,
    #[serde(default)]
    pub verify: VerifyArgs,
    #[serde(default)]
    pub sep: CountArgs,
    #[serde(default)]
    pub mdim: CountArgs,
    #[serde(default)]
    pub katok: KatokArgs,
    #[serde(default)]
    pub gap: GapArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
    }
}

/// `2^-6`, `1/64` or a plain float.
pub fn parse_scalar(s: &str) -> CliResult<f64> {
    let s = s.trim();
    let bad = || invalid(format!("cannot parse number '{s}'"));
    if let Some((b, e)) = s.split_once('^') {
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let e: i32 = e.trim().parse().map_err(|_| bad())?;
        return Ok(b.powi(e));
    }
    if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        return Ok(a / b);
    }
    s.parse().map_err(|_| bad())
}

/// Comma separated scales; `2^-a:2^-b` expands to every integer exponent
/// between the two, in the given order.
pub fn parse_eps_list(s: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        match item.split_once(':') {
            Some((a, b)) => {
                let exp = |t: &str| -> CliResult<(f64, i32)> {
                    let (base, e) = t
                        .split_once('^')
                        .ok_or_else(|| invalid(format!("scale range '{item}' needs the form 2^-a:2^-b")))?;
                    let base: f64 = base
                        .trim()
                        .parse()
                        .map_err(|_| invalid(format!("bad base in '{item}'")))?;
                    let e: i32 = e
                        .trim()
                        .parse()
                        .map_err(|_| invalid(format!("bad exponent in '{item}'")))?;
                    Ok((base, e))
                };
                let (b1, e1) = exp(a)?;
                let (b2, e2) = exp(b)?;
                if b1 != b2 {
                    return Err(invalid(format!("scale range '{item}' mixes bases")));
                }
                let step = if e2 >= e1 { 1 } else { -1 };
                let mut e = e1;
                loop {
                    out.push(b1.powi(e));
                    if e == e2 {
                        break;
                    }
                    e += step;
                }
            }
            None => out.push(parse_scalar(item)?),
        }
    }
    if out.is_empty() {
        return Err(CliError::Lib(Error::Schedule(format!("empty scale list '{s}'"))));
    }
    Ok(out)
}

/// `4:16`, `1,2,3`, or a mix such as `1:3,5`.
pub fn parse_index_list(s: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let num = |t: &str| -> CliResult<usize> {
            t.trim()
                .parse()
                .map_err(|_| invalid(format!("cannot parse '{t}' in '{s}'")))
        };
        match item.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if b < a {
                    return Err(CliError::Lib(Error::Schedule(format!("range '{item}' is decreasing"))));
                }
                out.extend(a..=b);
            }
            None => out.push(num(item)?),
        }
    }
    if out.is_empty() {
        return Err(CliError::Lib(Error::Schedule(format!("empty list '{s}'"))));
    }
    Ok(out)
}

fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Resolved system plus what is known about its symbolic structure.
struct Resolved {
    handle: SystemHandle,
    name: SystemName,
    /// `(n, delta, N_k, eps_k)` for horseshoe systems.
    horseshoe: Option<(usize, f64, usize, f64)>,
}

fn params_from(a: &SystemArgs, default_delta: f64) -> CliResult<HorseshoeParams> {
    Ok(HorseshoeParams::new(
        a.n.unwrap_or(2),
        a.delta.unwrap_or(default_delta),
        a.k.unwrap_or(1),
    )?)
}

fn resolve_system(a: &SystemArgs, seed: u64) -> CliResult<Resolved> {
    if let Some(path) = &a.input {
        let (handle, name) = match AnyHorseshoe::load(path)? {
            AnyHorseshoe::Pseudo(h) => (SystemHandle::horseshoe(Arc::new(h)), SystemName::Horseshoe),
            AnyHorseshoe::Chained(h) => (SystemHandle::chained(Arc::new(h)), SystemName::Chained),
        };
        let info = horseshoe_info(&handle);
        return Ok(Resolved {
            handle,
            name,
            horseshoe: info,
        });
    }
    let name = a
        .system
        .ok_or_else(|| invalid("no system given (use --system or --input)"))?;
    let dim = a.dim.unwrap_or(1);
    let handle = match name {
        SystemName::Identity => SystemHandle::identity_torus(dim)?,
        SystemName::Rotation => {
            let angles = a
                .angles
                .as_deref()
                .ok_or_else(|| invalid("rotation needs --angles"))?
                .split(',')
                .map(parse_scalar)
                .collect::<CliResult<Vec<_>>>()?;
            SystemHandle::rotation(angles)?
        }
        SystemName::Doubling => SystemHandle::doubling(dim)?,
        SystemName::Cat => SystemHandle::cat_map(),
        SystemName::Horseshoe => {
            SystemHandle::horseshoe(Arc::new(build_pseudo_horseshoe(&params_from(a, DEFAULT_DELTA)?)?))
        }
        SystemName::Chained => {
            let params = params_from(a, DEFAULT_DELTA)?;
            SystemHandle::chained(Arc::new(build_chained(
                &params,
                a.p.unwrap_or(1),
                a.c.unwrap_or(1.5),
                seed,
            )?))
        }
    };
    let info = horseshoe_info(&handle);
    Ok(Resolved {
        handle,
        name,
        horseshoe: info,
    })
}

fn horseshoe_info(h: &SystemHandle) -> Option<(usize, f64, usize, f64)> {
    let params = h
        .as_horseshoe()
        .map(|x| x.params().clone())
        .or_else(|| h.as_chained().map(|x| x.params().clone()))?;
    let nk = params.checked_n_symbols()?;
    Some((params.n, params.delta, nk, params.eps_k()))
}

fn is_family(a: &SystemArgs) -> bool {
    a.input.is_none() && matches!(a.system, Some(SystemName::Horseshoe | SystemName::Chained))
}

/// Count of the explicit `(m, eps)`-separated grid `{i eps / 2^(m-1)}^n` for
/// the doubling map, valid for `eps <= 1/3`.
fn dyadic_count(n: usize, m: usize, eps: f64) -> CliResult<CountValue> {
    if !(eps > 0.0 && eps <= 1.0 / 3.0) {
        return Err(invalid(format!("the dyadic oracle needs eps in (0, 1/3], got {eps}")));
    }
    let per_axis = (2f64.powi(m as i32 - 1) / eps * (1.0 + 1e-12)).floor();
    let ln = n as f64 * per_axis.ln();
    Ok(if ln < 63.0 * std::f64::consts::LN_2 {
        CountValue::Exact((per_axis as u64).pow(n as u32))
    } else {
        CountValue::LogSpace(ln)
    })
}

fn default_cloud(r: &Resolved, args: &CountArgs, m_max: usize) -> CloudSpec {
    let n = r.handle.dim();
    let kind = args.cloud.unwrap_or(if r.horseshoe.is_some() {
        CloudKind::Cells
    } else {
        CloudKind::Lattice
    });
    match kind {
        CloudKind::Lattice => CloudSpec::Lattice {
            res: args.res.unwrap_or(match n {
                1 => 1 << 16,
                2 => 128,
                3 => 24,
                _ => 8,
            }),
        },
        CloudKind::Uniform => CloudSpec::Uniform {
            count: args.count.unwrap_or(10_000),
            seed: 0,
        },
        CloudKind::Cells => CloudSpec::ItineraryCells {
            depth: args.depth.unwrap_or(m_max),
        },
    }
}

#[derive(Serialize)]
struct ReportEnvelope<'a, C: Serialize, R: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a C,
    report: &'a R,
}

fn envelope<C: Serialize, R: Serialize>(command: &str, seed: u64, config: &C, report: &R) -> String {
    serde_json::to_string_pretty(&ReportEnvelope {
        command,
        seed,
        config,
        report,
    })
    .expect("reports serialize")
}

#[derive(Serialize)]
struct EffectiveCount<'a> {
    system: &'a SystemArgs,
    #[serde(flatten)]
    args: &'a CountArgs,
}

fn emit_complexity(command: &str, seed: u64, args: &CountArgs, rep: &ComplexityReport) -> CliResult<Vec<String>> {
    let prefix = args.out.clone().unwrap_or_else(|| PathBuf::from(command));
    let ts = timestamp();
    let csv = with_ext(&prefix, ".csv");
    let json = with_ext(&prefix, ".json");
    write_file(&csv, &rep.to_csv(Some(&ts)))?;
    write_file(
        &json,
        &envelope(
            command,
            seed,
            &EffectiveCount {
                system: &args.sys,
                args,
            },
            rep,
        ),
    )?;
    let mut lines = vec![format!("wrote {} and {}", csv.display(), json.display())];
    if let Some(t) = rep.mdim_csv(Some(&ts)) {
        let p = with_ext(&prefix, ".mdim.csv");
        write_file(&p, &t)?;
        lines.push(format!("wrote {}", p.display()));
    }
    Ok(lines)
}

fn mdim_lines(mdim: &MdimEstimate) -> Vec<String> {
    let mut out: Vec<String> = mdim
        .rows
        .iter()
        .map(|r| {
            let flag = if r.flagged {
                "  [exceeds n + 0.2: sampling artifact]"
            } else {
                ""
            };
            format!("eps={:<12} sep={:.6} ratio={:.6}{flag}", r.eps, r.sep, r.ratio)
        })
        .collect();
    out.push(format!(
        "mdim tail: lower={:.6} upper={:.6} slope={:.6} (n = {})",
        mdim.lower, mdim.upper, mdim.slope, mdim.dimension
    ));
    out
}

fn cmd_build(args: &BuildArgs, seed: u64) -> CliResult<Vec<String>> {
    let params = HorseshoeParams::new(
        args.n.unwrap_or(2),
        args.delta.unwrap_or(DEFAULT_DELTA),
        args.k.unwrap_or(1),
    )?;
    let params = match args.fill {
        Some(f) => params.with_fill(f)?,
        None => params,
    };
    let any = match args.p {
        Some(p) => AnyHorseshoe::Chained(build_chained(&params, p, args.c.unwrap_or(1.5), seed)?),
        None => AnyHorseshoe::Pseudo(build_pseudo_horseshoe(&params)?),
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("horseshoe.json"));
    any.save(&out)?;
    let stages = any.stages();
    let nk = stages[0].n_symbols();
    Ok(vec![format!(
        "N_k = {nk}, eps_k = {}, rects = {nk}, pieces = {}, stages = {}, wrote {}",
        params.eps_k(),
        stages[0].pieces().len(),
        stages.len(),
        out.display()
    )])
}

#[derive(Serialize)]
struct VerifyReport {
    input: String,
    passed: bool,
    failures: usize,
    violations: Vec<String>,
    pieces: Vec<PieceReport>,
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<Vec<String>> {
    let input = args
        .input
        .clone()
        .ok_or_else(|| invalid("verify needs a horseshoe file"))?;
    let any = AnyHorseshoe::load(&input)?;
    let res = args.resolution.unwrap_or(16);
    let cap = args.robustness_cap.unwrap_or(0.5);
    let mut pieces = Vec::new();
    let mut violations = Vec::new();
    for (s, stage) in any.stages().iter().enumerate() {
        violations.extend(stage.violations().into_iter().map(|v| format!("stage {s}: {v}")));
        pieces.extend(verify_stage(
            stage,
            s,
            (res > 0).then_some(res),
            (cap > 0.0).then_some(cap),
        )?);
    }
    let failures = pieces.iter().filter(|p| !p.passed()).count();
    let passed = failures == 0 && violations.is_empty();
    let report = VerifyReport {
        input: input.display().to_string(),
        passed,
        failures,
        violations,
        pieces,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let mut lines = Vec::new();
    match &args.out {
        Some(p) => {
            write_file(p, &json)?;
            lines.push(format!("wrote {}", p.display()));
        }
        None => lines.push(json),
    }
    let min_margin = report
        .pieces
        .iter()
        .map(|p| p.exact.margin)
        .fold(f64::INFINITY, f64::min);
    let summary = format!(
        "{} pieces checked, {} failing, {} structural violations, min exact margin {min_margin}",
        report.pieces.len(),
        failures,
        report.violations.len()
    );
    if !passed {
        let worst = report
            .pieces
            .iter()
            .find(|p| !p.passed())
            .map(|p| format!("; first failure: stage {} piece ({}, {})", p.stage, p.source, p.target))
            .unwrap_or_default();
        for l in &lines {
            println!("{l}");
        }
        return Err(CliError::Verification(format!("{summary}{worst}")));
    }
    lines.push(summary);
    Ok(lines)
}

fn cmd_sep(args: &CountArgs, seed: u64) -> CliResult<Vec<String>> {
    let r = resolve_system(&args.sys, seed)?;
    let ms = parse_index_list(args.m.as_deref().unwrap_or("1:5"))?;
    check_m_schedule(&ms)?;
    let mode = args.mode.unwrap_or(ModeName::Greedy);
    let mut rows: Vec<CountRow> = Vec::new();
    let mut seps = Vec::new();
    match mode {
        ModeName::Symbolic => {
            if let Some((_, _, nk, eps_k)) = r.horseshoe {
                if let Some(e) = &args.eps {
                    let eps = parse_eps_list(e)?;
                    if eps.iter().any(|&x| (x - eps_k).abs() > 1e-12 * eps_k) {
                        return Err(invalid(format!(
                            "symbolic horseshoe counts exist only at eps_k = {eps_k}"
                        )));
                    }
                }
                rows = symbolic_rows(nk, eps_k, &ms);
                seps.push(symbolic_sep_estimate(nk, eps_k, &ms)?);
            } else if r.name == SystemName::Doubling {
                let eps = parse_eps_list(args.eps.as_deref().ok_or_else(|| invalid("sep needs --eps"))?)?;
                for &e in &eps {
                    let block = ms
                        .iter()
                        .map(|&m| {
                            Ok(CountRow {
                                m,
                                eps: e,
                                s_lower: dyadic_count(r.handle.dim(), m, e)?,
                                n_upper: None,
                                mode: CountMode::Symbolic,
                            })
                        })
                        .collect::<CliResult<Vec<_>>>()?;
                    seps.push(sep_rate(&block)?);
                    rows.extend(block);
                }
            } else {
                return Err(invalid("symbolic mode needs a horseshoe or the doubling map"));
            }
        }
        ModeName::Greedy => {
            let eps = match (&args.eps, r.horseshoe) {
                (Some(e), _) => parse_eps_list(e)?,
                (None, Some((_, _, _, eps_k))) => vec![eps_k],
                (None, None) => return Err(invalid("sep needs --eps")),
            };
            let m_max = *ms.iter().max().expect("nonempty");
            let spec = match default_cloud(&r, args, m_max) {
                CloudSpec::Uniform { count, .. } => CloudSpec::Uniform { count, seed },
                other => other,
            };
            let cloud = spec.build(&r.handle, m_max)?;
            rows = greedy_rows(&cloud, &eps, &ms, args.spanning.unwrap_or(false))?;
            for &e in &eps {
                seps.push(sep_rate(
                    &rows.iter().filter(|x| x.eps == e).cloned().collect::<Vec<_>>(),
                )?);
            }
        }
    }
    let mut lines: Vec<String> = seps
        .iter()
        .map(|s| {
            format!(
                "eps={:<12} slope={:.6} band=[{:.6}, {:.6}] endpoint={:.6}{}",
                s.eps,
                s.slope,
                s.band.0,
                s.band.1,
                s.endpoint,
                if s.degenerate {
                    " (degenerate: all counts equal)"
                } else {
                    ""
                }
            )
        })
        .collect();
    let rep = ComplexityReport {
        rows,
        sep_estimates: seps,
        mdim: None,
    };
    lines.extend(emit_complexity("sep", seed, args, &rep)?);
    Ok(lines)
}

fn cmd_mdim(args: &CountArgs, seed: u64) -> CliResult<Vec<String>> {
    let mode = args.mode.unwrap_or(ModeName::Greedy);
    let ms = parse_index_list(args.m.as_deref().unwrap_or("1:3"))?;
    let rep = if mode == ModeName::Symbolic && is_family(&args.sys) {
        let ks = parse_index_list(args.k_schedule.as_deref().unwrap_or("1:16"))?;
        let n = args.sys.n.unwrap_or(2);
        symbolic_mdim_table(n, args.sys.delta.unwrap_or(DEFAULT_FAMILY_DELTA), &ks, &ms)?
    } else {
        let r = resolve_system(&args.sys, seed)?;
        let eps = parse_eps_list(
            args.eps
                .as_deref()
                .ok_or_else(|| invalid("mdim needs --eps (or --k-schedule for a horseshoe family)"))?,
        )?;
        check_eps_schedule(&eps)?;
        check_m_schedule(&ms)?;
        match mode {
            ModeName::Symbolic => {
                if r.name != SystemName::Doubling {
                    return Err(invalid(
                        "symbolic mdim needs a horseshoe family (--k-schedule) or the doubling map",
                    ));
                }
                let mut rows = Vec::new();
                let mut seps = Vec::new();
                for &e in &eps {
                    let block = ms
                        .iter()
                        .map(|&m| {
                            Ok(CountRow {
                                m,
                                eps: e,
                                s_lower: dyadic_count(r.handle.dim(), m, e)?,
                                n_upper: None,
                                mode: CountMode::Symbolic,
                            })
                        })
                        .collect::<CliResult<Vec<_>>>()?;
                    seps.push(sep_rate(&block)?);
                    rows.extend(block);
                }
                let scales: Vec<(f64, f64)> = seps.iter().map(|s| (s.eps, s.slope)).collect();
                let mdim = MdimEstimate::from_seps(r.handle.dim(), &scales)?;
                ComplexityReport {
                    rows,
                    sep_estimates: seps,
                    mdim: Some(mdim),
                }
            }
            ModeName::Greedy => {
                let m_max = *ms.iter().max().expect("nonempty");
                let spec = match default_cloud(&r, args, m_max) {
                    CloudSpec::Uniform { count, .. } => CloudSpec::Uniform { count, seed },
                    other => other,
                };
                mdim_estimate(&r.handle, &eps, &ms, &spec)?
            }
        }
    };
    let mut lines = mdim_lines(rep.mdim.as_ref().expect("mdim commands fill the table"));
    lines.extend(emit_complexity("mdim", seed, args, &rep)?);
    Ok(lines)
}

fn measure_spec(which: Option<MeasureName>, r: &Resolved, m_max: usize, seed: u64) -> MeasureSpec {
    let which = which.unwrap_or(if r.horseshoe.is_some() {
        MeasureName::Bernoulli
    } else {
        MeasureName::Lebesgue
    });
    match which {
        MeasureName::Lebesgue => MeasureSpec {
            kind: MeasureKind::LebesgueCube,
            seed,
        },
        MeasureName::Bernoulli => MeasureSpec::bernoulli(m_max, seed),
    }
}

fn cmd_katok(args: &KatokArgs, seed: u64) -> CliResult<Vec<String>> {
    let r = resolve_system(&args.sys, seed)?;
    let ms = parse_index_list(args.m.as_deref().unwrap_or("1:3"))?;
    check_m_schedule(&ms)?;
    let eps = match (&args.eps, r.horseshoe) {
        (Some(e), _) => parse_scalar(e)?,
        (None, Some((_, _, _, eps_k))) => eps_k / 2.0,
        (None, None) => return Err(invalid("katok needs --eps")),
    };
    let m_max = *ms.iter().max().expect("nonempty");
    let spec = measure_spec(args.measure, &r, m_max, seed);
    let delta = args.mass_delta.unwrap_or(0.1);
    let est = katok_entropy(&spec, &r.handle, eps, delta, &ms, args.count.unwrap_or(10_000))?;
    let prefix = args.out.clone().unwrap_or_else(|| PathBuf::from("katok"));
    let csv = with_ext(&prefix, ".csv");
    let json = with_ext(&prefix, ".json");
    write_file(&csv, &katok_csv(&est.rows, Some(&timestamp())))?;
    #[derive(Serialize)]
    struct Eff<'a> {
        system: &'a SystemArgs,
        #[serde(flatten)]
        args: &'a KatokArgs,
    }
    write_file(
        &json,
        &envelope(
            "katok",
            seed,
            &Eff {
                system: &args.sys,
                args,
            },
            &est,
        ),
    )?;
    let mut lines: Vec<String> = est
        .rows
        .iter()
        .map(|row| format!("m={} N_nu={} ln(N_nu)/m={:.6}", row.m, row.n_nu, row.h_estimate))
        .collect();
    lines.push(format!(
        "h_nu(eps={eps}, delta={delta}) slope={:.6}{}",
        est.slope,
        if est.degenerate {
            " (degenerate: all counts equal)"
        } else {
            ""
        }
    ));
    lines.push(format!("wrote {} and {}", csv.display(), json.display()));
    Ok(lines)
}

fn cmd_gap(args: &GapArgs, seed: u64) -> CliResult<Vec<String>> {
    let ms = parse_index_list(args.m.as_deref().unwrap_or("1:3"))?;
    check_m_schedule(&ms)?;
    let deltas = match &args.mass_deltas {
        Some(s) => s.split(',').map(parse_scalar).collect::<CliResult<Vec<_>>>()?,
        None => DEFAULT_MASS_DELTAS.to_vec(),
    };
    let count = args.count.unwrap_or(100_000);
    let table: GapTable = if is_family(&args.sys) && args.eps.is_none() {
        if args.measure == Some(MeasureName::Lebesgue) {
            return Err(invalid("horseshoe family tables use the Bernoulli itinerary measure"));
        }
        let ks = parse_index_list(args.k_schedule.as_deref().unwrap_or("1:8"))?;
        let mode = match args.gap_mode.unwrap_or(GapModeName::Auto) {
            GapModeName::Auto => GapMode::Auto,
            GapModeName::Sampled => GapMode::Sampled,
            GapModeName::CellOracle => GapMode::CellOracle,
        };
        let n = args.sys.n.unwrap_or(2);
        horseshoe_gap_table(
            n,
            args.sys.delta.unwrap_or(DEFAULT_FAMILY_DELTA),
            &ks,
            &deltas,
            &ms,
            mode,
            count,
            seed,
        )?
    } else {
        let r = resolve_system(&args.sys, seed)?;
        let eps = match (&args.eps, r.horseshoe) {
            (Some(e), _) => parse_eps_list(e)?,
            (None, Some((_, _, _, eps_k))) => vec![eps_k],
            (None, None) => return Err(invalid("gap needs --eps")),
        };
        let spec = measure_spec(args.measure, &r, *ms.iter().max().expect("nonempty"), seed);
        variational_gap(&r.handle, &spec, &eps, &deltas, &ms, count)?
    };
    let prefix = args.out.clone().unwrap_or_else(|| PathBuf::from("gap"));
    let csv = with_ext(&prefix, ".csv");
    let json = with_ext(&prefix, ".json");
    write_file(&csv, &table.to_csv(Some(&timestamp())))?;
    #[derive(Serialize)]
    struct Eff<'a> {
        system: &'a SystemArgs,
        #[serde(flatten)]
        args: &'a GapArgs,
    }
    write_file(
        &json,
        &envelope(
            "gap",
            seed,
            &Eff {
                system: &args.sys,
                args,
            },
            &table,
        ),
    )?;
    let mut lines: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            let k = r.k.map(|k| format!("k={k} ")).unwrap_or_default();
            format!(
                "{k}eps={:<12} h_ratio={:.6} sep_ratio={:.6} gap={:.6} best_delta={} ({:?})",
                r.eps, r.h_ratio, r.sep_ratio, r.gap, r.best_mass_delta, r.method
            )
        })
        .collect();
    lines.push(format!("wrote {} and {}", csv.display(), json.display()));
    Ok(lines)
}

/// Resolves config, seed and threads, runs the command and returns the
/// lines to print.
pub fn run(cli: Cli) -> CliResult<Vec<String>> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| invalid(format!("{SEED_ENV}='{v}' is not an integer")))?,
        ),
        Err(_) => None,
    };
    let seed = cli.seed.or(cfg.seed).or(env_seed).unwrap_or(0);
    if let Some(t) = cli.threads.or(cfg.threads) {
        if t == 0 {
            return Err(invalid("--threads must be >= 1"));
        }
        // a second call in the same process keeps the first pool, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Build(a) => cmd_build(&a.merged(cfg.build), seed),
        Command::Verify(a) => cmd_verify(&a.merged(cfg.verify)),
        Command::Sep(a) => {
            let mut a = a.merged(cfg.sep);
            a.sys = a.sys.merged(cfg.system);
            cmd_sep(&a, seed)
        }
        Command::Mdim(a) => {
            let mut a = a.merged(cfg.mdim);
            a.sys = a.sys.merged(cfg.system);
            cmd_mdim(&a, seed)
        }
        Command::Katok(a) => {
            let mut a = a.merged(cfg.katok);
            a.sys = a.sys.merged(cfg.system);
            cmd_katok(&a, seed)
        }
        Command::Gap(a) => {
            let mut a = a.merged(cfg.gap);
            a.sys = a.sys.merged(cfg.system);
            cmd_gap(&a, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_and_lists() {
        assert_eq!(parse_scalar("2^-6").unwrap(), 1.0 / 64.0);
        assert_eq!(parse_scalar("1/8").unwrap(), 0.125);
        assert_eq!(parse_eps_list("2^-4:2^-6").unwrap(), vec![0.0625, 0.03125, 0.015625]);
        assert_eq!(parse_eps_list("0.1, 2^-4").unwrap(), vec![0.1, 0.0625]);
        assert_eq!(parse_index_list("1:3,5").unwrap(), vec![1, 2, 3, 5]);
        assert!(matches!(
            parse_index_list("5:3"),
            Err(CliError::Lib(Error::Schedule(_)))
        ));
        assert!(parse_scalar("two").is_err());
    }

    #[test]
    fn dyadic_count_matches_lattice_oracle() {
        assert_eq!(dyadic_count(1, 4, 1.0 / 64.0).unwrap(), CountValue::Exact(1 << 9));
        assert_eq!(dyadic_count(2, 1, 0.25).unwrap(), CountValue::Exact(16));
        assert!(dyadic_count(1, 3, 0.5).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Lib(Error::InvalidParams("x".into())).exit_code(), 2);
        assert_eq!(CliError::Lib(Error::Schedule("x".into())).exit_code(), 4);
        assert_eq!(CliError::Verification("x".into()).exit_code(), 3);
        assert_eq!(CliError::Io("x".into()).exit_code(), 1);
    }

    #[test]
    fn flags_override_config() {
        let flags = BuildArgs {
            k: Some(2),
            ..Default::default()
        };
        let cfg: ConfigFile = toml::from_str("seed = 3\n[build]\nk = 1\nn = 3\n").unwrap();
        let merged = flags.merged(cfg.build);
        assert_eq!(merged.k, Some(2));
        assert_eq!(merged.n, Some(3));
        assert_eq!(cfg.seed, Some(3));
        assert!(toml::from_str::<ConfigFile>("[build]\nkk = 1\n").is_err());
    }
}
