//! Versioned JSON documents for built horseshoes. All geometry is stored as
//! exact `"p/q"` rationals.
//!
//! Loading checks structure only. Geometric invariants are left to
//! [`PseudoHorseshoe::violations`] and the Markov verifier, so a corrupted
//! file can still be loaded and diagnosed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affine::DiagAffine;
use crate::error::{Error, Result};
use crate::geometry::Rectangle;

use super::chained::{ChainedHorseshoe, Chart};
use super::grid::{HorseshoeParams, RectGrid};
use super::pieces::{MarkovPiece, PseudoHorseshoe};

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageDoc {
    pub grid: RectGrid,
    pub pieces: Vec<MarkovPiece>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HorseshoeBody {
    Pseudo {
        params: HorseshoeParams,
        #[serde(flatten)]
        stage: StageDoc,
    },
    Chained {
        params: HorseshoeParams,
        c_bound: f64,
        seed: u64,
        ambient: Rectangle,
        charts: Vec<DiagAffine>,
        stages: Vec<StageDoc>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorseshoeDocument {
    pub version: u32,
    #[serde(flatten)]
    pub body: HorseshoeBody,
}

/// A loaded horseshoe of either kind.
#[derive(Debug, Clone)]
pub enum AnyHorseshoe {
    Pseudo(PseudoHorseshoe),
    Chained(ChainedHorseshoe),
}

impl AnyHorseshoe {
    pub fn params(&self) -> &HorseshoeParams {
        match self {
            AnyHorseshoe::Pseudo(h) => h.params(),
            AnyHorseshoe::Chained(h) => h.params(),
        }
    }

    pub fn stages(&self) -> &[PseudoHorseshoe] {
        match self {
            AnyHorseshoe::Pseudo(h) => std::slice::from_ref(h),
            AnyHorseshoe::Chained(h) => h.stages(),
        }
    }

    pub fn stages_mut(&mut self) -> &mut [PseudoHorseshoe] {
        match self {
            AnyHorseshoe::Pseudo(h) => std::slice::from_mut(h),
            AnyHorseshoe::Chained(h) => h.stages_mut(),
        }
    }

    pub fn to_document(&self) -> HorseshoeDocument {
        let stage_doc = |s: &PseudoHorseshoe| StageDoc {
            grid: s.grid().clone(),
            pieces: s.pieces().to_vec(),
        };
        let body = match self {
            AnyHorseshoe::Pseudo(h) => HorseshoeBody::Pseudo {
                params: h.params().clone(),
                stage: stage_doc(h),
            },
            AnyHorseshoe::Chained(h) => HorseshoeBody::Chained {
                params: h.params().clone(),
                c_bound: h.c_bound(),
                seed: h.seed(),
                ambient: h.ambient().clone(),
                charts: h.charts().iter().map(|c| c.map().clone()).collect(),
                stages: h.stages().iter().map(stage_doc).collect(),
            },
        };
        HorseshoeDocument {
            version: DOCUMENT_VERSION,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HorseshoeDocument =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("horseshoe document: {e}")))?;
        AnyHorseshoe::from_document(doc)
    }

    pub fn from_document(doc: HorseshoeDocument) -> Result<Self> {
        if doc.version != DOCUMENT_VERSION {
            return Err(Error::Format(format!(
                "unsupported document version {} (expected {DOCUMENT_VERSION})",
                doc.version
            )));
        }
        match doc.body {
            HorseshoeBody::Pseudo { params, stage } => Ok(AnyHorseshoe::Pseudo(load_stage(&params, stage)?)),
            HorseshoeBody::Chained {
                params,
                c_bound,
                seed,
                ambient,
                charts,
                stages,
            } => {
                let charts = charts.into_iter().map(Chart::new).collect::<Result<Vec<_>>>()?;
                let stages = stages
                    .into_iter()
                    .map(|s| load_stage(&params, s))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnyHorseshoe::Chained(ChainedHorseshoe::from_parts(
                    params, c_bound, seed, charts, stages, ambient,
                )?))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        AnyHorseshoe::from_json(&text)
    }
}

fn load_stage(params: &HorseshoeParams, stage: StageDoc) -> Result<PseudoHorseshoe> {
    let StageDoc { mut grid, mut pieces } = stage;
    if grid.rects_exact().iter().any(|r| r.dim() != params.n) {
        return Err(Error::Format("grid rectangles do not match n".into()));
    }
    grid.refresh_cache()?;
    for p in &mut pieces {
        p.refresh()?;
    }
    PseudoHorseshoe::from_parts(params.clone(), grid, pieces)
}
