//! Explicit volume-preserving pseudo-horseshoes.
//!
//! A [`PseudoHorseshoe`] is a lattice of `N_k = (2k)^n` rectangles in the
//! chart cube plus `N_k²` diagonal affine pieces with determinant one, each
//! sending a horizontal slab of `R_i` across `R_j`. The map is defined only on
//! the slabs; everything else escapes. A [`ChainedHorseshoe`] links `p` such
//! stages through diagonal charts.

mod chained;
mod document;
mod grid;
mod itinerary;
mod pieces;

pub use chained::{build_chained, ChainedHorseshoe, Chart};
pub use document::{AnyHorseshoe, HorseshoeBody, HorseshoeDocument, StageDoc, DOCUMENT_VERSION};
pub use grid::{build_rect_grid, HorseshoeParams, RectGrid, DEFAULT_MAX_PIECES};
pub use itinerary::{
    certify_chained, certify_pseudo, certify_separation, chart_orbit, itinerary_cell, itinerary_cell_exact,
    realized_itinerary, symbolic_count, symbolic_log_count, words, ItineraryMap, ItineraryWord, SeparationCertificate,
    MAX_ENUMERATED_WORDS,
};
pub use pieces::{build_pseudo_horseshoe, packing, MarkovPiece, Packing, PseudoHorseshoe};
