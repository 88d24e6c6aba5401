//! Workbench for involutivity analysis of Lie pseudo-group determining
//! equations, reduction to sections, moving-frame normalization and
//! normal-form power series, cross-validated by chain ODE integration.

pub mod catalog;
pub mod chains;
pub mod expr;
pub mod jetcalc;
pub mod linalg;
pub mod multiindex;
pub mod normalform;
pub mod reduction;
pub mod scalar;
pub mod series;
pub mod system;

pub use expr::{Coord, Expr, Space};
pub use jetcalc::{JetContext, JetPoint, SectionJet};
pub use multiindex::{ClassTermOrder, IndexedCoordinate, MultiIndex};
pub use scalar::{Rat, Scalar};
pub use series::{Series, SeriesF, TruncatedSeries};
pub use system::{DifferentialSystem, InvolutivityVerdict, SymbolReport, SystemKind};
