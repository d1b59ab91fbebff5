//! Generating-function numerics for critical Galton–Watson branching
//! processes whose offspring law has infinite variance.

pub mod asymptotics;
pub mod campaign;
pub mod criteria;
pub mod error;
pub mod invariant;
pub mod iteration;
pub mod montecarlo;
pub mod numerics;
pub mod offspring;
pub mod report;
pub mod serde_float;
pub mod series;

pub use asymptotics::{AsymRecord, AsymReport, AsymSummary};
pub use campaign::{Campaign, CampaignSummary, Check};
pub use error::{GwError, Result};
pub use invariant::{InvariantMeasure, InvariantReport};
pub use iteration::{IterationTrace, SeriesIterate};
pub use montecarlo::{SimConfig, SimResult};
pub use offspring::{FamilySpec, OffspringFamily, SlowVariation, ValidationReport};
pub use series::{Interval, TruncSeries};
