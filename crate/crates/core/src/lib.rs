//! Causal inference for spatio-temporal point-pattern treatments and
//! outcomes under stochastic interventions.

pub mod estimate;
pub mod geom;
pub mod interventions;
pub mod numeric;
pub mod pointprocess;
pub mod propensity;
pub mod rng;
pub mod simstudy;
pub mod smooth;
pub mod surfaces;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use estimate::{
    confidence_interval, effect_contrast, estimate, estimate_from_outcomes, EstimateError, EstimateResult,
    EstimatorKind, EstimatorSettings, OutcomeMode, WeightSeries,
};
pub use geom::{Point, PointPattern, Rect, Region, Segment, SegmentSet, Window};
pub use interventions::{Intervention, InterventionSequence};
pub use pointprocess::{Intensity, LogDensity, PoissonProcess};
pub use propensity::{balance_check, fit, FeatureSpec, HistoryFrame, PropensityDesign, PropensityModel};
pub use rng::SeedTree;
pub use simstudy::{generate_series, DgpSpec, SimulatedSeries};
pub use smooth::KernelSpec;
pub use surfaces::{LogLinearIntensity, QuadratureGrid, Surface};
