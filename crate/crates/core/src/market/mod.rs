//! Finite markets: scenario trees, measures, martingale polytopes and
//! sample-based diagnostics.

pub mod levy;
pub mod localize;
pub mod measure;
pub mod polytope;
pub mod sample;
pub mod tree;

pub use levy::{levy_moment_check, LevyFamily, LevyVerdict, MomentCriterion};
pub use localize::{sigma_localize, LocalizeOptions, Localization, PredictableSet};
pub use measure::{
    check_simple_martingale, entropy, generalized_entropy, is_martingale_measure, kl_divergence, MartingaleCheck,
    MeasureQ, NodeResidual,
};
pub use polytope::{martingale_polytope, MartingaleConstraint, MartingalePolytope, PolytopeOptions};
pub use sample::{CompoundPoisson, PathSample};
pub use tree::{wealth_process, MarketSpec, NodeSpec, RandomTreeConfig, ScenarioTree, Strategy, WealthProcess};
