//! Optimal and robust designs for quantile regression under variance and
//! response misspecification.

pub mod analytic;
pub mod basis;
pub mod design;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod moments;
pub mod optim;
pub mod qreg;
pub mod search;
pub mod sim;
pub mod variance;

pub use analytic::{minbias_design, solve_quadratic_continuous, solve_straight_line_discrete, uniform_design};
pub use basis::{Basis, CubicBSpline};
pub use design::{DesignMeasure, DesignSpace, SpaceKind};
pub use error::{DesignError, Result};
pub use loss::{loss_fixed_sigma, loss_sigma0_class, worst_r_loss, LossConfig, LossReport};
pub use moments::{MomentMatrices, RegressorTable};
pub use qreg::{check_loss, fit_quantile, predict, QuantileFit};
pub use search::{exchange_compound, ga_minimax, saturated_design, CompoundDesign, GAConfig, GaResult};
pub use sim::{run_scenario, sample_delta0, MisspecFunction, NamedDesign, ScenarioConfig, ScenarioResult};
pub use variance::{SigmaShape, VarianceFunction, VarianceSpec};
