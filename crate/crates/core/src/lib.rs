//! Survival analysis for extreme lifetimes under truncation and censoring.

pub mod data;
pub mod error;
pub mod families;
pub mod fit;
pub mod gof;
pub mod inference;
pub mod likelihood;
pub mod math;
pub mod nesting;
pub mod npmle;
pub mod optim;
pub mod sampling;
pub mod svg;

pub use data::{
    japanese_female, load_csv, load_csv_str, to_exceedances, Dataset, Event, ExceedanceConfig,
    LifetimeRecord, Schema,
};
pub use error::{Error, Result};
pub use families::{gppiece_params, Family, ParamSpec, ParamVector};
pub use fit::{fit, fit_with, standard_errors, FitOptions, FitResult};
pub use likelihood::{deviance, loglik, LoglikOptions};
pub use inference::{
    anova, chisq_gof, hazard_ci, lrt_nested, nc_score_test, profile_endpoint, test_strata, tstab,
    NestedTestResult, ProfileCurve, ThresholdDiag,
};
pub use npmle::{npmle, StepCDF};
pub use sampling::{bootstrap_lrt, sample_elife, SamplingScheme};
pub use gof::{plotting_positions, PlotData, PlotKind};
pub use svg::emit_svg;
