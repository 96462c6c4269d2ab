//! Machine-learning sensitivity analysis for a binary treatment and a binary
//! outcome under unmeasured confounding.
//!
//! The pipeline has two decoupled halves. [`reduced_form`] fits the
//! observable probabilities `Pr(G=1|x)`, `Pr(B=1|G=1,x)` and `Pr(B=1|G=0,x)`
//! with probit BART, the outcome pair through the monotone sampler in
//! [`monotone`]. [`projection`] then maps those probabilities, for any
//! analyst-chosen confounder density from [`densities`], onto structural
//! probit functions and the causal risk ratio / risk difference. Because the
//! fit is reused across densities, a sensitivity sweep never refits.

pub mod bart;
pub mod data;
pub mod densities;
pub mod diagnostics;
pub mod error;
pub mod evalue;
pub mod monotone;
pub mod normal;
pub mod projection;
pub mod reduced_form;
pub mod rng;
pub mod simulation;
pub mod subgroup;

pub use bart::{BartConfig, ProbitFitDraws};
pub use data::ObservationSet;
pub use densities::{ConfounderDensity, ConfounderModel, MixtureComponent, PairMode, QuadratureRule};
pub use error::{Error, Result};
pub use projection::{ProjectionMode, SensitivitySpec, StructuralSolution};
pub use reduced_form::ReducedFormDraws;
