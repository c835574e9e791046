//! Parameters, states, and the closed-form pieces of the diffusion.

mod dynamics;
mod params;
mod state;

pub use dynamics::{
    diffusion_d, drift_mu, generator_on_monomial, grad_v, interaction_g, potential_v, tilde_h,
};
pub(crate) use dynamics::{potential_raw, total_drift_into};
pub use params::{
    single_locus_params, two_locus_params, Layout, LocusMutation, ModelParams, MutationSpec,
};
pub use state::{monomial, DualState, FrequencyState, SIMPLEX_TOL};
