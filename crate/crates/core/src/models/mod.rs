//! Generative models: the synthetic multiple-index models M1/M2, the GP-link
//! model M3, the `ψ⁰` construction, and the adversarial lower-bound
//! distribution with its analytic constants.
//!
//! Every sampler takes an explicit [`SimRng`]; there is no global state.

pub mod gp;
pub mod lower_bound;
mod rng;
pub mod synthetic;

pub use gp::{sample_gp_model, sample_gp_values, GpLinkSpec, DEFAULT_GP_CAP};
pub use lower_bound::{
    chi2_median, exact_kl_xz, gaussian_kl_zero_mean, gsnr_formula, joint_xz_covariance, kl_closed_form,
    lambda_0d, max_abs_in_ball, psi, psi0, sample_lower_bound, theta_to_rho, LowerBoundModel, DEFAULT_SIGMA,
};
pub use rng::{label_tag, stream_id, SimRng};
pub use synthetic::{
    sample_joint_basic, sample_m1, sample_m2, sample_sparse_sin, standard_normal_matrix, LabeledSample, NOISE_SD, SYNTHETIC_D,
    SYNTHETIC_P,
};
