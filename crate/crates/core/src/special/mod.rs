//! Special functions and quadrature used by the evidence and exceedance
//! probability computations.

mod gamma;
mod incomplete;
mod logsumexp;
mod quadrature;

pub use gamma::{digamma, log_gamma};
pub use incomplete::{reg_incomplete_beta, reg_lower_incomplete_gamma, reg_upper_incomplete_gamma};
pub use logsumexp::log_sum_exp;
pub use quadrature::{
    gamma_quadrature, gamma_quadrature_with_panels, gamma_upper_quantile, gauss_legendre,
    QuadratureRule, INITIAL_PANELS, MAX_PANELS, PANEL_ORDER,
};

pub(crate) use gamma::{digamma_unchecked, log_gamma_unchecked};
pub(crate) use logsumexp::log_sum_exp_iter;
