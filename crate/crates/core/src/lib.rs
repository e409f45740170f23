//! Bayesian model assessment for mass-univariate general linear models.
//!
//! The crate computes cross-validated log model evidences (cvLME) for GLMs
//! with normal-gamma priors, splits them into accuracy and complexity,
//! combines them into log family evidences, runs voxel-wise random-effects
//! model selection with exceedance probabilities, and performs
//! cross-validated Bayesian model averaging.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below name the concrete instantiations.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bma;
pub mod cv_engine;
pub mod distributions;
pub mod error;
pub mod family;
pub mod glm_ng;
pub mod linalg;
pub mod rfx_bms;
pub mod scalar;
pub mod special;

pub use bma::{cv_bma, oos_bma, posterior_probabilities, BetaStack, PosteriorProbs};
pub use cv_engine::{cv_lme, cv_lme_models, oos_lme, split_single_session, CvResult, ModelCv, SessionLayout};
pub use distributions::{gamma_moments, kl_gamma, kl_mvn, NgParams};
pub use error::{EvidenceError, Result};
pub use family::{log_family_evidence, FamilyPartition};
pub use glm_ng::{
    accuracy, complexity, log_model_evidence, posterior_update, EvidenceParts, GlmSpec, Precision, SufficientStats,
    VoxelWisePosterior,
};
pub use rfx_bms::{
    ep_beta_closed_form, ep_integration, ep_sampling, estimate_rfx, exceedance_probabilities, DirichletPosterior,
    EpMethod, GroupLmeStack, RfxEstimate, RfxOptions,
};
pub use scalar::Scalar;

pub type GlmSpec64 = GlmSpec<f64>;
pub type NgParams64 = NgParams<f64>;
pub type VoxelWisePosterior64 = VoxelWisePosterior<f64>;
pub type CvResult64 = CvResult<f64>;
pub type FamilyPartition64 = FamilyPartition<f64>;
pub type GroupLmeStack64 = GroupLmeStack<f64>;
pub type DirichletPosterior64 = DirichletPosterior<f64>;
pub type PosteriorProbs64 = PosteriorProbs<f64>;
pub type BetaStack64 = BetaStack<f64>;

pub type GlmSpec32 = GlmSpec<f32>;
pub type NgParams32 = NgParams<f32>;
pub type VoxelWisePosterior32 = VoxelWisePosterior<f32>;
pub type CvResult32 = CvResult<f32>;
pub type FamilyPartition32 = FamilyPartition<f32>;
pub type GroupLmeStack32 = GroupLmeStack<f32>;
pub type DirichletPosterior32 = DirichletPosterior<f32>;
pub type PosteriorProbs32 = PosteriorProbs<f32>;
pub type BetaStack32 = BetaStack<f32>;
