//! Distillation losses, their weighted combination and the per-step graph.

pub mod gradcheck;
mod losses;
mod step;

pub use losses::{
    cross_entropy, crd_loss, feature_loss, logit_loss, perturb_teacher_feature, total_loss, LossParts,
    LossReport, UNIT_NORM_TOL,
};
pub use step::{
    build_step, BoundTmkd, Component, StepBatch, StepOptions, StepOutput, TeacherLogits, Tmkd,
    DEFAULT_COMMON_DIM,
};

#[cfg(test)]
mod tests;

/// Temperatures and term weights of the distillation objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub tau_f: f64,
    pub tau_l: f64,
    pub tau_crd: f64,
    /// Weight of the logit term.
    pub alpha: f64,
    /// Weight of the contrastive term.
    pub beta: f64,
    /// Weight of the feature term.
    pub gamma_loss: f64,
    /// Scale of the Gaussian perturbation of the fused teacher feature.
    pub gamma_noise: f64,
    pub scale_logit_kd_by_tau_sq: bool,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            tau_f: 2.0,
            tau_l: 4.0,
            tau_crd: 2.0,
            alpha: 2.0,
            beta: 0.01,
            gamma_loss: 0.1,
            gamma_noise: 0.01,
            scale_logit_kd_by_tau_sq: false,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, tau) in [("tau_f", self.tau_f), ("tau_l", self.tau_l), ("tau_crd", self.tau_crd)] {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(format!("distill.{name} must be positive, got {tau}"));
            }
        }
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma_loss", self.gamma_loss),
            ("gamma_noise", self.gamma_noise),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("distill.{name} must be non-negative, got {w}"));
            }
        }
        Ok(())
    }
}
