use rand::Rng;
use rand_distr::StandardNormal;

use super::DistillConfig;
use crate::numcore::{Result, Tape, TensorError, Var};

fn check_same(op: &'static str, tape: &Tape, a: Var, b: Var) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(TensorError::Shape {
            op,
            lhs: tape.shape(a).to_vec(),
            rhs: tape.shape(b).to_vec(),
        });
    }
    Ok(())
}

fn check_tau(op: &'static str, tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(TensorError::Contract {
            op,
            detail: format!("temperature {tau} must be positive"),
        });
    }
    Ok(())
}

/// `KL(softmax(teacher/τ) ‖ softmax(student/τ))`, averaged over rows.
fn tempered_kl(tape: &mut Tape, teacher: Var, student: Var, tau: f64) -> Result<Var> {
    let t = tape.scale(teacher, 1.0 / tau);
    let s = tape.scale(student, 1.0 / tau);
    let axis = tape.shape(t).len() - 1;
    let p = tape.softmax(t, axis)?;
    let logq = tape.log_softmax(s, axis)?;
    tape.kl_div(p, logq)
}

/// `F̃ = F + γ·ε`, `ε ~ N(0, 1)` drawn from `rng` and entered as a constant.
pub fn perturb_teacher_feature<R: Rng>(tape: &mut Tape, fused: Var, gamma_noise: f64, rng: &mut R) -> Result<Var> {
    if !(gamma_noise >= 0.0) {
        return Err(TensorError::Contract {
            op: "perturb_teacher_feature",
            detail: format!("gamma_noise {gamma_noise} must be non-negative"),
        });
    }
    if gamma_noise == 0.0 {
        return Ok(fused);
    }
    let shape = tape.shape(fused).to_vec();
    let n = tape.value(fused).len();
    let noise = (0..n)
        .map(|_| gamma_noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let eps = tape.constant(shape, noise)?;
    tape.add(fused, eps)
}

/// `τ_f² · KL(softmax(F̃/τ_f) ‖ softmax(F_s/τ_f))`.
pub fn feature_loss(tape: &mut Tape, student_proj: Var, teacher: Var, tau_f: f64) -> Result<Var> {
    check_tau("feature_loss", tau_f)?;
    check_same("feature_loss", tape, student_proj, teacher)?;
    let kl = tempered_kl(tape, teacher, student_proj, tau_f)?;
    Ok(tape.scale(kl, tau_f * tau_f))
}

/// `KL(softmax(z_t/τ_l) ‖ softmax(z_s/τ_l))`, optionally multiplied by `τ_l²`.
pub fn logit_loss(tape: &mut Tape, z_t: Var, z_s: Var, tau_l: f64, scale_by_tau_sq: bool) -> Result<Var> {
    check_tau("logit_loss", tau_l)?;
    check_same("logit_loss", tape, z_t, z_s)?;
    let kl = tempered_kl(tape, z_t, z_s, tau_l)?;
    Ok(if scale_by_tau_sq {
        tape.scale(kl, tau_l * tau_l)
    } else {
        kl
    })
}

/// Tolerance on row norms accepted by [`crd_loss`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Symmetric InfoNCE over `s_ij = z_s^i · z_text^j / τ` with in-batch negatives.
pub fn crd_loss(tape: &mut Tape, z_s: Var, z_text: Var, tau: f64) -> Result<Var> {
    check_tau("crd_loss", tau)?;
    check_same("crd_loss", tape, z_s, z_text)?;
    let shape = tape.shape(z_s).to_vec();
    if shape.len() != 2 || shape[0] < 2 {
        return Err(TensorError::Contract {
            op: "crd_loss",
            detail: format!("need a batch of at least 2 rows, got shape {shape:?}"),
        });
    }
    for (name, v) in [("z_s", z_s), ("z_text", z_text)] {
        for (i, row) in tape.value(v).chunks(shape[1]).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(TensorError::Contract {
                    op: "crd_loss",
                    detail: format!("{name} row {i} has norm {norm}, expected 1"),
                });
            }
        }
    }
    let b = shape[0];
    let zt_t = tape.transpose(z_text)?;
    let sim = tape.matmul(z_s, zt_t)?;
    let sim = tape.scale(sim, 1.0 / tau);
    let diag: Vec<usize> = (0..b).collect();
    let rows = tape.log_softmax(sim, 1)?;
    let cols = tape.log_softmax(sim, 0)?;
    let rd = tape.gather(rows, &diag)?;
    let cd = tape.gather(cols, &diag)?;
    let both = tape.add(rd, cd)?;
    let total = tape.sum(both);
    Ok(tape.scale(total, -1.0 / b as f64))
}

/// The individual terms of one step, each a scalar on the tape when computed.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub feat: Option<Var>,
    pub logit: Option<Var>,
    pub crd: Option<Var>,
    pub ce: Option<Var>,
}

/// Term values of one step. Terms that were not computed report 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub l_feat: f64,
    pub l_logit: f64,
    pub l_crd: f64,
    pub l_ce: f64,
    pub l_all: f64,
}

/// `L = α·L_logit + β·L_crd + γ·L_feat (+ L_ce)`; terms with zero weight stay off the sum.
pub fn total_loss(tape: &mut Tape, cfg: &DistillConfig, parts: &LossParts) -> Result<(Var, LossReport)> {
    let value = |tape: &Tape, v: Option<Var>| v.map(|v| tape.scalar(v)).unwrap_or(0.0);
    let mut acc: Option<Var> = None;
    for (weight, term) in [
        (Some(cfg.alpha), parts.logit),
        (Some(cfg.beta), parts.crd),
        (Some(cfg.gamma_loss), parts.feat),
        (None, parts.ce),
    ] {
        let Some(term) = term else { continue };
        let scaled = match weight {
            Some(w) if w == 0.0 => continue,
            Some(w) => tape.scale(term, w),
            None => term,
        };
        acc = Some(match acc {
            None => scaled,
            Some(a) => tape.add(a, scaled)?,
        });
    }
    let total = match acc {
        Some(v) => v,
        None => tape.constant(vec![1], vec![0.0])?,
    };
    let report = LossReport {
        l_feat: value(tape, parts.feat),
        l_logit: value(tape, parts.logit),
        l_crd: value(tape, parts.crd),
        l_ce: value(tape, parts.ce),
        l_all: tape.scalar(total),
    };
    Ok((total, report))
}

/// Mean cross-entropy of `logits: [B, C]` against `labels`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let lp = tape.log_softmax(logits, 1)?;
    let picked = tape.gather(lp, labels)?;
    let m = tape.mean(picked);
    Ok(tape.scale(m, -1.0))
}
