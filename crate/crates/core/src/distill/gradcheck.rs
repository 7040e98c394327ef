//! Finite-difference verification of the full objective on small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::step::{build_step, StepBatch, StepOptions, Tmkd};
use super::DistillConfig;
use crate::models::{param_gradient_errors, Linear, MlpNet, Module, Role};
use crate::numcore::fd::STEP;
use crate::numcore::{Result, Tape, Tensor};

/// Pre-activations closer than this to the ReLU kink cause the instance to be redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

const D_IN: usize = 6;
const STUDENT_HIDDEN: usize = 5;
const TEACHER_FEAT: usize = 4;
const CLASSES: usize = 3;
const EMBED: usize = 4;
const COMMON: usize = 3;
const WEIGHTNET_HIDDEN: usize = 6;
const BATCH: usize = 4;

pub const TERMS: [&str; 4] = ["feat", "logit", "crd", "all"];

/// The loss weights under which `term` is checked in isolation.
pub fn term_config(term: &str) -> DistillConfig {
    let base = DistillConfig {
        gamma_noise: 0.0,
        ..DistillConfig::default()
    };
    let only = |alpha, beta, gamma_loss| DistillConfig {
        alpha,
        beta,
        gamma_loss,
        ..base.clone()
    };
    match term {
        "feat" => only(0.0, 0.0, 1.0),
        "logit" => only(1.0, 0.0, 0.0),
        "crd" => only(0.0, 1.0, 0.0),
        _ => base,
    }
}

/// One random instance of the full step graph.
pub struct Instance {
    pub model: Tmkd,
    pub teacher_head: Linear,
    pub batch: StepBatch,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let student = MlpNet::new(Role::Student, D_IN, &[STUDENT_HIDDEN], CLASSES, rng);
        let mut model = Tmkd::new(student, TEACHER_FEAT, EMBED, COMMON, WEIGHTNET_HIDDEN, rng);
        for p in model.params_mut() {
            if p.shape().len() == 1 {
                p.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            }
        }
        let mut teacher_head = Linear::new(TEACHER_FEAT, CLASSES, rng);
        teacher_head.set_trainable(false);
        let batch = StepBatch {
            x: uniform(rng, &[BATCH, D_IN], -1.0, 1.0),
            teacher_features: (0..3).map(|_| uniform(rng, &[BATCH, TEACHER_FEAT], 0.0, 2.0)).collect(),
            teacher_rgb_logits: uniform(rng, &[BATCH, CLASSES], -2.0, 2.0),
            fusion_text: [0, 1, 2].map(|_| uniform(rng, &[BATCH, EMBED], -1.0, 1.0)),
            crd_text: uniform(rng, &[BATCH, EMBED], -1.0, 1.0),
            labels: (0..BATCH).map(|_| rng.random_range(0..CLASSES)).collect(),
        };
        Self {
            model,
            teacher_head,
            batch,
        }
    }

    /// Smallest |pre-activation| over every ReLU in the graph.
    pub fn kink_distance(&self) -> f64 {
        let mut tape = Tape::new();
        let b = self.model.bind(&mut tape);
        let x = tape.leaf(&self.batch.x);
        let mut pres = Vec::new();
        let mut h = x;
        for l in &b.student.layers {
            let a = l.forward(&mut tape, h).unwrap();
            pres.push(a);
            h = tape.relu(a);
        }
        let t = [0, 1, 2].map(|i| tape.leaf(&self.batch.fusion_text[i]));
        let cat = tape.concat(&t).unwrap();
        pres.push(b.weightnet.hidden.forward(&mut tape, cat).unwrap());
        pres.iter()
            .flat_map(|&p| tape.value(p).to_vec())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermResult {
    pub term: &'static str,
    pub worst: f64,
    pub param: String,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub trials: usize,
    pub redraws: usize,
    pub terms: Vec<TermResult>,
}

impl GradcheckReport {
    pub fn worst(&self) -> &TermResult {
        self.terms
            .iter()
            .max_by(|a, b| a.worst.total_cmp(&b.worst))
            .expect("at least one term")
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.terms.iter().all(|t| t.worst < tol)
    }
}

/// Checks every loss term on `trials` instances drawn from `seed`.
pub fn run(seed: u64, trials: usize) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = StepOptions::default();
    let mut terms: Vec<TermResult> = TERMS
        .iter()
        .map(|&term| TermResult {
            term,
            worst: 0.0,
            param: String::new(),
            trial: 0,
        })
        .collect();
    let mut redraws = 0;
    for trial in 0..trials {
        let inst = loop {
            let inst = Instance::random(&mut rng);
            if inst.kink_distance() >= KINK_MARGIN {
                break inst;
            }
            redraws += 1;
        };
        for res in terms.iter_mut() {
            let cfg = term_config(res.term);
            let errs = param_gradient_errors(
                &inst.model,
                |m, tape| {
                    let mut noise = ChaCha8Rng::seed_from_u64(0);
                    let out = build_step(tape, m, &inst.teacher_head, &inst.batch, &cfg, &opts, &mut noise)?;
                    Ok((out.loss, out.bound.vars()))
                },
                STEP,
            )?;
            for (name, e) in errs {
                if e > res.worst || res.param.is_empty() {
                    res.worst = e;
                    res.param = name;
                    res.trial = trial;
                }
            }
        }
    }
    Ok(GradcheckReport {
        trials,
        redraws,
        terms,
    })
}
