use rand::Rng;

use super::layers::{BoundLinear, Linear, Module};
use crate::numcore::{Result, Tape, Tensor, TensorError, Var};
use crate::viewgen::ViewKind;

pub const TEACHER_HIDDEN: [usize; 2] = [256, 128];
pub const STUDENT_HIDDEN: [usize; 1] = [64];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Teacher,
    Student,
}

/// ReLU MLP whose last hidden activation is the feature fed to a linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    pub role: Role,
    pub layers: Vec<Linear>,
    pub classifier: Linear,
}

#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub layers: Vec<BoundLinear>,
    pub classifier: BoundLinear,
}

impl MlpNet {
    pub fn new<R: Rng>(role: Role, d_in: usize, hidden: &[usize], classes: usize, rng: &mut R) -> Self {
        assert!(!hidden.is_empty(), "an MLP needs at least one hidden layer");
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = d_in;
        for &h in hidden {
            layers.push(Linear::new(prev, h, rng));
            prev = h;
        }
        Self {
            role,
            layers,
            classifier: Linear::new(prev, classes, rng),
        }
    }

    pub fn teacher<R: Rng>(d_in: usize, classes: usize, rng: &mut R) -> Self {
        Self::new(Role::Teacher, d_in, &TEACHER_HIDDEN, classes, rng)
    }

    pub fn student<R: Rng>(d_in: usize, classes: usize, rng: &mut R) -> Self {
        Self::new(Role::Student, d_in, &STUDENT_HIDDEN, classes, rng)
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn feat_dim(&self) -> usize {
        self.classifier.in_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.out_dim()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Linear::out_dim).collect()
    }

    /// Frozen parameters enter the tape as constants and never receive gradients.
    pub fn set_frozen(&mut self, frozen: bool) {
        for l in &mut self.layers {
            l.set_trainable(!frozen);
        }
        self.classifier.set_trainable(!frozen);
    }

    pub fn is_frozen(&self) -> bool {
        self.named_params().iter().all(|(_, t)| !t.requires_grad())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            classifier: self.classifier.bind(tape),
        }
    }

    /// Off-tape forward of a batch `x: [B, d_in]`, returning `(features, logits)`.
    pub fn predict(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let net = self.bind(&mut tape);
        let xv = tape.leaf(x);
        let (f, z) = net.forward(&mut tape, xv)?;
        Ok((tape.to_tensor(f), tape.to_tensor(z)))
    }
}

impl BoundMlp {
    pub fn features(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for l in &self.layers {
            let a = l.forward(tape, h)?;
            h = tape.relu(a);
        }
        Ok(h)
    }

    /// Applies only the final classifier layer.
    pub fn logits_from_features(&self, tape: &mut Tape, f: Var) -> Result<Var> {
        self.classifier.forward(tape, f)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let f = self.features(tape, x)?;
        let z = self.logits_from_features(tape, f)?;
        Ok((f, z))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .chain(std::iter::once(&self.classifier))
            .flat_map(BoundLinear::vars)
            .collect()
    }
}

impl Module for MlpNet {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.weight"), &l.weight));
            out.push((format!("layers.{i}.bias"), &l.bias));
        }
        out.push(("classifier.weight".into(), &self.classifier.weight));
        out.push(("classifier.bias".into(), &self.classifier.bias));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        out.extend(self.classifier.params_mut());
        out
    }
}

/// One batch of flattened views, `[B, d_in]` each; absent views are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewBatch {
    pub rgb: Option<Tensor>,
    pub edge: Option<Tensor>,
    pub hf: Option<Tensor>,
}

impl MultiViewBatch {
    pub fn get(&self, view: ViewKind) -> Option<&Tensor> {
        match view {
            ViewKind::Rgb => self.rgb.as_ref(),
            ViewKind::Edge => self.edge.as_ref(),
            ViewKind::Hf => self.hf.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ViewOutput {
    pub view: ViewKind,
    pub feature: Var,
    pub logits: Var,
}

/// Runs the same teacher parameters over each requested view independently.
pub fn teacher_multiview_forward(
    teacher: &BoundMlp,
    tape: &mut Tape,
    batch: &MultiViewBatch,
    views: &[ViewKind],
) -> Result<Vec<ViewOutput>> {
    views
        .iter()
        .map(|&view| {
            let x = batch.get(view).ok_or_else(|| TensorError::Contract {
                op: "teacher_multiview_forward",
                detail: format!("missing {view} view"),
            })?;
            let xv = tape.leaf(x);
            let (feature, logits) = teacher.forward(tape, xv)?;
            Ok(ViewOutput {
                view,
                feature,
                logits,
            })
        })
        .collect()
}

/// `z_t = classifier(F_fused)` through the teacher's head only.
pub fn teacher_logits_from_fused(teacher: &BoundMlp, tape: &mut Tape, fused: Var) -> Result<Var> {
    teacher.logits_from_features(tape, fused)
}
