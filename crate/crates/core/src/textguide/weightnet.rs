use rand::Rng;

use crate::models::{BoundLinear, Linear, Module};
use crate::numcore::{Result, Tape, TensorError, Var};
use crate::viewgen::ViewKind;

pub const DEFAULT_HIDDEN: usize = 64;

/// Normalized view weights. Inactive views carry weight 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub w_rgb: f64,
    pub w_edge: f64,
    pub w_hf: f64,
}

impl FusionWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.w_rgb, self.w_edge, self.w_hf]
    }

    pub fn get(&self, view: ViewKind) -> f64 {
        match view {
            ViewKind::Rgb => self.w_rgb,
            ViewKind::Edge => self.w_edge,
            ViewKind::Hf => self.w_hf,
        }
    }

    /// Spreads `values` (one per active view, in `active` order) over all three slots.
    pub fn from_active(active: &[ViewKind], values: &[f64]) -> Self {
        let mut w = [0.0; 3];
        for (view, &v) in active.iter().zip(values) {
            w[*view as usize] = v;
        }
        Self {
            w_rgb: w[0],
            w_edge: w[1],
            w_hf: w[2],
        }
    }
}

/// `w = softmax(W2 · relu(W1 [t_rgb; t_edge; t_hf] + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightNet {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundWeightNet {
    pub hidden: BoundLinear,
    pub out: BoundLinear,
}

impl WeightNet {
    pub fn new<R: Rng>(embed_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(3 * embed_dim, hidden, rng),
            out: Linear::new(hidden, 3, rng),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.hidden.in_dim() / 3
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundWeightNet {
        BoundWeightNet {
            hidden: self.hidden.bind(tape),
            out: self.out.bind(tape),
        }
    }

    /// Evaluates the weights for one embedding triple off the training tape.
    pub fn weights<T: Copy + Into<f64>>(
        &self,
        rgb: &[T],
        edge: &[T],
        hf: &[T],
        active: &[ViewKind],
    ) -> Result<FusionWeights> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let mut row = |t: &[T]| tape.constant(vec![1, t.len()], t.iter().map(|&v| v.into()).collect());
        let ts = [row(rgb)?, row(edge)?, row(hf)?];
        let w = bound.forward(&mut tape, ts, active)?;
        Ok(FusionWeights::from_active(active, tape.value(w)))
    }
}

impl BoundWeightNet {
    /// `ts`: the (rgb, edge, hf) embeddings, each `[B, d]`. Returns `[B, active.len()]`
    /// with a softmax taken over the active views only.
    pub fn forward(&self, tape: &mut Tape, ts: [Var; 3], active: &[ViewKind]) -> Result<Var> {
        if active.is_empty() || active.len() > 3 {
            return Err(TensorError::Contract {
                op: "weightnet",
                detail: format!("{} active views", active.len()),
            });
        }
        let d = tape.shape(ts[0]).to_vec();
        for &t in &ts[1..] {
            if tape.shape(t) != d.as_slice() {
                return Err(TensorError::Shape {
                    op: "weightnet",
                    lhs: d,
                    rhs: tape.shape(t).to_vec(),
                });
            }
        }
        let x = tape.concat(&ts)?;
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h);
        let mut logits = self.out.forward(tape, h)?;
        if active != ViewKind::ALL {
            let cols: Vec<usize> = active.iter().map(|&v| v as usize).collect();
            logits = tape.select_cols(logits, &cols)?;
        }
        tape.softmax(logits, 1)
    }

    pub fn vars(&self) -> Vec<Var> {
        [self.hidden.vars(), self.out.vars()].concat()
    }
}

impl Module for WeightNet {
    fn named_params(&self) -> Vec<(String, &crate::numcore::Tensor)> {
        vec![
            ("w1".into(), &self.hidden.weight),
            ("b1".into(), &self.hidden.bias),
            ("w2".into(), &self.out.weight),
            ("b2".into(), &self.out.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut crate::numcore::Tensor> {
        let mut out = self.hidden.params_mut();
        out.extend(self.out.params_mut());
        out
    }
}

/// `Σ_v w[:, v] · F_v` for `w: [B, k]` and `k` features of shape `[B, d]`.
pub fn fuse_features(tape: &mut Tape, w: Var, features: &[Var]) -> Result<Var> {
    let ws = tape.shape(w).to_vec();
    let first = features.first().ok_or(TensorError::Contract {
        op: "fuse_features",
        detail: "no features".into(),
    })?;
    let fs = tape.shape(*first).to_vec();
    if ws.len() != 2 || ws[1] != features.len() || fs.len() != 2 || fs[0] != ws[0] {
        return Err(TensorError::Shape {
            op: "fuse_features",
            lhs: ws,
            rhs: fs,
        });
    }
    let rows = ws[0];
    let mut acc: Option<Var> = None;
    for (v, &f) in features.iter().enumerate() {
        if tape.shape(f) != fs.as_slice() {
            return Err(TensorError::Shape {
                op: "fuse_features",
                lhs: fs,
                rhs: tape.shape(f).to_vec(),
            });
        }
        let col = tape.gather(w, &vec![v; rows])?;
        let term = tape.mul_rows(f, col)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(acc.unwrap())
}
