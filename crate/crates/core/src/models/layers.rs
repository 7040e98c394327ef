use rand::Rng;

use crate::numcore::{Result, Tape, Tensor, Var};

/// Anything that owns trainable tensors in a fixed, named order.
pub trait Module {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// FNV-1a over the bit patterns of every parameter; changes iff any value changes.
    fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in self.named_params() {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Copies tape adjoints of `vars` into the matching parameters.
pub fn store_grads(tape: &Tape, params: Vec<&mut Tensor>, vars: &[Var]) {
    debug_assert_eq!(params.len(), vars.len());
    for (p, &v) in params.into_iter().zip(vars) {
        let g = tape.grad(v).map(<[f64]>::to_vec);
        p.set_grad(g).expect("tape adjoint matches parameter size");
    }
}

/// Uniform(−1/√fan_in, 1/√fan_in) weights, zero bias.
pub(crate) fn fan_in_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(vec![rows, cols], data).unwrap().with_grad()
}

/// Affine map `y = x Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weight: fan_in_uniform(rng, d_out, d_in),
            bias: Tensor::zeros(&[d_out]).with_grad(),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[d_out, d_in]).with_grad(),
            bias: Tensor::zeros(&[d_out]).with_grad(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn set_trainable(&mut self, on: bool) {
        self.weight.set_requires_grad(on);
        self.bias.set_requires_grad(on);
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundLinear {
        BoundLinear {
            weight: tape.leaf(&self.weight),
            bias: tape.leaf(&self.bias),
        }
    }
}

impl BoundLinear {
    /// `x: [B, in] → [B, out]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let wt = tape.transpose(self.weight)?;
        let y = tape.matmul(x, wt)?;
        tape.add_row(y, self.bias)
    }

    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}

impl Module for Linear {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}
