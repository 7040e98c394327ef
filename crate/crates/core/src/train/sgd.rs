use super::TrainError;
use crate::numcore::Tensor;

/// Optimizer, schedule and loop settings shared by pretraining and distillation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub seed: u64,
    pub use_edge_view: bool,
    pub use_hf_view: bool,
    pub use_feat_loss: bool,
    pub use_crd_loss: bool,
    pub use_ce: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 30,
            batch_size: 32,
            warmup_epochs: 5,
            decay_epochs: vec![15, 25],
            decay_factor: 0.1,
            seed: 0,
            use_edge_view: true,
            use_hf_view: true,
            use_feat_loss: true,
            use_crd_loss: true,
            use_ce: false,
        }
    }
}

impl TrainConfig {
    /// Teacher pretraining preset: at lr 0.001 for 30 epochs the teacher stays under 90% train accuracy.
    pub fn pretrain_default() -> Self {
        Self {
            lr: 0.01,
            epochs: 60,
            decay_epochs: vec![40],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return fail(format!("decay_factor must be positive, got {}", self.decay_factor));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("decay_epochs {:?} must be strictly increasing", self.decay_epochs));
        }
        if self.decay_epochs.last().is_some_and(|&e| e >= self.epochs) {
            return fail(format!("decay_epochs {:?} must be below epochs {}", self.decay_epochs, self.epochs));
        }
        Ok(())
    }

    /// Linear warmup `base·(e+1)/warmup`, then `base·factor^k` after `k` decay milestones.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.lr * (epoch + 1) as f64 / self.warmup_epochs as f64;
        }
        let passed = self.decay_epochs.iter().filter(|&&d| epoch >= d).count();
        self.lr * self.decay_factor.powi(passed as i32)
    }
}

/// SGD with heavy-ball momentum and L2 weight decay folded into the velocity.
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    velocity: Vec<Option<Vec<f64>>>,
}

impl Sgd {
    pub fn new() -> Self {
        Self::default()
    }

    /// `v ← m·v + (g + wd·p)`, `p ← p − lr·v` for each parameter with `mask[i]` set.
    pub fn step(
        &mut self,
        params: Vec<&mut Tensor>,
        mask: &[bool],
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<(), TrainError> {
        if self.velocity.len() < params.len() {
            self.velocity.resize(params.len(), None);
        }
        for (i, p) in params.into_iter().enumerate() {
            if !mask.get(i).copied().unwrap_or(false) {
                continue;
            }
            let grad = p
                .grad()
                .ok_or_else(|| TrainError::Contract(format!("trainable parameter {i} has no gradient")))?
                .to_vec();
            let v = self.velocity[i].get_or_insert_with(|| vec![0.0; grad.len()]);
            let data = p.data_mut();
            for ((vk, g), w) in v.iter_mut().zip(&grad).zip(data.iter_mut()) {
                *vk = momentum * *vk + (g + weight_decay * *w);
                *w -= lr * *vk;
            }
        }
        Ok(())
    }
}
