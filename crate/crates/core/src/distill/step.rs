use rand::Rng;

use super::losses::{
    cross_entropy, crd_loss, feature_loss, logit_loss, perturb_teacher_feature, total_loss, LossParts,
    LossReport,
};
use super::DistillConfig;
use crate::models::{BoundLinear, BoundMlp, Linear, MlpNet, Module, Projector};
use crate::numcore::{Result, Tape, Tensor, TensorError, Var};
use crate::textguide::{fuse_features, BoundWeightNet, WeightNet};
use crate::viewgen::ViewKind;

pub const DEFAULT_COMMON_DIM: usize = 64;

/// Source of the teacher logits used by the logit term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeacherLogits {
    /// The teacher classifier applied to the fused feature.
    #[default]
    Fused,
    /// The teacher's own logits on the RGB view.
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Student,
    FeatProj,
    CrdStudent,
    CrdText,
    WeightNet,
}

/// Everything the distillation step may train.
#[derive(Debug, Clone, PartialEq)]
pub struct Tmkd {
    pub student: MlpNet,
    /// Student feature → teacher feature space.
    pub feat_proj: Projector,
    /// Student feature → contrastive space.
    pub crd_student: Projector,
    /// Text embedding → contrastive space.
    pub crd_text: Projector,
    pub weightnet: WeightNet,
}

#[derive(Debug, Clone)]
pub struct BoundTmkd {
    pub student: BoundMlp,
    pub feat_proj: BoundLinear,
    pub crd_student: BoundLinear,
    pub crd_text: BoundLinear,
    pub weightnet: BoundWeightNet,
}

impl Tmkd {
    pub fn new<R: Rng>(
        student: MlpNet,
        teacher_feat_dim: usize,
        embed_dim: usize,
        common_dim: usize,
        weightnet_hidden: usize,
        rng: &mut R,
    ) -> Self {
        let s = student.feat_dim();
        Self {
            feat_proj: Linear::new(s, teacher_feat_dim, rng),
            crd_student: Linear::new(s, common_dim, rng),
            crd_text: Linear::new(embed_dim, common_dim, rng),
            weightnet: WeightNet::new(embed_dim, weightnet_hidden, rng),
            student,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundTmkd {
        BoundTmkd {
            student: self.student.bind(tape),
            feat_proj: self.feat_proj.bind(tape),
            crd_student: self.crd_student.bind(tape),
            crd_text: self.crd_text.bind(tape),
            weightnet: self.weightnet.bind(tape),
        }
    }

    /// The owning component of each entry of [`Module::params_mut`].
    pub fn param_components(&self) -> Vec<Component> {
        let mut out = vec![Component::Student; self.student.named_params().len()];
        out.extend([Component::FeatProj; 2]);
        out.extend([Component::CrdStudent; 2]);
        out.extend([Component::CrdText; 2]);
        out.extend([Component::WeightNet; 4]);
        out
    }
}

impl BoundTmkd {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.student.vars();
        v.extend(self.feat_proj.vars());
        v.extend(self.crd_student.vars());
        v.extend(self.crd_text.vars());
        v.extend(self.weightnet.vars());
        v
    }
}

impl Module for Tmkd {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let groups: [(&str, Vec<(String, &Tensor)>); 5] = [
            ("student", self.student.named_params()),
            ("feat_proj", self.feat_proj.named_params()),
            ("crd_student", self.crd_student.named_params()),
            ("crd_text", self.crd_text.named_params()),
            ("weightnet", self.weightnet.named_params()),
        ];
        groups
            .into_iter()
            .flat_map(|(prefix, ps)| ps.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t)))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.student.params_mut();
        out.extend(self.feat_proj.params_mut());
        out.extend(self.crd_student.params_mut());
        out.extend(self.crd_text.params_mut());
        out.extend(self.weightnet.params_mut());
        out
    }
}

/// Which parts of the objective are switched on.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOptions {
    /// Views fused from the teacher; always contains RGB.
    pub views: Vec<ViewKind>,
    pub use_feat: bool,
    pub use_crd: bool,
    pub use_ce: bool,
    pub teacher_logits: TeacherLogits,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            views: ViewKind::ALL.to_vec(),
            use_feat: true,
            use_crd: true,
            use_ce: false,
            teacher_logits: TeacherLogits::Fused,
        }
    }
}

impl StepOptions {
    fn feat_on(&self, cfg: &DistillConfig) -> bool {
        self.use_feat && cfg.gamma_loss > 0.0
    }

    fn crd_on(&self, cfg: &DistillConfig) -> bool {
        self.use_crd && cfg.beta > 0.0
    }

    fn fusion_on(&self, cfg: &DistillConfig) -> bool {
        self.feat_on(cfg) || (cfg.alpha > 0.0 && self.teacher_logits == TeacherLogits::Fused)
    }

    /// Components that receive gradients from the total loss, and so are trained.
    pub fn trainable(&self, cfg: &DistillConfig) -> Vec<Component> {
        let mut out = vec![Component::Student];
        if self.feat_on(cfg) {
            out.push(Component::FeatProj);
        }
        if self.crd_on(cfg) {
            out.extend([Component::CrdStudent, Component::CrdText]);
        }
        if self.fusion_on(cfg) && self.views.len() > 1 {
            out.push(Component::WeightNet);
        }
        out
    }
}

/// Inputs of one step. Teacher quantities are precomputed constants.
#[derive(Debug, Clone)]
pub struct StepBatch {
    /// Student input (flattened RGB view), `[B, d_in]`.
    pub x: Tensor,
    /// Teacher features for each active view, in `StepOptions::views` order, `[B, d_t]`.
    pub teacher_features: Vec<Tensor>,
    /// Teacher logits on the RGB view, `[B, C]`.
    pub teacher_rgb_logits: Tensor,
    /// (rgb, edge, hf) embeddings fed to the weight generator, `[B, d_e]` each.
    pub fusion_text: [Tensor; 3],
    /// Positive text embedding of each sample for the contrastive term, `[B, d_e]`.
    pub crd_text: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: Var,
    pub report: LossReport,
    /// `[B, k]` fusion weights over the active views, when fusion ran.
    pub weights: Option<Var>,
    pub student_logits: Var,
    pub bound: BoundTmkd,
}

/// Builds the full objective for one batch on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn build_step<R: Rng>(
    tape: &mut Tape,
    model: &Tmkd,
    teacher_head: &Linear,
    batch: &StepBatch,
    cfg: &DistillConfig,
    opts: &StepOptions,
    noise_rng: &mut R,
) -> Result<StepOutput> {
    if opts.views.first() != Some(&ViewKind::Rgb) || batch.teacher_features.len() != opts.views.len() {
        return Err(TensorError::Contract {
            op: "build_step",
            detail: format!(
                "views {:?} must start with rgb and match {} teacher feature blocks",
                opts.views,
                batch.teacher_features.len()
            ),
        });
    }
    let bound = model.bind(tape);
    let x = tape.leaf(&batch.x);
    let (f_s, z_s) = bound.student.forward(tape, x)?;
    let mut parts = LossParts::default();

    let mut weights = None;
    let mut fused = None;
    if opts.fusion_on(cfg) {
        let rows = batch.labels.len();
        let w = if opts.views.len() == 1 {
            tape.constant(vec![rows, 1], vec![1.0; rows])?
        } else {
            let text = [0, 1, 2].map(|i| tape.leaf(&batch.fusion_text[i]));
            bound.weightnet.forward(tape, text, &opts.views)?
        };
        let feats: Vec<Var> = batch.teacher_features.iter().map(|f| tape.leaf(f)).collect();
        fused = Some(fuse_features(tape, w, &feats)?);
        weights = Some(w);
    }

    if cfg.alpha > 0.0 {
        let z_t = match (opts.teacher_logits, fused) {
            (TeacherLogits::Fused, Some(f)) => {
                let head = teacher_head.bind(tape);
                head.forward(tape, f)?
            }
            _ => tape.leaf(&batch.teacher_rgb_logits),
        };
        parts.logit = Some(logit_loss(tape, z_t, z_s, cfg.tau_l, cfg.scale_logit_kd_by_tau_sq)?);
    }

    if opts.feat_on(cfg) {
        let f_tilde = perturb_teacher_feature(tape, fused.expect("fusion runs with the feature term"), cfg.gamma_noise, noise_rng)?;
        let f_proj = bound.feat_proj.forward(tape, f_s)?;
        parts.feat = Some(feature_loss(tape, f_proj, f_tilde, cfg.tau_f)?);
    }

    if opts.crd_on(cfg) && batch.labels.len() >= 2 {
        let zs = bound.crd_student.forward(tape, f_s)?;
        let zs = tape.l2_normalize(zs)?;
        let t = tape.leaf(&batch.crd_text);
        let zt = bound.crd_text.forward(tape, t)?;
        let zt = tape.l2_normalize(zt)?;
        parts.crd = Some(crd_loss(tape, zs, zt, cfg.tau_crd)?);
    }

    if opts.use_ce {
        parts.ce = Some(cross_entropy(tape, z_s, &batch.labels)?);
    }

    let (loss, report) = total_loss(tape, cfg, &parts)?;
    Ok(StepOutput {
        loss,
        report,
        weights,
        student_logits: z_s,
        bound,
    })
}
