//! Line-oriented `key = value` run configuration.
//!
//! `#` starts a comment. Keys are flat and dotted (`distill.tau_f = 2`); lists are
//! comma separated, optionally in brackets (`train.decay_epochs = [15, 25]`).
//! Unknown keys and repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distill::{DistillConfig, TeacherLogits, Tmkd, DEFAULT_COMMON_DIM};
use crate::models::{MlpNet, Role, STUDENT_HIDDEN, TEACHER_HIDDEN};
use crate::textguide::DEFAULT_HIDDEN;
use crate::train::{
    generate, prepare_dir, DistillRunOptions, FusionMode, PreparedData, SyntheticSpec, TrainConfig, TrainError,
};
use crate::viewgen::ViewGenConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("bad value `{value}` for `{key}`: {detail}")]
    Value { key: String, value: String, detail: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Splits `text` into `(line, key, value)` triples.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                detail: format!("expected `key = value`, found `{body}`"),
            });
        };
        let key = key.trim();
        if key.is_empty()
            || key.starts_with('.')
            || key.ends_with('.')
            || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
        {
            return Err(ConfigError::Syntax {
                line,
                detail: format!("malformed key `{key}`"),
            });
        }
        if out.iter().any(|(_, k, _)| k == key) {
            return Err(ConfigError::AtLine {
                line,
                source: Box::new(ConfigError::Duplicate(key.into())),
            });
        }
        out.push((line, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub teacher_hidden: Vec<usize>,
    pub student_hidden: Vec<usize>,
    pub common_dim: usize,
    pub weightnet_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            teacher_hidden: TEACHER_HIDDEN.to_vec(),
            student_hidden: STUDENT_HIDDEN.to_vec(),
            common_dim: DEFAULT_COMMON_DIM,
            weightnet_hidden: DEFAULT_HIDDEN,
        }
    }
}

/// Every setting of a pipeline run.
///
/// `seed` drives model initialization, batch order and feature noise. The synthetic
/// data has its own `synth.seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub synth: SyntheticSpec,
    pub views: ViewGenConfig,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    pub run: DistillRunOptions,
    pub teacher_checkpoint: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_dir: None,
            synth: SyntheticSpec::default(),
            views: ViewGenConfig::default(),
            model: ModelConfig::default(),
            pretrain: TrainConfig::pretrain_default(),
            train: TrainConfig::default(),
            distill: DistillConfig::default(),
            run: DistillRunOptions::default(),
            teacher_checkpoint: None,
            embeddings: None,
        }
    }
}

fn value_err(key: &str, value: &str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        value: value.into(),
        detail: detail.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| value_err(key, value, e.to_string()))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(value_err(key, value, "expected true or false")),
    }
}

fn list(key: &str, value: &str) -> Result<Vec<usize>> {
    let inner = value.strip_prefix('[').and_then(|v| v.strip_suffix(']')).unwrap_or(value).trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|p| num(key, p.trim())).collect()
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn fmt_list(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(usize::to_string).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn set_schedule(t: &mut TrainConfig, field: &str, key: &str, value: &str) -> Result<bool> {
    match field {
        "lr" => t.lr = num(key, value)?,
        "momentum" => t.momentum = num(key, value)?,
        "weight_decay" => t.weight_decay = num(key, value)?,
        "epochs" => t.epochs = num(key, value)?,
        "batch_size" => t.batch_size = num(key, value)?,
        "warmup_epochs" => t.warmup_epochs = num(key, value)?,
        "decay_epochs" => t.decay_epochs = list(key, value)?,
        "decay_factor" => t.decay_factor = num(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn write_schedule(out: &mut String, prefix: &str, t: &TrainConfig) {
    writeln!(out, "{prefix}.lr = {}", t.lr).unwrap();
    writeln!(out, "{prefix}.momentum = {}", t.momentum).unwrap();
    writeln!(out, "{prefix}.weight_decay = {}", t.weight_decay).unwrap();
    writeln!(out, "{prefix}.epochs = {}", t.epochs).unwrap();
    writeln!(out, "{prefix}.batch_size = {}", t.batch_size).unwrap();
    writeln!(out, "{prefix}.warmup_epochs = {}", t.warmup_epochs).unwrap();
    writeln!(out, "{prefix}.decay_epochs = {}", fmt_list(&t.decay_epochs)).unwrap();
    writeln!(out, "{prefix}.decay_factor = {}", t.decay_factor).unwrap();
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies every line of `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line, key, value) in parse_lines(text)? {
            self.set(&key, &value).map_err(|e| ConfigError::AtLine {
                line,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        let known = match section {
            "" => match field {
                "seed" => {
                    self.seed = num(key, value)?;
                    true
                }
                "embeddings" => {
                    self.embeddings = path(value);
                    true
                }
                _ => false,
            },
            "data" if field == "dir" => {
                self.data_dir = path(value);
                true
            }
            "teacher" if field == "checkpoint" => {
                self.teacher_checkpoint = path(value);
                true
            }
            "synth" => {
                let s = &mut self.synth;
                match field {
                    "n_classes" => s.n_classes = num(key, value)?,
                    "samples_per_class" => s.samples_per_class = num(key, value)?,
                    "image_size" => s.image_size = num(key, value)?,
                    "seed" => s.seed = num(key, value)?,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                true
            }
            "views" => {
                let v = &mut self.views;
                match field {
                    "canny_low" => v.canny_low = num(key, value)?,
                    "canny_high" => v.canny_high = num(key, value)?,
                    "alpha_e" => v.alpha_e = num(key, value)?,
                    "alpha_hf" => v.alpha_hf = num(key, value)?,
                    "sigma" => v.gaussian_sigma = num(key, value)?,
                    "kernel" => v.gaussian_kernel = num(key, value)?,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                true
            }
            "model" => {
                let m = &mut self.model;
                match field {
                    "teacher_hidden" => m.teacher_hidden = list(key, value)?,
                    "student_hidden" => m.student_hidden = list(key, value)?,
                    "common_dim" => m.common_dim = num(key, value)?,
                    "weightnet_hidden" => m.weightnet_hidden = num(key, value)?,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                true
            }
            "pretrain" => set_schedule(&mut self.pretrain, field, key, value)?,
            "train" if set_schedule(&mut self.train, field, key, value)? => true,
            "train" => {
                let t = &mut self.train;
                match field {
                    "use_edge_view" => t.use_edge_view = flag(key, value)?,
                    "use_hf_view" => t.use_hf_view = flag(key, value)?,
                    "use_feat_loss" => t.use_feat_loss = flag(key, value)?,
                    "use_crd_loss" => t.use_crd_loss = flag(key, value)?,
                    "use_ce" => t.use_ce = flag(key, value)?,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                true
            }
            "distill" => {
                let d = &mut self.distill;
                match field {
                    "tau_f" => d.tau_f = num(key, value)?,
                    "tau_l" => d.tau_l = num(key, value)?,
                    "tau_crd" => d.tau_crd = num(key, value)?,
                    "alpha" => d.alpha = num(key, value)?,
                    "beta" => d.beta = num(key, value)?,
                    "gamma_loss" => d.gamma_loss = num(key, value)?,
                    "gamma_noise" => d.gamma_noise = num(key, value)?,
                    "scale_logit_kd_by_tau_sq" => d.scale_logit_kd_by_tau_sq = flag(key, value)?,
                    "teacher_logits" => {
                        self.run.teacher_logits = match value {
                            "fused" => TeacherLogits::Fused,
                            "rgb" => TeacherLogits::Rgb,
                            _ => return Err(value_err(key, value, "expected fused or rgb")),
                        }
                    }
                    "fusion" => {
                        self.run.fusion = match value {
                            "per_class" => FusionMode::PerClass,
                            "global" => FusionMode::Global,
                            _ => return Err(value_err(key, value, "expected per_class or global")),
                        }
                    }
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                true
            }
            _ => false,
        };
        if known {
            Ok(())
        } else {
            Err(ConfigError::UnknownKey(key.into()))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.synth.validate().map_err(|e| invalid(&e))?;
        self.views.validate().map_err(|e| invalid(&e))?;
        self.pretrain.validate().map_err(|e| invalid(&format!("pretrain: {e}")))?;
        self.train.validate().map_err(|e| invalid(&format!("train: {e}")))?;
        self.distill.validate().map_err(|e| invalid(&e))?;
        let m = &self.model;
        if m.teacher_hidden.is_empty() || m.student_hidden.is_empty() {
            return Err(ConfigError::Invalid("teacher and student need at least one hidden layer".into()));
        }
        if m.teacher_hidden.iter().chain(&m.student_hidden).any(|&h| h == 0)
            || m.common_dim == 0
            || m.weightnet_hidden == 0
        {
            return Err(ConfigError::Invalid("model sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.pretrain.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn distill_config(&self) -> DistillConfig {
        DistillConfig {
            seed: self.seed,
            ..self.distill.clone()
        }
    }

    /// The dataset at `data.dir` through its view cache, or the synthetic set built in memory.
    pub fn prepare_data(&self) -> std::result::Result<PreparedData, TrainError> {
        match &self.data_dir {
            Some(dir) => prepare_dir(dir, &self.views),
            None => PreparedData::from_dataset(&generate(&self.synth)?, &self.views),
        }
    }

    fn init_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn init_teacher(&self, d_in: usize, classes: usize) -> MlpNet {
        MlpNet::new(Role::Teacher, d_in, &self.model.teacher_hidden, classes, &mut self.init_rng(0))
    }

    /// Fresh student, projectors and weight generator. Independent of the teacher draw.
    pub fn init_tmkd(&self, d_in: usize, classes: usize, teacher_feat_dim: usize, embed_dim: usize) -> Tmkd {
        let mut rng = self.init_rng(1);
        let student = MlpNet::new(Role::Student, d_in, &self.model.student_hidden, classes, &mut rng);
        Tmkd::new(
            student,
            teacher_feat_dim,
            embed_dim,
            self.model.common_dim,
            self.model.weightnet_hidden,
            &mut rng,
        )
    }

    /// `"vanilla KD"` when only the logit term on the RGB view remains, `"TMKD"` with everything on.
    pub fn run_kind(&self) -> &'static str {
        let t = &self.train;
        let extras = [t.use_edge_view, t.use_hf_view, t.use_feat_loss, t.use_crd_loss];
        if extras.iter().all(|&on| !on) && !t.use_ce {
            "vanilla KD"
        } else if extras.iter().all(|&on| on) && !t.use_ce {
            "TMKD"
        } else {
            "TMKD ablation"
        }
    }

    /// Every effective value, in a form [`RunConfig::parse`] reads back to an equal config.
    pub fn resolved(&self) -> String {
        let mut out = format!("# run kind: {}\n", self.run_kind());
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        put("seed", self.seed.to_string());
        put("data.dir", fmt_path(&self.data_dir));
        put("embeddings", fmt_path(&self.embeddings));
        put("teacher.checkpoint", fmt_path(&self.teacher_checkpoint));
        let s = &self.synth;
        put("synth.n_classes", s.n_classes.to_string());
        put("synth.samples_per_class", s.samples_per_class.to_string());
        put("synth.image_size", s.image_size.to_string());
        put("synth.seed", s.seed.to_string());
        let v = &self.views;
        put("views.canny_low", v.canny_low.to_string());
        put("views.canny_high", v.canny_high.to_string());
        put("views.alpha_e", v.alpha_e.to_string());
        put("views.alpha_hf", v.alpha_hf.to_string());
        put("views.sigma", v.gaussian_sigma.to_string());
        put("views.kernel", v.gaussian_kernel.to_string());
        let m = &self.model;
        put("model.teacher_hidden", fmt_list(&m.teacher_hidden));
        put("model.student_hidden", fmt_list(&m.student_hidden));
        put("model.common_dim", m.common_dim.to_string());
        put("model.weightnet_hidden", m.weightnet_hidden.to_string());
        write_schedule(&mut out, "pretrain", &self.pretrain);
        write_schedule(&mut out, "train", &self.train);
        let t = &self.train;
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        put("train.use_edge_view", t.use_edge_view.to_string());
        put("train.use_hf_view", t.use_hf_view.to_string());
        put("train.use_feat_loss", t.use_feat_loss.to_string());
        put("train.use_crd_loss", t.use_crd_loss.to_string());
        put("train.use_ce", t.use_ce.to_string());
        let d = &self.distill;
        put("distill.tau_f", d.tau_f.to_string());
        put("distill.tau_l", d.tau_l.to_string());
        put("distill.tau_crd", d.tau_crd.to_string());
        put("distill.alpha", d.alpha.to_string());
        put("distill.beta", d.beta.to_string());
        put("distill.gamma_loss", d.gamma_loss.to_string());
        put("distill.gamma_noise", d.gamma_noise.to_string());
        put("distill.scale_logit_kd_by_tau_sq", d.scale_logit_kd_by_tau_sq.to_string());
        let logits = match self.run.teacher_logits {
            TeacherLogits::Fused => "fused",
            TeacherLogits::Rgb => "rgb",
        };
        put("distill.teacher_logits", logits.into());
        let fusion = match self.run.fusion {
            FusionMode::PerClass => "per_class",
            FusionMode::Global => "global",
        };
        put("distill.fusion", fusion.into());
        out
    }
}
