use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{gather_rows, PreparedData};
use super::metrics::{class_mean_logits, evaluate, Evaluation, MetricsLog, MetricsRow};
use super::sgd::{Sgd, TrainConfig};
use super::TrainError;
use crate::distill::{build_step, cross_entropy, DistillConfig, StepBatch, StepOptions, TeacherLogits, Tmkd};
use crate::models::{store_grads, MlpNet, Module};
use crate::numcore::{Tape, Tensor, TensorError};
use crate::textguide::{EmbeddingTable, FusionWeights};
use crate::viewgen::ViewKind;

/// The `k` of the reported top-k accuracy: 5, or the class count when smaller.
pub fn eval_top_k(classes: usize) -> usize {
    classes.min(5)
}

/// Numeric failures inside an epoch are reported as divergence at that epoch.
fn at_epoch<E: Into<TrainError>>(epoch: usize) -> impl Fn(E) -> TrainError {
    move |e| match e.into() {
        TrainError::Tensor(t @ TensorError::Numeric { .. }) => TrainError::Divergence {
            epoch,
            detail: t.to_string(),
        },
        other => other,
    }
}

fn shuffled(train: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64)));
    order
}

fn score(net: &MlpNet, data: &PreparedData, idx: &[usize]) -> Result<(Evaluation, Tensor), TrainError> {
    let (_, z) = net.predict(&data.rows(ViewKind::Rgb, idx))?;
    let c = data.n_classes();
    let e = evaluate(z.data(), c, &data.labels_of(idx), eval_top_k(c))?;
    Ok((e, z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainRow {
    pub epoch: usize,
    pub loss: f64,
    pub train_top1: f64,
    pub test_top1: f64,
}

/// Cross-entropy training of `teacher` on the RGB view.
pub fn pretrain_teacher(
    teacher: &mut MlpNet,
    data: &PreparedData,
    cfg: &TrainConfig,
) -> Result<Vec<PretrainRow>, TrainError> {
    cfg.validate()?;
    if teacher.d_in() != data.d_in || teacher.classes() != data.n_classes() {
        return Err(TrainError::Contract(format!(
            "teacher expects {} inputs and {} classes, data has {} and {}",
            teacher.d_in(),
            teacher.classes(),
            data.d_in,
            data.n_classes()
        )));
    }
    teacher.set_frozen(false);
    let mask = vec![true; teacher.named_params().len()];
    let mut sgd = Sgd::new();
    let mut rows = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut loss_sum = 0.0;
        for batch in shuffled(&data.train, cfg.seed, epoch).chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let net = teacher.bind(&mut tape);
            let x = tape.leaf(&data.rows(ViewKind::Rgb, batch));
            let (_, z) = net.forward(&mut tape, x).map_err(at_epoch(epoch))?;
            let loss = cross_entropy(&mut tape, z, &data.labels_of(batch)).map_err(at_epoch(epoch))?;
            let l = tape.scalar(loss);
            if !l.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    detail: format!("cross-entropy {l}"),
                });
            }
            loss_sum += l * batch.len() as f64;
            tape.backward(loss)?;
            store_grads(&tape, teacher.params_mut(), &net.vars());
            sgd.step(teacher.params_mut(), &mask, lr, cfg.momentum, cfg.weight_decay)?;
        }
        let (train, _) = score(teacher, data, &data.train).map_err(at_epoch(epoch))?;
        let (test, _) = score(teacher, data, &data.test).map_err(at_epoch(epoch))?;
        rows.push(PretrainRow {
            epoch,
            loss: loss_sum / data.train.len() as f64,
            train_top1: train.top1,
            test_top1: test.top1,
        });
    }
    for p in teacher.params_mut() {
        p.clear_grad();
    }
    Ok(rows)
}

/// How the weight generator sees the text embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// Each sample uses the embeddings of its own class.
    #[default]
    PerClass,
    /// Every sample uses the class-mean embeddings, giving one weight triple.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DistillRunOptions {
    pub teacher_logits: TeacherLogits,
    pub fusion: FusionMode,
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub metrics: MetricsLog,
    /// Student with the best test top-1 (earliest epoch on ties).
    pub best_student: MlpNet,
    pub best_epoch: usize,
    /// Per-class mean test logits of `best_student`.
    pub class_logits: Vec<Vec<f64>>,
}

struct TextRows {
    /// Per class: rgb, edge, hf embeddings as seen by the weight generator.
    fusion: Vec<[Vec<f64>; 3]>,
    /// Per class: positive embedding for the contrastive term.
    crd: Vec<Vec<f64>>,
}

fn text_rows(table: &EmbeddingTable, classes: &[String], mode: FusionMode) -> Result<TextRows, TrainError> {
    let missing = table.missing_keys(classes.iter().map(String::as_str));
    if !missing.is_empty() {
        return Err(TrainError::MissingEmbeddings(missing));
    }
    let to64 = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    let mut fusion = Vec::with_capacity(classes.len());
    let mut crd = Vec::with_capacity(classes.len());
    for c in classes {
        let [r, e, h] = table.lookup_class(c)?;
        fusion.push([to64(r), to64(e), to64(h)]);
        crd.push(to64(r));
    }
    if mode == FusionMode::Global {
        let n = classes.len() as f64;
        let mean: [Vec<f64>; 3] = std::array::from_fn(|v| {
            let mut m = vec![0.0; table.dim()];
            for f in &fusion {
                m.iter_mut().zip(&f[v]).for_each(|(a, b)| *a += b);
            }
            m.into_iter().map(|x| x / n).collect()
        });
        fusion = vec![mean; classes.len()];
    }
    Ok(TextRows { fusion, crd })
}

fn text_batch(rows: &[Vec<f64>], labels: &[usize]) -> Tensor {
    let d = rows[0].len();
    let mut out = Vec::with_capacity(labels.len() * d);
    for &y in labels {
        out.extend_from_slice(&rows[y]);
    }
    Tensor::new(vec![labels.len(), d], out).unwrap()
}

/// Active views implied by the ablation flags, RGB first.
pub(crate) fn active_views(cfg: &TrainConfig) -> Vec<ViewKind> {
    let mut v = vec![ViewKind::Rgb];
    if cfg.use_edge_view {
        v.push(ViewKind::Edge);
    }
    if cfg.use_hf_view {
        v.push(ViewKind::Hf);
    }
    v
}

/// Trains the student, projectors and weight generator of `model` against a frozen teacher.
pub fn distill(
    teacher: &MlpNet,
    model: &mut Tmkd,
    table: &EmbeddingTable,
    data: &PreparedData,
    tcfg: &TrainConfig,
    dcfg: &DistillConfig,
    run: &DistillRunOptions,
) -> Result<DistillOutcome, TrainError> {
    distill_observed(teacher, model, table, data, tcfg, dcfg, run, &mut |_, _, _| {})
}

/// [`distill`], calling `on_step(epoch, step, model)` after every parameter update.
#[allow(clippy::too_many_arguments)]
pub fn distill_observed(
    teacher: &MlpNet,
    model: &mut Tmkd,
    table: &EmbeddingTable,
    data: &PreparedData,
    tcfg: &TrainConfig,
    dcfg: &DistillConfig,
    run: &DistillRunOptions,
    on_step: &mut dyn FnMut(usize, usize, &Tmkd),
) -> Result<DistillOutcome, TrainError> {
    tcfg.validate()?;
    dcfg.validate().map_err(TrainError::Config)?;
    let classes = data.n_classes();
    if teacher.d_in() != data.d_in || teacher.classes() != classes || model.student.classes() != classes {
        return Err(TrainError::Contract("teacher, student and data disagree on shapes".into()));
    }
    if model.weightnet.embed_dim() != table.dim() || model.crd_text.in_dim() != table.dim() {
        return Err(TrainError::Contract(format!(
            "models expect {}-dimensional embeddings, table has {}",
            model.weightnet.embed_dim(),
            table.dim()
        )));
    }
    let text = text_rows(table, &data.classes, run.fusion)?;

    let mut teacher = teacher.clone();
    teacher.set_frozen(true);
    let teacher_sum = teacher.checksum();

    let opts = StepOptions {
        views: active_views(tcfg),
        use_feat: tcfg.use_feat_loss,
        use_crd: tcfg.use_crd_loss,
        use_ce: tcfg.use_ce,
        teacher_logits: run.teacher_logits,
    };
    let trainable = opts.trainable(dcfg);
    let mask: Vec<bool> = model.param_components().iter().map(|c| trainable.contains(c)).collect();

    // The teacher is frozen, so its per-view features are computed once.
    let all: Vec<usize> = (0..data.len()).collect();
    let d_t = teacher.feat_dim();
    let mut features = Vec::with_capacity(opts.views.len());
    let mut rgb_logits = Vec::new();
    for &v in &opts.views {
        let (f, z) = teacher.predict(&data.rows(v, &all))?;
        if v == ViewKind::Rgb {
            rgb_logits = z.into_data();
        }
        features.push(f.into_data());
    }

    let mut sgd = Sgd::new();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(dcfg.seed);
    let mut log = MetricsLog::default();
    let mut best: Option<(f64, usize, MlpNet)> = None;
    let n_train = data.train.len() as f64;

    for epoch in 0..tcfg.epochs {
        let lr = tcfg.lr_at(epoch);
        let mut sums = [0.0; 4];
        for (step, batch) in shuffled(&data.train, tcfg.seed, epoch).chunks(tcfg.batch_size).enumerate() {
            let labels = data.labels_of(batch);
            let step_batch = StepBatch {
                x: data.rows(ViewKind::Rgb, batch),
                teacher_features: features.iter().map(|f| gather_rows(f, d_t, batch)).collect(),
                teacher_rgb_logits: gather_rows(&rgb_logits, classes, batch),
                fusion_text: std::array::from_fn(|v| {
                    let rows: Vec<Vec<f64>> = text.fusion.iter().map(|t| t[v].clone()).collect();
                    text_batch(&rows, &labels)
                }),
                crd_text: text_batch(&text.crd, &labels),
                labels,
            };
            let mut tape = Tape::new();
            let out = build_step(&mut tape, model, &teacher.classifier, &step_batch, dcfg, &opts, &mut noise_rng)
                .map_err(at_epoch(epoch))?;
            let r = out.report;
            if !r.l_all.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    detail: format!("total loss {}", r.l_all),
                });
            }
            let b = batch.len() as f64;
            for (s, v) in sums.iter_mut().zip([r.l_feat, r.l_logit, r.l_crd, r.l_all]) {
                *s += v * b;
            }
            tape.backward(out.loss)?;
            store_grads(&tape, model.params_mut(), &out.bound.vars());
            sgd.step(model.params_mut(), &mask, lr, tcfg.momentum, tcfg.weight_decay)?;
            on_step(epoch, step, model);
        }
        if teacher.checksum() != teacher_sum {
            return Err(TrainError::Contract(format!("teacher parameters changed during epoch {epoch}")));
        }
        if model.named_params().iter().any(|(_, t)| t.data().iter().any(|v| !v.is_finite())) {
            return Err(TrainError::Divergence {
                epoch,
                detail: "non-finite parameter".into(),
            });
        }

        let (train_eval, _) = score(&model.student, data, &data.train).map_err(at_epoch(epoch))?;
        let (test_eval, _) = score(&model.student, data, &data.test).map_err(at_epoch(epoch))?;
        let w = epoch_weights(model, &text, data, &opts.views).map_err(at_epoch(epoch))?;
        log.rows.push(MetricsRow {
            epoch,
            l_feat: sums[0] / n_train,
            l_logit: sums[1] / n_train,
            l_crd: sums[2] / n_train,
            l_all: sums[3] / n_train,
            train_top1: train_eval.top1,
            test_top1: test_eval.top1,
            test_top5: test_eval.topk,
            macro_recall: test_eval.macro_recall,
            w_rgb: w[0],
            w_edge: w[1],
            w_hf: w[2],
        });
        if best.as_ref().is_none_or(|(acc, _, _)| test_eval.top1 > *acc) {
            best = Some((test_eval.top1, epoch, model.student.clone()));
        }
    }
    for p in model.params_mut() {
        p.clear_grad();
    }
    let (_, best_epoch, best_student) = best.expect("at least one epoch");
    let (_, z) = score(&best_student, data, &data.test)?;
    let class_logits = class_mean_logits(z.data(), classes, &data.labels_of(&data.test));
    Ok(DistillOutcome {
        metrics: log,
        best_student,
        best_epoch,
        class_logits,
    })
}

/// Mean fusion weights over the training samples under the current generator.
fn epoch_weights(
    model: &Tmkd,
    text: &TextRows,
    data: &PreparedData,
    views: &[ViewKind],
) -> Result<[f64; 3], TrainError> {
    if views.len() == 1 {
        return Ok(FusionWeights::from_active(views, &[1.0]).as_array());
    }
    let mut counts = vec![0usize; data.n_classes()];
    for &i in &data.train {
        counts[data.labels[i]] += 1;
    }
    let mut acc = [0.0; 3];
    for (c, t) in text.fusion.iter().enumerate() {
        let w = model
            .weightnet
            .weights(&t[0], &t[1], &t[2], views)?
            .as_array();
        for (a, x) in acc.iter_mut().zip(w) {
            *a += x * counts[c] as f64;
        }
    }
    let n = data.train.len() as f64;
    Ok(acc.map(|a| a / n))
}
