use super::gradcheck;
use super::*;
use crate::models::{Linear, MlpNet, Module, Role};
use crate::numcore::{Tape, Tensor, Var};
use crate::viewgen::ViewKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(tape: &mut Tape, shape: &[usize], data: &[f64]) -> Var {
    tape.constant(shape.to_vec(), data.to_vec()).unwrap()
}

fn feat(fs: &[f64], ft: &[f64], tau: f64) -> f64 {
    let mut tape = Tape::new();
    let a = c(&mut tape, &[fs.len()], fs);
    let b = c(&mut tape, &[ft.len()], ft);
    let l = feature_loss(&mut tape, a, b, tau).unwrap();
    tape.scalar(l)
}

fn logit(zt: &[f64], zs: &[f64], tau: f64) -> f64 {
    let mut tape = Tape::new();
    let a = c(&mut tape, &[zt.len()], zt);
    let b = c(&mut tape, &[zs.len()], zs);
    let l = logit_loss(&mut tape, a, b, tau, false).unwrap();
    tape.scalar(l)
}

fn crd(zs: &[f64], zt: &[f64], rows: usize, tau: f64) -> crate::numcore::Result<f64> {
    let d = zs.len() / rows;
    let mut tape = Tape::new();
    let a = c(&mut tape, &[rows, d], zs);
    let b = c(&mut tape, &[rows, d], zt);
    let l = crd_loss(&mut tape, a, b, tau)?;
    Ok(tape.scalar(l))
}

/// Hand-evaluated `Σ p (ln p − ln q)` with both sides softened by `tau`.
fn kl_oracle(t: &[f64], s: &[f64], tau: f64) -> f64 {
    let soft = |x: &[f64]| {
        let e: Vec<f64> = x.iter().map(|v| (v / tau).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect::<Vec<_>>()
    };
    let (p, q) = (soft(t), soft(s));
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum()
}

const E1E2: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

#[test]
fn feature_loss_examples() {
    let v = feat(&[0.0, 0.0], &[2.0, 0.0], 2.0);
    assert!((v - 0.4436).abs() < 1e-3, "{v}");
    assert!((v - 4.0 * kl_oracle(&[2.0, 0.0], &[0.0, 0.0], 2.0)).abs() < 1e-12);
    assert!(feat(&[0.3, -1.0, 2.0], &[0.3, -1.0, 2.0], 2.0).abs() < 1e-12);
    assert_eq!(feat(&[5.0], &[-3.0], 2.0), 0.0);
}

#[test]
fn logit_loss_examples() {
    let v = logit(&[1.0, 0.0], &[0.0, 0.0], 4.0);
    assert!((v - 0.00777).abs() < 1e-4, "{v}");
    assert!((v - kl_oracle(&[1.0, 0.0], &[0.0, 0.0], 4.0)).abs() < 1e-12);
    assert!(logit(&[0.5, 2.0, -1.0], &[0.5, 2.0, -1.0], 4.0).abs() < 1e-12);

    let mut tape = Tape::new();
    let a = c(&mut tape, &[2], &[1.0, 0.0]);
    let b = c(&mut tape, &[2], &[0.0, 0.0]);
    let scaled = logit_loss(&mut tape, a, b, 4.0, true).unwrap();
    assert!((tape.scalar(scaled) - 16.0 * v).abs() < 1e-12);
}

#[test]
fn logit_loss_is_nonnegative_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(1..8);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        assert!(logit(&a, &b, rng.random_range(0.5..8.0)) >= -1e-12);
    }
}

#[test]
fn loss_shape_and_temperature_errors() {
    let mut tape = Tape::new();
    let a = c(&mut tape, &[2], &[1.0, 0.0]);
    let b = c(&mut tape, &[3], &[0.0; 3]);
    assert!(feature_loss(&mut tape, a, b, 2.0).is_err());
    assert!(logit_loss(&mut tape, a, b, 4.0, false).is_err());
    assert!(feature_loss(&mut tape, a, a, 0.0).is_err());
    assert!(logit_loss(&mut tape, a, a, -1.0, false).is_err());
}

#[test]
fn crd_examples() {
    let v = crd(&E1E2, &E1E2, 2, 2.0).unwrap();
    let hand = -2.0 * (0.5f64.exp() / (0.5f64.exp() + 1.0)).ln();
    assert!((v - 0.9481).abs() < 1e-3, "{v}");
    assert!((v - hand).abs() < 1e-12);

    let same = [0.6, 0.8, 0.6, 0.8];
    let v = crd(&same, &same, 2, 2.0).unwrap();
    assert!((v - 2.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn crd_falls_monotonically_with_temperature() {
    let mut prev = f64::INFINITY;
    for tau in [2.0, 1.0, 0.5, 0.1] {
        let v = crd(&E1E2, &E1E2, 2, tau).unwrap();
        assert!(v < prev, "tau {tau}: {v} !< {prev}");
        prev = v;
    }
    assert!(prev < 1e-3);
}

#[test]
fn crd_contract_errors() {
    assert!(crd(&[1.0, 0.0], &[1.0, 0.0], 1, 2.0).is_err());
    assert!(crd(&[2.0, 0.0, 0.0, 1.0], &E1E2, 2, 2.0).is_err());
    assert!(crd(&E1E2, &[1.0, 0.0, 0.0, 1.0 + 1e-5], 2, 2.0).is_err());
    assert!(crd(&E1E2, &[1.0, 0.0, 0.0, 1.0 + 1e-8], 2, 2.0).is_ok());
    assert!(crd(&E1E2, &E1E2, 2, 0.0).is_err());
}

fn all_terms(cfg: &DistillConfig) -> LossReport {
    let mut tape = Tape::new();
    let fs = c(&mut tape, &[2], &[0.0, 0.0]);
    let ft = c(&mut tape, &[2], &[2.0, 0.0]);
    let zt = c(&mut tape, &[2], &[1.0, 0.0]);
    let zs = c(&mut tape, &[2], &[0.0, 0.0]);
    let a = c(&mut tape, &[2, 2], &E1E2);
    let b = c(&mut tape, &[2, 2], &E1E2);
    let parts = LossParts {
        feat: Some(feature_loss(&mut tape, fs, ft, cfg.tau_f).unwrap()),
        logit: Some(logit_loss(&mut tape, zt, zs, cfg.tau_l, false).unwrap()),
        crd: Some(crd_loss(&mut tape, a, b, cfg.tau_crd).unwrap()),
        ce: None,
    };
    total_loss(&mut tape, cfg, &parts).unwrap().1
}

#[test]
fn total_loss_examples() {
    let cfg = DistillConfig::default();
    let r = all_terms(&cfg);
    assert!((r.l_all - 0.06938).abs() < 1e-3, "{}", r.l_all);
    assert!((r.l_all - (cfg.alpha * r.l_logit + cfg.beta * r.l_crd + cfg.gamma_loss * r.l_feat)).abs() < 1e-12);

    let zero = DistillConfig {
        alpha: 0.0,
        beta: 0.0,
        gamma_loss: 0.0,
        ..cfg.clone()
    };
    let r = all_terms(&zero);
    assert_eq!(r.l_all, 0.0);
    assert!(r.l_feat > 0.0 && r.l_crd > 0.0, "zero-weight terms are still reported");

    let mut tape = Tape::new();
    let z = c(&mut tape, &[3], &[0.1, 0.2, 0.3]);
    let parts = LossParts {
        logit: Some(logit_loss(&mut tape, z, z, 4.0, false).unwrap()),
        ..LossParts::default()
    };
    let only_logit = DistillConfig {
        alpha: 1.0,
        beta: 0.0,
        gamma_loss: 0.0,
        ..cfg
    };
    let (_, r) = total_loss(&mut tape, &only_logit, &parts).unwrap();
    assert!(r.l_all.abs() < 1e-12);
}

#[test]
fn perturbation_properties() {
    let mut tape = Tape::new();
    let f = c(&mut tape, &[3], &[1.0, -2.0, 0.5]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let same = perturb_teacher_feature(&mut tape, f, 0.0, &mut rng).unwrap();
    assert_eq!(tape.value(same), tape.value(f));
    assert!(perturb_teacher_feature(&mut tape, f, -1.0, &mut rng).is_err());

    let draw = |seed| {
        let mut tape = Tape::new();
        let f = c(&mut tape, &[4], &[0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = perturb_teacher_feature(&mut tape, f, 0.5, &mut rng).unwrap();
        tape.value(p).to_vec()
    };
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));

    let n = 100_000;
    let mut tape = Tape::new();
    let zeros = c(&mut tape, &[n], &vec![0.0; n]);
    let gamma = 0.01;
    let p = perturb_teacher_feature(&mut tape, zeros, gamma, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let eps: Vec<f64> = tape.value(p).iter().map(|v| v / gamma).collect();
    let mean = eps.iter().sum::<f64>() / n as f64;
    let var = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((0.98..=1.02).contains(&var), "{var}");
}

#[test]
fn perturbation_keeps_gradient_path() {
    let mut tape = Tape::new();
    let f = tape.leaf(&Tensor::vector(vec![0.3, 0.1]).unwrap().with_grad());
    let p = perturb_teacher_feature(&mut tape, f, 0.1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let s = tape.sum(p);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(f).unwrap(), &[1.0, 1.0]);
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    // Gram-Schmidt on a random matrix.
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    q
}

fn unit_rows(rows: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..rows)
        .flat_map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(move |x| x / n)
        })
        .collect()
}

fn rotate(rows: &[f64], q: &[Vec<f64>]) -> Vec<f64> {
    let d = q.len();
    rows.chunks(d)
        .flat_map(|r| q.iter().map(move |qi| qi.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()))
        .collect()
}

#[test]
fn crd_is_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (b, d) = (rng.random_range(2..6), rng.random_range(2..6));
        let zs = unit_rows(b, d, &mut rng);
        let zt = unit_rows(b, d, &mut rng);
        let q = random_orthogonal(d, &mut rng);
        let base = crd(&zs, &zt, b, 0.7).unwrap();
        let rot = crd(&rotate(&zs, &q), &rotate(&zt, &q), b, 0.7).unwrap();
        assert!((base - rot).abs() < 1e-9, "{base} vs {rot}");
    }
}

proptest! {
    #[test]
    fn kd_losses_are_shift_invariant(
        a in prop::collection::vec(-20.0f64..20.0, 2..8),
        shift_t in -50.0f64..50.0,
        shift_s in -50.0f64..50.0,
        tau in 0.5f64..8.0,
    ) {
        let b: Vec<f64> = a.iter().rev().map(|x| x * 0.5 + 1.0).collect();
        let st: Vec<f64> = a.iter().map(|x| x + shift_t).collect();
        let ss: Vec<f64> = b.iter().map(|x| x + shift_s).collect();
        prop_assert!((logit(&a, &b, tau) - logit(&st, &ss, tau)).abs() < 1e-9);
        prop_assert!((feat(&b, &a, tau) - feat(&ss, &st, tau)).abs() < 1e-9);
    }

    #[test]
    fn temperature_keeps_the_argmax(z in prop::collection::vec(-10.0f64..10.0, 2..10)) {
        let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best });
        let expected = argmax(&z);
        for tau in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let mut tape = Tape::new();
            let zv = c(&mut tape, &[z.len()], &z);
            let s = tape.scale(zv, 1.0 / tau);
            let p = tape.softmax(s, 0).unwrap();
            prop_assert_eq!(argmax(tape.value(p)), expected);
        }
    }
}

#[test]
fn config_validation() {
    assert!(DistillConfig::default().validate().is_ok());
    let bad = DistillConfig {
        tau_l: 0.0,
        ..DistillConfig::default()
    };
    assert!(bad.validate().unwrap_err().contains("tau_l"));
    let bad = DistillConfig {
        beta: -0.1,
        ..DistillConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn gradcheck_passes_on_seeded_instances() {
    let report = gradcheck::run(0, 4).unwrap();
    assert_eq!(report.terms.len(), 4);
    for t in &report.terms {
        assert!(t.worst < 1e-4, "{} worst {} at {}", t.term, t.worst, t.param);
    }
    assert!(!report.passed(1e-12));
    assert_eq!(gradcheck::run(0, 4).unwrap(), report);
}

#[test]
fn trainable_set_follows_active_terms() {
    let cfg = DistillConfig::default();
    let full = StepOptions::default();
    assert_eq!(full.trainable(&cfg).len(), 5);
    let kd = StepOptions {
        views: vec![ViewKind::Rgb],
        use_feat: false,
        use_crd: false,
        ..StepOptions::default()
    };
    assert_eq!(kd.trainable(&cfg), [Component::Student]);
    let zero_beta = DistillConfig { beta: 0.0, ..cfg };
    assert!(!full.trainable(&zero_beta).contains(&Component::CrdText));
}

#[test]
fn step_graph_reaches_exactly_the_trainable_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inst = gradcheck::Instance::random(&mut rng);
    let cfg = DistillConfig::default();
    for opts in [
        StepOptions::default(),
        StepOptions {
            views: vec![ViewKind::Rgb],
            use_feat: false,
            use_crd: false,
            ..StepOptions::default()
        },
        StepOptions {
            views: vec![ViewKind::Rgb, ViewKind::Hf],
            use_crd: false,
            ..StepOptions::default()
        },
    ] {
        let mut batch = inst.batch.clone();
        batch.teacher_features.truncate(opts.views.len());
        let mut tape = Tape::new();
        let out = build_step(&mut tape, &inst.model, &inst.teacher_head, &batch, &cfg, &opts, &mut rng).unwrap();
        tape.backward(out.loss).unwrap();
        let trainable = opts.trainable(&cfg);
        for (comp, v) in inst.model.param_components().into_iter().zip(out.bound.vars()) {
            assert_eq!(tape.grad(v).is_some(), trainable.contains(&comp), "{comp:?} under {opts:?}");
        }
        if let Some(w) = out.weights {
            assert_eq!(tape.shape(w), [4, opts.views.len()]);
        }
    }
}

#[test]
fn step_rejects_mismatched_views() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let inst = gradcheck::Instance::random(&mut rng);
    let opts = StepOptions {
        views: vec![ViewKind::Edge, ViewKind::Rgb, ViewKind::Hf],
        ..StepOptions::default()
    };
    let mut tape = Tape::new();
    let cfg = DistillConfig::default();
    assert!(build_step(&mut tape, &inst.model, &inst.teacher_head, &inst.batch, &cfg, &opts, &mut rng).is_err());
}

#[test]
fn tmkd_names_and_components_align() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let student = MlpNet::new(Role::Student, 4, &[3], 2, &mut rng);
    let m = Tmkd::new(student, 5, 6, 3, 7, &mut rng);
    let names: Vec<String> = m.named_params().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), m.param_components().len());
    assert_eq!(names[0], "student.layers.0.weight");
    assert_eq!(names.last().unwrap(), "weightnet.b2");
    let mut tape = Tape::new();
    assert_eq!(m.bind(&mut tape).vars().len(), names.len());
    let head = Linear::new(5, 2, &mut rng);
    assert_eq!(head.out_dim(), 2);
}
