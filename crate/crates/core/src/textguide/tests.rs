use super::*;
use crate::models::{param_gradient_errors, Module};
use crate::numcore::fd::STEP;
use crate::numcore::{Tape, Tensor, TensorError, Var};
use crate::viewgen::ViewKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimal independent writer used to produce fixtures for the reader.
fn write_raw(version: u32, count: u32, dim: u32, records: &[(&str, Vec<f32>)]) -> Vec<u8> {
    let mut out = b"TMKD".to_vec();
    for w in [version, count, dim] {
        out.extend(w.to_le_bytes());
    }
    for (k, v) in records {
        out.extend((k.len() as u16).to_le_bytes());
        out.extend(k.as_bytes());
        for x in v {
            out.extend(x.to_le_bytes());
        }
    }
    out
}

fn cardinal_table() -> EmbeddingTable {
    let mut t = EmbeddingTable::new(2).unwrap();
    t.insert("cardinal/rgb", vec![1.0, 0.0]).unwrap();
    t.insert("cardinal/edge", vec![0.0, 1.0]).unwrap();
    t.insert("cardinal/hf", vec![0.5, 0.5]).unwrap();
    t
}

#[test]
fn two_entry_file_round_trips() {
    let bytes = write_raw(1, 2, 4, &[("a/rgb", vec![1.0, -2.0, 0.5, 3.25]), ("b/rgb", vec![0.0; 4])]);
    let table = EmbeddingTable::from_bytes(&bytes).unwrap();
    assert_eq!(table.len(), 2);
    assert_eq!(table.dim(), 4);
    assert_eq!(table.get("a/rgb").unwrap(), &[1.0, -2.0, 0.5, 3.25]);
    assert_eq!(table.to_bytes(), bytes);
}

#[test]
fn duplicate_key_is_named() {
    let bytes = write_raw(1, 2, 1, &[("x/hf", vec![1.0]), ("x/hf", vec![2.0])]);
    let err = EmbeddingTable::from_bytes(&bytes).unwrap_err();
    assert!(matches!(&err, EmbeddingError::DuplicateKey { record: 1, key } if key == "x/hf"));
    assert!(err.to_string().contains("x/hf"));
}

#[test]
fn missing_record_is_truncation() {
    let bytes = write_raw(1, 3, 2, &[("a/rgb", vec![1.0, 2.0]), ("b/rgb", vec![3.0, 4.0])]);
    let err = EmbeddingTable::from_bytes(&bytes).unwrap_err();
    match err {
        EmbeddingError::Parse { record, detail, .. } => {
            assert_eq!(record, Some(2));
            assert!(detail.contains("truncated"));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn cut_payload_names_its_record() {
    let mut bytes = write_raw(1, 2, 2, &[("a/rgb", vec![1.0, 2.0]), ("b/rgb", vec![3.0, 4.0])]);
    bytes.truncate(bytes.len() - 3);
    let err = EmbeddingTable::from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, EmbeddingError::Parse { record: Some(1), .. }), "{err}");
}

#[test]
fn header_errors() {
    let good = write_raw(1, 0, 3, &[]);
    assert!(EmbeddingTable::from_bytes(&good).unwrap().is_empty());
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(EmbeddingTable::from_bytes(&magic), Err(EmbeddingError::Parse { offset: 0, .. })));
    let v2 = write_raw(2, 0, 3, &[]);
    let err = EmbeddingTable::from_bytes(&v2).unwrap_err();
    assert!(err.to_string().contains("version 2"), "{err}");
    assert!(EmbeddingTable::from_bytes(&write_raw(1, 0, 0, &[])).is_err());
    assert!(EmbeddingTable::from_bytes(&good[..10]).is_err());
    let mut trailing = good;
    trailing.push(0);
    assert!(EmbeddingTable::from_bytes(&trailing).is_err());
}

#[test]
fn non_utf8_key_rejected() {
    let mut bytes = write_raw(1, 1, 1, &[("ab", vec![1.0])]);
    bytes[18] = 0xff;
    assert!(matches!(
        EmbeddingTable::from_bytes(&bytes),
        Err(EmbeddingError::Parse { record: Some(0), .. })
    ));
}

#[test]
fn insert_checks_dimension() {
    let mut t = EmbeddingTable::new(3).unwrap();
    let err = t.insert("a/rgb", vec![1.0]).unwrap_err();
    assert!(matches!(err, EmbeddingError::DimMismatch { expected: 3, found: 1, .. }));
}

#[test]
fn file_round_trip_is_bit_exact() {
    let mut t = EmbeddingTable::new(3).unwrap();
    t.insert("z/rgb", vec![f32::MIN_POSITIVE, -0.0, f32::MAX]).unwrap();
    t.insert("a/hf", vec![1e-30, 2.5, -7.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.emb");
    write_embeddings(&t, &path).unwrap();
    let back = load_embeddings(&path).unwrap();
    assert_eq!(back.to_bytes(), t.to_bytes());
    assert_eq!(back.iter().map(|(k, _)| k).collect::<Vec<_>>(), ["z/rgb", "a/hf"]);
}

#[test]
fn class_lookup() {
    let t = cardinal_table();
    let [r, e, h] = t.lookup_class("cardinal").unwrap();
    assert_eq!((r, e, h), (&[1.0f32, 0.0][..], &[0.0f32, 1.0][..], &[0.5f32, 0.5][..]));
    let again = t.lookup_class("cardinal").unwrap();
    assert_eq!(again, [r, e, h]);

    let mut partial = EmbeddingTable::new(2).unwrap();
    partial.insert("cardinal/rgb", vec![1.0, 0.0]).unwrap();
    partial.insert("cardinal/edge", vec![0.0, 1.0]).unwrap();
    let err = partial.lookup_class("cardinal").unwrap_err();
    assert!(err.to_string().contains("cardinal/hf"), "{err}");
    assert_eq!(partial.missing_keys(["cardinal", "jay"]).len(), 4);
    assert!(t.missing_keys(["cardinal"]).is_empty());
}

#[test]
fn prompt_templates() {
    let p = PromptTemplateSet::default();
    assert_eq!(p.prompt(ViewKind::Rgb, "cardinal"), "a photo of a cardinal");
    assert_eq!(p.prompt(ViewKind::Edge, "cardinal"), "an edge enhanced image of a cardinal");
    assert_eq!(p.prompt(ViewKind::Hf, "cardinal"), "a high-frequency enhanced image of a cardinal");
    assert!(PromptTemplateSet::new("a {class}", "b {class}", "c").is_err());
    assert!(PromptTemplateSet::new("{class} {class}", "b {class}", "c {class}").is_err());
    assert!(PromptTemplateSet::new("a {class}", "b {class}", "c {class}").is_ok());
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn embed_rows(tape: &mut Tape, rows: usize, d: usize, rng: &mut ChaCha8Rng) -> [Var; 3] {
    [0, 1, 2].map(|_| tape.constant(vec![rows, d], rand_vec(rng, rows * d, 1.0)).unwrap())
}

#[test]
fn zero_output_layer_gives_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = WeightNet::new(4, 8, &mut rng);
    net.out.weight = Tensor::zeros(&[3, 8]);
    let t: Vec<f32> = (0..4).map(|i| i as f32).collect();
    let w = net.weights(&t, &t, &t, &ViewKind::ALL).unwrap();
    for x in w.as_array() {
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn saturated_bias_does_not_overflow() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = WeightNet::new(4, 8, &mut rng);
    net.out.weight = Tensor::zeros(&[3, 8]);
    net.out.bias = Tensor::vector(vec![1000.0, 0.0, 0.0]).unwrap();
    let t = [0.3f32; 4];
    let w = net.weights(&t, &t, &t, &ViewKind::ALL).unwrap();
    assert!(w.as_array().iter().all(|x| x.is_finite()));
    assert!((w.w_rgb - 1.0).abs() < 1e-12);
    assert!(w.w_edge < 1e-300 && w.w_hf < 1e-300);
}

#[test]
fn weightnet_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = WeightNet::new(5, 6, &mut rng);
        let mut tape = Tape::new();
        let ts = embed_rows(&mut tape, 3, 5, &mut rng);
        let ts_data: Vec<Vec<f64>> = ts.iter().map(|&t| tape.value(t).to_vec()).collect();
        let c = rand_vec(&mut rng, 9, 2.0);
        let errs = param_gradient_errors(
            &net,
            |m, tape| {
                let b = m.bind(tape);
                let ts = [0, 1, 2].map(|i| tape.constant(vec![3, 5], ts_data[i].clone()).unwrap());
                let w = b.forward(tape, ts, &ViewKind::ALL)?;
                let cv = tape.constant(vec![3, 3], c.clone())?;
                let p = tape.mul(w, cv)?;
                Ok((tape.sum(p), b.vars()))
            },
            STEP,
        )
        .unwrap();
        for (name, e) in errs {
            assert!(e < 1e-4, "seed {seed} {name}: {e}");
        }
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = WeightNet::new(4, 8, &mut rng);
    let r = net.weights(&[0.0; 3], &[0.0; 3], &[0.0; 3], &ViewKind::ALL);
    assert!(matches!(r, Err(TensorError::Shape { .. })));
    let r = net.weights(&[0.0; 4], &[0.0; 3], &[0.0; 4], &ViewKind::ALL);
    assert!(matches!(r, Err(TensorError::Shape { .. })));
    assert!(net.weights(&[0.0; 4], &[0.0; 4], &[0.0; 4], &[]).is_err());
}

#[test]
fn inactive_views_are_excluded_from_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = WeightNet::new(3, 5, &mut rng);
    let t = [0.2f32, -0.4, 0.9];
    let full = net.weights(&t, &t, &t, &ViewKind::ALL).unwrap();
    let two = net.weights(&t, &t, &t, &[ViewKind::Rgb, ViewKind::Hf]).unwrap();
    assert_eq!(two.w_edge, 0.0);
    assert!((two.w_rgb + two.w_hf - 1.0).abs() < 1e-12);
    let ratio = full.w_rgb / full.w_hf;
    assert!((two.w_rgb / two.w_hf - ratio).abs() < 1e-12);
    let one = net.weights(&t, &t, &t, &[ViewKind::Rgb]).unwrap();
    assert_eq!(one.as_array(), [1.0, 0.0, 0.0]);
}

fn fuse_values(w: &[f64], feats: &[Vec<f64>]) -> Vec<f64> {
    let mut tape = Tape::new();
    let d = feats[0].len();
    let wv = tape.constant(vec![1, w.len()], w.to_vec()).unwrap();
    let fs: Vec<Var> = feats.iter().map(|f| tape.constant(vec![1, d], f.clone()).unwrap()).collect();
    let out = fuse_features(&mut tape, wv, &fs).unwrap();
    tape.value(out).to_vec()
}

#[test]
fn fusion_examples() {
    let f = vec![vec![1.5, -2.0, 7.0], vec![9.0, 9.0, 9.0], vec![-3.0, 0.25, 1.0]];
    assert_eq!(fuse_values(&[1.0, 0.0, 0.0], &f), f[0]);
    assert_eq!(fuse_values(&[0.0, 0.0, 1.0], &f), f[2]);
    let same = vec![vec![0.3, -1.2]; 3];
    let out = fuse_values(&[1.0 / 3.0; 3], &same);
    for (o, s) in out.iter().zip(&same[0]) {
        assert!((o - s).abs() < 1e-15);
    }
    let out = fuse_values(&[0.2, 0.3, 0.5], &[vec![1.0], vec![2.0], vec![3.0]]);
    assert!((out[0] - 2.3).abs() < 1e-12);
}

#[test]
fn fusion_shape_errors() {
    let mut tape = Tape::new();
    let w = tape.constant(vec![1, 3], vec![0.2, 0.3, 0.5]).unwrap();
    let a = tape.constant(vec![1, 2], vec![1.0, 2.0]).unwrap();
    let b = tape.constant(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    assert!(fuse_features(&mut tape, w, &[a, a, b]).is_err());
    assert!(fuse_features(&mut tape, w, &[a, a]).is_err());
    assert!(fuse_features(&mut tape, w, &[]).is_err());
}

#[test]
fn fused_gradients_reach_weights_and_features() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let net = WeightNet::new(3, 4, &mut rng);
        let feats: Vec<Tensor> = (0..3)
            .map(|_| Tensor::new(vec![2, 4], rand_vec(&mut rng, 8, 1.0)).unwrap().with_grad())
            .collect();
        let emb: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 6, 1.0)).collect();
        let c = rand_vec(&mut rng, 8, 1.0);

        #[derive(Clone)]
        struct Joint(WeightNet, Vec<Tensor>);
        impl Module for Joint {
            fn named_params(&self) -> Vec<(String, &Tensor)> {
                let mut p = self.0.named_params();
                p.extend(self.1.iter().enumerate().map(|(i, t)| (format!("f{i}"), t)));
                p
            }
            fn params_mut(&mut self) -> Vec<&mut Tensor> {
                let mut p = self.0.params_mut();
                p.extend(self.1.iter_mut());
                p
            }
        }
        let errs = param_gradient_errors(
            &Joint(net, feats),
            |m, tape| {
                let b = m.0.bind(tape);
                let ts = [0, 1, 2].map(|i| tape.constant(vec![2, 3], emb[i].clone()).unwrap());
                let w = b.forward(tape, ts, &ViewKind::ALL)?;
                let fs: Vec<Var> = m.1.iter().map(|f| tape.leaf(f)).collect();
                let fused = fuse_features(tape, w, &fs)?;
                let cv = tape.constant(vec![2, 4], c.clone())?;
                let p = tape.mul(fused, cv)?;
                let mut vars = b.vars();
                vars.extend(fs);
                Ok((tape.sum(p), vars))
            },
            STEP,
        )
        .unwrap();
        for (name, e) in errs {
            assert!(e < 1e-4, "seed {seed} {name}: {e}");
        }
    }
}

proptest! {
    #[test]
    fn weights_sum_to_one(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = WeightNet::new(4, 6, &mut rng);
        for p in net.params_mut() {
            for x in p.data_mut() {
                *x = rng.random_range(-scale..scale);
            }
        }
        let mut tape = Tape::new();
        let b = net.bind(&mut tape);
        let ts = embed_rows(&mut tape, 5, 4, &mut rng);
        let w = b.forward(&mut tape, ts, &ViewKind::ALL).unwrap();
        for row in tape.value(w).chunks(3) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn fusion_stays_in_convex_hull(
        raw in prop::array::uniform3(0.0f64..1.0),
        f in prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), 1..8),
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let feats: Vec<Vec<f64>> = (0..3).map(|v| f.iter().map(|r| r[v]).collect()).collect();
        let out = fuse_values(&w, &feats);
        for (i, o) in out.iter().enumerate() {
            let lo = f[i].iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
            prop_assert!(*o >= lo - slack && *o <= hi + slack, "{o} not in [{lo}, {hi}]");
        }
    }

    #[test]
    fn fusion_has_no_hidden_view_order(seed in any::<u64>(), perm_idx in 0usize..6) {
        // Permuting the (embedding, feature) triples and the matching input
        // blocks of W1 and rows of W2/b2 leaves the fused feature unchanged.
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = PERMS[perm_idx];
        let (d, h) = (3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = WeightNet::new(d, h, &mut rng);
        let emb: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, d, 1.0)).collect();
        let feats: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 4, 1.0)).collect();

        let mut pnet = net.clone();
        let w1 = net.hidden.weight.data();
        let pw1 = pnet.hidden.weight.data_mut();
        for r in 0..h {
            for (slot, &src) in perm.iter().enumerate() {
                for k in 0..d {
                    pw1[r * 3 * d + slot * d + k] = w1[r * 3 * d + src * d + k];
                }
            }
        }
        for (slot, &src) in perm.iter().enumerate() {
            for k in 0..h {
                pnet.out.weight.data_mut()[slot * h + k] = net.out.weight.data()[src * h + k];
            }
            pnet.out.bias.data_mut()[slot] = net.out.bias.data()[src];
        }

        let run = |net: &WeightNet, order: [usize; 3]| {
            let mut tape = Tape::new();
            let b = net.bind(&mut tape);
            let ts = order.map(|i| tape.constant(vec![1, d], emb[i].clone()).unwrap());
            let w = b.forward(&mut tape, ts, &ViewKind::ALL).unwrap();
            let fs: Vec<Var> = order.iter().map(|&i| tape.constant(vec![1, 4], feats[i].clone()).unwrap()).collect();
            let out = fuse_features(&mut tape, w, &fs).unwrap();
            tape.value(out).to_vec()
        };
        let base = run(&net, [0, 1, 2]);
        let permuted = run(&pnet, perm);
        for (a, b) in base.iter().zip(&permuted) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
