//! Regenerates the checked-in pseudo embeddings and the fuzz corpus seeds.
//!
//! Run from the workspace root: `cargo run -p tmkd --example gen_fixtures`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tmkd::models::{Checkpoint, MlpNet};
use tmkd::textguide::{embedding_key, EmbeddingTable, PromptTemplateSet};
use tmkd::train::{generate, SyntheticSpec};
use tmkd::viewgen::{build_views, ppm, sidecar, RgbImage, ViewGenConfig, ViewKind};

const DIM: usize = 64;
const SEED: u64 = 0;

/// Unit-norm vector drawn from SHA-256 of `(seed, prompt, index)`.
fn pseudo_embedding(prompt: &str, seed: u64, dim: usize) -> Vec<f32> {
    let raw: Vec<f64> = (0..dim as u32)
        .map(|i| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(prompt.as_bytes());
            h.update(i.to_le_bytes());
            let d = h.finalize();
            let u = u64::from_le_bytes(d[..8].try_into().unwrap()) >> 11;
            2.0 * (u as f64 / (1u64 << 53) as f64) - 1.0
        })
        .collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| (v / norm) as f32).collect()
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let templates = PromptTemplateSet::default();
    let spec = SyntheticSpec {
        n_classes: tmkd::train::synth::MAX_CLASSES,
        ..SyntheticSpec::default()
    };
    let mut table = EmbeddingTable::new(DIM).unwrap();
    for class in spec.class_names() {
        for view in ViewKind::ALL {
            let prompt = templates.prompt(view, &class.replace('_', " "));
            table
                .insert(embedding_key(&class, view), pseudo_embedding(&prompt, SEED, DIM))
                .unwrap();
        }
    }
    let fixtures = root.join("tests/fixtures");
    fs::create_dir_all(&fixtures).unwrap();
    table.save(fixtures.join("synth_pseudo64.emb")).unwrap();

    let corpus = root.join("fuzz/corpus");
    let seed = |target: &str, name: &str, bytes: &[u8]| {
        let dir = corpus.join(target);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join(name), bytes).unwrap();
    };

    let mut small = EmbeddingTable::new(4).unwrap();
    for view in ViewKind::ALL {
        small
            .insert(embedding_key("cat", view), pseudo_embedding(view.as_str(), SEED, 4))
            .unwrap();
    }
    seed("embeddings_decode", "three_records", &small.to_bytes());
    seed("embeddings_decode", "empty_table", &EmbeddingTable::new(2).unwrap().to_bytes());

    let ds = generate(&SyntheticSpec {
        n_classes: 2,
        samples_per_class: 5,
        image_size: 8,
        seed: 1,
    })
    .unwrap();
    let img = &ds.samples[0].image;
    seed("ppm_decode", "synth_8x8", &ppm::encode(img));
    seed("ppm_decode", "with_comment", b"P6\n# c\n2 1\n255\n\x00\x01\x02\x03\x04\x05");
    let tiny = RgbImage::new(1, 1, vec![9, 8, 7]).unwrap();
    seed("ppm_decode", "one_pixel", &ppm::encode(&tiny));

    let views = build_views(img, &ViewGenConfig::default()).unwrap();
    seed("views_sidecar_decode", "synth_8x8", &sidecar::encode(&views));

    let net = MlpNet::new(tmkd::models::Role::Student, 3, &[2], 2, &mut ChaCha8Rng::seed_from_u64(0));
    seed("checkpoint_decode", "tiny_student", &Checkpoint::from_module(&net).to_bytes());

    seed(
        "config_parse",
        "basic",
        b"# run\nseed = 3\ntrain.lr = 0.01\ntrain.use_edge_view = false\ntrain.decay_epochs = [1, 2]\n",
    );
    println!("wrote {} and fuzz seeds under {}", fixtures.display(), corpus.display());
}
