//! On-disk datasets: `classes.txt`, `manifest.csv` and `images/*.ppm`, plus a
//! `views/` cache of `.views.f64` sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::data::PreparedData;
use super::synth::{Dataset, Sample, Split};
use super::TrainError;
use crate::viewgen::{build_views, ppm, sidecar, ViewGenConfig};

pub const MANIFEST_HEADER: &str = "file,label,split";

fn bad(path: &Path, detail: impl Into<String>) -> TrainError {
    TrainError::Dataset {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn image_name(i: usize) -> String {
    format!("images/{i:05}.ppm")
}

/// Writes `ds` under `dir`, replacing any previous manifest.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<(), TrainError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    for (i, s) in ds.samples.iter().enumerate() {
        let name = image_name(i);
        ppm::write_ppm(&s.image, dir.join(&name))?;
        writeln!(manifest, "{name},{},{}", s.label, s.split.as_str()).unwrap();
    }
    let mut classes = ds.classes.join("\n");
    classes.push('\n');
    fs::write(dir.join("classes.txt"), classes)?;
    fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

struct Entry {
    file: String,
    label: usize,
    split: Split,
}

fn read_index(dir: &Path) -> Result<(Vec<String>, Vec<Entry>), TrainError> {
    let classes_path = dir.join("classes.txt");
    let classes: Vec<String> = fs::read_to_string(&classes_path)
        .map_err(|e| bad(&classes_path, e.to_string()))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().to_string())
        .collect();
    if classes.is_empty() {
        return Err(bad(&classes_path, "no classes"));
    }
    let manifest_path = dir.join("manifest.csv");
    let text = fs::read_to_string(&manifest_path).map_err(|e| bad(&manifest_path, e.to_string()))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(bad(&manifest_path, format!("first line must be `{MANIFEST_HEADER}`")));
    }
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let row = n + 2;
        let fields: Vec<&str> = line.split(',').collect();
        let [file, label, split] = fields[..] else {
            return Err(bad(&manifest_path, format!("line {row}: expected 3 fields")));
        };
        let label: usize = label
            .parse()
            .ok()
            .filter(|&l| l < classes.len())
            .ok_or_else(|| bad(&manifest_path, format!("line {row}: bad label `{label}`")))?;
        let split = match split {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(bad(&manifest_path, format!("line {row}: bad split `{other}`"))),
        };
        if file.contains("..") || Path::new(file).is_absolute() {
            return Err(bad(&manifest_path, format!("line {row}: path `{file}` leaves the dataset")));
        }
        entries.push(Entry {
            file: file.to_string(),
            label,
            split,
        });
    }
    Ok((classes, entries))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset, TrainError> {
    let dir = dir.as_ref();
    let (classes, entries) = read_index(dir)?;
    let mut samples = Vec::with_capacity(entries.len());
    for e in entries {
        samples.push(Sample {
            image: ppm::read_ppm(dir.join(&e.file))?,
            label: e.label,
            split: e.split,
        });
    }
    Ok(Dataset { classes, samples })
}

fn views_fingerprint(cfg: &ViewGenConfig) -> String {
    format!(
        "canny_low = {}\ncanny_high = {}\nalpha_e = {}\nalpha_hf = {}\nsigma = {}\nkernel = {}\n",
        cfg.canny_low, cfg.canny_high, cfg.alpha_e, cfg.alpha_hf, cfg.gaussian_sigma, cfg.gaussian_kernel
    )
}

/// Loads the dataset at `dir` through the `views/` sidecar cache, building missing sidecars.
///
/// `views.conf` records the parameters the cache was built with; a mismatch is an error.
pub fn prepare_dir(dir: impl AsRef<Path>, cfg: &ViewGenConfig) -> Result<PreparedData, TrainError> {
    let dir = dir.as_ref();
    cfg.validate()?;
    let (classes, entries) = read_index(dir)?;
    let stamp = dir.join("views.conf");
    let want = views_fingerprint(cfg);
    match fs::read_to_string(&stamp) {
        Ok(have) if have != want => {
            return Err(bad(
                &stamp,
                "cached views were built with different view parameters; delete views/ and views.conf",
            ))
        }
        Ok(_) => {}
        Err(_) => {
            fs::create_dir_all(dir.join("views"))?;
            fs::write(&stamp, &want)?;
        }
    }
    let mut items = Vec::with_capacity(entries.len());
    for e in entries {
        let stem = Path::new(&e.file)
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| bad(dir, format!("`{}` has no file name", e.file)))?;
        let cached = dir.join("views").join(format!("{stem}.views.f64"));
        let views = if cached.exists() {
            sidecar::read_views(&cached)?
        } else {
            let v = build_views(&ppm::read_ppm(dir.join(&e.file))?, cfg)?;
            sidecar::write_views(&v, &cached)?;
            v
        };
        items.push((views, e.label, e.split));
    }
    PreparedData::from_triplets(classes, items)
}
