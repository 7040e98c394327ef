use super::synth::{Dataset, Split};
use super::TrainError;
use crate::numcore::Tensor;
use crate::viewgen::{build_views, ViewGenConfig, ViewKind, ViewTriplet};

/// Flattened float views of every sample, ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub classes: Vec<String>,
    pub d_in: usize,
    /// rgb, edge and hf rows, each `n × d_in`, row-major.
    pub views: [Vec<f64>; 3],
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl PreparedData {
    pub fn from_triplets(
        classes: Vec<String>,
        items: impl IntoIterator<Item = (ViewTriplet, usize, Split)>,
    ) -> Result<Self, TrainError> {
        let mut data = Self {
            classes,
            d_in: 0,
            views: Default::default(),
            labels: Vec::new(),
            train: Vec::new(),
            test: Vec::new(),
        };
        for (i, (t, label, split)) in items.into_iter().enumerate() {
            let d = t.rgb.values.len();
            if i == 0 {
                data.d_in = d;
            } else if d != data.d_in {
                return Err(TrainError::Contract(format!(
                    "sample {i} has {d} values per view, expected {}",
                    data.d_in
                )));
            }
            if label >= data.classes.len() {
                return Err(TrainError::Contract(format!("sample {i} has label {label} outside the class list")));
            }
            for kind in ViewKind::ALL {
                data.views[kind as usize].extend_from_slice(&t.get(kind).values);
            }
            data.labels.push(label);
            match split {
                Split::Train => data.train.push(i),
                Split::Test => data.test.push(i),
            }
        }
        if data.train.is_empty() || data.test.is_empty() {
            return Err(TrainError::Contract("both the train and the test split need samples".into()));
        }
        Ok(data)
    }

    /// Builds the three views of every image in memory.
    pub fn from_dataset(ds: &Dataset, cfg: &ViewGenConfig) -> Result<Self, TrainError> {
        let mut items = Vec::with_capacity(ds.samples.len());
        for s in &ds.samples {
            items.push((build_views(&s.image, cfg)?, s.label, s.split));
        }
        Self::from_triplets(ds.classes.clone(), items)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Rows `idx` of one view as a `[idx.len(), d_in]` tensor.
    pub fn rows(&self, view: ViewKind, idx: &[usize]) -> Tensor {
        gather_rows(&self.views[view as usize], self.d_in, idx)
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Rows `idx` of a row-major `n × width` matrix.
pub(crate) fn gather_rows(src: &[f64], width: usize, idx: &[usize]) -> Tensor {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
    Tensor::new(vec![idx.len(), width], out).unwrap()
}
