//! Datasets: synthetic generators, small-file loaders and seeded batching.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Checkpoint, LayerSpec, Metadata, NetworkSpec};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Input("dataset must hold at least one sample".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Input(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Dataset { inputs, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Shape of one sample.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Inputs and labels of the given samples, in the given order.
    pub fn batch(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.inputs.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let (inputs, labels) = self.batch(idx);
        Dataset::new(inputs, labels, self.num_classes)
    }

    /// Seeded random split into `(train, eval)` with `eval_fraction` of the
    /// samples (rounded down) held out.
    pub fn split(&self, eval_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&eval_fraction) {
            return Err(Error::Config(format!("eval fraction {eval_fraction} outside [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_eval = (self.len() as f64 * eval_fraction) as usize;
        let (eval, train) = idx.split_at(n_eval);
        let (mut train, mut eval) = (train.to_vec(), eval.to_vec());
        train.sort_unstable();
        eval.sort_unstable();
        Ok((self.subset(&train)?, self.subset(&eval)?))
    }
}

/// Index batches over `len` samples. Without shuffling the batches follow
/// storage order; the final partial batch is kept.
pub fn batches(len: usize, batch_size: usize, seed: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    if shuffle {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(idx.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::Config("synthetic dataset needs classes, dim and samples".into()));
        }
        if !(self.cluster_separation > 0.0) {
            return Err(Error::Config("cluster separation must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Gaussian blobs around class means placed on a sphere of radius
/// `cluster_separation`. Samples are stored class by class.
pub fn gen_gaussian_clusters(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter().map(|x| x / norm * spec.cluster_separation).collect()
        })
        .collect();
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(m + spec.noise_sigma * z);
            }
            labels.push(class);
        }
    }
    Dataset::new(Tensor::new(vec![n, spec.dim], data)?, labels, spec.num_classes)
}

/// Two-class dataset and hand-built network in which one hidden channel is
/// highly sensitive yet has a batch-mean Taylor term of zero.
pub struct CancellationProbe {
    pub dataset: Dataset,
    pub model: Checkpoint,
    pub designated: usize,
    pub note: &'static str,
}

pub const PROBE_PAIRS: usize = 64;

const PROBE_NOTE: &str = "\
Samples come in mirror pairs (a, +b) with label 0 and (a, -b) with label 1, \
a and b drawn from U[0.5, 1.5]; the first half of the dataset holds every \
label-0 sample. Hidden channels 0 and 1 both read a (always positive) and \
write +1/-1 and -1/+1 into the two logits, so they cancel in the output. \
Channels 2..7 are mirror pairs reading relu(+-s*x1) that make the logit gap \
an odd function of x1. Mirroring flips the sign of dL/dY on channel 0 while \
leaving Y unchanged, so Y*dL/dY sums to zero over each pair while its \
absolute value does not.";

pub fn gen_cancellation_probe(seed: u64) -> Result<CancellationProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(f64, f64)> = (0..PROBE_PAIRS)
        .map(|_| (rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)))
        .collect();
    let mut data = Vec::with_capacity(4 * PROBE_PAIRS);
    let mut labels = Vec::with_capacity(2 * PROBE_PAIRS);
    for (sign, label) in [(1.0, 0), (-1.0, 1)] {
        for &(a, b) in &pairs {
            data.extend([a, sign * b]);
            labels.push(label);
        }
    }
    let dataset = Dataset::new(Tensor::new(vec![2 * PROBE_PAIRS, 2], data)?, labels, 2)?;

    let spec = NetworkSpec {
        input_shape: vec![2],
        layers: vec![
            LayerSpec::Dense { inputs: 2, outputs: 8 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 8, outputs: 2 },
        ],
        target_layer: 0,
    };
    // (input weights, weight into logit 0); logit 1 gets the negation
    let channels: [([f64; 2], f64); 8] = [
        ([1.0, 0.0], 1.0),
        ([1.0, 0.0], -1.0),
        ([0.0, 1.0], 0.5),
        ([0.0, -1.0], -0.5),
        ([0.0, 0.3], 0.3),
        ([0.0, -0.3], -0.3),
        ([0.0, 0.1], 0.2),
        ([0.0, -0.1], -0.2),
    ];
    let w1: Vec<f64> = channels.iter().flat_map(|(w, _)| *w).collect();
    let mut w2 = Vec::with_capacity(16);
    w2.extend(channels.iter().map(|&(_, v)| v));
    w2.extend(channels.iter().map(|&(_, v)| -v));
    let model = Checkpoint::new(
        spec,
        vec![
            Tensor::new(vec![8, 2], w1)?,
            Tensor::zeros(&[8]),
            Tensor::new(vec![2, 8], w2)?,
            Tensor::zeros(&[2]),
        ],
        Metadata { seed, ..Metadata::default() },
    )?;
    Ok(CancellationProbe { dataset, model, designated: 0, note: PROBE_NOTE })
}

/// Rows of `label,feature0,feature1,...`; features become an `N x F` tensor
/// and the class count is one past the largest label.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.into(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        })?;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::FormatLine {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 2 {
            return Err(Error::FormatLine { line, msg: "need a label and at least one feature".into() });
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::FormatLine {
                    line,
                    msg: format!("row has {} fields, expected {w}", rec.len()),
                })
            }
            _ => {}
        }
        let label: usize = rec[0].parse().map_err(|_| Error::FormatLine {
            line,
            msg: format!("bad label {:?}", &rec[0]),
        })?;
        labels.push(label);
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::FormatLine {
                line,
                msg: format!("bad feature {field:?}"),
            })?;
            data.push(v);
        }
    }
    let width = width.ok_or(Error::FormatLine { line: 1, msg: "empty file".into() })?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Tensor::new(vec![labels.len(), width - 1], data)?, labels, classes)
}

/// Inverse of [`load_csv`]; values are written in shortest round-trip form.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for i in 0..ds.len() {
        let mut row = vec![ds.labels[i].to_string()];
        row.extend(ds.inputs.row(i).iter().map(|v| format!("{v:?}")));
        wtr.write_record(&row).map_err(|e| Error::io(path, e.into()))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn idx_read(path: &Path, magic: u32) -> Result<(Vec<usize>, Vec<u8>)> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let word = |off: usize| -> Result<u32> {
        buf.get(off..off + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or(Error::Format { offset: off as u64, msg: "truncated header".into() })
    };
    let found = word(0)?;
    if found != magic {
        return Err(Error::Format {
            offset: 0,
            msg: format!("magic {found:#010x}, expected {magic:#010x}"),
        });
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|d| word(4 + 4 * d).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let n: usize = dims.iter().product();
    if buf.len() != start + n {
        return Err(Error::Format {
            offset: buf.len().min(start + n) as u64,
            msg: format!("payload is {} bytes, header declares {n}", buf.len() - start.min(buf.len())),
        });
    }
    Ok((dims, buf[start..].to_vec()))
}

/// Unsigned-byte IDX image and label files. Pixels are scaled to `[0, 1]`
/// and images become `N x 1 x H x W`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (idims, pixels) = idx_read(images, IDX_IMAGES_MAGIC)?;
    let (ldims, lbytes) = idx_read(labels, IDX_LABELS_MAGIC)?;
    if idims[0] != ldims[0] {
        return Err(Error::Input(format!(
            "{} images but {} labels",
            idims[0], ldims[0]
        )));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let inputs = Tensor::new(vec![idims[0], 1, idims[1], idims[2]], data)?;
    let labels: Vec<usize> = lbytes.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(inputs, labels, classes)
}

/// Writes IDX image/label files; pixel values are rounded from `[0, 1]`.
pub fn write_idx(ds: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let shape = ds.inputs.shape();
    let (h, w) = match shape {
        [_, 1, h, w] => (*h, *w),
        [_, h, w] => (*h, *w),
        _ => return Err(Error::Input(format!("cannot write {shape:?} as IDX images"))),
    };
    let mut img = Vec::new();
    img.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
    for d in [ds.len(), h, w] {
        img.write_all(&(d as u32).to_be_bytes()).unwrap();
    }
    img.extend(ds.inputs.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut lab = Vec::new();
    lab.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
    lab.write_all(&(ds.len() as u32).to_be_bytes()).unwrap();
    for &l in &ds.labels {
        lab.push(u8::try_from(l).map_err(|_| Error::Input(format!("label {l} exceeds a byte")))?);
    }
    fs::write(images, img).map_err(|e| Error::io(images, e))?;
    fs::write(labels, lab).map_err(|e| Error::io(labels, e))
}

/// Isotropic normal draws, used by tests and examples that need raw noise.
pub fn normal_tensor(shape: &[usize], std: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(&mut rng)).collect())
        .expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            num_classes: 3,
            dim: 4,
            samples_per_class: 5,
            cluster_separation: 2.0,
            noise_sigma: 0.5,
            seed: 9,
        }
    }

    #[test]
    fn clusters_are_deterministic() {
        assert_eq!(gen_gaussian_clusters(&small()).unwrap(), gen_gaussian_clusters(&small()).unwrap());
        let other = SyntheticSpec { seed: 10, ..small() };
        assert_ne!(gen_gaussian_clusters(&small()).unwrap(), gen_gaussian_clusters(&other).unwrap());
    }

    #[test]
    fn zero_noise_collapses_each_class() {
        let ds = gen_gaussian_clusters(&SyntheticSpec { noise_sigma: 0.0, ..small() }).unwrap();
        for c in 0..3 {
            let first = ds.inputs().row(c * 5).to_vec();
            for i in 1..5 {
                assert_eq!(ds.inputs().row(c * 5 + i), &first[..]);
            }
            let r: f64 = first.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_gaussian_clusters(&SyntheticSpec { cluster_separation: 0.0, ..small() }).is_err());
        assert!(gen_gaussian_clusters(&SyntheticSpec { noise_sigma: -1.0, ..small() }).is_err());
    }

    #[test]
    fn batch_sizes_and_order() {
        let b = batches(10, 3, 0, false).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert_eq!(b.concat(), (0..10).collect::<Vec<_>>());
        assert!(batches(10, 0, 0, false).is_err());
    }

    #[test]
    fn shuffled_batches_are_permutations() {
        let a = batches(50, 7, 1, true).unwrap().concat();
        let b = batches(50, 7, 1, true).unwrap().concat();
        let c = batches(50, 7, 2, true).unwrap().concat();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = c.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn split_partitions() {
        let ds = gen_gaussian_clusters(&small()).unwrap();
        let (tr, ev) = ds.split(0.2, 4).unwrap();
        assert_eq!(tr.len() + ev.len(), 15);
        assert_eq!(ev.len(), 3);
    }

    #[test]
    fn empty_dataset_rejected() {
        let t = Tensor::zeros(&[1, 2]);
        assert!(matches!(Dataset::new(t, vec![], 2), Err(Error::Input(_))));
    }

    #[test]
    fn probe_layout() {
        let p = gen_cancellation_probe(3).unwrap();
        assert_eq!(p.dataset.len(), 2 * PROBE_PAIRS);
        assert!(p.dataset.labels()[..PROBE_PAIRS].iter().all(|&l| l == 0));
        for i in 0..PROBE_PAIRS {
            let a = p.dataset.inputs().row(i);
            let b = p.dataset.inputs().row(i + PROBE_PAIRS);
            assert_eq!(a[0], b[0]);
            assert_eq!(a[1], -b[1]);
            assert!(a[0] > 0.0);
        }
    }
}
