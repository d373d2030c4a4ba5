//! Synthetic domain-shift generators and the embedding CSV format.
//!
//! CSV layout: header `f0,f1,...,f{d-1},label,domain`, one sample per row,
//! `label` an integer (`-1` = unknown, target rows only) and `domain` one of
//! `s` or `t`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DcpError, Result};
use crate::tensor::Tensor;

/// Radius of the circle holding the blob class means.
pub const BLOB_RADIUS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "s")]
    Source,
    #[serde(rename = "t")]
    Target,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::Source => "s",
            Domain::Target => "t",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "s" => Some(Domain::Source),
            "t" => Some(Domain::Target),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Samples of one domain. Target labels are only reachable through
/// [`LabeledDataset::evaluation_labels`].
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    x: Tensor,
    y: Vec<i64>,
    domain: Domain,
    name: String,
}

impl LabeledDataset {
    pub fn new(x: Tensor, y: Vec<i64>, domain: Domain, name: impl Into<String>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(DcpError::Schema(format!(
                "{} labels for {} samples",
                y.len(),
                x.rows()
            )));
        }
        if let Some((row, &l)) = y.iter().enumerate().find(|(_, &l)| l < -1) {
            return Err(DcpError::Schema(format!("row {row}: invalid label {l}")));
        }
        if domain == Domain::Source {
            if let Some(row) = y.iter().position(|&l| l == -1) {
                return Err(DcpError::Schema(format!(
                    "row {row}: source samples must be labelled"
                )));
            }
        }
        Ok(Self {
            x,
            y,
            domain,
            name: name.into(),
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Labels usable for training: source labels, or `None` for target data.
    pub fn training_labels(&self) -> Option<&[i64]> {
        (self.domain == Domain::Source).then_some(self.y.as_slice())
    }

    /// All labels, including target ground truth. For scoring only.
    pub fn evaluation_labels(&self) -> &[i64] {
        &self.y
    }

    /// Number of classes implied by the largest label.
    pub fn num_classes(&self) -> usize {
        self.y.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }
}

/// Parameters of the rotated-and-translated blob benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    /// Rotation of the target in the first two coordinates, in degrees.
    pub rotation: f64,
    /// Target offset; missing trailing coordinates are zero.
    pub translation: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DcpError::InvalidInput(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.dim < 2 {
            return bad(format!("need dimension >= 2, got {}", self.dim));
        }
        if self.n_per_class == 0 {
            return bad("n_per_class must be positive".into());
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma <= 0.0 {
            return bad(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        if self.translation.len() > self.dim {
            return bad(format!(
                "translation has {} coordinates for dimension {}",
                self.translation.len(),
                self.dim
            ));
        }
        if !self.rotation.is_finite() || self.translation.iter().any(|v| !v.is_finite()) {
            return bad("rotation and translation must be finite".into());
        }
        Ok(())
    }

    /// Class means evenly spaced on a circle of radius [`BLOB_RADIUS`].
    pub fn class_means(&self) -> Tensor {
        let mut m = Tensor::zeros(self.classes, self.dim);
        for k in 0..self.classes {
            let a = 2.0 * PI * k as f64 / self.classes as f64;
            m.set(k, 0, BLOB_RADIUS * a.cos());
            m.set(k, 1, BLOB_RADIUS * a.sin());
        }
        m
    }
}

fn rotate_xy(x: &mut Tensor, degrees: f64, center: (f64, f64)) {
    let (s, c) = degrees.to_radians().sin_cos();
    for r in 0..x.rows() {
        let (px, py) = (x.get(r, 0) - center.0, x.get(r, 1) - center.1);
        x.set(r, 0, c * px - s * py + center.0);
        x.set(r, 1, s * px + c * py + center.1);
    }
}

fn domain_rng(seed: u64, domain: Domain) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match domain {
        Domain::Source => 0,
        Domain::Target => 1,
    });
    rng
}

fn sample_blobs(spec: &ShiftSpec, rng: &mut ChaCha8Rng) -> (Tensor, Vec<i64>) {
    let means = spec.class_means();
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let n = spec.classes * spec.n_per_class;
    let mut x = Tensor::zeros(n, spec.dim);
    let mut y = Vec::with_capacity(n);
    for k in 0..spec.classes {
        for i in 0..spec.n_per_class {
            let r = k * spec.n_per_class + i;
            for c in 0..spec.dim {
                x.set(r, c, means.get(k, c) + noise.sample(rng));
            }
            y.push(k as i64);
        }
    }
    (x, y)
}

/// Gaussian blobs; the target is freshly sampled, rotated about the origin
/// and then translated.
pub fn gen_blobs(spec: &ShiftSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let (xs, ys) = sample_blobs(spec, &mut domain_rng(spec.seed, Domain::Source));
    let (mut xt, yt) = sample_blobs(spec, &mut domain_rng(spec.seed, Domain::Target));
    rotate_xy(&mut xt, spec.rotation, (0.0, 0.0));
    for r in 0..xt.rows() {
        for (c, off) in spec.translation.iter().enumerate() {
            xt.set(r, c, xt.get(r, c) + off);
        }
    }
    Ok((
        LabeledDataset::new(xs, ys, Domain::Source, "blobs-source")?,
        LabeledDataset::new(xt, yt, Domain::Target, "blobs-target")?,
    ))
}

fn sample_moons(n_per_class: usize, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> (Tensor, Vec<i64>) {
    let mut x = Tensor::zeros(2 * n_per_class, 2);
    let mut y = Vec::with_capacity(2 * n_per_class);
    for k in 0..2 {
        for i in 0..n_per_class {
            let t = rng.random_range(0.0..PI);
            let (px, py) = if k == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let r = k * n_per_class + i;
            x.set(r, 0, px + noise.sample(rng));
            x.set(r, 1, py + noise.sample(rng));
            y.push(k as i64);
        }
    }
    (x, y)
}

/// Interleaved half circles; the target is rotated about its own centroid.
pub fn gen_two_moons_shift(
    n_per_class: usize,
    rotation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if n_per_class == 0 {
        return Err(DcpError::InvalidInput("n_per_class must be positive".into()));
    }
    let noise = Normal::new(0.0, noise_sigma)
        .ok()
        .filter(|_| noise_sigma > 0.0)
        .ok_or_else(|| DcpError::InvalidInput(format!("noise_sigma must be positive, got {noise_sigma}")))?;
    let (xs, ys) = sample_moons(n_per_class, &noise, &mut domain_rng(seed, Domain::Source));
    let (mut xt, yt) = sample_moons(n_per_class, &noise, &mut domain_rng(seed, Domain::Target));
    let n = xt.rows() as f64;
    let center = (
        (0..xt.rows()).map(|r| xt.get(r, 0)).sum::<f64>() / n,
        (0..xt.rows()).map(|r| xt.get(r, 1)).sum::<f64>() / n,
    );
    rotate_xy(&mut xt, rotation, center);
    Ok((
        LabeledDataset::new(xs, ys, Domain::Source, "moons-source")?,
        LabeledDataset::new(xt, yt, Domain::Target, "moons-target")?,
    ))
}

/// Reads an embedding CSV. All rows must belong to one domain.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_embeddings(file, name)
}

pub fn read_embeddings<R: Read>(reader: R, name: impl Into<String>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let width = header.len();
    if width < 3 {
        return Err(DcpError::Schema(format!(
            "header needs f0..f{{d-1}},label,domain; got {width} columns"
        )));
    }
    let d = width - 2;
    for (i, col) in header.iter().enumerate().take(d) {
        if col != format!("f{i}") {
            return Err(DcpError::Schema(format!("column {i} is {col:?}, expected \"f{i}\"")));
        }
    }
    if &header[d] != "label" || &header[d + 1] != "domain" {
        return Err(DcpError::Schema("the last two columns must be label,domain".into()));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut domain: Option<Domain> = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(DcpError::Schema(format!(
                "line {line}: {} fields, header has {width}",
                record.len()
            )));
        }
        for field in record.iter().take(d) {
            let v: f64 = field.trim().parse().map_err(|_| DcpError::Parse {
                line,
                msg: format!("invalid number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(DcpError::Parse {
                    line,
                    msg: format!("non-finite feature {field:?}"),
                });
            }
            data.push(v);
        }
        let label: i64 = record[d].trim().parse().map_err(|_| DcpError::Parse {
            line,
            msg: format!("invalid label {:?}", &record[d]),
        })?;
        let dom = Domain::parse(record[d + 1].trim()).ok_or_else(|| DcpError::Parse {
            line,
            msg: format!("domain must be s or t, got {:?}", &record[d + 1]),
        })?;
        match domain {
            None => domain = Some(dom),
            Some(prev) if prev != dom => {
                return Err(DcpError::Schema(format!(
                    "line {line}: mixed domains in one file ({prev} then {dom})"
                )))
            }
            _ => {}
        }
        if label == -1 && dom == Domain::Source {
            return Err(DcpError::Schema(format!(
                "line {line}: label -1 is only allowed for target rows"
            )));
        }
        if label < -1 {
            return Err(DcpError::Schema(format!("line {line}: invalid label {label}")));
        }
        labels.push(label);
    }
    let domain = domain.ok_or_else(|| DcpError::EmptyInput("embedding file has no rows".into()))?;
    let x = Tensor::new(labels.len(), d, data)?;
    LabeledDataset::new(x, labels, domain, name)
}

pub fn save_embeddings(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_embeddings(ds, file)
}

pub fn write_embeddings<W: Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<String> = (0..ds.dim()).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut row: Vec<String> = ds.x.row(r).iter().map(|v| v.to_string()).collect();
        row.push(ds.y[r].to_string());
        row.push(ds.domain.tag().into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
