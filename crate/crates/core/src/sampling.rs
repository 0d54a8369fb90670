//! Monte Carlo output sampling.
//!
//! Output `k` is `f(x_k, w_k)` where the pair `(x_k, w_k)` is drawn fresh for
//! every `k` from streams keyed by `(seed, k)`. The outputs are therefore
//! i.i.d. and independent of how the work is split across threads.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::input::InputDistribution;
use crate::model::BnnModel;
use crate::perf::PerfFn;
use crate::risk::mean;
use crate::rng::{derive_seed, stream};

/// N output points of dimension n, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputSamples {
    points: Vec<f64>,
    dim: usize,
    pub seed: u64,
    pub model_id: String,
    pub dist_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub seed: u64,
    pub n_samples: usize,
    pub dim: usize,
    pub model_id: String,
    pub dist_id: String,
}

impl OutputSamples {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || dim == 0 {
            return Err(Error::OutOfRange("need at least one non-empty sample".into()));
        }
        let mut points = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.len())?;
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::OutOfRange("non-finite output sample".into()));
            }
            points.extend_from_slice(r);
        }
        Ok(Self {
            points,
            dim,
            seed: 0,
            model_id: String::new(),
            dist_id: String::new(),
        })
    }

    pub fn from_flat(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::OutOfRange(format!(
                "{} values do not form rows of length {dim}",
                points.len()
            )));
        }
        Ok(Self {
            points,
            dim,
            seed: 0,
            model_id: String::new(),
            dist_id: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn metadata(&self) -> SampleMetadata {
        SampleMetadata {
            seed: self.seed,
            n_samples: self.len(),
            dim: self.dim,
            model_id: self.model_id.clone(),
            dist_id: self.dist_id.clone(),
        }
    }

    /// Keeps the first `n` rows.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.points.truncate(n.max(1).min(self.len()) * self.dim);
        out
    }

    /// Writes one row per sample with columns `y0..y{n-1}` and, when `h` is
    /// given, a final `h` column.
    pub fn write_csv(&self, path: impl AsRef<Path>, h: Option<&PerfFn>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("y{i}")).collect();
        if h.is_some() {
            header.push("h".into());
        }
        w.write_record(&header)?;
        for row in self.rows() {
            let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
            if let Some(h) = h {
                rec.push(h.eval(row)?.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv); an `h` column is
    /// skipped.
    pub fn read_csv(path: impl AsRef<Path>, meta: &SampleMetadata) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for field in rec.iter().take(meta.dim) {
                points.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::MalformedFile(e.to_string()))?,
                );
            }
        }
        let mut s = Self::from_flat(points, meta.dim)?;
        if s.len() != meta.n_samples {
            return Err(Error::MalformedFile(format!(
                "metadata says {} samples, file has {}",
                meta.n_samples,
                s.len()
            )));
        }
        s.seed = meta.seed;
        s.model_id = meta.model_id.clone();
        s.dist_id = meta.dist_id.clone();
        Ok(s)
    }

    pub fn write_metadata(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(serde_json::to_string_pretty(&self.metadata())?.as_bytes())?;
        Ok(())
    }
}

/// Equal-weight Dirac mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    points: Vec<f64>,
    dim: usize,
}

impl EmpiricalDistribution {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::OutOfRange("empirical distribution needs N >= 1 points".into()));
        }
        Ok(Self { points, dim })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = OutputSamples::from_rows(rows)?;
        Ok(Self::from(&s))
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            points: self.points.iter().map(|v| f(*v)).collect(),
            dim: self.dim,
        }
    }
}

impl From<&OutputSamples> for EmpiricalDistribution {
    fn from(s: &OutputSamples) -> Self {
        Self {
            points: s.points.clone(),
            dim: s.dim,
        }
    }
}

/// Draws `n_samples` i.i.d. outputs of `model` under `dist`.
pub fn collect_outputs(
    model: &BnnModel,
    dist: &InputDistribution,
    n_samples: usize,
    seed: u64,
) -> Result<OutputSamples> {
    if n_samples == 0 {
        return Err(Error::OutOfRange("N must be at least 1".into()));
    }
    dist.validate()?;
    check_dim(model.input_dim(), dist.dim())?;
    let rows: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let w = model.sample_weights(derive_seed(seed, "weights", k));
            let x = dist.sample(&mut stream(seed, "inputs", k));
            model.forward(&w, &x)
        })
        .collect::<Result<_>>()?;
    let mut out = OutputSamples::from_rows(&rows)?;
    out.seed = seed;
    out.model_id = model.fingerprint();
    out.dist_id = dist_fingerprint(dist);
    Ok(out)
}

fn dist_fingerprint(dist: &InputDistribution) -> String {
    let text = serde_json::to_string(dist).unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// `h(y_k)` for every sample.
pub fn perf_samples(samples: &OutputSamples, h: &PerfFn) -> Result<Vec<f64>> {
    check_dim(h.input_dim(), samples.dim())?;
    Ok(samples.rows().map(|y| h.eval_unchecked(y)).collect())
}

/// Empirical mean of `h` over the samples.
pub fn monte_carlo_perf(samples: &OutputSamples, h: &PerfFn) -> Result<f64> {
    Ok(mean(&perf_samples(samples, h)?))
}
