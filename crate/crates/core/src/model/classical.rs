use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability distribution over `0..len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates nonnegativity and normalization. Entries in `[-1e-15, 0)` are
    /// clamped to zero; anything more negative is rejected.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("probability vector", "empty alphabet"));
        }
        let mut entries = entries;
        for (i, p) in entries.iter_mut().enumerate() {
            if !p.is_finite() || *p < -1e-15 {
                return Err(Error::invalid(
                    "probability vector",
                    format!("entry {i} is {p}"),
                ));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(
                "probability vector",
                format!("entries sum to {total}"),
            ));
        }
        Ok(ProbVector(entries))
    }

    /// Divides by the total mass. Fails on negative entries or zero mass.
    pub fn normalized(entries: Vec<f64>) -> Result<Self> {
        let total: f64 = entries.iter().sum();
        if !(total > 0.0) || entries.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid(
                "probability vector",
                "cannot normalize vector with negative entries or zero mass",
            ));
        }
        Ok(ProbVector(entries.into_iter().map(|p| p / total).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        ProbVector(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        ProbVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    /// Kronecker product; index `i * other.len() + j`.
    pub fn tensor(&self, other: &ProbVector) -> ProbVector {
        let mut out = Vec::with_capacity(self.len() * other.len());
        for &a in &self.0 {
            for &b in &other.0 {
                out.push(a * b);
            }
        }
        ProbVector(out)
    }

    /// Convex combination `Σ w_k v_k`.
    pub fn mixture(weights: &[f64], vectors: &[ProbVector]) -> Result<ProbVector> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::invalid("mixture", "no components"))?;
        if weights.len() != vectors.len() {
            return Err(Error::dims(vectors.len(), weights.len()));
        }
        let mut out = vec![0.0; first.len()];
        for (w, v) in weights.iter().zip(vectors) {
            if v.len() != first.len() {
                return Err(Error::dims(first.len(), v.len()));
            }
            for (o, p) in out.iter_mut().zip(v.iter()) {
                *o += w * p;
            }
        }
        ProbVector::normalized(out)
    }

    /// Total-variation distance.
    pub fn total_variation(&self, other: &ProbVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::dims(self.len(), other.len()));
        }
        Ok(0.5 * self.iter().zip(other.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.0
    }
}

/// A row-stochastic matrix: `rows[x][y] = W(y|x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ClassicalChannel {
    rows: Vec<ProbVector>,
}

impl ClassicalChannel {
    pub fn new(rows: Vec<ProbVector>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("classical channel", "no input symbols"))?;
        let out = first.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != out) {
            return Err(Error::dims(out, bad.len()));
        }
        Ok(ClassicalChannel { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(ProbVector::new).collect::<Result<_>>()?)
    }

    pub fn identity(n: usize) -> Self {
        ClassicalChannel {
            rows: (0..n).map(|i| ProbVector::point(n, i)).collect(),
        }
    }

    /// Constant channel emitting `p` on every one of `input_size` inputs.
    pub fn replacer(p: &ProbVector, input_size: usize) -> Self {
        ClassicalChannel {
            rows: vec![p.clone(); input_size],
        }
    }

    pub fn input_size(&self) -> usize {
        self.rows.len()
    }

    pub fn output_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, x: usize) -> &ProbVector {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[ProbVector] {
        &self.rows
    }

    /// W(y|x).
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x].get(y)
    }

    pub fn apply(&self, input: &ProbVector) -> Result<ProbVector> {
        if input.len() != self.input_size() {
            return Err(Error::dims(self.input_size(), input.len()));
        }
        let mut out = vec![0.0; self.output_size()];
        for (px, row) in input.iter().zip(&self.rows) {
            if px == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row.iter()) {
                *o += px * w;
            }
        }
        ProbVector::normalized(out)
    }

    pub fn tensor(&self, other: &ClassicalChannel) -> ClassicalChannel {
        let mut rows = Vec::with_capacity(self.input_size() * other.input_size());
        for a in &self.rows {
            for b in &other.rows {
                rows.push(a.tensor(b));
            }
        }
        ClassicalChannel { rows }
    }

    pub fn tensor_power(&self, n: usize) -> ClassicalChannel {
        let mut out = self.clone();
        for _ in 1..n.max(1) {
            out = out.tensor(self);
        }
        out
    }

    /// Convex combination of channels of equal shape.
    pub fn mixture(weights: &[f64], channels: &[ClassicalChannel]) -> Result<ClassicalChannel> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("mixture", "no components"))?;
        for ch in channels {
            if ch.input_size() != first.input_size() {
                return Err(Error::dims(first.input_size(), ch.input_size()));
            }
        }
        let rows = (0..first.input_size())
            .map(|x| {
                let comps: Vec<ProbVector> = channels.iter().map(|c| c.row(x).clone()).collect();
                ProbVector::mixture(weights, &comps)
            })
            .collect::<Result<_>>()?;
        Ok(ClassicalChannel { rows })
    }

    /// Largest total-variation distance between corresponding rows.
    pub fn row_distance(&self, other: &ClassicalChannel) -> Result<f64> {
        if self.input_size() != other.input_size() {
            return Err(Error::dims(self.input_size(), other.input_size()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            worst = worst.max(a.total_variation(b)?);
        }
        Ok(worst)
    }
}

impl TryFrom<Vec<Vec<f64>>> for ClassicalChannel {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ClassicalChannel::from_rows(rows)
    }
}

impl From<ClassicalChannel> for Vec<Vec<f64>> {
    fn from(ch: ClassicalChannel) -> Vec<Vec<f64>> {
        ch.rows.into_iter().map(Vec::from).collect()
    }
}
