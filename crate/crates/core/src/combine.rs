//! Label-aware combination of kernel matrices.
//!
//! Given kernels `K_1..K_M` on one labelled sample, the combined similarity
//! is pushed up between points of the same class and down between points of
//! different classes:
//!
//! ```text
//! K* = K̄ + Y · Σ g(differences) · Y,      Y = diag(y)
//! ```
//!
//! where `K̄` is the entrywise mean and every absolute value is taken
//! entrywise. The AV rule uses `Σ_m |K_m − K̄|`. For two kernels the
//! max/min rule (max for equal labels, min otherwise) equals
//! `½(K_1 + K_2) + ½·Y|K_1 − K_2|Y`, which is the pairwise rule with
//! `g = ½|·|`.
//!
//! Off the labelled sample `Y` is unknown; [`combine_test_rows`] either
//! falls back to `K̄` or plugs in provisional labels.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, Provenance};
use crate::matrix::Matrix;

/// Class labels, each `+1` or `-1`. Acts as the diagonal matrix `Y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labels(Vec<i8>);

impl Labels {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
            return Err(Error::InvalidLabel(v as i64, i));
        }
        Ok(Self(values))
    }

    /// Maps `x >= 0` to `+1` and everything else to `-1`.
    pub fn from_signs(values: &[f64]) -> Self {
        Self(values.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        self.0[i] as f64
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn has_both_classes(&self) -> bool {
        self.0.contains(&1) && self.0.contains(&-1)
    }

    pub fn select(&self, indices: &[usize]) -> Labels {
        Labels(indices.iter().map(|&i| self.0[i]).collect())
    }

    pub fn negated(&self) -> Labels {
        Labels(self.0.iter().map(|v| -v).collect())
    }
}

/// The difference-penalty `g` of the multi-kernel rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GFunction {
    /// `Σ_m |K_m − K̄|` (the AV method).
    #[default]
    Abs,
    /// `Σ_{i<j} ½|K_i − K_j|`; for two kernels this is the max/min rule.
    HalfAbs,
    /// Pairwise `½|d|` where `|d| > threshold`, zero otherwise, so kernels
    /// that nearly agree contribute nothing.
    Threshold(f64),
}

impl FromStr for GFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "av" | "abs" => Ok(GFunction::Abs),
            "half_abs" | "maxmin" => Ok(GFunction::HalfAbs),
            _ => {
                if let Some(t) = s.strip_prefix("threshold:") {
                    let t: f64 = t.parse().map_err(|_| Error::invalid(format!("bad threshold `{t}`")))?;
                    if !(t >= 0.0 && t.is_finite()) {
                        return Err(Error::invalid("threshold must be finite and >= 0"));
                    }
                    Ok(GFunction::Threshold(t))
                } else {
                    Err(Error::invalid(format!("unknown combination `{s}`")))
                }
            }
        }
    }
}

impl fmt::Display for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GFunction::Abs => f.write_str("av"),
            GFunction::HalfAbs => f.write_str("half_abs"),
            GFunction::Threshold(t) => write!(f, "threshold:{t}"),
        }
    }
}

/// How combined-kernel rows are formed for points whose label is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestEvalMode {
    /// Use `K̄`, the label-free part of the combination.
    #[default]
    AverageFallback,
    /// Use the full rule with a provisional label in place of the unknown one.
    PredictedLabel,
}

impl FromStr for TestEvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" | "average_fallback" => Ok(TestEvalMode::AverageFallback),
            "pred" | "predicted" | "predicted_label" => Ok(TestEvalMode::PredictedLabel),
            _ => Err(Error::invalid(format!("unknown test evaluation mode `{s}`"))),
        }
    }
}

impl fmt::Display for TestEvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestEvalMode::AverageFallback => "avg",
            TestEvalMode::PredictedLabel => "pred",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CombinerConfig {
    pub g_function: GFunction,
    pub test_eval: TestEvalMode,
}

impl CombinerConfig {
    /// Applies one `key=value` setting: `combine=av|half_abs|threshold:<t>`
    /// or `test_eval=avg|pred`.
    pub fn apply_setting(&mut self, setting: &str) -> Result<()> {
        let (k, v) = setting
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value, got `{setting}`")))?;
        match k.trim() {
            "combine" => self.g_function = v.trim().parse()?,
            "test_eval" => self.test_eval = v.trim().parse()?,
            other => return Err(Error::invalid(format!("unknown combiner key `{other}`"))),
        }
        Ok(())
    }
}

impl FromStr for CombinerConfig {
    type Err = Error;

    /// Parses settings separated by commas or whitespace, e.g.
    /// `combine=av test_eval=pred`.
    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = CombinerConfig::default();
        for part in s.split(|c: char| c == ',' || c.is_whitespace()) {
            if !part.is_empty() {
                cfg.apply_setting(part)?;
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for CombinerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "combine={} test_eval={}", self.g_function, self.test_eval)
    }
}

fn check_sizes(ks: &[&GramMatrix], y: &Labels) -> Result<usize> {
    let n = y.len();
    for k in ks {
        if k.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: k.n(),
            });
        }
    }
    Ok(n)
}

/// Max for equal labels, min for different labels.
pub fn combine_pairwise_maxmin(k1: &GramMatrix, k2: &GramMatrix, y: &Labels) -> Result<GramMatrix> {
    let n = check_sizes(&[k1, k2], y)?;
    Ok(GramMatrix::from_upper_fn(n, Provenance::Combined, |i, j| {
        let (a, b) = (k1.get(i, j), k2.get(i, j));
        if y.sign(i) == y.sign(j) {
            a.max(b)
        } else {
            a.min(b)
        }
    }))
}

/// `½(K1 + K2) + ½·Y|K1 − K2|Y`, entrywise.
pub fn combine_abs_form(k1: &GramMatrix, k2: &GramMatrix, y: &Labels) -> Result<GramMatrix> {
    let n = check_sizes(&[k1, k2], y)?;
    Ok(GramMatrix::from_upper_fn(n, Provenance::Combined, |i, j| {
        let (a, b) = (k1.get(i, j), k2.get(i, j));
        0.5 * (a + b) + 0.5 * y.sign(i) * y.sign(j) * (a - b).abs()
    }))
}

/// Mean computed as an offset from the first value so that equal inputs give
/// back that value exactly.
#[inline]
fn mean_of(values: &[f64]) -> f64 {
    let first = values[0];
    let m = values.len() as f64;
    first + values[1..].iter().map(|v| v - first).sum::<f64>() / m
}

#[inline]
fn correction(values: &[f64], mean: f64, g: GFunction) -> f64 {
    match g {
        GFunction::Abs => values.iter().map(|v| (v - mean).abs()).sum(),
        GFunction::HalfAbs | GFunction::Threshold(_) => {
            let t = match g {
                GFunction::Threshold(t) => t,
                _ => -1.0,
            };
            let mut acc = 0.0;
            for a in 0..values.len() {
                for b in (a + 1)..values.len() {
                    let d = (values[a] - values[b]).abs();
                    if d > t {
                        acc += 0.5 * d;
                    }
                }
            }
            acc
        }
    }
}

/// Entrywise mean of the kernels.
pub fn average_kernel(ks: &[GramMatrix]) -> Result<GramMatrix> {
    let first = ks.first().ok_or(Error::Empty("kernel list"))?;
    let n = first.n();
    for k in ks {
        if k.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: k.n(),
            });
        }
    }
    if ks.len() == 1 {
        return Ok(first.clone());
    }
    Ok(GramMatrix::from_upper_fn(n, Provenance::Combined, |i, j| {
        let vals: Vec<f64> = ks.iter().map(|k| k.get(i, j)).collect();
        mean_of(&vals)
    }))
}

/// `K̄ + Y·Σ g(·)·Y` over all supplied kernels.
///
/// With a single kernel the correction is empty and the kernel is returned
/// unchanged.
pub fn combine_multi(ks: &[GramMatrix], y: &Labels, cfg: &CombinerConfig) -> Result<GramMatrix> {
    if ks.is_empty() {
        return Err(Error::Empty("kernel list"));
    }
    let refs: Vec<&GramMatrix> = ks.iter().collect();
    let n = check_sizes(&refs, y)?;
    if ks.len() == 1 {
        return Ok(ks[0].clone());
    }
    let g = cfg.g_function;
    Ok(GramMatrix::from_upper_fn(n, Provenance::Combined, |i, j| {
        let vals: Vec<f64> = ks.iter().map(|k| k.get(i, j)).collect();
        let mean = mean_of(&vals);
        mean + y.sign(i) * y.sign(j) * correction(&vals, mean, g)
    }))
}

/// Combined-kernel rows for unlabelled points against the training set.
///
/// Every `cross_grams[m]` is `n_test × n_train`. In average mode the result
/// is the entrywise mean; in predicted-label mode entry `(t, i)` is
/// `mean + ŷ_t·y_i·correction`.
pub fn combine_test_rows(
    cross_grams: &[Matrix],
    y_train: &Labels,
    cfg: &CombinerConfig,
    provisional_labels: Option<&Labels>,
) -> Result<Matrix> {
    let first = cross_grams.first().ok_or(Error::Empty("cross-gram list"))?;
    let (m, n) = first.shape();
    if n != y_train.len() {
        return Err(Error::DimensionMismatch {
            expected: y_train.len(),
            got: n,
        });
    }
    for c in cross_grams {
        if c.shape() != (m, n) {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                got: c.nrows() * c.ncols(),
            });
        }
    }
    let provisional = match cfg.test_eval {
        TestEvalMode::AverageFallback => None,
        TestEvalMode::PredictedLabel => {
            let p = provisional_labels.ok_or(Error::MissingProvisionalLabels)?;
            if p.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: p.len(),
                });
            }
            Some(p)
        }
    };
    if cross_grams.len() == 1 {
        return Ok(first.clone());
    }
    let mut vals = vec![0.0; cross_grams.len()];
    Ok(Matrix::from_fn(m, n, |t, i| {
        for (v, c) in vals.iter_mut().zip(cross_grams) {
            *v = c[(t, i)];
        }
        let mean = mean_of(&vals);
        match provisional {
            None => mean,
            Some(p) => mean + p.sign(t) * y_train.sign(i) * correction(&vals, mean, cfg.g_function),
        }
    }))
}

/// Rescaling applied to each kernel before combination so that kernels of
/// very different magnitude are compared as similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    /// `k(x,z) / sqrt(k(x,x)·k(z,z))`, giving unit self-similarity.
    Cosine,
    /// Divide by the mean of the training diagonal.
    Trace,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "cosine" | "cos" => Ok(Normalization::Cosine),
            "trace" => Ok(Normalization::Trace),
            _ => Err(Error::invalid(format!("unknown normalization `{s}`"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::Cosine => "cosine",
            Normalization::Trace => "trace",
        })
    }
}

/// A point with `k(x,x) = 0` sits at the origin of feature space and is
/// treated as orthogonal to everything.
#[inline]
fn cosine(k: f64, dx: f64, dz: f64) -> f64 {
    let denom = (dx * dz).sqrt();
    if denom > 0.0 {
        k / denom
    } else {
        0.0
    }
}

/// Normalization parameters fitted on a training Gram matrix.
#[derive(Debug, Clone)]
pub struct Normalizer {
    mode: Normalization,
    train_diag: Vec<f64>,
    trace_scale: f64,
}

impl Normalizer {
    pub fn fit(g: &GramMatrix, mode: Normalization) -> Result<Self> {
        let train_diag = g.diagonal();
        if mode == Normalization::Cosine {
            if let Some(i) = train_diag.iter().position(|&d| !(d >= 0.0)) {
                return Err(Error::invalid(format!(
                    "cosine normalization needs k(x,x) >= 0 (row {i} has {})",
                    train_diag[i]
                )));
            }
        }
        let trace_scale = train_diag.iter().sum::<f64>() / train_diag.len().max(1) as f64;
        if mode == Normalization::Trace && !(trace_scale > 0.0) {
            return Err(Error::invalid("trace normalization needs a positive trace"));
        }
        Ok(Self {
            mode,
            train_diag,
            trace_scale,
        })
    }

    pub fn apply_gram(&self, g: &GramMatrix) -> GramMatrix {
        match self.mode {
            Normalization::None => g.clone(),
            Normalization::Cosine => GramMatrix::from_upper_fn(g.n(), g.provenance(), |i, j| {
                if i == j {
                    1.0
                } else {
                    cosine(g.get(i, j), self.train_diag[i], self.train_diag[j])
                }
            }),
            Normalization::Trace => {
                GramMatrix::from_upper_fn(g.n(), g.provenance(), |i, j| g.get(i, j) / self.trace_scale)
            }
        }
    }

    /// `test_diag[t]` is `k(x_t, x_t)` for each test row.
    pub fn apply_cross(&self, cross: &Matrix, test_diag: &[f64]) -> Result<Matrix> {
        if cross.ncols() != self.train_diag.len() {
            return Err(Error::DimensionMismatch {
                expected: self.train_diag.len(),
                got: cross.ncols(),
            });
        }
        Ok(match self.mode {
            Normalization::None => cross.clone(),
            Normalization::Trace => {
                Matrix::from_fn(cross.nrows(), cross.ncols(), |t, i| cross[(t, i)] / self.trace_scale)
            }
            Normalization::Cosine => {
                if test_diag.len() != cross.nrows() {
                    return Err(Error::DimensionMismatch {
                        expected: cross.nrows(),
                        got: test_diag.len(),
                    });
                }
                if test_diag.iter().any(|&d| !(d >= 0.0)) {
                    return Err(Error::invalid("cosine normalization needs k(x,x) >= 0"));
                }
                Matrix::from_fn(cross.nrows(), cross.ncols(), |t, i| {
                    cosine(cross[(t, i)], test_diag[t], self.train_diag[i])
                })
            }
        })
    }
}
