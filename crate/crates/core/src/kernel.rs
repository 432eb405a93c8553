//! Kernel functions, Gram matrices and positive-semidefinite repair.
//!
//! Supported families:
//!
//! - linear: `x·z`
//! - polynomial: `(offset + x·z)^degree`
//! - gaussian: `exp(-‖x − z‖² / c)`, with the width `c` as the parameter
//! - precomputed: no closed form, the Gram matrix is read from a file
//!
//! A [`GramMatrix`] is always exactly symmetric: only the upper triangle is
//! evaluated and the lower triangle is a copy.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default eigenvalue tolerance for [`psd_repair`].
pub const DEFAULT_PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Linear,
    Polynomial {
        degree: u32,
        offset: f64,
    },
    Gaussian {
        width_c: f64,
    },
    /// The Gram matrix is supplied externally; the path is only carried for
    /// the config round-trip.
    Precomputed {
        path: PathBuf,
    },
}

impl KernelSpec {
    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree, offset };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(width_c: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { width_c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(Error::invalid("polynomial degree must be >= 1"));
                }
                if !offset.is_finite() {
                    return Err(Error::invalid("polynomial offset must be finite"));
                }
            }
            KernelSpec::Gaussian { width_c } => {
                if !(width_c > 0.0 && width_c.is_finite()) {
                    return Err(Error::invalid(format!(
                        "gaussian width must be positive, got {width_c}"
                    )));
                }
            }
            KernelSpec::Linear | KernelSpec::Precomputed { .. } => {}
        }
        Ok(())
    }

    pub fn is_precomputed(&self) -> bool {
        matches!(self, KernelSpec::Precomputed { .. })
    }

    /// Short human label used in reports, e.g. `gauss(c=10)`.
    pub fn label(&self) -> String {
        match self {
            KernelSpec::Linear => "linear".to_string(),
            KernelSpec::Polynomial { degree, offset } => format!("poly(d={degree},o={offset})"),
            KernelSpec::Gaussian { width_c } => format!("gauss(c={width_c})"),
            KernelSpec::Precomputed { .. } => "precomputed".to_string(),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, offset } => {
                write!(f, "poly:degree={degree},offset={offset}")
            }
            KernelSpec::Gaussian { width_c } => write!(f, "gauss:c={width_c}"),
            KernelSpec::Precomputed { path } => write!(f, "precomputed:{}", path.display()),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, params) = match s.split_once(':') {
            Some((f, p)) => (f.trim(), p.trim()),
            None => (s, ""),
        };
        let bad = |msg: &str| Error::invalid(format!("kernel spec `{s}`: {msg}"));
        match family {
            "linear" => {
                if !params.is_empty() {
                    return Err(bad("linear takes no parameters"));
                }
                Ok(KernelSpec::Linear)
            }
            "precomputed" => {
                if params.is_empty() {
                    return Err(bad("missing path"));
                }
                Ok(KernelSpec::Precomputed {
                    path: PathBuf::from(params),
                })
            }
            "poly" | "polynomial" => {
                let mut degree = None;
                let mut offset = None;
                for (k, v) in key_values(params).map_err(|m| bad(&m))? {
                    match k {
                        "degree" | "d" => degree = Some(v.parse::<u32>().map_err(|_| bad("bad degree"))?),
                        "offset" | "o" => offset = Some(v.parse::<f64>().map_err(|_| bad("bad offset"))?),
                        other => return Err(bad(&format!("unknown key `{other}`"))),
                    }
                }
                KernelSpec::polynomial(degree.ok_or_else(|| bad("missing degree"))?, offset.unwrap_or(1.0))
            }
            "gauss" | "gaussian" | "rbf" => {
                let mut width = None;
                for (k, v) in key_values(params).map_err(|m| bad(&m))? {
                    match k {
                        "c" | "width" => width = Some(v.parse::<f64>().map_err(|_| bad("bad width"))?),
                        other => return Err(bad(&format!("unknown key `{other}`"))),
                    }
                }
                KernelSpec::gaussian(width.ok_or_else(|| bad("missing c"))?)
            }
            _ => Err(bad("unknown kernel family")),
        }
    }
}

fn key_values(params: &str) -> std::result::Result<Vec<(&str, &str)>, String> {
    if params.is_empty() {
        return Ok(Vec::new());
    }
    params
        .split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| format!("expected key=value, got `{kv}`"))
        })
        .collect()
}

fn dot(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a * b).sum()
}

fn squared_distance(x: &[f64], z: &[f64]) -> f64 {
    x.iter()
        .zip(z)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Evaluates `spec` on a pair of points.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    if spec.is_precomputed() {
        return Err(Error::PrecomputedKernel);
    }
    spec.validate()?;
    Ok(eval_unchecked(spec, x, z))
}

#[inline]
fn eval_unchecked(spec: &KernelSpec, x: &[f64], z: &[f64]) -> f64 {
    match *spec {
        KernelSpec::Linear => dot(x, z),
        KernelSpec::Polynomial { degree, offset } => (offset + dot(x, z)).powi(degree as i32),
        // distance computed directly so that x == z gives exactly 1
        KernelSpec::Gaussian { width_c } => (-squared_distance(x, z) / width_c).exp(),
        KernelSpec::Precomputed { .. } => unreachable!("checked by callers"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    SingleKernel,
    Combined,
    Repaired,
}

/// Symmetric `n × n` kernel matrix stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
    provenance: Provenance,
}

impl GramMatrix {
    /// Evaluates `f(i, j)` for `i <= j` and mirrors the result.
    pub fn from_upper_fn(n: usize, provenance: Provenance, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| f(i, j)).collect())
            .collect();
        let mut entries = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Self { n, entries, provenance }
    }

    /// Accepts a square matrix that is already exactly symmetric.
    pub fn from_matrix(m: Matrix, provenance: Provenance) -> Result<Self> {
        let (r, c) = m.shape();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, got: c });
        }
        if r == 0 {
            return Err(Error::Empty("gram matrix"));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self {
            n: r,
            entries: m.into_vec(),
            provenance,
        })
    }

    /// Reads a whitespace- or comma-separated square matrix.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            rows.push(row);
        }
        let m = Matrix::from_rows(&rows).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "rows have different lengths".into(),
        })?;
        Self::from_matrix(m, Provenance::SingleKernel)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_major(self.n, self.n, self.entries.clone())
    }

    /// Principal submatrix on `indices`.
    pub fn submatrix(&self, indices: &[usize]) -> GramMatrix {
        let m = indices.len();
        let mut entries = Vec::with_capacity(m * m);
        for &i in indices {
            for &j in indices {
                entries.push(self.get(i, j));
            }
        }
        GramMatrix {
            n: m,
            entries,
            provenance: self.provenance,
        }
    }

    /// Rows `rows` restricted to columns `cols`, e.g. test-vs-train blocks of
    /// a precomputed matrix.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |a, b| self.get(rows[a], cols[b]))
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.entries.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut ev: Vec<f64> = self.to_dmatrix().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }
}

pub fn gram_matrix(spec: &KernelSpec, x: &Matrix) -> Result<GramMatrix> {
    if x.nrows() == 0 {
        return Err(Error::Empty("feature matrix"));
    }
    if spec.is_precomputed() {
        return Err(Error::PrecomputedKernel);
    }
    spec.validate()?;
    Ok(GramMatrix::from_upper_fn(
        x.nrows(),
        Provenance::SingleKernel,
        |i, j| eval_unchecked(spec, x.row(i), x.row(j)),
    ))
}

/// Kernel values between test rows and training rows: entry `(t, i)` is
/// `k(test_t, train_i)`.
pub fn cross_gram(spec: &KernelSpec, train: &Matrix, test: &Matrix) -> Result<Matrix> {
    if spec.is_precomputed() {
        return Err(Error::PrecomputedKernel);
    }
    spec.validate()?;
    if train.nrows() > 0 && test.nrows() > 0 && train.ncols() != test.ncols() {
        return Err(Error::DimensionMismatch {
            expected: train.ncols(),
            got: test.ncols(),
        });
    }
    let n = train.nrows();
    let data: Vec<f64> = (0..test.nrows())
        .into_par_iter()
        .flat_map_iter(|t| (0..n).map(move |i| eval_unchecked(spec, test.row(t), train.row(i))))
        .collect();
    Ok(Matrix::from_row_major(test.nrows(), n, data))
}

/// `k(x, x)` for each row, needed to normalise cross-kernel blocks.
pub fn self_similarity(spec: &KernelSpec, x: &Matrix) -> Result<Vec<f64>> {
    if spec.is_precomputed() {
        return Err(Error::PrecomputedKernel);
    }
    spec.validate()?;
    Ok(x.rows().map(|r| eval_unchecked(spec, r, r)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsdMode {
    None,
    #[default]
    DiagonalShift,
    SpectralClip,
}

impl FromStr for PsdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PsdMode::None),
            "shift" | "diagonal_shift" => Ok(PsdMode::DiagonalShift),
            "clip" | "spectral_clip" => Ok(PsdMode::SpectralClip),
            _ => Err(Error::invalid(format!("unknown psd mode `{s}`"))),
        }
    }
}

impl fmt::Display for PsdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsdMode::None => "none",
            PsdMode::DiagonalShift => "shift",
            PsdMode::SpectralClip => "clip",
        })
    }
}

/// Makes `g` positive semidefinite up to `tol`.
///
/// `DiagonalShift` adds `(|λ_min| + tol)·I` when `λ_min < -tol`;
/// `SpectralClip` zeroes every eigenvalue below `-tol` and reassembles.
/// A matrix that needs no change is returned as is, with its provenance.
pub fn psd_repair(g: &GramMatrix, mode: PsdMode, tol: f64) -> Result<GramMatrix> {
    if !(tol >= 0.0) {
        return Err(Error::invalid("psd tolerance must be >= 0"));
    }
    if mode == PsdMode::None {
        return Ok(g.clone());
    }
    if !g.entries.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = g.n;
    match mode {
        PsdMode::None => unreachable!(),
        PsdMode::DiagonalShift => {
            let lambda_min = g.min_eigenvalue()?;
            if lambda_min >= -tol {
                return Ok(g.clone());
            }
            let shift = lambda_min.abs() + tol;
            let mut out = g.clone();
            for i in 0..n {
                out.entries[i * n + i] += shift;
            }
            out.provenance = Provenance::Repaired;
            Ok(out)
        }
        PsdMode::SpectralClip => {
            let eig = g.to_dmatrix().symmetric_eigen();
            if eig.eigenvalues.iter().all(|&l| l >= -tol) {
                return Ok(g.clone());
            }
            let clipped: Vec<f64> = eig
                .eigenvalues
                .iter()
                .map(|&l| if l < -tol { 0.0 } else { l })
                .collect();
            let v = &eig.eigenvectors;
            // scale the columns once so each entry is a single dot product
            let mut scaled = v.clone();
            for (k, &l) in clipped.iter().enumerate() {
                scaled.column_mut(k).scale_mut(l);
            }
            let rebuilt = &scaled * v.transpose();
            let out = GramMatrix::from_upper_fn(n, Provenance::Repaired, |i, j| rebuilt[(i, j)]);
            Ok(out)
        }
    }
}
