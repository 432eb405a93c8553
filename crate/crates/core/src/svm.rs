//! Two-class soft-margin SVM over a precomputed or combined Gram matrix.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::combine::Labels;
use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, KernelSpec};
use crate::matrix::Matrix;
use crate::qp::{solve_csvm_dual, SolverConfig};

const FORMAT_HEADER: &str = "avsvm-model v1";

/// Which kernel produced the Gram matrix a model was trained on.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelHandle {
    Single(KernelSpec),
    /// A combined or externally supplied matrix; the label is descriptive only.
    Combined(String),
}

impl fmt::Display for KernelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelHandle::Single(spec) => write!(f, "{spec}"),
            KernelHandle::Combined(label) => write!(f, "combined:{label}"),
        }
    }
}

impl FromStr for KernelHandle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("combined:") {
            Some(label) => Ok(KernelHandle::Combined(label.to_string())),
            None => s.parse().map(KernelHandle::Single),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: KernelHandle,
    c: f64,
    n_train: usize,
    support_indices: Vec<usize>,
    alpha_y: Vec<f64>,
    offset_b: f64,
    support_points: Option<Matrix>,
    iterations: u64,
    kkt_residual: f64,
}

/// Test-set error and support-vector share, both in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub error_percent: f64,
    pub sv_percent: f64,
}

/// `+1` for non-negative values, `−1` otherwise.
#[inline]
pub fn sign_label(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Trains on a Gram matrix over the training points. Coefficients at or
/// below `1e-8·C` are dropped from the support set.
pub fn train(g: &GramMatrix, y: &Labels, c: f64, cfg: &SolverConfig) -> Result<SvmModel> {
    let sol = solve_csvm_dual(g, y, c, cfg)?;
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
        });
    }
    let eps = 1e-8 * c;
    let support_indices: Vec<usize> = (0..g.n()).filter(|&i| sol.alpha[i] > eps).collect();
    let alpha_y = support_indices.iter().map(|&i| sol.alpha[i] * y.sign(i)).collect();
    Ok(SvmModel {
        kernel: KernelHandle::Combined("gram".into()),
        c,
        n_train: g.n(),
        support_indices,
        alpha_y,
        offset_b: sol.offset_b,
        support_points: None,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

impl SvmModel {
    pub fn with_kernel(mut self, kernel: KernelHandle) -> Self {
        self.kernel = kernel;
        self
    }

    /// Keeps copies of the support rows of `x_train` so that new points can
    /// be scored from features.
    pub fn with_support_points(mut self, spec: KernelSpec, x_train: &Matrix) -> Result<Self> {
        if spec.is_precomputed() {
            return Err(Error::PrecomputedKernel);
        }
        if x_train.nrows() != self.n_train {
            return Err(Error::DimensionMismatch {
                expected: self.n_train,
                got: x_train.nrows(),
            });
        }
        self.support_points = Some(x_train.select_rows(&self.support_indices));
        self.kernel = KernelHandle::Single(spec);
        Ok(self)
    }

    pub fn kernel(&self) -> &KernelHandle {
        &self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn support_indices(&self) -> &[usize] {
        &self.support_indices
    }

    pub fn alpha_y(&self) -> &[f64] {
        &self.alpha_y
    }

    pub fn offset_b(&self) -> f64 {
        self.offset_b
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn kkt_residual(&self) -> f64 {
        self.kkt_residual
    }

    pub fn sv_percent(&self) -> f64 {
        100.0 * self.support_indices.len() as f64 / self.n_train as f64
    }

    /// `Σ alpha_y_i · k_row_i + b` with `k_row` aligned to the support set.
    pub fn decision_value(&self, k_row: &[f64]) -> Result<f64> {
        if k_row.len() != self.alpha_y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha_y.len(),
                got: k_row.len(),
            });
        }
        Ok(self.alpha_y.iter().zip(k_row).map(|(a, k)| a * k).sum::<f64>() + self.offset_b)
    }

    /// Same as [`Self::decision_value`] but `row` holds kernel values against
    /// every training point.
    pub fn decision_from_full_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_train {
            return Err(Error::DimensionMismatch {
                expected: self.n_train,
                got: row.len(),
            });
        }
        Ok(self
            .support_indices
            .iter()
            .zip(&self.alpha_y)
            .map(|(&i, a)| a * row[i])
            .sum::<f64>()
            + self.offset_b)
    }

    pub fn predict(&self, k_row: &[f64]) -> Result<i8> {
        self.decision_value(k_row).map(sign_label)
    }

    /// Scores a feature vector; needs stored support points.
    pub fn decision_at(&self, x: &[f64]) -> Result<f64> {
        let (KernelHandle::Single(spec), Some(points)) = (&self.kernel, &self.support_points) else {
            return Err(Error::PrecomputedKernel);
        };
        let row = points
            .rows()
            .map(|sv| crate::kernel::eval_kernel(spec, sv, x))
            .collect::<Result<Vec<_>>>()?;
        self.decision_value(&row)
    }

    /// Error and SV percentages given full cross-kernel rows (test × train).
    pub fn evaluate(&self, rows: &Matrix, y: &Labels) -> Result<Evaluation> {
        if rows.nrows() == 0 {
            return Err(Error::Empty("test set"));
        }
        if rows.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                got: y.len(),
            });
        }
        let mut wrong = 0usize;
        for (t, row) in rows.rows().enumerate() {
            if sign_label(self.decision_from_full_row(row)?) != y.as_slice()[t] {
                wrong += 1;
            }
        }
        Ok(Evaluation {
            error_percent: 100.0 * wrong as f64 / rows.nrows() as f64,
            sv_percent: self.sv_percent(),
        })
    }

    /// Line-oriented text form. Floats use shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "kernel {}", self.kernel);
        let _ = writeln!(out, "c {:e}", self.c);
        let _ = writeln!(out, "n_train {}", self.n_train);
        let _ = writeln!(out, "offset {:e}", self.offset_b);
        let _ = writeln!(out, "iterations {}", self.iterations);
        let _ = writeln!(out, "kkt_residual {:e}", self.kkt_residual);
        let _ = writeln!(out, "support {}", self.support_indices.len());
        for (i, a) in self.support_indices.iter().zip(&self.alpha_y) {
            let _ = writeln!(out, "{i} {a:e}");
        }
        if let Some(points) = &self.support_points {
            let _ = writeln!(out, "points {} {}", points.nrows(), points.ncols());
            for row in points.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(out, "{}", cells.join(" "));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, message: &str| Error::Parse {
            path: "<model>".into(),
            line,
            message: message.into(),
        };
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (no, l) = lines.next().ok_or_else(|| err(0, "unexpected end of model"))?;
            if key.is_empty() {
                return Ok((no, l.to_string()));
            }
            l.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(|rest| (no, rest.to_string()))
                .ok_or_else(|| err(no, &format!("expected `{key}`")))
        };
        fn num<T: FromStr>(no: usize, s: &str) -> Result<T> {
            s.trim().parse().map_err(|_| Error::Parse {
                path: "<model>".into(),
                line: no,
                message: format!("bad number `{s}`"),
            })
        }

        let (no, header) = next("")?;
        if header != FORMAT_HEADER {
            return Err(err(no, "unknown model format"));
        }
        let (_, kernel) = next("kernel")?;
        let kernel: KernelHandle = kernel.parse()?;
        let (no, c) = next("c")?;
        let c = num(no, &c)?;
        let (no, n_train) = next("n_train")?;
        let n_train = num(no, &n_train)?;
        let (no, offset) = next("offset")?;
        let offset_b = num(no, &offset)?;
        let (no, it) = next("iterations")?;
        let iterations = num(no, &it)?;
        let (no, r) = next("kkt_residual")?;
        let kkt_residual = num(no, &r)?;
        let (no, k) = next("support")?;
        let k: usize = num(no, &k)?;
        let mut support_indices = Vec::with_capacity(k);
        let mut alpha_y = Vec::with_capacity(k);
        for _ in 0..k {
            let (no, l) = next("")?;
            let (i, a) = l
                .split_once(' ')
                .ok_or_else(|| err(no, "expected `index coefficient`"))?;
            support_indices.push(num(no, i)?);
            alpha_y.push(num(no, a)?);
        }
        let support_points = match next("points") {
            Ok((no, dims)) => {
                let (r, d) = dims.split_once(' ').ok_or_else(|| err(no, "expected `rows cols`"))?;
                let (r, d): (usize, usize) = (num(no, r)?, num(no, d)?);
                let mut data = Vec::with_capacity(r * d);
                for _ in 0..r {
                    let (no, l) = next("")?;
                    let row = l.split(' ').map(|v| num(no, v)).collect::<Result<Vec<f64>>>()?;
                    if row.len() != d {
                        return Err(err(no, "wrong number of coordinates"));
                    }
                    data.extend(row);
                }
                Some(Matrix::from_row_major(r, d, data))
            }
            Err(_) => None,
        };
        Ok(Self {
            kernel,
            c,
            n_train,
            support_indices,
            alpha_y,
            offset_b,
            support_points,
            iterations,
            kkt_residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{cross_gram, gram_matrix};

    fn two_point() -> (Matrix, GramMatrix, Labels) {
        let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let g = gram_matrix(&KernelSpec::Linear, &x).unwrap();
        (x, g, Labels::new(vec![-1, 1]).unwrap())
    }

    #[test]
    fn two_point_model() {
        let (x, g, y) = two_point();
        let m = train(&g, &y, 10.0, &SolverConfig::default())
            .unwrap()
            .with_support_points(KernelSpec::Linear, &x)
            .unwrap();
        assert_eq!(m.support_indices(), &[0, 1]);
        assert!((m.offset_b() + 1.0).abs() < 1e-9);
        assert!(m.decision_at(&[1.0]).unwrap().abs() < 1e-9);
        assert_eq!(m.sv_percent(), 100.0);
    }

    #[test]
    fn square_is_separated() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]]).unwrap();
        let y = Labels::new(vec![-1, -1, 1, 1]).unwrap();
        let g = gram_matrix(&KernelSpec::Linear, &x).unwrap();
        let m = train(&g, &y, 100.0, &SolverConfig::default()).unwrap();
        let rows = cross_gram(&KernelSpec::Linear, &x, &x).unwrap();
        assert_eq!(m.evaluate(&rows, &y).unwrap().error_percent, 0.0);
    }

    #[test]
    fn sign_rule() {
        assert_eq!(sign_label(2.3), 1);
        assert_eq!(sign_label(-0.1), -1);
        assert_eq!(sign_label(0.0), 1);
        assert_eq!(sign_label(-0.0), 1);
    }

    #[test]
    fn empty_support_returns_offset() {
        let (_, g, y) = two_point();
        let mut m = train(&g, &y, 1.0, &SolverConfig::default()).unwrap();
        m.support_indices.clear();
        m.alpha_y.clear();
        assert_eq!(m.decision_value(&[]).unwrap(), m.offset_b());
        assert!(m.decision_value(&[1.0]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let (x, g, y) = two_point();
        let m = train(&g, &y, 10.0, &SolverConfig::default()).unwrap();
        assert_eq!(SvmModel::from_text(&m.to_text()).unwrap(), m);
        let m = m.with_support_points(KernelSpec::gaussian(0.5).unwrap(), &x).unwrap();
        assert_eq!(SvmModel::from_text(&m.to_text()).unwrap(), m);
        assert!(SvmModel::from_text("avsvm-model v0\n").is_err());
    }

    #[test]
    fn evaluate_rejects_empty() {
        let (_, g, y) = two_point();
        let m = train(&g, &y, 1.0, &SolverConfig::default()).unwrap();
        let y0 = Labels::new(vec![]).unwrap();
        assert!(matches!(m.evaluate(&Matrix::zeros(0, 2), &y0), Err(Error::Empty(_))));
    }
}
