//! One-class SVM and the order-statistic linear program.
//!
//! The LP picks the `νn` smallest scores of any real-valued function:
//!
//! ```text
//! max  −Σ λ_i g_i    s.t.  Σλ = 1,  0 ≤ λ_i ≤ 1/(νn)
//! ```
//!
//! and its dual `min −b + 1/(νn)·Σ max(0, b − g_i)` is attained at an order
//! statistic of `g`. Both have closed forms after a stable sort.

use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, gram_matrix, GramMatrix, KernelSpec};
use crate::matrix::Matrix;
use crate::qp::{check_nu, solve_oneclass_dual, SolverConfig};
use crate::svm::sign_label;

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassModel {
    alpha: Vec<f64>,
    offset_b: f64,
    nu: f64,
    support_indices: Vec<usize>,
    kernel: Option<KernelSpec>,
    points: Option<Matrix>,
    iterations: u64,
    kkt_residual: f64,
}

/// Fits on feature rows and keeps them for scoring new points.
pub fn train_oneclass(x: &Matrix, kernel: &KernelSpec, nu: f64, cfg: &SolverConfig) -> Result<OneClassModel> {
    let g = gram_matrix(kernel, x)?;
    let mut model = train_oneclass_gram(&g, nu, cfg)?;
    model.kernel = Some(kernel.clone());
    model.points = Some(x.clone());
    Ok(model)
}

/// Fits on a Gram matrix. `b*` is the mean of `(Gα)_i` over coefficients
/// strictly inside the box.
pub fn train_oneclass_gram(g: &GramMatrix, nu: f64, cfg: &SolverConfig) -> Result<OneClassModel> {
    let sol = solve_oneclass_dual(g, nu, cfg)?;
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
        });
    }
    let support_indices = (0..g.n()).filter(|&i| sol.alpha[i] > 0.0).collect();
    Ok(OneClassModel {
        alpha: sol.alpha,
        offset_b: sol.offset_b,
        nu,
        support_indices,
        kernel: None,
        points: None,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

impl OneClassModel {
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn offset_b(&self) -> f64 {
        self.offset_b
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn support_indices(&self) -> &[usize] {
        &self.support_indices
    }

    pub fn n_train(&self) -> usize {
        self.alpha.len()
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn kkt_residual(&self) -> f64 {
        self.kkt_residual
    }

    /// `Σ α_i k_row_i − b*` with `k_row` aligned to the training set.
    pub fn decision_score(&self, k_row: &[f64]) -> Result<f64> {
        if k_row.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                got: k_row.len(),
            });
        }
        Ok(self.alpha.iter().zip(k_row).map(|(a, k)| a * k).sum::<f64>() - self.offset_b)
    }

    /// `+1` inside the estimated high-density region.
    pub fn oc_decision(&self, k_row: &[f64]) -> Result<i8> {
        self.decision_score(k_row).map(sign_label)
    }

    /// Scores of the training points themselves.
    pub fn training_scores(&self, g: &GramMatrix) -> Result<Vec<f64>> {
        if g.n() != self.alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alpha.len(),
                got: g.n(),
            });
        }
        (0..g.n()).map(|i| self.decision_score(g.row(i))).collect()
    }

    /// Scores a new feature vector; only for models fitted on features.
    pub fn score_point(&self, x: &[f64]) -> Result<f64> {
        let (Some(spec), Some(points)) = (&self.kernel, &self.points) else {
            return Err(Error::PrecomputedKernel);
        };
        let row = points
            .rows()
            .map(|p| eval_kernel(spec, p, x))
            .collect::<Result<Vec<_>>>()?;
        self.decision_score(&row)
    }
}

/// Indices whose score lies strictly below `−tol`.
pub fn outlier_indices(scores: &[f64], tol: f64) -> Vec<usize> {
    (0..scores.len()).filter(|&i| scores[i] < -tol).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSolution {
    pub lambda: Vec<f64>,
    pub b_star: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderDual {
    pub b: f64,
    pub xi: Vec<f64>,
    pub objective: f64,
}

/// `νn`, snapped to the nearest integer when within 1e-9 of it.
fn effective_count(nu: f64, n: usize) -> f64 {
    let m = nu * n as f64;
    if (m - m.round()).abs() <= 1e-9 {
        m.round()
    } else {
        m
    }
}

/// Indices sorted by `(g, index)`.
fn stable_order(g: &[f64]) -> Result<Vec<usize>> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    Ok(order)
}

fn check_order_input(g: &[f64], nu: f64) -> Result<()> {
    if g.is_empty() {
        return Err(Error::Empty("score vector"));
    }
    check_nu(nu, g.len())
}

/// Closed-form primal: full mass `1/(νn)` on the `⌊νn⌋` smallest values and
/// the remainder on the next one.
pub fn solve_order_lp(g: &[f64], nu: f64) -> Result<OrderSolution> {
    check_order_input(g, nu)?;
    let n = g.len();
    let m = effective_count(nu, n);
    let cap = 1.0 / m;
    let full = (m.floor() as usize).min(n);
    let order = stable_order(g)?;
    let mut lambda = vec![0.0; n];
    for &i in &order[..full] {
        lambda[i] = cap;
    }
    let mut last = order[full.max(1) - 1];
    if full < n {
        let rest = (1.0 - full as f64 * cap).max(0.0);
        if rest > 0.0 && m.fract() != 0.0 {
            lambda[order[full]] = rest;
            last = order[full];
        }
    }
    let objective = -lambda.iter().zip(g).map(|(l, v)| l * v).sum::<f64>();
    Ok(OrderSolution {
        lambda,
        b_star: g[last],
        objective,
    })
}

/// Closed-form dual: `b` is the `⌈νn⌉`-th smallest value.
pub fn solve_order_dual(g: &[f64], nu: f64) -> Result<OrderDual> {
    check_order_input(g, nu)?;
    let n = g.len();
    let m = effective_count(nu, n);
    let k = (m.ceil() as usize).clamp(1, n);
    let order = stable_order(g)?;
    let b = g[order[k - 1]];
    let xi: Vec<f64> = g.iter().map(|v| (b - v).max(0.0)).collect();
    let objective = -b + xi.iter().sum::<f64>() / m;
    Ok(OrderDual { b, xi, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Provenance;

    #[test]
    fn lp_examples() {
        let s = solve_order_lp(&[3.0, 1.0, 2.0], 1.0 / 3.0).unwrap();
        assert_eq!(s.lambda, vec![0.0, 1.0, 0.0]);
        assert_eq!(s.objective, -1.0);
        assert_eq!(s.b_star, 1.0);
        let s = solve_order_lp(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(s.lambda, vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(s.objective, -1.5);
        assert_eq!(s.b_star, 2.0);
    }

    #[test]
    fn lp_nu_one_is_uniform() {
        let g = [4.0, -1.0, 0.5, 2.5, 7.0];
        let s = solve_order_lp(&g, 1.0).unwrap();
        assert!(s.lambda.iter().all(|&l| l == 0.2));
        let mean = g.iter().sum::<f64>() / 5.0;
        assert!((s.objective + mean).abs() < 1e-12);
        let d = solve_order_dual(&g, 1.0).unwrap();
        assert_eq!(d.b, 7.0);
        assert!((d.objective + mean).abs() < 1e-12);
    }

    #[test]
    fn dual_examples() {
        let d = solve_order_dual(&[3.0, 1.0, 2.0], 1.0 / 3.0).unwrap();
        assert_eq!(d.objective, -1.0);
        let d = solve_order_dual(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(d.b, 2.0);
        assert_eq!(d.xi, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.objective, -1.5);
    }

    #[test]
    fn fractional_count() {
        // νn = 2.5: two full masses of 0.4 and 0.2 on the third
        let s = solve_order_lp(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5).unwrap();
        let expect = [0.0, 0.4, 0.2, 0.4, 0.0];
        for (l, e) in s.lambda.iter().zip(expect) {
            assert!((l - e).abs() < 1e-15);
        }
        assert_eq!(s.b_star, 3.0);
        assert_eq!(solve_order_dual(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5).unwrap().b, 3.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let s = solve_order_lp(&[1.0, 1.0, 1.0, 0.0], 0.5).unwrap();
        assert_eq!(s.lambda, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn infeasible_nu() {
        assert!(matches!(solve_order_lp(&[1.0, 2.0], 0.2), Err(Error::Infeasible(_))));
        assert!(matches!(solve_order_dual(&[1.0, 2.0], 0.0), Err(Error::Infeasible(_))));
        assert!(solve_order_lp(&[], 0.5).is_err());
    }

    #[test]
    fn identical_points_threshold() {
        let x = Matrix::from_rows(&[[0.5, 1.0], [0.5, 1.0], [0.5, 1.0]]).unwrap();
        let m = train_oneclass(&x, &KernelSpec::gaussian(1.0).unwrap(), 1.0, &SolverConfig::default()).unwrap();
        assert!((m.offset_b() - 1.0).abs() < 1e-12);
        for a in m.alpha() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_row_is_outside() {
        let x = Matrix::from_rows(&[[0.0], [0.2], [0.5], [3.0]]).unwrap();
        let m = train_oneclass(&x, &KernelSpec::gaussian(1.0).unwrap(), 0.5, &SolverConfig::default()).unwrap();
        assert!(m.offset_b() > 0.0);
        assert_eq!(m.oc_decision(&[0.0; 4]).unwrap(), -1);
        assert_eq!(m.score_point(&[100.0]).map(sign_label).unwrap(), -1);
    }

    #[test]
    fn margin_points_score_zero() {
        let x = Matrix::from_fn(12, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - (i as f64) * 0.05);
        let cfg = SolverConfig::default();
        let g = gram_matrix(&KernelSpec::gaussian(0.5).unwrap(), &x).unwrap();
        let m = train_oneclass_gram(&g, 0.3, &cfg).unwrap();
        let cap = 1.0 / (0.3 * 12.0);
        let scores = m.training_scores(&g).unwrap();
        for (i, a) in m.alpha().iter().enumerate() {
            if *a > 0.0 && *a < cap {
                assert!(scores[i].abs() <= 10.0 * cfg.kkt_tol);
            }
        }
        let sum: f64 = m.alpha().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gram_model_cannot_score_features() {
        let g = GramMatrix::from_upper_fn(2, Provenance::SingleKernel, |i, j| (i == j) as u8 as f64);
        let m = train_oneclass_gram(&g, 1.0, &SolverConfig::default()).unwrap();
        assert!(m.score_point(&[0.0]).is_err());
    }
}
