//! Box-constrained dual quadratic programs.
//!
//! Every problem here has the canonical form
//!
//! ```text
//! minimise   ½ αᵀQα + pᵀα
//! subject to aᵀα = r,   l ≤ α ≤ u
//! ```
//!
//! [`Smo`] solves it by analytic two-variable steps on the maximal violating
//! pair (equality coefficients must be ±1). [`brute_force_qp`] enumerates
//! every assignment of coordinates to {lower, upper, free} and is used as an
//! independent oracle on small instances.
//!
//! Objectives are always reported in this minimisation form. The threshold
//! `ρ` is the equality multiplier: for a free coordinate `a_t·∇f_t = ρ`.

use crate::combine::Labels;
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

/// Curvature floor for non-convex pair steps.
const TAU: f64 = 1e-12;

/// Largest instance [`brute_force_qp`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQP {
    n: usize,
    q: Vec<f64>,
    linear: Vec<f64>,
    eq_coeffs: Vec<f64>,
    eq_rhs: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxQP {
    /// `q` is row-major `n × n` and must be exactly symmetric.
    pub fn new(
        q: Vec<f64>,
        linear: Vec<f64>,
        eq_coeffs: Vec<f64>,
        eq_rhs: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let n = linear.len();
        if n == 0 {
            return Err(Error::Empty("quadratic program"));
        }
        for (len, what) in [
            (q.len(), n * n),
            (eq_coeffs.len(), n),
            (lower.len(), n),
            (upper.len(), n),
        ] {
            if len != what {
                return Err(Error::DimensionMismatch {
                    expected: what,
                    got: len,
                });
            }
        }
        let all = q
            .iter()
            .chain(&linear)
            .chain(&eq_coeffs)
            .chain(std::iter::once(&eq_rhs))
            .chain(&lower)
            .chain(&upper);
        for v in all {
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
        }
        for i in 0..n {
            if lower[i] > upper[i] {
                return Err(Error::invalid(format!("lower > upper at coordinate {i}")));
            }
            for j in (i + 1)..n {
                if q[i * n + j] != q[j * n + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self {
            n,
            q,
            linear,
            eq_coeffs,
            eq_rhs,
            lower,
            upper,
        })
    }

    /// Dual of the soft-margin classifier: `Q = YGY`, `p = −1`, `yᵀα = 0`,
    /// `0 ≤ α ≤ C`.
    pub fn csvm_dual(g: &GramMatrix, y: &Labels, c: f64) -> Result<Self> {
        let n = g.n();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {c}")));
        }
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            let yi = y.sign(i);
            let row = g.row(i);
            for j in 0..n {
                q[i * n + j] = yi * y.sign(j) * row[j];
            }
        }
        Self::new(
            q,
            vec![-1.0; n],
            (0..n).map(|i| y.sign(i)).collect(),
            0.0,
            vec![0.0; n],
            vec![c; n],
        )
    }

    /// Dual of the one-class problem: `Q = G`, `p = 0`, `Σα = 1`,
    /// `0 ≤ α ≤ 1/(νn)`.
    pub fn oneclass_dual(g: &GramMatrix, nu: f64) -> Result<Self> {
        let n = g.n();
        check_nu(nu, n)?;
        let upper = 1.0 / (nu * n as f64);
        Self::new(
            g.entries().to_vec(),
            vec![0.0; n],
            vec![1.0; n],
            1.0,
            vec![0.0; n],
            vec![upper; n],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    #[inline]
    fn q_row(&self, i: usize) -> &[f64] {
        &self.q[i * self.n..(i + 1) * self.n]
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn eq_coeffs(&self) -> &[f64] {
        &self.eq_coeffs
    }

    pub fn eq_rhs(&self) -> f64 {
        self.eq_rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Same feasible set, objective multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(
            self.q.iter().map(|v| v * t).collect(),
            self.linear.iter().map(|v| v * t).collect(),
            self.eq_coeffs.clone(),
            self.eq_rhs,
            self.lower.clone(),
            self.upper.clone(),
        )
    }

    /// `Qα + p`, computed from scratch.
    pub fn gradient(&self, alpha: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.q_row(i).iter().zip(alpha).map(|(q, a)| q * a).sum::<f64>() + self.linear[i])
            .collect()
    }

    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let grad = self.gradient(alpha);
        0.5 * alpha
            .iter()
            .zip(grad.iter().zip(&self.linear))
            .map(|(a, (g, p))| a * (g + p))
            .sum::<f64>()
    }

    fn unit_coefficients(&self) -> bool {
        self.eq_coeffs.iter().all(|&a| a == 1.0 || a == -1.0)
    }
}

pub(crate) fn check_nu(nu: f64, n: usize) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Infeasible(format!("nu must lie in (0, 1], got {nu}")));
    }
    if nu * (n as f64) < 1.0 - 1e-12 {
        return Err(Error::Infeasible(format!(
            "nu·n = {} < 1 leaves no feasible point",
            nu * n as f64
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when the maximal violating pair gap drops to this value.
    pub kkt_tol: f64,
    /// Budget of pair updates.
    pub max_iterations: u64,
    /// Pair steps whose decrease falls below `objective_tol·max(1, |f|)` count
    /// as stalled; a long run of them ends the solve unconverged.
    pub objective_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-3,
            max_iterations: 10_000_000,
            objective_tol: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > 0.0) || !(self.objective_tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::invalid("solver tolerances and budget must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Offset of the decision function. Generic solves report the threshold
    /// `ρ`; the C-SVM wrapper reports `b = −ρ` and the one-class wrapper
    /// reports `b* = ρ`.
    pub offset_b: f64,
    pub objective: f64,
    /// Maximal violating pair gap at the returned point.
    pub kkt_residual: f64,
    pub iterations: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// No pair violates the optimality conditions by more than the tolerance.
    Converged,
    Updated {
        i: usize,
        j: usize,
    },
}

/// Sequential minimal optimisation over a [`BoxQP`] with ±1 equality
/// coefficients. Each [`Smo::step`] performs one analytic pair update.
#[derive(Debug, Clone)]
pub struct Smo<'a> {
    qp: &'a BoxQP,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    kkt_tol: f64,
    iterations: u64,
    // iteration count at which the gradient was last rebuilt from scratch
    refreshed_at: Option<u64>,
}

impl<'a> Smo<'a> {
    /// Starts from a feasible point: coordinates are moved to their bounds in
    /// index order until the equality constraint holds.
    pub fn new(qp: &'a BoxQP, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if !qp.unit_coefficients() {
            return Err(Error::invalid("SMO needs equality coefficients of ±1"));
        }
        let alpha = initial_point(qp)?;
        let grad = qp.gradient(&alpha);
        Ok(Self {
            qp,
            alpha,
            grad,
            kkt_tol: cfg.kkt_tol,
            iterations: 0,
            refreshed_at: None,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn objective(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(self.grad.iter().zip(&self.qp.linear))
            .map(|(a, (g, p))| a * (g + p))
            .sum::<f64>()
    }

    /// Maximal violating pair `(i, j)` and its gap. Ties go to the lowest
    /// index.
    fn select_pair(&self) -> Option<(usize, usize, f64)> {
        let qp = self.qp;
        let mut best_up = f64::NEG_INFINITY;
        let mut best_low = f64::INFINITY;
        let (mut i, mut j) = (None, None);
        for t in 0..qp.n {
            let a = qp.eq_coeffs[t];
            let v = -a * self.grad[t];
            let at_lower = self.alpha[t] <= qp.lower[t];
            let at_upper = self.alpha[t] >= qp.upper[t];
            let (in_up, in_low) = if a > 0.0 {
                (!at_upper, !at_lower)
            } else {
                (!at_lower, !at_upper)
            };
            if in_up && v > best_up {
                best_up = v;
                i = Some(t);
            }
            if in_low && v < best_low {
                best_low = v;
                j = Some(t);
            }
        }
        match (i, j) {
            (Some(i), Some(j)) => Some((i, j, best_up - best_low)),
            _ => None,
        }
    }

    /// Current maximal violation (0 when no pair exists).
    pub fn violation(&self) -> f64 {
        self.select_pair().map_or(0.0, |(_, _, gap)| gap.max(0.0))
    }

    fn refresh_gradient(&mut self) {
        self.grad = self.qp.gradient(&self.alpha);
        self.refreshed_at = Some(self.iterations);
    }

    pub fn step(&mut self) -> StepOutcome {
        self.step_with_decrease().0
    }

    /// One pair update; also returns the predicted objective decrease.
    fn step_with_decrease(&mut self) -> (StepOutcome, f64) {
        let qp = self.qp;
        let (i, j, gap) = match self.select_pair() {
            Some((i, j, gap)) if gap > self.kkt_tol => (i, j, gap),
            _ => {
                // the incremental gradient drifts; confirm on a fresh one
                if self.refreshed_at != Some(self.iterations) {
                    self.refresh_gradient();
                    return self.step_with_decrease();
                }
                return (StepOutcome::Converged, 0.0);
            }
        };

        let (ai, aj) = (qp.eq_coeffs[i], qp.eq_coeffs[j]);
        let curvature = qp.q(i, i) + qp.q(j, j) - 2.0 * ai * aj * qp.q(i, j);
        let mut t = gap / curvature.max(TAU);
        let cap_i = if ai > 0.0 {
            qp.upper[i] - self.alpha[i]
        } else {
            self.alpha[i] - qp.lower[i]
        };
        let cap_j = if aj > 0.0 {
            self.alpha[j] - qp.lower[j]
        } else {
            qp.upper[j] - self.alpha[j]
        };
        let mut new_i = None;
        let mut new_j = None;
        if cap_i <= t {
            t = cap_i;
            new_i = Some(if ai > 0.0 { qp.upper[i] } else { qp.lower[i] });
        }
        if cap_j <= t {
            t = cap_j;
            new_i = if cap_i <= t { new_i } else { None };
            new_j = Some(if aj > 0.0 { qp.lower[j] } else { qp.upper[j] });
        }
        let next_i = new_i.unwrap_or(self.alpha[i] + ai * t);
        let next_j = new_j.unwrap_or(self.alpha[j] - aj * t);
        let (next_i, next_j) = (
            next_i.clamp(qp.lower[i], qp.upper[i]),
            next_j.clamp(qp.lower[j], qp.upper[j]),
        );
        let di = next_i - self.alpha[i];
        let dj = next_j - self.alpha[j];
        self.alpha[i] = next_i;
        self.alpha[j] = next_j;
        let (qi, qj) = (qp.q_row(i), qp.q_row(j));
        for ((g, a), b) in self.grad.iter_mut().zip(qi).zip(qj) {
            *g += a * di + b * dj;
        }
        self.iterations += 1;
        let decrease = gap * t - 0.5 * curvature * t * t;
        (StepOutcome::Updated { i, j }, decrease)
    }

    /// Runs to convergence or until the budget is spent.
    pub fn run(mut self, cfg: &SolverConfig) -> DualSolution {
        let stall_limit = 10_000 + 100 * self.qp.n as u64;
        let mut stalled = 0u64;
        let mut converged = false;
        while self.iterations < cfg.max_iterations {
            let (outcome, decrease) = self.step_with_decrease();
            match outcome {
                StepOutcome::Converged => {
                    converged = true;
                    break;
                }
                StepOutcome::Updated { .. } => {
                    let scale = cfg.objective_tol * self.objective().abs().max(1.0);
                    if decrease < scale {
                        stalled += 1;
                        if stalled > stall_limit {
                            log::warn!("SMO stalled after {} iterations", self.iterations);
                            break;
                        }
                    } else {
                        stalled = 0;
                    }
                }
            }
        }
        if !converged {
            self.refresh_gradient();
        }
        self.finish(converged)
    }

    fn finish(mut self, converged: bool) -> DualSolution {
        restore_equality(self.qp, &mut self.alpha);
        self.grad = self.qp.gradient(&self.alpha);
        let rho = threshold(self.qp, &self.alpha, &self.grad);
        DualSolution {
            kkt_residual: self.violation(),
            objective: self.objective(),
            offset_b: rho,
            iterations: self.iterations,
            converged,
            alpha: self.alpha,
        }
    }
}

fn initial_point(qp: &BoxQP) -> Result<Vec<f64>> {
    let mut alpha: Vec<f64> = (0..qp.n).map(|t| 0.0f64.clamp(qp.lower[t], qp.upper[t])).collect();
    let mut residual = qp.eq_rhs - dot(&qp.eq_coeffs, &alpha);
    for t in 0..qp.n {
        if residual == 0.0 {
            break;
        }
        let a = qp.eq_coeffs[t];
        // moving alpha_t by +s changes aᵀα by a·s
        let dir = if residual * a > 0.0 { 1.0 } else { -1.0 };
        let room = if dir > 0.0 {
            qp.upper[t] - alpha[t]
        } else {
            alpha[t] - qp.lower[t]
        };
        let need = residual.abs() / a.abs();
        // within rounding of the bound counts as reaching it
        if need >= room - 4.0 * f64::EPSILON * room.abs().max(need) {
            alpha[t] = if dir > 0.0 { qp.upper[t] } else { qp.lower[t] };
        } else {
            alpha[t] += dir * need;
        }
        residual = qp.eq_rhs - dot(&qp.eq_coeffs, &alpha);
    }
    if residual.abs() > 1e-12 * (1.0 + qp.eq_rhs.abs()) {
        return Err(Error::Infeasible(format!(
            "box cannot satisfy the equality constraint (residual {residual:e})"
        )));
    }
    Ok(alpha)
}

/// Pushes accumulated rounding in `aᵀα` onto a coordinate with room for it.
fn restore_equality(qp: &BoxQP, alpha: &mut [f64]) {
    let residual = qp.eq_rhs - compensated_dot(&qp.eq_coeffs, alpha);
    if residual == 0.0 {
        return;
    }
    let candidates = (0..qp.n)
        .filter(|&t| alpha[t] > qp.lower[t] && alpha[t] < qp.upper[t])
        .chain(0..qp.n);
    for t in candidates {
        let a = qp.eq_coeffs[t];
        let next = alpha[t] + residual / a;
        if next >= qp.lower[t] && next <= qp.upper[t] {
            alpha[t] = next;
            return;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Neumaier-compensated dot product.
fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let v = x * y;
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Equality multiplier `ρ`: the mean of `∇f_t / a_t` over free coordinates,
/// or the midpoint of the interval allowed by the bounded ones.
fn threshold(qp: &BoxQP, alpha: &[f64], grad: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..qp.n {
        let a = qp.eq_coeffs[t];
        if a == 0.0 {
            continue;
        }
        let v = grad[t] / a;
        let at_upper = alpha[t] >= qp.upper[t];
        let at_lower = alpha[t] <= qp.lower[t];
        if at_upper && at_lower {
            // fixed coordinate, no information
            continue;
        }
        if at_upper {
            if a < 0.0 {
                ub = ub.min(v);
            } else {
                lb = lb.max(v);
            }
        } else if at_lower {
            if a > 0.0 {
                ub = ub.min(v);
            } else {
                lb = lb.max(v);
            }
        } else {
            free += 1;
            free_sum += v;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        match (lb.is_finite(), ub.is_finite()) {
            (true, true) => 0.5 * (ub + lb),
            (true, false) => lb,
            (false, true) => ub,
            (false, false) => 0.0,
        }
    }
}

/// Runs [`Smo`] to completion on a generic problem.
pub fn solve_box_qp(qp: &BoxQP, cfg: &SolverConfig) -> Result<DualSolution> {
    Ok(Smo::new(qp, cfg)?.run(cfg))
}

/// Soft-margin classifier dual. The decision function is
/// `Σ α_i y_i k(x_i, x) + offset_b`.
pub fn solve_csvm_dual(g: &GramMatrix, y: &Labels, c: f64, cfg: &SolverConfig) -> Result<DualSolution> {
    if !y.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let qp = BoxQP::csvm_dual(g, y, c)?;
    let mut sol = solve_box_qp(&qp, cfg)?;
    sol.offset_b = -sol.offset_b;
    Ok(sol)
}

/// One-class dual `min ½αᵀGα` over `Σα = 1`, `0 ≤ α ≤ 1/(νn)`. The
/// returned `offset_b` is the threshold `b*` of `sign(Σ α_i k(x_i, x) − b*)`.
pub fn solve_oneclass_dual(g: &GramMatrix, nu: f64, cfg: &SolverConfig) -> Result<DualSolution> {
    solve_box_qp(&BoxQP::oneclass_dual(g, nu)?, cfg)
}

/// Result of an independent post-solve check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest distance outside `[l, u]`.
    pub box_violation: f64,
    /// `|aᵀα − r|`, compensated.
    pub equality_residual: f64,
    /// Maximal violating pair gap on a freshly computed gradient.
    pub stationarity_gap: f64,
}

impl KktReport {
    /// Feasible to 1e-12 (equality relative to `Σ|a_i α_i|`) and stationary
    /// to `kkt_tol`.
    pub fn certifies(&self, alpha_scale: f64, kkt_tol: f64) -> bool {
        self.box_violation <= 1e-12
            && self.equality_residual <= 1e-12 * alpha_scale.max(1.0)
            && self.stationarity_gap <= kkt_tol
    }
}

/// Recomputes feasibility and stationarity for `alpha` without touching any
/// solver state.
pub fn kkt_scan(qp: &BoxQP, alpha: &[f64]) -> KktReport {
    let box_violation = alpha
        .iter()
        .zip(qp.lower.iter().zip(&qp.upper))
        .fold(0.0f64, |m, (a, (l, u))| m.max(l - a).max(a - u));
    let equality_residual = (compensated_dot(&qp.eq_coeffs, alpha) - qp.eq_rhs).abs();

    // A point is stationary iff there is ρ with
    //   a_t∇_t ≥ ρ·a_t² when α_t can only go up, ≤ when it can only go down,
    //   and equality when free. With a_t = ±1 that is max over movable-up
    //   of −a_t∇_t not exceeding min over movable-down.
    let grad = qp.gradient(alpha);
    let mut up = f64::NEG_INFINITY;
    let mut down = f64::INFINITY;
    for t in 0..qp.n {
        let a = qp.eq_coeffs[t];
        if a == 0.0 {
            continue;
        }
        let score = -grad[t] / a;
        let can_increase = alpha[t] < qp.upper[t];
        let can_decrease = alpha[t] > qp.lower[t];
        // increasing aᵀα is possible through t
        let raises = if a > 0.0 { can_increase } else { can_decrease };
        let lowers = if a > 0.0 { can_decrease } else { can_increase };
        if raises {
            up = up.max(score);
        }
        if lowers {
            down = down.min(score);
        }
    }
    let stationarity_gap = if up.is_finite() && down.is_finite() {
        (up - down).max(0.0)
    } else {
        0.0
    };
    KktReport {
        box_violation,
        equality_residual,
        stationarity_gap,
    }
}

/// Exact solution by enumerating active sets.
///
/// For each free set `F` the KKT matrix `[[Q_FF, a_F], [a_Fᵀ, 0]]` is
/// factorised once; every assignment of the remaining coordinates to a bound
/// is then a triangular solve. Singular systems are skipped. Among the
/// feasible candidates the lowest objective wins.
pub fn brute_force_qp(qp: &BoxQP) -> Result<DualSolution> {
    let n = qp.n;
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let feas_tol = 1e-9 * (1.0 + qp.upper.iter().chain(&qp.lower).fold(0.0f64, |m, v| m.max(v.abs())));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut skipped = 0usize;
    let mut alpha = vec![0.0; n];

    for free_mask in 0u32..(1u32 << n) {
        let free: Vec<usize> = (0..n).filter(|&t| free_mask & (1 << t) != 0).collect();
        let bound: Vec<usize> = (0..n).filter(|&t| free_mask & (1 << t) == 0).collect();
        let k = free.len();

        // the multiplier row only exists if some free coordinate enters aᵀα
        let with_eq = free.iter().any(|&i| qp.eq_coeffs[i] != 0.0);
        let lu = if k > 0 {
            let dim = k + with_eq as usize;
            let mut m = vec![0.0; dim * dim];
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    m[r * dim + c] = qp.q(i, j);
                }
                if with_eq {
                    m[r * dim + k] = qp.eq_coeffs[i];
                    m[k * dim + r] = qp.eq_coeffs[i];
                }
            }
            match Lu::factor(m, dim) {
                Some(lu) => Some(lu),
                None => {
                    skipped += 1;
                    continue;
                }
            }
        } else {
            None
        };

        for bound_mask in 0u32..(1u32 << bound.len()) {
            for (b, &t) in bound.iter().enumerate() {
                alpha[t] = if bound_mask & (1 << b) != 0 {
                    qp.upper[t]
                } else {
                    qp.lower[t]
                };
            }
            if let Some(lu) = &lu {
                let mut rhs = vec![0.0; k + with_eq as usize];
                for (r, &i) in free.iter().enumerate() {
                    let qb: f64 = bound.iter().map(|&t| qp.q(i, t) * alpha[t]).sum();
                    rhs[r] = -qp.linear[i] - qb;
                }
                if with_eq {
                    rhs[k] = qp.eq_rhs - bound.iter().map(|&t| qp.eq_coeffs[t] * alpha[t]).sum::<f64>();
                }
                let x = lu.solve(rhs);
                let mut ok = true;
                for (r, &i) in free.iter().enumerate() {
                    let v = x[r];
                    if !(v >= qp.lower[i] - feas_tol && v <= qp.upper[i] + feas_tol) {
                        ok = false;
                        break;
                    }
                    alpha[i] = v.clamp(qp.lower[i], qp.upper[i]);
                }
                if !ok {
                    continue;
                }
            }
            if !with_eq && (dot(&qp.eq_coeffs, &alpha) - qp.eq_rhs).abs() > feas_tol {
                continue;
            }
            let f = qp.objective(&alpha);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, alpha.clone()));
            }
        }
    }
    if skipped > 0 {
        log::debug!("brute force skipped {skipped} singular active sets");
    }
    let (objective, alpha) = best.ok_or_else(|| Error::Infeasible("no feasible active set".into()))?;
    let grad = qp.gradient(&alpha);
    let offset_b = threshold(qp, &alpha, &grad);
    let kkt_residual = kkt_scan(qp, &alpha).stationarity_gap;
    Ok(DualSolution {
        alpha,
        offset_b,
        objective,
        kkt_residual,
        iterations: 0,
        converged: true,
    })
}

/// Dense LU with partial pivoting for the small KKT systems above.
struct Lu {
    dim: usize,
    m: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut m: Vec<f64>, dim: usize) -> Option<Self> {
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let mut perm: Vec<usize> = (0..dim).collect();
        for col in 0..dim {
            let (piv, pval) = (col..dim)
                .map(|r| (r, m[r * dim + col].abs()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pval <= 1e-11 * scale {
                return None;
            }
            if piv != col {
                for c in 0..dim {
                    m.swap(col * dim + c, piv * dim + c);
                }
                perm.swap(col, piv);
            }
            let d = m[col * dim + col];
            for r in (col + 1)..dim {
                let f = m[r * dim + col] / d;
                m[r * dim + col] = f;
                for c in (col + 1)..dim {
                    m[r * dim + c] -= f * m[col * dim + c];
                }
            }
        }
        Some(Self { dim, m, perm })
    }

    fn solve(&self, rhs: Vec<f64>) -> Vec<f64> {
        let dim = self.dim;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..dim {
            for c in 0..r {
                x[r] -= self.m[r * dim + c] * x[c];
            }
        }
        for r in (0..dim).rev() {
            for c in (r + 1)..dim {
                x[r] -= self.m[r * dim + c] * x[c];
            }
            x[r] /= self.m[r * dim + r];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram_matrix, KernelSpec, Provenance};
    use crate::matrix::Matrix;

    fn one_dim(lower: f64, upper: f64) -> BoxQP {
        // ½α² − α with a vacuous equality (coefficient 0)
        BoxQP::new(vec![1.0], vec![-1.0], vec![0.0], 0.0, vec![lower], vec![upper]).unwrap()
    }

    fn two_point() -> (GramMatrix, Labels) {
        let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let g = gram_matrix(&KernelSpec::Linear, &x).unwrap();
        (g, Labels::new(vec![-1, 1]).unwrap())
    }

    #[test]
    fn brute_force_interior_and_bound() {
        let s = brute_force_qp(&one_dim(0.0, 10.0)).unwrap();
        assert!((s.alpha[0] - 1.0).abs() < 1e-12);
        let s = brute_force_qp(&one_dim(0.0, 0.5)).unwrap();
        assert_eq!(s.alpha[0], 0.5);
    }

    #[test]
    fn brute_force_two_point() {
        let (g, y) = two_point();
        let s = brute_force_qp(&BoxQP::csvm_dual(&g, &y, 10.0).unwrap()).unwrap();
        assert!((s.alpha[0] - 0.5).abs() < 1e-12 && (s.alpha[1] - 0.5).abs() < 1e-12);
        // threshold ρ = 1, so b = −1
        assert!((s.offset_b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_rejects_large() {
        let n = BRUTE_FORCE_LIMIT + 1;
        let qp = BoxQP::new(
            vec![0.0; n * n],
            vec![0.0; n],
            vec![1.0; n],
            0.0,
            vec![0.0; n],
            vec![1.0; n],
        )
        .unwrap();
        assert!(matches!(brute_force_qp(&qp), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn csvm_two_point_closed_form() {
        // w = 1, b = −1: boundary at x = 1
        let (g, y) = two_point();
        let s = solve_csvm_dual(&g, &y, 10.0, &SolverConfig::default()).unwrap();
        assert!(s.converged);
        assert!((s.alpha[0] - 0.5).abs() < 1e-9);
        assert!((s.alpha[1] - 0.5).abs() < 1e-9);
        assert!((s.offset_b + 1.0).abs() < 1e-9);
        assert!((s.objective + 0.5).abs() < 1e-9);
    }

    #[test]
    fn csvm_opposite_duplicates_hit_the_box() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let g = gram_matrix(&KernelSpec::Linear, &x).unwrap();
        let y = Labels::new(vec![1, -1]).unwrap();
        let c = 0.1;
        let s = solve_csvm_dual(&g, &y, c, &SolverConfig::default()).unwrap();
        let oracle = brute_force_qp(&BoxQP::csvm_dual(&g, &y, c).unwrap()).unwrap();
        assert_eq!(s.alpha, vec![c, c]);
        assert_eq!(oracle.alpha, vec![c, c]);
    }

    #[test]
    fn csvm_rejects_single_class() {
        let (g, _) = two_point();
        let y = Labels::new(vec![1, 1]).unwrap();
        assert!(matches!(
            solve_csvm_dual(&g, &y, 1.0, &SolverConfig::default()),
            Err(Error::SingleClass)
        ));
        let y = Labels::new(vec![1, -1]).unwrap();
        assert!(solve_csvm_dual(&g, &y, 0.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn oneclass_nu_one_is_uniform() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [3.0], [-2.0]]).unwrap();
        let g = gram_matrix(&KernelSpec::gaussian(1.0).unwrap(), &x).unwrap();
        let s = solve_oneclass_dual(&g, 1.0, &SolverConfig::default()).unwrap();
        for a in &s.alpha {
            assert_eq!(*a, 0.25);
        }
    }

    #[test]
    fn oneclass_identity_example() {
        let g = GramMatrix::from_upper_fn(2, Provenance::SingleKernel, |i, j| (i == j) as u8 as f64);
        let s = solve_oneclass_dual(&g, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(s.alpha, vec![0.5, 0.5]);
        assert!((s.objective - 0.25).abs() < 1e-15);
    }

    #[test]
    fn oneclass_infeasible_nu() {
        let g = GramMatrix::from_upper_fn(4, Provenance::SingleKernel, |i, j| (i == j) as u8 as f64);
        let cfg = SolverConfig::default();
        assert!(matches!(solve_oneclass_dual(&g, 0.2, &cfg), Err(Error::Infeasible(_))));
        assert!(matches!(solve_oneclass_dual(&g, 0.0, &cfg), Err(Error::Infeasible(_))));
        assert!(matches!(solve_oneclass_dual(&g, 1.5, &cfg), Err(Error::Infeasible(_))));
        assert!(solve_oneclass_dual(&g, 0.25, &cfg).is_ok());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0]]).unwrap();
        let g = gram_matrix(&KernelSpec::Linear, &x).unwrap();
        let y = Labels::new(vec![-1, -1, 1, -1, 1]).unwrap();
        let cfg = SolverConfig {
            max_iterations: 1,
            kkt_tol: 1e-12,
            ..Default::default()
        };
        let s = solve_csvm_dual(&g, &y, 10.0, &cfg).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 1);
        assert!(s.kkt_residual > 1e-12);
    }

    #[test]
    fn kkt_scan_flags_bad_points() {
        let (g, y) = two_point();
        let qp = BoxQP::csvm_dual(&g, &y, 10.0).unwrap();
        let good = kkt_scan(&qp, &[0.5, 0.5]);
        assert!(good.certifies(1.0, 1e-9));
        let infeasible = kkt_scan(&qp, &[0.5, 0.4]);
        assert!(infeasible.equality_residual > 0.05);
        let suboptimal = kkt_scan(&qp, &[0.1, 0.1]);
        assert!(suboptimal.stationarity_gap > 0.5);
    }

    #[test]
    fn generic_solve_rejects_non_unit_coefficients() {
        let qp = BoxQP::new(vec![1.0], vec![-1.0], vec![2.0], 1.0, vec![0.0], vec![1.0]).unwrap();
        assert!(Smo::new(&qp, &SolverConfig::default()).is_err());
        let s = brute_force_qp(&qp).unwrap();
        assert!((s.alpha[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn qp_validation() {
        assert!(BoxQP::new(
            vec![1.0, 2.0, 3.0, 1.0],
            vec![0.0; 2],
            vec![1.0; 2],
            0.0,
            vec![0.0; 2],
            vec![1.0; 2]
        )
        .is_err());
        assert!(BoxQP::new(vec![1.0], vec![0.0], vec![1.0], 0.0, vec![1.0], vec![0.0]).is_err());
        assert!(BoxQP::new(vec![f64::NAN], vec![0.0], vec![1.0], 0.0, vec![0.0], vec![1.0]).is_err());
    }
}
