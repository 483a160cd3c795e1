//! Equality-constrained nonlinear least squares: an augmented-Lagrangian
//! outer loop around a Levenberg-Marquardt inner loop.
//!
//! The parameter vector is split into a dense head (trajectory coefficients,
//! biases, keyframe states) and trailing 3-vector landmark blocks. Residual
//! Jacobians store the dense columns as one matrix plus per-observation
//! 2x3 landmark blocks, so the normal equations can be formed without
//! touching the (mostly zero) landmark columns. The augmented system is
//! solved either densely or with a landmark Schur complement; both paths
//! produce identical steps.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

/// Solver tuning; defaults follow the values documented in the README.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// Relative decrease of the true cost that counts as converged.
    pub cost_tol: f64,
    /// Outer loop stops once max |c_k| falls below this.
    pub constraint_tol: f64,
    /// Step-size floor; steps below it end the inner loop.
    pub step_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Initial augmented-Lagrangian penalty mu.
    pub initial_penalty: f64,
    /// Multiplier applied to mu when the constraint violation stalls.
    pub penalty_growth: f64,
    /// Required violation shrink factor per outer iteration before mu grows.
    pub constraint_decrease: f64,
    /// Initial LM damping, scaled by diag(J^T J).
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Use the landmark Schur complement once 3 * landmarks exceeds this.
    pub schur_threshold: usize,
    /// Optional Huber width for the vision residuals (normalized coords);
    /// plain least squares when absent.
    pub huber_delta: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cost_tol: 1e-9,
            constraint_tol: 1e-8,
            step_tol: 1e-10,
            max_outer: 10,
            max_inner: 50,
            initial_penalty: 10.0,
            penalty_growth: 5.0,
            constraint_decrease: 4.0,
            initial_damping: 1e-4,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            schur_threshold: 150,
            huber_delta: None,
        }
    }
}

/// Squared-norm contribution of each residual family to the final cost.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CostBreakdown {
    pub prior: f64,
    pub accel: f64,
    pub gyro: f64,
    pub vision: f64,
}

/// Outcome of a constrained solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub outer_iterations: usize,
    /// Total inner LM iterations (accepted + rejected).
    pub inner_iterations: usize,
    pub accepted_steps: usize,
    /// Final true cost |r|^2 (augmentation excluded).
    pub final_cost: f64,
    /// Final max_k | |q(tau_k)| - 1 | (norm-deviation form of the constraints).
    pub max_constraint_violation: f64,
    pub cost_breakdown: CostBreakdown,
    /// Observations skipped for cheirality in the final residual evaluation.
    pub dropped_observations: usize,
    pub wall_time_s: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy)]
pub struct ProblemDims {
    pub residuals: usize,
    pub dense_params: usize,
    pub landmarks: usize,
    pub constraints: usize,
}

impl ProblemDims {
    pub fn total_params(&self) -> usize {
        self.dense_params + 3 * self.landmarks
    }
}

/// One 2x3 landmark block of a reprojection residual pair.
#[derive(Debug, Clone, Copy)]
pub struct LandmarkBlock {
    pub row: usize,
    pub landmark: usize,
    pub block: Matrix2x3<f64>,
}

/// Residual Jacobian split into dense columns and landmark blocks.
#[derive(Debug, Clone)]
pub struct StructuredJacobian {
    pub dense: DMatrix<f64>,
    pub landmark_blocks: Vec<LandmarkBlock>,
}

impl StructuredJacobian {
    /// Materialize the full matrix (dense columns then landmark columns).
    pub fn to_dense(&self, landmarks: usize) -> DMatrix<f64> {
        let m = self.dense.nrows();
        let nd = self.dense.ncols();
        let mut full = DMatrix::zeros(m, nd + 3 * landmarks);
        full.view_mut((0, 0), (m, nd)).copy_from(&self.dense);
        for lb in &self.landmark_blocks {
            for r in 0..2 {
                for c in 0..3 {
                    full[(lb.row + r, nd + 3 * lb.landmark + c)] += lb.block[(r, c)];
                }
            }
        }
        full
    }
}

/// A constrained least-squares problem over `[dense params | landmarks]`.
pub trait ConstrainedProblem {
    fn dims(&self) -> ProblemDims;

    /// Weighted residual vector.
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Equality constraints `c(x) = 0`.
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Residual Jacobian plus the constraint Jacobian over the dense
    /// parameters (constraints never touch landmarks).
    fn jacobians(&self, x: &DVector<f64>) -> (StructuredJacobian, DMatrix<f64>);

    fn cost_breakdown(&self, _r: &DVector<f64>) -> CostBreakdown {
        CostBreakdown::default()
    }

    /// Observations dropped (cheirality) in the most recent residual pass.
    fn dropped_observations(&self) -> usize {
        0
    }
}

/// Normal-equation blocks of the augmented system.
struct NormalEquations {
    h_dd: DMatrix<f64>,
    g_d: DVector<f64>,
    /// Per-landmark: H_dl (nd x 3), H_ll (3 x 3), g_l.
    h_dl: Vec<DMatrix<f64>>,
    h_ll: Vec<Matrix3<f64>>,
    g_l: Vec<Vector3<f64>>,
}

fn build_normal_equations(
    jac: &StructuredJacobian,
    cjac: &DMatrix<f64>,
    r: &DVector<f64>,
    c_shifted: &DVector<f64>,
    sqrt_mu: f64,
    landmarks: usize,
) -> NormalEquations {
    let m = jac.dense.nrows();
    let nc = cjac.nrows();
    let nd = jac.dense.ncols();

    // Stack the scaled constraint rows under the residual rows.
    let mut jd_aug = DMatrix::zeros(m + nc, nd);
    jd_aug.view_mut((0, 0), (m, nd)).copy_from(&jac.dense);
    jd_aug.view_mut((m, 0), (nc, nd)).copy_from(&(cjac * sqrt_mu));
    let mut r_aug = DVector::zeros(m + nc);
    r_aug.rows_mut(0, m).copy_from(r);
    r_aug.rows_mut(m, nc).copy_from(&(c_shifted * sqrt_mu));

    let h_dd = jd_aug.tr_mul(&jd_aug);
    let g_d_m = jd_aug.tr_mul(&r_aug);
    let g_d = DVector::from_column_slice(g_d_m.as_slice());

    let mut h_dl = vec![DMatrix::zeros(nd, 3); landmarks];
    let mut h_ll = vec![Matrix3::zeros(); landmarks];
    let mut g_l = vec![Vector3::zeros(); landmarks];
    for lb in &jac.landmark_blocks {
        let j = lb.landmark;
        let b = lb.block;
        h_ll[j] += b.tr_mul(&b);
        let r2 = Vector2::new(r_aug[lb.row], r_aug[lb.row + 1]);
        g_l[j] += b.tr_mul(&r2);
        let jd_rows = jd_aug.view((lb.row, 0), (2, nd));
        // H_dl += Jd_rows^T B
        for cc in 0..3 {
            for rr in 0..nd {
                h_dl[j][(rr, cc)] += jd_rows[(0, rr)] * b[(0, cc)] + jd_rows[(1, rr)] * b[(1, cc)];
            }
        }
    }

    NormalEquations { h_dd, g_d, h_dl, h_ll, g_l }
}

/// Solve `(H + nu diag(H)) delta = -g`; `None` when the factorization fails.
fn solve_step(ne: &NormalEquations, nu: f64, use_schur: bool) -> Option<DVector<f64>> {
    let nd = ne.h_dd.nrows();
    let n_lm = ne.h_ll.len();
    const DIAG_FLOOR: f64 = 1e-12;

    if !use_schur {
        let n = nd + 3 * n_lm;
        let mut h = DMatrix::zeros(n, n);
        h.view_mut((0, 0), (nd, nd)).copy_from(&ne.h_dd);
        let mut g = DVector::zeros(n);
        g.rows_mut(0, nd).copy_from(&ne.g_d);
        for j in 0..n_lm {
            let o = nd + 3 * j;
            h.view_mut((0, o), (nd, 3)).copy_from(&ne.h_dl[j]);
            h.view_mut((o, 0), (3, nd)).copy_from(&ne.h_dl[j].transpose());
            h.view_mut((o, o), (3, 3)).copy_from(&ne.h_ll[j]);
            g.rows_mut(o, 3).copy_from(&ne.g_l[j]);
        }
        for i in 0..n {
            h[(i, i)] += nu * h[(i, i)].max(DIAG_FLOOR);
        }
        let chol = h.cholesky()?;
        return Some(chol.solve(&(-g)));
    }

    // Landmark Schur complement.
    let mut s = ne.h_dd.clone();
    for i in 0..nd {
        s[(i, i)] += nu * s[(i, i)].max(DIAG_FLOOR);
    }
    let mut rhs = -ne.g_d.clone();
    let mut h_ll_inv = Vec::with_capacity(n_lm);
    for j in 0..n_lm {
        let mut h_ll = ne.h_ll[j];
        for i in 0..3 {
            h_ll[(i, i)] += nu * h_ll[(i, i)].max(DIAG_FLOOR);
        }
        let inv = h_ll.cholesky()?.inverse();
        // S -= H_dl H_ll^-1 H_dl^T ; rhs += H_dl H_ll^-1 g_l
        let hdl_inv = &ne.h_dl[j] * inv;
        s -= &hdl_inv * ne.h_dl[j].transpose();
        rhs += &hdl_inv * ne.g_l[j];
        h_ll_inv.push(inv);
    }
    let chol = s.cholesky()?;
    let delta_d = chol.solve(&rhs);
    let mut delta = DVector::zeros(nd + 3 * n_lm);
    delta.rows_mut(0, nd).copy_from(&delta_d);
    for j in 0..n_lm {
        let back = h_ll_inv[j] * (ne.g_l[j] + ne.h_dl[j].tr_mul(&delta_d));
        delta.rows_mut(nd + 3 * j, 3).copy_from(&(-back));
    }
    Some(delta)
}

/// Augmented cost `|r|^2 + mu |c + lambda/(2 mu)|^2`; differs from the
/// augmented Lagrangian by a constant, so the argmin is unchanged.
fn augmented_cost(r: &DVector<f64>, c: &DVector<f64>, lambda: &DVector<f64>, mu: f64) -> f64 {
    let mut cost = r.norm_squared();
    for k in 0..c.len() {
        let shifted = c[k] + lambda[k] / (2.0 * mu);
        cost += mu * shifted * shifted;
    }
    cost
}

/// Norm-deviation form of the squared-norm constraints, for reporting.
fn max_norm_deviation(c: &DVector<f64>) -> f64 {
    c.iter().map(|&ck| ((1.0 + ck).max(0.0).sqrt() - 1.0).abs()).fold(0.0, f64::max)
}

/// Minimize `|r(x)|^2` subject to `c(x) = 0`.
pub fn solve_constrained<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    x0: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolveReport)> {
    let start = std::time::Instant::now();
    let dims = problem.dims();
    if x0.len() != dims.total_params() {
        return Err(Error::InvalidParameter(format!(
            "initial guess has {} entries, problem expects {}",
            x0.len(),
            dims.total_params()
        )));
    }
    let use_schur = 3 * dims.landmarks > cfg.schur_threshold;

    let mut x = x0;
    let mut lambda = DVector::zeros(dims.constraints);
    let mut mu = cfg.initial_penalty;
    let mut prev_max_c = f64::INFINITY;
    let mut prev_true_cost = f64::INFINITY;

    let mut total_inner = 0usize;
    let mut accepted_total = 0usize;
    let mut outer_done = 0usize;
    let mut converged = false;
    let mut message = String::new();

    for outer in 1..=cfg.max_outer {
        outer_done = outer;
        // Each multiplier update needs the subproblem solved more accurately
        // than the constraint target, so the inner tolerance tightens
        // geometrically across outer iterations.
        let inner_cost_tol = (cfg.cost_tol * 0.1_f64.powi(outer as i32 - 1)).max(1e-16);

        // Inner Levenberg-Marquardt pass on the augmented least squares.
        let mut r = problem.residuals(&x);
        let mut c = problem.constraints(&x);
        let (mut jac, mut cjac) = problem.jacobians(&x);
        if outer == 1 && dims.constraints > 0 {
            // The multiplier iteration contracts at a rate set by the ratio
            // of residual curvature to penalty; anchor the initial penalty to
            // the mean Gauss-Newton diagonal of the constraint-affected
            // columns so whitened problems of any scale behave alike.
            let mut scale_sum = 0.0;
            let mut scale_cnt = 0usize;
            for col in 0..jac.dense.ncols() {
                if (0..cjac.nrows()).any(|k| cjac[(k, col)] != 0.0) {
                    scale_sum += jac.dense.column(col).norm_squared();
                    scale_cnt += 1;
                }
            }
            if scale_cnt > 0 {
                mu *= (scale_sum / scale_cnt as f64).max(1.0);
            }
        }
        let sqrt_mu = mu.sqrt();
        let shift = &lambda / (2.0 * mu);
        let mut cost = augmented_cost(&r, &c, &lambda, mu);
        if !cost.is_finite() {
            return Err(Error::SolverDiverged(format!(
                "non-finite cost at outer iteration {outer}"
            )));
        }
        let mut ne =
            build_normal_equations(&jac, &cjac, &r, &(&c + &shift), sqrt_mu, dims.landmarks);
        let mut nu = cfg.initial_damping;

        let mut inner = 0usize;
        while inner < cfg.max_inner {
            inner += 1;
            total_inner += 1;
            let delta = match solve_step(&ne, nu, use_schur) {
                Some(d) => d,
                None => {
                    nu *= cfg.damping_increase;
                    if nu > 1e16 {
                        break;
                    }
                    continue;
                }
            };
            if delta.norm() <= cfg.step_tol * (x.norm() + cfg.step_tol) {
                break;
            }
            let x_try = &x + &delta;
            let r_try = problem.residuals(&x_try);
            let c_try = problem.constraints(&x_try);
            let cost_try = augmented_cost(&r_try, &c_try, &lambda, mu);
            if cost_try.is_finite() && cost_try < cost {
                let rel_decrease = (cost - cost_try) / cost.max(1e-300);
                x = x_try;
                r = r_try;
                c = c_try;
                cost = cost_try;
                accepted_total += 1;
                nu = (nu / cfg.damping_decrease).max(1e-12);
                if rel_decrease < inner_cost_tol {
                    break;
                }
                let (j2, cj2) = problem.jacobians(&x);
                jac = j2;
                cjac = cj2;
                ne = build_normal_equations(
                    &jac,
                    &cjac,
                    &r,
                    &(&c + &shift),
                    sqrt_mu,
                    dims.landmarks,
                );
            } else {
                nu *= cfg.damping_increase;
                if nu > 1e16 {
                    break;
                }
            }
        }

        let true_cost = r.norm_squared();
        let max_c = c.amax();
        if true_cost > 1e12 || !true_cost.is_finite() {
            return Err(Error::SolverDiverged(format!(
                "cost {true_cost:.3e} after outer iteration {outer} ({total_inner} inner steps)"
            )));
        }
        let cost_settled =
            (prev_true_cost - true_cost).abs() <= cfg.cost_tol * prev_true_cost.max(1.0);
        if (dims.constraints == 0 || max_c < cfg.constraint_tol) && cost_settled {
            converged = true;
            break;
        }
        if std::env::var_os("CHEBVIO_SOLVER_TRACE").is_some() {
            eprintln!(
                "outer {outer}: cost {true_cost:.6e} max|c| {max_c:.3e} mu {mu:.1e} inner {total_inner}"
            );
        }
        // Multiplier update, then penalty growth if the violation stalls.
        lambda += &c * (2.0 * mu);
        if max_c > prev_max_c / cfg.constraint_decrease {
            mu *= cfg.penalty_growth;
        }
        prev_max_c = max_c;
        prev_true_cost = true_cost;
    }

    let r = problem.residuals(&x);
    let c = problem.constraints(&x);
    if !converged {
        message =
            format!("iteration cap reached (outer {}, max |c| {:.3e})", outer_done, c.amax());
    }
    let report = SolveReport {
        converged,
        outer_iterations: outer_done,
        inner_iterations: total_inner,
        accepted_steps: accepted_total,
        final_cost: r.norm_squared(),
        max_constraint_violation: max_norm_deviation(&c),
        cost_breakdown: problem.cost_breakdown(&r),
        dropped_observations: problem.dropped_observations(),
        wall_time_s: start.elapsed().as_secs_f64(),
        message,
    };
    Ok((x, report))
}
