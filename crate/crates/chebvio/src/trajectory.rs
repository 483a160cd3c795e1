//! Continuous-time pose over a window: attitude and velocity as Chebyshev
//! expansions, position by analytic integration of the velocity polynomial.
//!
//! All time derivatives carry the chain-rule factor `2 / (t_end - t0)` of
//! the affine time map; it is applied here and nowhere else.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, Matrix3xX, Matrix4xX, Vector3};

use crate::cheb::{self, TimeMap};
use crate::error::{Error, Result};
use crate::geometry::Quat;

/// Pose polynomial: quaternion coefficients `D` (4 x (order_q + 1)),
/// velocity coefficients `K` (3 x (order_v + 1), m/s), position at the
/// window start, and the time map.
#[derive(Debug, Clone)]
pub struct ChebTrajectory {
    d: Matrix4xX<f64>,
    k: Matrix3xX<f64>,
    p0: Vector3<f64>,
    map: TimeMap,
}

/// Residual summary returned by [`ChebTrajectory::fit_to_samples`].
#[derive(Debug, Clone, Copy)]
pub struct FitReport {
    pub max_quat_residual: f64,
    pub max_vel_residual: f64,
}

impl ChebTrajectory {
    pub fn new(
        d: Matrix4xX<f64>,
        k: Matrix3xX<f64>,
        p0: Vector3<f64>,
        map: TimeMap,
    ) -> Result<Self> {
        if d.ncols() == 0 || k.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "coefficient matrices need at least the degree-0 column".into(),
            ));
        }
        Ok(ChebTrajectory { d, k, p0, map })
    }

    /// Constant-pose trajectory, useful as a seed.
    pub fn constant(
        q: Quat,
        v: Vector3<f64>,
        p0: Vector3<f64>,
        order_q: usize,
        order_v: usize,
        map: TimeMap,
    ) -> Self {
        let mut d = Matrix4xX::zeros(order_q + 1);
        d.set_column(0, &q.as_vector4());
        let mut k = Matrix3xX::zeros(order_v + 1);
        k.set_column(0, &v);
        ChebTrajectory { d, k, p0, map }
    }

    pub fn order_q(&self) -> usize {
        self.d.ncols() - 1
    }

    pub fn order_v(&self) -> usize {
        self.k.ncols() - 1
    }

    pub fn coeffs_q(&self) -> &Matrix4xX<f64> {
        &self.d
    }

    pub fn coeffs_v(&self) -> &Matrix3xX<f64> {
        &self.k
    }

    pub fn p0(&self) -> Vector3<f64> {
        self.p0
    }

    pub fn time_map(&self) -> TimeMap {
        self.map
    }

    /// Raw polynomial quaternion `D F(tau)`; not normalized. Callers that
    /// need a rotation normalize explicitly.
    pub fn attitude_at(&self, tau: f64) -> Result<Quat> {
        let f = cheb::eval_basis(self.order_q(), tau)?;
        Ok(Quat::from_vector4(&(&self.d * f)))
    }

    /// Quaternion time derivative in 1/s: `(2 / span) D F'(tau)`.
    pub fn attitude_rate_at(&self, tau: f64) -> Result<Quat> {
        let df = cheb::eval_basis_derivative(self.order_q(), tau)?;
        let scale = 1.0 / self.map.half_span();
        Ok(Quat::from_vector4(&(&self.d * df)).scaled(scale))
    }

    /// `K F(tau)` in m/s.
    pub fn velocity_at(&self, tau: f64) -> Result<Vector3<f64>> {
        let f = cheb::eval_basis(self.order_v(), tau)?;
        Ok(&self.k * f)
    }

    /// `(2 / span) K F'(tau)` in m/s^2.
    pub fn acceleration_at(&self, tau: f64) -> Result<Vector3<f64>> {
        let df = cheb::eval_basis_derivative(self.order_v(), tau)?;
        Ok(&self.k * df / self.map.half_span())
    }

    /// `p0 + (span / 2) sum_i k_i G_i(tau)` in m.
    pub fn position_at(&self, tau: f64) -> Result<Vector3<f64>> {
        let g = cheb::eval_basis_integral(self.order_v(), tau)?;
        Ok(self.p0 + (&self.k * g) * self.map.half_span())
    }

    /// Convenience: sample attitude (normalized), velocity and position at a
    /// wall-clock time.
    pub fn state_at_time(&self, t: f64) -> Result<(Quat, Vector3<f64>, Vector3<f64>)> {
        let tau = self.map.to_tau(t);
        Ok((
            self.attitude_at(tau)?.normalized(),
            self.velocity_at(tau)?,
            self.position_at(tau)?,
        ))
    }

    /// Least-squares fit of the coefficient matrices to pose samples.
    /// Quaternion samples are made sign-continuous before fitting. Requires
    /// at least `max(order_q, order_v) + 1` samples spanning the window.
    pub fn fit_to_samples(
        times: &[f64],
        quats: &[Quat],
        vels: &[Vector3<f64>],
        p0: Vector3<f64>,
        order_q: usize,
        order_v: usize,
        map: TimeMap,
    ) -> Result<(Self, FitReport)> {
        let m = times.len();
        if quats.len() != m || vels.len() != m {
            return Err(Error::InvalidParameter(
                "times, quats and vels must have equal length".into(),
            ));
        }
        if m < order_q.max(order_v) + 1 {
            return Err(Error::FitFailed(format!(
                "{m} samples cannot determine order {} coefficients",
                order_q.max(order_v)
            )));
        }
        let taus: Vec<f64> = times.iter().map(|&t| map.to_tau(t)).collect();

        // Sign continuity: flip any sample that is antipodal to its
        // predecessor, otherwise the polynomial fit has to cross zero.
        let mut qs: Vec<Quat> = Vec::with_capacity(m);
        for (i, q) in quats.iter().enumerate() {
            let q = if i > 0 && q.dot(&qs[i - 1]) < 0.0 { q.scaled(-1.0) } else { *q };
            qs.push(q);
        }

        let dq = solve_basis_lsq(order_q, &taus, 4, &|i, c| qs[i].as_vector4()[c])?;
        let dv = solve_basis_lsq(order_v, &taus, 3, &|i, c| vels[i][c])?;

        let d = Matrix4xX::from_fn(order_q + 1, |r, c| dq[(c, r)]);
        let k = Matrix3xX::from_fn(order_v + 1, |r, c| dv[(c, r)]);
        let traj = ChebTrajectory { d, k, p0, map };

        let mut max_q: f64 = 0.0;
        let mut max_v: f64 = 0.0;
        for (i, &tau) in taus.iter().enumerate() {
            let q = traj.attitude_at(tau)?;
            max_q = max_q.max((q.as_vector4() - qs[i].as_vector4()).amax());
            let v = traj.velocity_at(tau)?;
            max_v = max_v.max((v - vels[i]).amax());
        }
        Ok((
            traj,
            FitReport {
                max_quat_residual: max_q,
                max_vel_residual: max_v,
            },
        ))
    }

    /// Plain-text dump in the long CSV format `kind,row,col,value`
    /// (kinds: `t0`, `t_end`, `d`, `k`, `p0`); see the README for details.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,row,col,value")?;
        writeln!(w, "t0,0,0,{}", self.map.t0())?;
        writeln!(w, "t_end,0,0,{}", self.map.t_end())?;
        for c in 0..self.d.ncols() {
            for r in 0..4 {
                writeln!(w, "d,{r},{c},{}", self.d[(r, c)])?;
            }
        }
        for c in 0..self.k.ncols() {
            for r in 0..3 {
                writeln!(w, "k,{r},{c},{}", self.k[(r, c)])?;
            }
        }
        for r in 0..3 {
            writeln!(w, "p0,{r},0,{}", self.p0[r])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut t0 = None;
        let mut t_end = None;
        let mut d_entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut k_entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut p0 = Vector3::zeros();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<trajectory csv>", e))?;
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim().split(',').collect();
            let bad = |reason: &str| Error::MalformedRow {
                path: "<trajectory csv>".into(),
                row: idx,
                reason: reason.into(),
            };
            if parts.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let row: usize = parts[1].parse().map_err(|_| bad("bad row index"))?;
            let col: usize = parts[2].parse().map_err(|_| bad("bad col index"))?;
            let value: f64 = parts[3].parse().map_err(|_| bad("bad value"))?;
            match parts[0] {
                "t0" => t0 = Some(value),
                "t_end" => t_end = Some(value),
                "d" => d_entries.push((row, col, value)),
                "k" => k_entries.push((row, col, value)),
                "p0" => p0[row] = value,
                other => return Err(bad(&format!("unknown kind {other:?}"))),
            }
        }
        let (t0, t_end) = match (t0, t_end) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::FitFailed("trajectory csv missing time interval".into())),
        };
        let nq = d_entries.iter().map(|e| e.1).max().map(|c| c + 1).unwrap_or(1);
        let nv = k_entries.iter().map(|e| e.1).max().map(|c| c + 1).unwrap_or(1);
        let mut d = Matrix4xX::zeros(nq);
        let mut k = Matrix3xX::zeros(nv);
        for (r, c, v) in d_entries {
            d[(r, c)] = v;
        }
        for (r, c, v) in k_entries {
            k[(r, c)] = v;
        }
        ChebTrajectory::new(d, k, p0, TimeMap::new(t0, t_end)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Least squares `A x = b` over the Chebyshev design matrix; returns the
/// coefficient matrix ((order+1) x dims). Errors on rank deficiency.
fn solve_basis_lsq(
    order: usize,
    taus: &[f64],
    dims: usize,
    sample: &dyn Fn(usize, usize) -> f64,
) -> Result<DMatrix<f64>> {
    let m = taus.len();
    let mut a = DMatrix::zeros(m, order + 1);
    for (i, &tau) in taus.iter().enumerate() {
        let f = cheb::eval_basis(order, tau)?;
        for j in 0..=order {
            a[(i, j)] = f[j];
        }
    }
    let mut b = DMatrix::zeros(m, dims);
    for i in 0..m {
        for c in 0..dims {
            b[(i, c)] = sample(i, c);
        }
    }
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let rank_tol = s_max * 1e-12 * (m.max(order + 1) as f64);
    let rank = svd.singular_values.iter().filter(|&&s| s > rank_tol).count();
    if rank < order + 1 {
        return Err(Error::FitFailed(format!(
            "design matrix rank {rank} below {} (sample coverage too thin)",
            order + 1
        )));
    }
    svd.solve(&b, rank_tol).map_err(|e| Error::FitFailed(e.to_string()))
}

/// Analytic coning attitude: rotation axis sweeping a cone, cone angle
/// `alpha`, sweep rate `zeta` rad/s. Used by tests and the straight-line
/// simulation.
pub fn coning_quaternion(alpha: f64, zeta: f64, t: f64) -> Quat {
    let half = 0.5 * alpha;
    Quat::new(half.cos(), 0.0, half.sin() * (zeta * t).cos(), half.sin() * (zeta * t).sin())
}

/// Time derivative of [`coning_quaternion`].
pub fn coning_quaternion_rate(alpha: f64, zeta: f64, t: f64) -> Quat {
    let half = 0.5 * alpha;
    Quat::new(
        0.0,
        0.0,
        -half.sin() * zeta * (zeta * t).sin(),
        half.sin() * zeta * (zeta * t).cos(),
    )
}

/// Body angular velocity of the coning motion, `2 vec(q* q_dot)`.
pub fn coning_body_rate(alpha: f64, zeta: f64, t: f64) -> Vector3<f64> {
    (coning_quaternion(alpha, zeta, t).conjugate() * coning_quaternion_rate(alpha, zeta, t)).vec()
        * 2.0
}
