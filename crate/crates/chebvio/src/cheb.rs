//! Chebyshev polynomials of the first kind: evaluation, derivatives,
//! antiderivatives, collocation points, Clenshaw-Curtis quadrature, the
//! affine time map, and Floater-Hormann barycentric interpolation of
//! equispaced samples.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Slack allowed outside [-1, 1] before a tau is rejected; absorbs rounding
/// from the affine time map at interval endpoints.
pub const TAU_EPS: f64 = 1e-9;

fn clamp_tau(tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau < -1.0 - TAU_EPS || tau > 1.0 + TAU_EPS {
        return Err(Error::TauOutOfDomain(tau));
    }
    Ok(tau.clamp(-1.0, 1.0))
}

/// Values `[F_0(tau), ..., F_order(tau)]` by the three-term recurrence
/// `F_{i+1} = 2 tau F_i - F_{i-1}`.
pub fn eval_basis(order: usize, tau: f64) -> Result<DVector<f64>> {
    let tau = clamp_tau(tau)?;
    let mut f = DVector::zeros(order + 1);
    f[0] = 1.0;
    if order >= 1 {
        f[1] = tau;
    }
    for i in 1..order {
        f[i + 1] = 2.0 * tau * f[i] - f[i - 1];
    }
    Ok(f)
}

/// Derivatives `[F_0'(tau), ..., F_order'(tau)]` via
/// `F_{i+1}' = 2 F_i + 2 tau F_i' - F_{i-1}'`.
pub fn eval_basis_derivative(order: usize, tau: f64) -> Result<DVector<f64>> {
    let tau = clamp_tau(tau)?;
    let mut f = DVector::zeros(order + 1);
    let mut df = DVector::zeros(order + 1);
    f[0] = 1.0;
    df[0] = 0.0;
    if order >= 1 {
        f[1] = tau;
        df[1] = 1.0;
    }
    for i in 1..order {
        f[i + 1] = 2.0 * tau * f[i] - f[i - 1];
        df[i + 1] = 2.0 * f[i] + 2.0 * tau * df[i] - df[i - 1];
    }
    Ok(df)
}

/// Antiderivatives `G_i(tau) = integral of F_i from -1 to tau`, expressed
/// through neighbouring-degree polynomials; the `i = 1` case is special.
pub fn eval_basis_integral(order: usize, tau: f64) -> Result<DVector<f64>> {
    let tau = clamp_tau(tau)?;
    if tau == -1.0 {
        // Integral over an empty interval; exact zeros keep the position
        // endpoint identity bit-reproducible.
        return Ok(DVector::zeros(order + 1));
    }
    // Need F up to order+1.
    let f = eval_basis(order + 1, tau)?;
    let mut g = DVector::zeros(order + 1);
    for i in 0..=order {
        if i == 1 {
            g[1] = f[2] / 4.0 - f[0] / 4.0;
        } else {
            let i_f = i as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let lower = if i == 0 { f[1] / -2.0 } else { f[i - 1] / (2.0 * (i_f - 1.0)) };
            g[i] = f[i + 1] / (2.0 * (i_f + 1.0)) - lower - sign / (i_f * i_f - 1.0) * f[0];
        }
    }
    Ok(g)
}

/// Chebyshev points `-cos(i pi / N)` for `i = 0..=N`, ascending. Computed in
/// sine form so the endpoints are exact and the set is exactly symmetric.
pub fn chebyshev_points(n: usize) -> DVector<f64> {
    assert!(n >= 1, "need at least two Chebyshev points");
    let nf = n as f64;
    DVector::from_fn(n + 1, |i, _| {
        let k = 2.0 * i as f64 - nf;
        (std::f64::consts::PI * k / (2.0 * nf)).sin()
    })
}

/// Clenshaw-Curtis quadrature over [-1, 1].
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: DVector<f64>,
    pub weights: DVector<f64>,
}

/// Clenshaw-Curtis rule on the `n + 1` Chebyshev points (`n` even, >= 2).
/// Weights come from the closed-form cosine sum; the rule integrates all
/// polynomials of degree <= `n` exactly.
pub fn clenshaw_curtis(n: usize) -> Result<QuadratureRule> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "Clenshaw-Curtis order must be even and >= 2, got {n}"
        )));
    }
    let nodes = chebyshev_points(n);
    let nf = n as f64;
    let half = n / 2;
    let mut weights = DVector::zeros(n + 1);
    for i in 0..=n {
        let theta = i as f64 * std::f64::consts::PI / nf;
        let mut sum = 0.0;
        for j in 1..=half {
            let b = if j == half { 1.0 } else { 2.0 };
            let jf = j as f64;
            sum += b * (2.0 * jf * theta).cos() / (4.0 * jf * jf - 1.0);
        }
        let c = if i == 0 || i == n { 1.0 } else { 2.0 };
        weights[i] = c / nf * (1.0 - sum);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Affine map between a time interval `[t0, t_end]` and tau in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMap {
    t0: f64,
    t_end: f64,
}

impl TimeMap {
    pub fn new(t0: f64, t_end: f64) -> Result<Self> {
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time interval must satisfy t_end > t0, got [{t0}, {t_end}]"
            )));
        }
        Ok(TimeMap { t0, t_end })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// `(t_end - t0) / 2`, the Jacobian of `to_time`.
    pub fn half_span(&self) -> f64 {
        0.5 * (self.t_end - self.t0)
    }

    pub fn span(&self) -> f64 {
        self.t_end - self.t0
    }

    pub fn to_tau(&self, t: f64) -> f64 {
        2.0 * (t - self.t0) / (self.t_end - self.t0) - 1.0
    }

    pub fn to_time(&self, tau: f64) -> f64 {
        self.t0 + (tau + 1.0) * self.half_span()
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = TAU_EPS * self.span().max(1.0);
        t >= self.t0 - slack && t <= self.t_end + slack
    }
}

/// Floater-Hormann barycentric rational interpolant of vector-valued samples
/// on an equispaced time grid. Pole-free on the sample span, exact at the
/// nodes, and reproduces polynomials up to the blend degree `d`.
#[derive(Debug, Clone)]
pub struct EfhInterpolant {
    t0: f64,
    dt: f64,
    /// One column per sample.
    samples: DMatrix<f64>,
    /// Barycentric weights, one per node.
    weights: Vec<f64>,
    blend_degree: usize,
}

/// Relative spacing deviation tolerated by [`efh_build`].
const EFH_SPACING_TOL: f64 = 1e-6;

/// Build the interpolant. `times` must be (nominally) equispaced and
/// `samples` holds one column per time. Requires at least `d + 1` samples.
pub fn efh_build(times: &[f64], samples: &DMatrix<f64>, d: usize) -> Result<EfhInterpolant> {
    let n_nodes = times.len();
    if n_nodes < d + 1 || n_nodes < 2 {
        return Err(Error::InvalidParameter(format!(
            "Floater-Hormann with blend degree {d} needs at least {} samples, got {n_nodes}",
            (d + 1).max(2)
        )));
    }
    if samples.ncols() != n_nodes {
        return Err(Error::InvalidParameter(format!(
            "sample count {} does not match time count {n_nodes}",
            samples.ncols()
        )));
    }
    let t0 = times[0];
    let dt = (times[n_nodes - 1] - t0) / (n_nodes - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(
            "sample times must be strictly increasing".into(),
        ));
    }
    let mut max_dev: f64 = 0.0;
    for (k, &t) in times.iter().enumerate() {
        max_dev = max_dev.max((t - (t0 + k as f64 * dt)).abs());
    }
    if max_dev > EFH_SPACING_TOL * dt {
        return Err(Error::NonEquispacedSamples { max_dev });
    }

    // Equispaced Floater-Hormann weights: w_k = (-1)^k * sum of binomials
    // C(d, k - i) over the pieces overlapping node k.
    let n = n_nodes - 1;
    let binom: Vec<f64> = {
        let mut b = vec![1.0f64; d + 1];
        for j in 1..=d {
            b[j] = b[j - 1] * (d - j + 1) as f64 / j as f64;
        }
        b
    };
    let mut weights = Vec::with_capacity(n_nodes);
    for k in 0..=n {
        let lo = k.saturating_sub(d);
        let hi = k.min(n - d);
        let mut delta = 0.0;
        for i in lo..=hi {
            delta += binom[k - i];
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        weights.push(sign * delta);
    }

    Ok(EfhInterpolant {
        t0,
        dt,
        samples: samples.clone(),
        weights,
        blend_degree: d,
    })
}

impl EfhInterpolant {
    pub fn blend_degree(&self) -> usize {
        self.blend_degree
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t0, self.t0 + self.dt * (self.samples.ncols() - 1) as f64)
    }

    /// Evaluate at time `t`; errors outside the sample span.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let n_nodes = self.samples.ncols();
        let (start, end) = self.span();
        let slack = 1e-9 * self.dt;
        if t < start - slack || t > end + slack {
            return Err(Error::Extrapolation { t, start, end });
        }
        // Snap to a node when within rounding distance; the barycentric form
        // is singular exactly at the nodes.
        let nearest = ((t - self.t0) / self.dt).round().clamp(0.0, (n_nodes - 1) as f64) as usize;
        let t_near = self.t0 + nearest as f64 * self.dt;
        if (t - t_near).abs() <= 1e-9 * self.dt {
            return Ok(self.samples.column(nearest).into_owned());
        }
        let mut num = DVector::zeros(self.samples.nrows());
        let mut den = 0.0;
        for k in 0..n_nodes {
            let tk = self.t0 + k as f64 * self.dt;
            let c = self.weights[k] / (t - tk);
            num.axpy(c, &self.samples.column(k), 1.0);
            den += c;
        }
        Ok(num / den)
    }
}

/// Basis values stacked as a matrix: column `j` holds `F(taus[j])`,
/// rows run over polynomial degree `0..=order`.
pub fn basis_matrix(order: usize, taus: &[f64]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(order + 1, taus.len());
    for (j, &tau) in taus.iter().enumerate() {
        m.set_column(j, &eval_basis(order, tau)?);
    }
    Ok(m)
}

/// Same layout as [`basis_matrix`] for the derivative recurrence.
pub fn basis_derivative_matrix(order: usize, taus: &[f64]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(order + 1, taus.len());
    for (j, &tau) in taus.iter().enumerate() {
        m.set_column(j, &eval_basis_derivative(order, tau)?);
    }
    Ok(m)
}

/// Same layout as [`basis_matrix`] for the antiderivatives.
pub fn basis_integral_matrix(order: usize, taus: &[f64]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(order + 1, taus.len());
    for (j, &tau) in taus.iter().enumerate() {
        m.set_column(j, &eval_basis_integral(order, tau)?);
    }
    Ok(m)
}
