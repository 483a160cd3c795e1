//! Attitude/velocity/position error metrics between estimated and reference
//! state series, with the aggregate ARMSE (over Monte-Carlo runs and epochs)
//! and per-segment SM-RMSE statistics.

use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Quat;

/// States sampled on a common time grid.
#[derive(Debug, Clone, Default)]
pub struct StateSeries {
    pub times: Vec<f64>,
    pub quats: Vec<Quat>,
    pub vels: Vec<Vector3<f64>>,
    pub poss: Vec<Vector3<f64>>,
}

impl StateSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, q: Quat, v: Vector3<f64>, p: Vector3<f64>) {
        self.times.push(t);
        self.quats.push(q);
        self.vels.push(v);
        self.poss.push(p);
    }
}

/// Per-epoch error norms of one run: attitude in degrees (rotation-vector
/// norm of the error quaternion), velocity m/s, position m. The per-axis
/// attitude error is kept alongside for plotting.
#[derive(Debug, Clone, Default)]
pub struct EpochErrors {
    pub times: Vec<f64>,
    pub att_deg: Vec<f64>,
    pub att_axes_deg: Vec<Vector3<f64>>,
    pub vel: Vec<f64>,
    pub pos: Vec<f64>,
}

/// Aggregate accumulative RMSE over runs and epochs.
#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct Armse {
    pub attitude_deg: f64,
    pub velocity: f64,
    pub position: f64,
}

/// Statistical mean of per-segment RMSEs: the inner epoch sum is not
/// normalized, so segments must have uniform length for comparability.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SmRmse {
    pub attitude_deg: f64,
    pub velocity: f64,
    pub position: f64,
}

/// Per-epoch errors between an estimate and the reference on the same grid.
pub fn epoch_errors(est: &StateSeries, truth: &StateSeries) -> Result<EpochErrors> {
    if est.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "series length mismatch: {} vs {}",
            est.len(),
            truth.len()
        )));
    }
    let mut out = EpochErrors::default();
    for k in 0..est.len() {
        if (est.times[k] - truth.times[k]).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "time grids differ at epoch {k}: {} vs {}",
                est.times[k], truth.times[k]
            )));
        }
        let rv = (truth.quats[k].conjugate() * est.quats[k]).log();
        out.times.push(est.times[k]);
        out.att_deg.push(rv.norm().to_degrees());
        out.att_axes_deg.push(rv.map(|v| v.to_degrees()));
        out.vel.push((est.vels[k] - truth.vels[k]).norm());
        out.pos.push((est.poss[k] - truth.poss[k]).norm());
    }
    Ok(out)
}

/// Per-epoch mean error norms across runs.
pub fn avg_error(runs: &[EpochErrors]) -> Result<EpochErrors> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least one run to average".into()))?;
    let z = first.times.len();
    for r in runs {
        if r.times.len() != z {
            return Err(Error::InvalidParameter("runs have differing epoch counts".into()));
        }
    }
    let h = runs.len() as f64;
    let mut out = EpochErrors {
        times: first.times.clone(),
        att_deg: vec![0.0; z],
        att_axes_deg: vec![Vector3::zeros(); z],
        vel: vec![0.0; z],
        pos: vec![0.0; z],
    };
    for r in runs {
        for k in 0..z {
            out.att_deg[k] += r.att_deg[k] / h;
            out.att_axes_deg[k] += r.att_axes_deg[k].map(f64::abs) / h;
            out.vel[k] += r.vel[k] / h;
            out.pos[k] += r.pos[k] / h;
        }
    }
    Ok(out)
}

/// Accumulative RMSE over all runs and epochs.
pub fn armse(runs: &[EpochErrors]) -> Result<Armse> {
    let mut n = 0usize;
    let (mut sq, mut sv, mut sp) = (0.0, 0.0, 0.0);
    for r in runs {
        for k in 0..r.times.len() {
            sq += r.att_deg[k] * r.att_deg[k];
            sv += r.vel[k] * r.vel[k];
            sp += r.pos[k] * r.pos[k];
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidParameter("no epochs to aggregate".into()));
    }
    let n = n as f64;
    Ok(Armse {
        attitude_deg: (sq / n).sqrt(),
        velocity: (sv / n).sqrt(),
        position: (sp / n).sqrt(),
    })
}

/// `sqrt( (1/H_s) sum_segments sum_epochs |err|^2 )` per state family.
pub fn sm_rmse(segments: &[EpochErrors]) -> Result<SmRmse> {
    if segments.is_empty() {
        return Err(Error::InvalidParameter("no segments to aggregate".into()));
    }
    let h = segments.len() as f64;
    let (mut sq, mut sv, mut sp) = (0.0, 0.0, 0.0);
    for s in segments {
        for k in 0..s.times.len() {
            sq += s.att_deg[k] * s.att_deg[k];
            sv += s.vel[k] * s.vel[k];
            sp += s.pos[k] * s.pos[k];
        }
    }
    Ok(SmRmse {
        attitude_deg: (sq / h).sqrt(),
        velocity: (sv / h).sqrt(),
        position: (sp / h).sqrt(),
    })
}

/// RMSE over the epochs of a single run/segment.
pub fn segment_rmse(errors: &EpochErrors) -> Armse {
    armse(std::slice::from_ref(errors)).unwrap_or_default()
}

/// Write a per-epoch error series as CSV
/// (`time_s,att_err_deg,att_x_deg,att_y_deg,att_z_deg,vel_err_mps,pos_err_m`).
pub fn write_epoch_csv<W: Write>(mut w: W, e: &EpochErrors) -> std::io::Result<()> {
    writeln!(w, "time_s,att_err_deg,att_x_deg,att_y_deg,att_z_deg,vel_err_mps,pos_err_m")?;
    for k in 0..e.times.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.times[k],
            e.att_deg[k],
            e.att_axes_deg[k].x,
            e.att_axes_deg[k].y,
            e.att_axes_deg[k].z,
            e.vel[k],
            e.pos[k]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn series(n: usize, f: impl Fn(usize) -> (Quat, Vector3<f64>, Vector3<f64>)) -> StateSeries {
        let mut s = StateSeries::default();
        for k in 0..n {
            let (q, v, p) = f(k);
            s.push(k as f64 * 0.1, q, v, p);
        }
        s
    }

    fn truth(n: usize) -> StateSeries {
        series(n, |k| {
            (
                Quat::from_axis_angle(Vector3::new(1.0, 0.3, -0.2), 0.05 * k as f64),
                Vector3::new(0.1 * k as f64, 0.0, 1.0),
                Vector3::new(k as f64, -0.5 * k as f64, 0.2),
            )
        })
    }

    #[test]
    fn perfect_estimates_give_zero_errors() {
        let t = truth(20);
        let e = epoch_errors(&t, &t).unwrap();
        assert!(e.att_deg.iter().all(|&v| v == 0.0));
        assert!(e.vel.iter().all(|&v| v == 0.0));
        assert!(e.pos.iter().all(|&v| v == 0.0));
        let a = armse(&[e]).unwrap();
        assert_eq!(a, Armse::default());
    }

    #[test]
    fn constant_offset_appears_at_every_epoch() {
        let t = truth(15);
        let mut est = t.clone();
        for p in est.poss.iter_mut() {
            *p += Vector3::new(0.1, 0.0, 0.0);
        }
        let e = epoch_errors(&est, &t).unwrap();
        for k in 0..15 {
            assert_abs_diff_eq!(e.pos[k], 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn avg_error_is_arithmetic_mean() {
        let t = truth(10);
        let mut e1 = t.clone();
        let mut e2 = t.clone();
        for p in e1.poss.iter_mut() {
            *p += Vector3::new(0.1, 0.0, 0.0);
        }
        for p in e2.poss.iter_mut() {
            *p += Vector3::new(0.0, 0.3, 0.0);
        }
        let runs = vec![epoch_errors(&e1, &t).unwrap(), epoch_errors(&e2, &t).unwrap()];
        let avg = avg_error(&runs).unwrap();
        for k in 0..10 {
            assert_abs_diff_eq!(avg.pos[k], 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn ninety_degree_error_gives_ninety_armse() {
        let t = series(1, |_| (Quat::IDENTITY, Vector3::zeros(), Vector3::zeros()));
        let est = series(1, |_| {
            (
                Quat::from_axis_angle(Vector3::x(), std::f64::consts::FRAC_PI_2),
                Vector3::zeros(),
                Vector3::zeros(),
            )
        });
        let a = armse(&[epoch_errors(&est, &t).unwrap()]).unwrap();
        assert_abs_diff_eq!(a.attitude_deg, 90.0, epsilon = 1e-12);
    }

    #[test]
    fn armse_matches_brute_force_on_mixed_case() {
        // Two runs, two epochs, hand-built errors; oracle by direct summation.
        let t = truth(2);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(50);
        let mut runs = Vec::new();
        let mut sums = [0.0f64; 3];
        for _ in 0..2 {
            let est = series(2, |k| {
                let dq = Quat::from_axis_angle(
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ),
                    rng.random_range(0.0..0.5),
                );
                let dv = Vector3::new(rng.random_range(-0.2..0.2), 0.0, 0.0);
                let dp = Vector3::new(0.0, rng.random_range(-0.4..0.4), 0.0);
                (t.quats[k] * dq, t.vels[k] + dv, t.poss[k] + dp)
            });
            let e = epoch_errors(&est, &t).unwrap();
            for k in 0..2 {
                sums[0] += e.att_deg[k].powi(2);
                sums[1] += e.vel[k].powi(2);
                sums[2] += e.pos[k].powi(2);
            }
            runs.push(e);
        }
        let a = armse(&runs).unwrap();
        assert_abs_diff_eq!(a.attitude_deg, (sums[0] / 4.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.velocity, (sums[1] / 4.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.position, (sums[2] / 4.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sm_rmse_three_four_five() {
        let seg = EpochErrors {
            times: vec![0.0, 0.1],
            att_deg: vec![0.0, 0.0],
            att_axes_deg: vec![Vector3::zeros(); 2],
            vel: vec![0.0, 0.0],
            pos: vec![3.0, 4.0],
        };
        let s = sm_rmse(&[seg]).unwrap();
        assert_abs_diff_eq!(s.position, 5.0, epsilon = 1e-12);
        let z = EpochErrors {
            times: vec![0.0],
            att_deg: vec![0.0],
            att_axes_deg: vec![Vector3::zeros()],
            vel: vec![0.0],
            pos: vec![0.0],
        };
        let s = sm_rmse(&[z]).unwrap();
        assert_eq!((s.attitude_deg, s.velocity, s.position), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sm_rmse_equals_armse_for_single_epoch_segment() {
        let t = truth(1);
        let mut est = t.clone();
        est.poss[0] += Vector3::new(0.25, 0.0, 0.0);
        est.vels[0] += Vector3::new(0.0, 0.1, 0.0);
        let e = epoch_errors(&est, &t).unwrap();
        let a = armse(std::slice::from_ref(&e)).unwrap();
        let s = sm_rmse(std::slice::from_ref(&e)).unwrap();
        assert_abs_diff_eq!(a.position, s.position, epsilon = 1e-14);
        assert_abs_diff_eq!(a.velocity, s.velocity, epsilon = 1e-14);
    }

    #[test]
    fn metrics_invariant_to_quaternion_sign() {
        let t = truth(8);
        let mut est = t.clone();
        for q in est.quats.iter_mut() {
            *q = *q * Quat::from_axis_angle(Vector3::z(), 0.2);
        }
        let base = armse(&[epoch_errors(&est, &t).unwrap()]).unwrap();
        for k in (0..8).step_by(2) {
            est.quats[k] = est.quats[k].scaled(-1.0);
        }
        let flipped = armse(&[epoch_errors(&est, &t).unwrap()]).unwrap();
        assert_abs_diff_eq!(base.attitude_deg, flipped.attitude_deg, epsilon = 1e-12);
    }

    #[test]
    fn armse_invariant_to_run_order_and_scales_linearly() {
        let t = truth(5);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(51);
        let mut runs = Vec::new();
        for _ in 0..4 {
            let est = series(5, |k| {
                (
                    t.quats[k],
                    t.vels[k],
                    t.poss[k]
                        + Vector3::new(
                            rng.random_range(-0.5..0.5),
                            rng.random_range(-0.5..0.5),
                            0.0,
                        ),
                )
            });
            runs.push(epoch_errors(&est, &t).unwrap());
        }
        let a = armse(&runs).unwrap();
        runs.reverse();
        let b = armse(&runs).unwrap();
        assert_abs_diff_eq!(a.position, b.position, epsilon = 1e-14);
        // Scaling all position errors by c scales ARMSE_p by c.
        let c = 3.7;
        for r in runs.iter_mut() {
            for p in r.pos.iter_mut() {
                *p *= c;
            }
        }
        let scaled = armse(&runs).unwrap();
        assert_abs_diff_eq!(scaled.position, c * b.position, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let t = truth(4);
        let mut est = truth(4);
        est.times[2] += 0.05;
        assert!(epoch_errors(&est, &t).is_err());
        assert!(epoch_errors(&truth(3), &t).is_err());
    }
}
