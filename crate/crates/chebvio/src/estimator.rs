//! Joint estimation of Chebyshev pose coefficients, constant IMU biases and
//! 3D landmarks from raw IMU and reprojection measurements.
//!
//! The objective stacks the weighted prior residual, gyro/accelerometer
//! dynamics residuals at the Clenshaw-Curtis nodes (with measured rates
//! reconstructed there by Floater-Hormann interpolation), and reprojection
//! residuals at the camera frame times. Unit-quaternion constraints are
//! discretized at the Chebyshev points of the attitude order and handled by
//! the augmented-Lagrangian solver.
//!
//! Dynamics rows are scaled by `sqrt(w_i * rate * half_span)` so their
//! stacked squared norm equals the quadrature approximation of the
//! continuous-time integrals with PSD-level weighting; equivalently, the
//! discrete-sample maximum-likelihood objective.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{
    DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Matrix3x4, Matrix3xX, Matrix4, Matrix4xX,
    SMatrix, Vector2, Vector3, Vector4,
};

use crate::cheb::{self, TimeMap};
use crate::error::{Error, Result};
use crate::geometry::{conjugation_matrix, Quat};
use crate::measurement::{
    accel_residual_at, gyro_residual_at, projection_residual, validate_imu_spacing, Extrinsics,
    FeatureObservation, ImuSample, NoiseModel, PriorState, WeightSet,
};
use crate::solver::{
    solve_constrained, ConstrainedProblem, CostBreakdown, LandmarkBlock, ProblemDims,
    SolveReport, SolverConfig, StructuredJacobian,
};
use crate::trajectory::ChebTrajectory;

/// Inputs of one estimation window.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub imu: Vec<ImuSample>,
    pub features: Vec<FeatureObservation>,
    pub prior: PriorState,
    pub noise: NoiseModel,
    pub ext: Extrinsics,
    pub order_q: usize,
    pub order_v: usize,
    /// Clenshaw-Curtis order; see [`default_quad_order`].
    pub quad_order: usize,
    pub map: TimeMap,
    /// Cheirality threshold: observations with predicted depth at or below
    /// this are dropped from the iteration, m.
    pub depth_min: f64,
    /// Floater-Hormann blend degree for rate reconstruction at the nodes.
    pub efh_degree: usize,
}

/// `max(order_q, order_v) + 8`, rounded up to even.
pub fn default_quad_order(order_q: usize, order_v: usize) -> usize {
    let n = order_q.max(order_v) + 8;
    n + n % 2
}

pub const DEFAULT_DEPTH_MIN: f64 = 0.05;
pub const DEFAULT_EFH_DEGREE: usize = 3;

/// Flat decision-vector layout:
/// `[D columns (4 each) | K columns (3 each) | p0 | ba | bg | landmarks]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub order_q: usize,
    pub order_v: usize,
    pub num_landmarks: usize,
}

impl Layout {
    pub fn d_offset(&self) -> usize {
        0
    }

    pub fn k_offset(&self) -> usize {
        4 * (self.order_q + 1)
    }

    pub fn p0_offset(&self) -> usize {
        self.k_offset() + 3 * (self.order_v + 1)
    }

    pub fn ba_offset(&self) -> usize {
        self.p0_offset() + 3
    }

    pub fn bg_offset(&self) -> usize {
        self.ba_offset() + 3
    }

    pub fn dense_len(&self) -> usize {
        self.bg_offset() + 3
    }

    pub fn landmark_offset(&self, i: usize) -> usize {
        self.dense_len() + 3 * i
    }

    pub fn total_len(&self) -> usize {
        self.dense_len() + 3 * self.num_landmarks
    }
}

/// Decision-vector views unpacked into matrices.
struct Unpacked {
    d: Matrix4xX<f64>,
    k: Matrix3xX<f64>,
    p0: Vector3<f64>,
    ba: Vector3<f64>,
    bg: Vector3<f64>,
}

/// One reprojection observation bound to a frame and landmark index.
#[derive(Debug, Clone, Copy)]
struct ObsEntry {
    frame: usize,
    landmark: usize,
    xy: Vector2<f64>,
}

/// Assembled constrained least-squares problem over one window.
#[derive(Debug)]
pub struct ChebVio {
    layout: Layout,
    map: TimeMap,
    ext: Extrinsics,
    weights: WeightSet,
    prior: PriorState,
    imu: Vec<ImuSample>,
    depth_min: f64,
    huber_delta: Option<f64>,

    /// Quadrature node taus and the per-node residual scale
    /// `sqrt(w_i * rate * half_span)`.
    node_taus: Vec<f64>,
    node_scales: Vec<f64>,
    /// Basis matrices sampled at the nodes: rows over degree, one column per node.
    fq_nodes: DMatrix<f64>,
    fq_dot_nodes: DMatrix<f64>,
    fv_dot_nodes: DMatrix<f64>,
    /// Measured rates reconstructed at the nodes.
    omega_nodes: Vec<Vector3<f64>>,
    force_nodes: Vec<Vector3<f64>>,

    /// Camera frame times (deduplicated, ascending) with basis columns.
    frame_taus: Vec<f64>,
    fq_frames: DMatrix<f64>,
    fv_frames: DMatrix<f64>,
    gv_frames: DMatrix<f64>,
    observations: Vec<ObsEntry>,
    landmark_ids: Vec<u64>,
    /// Landmarks observed in fewer than two frames, dropped at build time.
    pub underconstrained_landmarks: usize,
    /// Landmarks dropped during initialization (triangulation failure).
    pub untriangulated_landmarks: usize,

    /// Basis columns at tau = -1 for the prior residual.
    fq_start: DVector<f64>,
    fv_start: DVector<f64>,
    /// Constraint taus (Chebyshev points of order_q) and basis there.
    constraint_taus: Vec<f64>,
    fq_constraints: DMatrix<f64>,

    dropped: AtomicUsize,
}

impl Clone for ChebVio {
    fn clone(&self) -> Self {
        ChebVio {
            layout: self.layout,
            map: self.map,
            ext: self.ext,
            weights: self.weights.clone(),
            prior: self.prior,
            imu: self.imu.clone(),
            depth_min: self.depth_min,
            huber_delta: self.huber_delta,
            node_taus: self.node_taus.clone(),
            node_scales: self.node_scales.clone(),
            fq_nodes: self.fq_nodes.clone(),
            fq_dot_nodes: self.fq_dot_nodes.clone(),
            fv_dot_nodes: self.fv_dot_nodes.clone(),
            omega_nodes: self.omega_nodes.clone(),
            force_nodes: self.force_nodes.clone(),
            frame_taus: self.frame_taus.clone(),
            fq_frames: self.fq_frames.clone(),
            fv_frames: self.fv_frames.clone(),
            gv_frames: self.gv_frames.clone(),
            observations: self.observations.clone(),
            landmark_ids: self.landmark_ids.clone(),
            underconstrained_landmarks: self.underconstrained_landmarks,
            untriangulated_landmarks: self.untriangulated_landmarks,
            fq_start: self.fq_start.clone(),
            fv_start: self.fv_start.clone(),
            constraint_taus: self.constraint_taus.clone(),
            fq_constraints: self.fq_constraints.clone(),
            dropped: AtomicUsize::new(self.dropped.load(Ordering::Relaxed)),
        }
    }
}

/// Full solve output.
#[derive(Debug, Clone)]
pub struct ChebSolution {
    pub x: DVector<f64>,
    pub trajectory: ChebTrajectory,
    pub landmarks: Vec<(u64, Vector3<f64>)>,
    pub report: SolveReport,
}

impl ChebVio {
    pub fn new(problem: &EstimationProblem) -> Result<Self> {
        let map = problem.map;
        validate_imu_spacing(&problem.imu, 1e-6)?;
        for s in &problem.imu {
            if !map.contains(s.t) {
                return Err(Error::Assembly(format!(
                    "IMU time {} s outside the window [{}, {}]",
                    s.t,
                    map.t0(),
                    map.t_end()
                )));
            }
        }
        for f in &problem.features {
            if !map.contains(f.frame_time) {
                return Err(Error::Assembly(format!(
                    "camera time {} s outside the window [{}, {}]",
                    f.frame_time,
                    map.t0(),
                    map.t_end()
                )));
            }
        }
        let quad_order = if problem.quad_order == 0 {
            default_quad_order(problem.order_q, problem.order_v)
        } else {
            problem.quad_order
        };
        let rule = cheb::clenshaw_curtis(quad_order)?;
        let half_span = map.half_span();
        let rate = problem.noise.imu_rate;
        let node_taus: Vec<f64> = rule.nodes.iter().cloned().collect();
        let node_scales: Vec<f64> =
            rule.weights.iter().map(|&w| (w * rate * half_span).sqrt()).collect();

        let fq_nodes = cheb::basis_matrix(problem.order_q, &node_taus)?;
        let fq_dot_nodes = cheb::basis_derivative_matrix(problem.order_q, &node_taus)?;
        let fv_dot_nodes = cheb::basis_derivative_matrix(problem.order_v, &node_taus)?;

        // Reconstruct measured rates at the nodes from the equispaced samples.
        let times: Vec<f64> = problem.imu.iter().map(|s| s.t).collect();
        let samples = DMatrix::from_fn(6, problem.imu.len(), |r, c| {
            if r < 3 {
                problem.imu[c].gyro[r]
            } else {
                problem.imu[c].accel[r - 3]
            }
        });
        let interp = cheb::efh_build(&times, &samples, problem.efh_degree)?;
        let mut omega_nodes = Vec::with_capacity(node_taus.len());
        let mut force_nodes = Vec::with_capacity(node_taus.len());
        for &tau in &node_taus {
            let t = map.to_time(tau).clamp(times[0], times[times.len() - 1]);
            let v = interp.eval(t)?;
            omega_nodes.push(Vector3::new(v[0], v[1], v[2]));
            force_nodes.push(Vector3::new(v[3], v[4], v[5]));
        }

        // Group observations by landmark, keeping only those seen twice.
        let mut by_id: std::collections::BTreeMap<u64, Vec<&FeatureObservation>> =
            std::collections::BTreeMap::new();
        for f in &problem.features {
            by_id.entry(f.feature_id).or_default().push(f);
        }
        let mut frame_times: Vec<f64> = Vec::new();
        for f in &problem.features {
            if !frame_times.iter().any(|&t| (t - f.frame_time).abs() < 1e-9) {
                frame_times.push(f.frame_time);
            }
        }
        frame_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let frame_index = |t: f64| -> usize {
            frame_times
                .iter()
                .position(|&ft| (ft - t).abs() < 1e-9)
                .expect("frame time registered above")
        };

        let mut landmark_ids = Vec::new();
        let mut observations = Vec::new();
        let mut underconstrained = 0usize;
        for (id, obs) in &by_id {
            let mut distinct_frames: Vec<usize> = obs.iter().map(|o| frame_index(o.frame_time)).collect();
            distinct_frames.sort_unstable();
            distinct_frames.dedup();
            if distinct_frames.len() < 2 {
                underconstrained += 1;
                continue;
            }
            let lm_idx = landmark_ids.len();
            landmark_ids.push(*id);
            for o in obs {
                observations.push(ObsEntry {
                    frame: frame_index(o.frame_time),
                    landmark: lm_idx,
                    xy: o.xy,
                });
            }
        }

        let frame_taus: Vec<f64> = frame_times.iter().map(|&t| map.to_tau(t)).collect();
        let fq_frames = cheb::basis_matrix(problem.order_q, &frame_taus)?;
        let fv_frames = cheb::basis_matrix(problem.order_v, &frame_taus)?;
        let gv_frames = cheb::basis_integral_matrix(problem.order_v, &frame_taus)?;

        let constraint_taus: Vec<f64> =
            cheb::chebyshev_points(problem.order_q).iter().cloned().collect();
        let fq_constraints = cheb::basis_matrix(problem.order_q, &constraint_taus)?;

        let layout = Layout {
            order_q: problem.order_q,
            order_v: problem.order_v,
            num_landmarks: landmark_ids.len(),
        };

        Ok(ChebVio {
            layout,
            map,
            ext: problem.ext,
            weights: problem.noise.weights()?,
            prior: problem.prior,
            imu: problem.imu.clone(),
            depth_min: problem.depth_min,
            huber_delta: None,
            node_taus,
            node_scales,
            fq_nodes,
            fq_dot_nodes,
            fv_dot_nodes,
            omega_nodes,
            force_nodes,
            frame_taus,
            fq_frames,
            fv_frames,
            gv_frames,
            observations,
            landmark_ids,
            underconstrained_landmarks: underconstrained,
            untriangulated_landmarks: 0,
            fq_start: cheb::eval_basis(problem.order_q, -1.0)?,
            fv_start: cheb::eval_basis(problem.order_v, -1.0)?,
            constraint_taus,
            fq_constraints,
            dropped: AtomicUsize::new(0),
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn time_map(&self) -> TimeMap {
        self.map
    }

    pub fn landmark_ids(&self) -> &[u64] {
        &self.landmark_ids
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    fn unpack(&self, x: &DVector<f64>) -> Unpacked {
        let lay = &self.layout;
        let d = Matrix4xX::from_fn(lay.order_q + 1, |r, c| x[lay.d_offset() + 4 * c + r]);
        let k = Matrix3xX::from_fn(lay.order_v + 1, |r, c| x[lay.k_offset() + 3 * c + r]);
        Unpacked {
            d,
            k,
            p0: Vector3::new(x[lay.p0_offset()], x[lay.p0_offset() + 1], x[lay.p0_offset() + 2]),
            ba: Vector3::new(x[lay.ba_offset()], x[lay.ba_offset() + 1], x[lay.ba_offset() + 2]),
            bg: Vector3::new(x[lay.bg_offset()], x[lay.bg_offset() + 1], x[lay.bg_offset() + 2]),
        }
    }

    fn landmark(&self, x: &DVector<f64>, i: usize) -> Vector3<f64> {
        let o = self.layout.landmark_offset(i);
        Vector3::new(x[o], x[o + 1], x[o + 2])
    }

    /// Pack coefficient matrices, biases and landmarks into a decision vector.
    pub fn pack(
        &self,
        traj: &ChebTrajectory,
        ba: &Vector3<f64>,
        bg: &Vector3<f64>,
        landmarks: &[Vector3<f64>],
    ) -> Result<DVector<f64>> {
        let lay = &self.layout;
        if traj.order_q() != lay.order_q
            || traj.order_v() != lay.order_v
            || landmarks.len() != lay.num_landmarks
        {
            return Err(Error::Assembly("pack: shape mismatch with layout".into()));
        }
        let mut x = DVector::zeros(lay.total_len());
        for c in 0..=lay.order_q {
            for r in 0..4 {
                x[lay.d_offset() + 4 * c + r] = traj.coeffs_q()[(r, c)];
            }
        }
        for c in 0..=lay.order_v {
            for r in 0..3 {
                x[lay.k_offset() + 3 * c + r] = traj.coeffs_v()[(r, c)];
            }
        }
        for i in 0..3 {
            x[lay.p0_offset() + i] = traj.p0()[i];
            x[lay.ba_offset() + i] = ba[i];
            x[lay.bg_offset() + i] = bg[i];
        }
        for (j, lm) in landmarks.iter().enumerate() {
            let o = lay.landmark_offset(j);
            for i in 0..3 {
                x[o + i] = lm[i];
            }
        }
        Ok(x)
    }

    /// Trajectory view of a decision vector.
    pub fn trajectory_from(&self, x: &DVector<f64>) -> ChebTrajectory {
        let u = self.unpack(x);
        ChebTrajectory::new(u.d, u.k, u.p0, self.map).expect("layout guarantees valid shapes")
    }

    pub fn biases_from(&self, x: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let u = self.unpack(x);
        (u.ba, u.bg)
    }

    pub fn landmarks_from(&self, x: &DVector<f64>) -> Vec<(u64, Vector3<f64>)> {
        (0..self.layout.num_landmarks)
            .map(|i| (self.landmark_ids[i], self.landmark(x, i)))
            .collect()
    }

    /// Dead-reckon the IMU from the prior, fit the polynomial, triangulate
    /// landmarks from the fitted poses. Landmarks that fail triangulation are
    /// removed from the problem (their observations are dropped).
    pub fn initialize(&mut self) -> Result<DVector<f64>> {
        let states = dead_reckon(
            &self.imu,
            self.prior.q,
            self.prior.v,
            self.prior.p,
            self.prior.ba,
            self.prior.bg,
            &self.ext.gravity,
        );
        let (traj, _fit) = ChebTrajectory::fit_to_samples(
            &states.times,
            &states.quats,
            &states.vels,
            self.prior.p,
            self.layout.order_q,
            self.layout.order_v,
            self.map,
        )?;

        // Triangulate each landmark from the initialized poses.
        let mut positions: Vec<Option<Vector3<f64>>> = vec![None; self.layout.num_landmarks];
        for lm in 0..self.layout.num_landmarks {
            let mut poses = Vec::new();
            let mut xys = Vec::new();
            for o in self.observations.iter().filter(|o| o.landmark == lm) {
                let tau = self.frame_taus[o.frame];
                poses.push((traj.attitude_at(tau)?.normalized(), traj.position_at(tau)?));
                xys.push(o.xy);
            }
            positions[lm] = triangulate_dlt(&poses, &xys, &self.ext, self.depth_min);
        }

        // Drop failed landmarks and reindex.
        let keep: Vec<usize> =
            (0..positions.len()).filter(|&i| positions[i].is_some()).collect();
        self.untriangulated_landmarks += positions.len() - keep.len();
        if keep.len() != positions.len() {
            let mut remap = vec![usize::MAX; positions.len()];
            for (new_idx, &old_idx) in keep.iter().enumerate() {
                remap[old_idx] = new_idx;
            }
            self.landmark_ids = keep.iter().map(|&i| self.landmark_ids[i]).collect();
            self.observations = self
                .observations
                .iter()
                .filter(|o| remap[o.landmark] != usize::MAX)
                .map(|o| ObsEntry { landmark: remap[o.landmark], ..*o })
                .collect();
            self.layout.num_landmarks = keep.len();
        }
        let landmarks: Vec<Vector3<f64>> =
            keep.iter().map(|&i| positions[i].unwrap()).collect();

        self.pack(&traj, &self.prior.ba.clone(), &self.prior.bg.clone(), &landmarks)
    }

    /// Solve from an initial decision vector.
    pub fn solve(&self, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<ChebSolution> {
        let mut prob = self.clone();
        prob.huber_delta = cfg.huber_delta;
        prob.dropped.store(0, Ordering::Relaxed);
        let (x, report) = solve_constrained(&prob, x0.clone(), cfg)?;
        Ok(ChebSolution {
            trajectory: prob.trajectory_from(&x),
            landmarks: prob.landmarks_from(&x),
            x,
            report,
        })
    }

    fn residual_len(&self) -> usize {
        15 + 6 * self.node_taus.len() + 2 * self.observations.len()
    }

    fn obs_row(&self, obs_idx: usize) -> usize {
        15 + 6 * self.node_taus.len() + 2 * obs_idx
    }

    /// Huber scale for one weighted vision residual pair.
    fn robust_scale(&self, r: &Vector2<f64>) -> f64 {
        match self.huber_delta {
            None => 1.0,
            Some(delta) => {
                let n = r.norm();
                if n <= delta {
                    1.0
                } else {
                    (delta / n).sqrt()
                }
            }
        }
    }
}

impl ConstrainedProblem for ChebVio {
    fn dims(&self) -> ProblemDims {
        ProblemDims {
            residuals: self.residual_len(),
            dense_params: self.layout.dense_len(),
            landmarks: self.layout.num_landmarks,
            constraints: self.layout.order_q + 1,
        }
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = self.unpack(x);
        let mut r = DVector::zeros(self.residual_len());
        let half_span = self.map.half_span();
        let inv_half = 1.0 / half_span;

        // Prior block.
        let q_start = Quat::from_vector4(&(&u.d * &self.fq_start)).normalized();
        let att = (q_start.conjugate() * self.prior.q).vec() * 2.0;
        let mut prior = SMatrix::<f64, 15, 1>::zeros();
        prior.fixed_rows_mut::<3>(0).copy_from(&att);
        prior
            .fixed_rows_mut::<3>(3)
            .copy_from(&(&u.k * &self.fv_start - self.prior.v));
        prior.fixed_rows_mut::<3>(6).copy_from(&(u.p0 - self.prior.p));
        prior.fixed_rows_mut::<3>(9).copy_from(&(u.ba - self.prior.ba));
        prior.fixed_rows_mut::<3>(12).copy_from(&(u.bg - self.prior.bg));
        let prior_w = self.weights.prior_wt * prior;
        r.rows_mut(0, 15).copy_from(&prior_w);

        // Dynamics at the quadrature nodes.
        let q_nodes = &u.d * &self.fq_nodes;
        let qd_nodes = &u.d * &self.fq_dot_nodes;
        let vd_nodes = &u.k * &self.fv_dot_nodes;
        for i in 0..self.node_taus.len() {
            let q = Quat::from_vector4(&q_nodes.column(i).into_owned());
            let q_dot = Quat::from_vector4(&qd_nodes.column(i).into_owned()).scaled(inv_half);
            let v_dot = vd_nodes.column(i) * inv_half;
            let eg = gyro_residual_at(&q, &q_dot, &u.bg, &self.omega_nodes[i]);
            let ea = accel_residual_at(
                &q,
                &v_dot.into_owned(),
                &u.ba,
                &self.force_nodes[i],
                &self.ext.gravity,
            );
            let s = self.node_scales[i];
            let row = 15 + 6 * i;
            r.rows_mut(row, 3).copy_from(&(self.weights.gyro_wt * eg * s));
            r.rows_mut(row + 3, 3).copy_from(&(self.weights.accel_wt * ea * s));
        }

        // Reprojection at the camera frames.
        if !self.observations.is_empty() {
            let q_frames = &u.d * &self.fq_frames;
            let p_frames = &u.k * &self.gv_frames;
            let mut dropped = 0usize;
            for (oi, obs) in self.observations.iter().enumerate() {
                let q = Quat::from_vector4(&q_frames.column(obs.frame).into_owned());
                let p = u.p0 + p_frames.column(obs.frame) * half_span;
                let xw = self.landmark(x, obs.landmark);
                match projection_residual(&q, &p, &xw, &obs.xy, &self.ext, self.depth_min) {
                    Some(res) => {
                        let weighted = self.weights.feature_wt * res;
                        let s = self.robust_scale(&weighted);
                        let row = self.obs_row(oi);
                        r[row] = weighted.x * s;
                        r[row + 1] = weighted.y * s;
                    }
                    None => {
                        dropped += 1;
                    }
                }
            }
            self.dropped.store(dropped, Ordering::Relaxed);
        }
        r
    }

    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = self.unpack(x);
        let q_c = &u.d * &self.fq_constraints;
        DVector::from_fn(self.constraint_taus.len(), |k, _| {
            q_c.column(k).norm_squared() - 1.0
        })
    }

    fn jacobians(&self, x: &DVector<f64>) -> (StructuredJacobian, DMatrix<f64>) {
        let u = self.unpack(x);
        let lay = &self.layout;
        let nd = lay.dense_len();
        let half_span = self.map.half_span();
        let inv_half = 1.0 / half_span;
        let conj = conjugation_matrix();
        let mut jd = DMatrix::zeros(self.residual_len(), nd);
        let mut lm_blocks = Vec::with_capacity(self.observations.len());

        // ---- Prior rows (unweighted first, then multiplied by W^T).
        {
            let mut jp = DMatrix::zeros(15, nd);
            let q_raw = Quat::from_vector4(&(&u.d * &self.fq_start));
            let n_mat = normalize_jacobian(&q_raw);
            // d(2 vec(q_norm* q_hat))/dq_norm = 2 [R(q_hat) C]_{vec rows}
            let a34 = (self.prior.q.right_product_matrix() * conj)
                .fixed_view::<3, 4>(1, 0)
                .into_owned()
                * 2.0;
            let a = a34 * n_mat;
            for j in 0..=lay.order_q {
                let f = self.fq_start[j];
                for rr in 0..3 {
                    for cc in 0..4 {
                        jp[(rr, lay.d_offset() + 4 * j + cc)] = a[(rr, cc)] * f;
                    }
                }
            }
            for j in 0..=lay.order_v {
                let f = self.fv_start[j];
                for rr in 0..3 {
                    jp[(3 + rr, lay.k_offset() + 3 * j + rr)] = f;
                }
            }
            for rr in 0..3 {
                jp[(6 + rr, lay.p0_offset() + rr)] = 1.0;
                jp[(9 + rr, lay.ba_offset() + rr)] = 1.0;
                jp[(12 + rr, lay.bg_offset() + rr)] = 1.0;
            }
            let weighted = self.weights.prior_wt * jp;
            jd.view_mut((0, 0), (15, nd)).copy_from(&weighted);
        }

        // ---- Dynamics rows.
        let q_nodes = &u.d * &self.fq_nodes;
        let qd_nodes = &u.d * &self.fq_dot_nodes;
        let vd_nodes = &u.k * &self.fv_dot_nodes;
        for i in 0..self.node_taus.len() {
            let row = 15 + 6 * i;
            let s = self.node_scales[i];
            let q = Quat::from_vector4(&q_nodes.column(i).into_owned());
            let q_dot = Quat::from_vector4(&qd_nodes.column(i).into_owned()).scaled(inv_half);

            // Gyro: e = omega - 2 vec(q* q_dot) - bg.
            let wg = self.weights.gyro_wt * (-2.0 * s);
            let dq_part: Matrix3x4<f64> =
                (q_dot.right_product_matrix() * conj).fixed_view::<3, 4>(1, 0).into_owned();
            let dqdot_part: Matrix3x4<f64> =
                q.conjugate().left_product_matrix().fixed_view::<3, 4>(1, 0).into_owned();
            let a_g = wg * dq_part;
            let b_g = wg * dqdot_part * inv_half;
            for j in 0..=lay.order_q {
                let f = self.fq_nodes[(j, i)];
                let fd = self.fq_dot_nodes[(j, i)];
                for rr in 0..3 {
                    for cc in 0..4 {
                        jd[(row + rr, lay.d_offset() + 4 * j + cc)] =
                            a_g[(rr, cc)] * f + b_g[(rr, cc)] * fd;
                    }
                }
            }
            // d e_g / d bg = -I.
            for rr in 0..3 {
                for cc in 0..3 {
                    jd[(row + rr, lay.bg_offset() + cc)] = -s * self.weights.gyro_wt[(rr, cc)];
                }
            }

            // Accelerometer: e = f - C_w^b(q_norm)(v_dot - g) - ba.
            let arow = row + 3;
            let q_norm = q.normalized();
            let v_dot = (vd_nodes.column(i) * inv_half).into_owned();
            let upath = v_dot - self.ext.gravity;
            let b34 = dvec_conj_sandwich(&q_norm, &upath);
            let a_a = self.weights.accel_wt * (-s) * b34 * normalize_jacobian(&q);
            for j in 0..=lay.order_q {
                let f = self.fq_nodes[(j, i)];
                for rr in 0..3 {
                    for cc in 0..4 {
                        jd[(arow + rr, lay.d_offset() + 4 * j + cc)] = a_a[(rr, cc)] * f;
                    }
                }
            }
            let world_to_body = q_norm.to_rotation_matrix().transpose();
            let a_k = self.weights.accel_wt * world_to_body * (-s * inv_half);
            for j in 0..=lay.order_v {
                let fd = self.fv_dot_nodes[(j, i)];
                for rr in 0..3 {
                    for cc in 0..3 {
                        jd[(arow + rr, lay.k_offset() + 3 * j + cc)] = a_k[(rr, cc)] * fd;
                    }
                }
            }
            for rr in 0..3 {
                for cc in 0..3 {
                    jd[(arow + rr, lay.ba_offset() + cc)] = -s * self.weights.accel_wt[(rr, cc)];
                }
            }
        }

        // ---- Reprojection rows.
        if !self.observations.is_empty() {
            let q_frames = &u.d * &self.fq_frames;
            let p_frames = &u.k * &self.gv_frames;
            for (oi, obs) in self.observations.iter().enumerate() {
                let row = self.obs_row(oi);
                let q_raw = Quat::from_vector4(&q_frames.column(obs.frame).into_owned());
                let p = u.p0 + p_frames.column(obs.frame) * half_span;
                let xw = self.landmark(x, obs.landmark);
                let q_norm = q_raw.normalized();
                let y = crate::measurement::camera_point(&q_norm, &p, &xw, &self.ext);
                if y.z <= self.depth_min {
                    // Dropped observation: rows stay zero, no landmark block.
                    continue;
                }
                let res = Vector2::new(y.x / y.z - obs.xy.x, y.y / y.z - obs.xy.y);
                let robust = self.robust_scale(&(self.weights.feature_wt * res));
                let jpi = Matrix2x3::new(
                    1.0 / y.z,
                    0.0,
                    -y.x / (y.z * y.z),
                    0.0,
                    1.0 / y.z,
                    -y.y / (y.z * y.z),
                );
                let pre = (self.weights.feature_wt * robust) * jpi;
                let world_to_body = q_norm.to_rotation_matrix().transpose();
                let cam_rot = self.ext.cam_from_body * world_to_body;
                // Landmark block: dY/dX = C_b^c C_w^b.
                let lm_block: Matrix2x3<f64> = pre * cam_rot;
                lm_blocks.push(LandmarkBlock { row, landmark: obs.landmark, block: lm_block });
                // p0 columns: dY/dp0 = -C_b^c C_w^b.
                let dp0 = -lm_block;
                for rr in 0..2 {
                    for cc in 0..3 {
                        jd[(row + rr, lay.p0_offset() + cc)] = dp0[(rr, cc)];
                    }
                }
                // K columns: dp/dk_j = half_span G_j I.
                let dk: Matrix2x3<f64> = dp0 * half_span;
                for j in 0..=lay.order_v {
                    let g = self.gv_frames[(j, obs.frame)];
                    if g == 0.0 {
                        continue;
                    }
                    for rr in 0..2 {
                        for cc in 0..3 {
                            jd[(row + rr, lay.k_offset() + 3 * j + cc)] = dk[(rr, cc)] * g;
                        }
                    }
                }
                // D columns through the normalized attitude.
                let b34 = dvec_conj_sandwich(&q_norm, &(xw - p));
                let m24 =
                    pre * self.ext.cam_from_body * b34 * normalize_jacobian(&q_raw);
                for j in 0..=lay.order_q {
                    let f = self.fq_frames[(j, obs.frame)];
                    for rr in 0..2 {
                        for cc in 0..4 {
                            jd[(row + rr, lay.d_offset() + 4 * j + cc)] = m24[(rr, cc)] * f;
                        }
                    }
                }
            }
        }

        // ---- Constraint Jacobian: dc_k/dd_j = 2 q(tau_k)^T F_j(tau_k).
        let mut cjac = DMatrix::zeros(self.constraint_taus.len(), nd);
        let q_c = &u.d * &self.fq_constraints;
        for k in 0..self.constraint_taus.len() {
            let q: Vector4<f64> = q_c.column(k).into_owned();
            for j in 0..=lay.order_q {
                let f = self.fq_constraints[(j, k)];
                for cc in 0..4 {
                    cjac[(k, lay.d_offset() + 4 * j + cc)] = 2.0 * q[cc] * f;
                }
            }
        }

        (StructuredJacobian { dense: jd, landmark_blocks: lm_blocks }, cjac)
    }

    fn cost_breakdown(&self, r: &DVector<f64>) -> CostBreakdown {
        let n_nodes = self.node_taus.len();
        let mut gyro = 0.0;
        let mut accel = 0.0;
        for i in 0..n_nodes {
            let row = 15 + 6 * i;
            gyro += r.rows(row, 3).norm_squared();
            accel += r.rows(row + 3, 3).norm_squared();
        }
        CostBreakdown {
            prior: r.rows(0, 15).norm_squared(),
            accel,
            gyro,
            vision: r.rows(15 + 6 * n_nodes, 2 * self.observations.len()).norm_squared(),
        }
    }

    fn dropped_observations(&self) -> usize {
        self.dropped.load(Ordering::Relaxed)
    }
}

/// `d(q/|q|)/dq = (I - q_n q_n^T) / |q|`.
fn normalize_jacobian(q: &Quat) -> Matrix4<f64> {
    let n = q.norm();
    let qn = q.normalized().as_vector4();
    (Matrix4::identity() - qn * qn.transpose()) / n
}

/// 3x4 Jacobian of `vec(q* (0,u) q)` with respect to the quaternion
/// components (both occurrences of `q`).
fn dvec_conj_sandwich(q: &Quat, u: &Vector3<f64>) -> Matrix3x4<f64> {
    let l = (q.conjugate() * Quat::pure(*u)).left_product_matrix();
    let r = (Quat::pure(*u) * *q).right_product_matrix() * conjugation_matrix();
    (l + r).fixed_view::<3, 4>(1, 0).into_owned()
}

/// Dead-reckoned states at the IMU sample times.
#[derive(Debug, Clone)]
pub struct DeadReckonStates {
    pub times: Vec<f64>,
    pub quats: Vec<Quat>,
    pub vels: Vec<Vector3<f64>>,
    pub poss: Vec<Vector3<f64>>,
}

/// Integrate the strapdown kinematics from `(q0, v0, p0)` across the IMU
/// slice: RK4 on the quaternion (rates linearly interpolated between
/// samples), trapezoidal velocity and position, biases subtracted.
pub fn dead_reckon(
    imu: &[ImuSample],
    q0: Quat,
    v0: Vector3<f64>,
    p0: Vector3<f64>,
    ba: Vector3<f64>,
    bg: Vector3<f64>,
    gravity: &Vector3<f64>,
) -> DeadReckonStates {
    let n = imu.len();
    let mut out = DeadReckonStates {
        times: Vec::with_capacity(n),
        quats: Vec::with_capacity(n),
        vels: Vec::with_capacity(n),
        poss: Vec::with_capacity(n),
    };
    let mut q = q0.normalized();
    let mut v = v0;
    let mut p = p0;
    out.times.push(imu[0].t);
    out.quats.push(q);
    out.vels.push(v);
    out.poss.push(p);
    let q_rate = |q: &Quat, w: &Vector3<f64>| (*q * Quat::pure(*w)).scaled(0.5);
    for k in 0..n - 1 {
        let dt = imu[k + 1].t - imu[k].t;
        let w0 = imu[k].gyro - bg;
        let w1 = imu[k + 1].gyro - bg;
        let wm = (w0 + w1) * 0.5;
        // RK4 on q_dot = 0.5 q (0, w).
        let k1 = q_rate(&q, &w0);
        let q2 = add_scaled(&q, &k1, 0.5 * dt);
        let k2 = q_rate(&q2, &wm);
        let q3 = add_scaled(&q, &k2, 0.5 * dt);
        let k3 = q_rate(&q3, &wm);
        let q4 = add_scaled(&q, &k3, dt);
        let k4 = q_rate(&q4, &w1);
        let q_next = Quat::new(
            q.w + dt / 6.0 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w),
            q.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            q.y + dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
            q.z + dt / 6.0 * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
        )
        .normalized();
        // Trapezoidal velocity/position with endpoint attitudes.
        let a0 = q.to_rotation_matrix() * (imu[k].accel - ba) + gravity;
        let a1 = q_next.to_rotation_matrix() * (imu[k + 1].accel - ba) + gravity;
        let v_next = v + (a0 + a1) * (0.5 * dt);
        let p_next = p + (v + v_next) * (0.5 * dt);
        q = q_next;
        v = v_next;
        p = p_next;
        out.times.push(imu[k + 1].t);
        out.quats.push(q);
        out.vels.push(v);
        out.poss.push(p);
    }
    out
}

fn add_scaled(q: &Quat, rate: &Quat, s: f64) -> Quat {
    Quat::new(q.w + s * rate.w, q.x + s * rate.x, q.y + s * rate.y, q.z + s * rate.z)
}

/// Linear (DLT) triangulation of one point from two or more posed
/// normalized-coordinate observations. Returns `None` on rank deficiency
/// (insufficient parallax) or when the point lands behind every camera.
pub fn triangulate_dlt(
    poses: &[(Quat, Vector3<f64>)],
    xys: &[Vector2<f64>],
    ext: &Extrinsics,
    depth_min: f64,
) -> Option<Vector3<f64>> {
    assert_eq!(poses.len(), xys.len());
    if poses.len() < 2 {
        return None;
    }
    let mut a = DMatrix::zeros(2 * poses.len(), 4);
    for (i, ((q, p), xy)) in poses.iter().zip(xys).enumerate() {
        let rot = ext.cam_from_body * q.to_rotation_matrix().transpose();
        let t = ext.body_in_cam - rot * p;
        // Rows of [R | t].
        let row = |r: usize| Vector4::new(rot[(r, 0)], rot[(r, 1)], rot[(r, 2)], t[r]);
        let r0 = row(0);
        let r1 = row(1);
        let r2 = row(2);
        let ax = r2 * xy.x - r0;
        let ay = r2 * xy.y - r1;
        for c in 0..4 {
            a[(2 * i, c)] = ax[c];
            a[(2 * i + 1, c)] = ay[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref()?;
    let sv = &svd.singular_values;
    // Rank: the two smallest singular values nearly equal means the null
    // space is (close to) two-dimensional, i.e. no parallax.
    if sv[2] <= 1e-8 * sv[0] {
        return None;
    }
    let h = v_t.row(3);
    if h[3].abs() < 1e-12 * h.norm() {
        return None;
    }
    let xw = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    // Cheirality across the observing cameras.
    let visible = poses.iter().any(|(q, p)| {
        crate::measurement::camera_point(q, p, &xw, ext).z > depth_min
    });
    if visible {
        Some(xw)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn toy_problem(seed: u64, order: usize, landmarks: usize) -> EstimationProblem {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let map = TimeMap::new(0.0, 1.0).unwrap();
        let rate = 50.0;
        let n = 51;
        let gravity = Vector3::new(0.0, 0.0, -9.81);
        let alpha = 0.25;
        let zeta = 3.0;
        let imu: Vec<ImuSample> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                ImuSample {
                    t,
                    gyro: crate::trajectory::coning_body_rate(alpha, zeta, t)
                        + Vector3::new(0.01, -0.02, 0.03),
                    accel: Vector3::new(
                        0.4 * (3.0 * t).sin(),
                        -0.2 * (2.0 * t).cos(),
                        9.81 + 0.1 * t,
                    ),
                }
            })
            .collect();
        // Landmarks ahead of the camera (forward camera on +x).
        let ext = Extrinsics::forward_camera(gravity);
        let mut features = Vec::new();
        let frame_times: Vec<f64> = (0..6).map(|i| 0.2 * i as f64).collect();
        for lm in 0..landmarks {
            let xw = Vector3::new(
                6.0 + rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            for (fi, &ft) in frame_times.iter().enumerate() {
                // True-ish pose: slow drift.
                let q = crate::trajectory::coning_quaternion(alpha, zeta, ft);
                let p = Vector3::new(0.2 * ft, 0.05 * ft, 0.0);
                if let Some(r) =
                    projection_residual(&q, &p, &xw, &Vector2::zeros(), &ext, 0.05)
                {
                    if fi % 7 != 6 {
                        features.push(FeatureObservation {
                            frame_time: ft,
                            feature_id: lm as u64,
                            xy: Vector2::new(
                                r.x + rng.random_range(-0.002..0.002),
                                r.y + rng.random_range(-0.002..0.002),
                            ),
                        });
                    }
                }
            }
        }
        let noise = NoiseModel::isotropic(
            2.9e-3, 0.1, 1.0 / 460.0, 0.1_f64.to_radians(), 0.05, 0.01, 0.1, 0.1, rate,
        );
        EstimationProblem {
            imu,
            features,
            prior: PriorState {
                q: Quat::IDENTITY,
                v: Vector3::zeros(),
                p: Vector3::zeros(),
                ba: Vector3::zeros(),
                bg: Vector3::zeros(),
            },
            noise,
            ext,
            order_q: order,
            order_v: order,
            quad_order: 0,
            map,
            depth_min: DEFAULT_DEPTH_MIN,
            efh_degree: DEFAULT_EFH_DEGREE,
        }
    }

    #[test]
    fn dead_reckoning_free_fall() {
        let gravity = Vector3::new(0.0, 0.0, -9.81);
        let imu: Vec<ImuSample> = (0..101)
            .map(|i| ImuSample {
                t: i as f64 * 0.01,
                gyro: Vector3::zeros(),
                accel: Vector3::zeros(),
            })
            .collect();
        let q0 = Quat::from_axis_angle(Vector3::y(), 0.3);
        let v0 = Vector3::new(1.0, 0.0, 2.0);
        let states = dead_reckon(
            &imu,
            q0,
            v0,
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
            &gravity,
        );
        for (i, &t) in states.times.iter().enumerate() {
            assert_abs_diff_eq!(states.quats[i].dot(&q0).abs(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(
                (states.vels[i] - (v0 + gravity * t)).norm(),
                0.0,
                epsilon = 1e-10
            );
            let p_expect = v0 * t + gravity * (0.5 * t * t);
            assert_abs_diff_eq!((states.poss[i] - p_expect).norm(), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn two_view_triangulation_is_exact() {
        let ext = Extrinsics::identity(Vector3::zeros());
        let xw = Vector3::new(0.7, -0.4, 5.0);
        let q1 = Quat::IDENTITY;
        let p1 = Vector3::zeros();
        let q2 = Quat::from_axis_angle(Vector3::y(), 0.1);
        let p2 = Vector3::new(1.0, 0.2, 0.0);
        let mk = |q: &Quat, p: &Vector3<f64>| {
            let y = crate::measurement::camera_point(q, p, &xw, &ext);
            Vector2::new(y.x / y.z, y.y / y.z)
        };
        let poses = vec![(q1, p1), (q2, p2)];
        let xys = vec![mk(&q1, &p1), mk(&q2, &p2)];
        let got = triangulate_dlt(&poses, &xys, &ext, 0.05).unwrap();
        assert_abs_diff_eq!((got - xw).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn triangulation_rejects_zero_parallax() {
        let ext = Extrinsics::identity(Vector3::zeros());
        let xw = Vector3::new(0.3, 0.1, 4.0);
        // Two identical poses: no parallax.
        let pose = (Quat::IDENTITY, Vector3::zeros());
        let y = crate::measurement::camera_point(&pose.0, &pose.1, &xw, &ext);
        let xy = Vector2::new(y.x / y.z, y.y / y.z);
        assert!(triangulate_dlt(&[pose, pose], &[xy, xy], &ext, 0.05).is_none());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for seed in [1u64, 2] {
            let problem = toy_problem(seed, 8, 5);
            let mut built = ChebVio::new(&problem).unwrap();
            let x = built.initialize().unwrap();
            let (jac, cjac) = built.jacobians(&x);
            let full = jac.to_dense(built.layout().num_landmarks);
            let h = 1e-6;
            let mut max_rel: f64 = 0.0;
            let scale = full.amax().max(1.0);
            for col in 0..x.len() {
                let mut xp = x.clone();
                xp[col] += h;
                let mut xm = x.clone();
                xm[col] -= h;
                let rp = built.residuals(&xp);
                let rm = built.residuals(&xm);
                for row in 0..rp.len() {
                    let fd = (rp[row] - rm[row]) / (2.0 * h);
                    max_rel = max_rel.max((full[(row, col)] - fd).abs() / scale);
                }
                let cp = built.constraints(&xp);
                let cm = built.constraints(&xm);
                for row in 0..cp.len() {
                    let fd = (cp[row] - cm[row]) / (2.0 * h);
                    if col < built.layout().dense_len() {
                        max_rel = max_rel.max((cjac[(row, col)] - fd).abs() / scale);
                    } else {
                        max_rel = max_rel.max(fd.abs() / scale);
                    }
                }
            }
            assert!(max_rel < 1e-5, "seed {seed}: max relative error {max_rel:.3e}");
        }
    }

    #[test]
    fn dynamics_rows_have_no_landmark_entries() {
        let problem = toy_problem(3, 6, 4);
        let mut built = ChebVio::new(&problem).unwrap();
        let x = built.initialize().unwrap();
        let (jac, _) = built.jacobians(&x);
        let dyn_end = 15 + 6 * built.node_taus.len();
        for lb in &jac.landmark_blocks {
            assert!(lb.row >= dyn_end, "landmark block in dynamics row {}", lb.row);
        }
    }

    #[test]
    fn gyro_bias_columns_are_scaled_weights() {
        let problem = toy_problem(4, 6, 3);
        let mut built = ChebVio::new(&problem).unwrap();
        let x = built.initialize().unwrap();
        let (jac, _) = built.jacobians(&x);
        let lay = built.layout();
        for i in 0..built.node_taus.len() {
            let row = 15 + 6 * i;
            let s = built.node_scales[i];
            for rr in 0..3 {
                for cc in 0..3 {
                    assert_abs_diff_eq!(
                        jac.dense[(row + rr, lay.bg_offset() + cc)],
                        -s * built.weights.gyro_wt[(rr, cc)],
                        epsilon = 1e-15
                    );
                }
            }
        }
    }

    #[test]
    fn constraints_vanish_for_unit_quaternion_trajectory() {
        let problem = toy_problem(5, 6, 0);
        let built = ChebVio::new(&problem).unwrap();
        let traj = ChebTrajectory::constant(
            Quat::from_axis_angle(Vector3::x(), 0.8),
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::zeros(),
            6,
            6,
            problem.map,
        );
        let x = built
            .pack(&traj, &Vector3::zeros(), &Vector3::zeros(), &[])
            .unwrap();
        let c = built.constraints(&x);
        assert_abs_diff_eq!(c.amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dynamics_block_norm_matches_node_sum() {
        // The stacked squared norm of the dynamics rows must equal the
        // independently accumulated weighted node sum.
        let problem = toy_problem(6, 8, 0);
        let mut built = ChebVio::new(&problem).unwrap();
        let x = built.initialize().unwrap();
        let r = built.residuals(&x);
        let traj = built.trajectory_from(&x);
        let (ba, bg) = built.biases_from(&x);
        let mut expected = 0.0;
        for i in 0..built.node_taus.len() {
            let tau = built.node_taus[i];
            let eg = crate::measurement::gyro_residual(&traj, &bg, &built.omega_nodes[i], tau)
                .unwrap();
            let ea = crate::measurement::accel_residual(
                &traj,
                &ba,
                &built.force_nodes[i],
                &built.ext,
                tau,
            )
            .unwrap();
            let w2 = built.node_scales[i] * built.node_scales[i];
            expected += w2
                * ((built.weights.gyro_wt * eg).norm_squared()
                    + (built.weights.accel_wt * ea).norm_squared());
        }
        let dyn_rows = r.rows(15, 6 * built.node_taus.len());
        assert_abs_diff_eq!(
            dyn_rows.norm_squared(),
            expected,
            epsilon = 1e-12 * expected.max(1.0)
        );
    }

    #[test]
    fn solves_without_vision() {
        let mut problem = toy_problem(7, 8, 0);
        problem.features.clear();
        let mut built = ChebVio::new(&problem).unwrap();
        let x0 = built.initialize().unwrap();
        let sol = built.solve(&x0, &SolverConfig::default()).unwrap();
        assert!(
            sol.report.max_constraint_violation < 1e-8,
            "constraint violation {:.3e}",
            sol.report.max_constraint_violation
        );
    }

    #[test]
    fn rejects_observations_outside_window() {
        let mut problem = toy_problem(8, 6, 2);
        problem.features.push(FeatureObservation {
            frame_time: 3.0,
            feature_id: 0,
            xy: Vector2::zeros(),
        });
        assert!(matches!(ChebVio::new(&problem), Err(Error::Assembly(_))));
    }
}
