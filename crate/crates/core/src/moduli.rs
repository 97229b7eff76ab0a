//! Connecting heat-flow orbits between critical points of adjacent index.
//!
//! Orbits are found by shooting from the unstable manifold of the source:
//! seeds exp_x(ε Σ c_k v_k) with v_k the negative eigenfields and c on the
//! unit sphere. For index-1 sources the sphere is {±1}; for index 2 a circle
//! of directions is swept and directions hitting the target are isolated by
//! bisection on the side on which trajectories pass it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crit::{assemble_hessian, CriticalPoint};
use crate::error::{Error, Result};
use crate::heatflow::{
    detect_near, energy, integrate, integrate_until, CylinderTrajectory, FlowControls, FlowStatus,
};
use crate::linearized::LinearStepper;
use crate::loopspace::{action, heat_residual, loop_distance, DiscreteLoop, LoopField, LoopNorm};
use crate::perturbation::Perturbation;

/// Seed radius as a fraction of the injectivity radius.
pub const DEFAULT_SEED_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct UnstableChart {
    pub base: CriticalPoint,
    /// Orthonormal basis of the negative eigenspace, in eigenvalue order.
    pub directions: Vec<LoopField>,
    pub eps_seed: f64,
}

impl UnstableChart {
    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// exp_x(ε_seed Σ c_k v_k).
    pub fn seed(&self, c: &[f64]) -> Result<DiscreteLoop> {
        if c.len() != self.dim() {
            return Err(Error::InvalidInput(format!("{} chart coordinates for a {}-dimensional chart", c.len(), self.dim())));
        }
        let x = &self.base.curve;
        let mut xi = x.zero_field();
        for (ck, vk) in c.iter().zip(&self.directions) {
            xi.axpy(self.eps_seed * ck, vk);
        }
        Ok(x.exp_field(&xi))
    }
}

/// Chart on the unstable manifold of x. `eps_seed` defaults to 1e−3·ι.
pub fn build_chart(x: &CriticalPoint, v: &Perturbation, eps_seed: Option<f64>) -> Result<UnstableChart> {
    if x.degenerate {
        return Err(Error::Degenerate { margin: x.nondeg_margin });
    }
    if x.morse_index == 0 {
        return Err(Error::IndexZero);
    }
    let eps = eps_seed.unwrap_or(DEFAULT_SEED_FRACTION * x.curve.manifold().injectivity_radius());
    let chart = UnstableChart { base: x.clone(), directions: x.unstable_directions().to_vec(), eps_seed: eps };
    // each seed must lie strictly below x, but not by more than a quarter of
    // the spectral gap
    for k in 0..chart.dim() {
        for sgn in [1.0, -1.0] {
            let mut c = vec![0.0; chart.dim()];
            c[k] = sgn;
            let drop = x.action - action(&chart.seed(&c)?, v);
            if !(drop > 0.0 && drop < 0.25 * x.nondeg_margin) {
                return Err(Error::InvalidInput(format!("seed radius {eps} gives action drop {drop}")));
            }
        }
    }
    Ok(chart)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitControls {
    pub h: f64,
    pub s_max: f64,
    pub tol_conv: f64,
    pub capture_radius: f64,
    pub eps_seed: Option<f64>,
    pub sweep_angles: usize,
    pub bisection_width: f64,
    pub dedup_radius: f64,
}

impl Default for OrbitControls {
    fn default() -> Self {
        Self {
            h: 1e-3,
            s_max: 60.0,
            tol_conv: 1e-8,
            capture_radius: 1e-2,
            eps_seed: None,
            sweep_angles: 256,
            bisection_width: 1e-6,
            dedup_radius: 1e-3,
        }
    }
}

impl OrbitControls {
    fn flow(&self, stride: usize) -> FlowControls {
        FlowControls { h: self.h, s_max: self.s_max, tol_conv: self.tol_conv, stride }
    }
}

/// Integrates the heat flow from the seed with chart coordinates `c` until
/// convergence or the s budget.
pub fn shoot(chart: &UnstableChart, c: &[f64], v: &Perturbation, controls: &OrbitControls) -> Result<CylinderTrajectory> {
    let n: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("shooting direction has norm {n}")));
    }
    integrate(&chart.seed(c)?, v, &controls.flow(1))
}

/// Passage of a trajectory near a target: the closest C⁰ approach and the
/// component of log_y(u) along the target's unstable direction there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub angle: f64,
    pub distance: f64,
    pub side: f64,
    pub step: usize,
}

fn probe(
    chart: &UnstableChart,
    angle: f64,
    target: &CriticalPoint,
    v: &Perturbation,
    controls: &OrbitControls,
    keep: bool,
) -> Result<(Passage, Option<CylinderTrajectory>)> {
    let c = [angle.cos(), angle.sin()];
    let y = &target.curve;
    let e = &target.unstable_directions()[0];
    // once the action has dropped clearly below the target level the
    // trajectory cannot come back
    let stop_level = target.action - 0.05 * (chart.base.action - target.action);
    let mut best = Passage { angle, distance: f64::INFINITY, side: 0.0, step: 0 };
    let mut err = None;
    let stride = if keep { 1 } else { usize::MAX };
    let traj = integrate_until(&chart.seed(&c)?, v, &controls.flow(stride), |k, u| {
        match loop_distance(u, y, LoopNorm::C0) {
            Ok(d) if d < best.distance => match y.log_to(u) {
                Ok(l) => best = Passage { angle, distance: d, side: l.inner(e), step: k },
                Err(e) => err = Some(e),
            },
            Ok(_) => {}
            Err(e) => err = Some(e),
        }
        action(u, v) < stop_level
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let traj = if keep {
        // truncate at the closest approach
        let m = best.step + 1;
        let s = traj.s[..m].to_vec();
        let slices = traj.slices[..m].to_vec();
        Some(CylinderTrajectory::from_slices(s, slices, v)?)
    } else {
        None
    };
    Ok((best, traj))
}

#[derive(Clone, Debug)]
pub struct ConnectingOrbit {
    /// Shift-normalized trajectory (action c_* at s = 0).
    pub trajectory: CylinderTrajectory,
    pub source_id: usize,
    pub target_id: usize,
    pub shoot_direction: Vec<f64>,
    /// Orientation determinant in the default eigenbasis orientations.
    pub determinant: f64,
    /// Sign in the default orientations.
    pub sign: i8,
    /// Raw s value that was moved to 0 by the normalization.
    pub normalized_at: f64,
    pub energy: f64,
    pub action_drop: f64,
    /// C⁰ distance from the final slice to the target.
    pub end_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    pub source_id: usize,
    pub target_id: usize,
    pub sign: i8,
    pub energy: f64,
    pub action_drop: f64,
    pub spectral_flow: Option<i64>,
    pub rho_forward: Option<f64>,
    pub rho_backward: Option<f64>,
    pub trajectory_csv_path: Option<String>,
}

/// Action level halfway between source and target.
pub fn midpoint_level(source: &CriticalPoint, target: &CriticalPoint) -> f64 {
    0.5 * (source.action + target.action)
}

/// Shifts s so that the action crosses `level` at s = 0 (linear interpolation
/// between slices). Returns the trajectory and the raw crossing position.
/// Already-normalized input is returned unchanged.
pub fn normalize_shift(traj: &CylinderTrajectory, level: f64) -> Result<(CylinderTrajectory, f64)> {
    let mons = &traj.monitors;
    let k = (0..traj.len() - 1)
        .find(|&k| mons[k].action >= level && mons[k + 1].action <= level)
        .ok_or_else(|| Error::InvalidInput(format!("action never crosses the level {level}")))?;
    let (a0, a1) = (mons[k].action, mons[k + 1].action);
    let frac = if a0 == a1 { 0.0 } else { (a0 - level) / (a0 - a1) };
    let s_star = traj.s[k] + frac * (traj.s[k + 1] - traj.s[k]);
    let span = traj.s[traj.len() - 1].abs().max(traj.s[0].abs()).max(1.0);
    if s_star.abs() <= 64.0 * f64::EPSILON * span {
        return Ok((traj.clone(), s_star));
    }
    Ok((traj.shifted(-s_star), s_star))
}

/// Loop at parameter s, geodesically interpolated between bracketing slices.
pub fn slice_at(traj: &CylinderTrajectory, s: f64) -> Result<DiscreteLoop> {
    let last = traj.len() - 1;
    if s <= traj.s[0] {
        return Ok(traj.slices[0].clone());
    }
    if s >= traj.s[last] {
        return Ok(traj.slices[last].clone());
    }
    let k = traj.s.partition_point(|&x| x <= s) - 1;
    let frac = (s - traj.s[k]) / (traj.s[k + 1] - traj.s[k]);
    let l = traj.slices[k].log_to(&traj.slices[k + 1])?;
    Ok(traj.slices[k].exp_field(&l.scaled(frac)))
}

fn gram_schmidt(vs: &mut [LoopField]) -> f64 {
    let mut min_norm = f64::INFINITY;
    for i in 0..vs.len() {
        for j in 0..i {
            let c = vs[i].inner(&vs[j]);
            let vj = vs[j].clone();
            vs[i].axpy(-c, &vj);
        }
        let n = vs[i].l2();
        min_norm = min_norm.min(n);
        vs[i] = vs[i].scaled(1.0 / n);
    }
    min_norm
}

/// Transports the oriented basis of E⁻(source) along the trajectory by the
/// linearized flow and returns det(Bᵀ F) at the final slice, where
/// B = (∂_s u / ‖∂_s u‖, E⁻(target)) and F is the transported frame.
pub fn orientation_determinant(
    traj: &CylinderTrajectory,
    v: &Perturbation,
    source: &CriticalPoint,
    target: &CriticalPoint,
) -> Result<f64> {
    let k = source.morse_index;
    if target.morse_index + 1 != k {
        return Err(Error::InvalidInput("index difference must be one".into()));
    }
    if traj.len() < 2 {
        return Err(Error::InvalidInput("trajectory needs at least two slices".into()));
    }
    let n = traj.first().n_samples();
    let h = traj.s[1] - traj.s[0];
    let stepper = LinearStepper::new(n, h)?;
    let mut frame: Vec<LoopField> = source
        .unstable_directions()
        .iter()
        .map(|f| {
            let mut g = f.clone();
            traj.first().project_field(&mut g);
            g
        })
        .collect();
    gram_schmidt(&mut frame);
    for w in 0..traj.len() - 1 {
        let (u, next) = (&traj.slices[w], &traj.slices[w + 1]);
        if ((traj.s[w + 1] - traj.s[w]) - h).abs() > 1e-9 * h {
            return Err(Error::InvalidInput("orientation transport needs a uniform s grid".into()));
        }
        frame = frame.iter().map(|f| stepper.step(u, next, v, f)).collect::<Result<_>>()?;
        gram_schmidt(&mut frame);
    }
    let last = traj.len() - 1;
    let u = &traj.slices[last];
    let dsu = u.log_to(&traj.slices[last - 1])?.scaled(-1.0);
    let mut basis = vec![dsu];
    for e in target.unstable_directions() {
        let mut g = e.clone();
        u.project_field(&mut g);
        basis.push(g);
    }
    let min_norm = gram_schmidt(&mut basis);
    if !(min_norm > 1e-12) {
        return Err(Error::FrameCollapse { det: 0.0 });
    }
    let m = DMatrix::from_fn(k, k, |i, j| basis[i].inner(&frame[j]));
    let det = m.determinant();
    if det.abs() < 1e-8 {
        return Err(Error::FrameCollapse { det });
    }
    Ok(det)
}

/// Characteristic sign of an orbit under orientations ν (one ±1 per
/// generator, relative to the default eigenbasis orientation).
pub fn compute_sign(orbit: &ConnectingOrbit, orientations: &[i8]) -> i8 {
    let base: i8 = if orbit.determinant > 0.0 { 1 } else { -1 };
    base * orientations[orbit.source_id] * orientations[orbit.target_id]
}

fn finish_orbit(
    raw: CylinderTrajectory,
    v: &Perturbation,
    crit: &[CriticalPoint],
    source_id: usize,
    target_id: usize,
    direction: Vec<f64>,
) -> Result<ConnectingOrbit> {
    let (source, target) = (&crit[source_id], &crit[target_id]);
    let determinant = orientation_determinant(&raw, v, source, target)?;
    let (trajectory, normalized_at) = normalize_shift(&raw, midpoint_level(source, target))?;
    let end_distance = loop_distance(trajectory.last(), &target.curve, LoopNorm::C0)?;
    Ok(ConnectingOrbit {
        energy: energy(&trajectory),
        action_drop: source.action - target.action,
        trajectory,
        source_id,
        target_id,
        shoot_direction: direction,
        determinant,
        sign: if determinant > 0.0 { 1 } else { -1 },
        normalized_at,
        end_distance,
    })
}

/// All orbits from `crit[source_id]` to `crit[target_id]` modulo shift.
/// Pairs whose index difference is not one have no such orbits here.
pub fn enumerate_connecting(
    crit: &[CriticalPoint],
    source_id: usize,
    target_id: usize,
    v: &Perturbation,
    controls: &OrbitControls,
) -> Result<Vec<ConnectingOrbit>> {
    let (source, target) = (&crit[source_id], &crit[target_id]);
    if source.morse_index != target.morse_index + 1 {
        return Ok(Vec::new());
    }
    let chart = build_chart(source, v, controls.eps_seed)?;
    let mut orbits = match chart.dim() {
        1 => {
            let shots: Vec<(f64, Result<CylinderTrajectory>)> =
                [1.0, -1.0].par_iter().map(|&c| (c, shoot(&chart, &[c], v, controls))).collect();
            let mut out = Vec::new();
            for (c, traj) in shots {
                let traj = traj?;
                if traj.status != FlowStatus::Converged {
                    continue;
                }
                if detect_near(traj.last(), crit, controls.capture_radius)? == Some(target_id) {
                    out.push(finish_orbit(traj, v, crit, source_id, target_id, vec![c])?);
                }
            }
            out
        }
        2 => sweep_circle(&chart, crit, source_id, target_id, v, controls)?,
        k => {
            return Err(Error::InvalidInput(format!(
                "orbits from index-{k} sources are not enumerated (dimension check only)"
            )))
        }
    };
    dedup_orbits(&mut orbits, controls.dedup_radius)?;
    Ok(orbits)
}

fn sweep_circle(
    chart: &UnstableChart,
    crit: &[CriticalPoint],
    source_id: usize,
    target_id: usize,
    v: &Perturbation,
    controls: &OrbitControls,
) -> Result<Vec<ConnectingOrbit>> {
    let target = &crit[target_id];
    let m = controls.sweep_angles;
    let angle = |i: usize| 2.0 * std::f64::consts::PI * i as f64 / m as f64;
    let passages: Vec<Passage> = (0..m)
        .into_par_iter()
        .map(|i| probe(chart, angle(i), target, v, controls, false).map(|p| p.0))
        .collect::<Result<_>>()?;
    for i in 0..m {
        let (a, b) = (&passages[i], &passages[(i + 1) % m]);
        if a.distance <= controls.capture_radius && b.distance <= controls.capture_radius {
            return Err(Error::NonTransverseSuspect { angle: a.angle });
        }
    }
    let near = 0.25 * chart.base.curve.manifold().injectivity_radius();
    let intervals: Vec<(f64, f64, f64)> = (0..m)
        .filter(|&i| {
            let (a, b) = (&passages[i], &passages[(i + 1) % m]);
            a.side * b.side < 0.0 && a.distance.min(b.distance) < near
        })
        .map(|i| (angle(i), angle(i) + angle(1), passages[i].side))
        .collect();
    let found: Vec<Option<ConnectingOrbit>> = intervals
        .into_par_iter()
        .map(|(mut lo, mut hi, side_lo)| {
            while hi - lo > controls.bisection_width {
                let mid = 0.5 * (lo + hi);
                let p = probe(chart, mid, target, v, controls, false)?.0;
                if p.side * side_lo > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mid = 0.5 * (lo + hi);
            let (p, traj) = probe(chart, mid, target, v, controls, true)?;
            if p.distance > controls.capture_radius {
                // the side changed without the trajectory passing the target
                return Ok(None);
            }
            finish_orbit(traj.unwrap(), v, crit, source_id, target_id, vec![mid.cos(), mid.sin()]).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().collect())
}

fn dedup_orbits(orbits: &mut Vec<ConnectingOrbit>, radius: f64) -> Result<()> {
    let mut kept: Vec<ConnectingOrbit> = Vec::new();
    let mut zero_loops: Vec<DiscreteLoop> = Vec::new();
    for o in orbits.drain(..) {
        let z = slice_at(&o.trajectory, 0.0)?;
        let dup = zero_loops
            .iter()
            .any(|w| loop_distance(w, &z, LoopNorm::C0).map(|d| d < radius).unwrap_or(false));
        if !dup {
            zero_loops.push(z);
            kept.push(o);
        }
    }
    kept.sort_by(|a, b| {
        let ang = |o: &ConnectingOrbit| {
            let c = &o.shoot_direction;
            if c.len() == 1 {
                if c[0] > 0.0 {
                    0.0
                } else {
                    std::f64::consts::PI
                }
            } else {
                c[1].atan2(c[0]).rem_euclid(2.0 * std::f64::consts::PI)
            }
        };
        ang(a).total_cmp(&ang(b)).then(a.energy.total_cmp(&b.energy))
    });
    *orbits = kept;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ev0Report {
    pub min_separation: Option<f64>,
    pub pairs: Vec<(usize, usize, f64)>,
    /// Pairs closer than the separation threshold.
    pub violations: Vec<(usize, usize)>,
}

impl Ev0Report {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Pairwise C⁰ separation of the time-0 loops of normalized orbits.
pub fn ev0_injectivity(orbits: &[ConnectingOrbit], sep_min: f64) -> Result<Ev0Report> {
    let loops: Vec<DiscreteLoop> = orbits.iter().map(|o| slice_at(&o.trajectory, 0.0)).collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for i in 0..loops.len() {
        for j in i + 1..loops.len() {
            pairs.push((i, j, loop_distance(&loops[i], &loops[j], LoopNorm::C0)?));
        }
    }
    Ok(Ev0Report {
        min_separation: pairs.iter().map(|p| p.2).reduce(f64::min),
        violations: pairs.iter().filter(|p| p.2 <= sep_min).map(|p| (p.0, p.1)).collect(),
        pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub expected: usize,
    pub singular_values: Vec<f64>,
}

impl RankReport {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.expected
    }
}

/// Numerical rank of the Jacobian of c ↦ u(probe_time) for the flow started
/// at seed(c), by centred differences around c = e₁.
pub fn unstable_rank(
    chart: &UnstableChart,
    v: &Perturbation,
    probe_time: f64,
    h: f64,
    rank_tol: f64,
) -> Result<RankReport> {
    let k = chart.dim();
    let mut c0 = vec![0.0; k];
    c0[0] = 1.0;
    let step = 1e-4;
    let ctl = FlowControls { h, s_max: probe_time, tol_conv: 0.0, stride: usize::MAX };
    let flow_to = |c: &[f64]| -> Result<Vec<f64>> {
        let traj = integrate(&chart.seed(c)?, v, &ctl)?;
        Ok(traj.last().points().to_vec())
    };
    let cols: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let (mut cp, mut cm) = (c0.clone(), c0.clone());
            cp[i] += step;
            cm[i] -= step;
            let (p, m) = (flow_to(&cp)?, flow_to(&cm)?);
            Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * step)).collect())
        })
        .collect::<Result<_>>()?;
    let rows = cols[0].len();
    let jac = DMatrix::from_fn(rows, k, |r, c| cols[c][r]);
    let mut sv: Vec<f64> = jac.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|s| **s > rank_tol * top).count();
    Ok(RankReport { rank, expected: chart.base.morse_index, singular_values: sv })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineControls {
    /// Stop once the residual norm is below this.
    pub tol: f64,
    /// Largest admissible starting residual.
    pub delta0: f64,
    /// Exponent of the residual and correction norms.
    pub p: f64,
    pub max_iter: usize,
}

impl Default for RefineControls {
    fn default() -> Self {
        Self { tol: 1e-9, delta0: 0.1, p: 4.0, max_iter: 10 }
    }
}

/// Cylinder residual R_k = log_{u_k} u_{k+1} / h_k − F(u_k), k < last.
pub fn trajectory_residual(traj: &CylinderTrajectory, v: &Perturbation) -> Result<Vec<LoopField>> {
    (0..traj.len() - 1)
        .into_par_iter()
        .map(|k| {
            let u = &traj.slices[k];
            let mut r = u.log_to(&traj.slices[k + 1])?.scaled(1.0 / (traj.s[k + 1] - traj.s[k]));
            r.axpy(-1.0, &heat_residual(u, v)?);
            Ok(r)
        })
        .collect()
}

/// (Σ_k h_k ‖f_k‖_p^p)^{1/p} over the fields of a cylinder.
pub fn cylinder_lp(traj: &CylinderTrajectory, fields: &[LoopField], p: f64) -> f64 {
    let len = traj.len();
    fields
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let h = if k + 1 < len { traj.s[k + 1] - traj.s[k] } else { traj.s[k] - traj.s[k - 1] };
            h * f.lp(p).powf(p)
        })
        .sum::<f64>()
        .powf(1.0 / p)
}

#[derive(Clone, Debug)]
pub struct NewtonCorrection {
    pub trajectory: CylinderTrajectory,
    pub residual_before: f64,
    pub residual_after: f64,
    pub correction_norm: f64,
}

/// One Gauss–Newton correction: the minimum-norm ξ = Dᵀη with D Dᵀ η = −R,
/// where D is the forward-difference linearization of the residual.
pub fn newton_correction(traj: &CylinderTrajectory, v: &Perturbation, p: f64) -> Result<NewtonCorrection> {
    let len = traj.len();
    if len < 2 {
        return Err(Error::InvalidInput("trajectory needs at least two slices".into()));
    }
    let res = trajectory_residual(traj, v)?;
    let residual_before = cylinder_lp(traj, &res, p);
    let hess: Vec<_> = traj.slices.par_iter().map(|u| assemble_hessian(u, v)).collect::<Result<_>>()?;
    let m = hess[0].matrix.nrows();
    let fib = hess[0].frames.fibre_dim();
    let n = traj.first().n_samples();
    let rows = len - 1;
    let hs: Vec<f64> = (0..rows).map(|k| traj.s[k + 1] - traj.s[k]).collect();
    // row k of D: B_k at column k, C_k at column k + 1
    let b: Vec<DMatrix<f64>> = (0..rows)
        .map(|k| &hess[k].matrix - DMatrix::identity(m, m) / hs[k])
        .collect();
    let c: Vec<DMatrix<f64>> = (0..rows)
        .map(|k| {
            let mut out = DMatrix::zeros(m, m);
            for j in 0..n {
                let blk = hess[k].frames.frames[j].transpose() * &hess[k + 1].frames.frames[j] / hs[k];
                out.view_mut((j * fib, j * fib), (fib, fib)).copy_from(&blk);
            }
            out
        })
        .collect();
    let rhs: Vec<DVector<f64>> = (0..rows)
        .map(|k| -DVector::from_vec(hess[k].frames.to_coords(&res[k])))
        .collect();
    let diag: Vec<DMatrix<f64>> = (0..rows).map(|k| &b[k] * b[k].transpose() + &c[k] * c[k].transpose()).collect();
    let off: Vec<DMatrix<f64>> = (0..rows.saturating_sub(1)).map(|k| &c[k] * b[k + 1].transpose()).collect();
    let eta = block_tridiagonal_solve(&diag, &off, &rhs)?;
    let xi: Vec<LoopField> = (0..len)
        .map(|col| {
            let mut coords = DVector::zeros(m);
            if col < rows {
                coords += b[col].transpose() * &eta[col];
            }
            if col > 0 {
                coords += c[col - 1].transpose() * &eta[col - 1];
            }
            hess[col].frames.to_field(coords.as_slice())
        })
        .collect();
    let correction_norm = cylinder_lp(traj, &xi, p);
    let slices: Vec<DiscreteLoop> = traj.slices.iter().zip(&xi).map(|(u, x)| u.exp_field(x)).collect();
    let trajectory = CylinderTrajectory::from_slices(traj.s.clone(), slices, v)?;
    let residual_after = cylinder_lp(&trajectory, &trajectory_residual(&trajectory, v)?, p);
    Ok(NewtonCorrection { trajectory, residual_before, residual_after, correction_norm })
}

/// Solves the symmetric block tridiagonal system with diagonal blocks `diag`
/// and super-diagonal blocks `off`.
fn block_tridiagonal_solve(diag: &[DMatrix<f64>], off: &[DMatrix<f64>], rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let len = diag.len();
    let mut cp: Vec<DMatrix<f64>> = Vec::with_capacity(len);
    let mut dp: Vec<DVector<f64>> = Vec::with_capacity(len);
    let singular = || Error::InvalidInput("singular normal equations".into());
    for k in 0..len {
        let (s, r) = if k == 0 {
            (diag[0].clone(), rhs[0].clone())
        } else {
            let lt = off[k - 1].transpose();
            (&diag[k] - &lt * &cp[k - 1], &rhs[k] - &lt * &dp[k - 1])
        };
        let lu = s.lu();
        dp.push(lu.solve(&r).ok_or_else(singular)?);
        if k + 1 < len {
            cp.push(lu.solve(&off[k]).ok_or_else(singular)?);
        }
    }
    let mut x = vec![DVector::zeros(0); len];
    x[len - 1] = dp[len - 1].clone();
    for k in (0..len - 1).rev() {
        x[k] = &dp[k] - &cp[k] * &x[k + 1];
    }
    Ok(x)
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub trajectory: CylinderTrajectory,
    /// Sum of the correction norms over all iterations.
    pub correction_norm: f64,
    pub residual_history: Vec<f64>,
}

/// Newton corrections until the residual norm is below `tol`.
pub fn refine_trajectory(traj: &CylinderTrajectory, v: &Perturbation, controls: &RefineControls) -> Result<Refinement> {
    let res0 = cylinder_lp(traj, &trajectory_residual(traj, v)?, controls.p);
    if res0 > controls.delta0 {
        return Err(Error::ResidualTooLarge { residual: res0, delta0: controls.delta0 });
    }
    let mut current = traj.clone();
    let mut history = vec![res0];
    let mut total = 0.0;
    for _ in 0..controls.max_iter {
        let last = *history.last().unwrap();
        if last <= controls.tol {
            break;
        }
        let step = newton_correction(&current, v, controls.p)?;
        let factor = step.residual_after / last;
        if factor >= 0.8 {
            return Err(Error::Stalled { factor });
        }
        total += step.correction_norm;
        history.push(step.residual_after);
        current = step.trajectory;
    }
    Ok(Refinement { trajectory: current, correction_norm: total, residual_history: history })
}

/// Subsamples a flow trajectory to every `stride`-th slice and trims the
/// tails where ‖∂_s u‖ is below `tail_fraction` of its maximum.
pub fn prepare_for_refinement(
    traj: &CylinderTrajectory,
    v: &Perturbation,
    stride: usize,
    tail_fraction: f64,
) -> Result<CylinderTrajectory> {
    let peak = traj.monitors.iter().map(|m| m.dsu_l2).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..traj.len())
        .step_by(stride.max(1))
        .filter(|&k| traj.monitors[k].dsu_l2 >= tail_fraction * peak)
        .collect();
    if keep.len() < 3 {
        return Err(Error::InvalidInput("too few slices left after trimming".into()));
    }
    let s = keep.iter().map(|&k| traj.s[k]).collect();
    let slices = keep.iter().map(|&k| traj.slices[k].clone()).collect();
    CylinderTrajectory::from_slices(s, slices, v)
}

/// Adds a smooth tangent perturbation a·φ(s)·w_k to each slice, with φ a
/// bump vanishing at both ends and w_k a fixed random smooth field.
pub fn perturb_trajectory<R: Rng>(
    traj: &CylinderTrajectory,
    v: &Perturbation,
    amplitude: f64,
    rng: &mut R,
) -> Result<CylinderTrajectory> {
    let d = traj.first().dim();
    let n = traj.first().n_samples();
    let coeffs: Vec<[f64; 3]> = (0..d).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
    let len = traj.len();
    let slices = traj
        .slices
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let x = k as f64 / (len - 1) as f64;
            let phi = (std::f64::consts::PI * x).sin();
            let mut f = LoopField::zeros(n, d);
            for j in 0..n {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                for (c, a) in coeffs.iter().enumerate() {
                    f.at_mut(j)[c] = amplitude * phi * (a[0] + a[1] * t.cos() + a[2] * t.sin());
                }
            }
            u.project_field(&mut f);
            u.exp_field(&f)
        })
        .collect();
    CylinderTrajectory::from_slices(traj.s.clone(), slices, v)
}
