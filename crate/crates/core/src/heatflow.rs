//! Heat-flow integration ∂_s u = ∇_t ∂_t u + grad V(u) on the cylinder.
//!
//! Each step is semi-implicit: the stiff periodic second difference is
//! treated implicitly through a circulant (FFT) solve per ambient
//! coordinate, the remaining terms explicitly, and every sample is then
//! projected back onto M.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::crit::CriticalPoint;
use crate::error::{Error, Result};
use crate::linalg::linear_fit;
use crate::loopspace::{action, heat_residual, loop_distance, DiscreteLoop, LoopField, LoopNorm};
use crate::perturbation::Perturbation;

/// Largest stable step for N samples.
pub fn h_max(n: usize) -> f64 {
    0.25 / n as f64
}

/// Periodic solver for (I − h·D_tt) y = b with D_tt the second difference.
pub struct CirculantSolver {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    denominators: Vec<f64>,
}

impl CirculantSolver {
    pub fn new(n: usize, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let n2 = (n * n) as f64;
        let denominators = (0..n)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
                (1.0 + 4.0 * h * n2 * s * s) * n as f64
            })
            .collect();
        Self { n, forward, inverse, denominators }
    }

    /// Solves in place for every coordinate of an N×d row-major buffer.
    pub fn solve(&self, data: &mut [f64], d: usize) {
        let n = self.n;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for c in 0..d {
            for j in 0..n {
                buf[j] = Complex::new(data[j * d + c], 0.0);
            }
            self.forward.process(&mut buf);
            for (b, den) in buf.iter_mut().zip(&self.denominators) {
                *b /= den;
            }
            self.inverse.process(&mut buf);
            for j in 0..n {
                data[j * d + c] = buf[j].re;
            }
        }
    }
}

/// Periodic second difference of an N×d buffer.
pub fn second_difference(data: &[f64], n: usize, d: usize) -> Vec<f64> {
    let n2 = (n * n) as f64;
    let mut out = vec![0.0; data.len()];
    for j in 0..n {
        let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
        for c in 0..d {
            out[j * d + c] = n2 * (data[jp * d + c] - 2.0 * data[j * d + c] + data[jm * d + c]);
        }
    }
    out
}

/// Stateful stepper reusing the FFT plans for a fixed (N, h).
pub struct HeatStepper {
    pub h: f64,
    solver: CirculantSolver,
}

impl HeatStepper {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        let limit = h_max(n);
        if !(h > 0.0 && h <= limit) {
            return Err(Error::StepTooLarge { h, h_max: limit });
        }
        Ok(Self { h, solver: CirculantSolver::new(n, h) })
    }

    pub fn step(&self, u: &DiscreteLoop, v: &Perturbation) -> Result<DiscreteLoop> {
        let n = u.n_samples();
        let d = u.dim();
        let h = self.h;
        let f = heat_residual(u, v)?;
        let dtt = second_difference(u.points(), n, d);
        let mut rhs: Vec<f64> = u
            .points()
            .iter()
            .zip(f.data())
            .zip(&dtt)
            .map(|((x, r), l)| x + h * (r - l))
            .collect();
        self.solver.solve(&mut rhs, d);
        let m = u.manifold();
        for (j, q) in rhs.chunks_exact_mut(d).enumerate() {
            m.project_point_in_place(q).map_err(|_| Error::ProjectionFailed { sample: j })?;
        }
        DiscreteLoop::new(m.clone(), rhs)
    }
}

/// One semi-implicit heat step.
pub fn step(u: &DiscreteLoop, v: &Perturbation, h: f64) -> Result<DiscreteLoop> {
    HeatStepper::new(u.n_samples(), h)?.step(u, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowControls {
    pub h: f64,
    pub s_max: f64,
    pub tol_conv: f64,
    /// Keep every `stride`-th slice (monitors are recorded at every step).
    pub stride: usize,
}

impl FlowControls {
    pub fn new(h: f64, s_max: f64) -> Self {
        Self { h, s_max, tol_conv: 1e-8, stride: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub s: f64,
    pub action: f64,
    /// ‖∂_s u‖_{L²}: forward difference log_{u_k} u_{k+1} / h, or the
    /// residual on the final slice.
    pub dsu_l2: f64,
    pub dsu_sup: f64,
    pub dtu_sup: f64,
    pub nabla_t_dtu_sup: f64,
}

/// Sequence of loops approximating a heat-flow cylinder.
#[derive(Clone, Debug)]
pub struct CylinderTrajectory {
    pub s: Vec<f64>,
    pub slices: Vec<DiscreteLoop>,
    pub monitors: Vec<Monitor>,
    pub status: FlowStatus,
}

impl CylinderTrajectory {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn first(&self) -> &DiscreteLoop {
        &self.slices[0]
    }

    pub fn last(&self) -> &DiscreteLoop {
        self.slices.last().expect("trajectory has at least one slice")
    }

    /// Builds a trajectory from stored slices, recomputing the monitors.
    pub fn from_slices(s: Vec<f64>, slices: Vec<DiscreteLoop>, v: &Perturbation) -> Result<Self> {
        if s.len() != slices.len() || slices.is_empty() {
            return Err(Error::InvalidInput("one s value per slice is required".into()));
        }
        for w in slices.windows(2) {
            w[0].check_same_grid(&w[1])?;
        }
        let mut monitors = Vec::with_capacity(slices.len());
        for k in 0..slices.len() {
            let next = slices.get(k + 1).map(|u| (u, s[k + 1] - s[k]));
            monitors.push(monitor(s[k], &slices[k], next, v)?);
        }
        Ok(Self { s, slices, monitors, status: FlowStatus::Converged })
    }

    /// The trajectory with s ↦ −s (slices reversed).
    pub fn reversed(&self, v: &Perturbation) -> Result<Self> {
        let s: Vec<f64> = self.s.iter().rev().map(|x| -x).collect();
        let slices: Vec<DiscreteLoop> = self.slices.iter().rev().cloned().collect();
        Self::from_slices(s, slices, v)
    }

    /// Shifts the s coordinate by `ds` (monitors included).
    pub fn shifted(&self, ds: f64) -> Self {
        let mut out = self.clone();
        out.s.iter_mut().for_each(|x| *x += ds);
        out.monitors.iter_mut().for_each(|m| m.s += ds);
        out
    }

    pub fn write_monitors_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "action", "dsu_l2", "dtu_sup", "nabla_t_dtu_sup"])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        for m in &self.monitors {
            w.write_record([
                format!("{:.17e}", m.s),
                format!("{:.17e}", m.action),
                format!("{:.17e}", m.dsu_l2),
                format!("{:.17e}", m.dtu_sup),
                format!("{:.17e}", m.nabla_t_dtu_sup),
            ])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(())
    }
}

fn monitor(s: f64, u: &DiscreteLoop, next: Option<(&DiscreteLoop, f64)>, v: &Perturbation) -> Result<Monitor> {
    let dsu: LoopField = match next {
        Some((w, h)) => u.log_to(w)?.scaled(1.0 / h),
        None => heat_residual(u, v)?,
    };
    Ok(Monitor {
        s,
        action: action(u, v),
        dsu_l2: dsu.l2(),
        dsu_sup: dsu.sup(),
        dtu_sup: u.velocity()?.sup(),
        nabla_t_dtu_sup: u.acceleration()?.sup(),
    })
}

/// Integrates until ‖∂_s u‖ ≤ tol_conv or s_max is reached.
pub fn integrate(u0: &DiscreteLoop, v: &Perturbation, controls: &FlowControls) -> Result<CylinderTrajectory> {
    integrate_until(u0, v, controls, |_, _| false)
}

/// As [`integrate`], additionally stopping after the step at which `stop`
/// returns true for the new slice (given its index and the slice).
pub fn integrate_until<F: FnMut(usize, &DiscreteLoop) -> bool>(
    u0: &DiscreteLoop,
    v: &Perturbation,
    controls: &FlowControls,
    mut stop: F,
) -> Result<CylinderTrajectory> {
    let stepper = HeatStepper::new(u0.n_samples(), controls.h)?;
    let stride = controls.stride.max(1);
    let h = controls.h;
    let max_steps = (controls.s_max / h).ceil() as usize;
    let mut s_vals = vec![0.0];
    let mut slices = vec![u0.clone()];
    let mut monitors = Vec::new();
    let mut u = u0.clone();
    let mut status = FlowStatus::BudgetExhausted;
    if heat_residual(&u, v)?.l2() <= controls.tol_conv {
        monitors.push(monitor(0.0, &u, None, v)?);
        return Ok(CylinderTrajectory { s: s_vals, slices, monitors, status: FlowStatus::Converged });
    }
    for k in 1..=max_steps {
        let next = stepper.step(&u, v)?;
        let mon = monitor((k - 1) as f64 * h, &u, Some((&next, h)), v)?;
        monitors.push(mon);
        u = next;
        let s = k as f64 * h;
        let converged = mon.dsu_l2 <= controls.tol_conv;
        let halt = stop(k, &u);
        if k % stride == 0 || converged || halt || k == max_steps {
            s_vals.push(s);
            slices.push(u.clone());
        }
        if converged {
            status = FlowStatus::Converged;
            break;
        }
        if halt {
            break;
        }
    }
    let last_s = *s_vals.last().unwrap();
    monitors.push(monitor(last_s, &u, None, v)?);
    Ok(CylinderTrajectory { s: s_vals, slices, monitors, status })
}

/// ∫‖∂_s u‖² ds, with the forward-difference velocities of consecutive
/// monitors (midpoint rule on the step grid).
pub fn energy(traj: &CylinderTrajectory) -> f64 {
    traj.monitors
        .windows(2)
        .map(|w| (w[1].s - w[0].s) * w[0].dsu_l2 * w[0].dsu_l2)
        .sum()
}

/// Steps whose action increase exceeds 1e−10 + 10 h² ‖∂_s u‖².
pub fn monotonicity_violations(traj: &CylinderTrajectory) -> Vec<usize> {
    traj.monitors
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let h = w[1].s - w[0].s;
            let tol = 1e-10 + 10.0 * h * h * w[0].dsu_l2 * w[0].dsu_l2;
            w[1].action > w[0].action + tol
        })
        .map(|(k, _)| k)
        .collect()
}

/// Index of the unique critical point within C⁰ `capture_radius` of the
/// final slice.
pub fn detect_limit(traj: &CylinderTrajectory, crit: &[CriticalPoint], capture_radius: f64) -> Result<Option<usize>> {
    detect_near(traj.last(), crit, capture_radius)
}

/// Same as [`detect_limit`] for a single loop.
pub fn detect_near(u: &DiscreteLoop, crit: &[CriticalPoint], capture_radius: f64) -> Result<Option<usize>> {
    let mut gap = f64::INFINITY;
    for i in 0..crit.len() {
        for j in i + 1..crit.len() {
            if let Ok(d) = loop_distance(&crit[i].curve, &crit[j].curve, LoopNorm::C0) {
                gap = gap.min(d);
            }
        }
    }
    if capture_radius >= 0.5 * gap {
        return Err(Error::AmbiguousCapture { radius: capture_radius, gap });
    }
    Ok(crit
        .iter()
        .position(|c| loop_distance(u, &c.curve, LoopNorm::C0).map(|d| d <= capture_radius).unwrap_or(false)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Forward,
    Backward,
}

/// Which part of a trajectory counts as asymptotic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailWindow {
    /// Slices with ‖∂_s u‖ above this fraction of the maximum are excluded.
    pub max_fraction: f64,
    /// Slices with ‖∂_s u‖ below this floor are excluded (round-off regime).
    pub floor: f64,
    pub min_slices: usize,
}

impl Default for TailWindow {
    fn default() -> Self {
        Self { max_fraction: 0.05, floor: 1e-7, min_slices: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rho: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub reference_gap: f64,
    pub ratio: f64,
    pub slices: usize,
}

/// Exponential rate of ‖∂_s u‖ on the trailing (forward) or leading
/// (backward) asymptotic window.
pub fn decay_fit(traj: &CylinderTrajectory, side: Side, reference_gap: f64, window: &TailWindow) -> Result<DecayFit> {
    // the last monitor is a residual, not a step velocity
    let mons = &traj.monitors[..traj.monitors.len().saturating_sub(1)];
    let peak = mons.iter().map(|m| m.dsu_l2).fold(0.0, f64::max);
    let top = window.max_fraction * peak;
    let in_window = |m: &&Monitor| m.dsu_l2 <= top && m.dsu_l2 >= window.floor;
    let peak_idx = mons.iter().position(|m| m.dsu_l2 == peak).unwrap_or(0);
    let chosen: Vec<&Monitor> = match side {
        Side::Forward => {
            let tail = &mons[peak_idx..];
            let first = tail.iter().position(|m| m.dsu_l2 <= top).unwrap_or(tail.len());
            tail[first..].iter().filter(in_window).collect()
        }
        Side::Backward => {
            let head = &mons[..peak_idx];
            let last = head.iter().rposition(|m| m.dsu_l2 <= top).map(|i| i + 1).unwrap_or(0);
            head[..last].iter().filter(in_window).collect()
        }
    };
    if chosen.len() < window.min_slices {
        return Err(Error::InsufficientTail { found: chosen.len(), needed: window.min_slices });
    }
    let xs: Vec<f64> = chosen.iter().map(|m| m.s).collect();
    let ys: Vec<f64> = chosen.iter().map(|m| m.dsu_l2.ln()).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let rho = match side {
        Side::Forward => -slope,
        Side::Backward => slope,
    };
    Ok(DecayFit {
        rho,
        window: (xs[0], *xs.last().unwrap()),
        r_squared: r2,
        reference_gap,
        ratio: rho / reference_gap,
        slices: chosen.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub sup_dtu: f64,
    pub sup_nabla_t_dtu: f64,
    pub sup_dsu: f64,
    /// Each sup divided by its value on the first slices (both floored at 1).
    pub ratios: [f64; 3],
    pub bound_factor: f64,
    pub violations: Vec<String>,
}

/// Slices compared against in [`check_apriori`].
pub const APRIORI_REFERENCE_SLICES: usize = 10;

/// No-blow-up surrogate: sup over the trajectory of ‖∂_t u‖_∞, ‖∇_t ∂_t u‖_∞
/// and ‖∂_s u‖_∞ against their values on the first slices.
pub fn check_apriori(traj: &CylinderTrajectory, c0: f64, bound_factor: f64) -> Result<AprioriReport> {
    if let Some(m) = traj.monitors.iter().find(|m| m.action > c0) {
        return Err(Error::InvalidInput(format!("slice at s = {} has action {} above c0 = {c0}", m.s, m.action)));
    }
    let head = &traj.monitors[..traj.monitors.len().min(APRIORI_REFERENCE_SLICES)];
    let sup = |f: &dyn Fn(&Monitor) -> f64, ms: &[Monitor]| ms.iter().map(f).fold(0.0, f64::max);
    let getters: [(&str, &dyn Fn(&Monitor) -> f64); 3] = [
        ("dtu_sup", &|m: &Monitor| m.dtu_sup),
        ("nabla_t_dtu_sup", &|m: &Monitor| m.nabla_t_dtu_sup),
        ("dsu_sup", &|m: &Monitor| m.dsu_sup),
    ];
    let mut sups = [0.0; 3];
    let mut ratios = [0.0; 3];
    let mut violations = Vec::new();
    for (i, (name, g)) in getters.iter().enumerate() {
        sups[i] = sup(*g, &traj.monitors);
        ratios[i] = sups[i].max(1.0) / sup(*g, head).max(1.0);
        if ratios[i] > bound_factor {
            violations.push(format!("{name}: ratio {} exceeds {bound_factor}", ratios[i]));
        }
    }
    Ok(AprioriReport {
        sup_dtu: sups[0],
        sup_nabla_t_dtu: sups[1],
        sup_dsu: sups[2],
        ratios,
        bound_factor,
        violations,
    })
}
