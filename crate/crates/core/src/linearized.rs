//! The linearized operator D_u = ∇_s + A(u_s) along a cylinder, its formal
//! adjoint, the Hessian family s ↦ A(s) and its spectral flow.
//!
//! Cylinder fields are one [`LoopField`] per trajectory slice. The s-derivative
//! is a projected one-sided difference: forward for D_u, backward (with sign)
//! for D_u*. With these choices the two are exactly adjoint in the interior.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crit::{build_frames, eigenvalues, hessian_apply, CriticalPoint};
use crate::error::{Error, Result};
use crate::heatflow::{second_difference, CirculantSolver, CylinderTrajectory};
use crate::loopspace::{DiscreteLoop, LoopField};
use crate::perturbation::Perturbation;

pub type CylinderField = Vec<LoopField>;

fn check_field(traj: &CylinderTrajectory, xi: &[LoopField]) -> Result<()> {
    if xi.len() != traj.len() {
        return Err(Error::GridMismatch(format!("{} slices in the field, {} in the trajectory", xi.len(), traj.len())));
    }
    let u = traj.first();
    for f in xi {
        if f.n_samples() != u.n_samples() || f.dim() != u.dim() {
            return Err(Error::GridMismatch("field slice does not match the loop grid".into()));
        }
    }
    Ok(())
}

fn projected(u: &DiscreteLoop, f: &LoopField) -> LoopField {
    let mut out = f.clone();
    u.project_field(&mut out);
    out
}

/// D_u ξ = ∇_s ξ + A(u_s) ξ.
pub fn apply_du(traj: &CylinderTrajectory, v: &Perturbation, xi: &[LoopField]) -> Result<CylinderField> {
    check_field(traj, xi)?;
    let len = traj.len();
    (0..len)
        .into_par_iter()
        .map(|k| {
            let u = &traj.slices[k];
            let mut out = hessian_apply(u, v, &xi[k])?;
            if len > 1 {
                let ds = if k + 1 < len {
                    let h = traj.s[k + 1] - traj.s[k];
                    projected(u, &xi[k + 1]).sub(&xi[k]).scaled(1.0 / h)
                } else {
                    let h = traj.s[k] - traj.s[k - 1];
                    xi[k].sub(&projected(u, &xi[k - 1])).scaled(1.0 / h)
                };
                out.axpy(1.0, &ds);
            }
            Ok(out)
        })
        .collect()
}

/// D_u* η = −∇_s η + A(u_s) η.
pub fn apply_du_star(traj: &CylinderTrajectory, v: &Perturbation, eta: &[LoopField]) -> Result<CylinderField> {
    check_field(traj, eta)?;
    let len = traj.len();
    (0..len)
        .into_par_iter()
        .map(|k| {
            let u = &traj.slices[k];
            let mut out = hessian_apply(u, v, &eta[k])?;
            if len > 1 {
                let ds = if k > 0 {
                    let h = traj.s[k] - traj.s[k - 1];
                    eta[k].sub(&projected(u, &eta[k - 1])).scaled(1.0 / h)
                } else {
                    let h = traj.s[1] - traj.s[0];
                    projected(u, &eta[1]).sub(&eta[0]).scaled(1.0 / h)
                };
                out.axpy(-1.0, &ds);
            }
            Ok(out)
        })
        .collect()
}

/// ∫⟨ξ, η⟩_{L²} ds with the left-endpoint rule on the trajectory grid.
pub fn cylinder_inner(traj: &CylinderTrajectory, xi: &[LoopField], eta: &[LoopField]) -> f64 {
    let len = traj.len();
    (0..len)
        .map(|k| {
            let h = if k + 1 < len { traj.s[k + 1] - traj.s[k] } else { traj.s[k] - traj.s[k - 1] };
            h * xi[k].inner(&eta[k])
        })
        .sum()
}

pub fn cylinder_l2(traj: &CylinderTrajectory, xi: &[LoopField]) -> f64 {
    cylinder_inner(traj, xi, xi).sqrt()
}

/// ∂_s u as the forward difference log_{u_k} u_{k+1} / h (backward on the last slice).
pub fn s_derivative(traj: &CylinderTrajectory) -> Result<CylinderField> {
    let len = traj.len();
    (0..len)
        .map(|k| {
            if k + 1 < len {
                Ok(traj.slices[k].log_to(&traj.slices[k + 1])?.scaled(1.0 / (traj.s[k + 1] - traj.s[k])))
            } else {
                Ok(traj.slices[k].log_to(&traj.slices[k - 1])?.scaled(-1.0 / (traj.s[k] - traj.s[k - 1])))
            }
        })
        .collect()
}

/// Sorted spectra of A(s) on a subsample of trajectory slices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorFamily {
    pub s_grid: Vec<f64>,
    /// Indices of the trajectory slices used.
    pub slice_indices: Vec<usize>,
    pub eigenvalues: Vec<Vec<f64>>,
}

impl OperatorFamily {
    /// Every `stride`-th slice, always including both ends.
    pub fn from_trajectory(traj: &CylinderTrajectory, v: &Perturbation, stride: usize) -> Result<Self> {
        let stride = stride.max(1);
        let last = traj.len() - 1;
        let mut idx: Vec<usize> = (0..=last).step_by(stride).collect();
        if *idx.last().unwrap() != last {
            idx.push(last);
        }
        Self::from_indices(traj, v, idx)
    }

    fn from_indices(traj: &CylinderTrajectory, v: &Perturbation, idx: Vec<usize>) -> Result<Self> {
        let eigenvalues = idx
            .par_iter()
            .map(|&k| eigenvalues(&traj.slices[k], v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { s_grid: idx.iter().map(|&k| traj.s[k]).collect(), slice_indices: idx, eigenvalues })
    }

    pub fn len(&self) -> usize {
        self.s_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_grid.is_empty()
    }

    pub fn index_at(&self, k: usize) -> usize {
        self.eigenvalues[k].iter().filter(|l| **l < 0.0).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Midpoint of the slice interval containing the sign change.
    pub s: f64,
    pub eigen_index: usize,
    /// +1 for a negative eigenvalue becoming positive, −1 for the reverse.
    pub direction: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralFlowResult {
    pub flow: i64,
    pub crossings: Vec<Crossing>,
    pub endpoint_indices: (usize, usize),
}

/// Signed count of eigenvalue sign changes along the family.
///
/// Eigenvalues of consecutive slices are matched in sorted order. A crossing
/// where another eigenvalue lies within `track_tol` of the crossing one is
/// reported as ambiguous.
pub fn spectral_flow(fam: &OperatorFamily, track_tol: f64, tol_nondeg: f64) -> Result<SpectralFlowResult> {
    if fam.is_empty() {
        return Err(Error::InvalidInput("empty operator family".into()));
    }
    for k in [0, fam.len() - 1] {
        let margin = fam.eigenvalues[k].iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        if margin <= tol_nondeg {
            return Err(Error::EndpointDegenerate { min_abs_eig: margin });
        }
    }
    let mut crossings = Vec::new();
    for k in 0..fam.len() - 1 {
        let (a, b) = (&fam.eigenvalues[k], &fam.eigenvalues[k + 1]);
        if a.len() != b.len() {
            return Err(Error::GridMismatch("slices of different dimension".into()));
        }
        for i in 0..a.len() {
            let (neg_a, neg_b) = (a[i] < 0.0, b[i] < 0.0);
            if neg_a == neg_b {
                continue;
            }
            let close = |ev: &[f64]| {
                (i > 0 && (ev[i] - ev[i - 1]).abs() < track_tol) || (i + 1 < ev.len() && (ev[i + 1] - ev[i]).abs() < track_tol)
            };
            let s = 0.5 * (fam.s_grid[k] + fam.s_grid[k + 1]);
            if close(a) || close(b) {
                return Err(Error::TrackingAmbiguous { s });
            }
            crossings.push(Crossing { s, eigen_index: i, direction: if neg_a { 1 } else { -1 } });
        }
    }
    let flow: i64 = crossings.iter().map(|c| c.direction as i64).sum();
    let endpoint_indices = (fam.index_at(0), fam.index_at(fam.len() - 1));
    assert_eq!(
        flow,
        endpoint_indices.0 as i64 - endpoint_indices.1 as i64,
        "crossing count disagrees with the endpoint indices"
    );
    Ok(SpectralFlowResult { flow, crossings, endpoint_indices })
}

/// Largest number of stride halvings attempted on ambiguous tracking.
pub const MAX_REFINEMENTS: usize = 3;

/// Builds the family at `stride` and computes its spectral flow, halving the
/// stride on ambiguous tracking.
pub fn spectral_flow_along(
    traj: &CylinderTrajectory,
    v: &Perturbation,
    stride: usize,
    track_tol: f64,
    tol_nondeg: f64,
) -> Result<SpectralFlowResult> {
    let mut stride = stride.max(1);
    let mut attempt = 0;
    loop {
        let fam = OperatorFamily::from_trajectory(traj, v, stride)?;
        match spectral_flow(&fam, track_tol, tol_nondeg) {
            Err(Error::TrackingAmbiguous { .. }) if attempt < MAX_REFINEMENTS && stride > 1 => {
                stride = (stride / 2).max(1);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// The fields s ↦ e^{−sλ_k} v_k for the negative eigenpairs of x, sampled on `s_grid`.
pub fn stationary_kernel_basis(x: &CriticalPoint, s_grid: &[f64]) -> Result<Vec<CylinderField>> {
    if x.degenerate {
        return Err(Error::Degenerate { margin: x.nondeg_margin });
    }
    Ok(x.unstable_directions()
        .iter()
        .zip(&x.eigenvalues)
        .map(|(vk, &lam)| s_grid.iter().map(|&s| vk.scaled((-s * lam).exp())).collect())
        .collect())
}

/// Semi-implicit step of ∂_s ξ = −A(u) ξ from slice u to slice w.
pub struct LinearStepper {
    h: f64,
    solver: CirculantSolver,
}

impl LinearStepper {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        let limit = crate::heatflow::h_max(n);
        if !(h > 0.0 && h <= limit) {
            return Err(Error::StepTooLarge { h, h_max: limit });
        }
        Ok(Self { h, solver: CirculantSolver::new(n, h) })
    }

    pub fn step(&self, u: &DiscreteLoop, w: &DiscreteLoop, v: &Perturbation, xi: &LoopField) -> Result<LoopField> {
        let (n, d) = (u.n_samples(), u.dim());
        let a = hessian_apply(u, v, xi)?;
        let dtt = second_difference(xi.data(), n, d);
        let mut rhs: Vec<f64> = xi
            .data()
            .iter()
            .zip(a.data())
            .zip(&dtt)
            .map(|((x, ax), l)| x - self.h * (ax + l))
            .collect();
        self.solver.solve(&mut rhs, d);
        let mut out = LoopField::from_vec(n, d, rhs);
        w.project_field(&mut out);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCount {
    pub growing: usize,
    /// Singular values of the propagator over [0, s_end], descending.
    pub singular_values: Vec<f64>,
}

/// Number of solutions of D_u ξ = 0 on the stationary cylinder over x that
/// grow when integrated forward in s (equivalently, decay as s → −∞).
///
/// Random orthonormal initial slices are propagated over [0, s_end] and the
/// singular values of the resulting propagator above `threshold` are counted.
pub fn count_growing_solutions<R: Rng>(
    x: &DiscreteLoop,
    v: &Perturbation,
    h: f64,
    s_end: f64,
    threshold: f64,
    rng: &mut R,
) -> Result<KernelCount> {
    let frames = build_frames(x)?;
    let size = x.n_samples() * frames.fibre_dim();
    let random = DMatrix::<f64>::from_fn(size, size, |_, _| rng.gen_range(-1.0..1.0));
    let q = random.qr().q();
    let stepper = LinearStepper::new(x.n_samples(), h)?;
    let steps = (s_end / h).round() as usize;
    let columns: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|c| {
            let mut xi = frames.to_field(q.column(c).as_slice());
            for _ in 0..steps {
                xi = stepper.step(x, x, v, &xi)?;
            }
            Ok(frames.to_coords(&xi))
        })
        .collect::<Result<_>>()?;
    let phi = DMatrix::from_fn(size, size, |r, c| columns[c][r]);
    let mut sv: Vec<f64> = phi.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(KernelCount { growing: sv.iter().filter(|s| **s > threshold).count(), singular_values: sv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crit::{newton_solve, Tolerances};
    use crate::heatflow::{integrate, FlowControls};
    use crate::manifold::{ManifoldSpec, UNIT_CIRCUMFERENCE_RADIUS};
    use crate::perturbation::GeometricPotential;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pendulum() -> Perturbation {
        Perturbation::Geometric(GeometricPotential::cosine(vec![(0.1, vec![1])]))
    }

    fn torus_potential() -> Perturbation {
        Perturbation::Geometric(GeometricPotential::cosine(vec![(0.1, vec![1, 0]), (0.1, vec![0, 1])]))
    }

    fn crit_at(m: &ManifoldSpec, q: &[f64], n: usize, v: &Perturbation) -> CriticalPoint {
        let s = DiscreteLoop::constant(m.clone(), &m.point_from_angles(q), n).unwrap();
        newton_solve(&s, v, &Tolerances::default()).unwrap()
    }

    fn stationary(x: &DiscreteLoop, v: &Perturbation, s: &[f64]) -> CylinderTrajectory {
        CylinderTrajectory::from_slices(s.to_vec(), vec![x.clone(); s.len()], v).unwrap()
    }

    /// Heat-flow orbit leaving the index-1 pendulum point towards q = 0.
    fn pendulum_orbit(n: usize, h: f64) -> (CylinderTrajectory, CriticalPoint, CriticalPoint) {
        let m = ManifoldSpec::circle(UNIT_CIRCUMFERENCE_RADIUS);
        let v = pendulum();
        let top = crit_at(&m, &[0.5], n, &v);
        let bottom = crit_at(&m, &[0.0], n, &v);
        let seed = top.curve.exp_field(&top.unstable_directions()[0].scaled(1e-3));
        let mut ctl = FlowControls::new(h, 30.0);
        ctl.tol_conv = 1e-7;
        (integrate(&seed, &v, &ctl).unwrap(), top, bottom)
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let (traj, _, _) = pendulum_orbit(16, 1e-2);
        let zero: CylinderField = traj.slices.iter().map(|u| u.zero_field()).collect();
        for f in apply_du(&traj, &pendulum(), &zero).unwrap().iter().chain(&apply_du_star(&traj, &pendulum(), &zero).unwrap()) {
            assert_eq!(f.sup(), 0.0);
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let (traj, _, _) = pendulum_orbit(16, 1e-2);
        let short: CylinderField = traj.slices[1..].iter().map(|u| u.zero_field()).collect();
        assert_eq!(apply_du(&traj, &pendulum(), &short).unwrap_err().code(), "grid-mismatch");
    }

    #[test]
    fn du_is_linear() {
        let (traj, _, _) = pendulum_orbit(16, 1e-2);
        let v = pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_field = || -> CylinderField {
            traj.slices
                .iter()
                .map(|u| {
                    let mut f = LoopField::from_vec(16, 2, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect());
                    u.project_field(&mut f);
                    f
                })
                .collect()
        };
        let (a, b) = (rand_field(), rand_field());
        let comb: CylinderField = a.iter().zip(&b).map(|(x, y)| x.scaled(2.0).add(&y.scaled(-3.0))).collect();
        let (da, db, dc) = (apply_du(&traj, &v, &a).unwrap(), apply_du(&traj, &v, &b).unwrap(), apply_du(&traj, &v, &comb).unwrap());
        for k in 0..traj.len() {
            let expect = da[k].scaled(2.0).add(&db[k].scaled(-3.0));
            assert!(dc[k].sub(&expect).sup() <= 1e-9 * expect.sup().max(1.0));
        }
    }

    #[test]
    fn s_derivative_lies_in_the_kernel() {
        let mut residuals = Vec::new();
        for h in [2e-3, 1e-3] {
            let (traj, _, _) = pendulum_orbit(32, h);
            let dsu = s_derivative(&traj).unwrap();
            let r = apply_du(&traj, &pendulum(), &dsu).unwrap();
            residuals.push(cylinder_l2(&traj, &r) / cylinder_l2(&traj, &dsu));
        }
        assert!(residuals[0] < 0.05, "{residuals:?}");
        assert!(residuals[1] < 0.7 * residuals[0], "{residuals:?}");
    }

    #[test]
    fn stationary_kernel_fields_solve_the_equation() {
        let m = ManifoldSpec::circle(UNIT_CIRCUMFERENCE_RADIUS);
        let v = pendulum();
        let x = crit_at(&m, &[0.5], 16, &v);
        for h in [1e-2, 5e-3] {
            let s: Vec<f64> = (0..=(1.0 / h) as usize).map(|k| -1.0 + k as f64 * h).collect();
            let basis = stationary_kernel_basis(&x, &s).unwrap();
            assert_eq!(basis.len(), 1);
            let traj = stationary(&x.curve, &v, &s);
            let r = apply_du(&traj, &v, &basis[0]).unwrap();
            let lam = x.eigenvalues[0];
            // one-sided difference of e^{−λs}: defect ≈ h λ² / 2 relative
            let rel = cylinder_l2(&traj, &r) / cylinder_l2(&traj, &basis[0]);
            assert!(rel <= h * lam * lam, "{rel}");
        }
        let bottom = crit_at(&m, &[0.0], 16, &v);
        assert!(stationary_kernel_basis(&bottom, &[0.0]).unwrap().is_empty());
    }

    #[test]
    fn kernel_basis_is_orthogonal_per_slice() {
        let m = ManifoldSpec::flat_torus(2);
        let v = torus_potential();
        let x = crit_at(&m, &[0.5, 0.5], 16, &v);
        let basis = stationary_kernel_basis(&x, &[-1.0, -0.5, 0.0]).unwrap();
        assert_eq!(basis.len(), 2);
        for k in 0..3 {
            assert!(basis[0][k].inner(&basis[1][k]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_point_has_no_kernel_basis() {
        let m = ManifoldSpec::flat_torus(2);
        let x = crit_at(&m, &[0.1, 0.2], 16, &Perturbation::zero());
        assert_eq!(stationary_kernel_basis(&x, &[0.0]).unwrap_err().code(), "degenerate");
    }

    #[test]
    fn adjointness_defect_is_small() {
        let (traj, _, _) = pendulum_orbit(16, 1e-3);
        let v = pendulum();
        let len = traj.len();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let bump = |k: usize| {
                let x = k as f64 / (len - 1) as f64;
                if x <= 0.1 || x >= 0.9 {
                    0.0
                } else {
                    (PI * (x - 0.1) / 0.8).sin().powi(2)
                }
            };
            let field = |a: f64, b: f64| -> CylinderField {
                traj.slices
                    .iter()
                    .enumerate()
                    .map(|(k, u)| {
                        let f = LoopField::from_vec(
                            16,
                            2,
                            (0..16)
                                .flat_map(|j| {
                                    let t = j as f64 / 16.0;
                                    let w = bump(k) * (a * (2.0 * PI * t).cos() + b);
                                    [w, w]
                                })
                                .collect(),
                        );
                        projected(u, &f)
                    })
                    .collect()
            };
            let (xi, eta) = (field(c[0], c[1]), field(c[2], c[3]));
            let lhs = cylinder_inner(&traj, &apply_du(&traj, &v, &xi).unwrap(), &eta);
            let rhs = cylinder_inner(&traj, &xi, &apply_du_star(&traj, &v, &eta).unwrap());
            let scale = cylinder_l2(&traj, &xi) * cylinder_l2(&traj, &eta);
            assert!((lhs - rhs).abs() <= 1e-2 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn adjoint_is_du_of_the_reflected_cylinder() {
        let (traj, _, _) = pendulum_orbit(16, 1e-2);
        let v = pendulum();
        let eta = s_derivative(&traj).unwrap();
        let star = apply_du_star(&traj, &v, &eta).unwrap();
        let rev = traj.reversed(&v).unwrap();
        let eta_rev: CylinderField = eta.iter().rev().cloned().collect();
        let du_rev = apply_du(&rev, &v, &eta_rev).unwrap();
        let len = traj.len();
        for k in 0..len {
            assert!(star[k].sub(&du_rev[len - 1 - k]).sup() <= 1e-9 * star[k].sup().max(1.0));
        }
    }

    #[test]
    fn stationary_family_has_no_flow() {
        let m = ManifoldSpec::circle(UNIT_CIRCUMFERENCE_RADIUS);
        let v = pendulum();
        let x = crit_at(&m, &[0.5], 16, &v);
        let traj = stationary(&x.curve, &v, &[0.0, 0.5, 1.0]);
        let fam = OperatorFamily::from_trajectory(&traj, &v, 1).unwrap();
        let r = spectral_flow(&fam, 1e-3, 1e-6).unwrap();
        assert_eq!(r.flow, 0);
        assert!(r.crossings.is_empty());
        assert_eq!(r.endpoint_indices, (1, 1));
    }

    #[test]
    fn pendulum_orbit_has_unit_flow_and_reversal_negates_it() {
        let (traj, top, bottom) = pendulum_orbit(16, 1e-3);
        let v = pendulum();
        let r = spectral_flow_along(&traj, &v, 50, 1e-3, 1e-6).unwrap();
        assert_eq!(r.flow, top.morse_index as i64 - bottom.morse_index as i64);
        assert_eq!(r.flow, 1);
        assert_eq!(r.crossings.len(), 1);
        assert_eq!(r.crossings[0].direction, 1);
        assert_eq!(r.crossings[0].eigen_index, 0);
        let rev = traj.reversed(&v).unwrap();
        assert_eq!(spectral_flow_along(&rev, &v, 50, 1e-3, 1e-6).unwrap().flow, -1);
    }

    #[test]
    fn ambiguous_tracking_is_reported() {
        let (traj, _, _) = pendulum_orbit(16, 1e-3);
        let fam = OperatorFamily::from_trajectory(&traj, &pendulum(), 50).unwrap();
        // a tolerance wider than the spectral gap makes every crossing ambiguous
        assert_eq!(spectral_flow(&fam, 1e3, 1e-6).unwrap_err().code(), "tracking-ambiguous");
    }

    #[test]
    fn degenerate_endpoint_is_rejected() {
        let m = ManifoldSpec::flat_torus(2);
        let v = Perturbation::zero();
        let x = DiscreteLoop::constant(m.clone(), &m.point_from_angles(&[0.1, 0.2]), 16).unwrap();
        let fam = OperatorFamily::from_trajectory(&stationary(&x, &v, &[0.0, 1.0]), &v, 1).unwrap();
        assert_eq!(spectral_flow(&fam, 1e-3, 1e-6).unwrap_err().code(), "endpoint-degenerate");
    }

    #[test]
    fn growing_solutions_match_the_morse_index() {
        let m = ManifoldSpec::flat_torus(2);
        let v = torus_potential();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (q, index) in [([0.0, 0.0], 0), ([0.5, 0.0], 1), ([0.5, 0.5], 2)] {
            let x = crit_at(&m, &q, 16, &v);
            assert_eq!(x.morse_index, index);
            let count = count_growing_solutions(&x.curve, &v, 1e-3, 2.0, 10.0, &mut rng).unwrap();
            assert_eq!(count.growing, index, "{:?}", &count.singular_values[..4]);
        }
        let x = crit_at(&ManifoldSpec::circle(UNIT_CIRCUMFERENCE_RADIUS), &[0.5], 16, &pendulum());
        let count = count_growing_solutions(&x.curve, &pendulum(), 1e-3, 2.0, 10.0, &mut rng).unwrap();
        assert_eq!(count.growing, 1);
    }
}
