//! Perturbed closed geodesics: the covariant Hessian of the discrete action,
//! Morse indices, a damped Newton solver and enumeration below a level.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, sub};
use crate::loopspace::{action, heat_residual, loop_distance, DiscreteLoop, LoopField, LoopNorm};
use crate::manifold::{ManifoldKind, ManifoldSpec};
use crate::perturbation::Perturbation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Sup-norm residual at which Newton stops; `None` means 1e-9·√N.
    pub tol_crit: Option<f64>,
    pub tol_nondeg: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_crit: None, tol_nondeg: 1e-6, max_iter: 50 }
    }
}

impl Tolerances {
    pub fn tol_crit_for(&self, n: usize) -> f64 {
        self.tol_crit.unwrap_or(1e-9 * (n as f64).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub curve: DiscreteLoop,
    pub action: f64,
    /// Full spectrum of the discrete Hessian, ascending.
    pub eigenvalues: Vec<f64>,
    /// L²-orthonormal eigenfields, in eigenvalue order.
    pub eigenvectors: Vec<LoopField>,
    pub morse_index: usize,
    pub nondeg_margin: f64,
    pub degenerate: bool,
    pub residual_sup: f64,
    /// Sup-norm residual before each Newton step and after the last one.
    pub residual_history: Vec<f64>,
}

impl CriticalPoint {
    /// Eigenvector fields of the negative eigenvalues (a basis of E⁻).
    pub fn unstable_directions(&self) -> &[LoopField] {
        &self.eigenvectors[..self.morse_index]
    }
}

/// Orthonormal frames E_j ∈ ℝ^{d×n} of T_{x_j}M, closed around the loop.
#[derive(Clone, Debug)]
pub struct Frames {
    pub frames: Vec<DMatrix<f64>>,
}

impl Frames {
    pub fn n_samples(&self) -> usize {
        self.frames.len()
    }

    pub fn fibre_dim(&self) -> usize {
        self.frames[0].ncols()
    }

    /// Frame coordinates → ambient field.
    pub fn to_field(&self, coords: &[f64]) -> LoopField {
        let n = self.n_samples();
        let k = self.fibre_dim();
        let d = self.frames[0].nrows();
        let mut out = LoopField::zeros(n, d);
        for (j, e) in self.frames.iter().enumerate() {
            let c = DVector::from_column_slice(&coords[j * k..(j + 1) * k]);
            out.at_mut(j).copy_from_slice((e * c).as_slice());
        }
        out
    }

    /// Ambient field → frame coordinates (tangent projection implied).
    pub fn to_coords(&self, field: &LoopField) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_samples() * self.fibre_dim());
        for (j, e) in self.frames.iter().enumerate() {
            let v = DVector::from_column_slice(field.at(j));
            out.extend((e.transpose() * v).iter());
        }
        out
    }
}

/// Orthogonal matrix raised to a real power through its real Schur form.
fn orthogonal_power(h: &DMatrix<f64>, power: f64) -> Result<DMatrix<f64>> {
    let k = h.nrows();
    if k == 1 {
        return Ok(h.clone());
    }
    let (q, t) = Schur::new(h.clone()).unpack();
    let mut blocks = DMatrix::zeros(k, k);
    let mut i = 0;
    while i < k {
        let sub_diag = if i + 1 < k { t[(i + 1, i)] } else { 0.0 };
        if sub_diag.abs() > 1e-12 {
            let theta = sub_diag.atan2(t[(i, i)]) * power;
            let (s, c) = theta.sin_cos();
            blocks[(i, i)] = c;
            blocks[(i + 1, i + 1)] = c;
            blocks[(i + 1, i)] = s;
            blocks[(i, i + 1)] = -s;
            i += 2;
        } else if t[(i, i)] > 0.0 {
            blocks[(i, i)] = 1.0;
            i += 1;
        } else if i + 1 < k && t[(i + 1, i + 1)] < 0.0 {
            // a pair of −1 eigenvalues is a rotation by π
            let (s, c) = (std::f64::consts::PI * power).sin_cos();
            blocks[(i, i)] = c;
            blocks[(i + 1, i + 1)] = c;
            blocks[(i + 1, i)] = s;
            blocks[(i, i + 1)] = -s;
            i += 2;
        } else {
            return Err(Error::FrameConstructionFailed("holonomy reverses orientation".into()));
        }
    }
    Ok(&q * blocks * q.transpose())
}

/// Parallel frames along the geodesic polygon through the samples, with the
/// holonomy H at t = 1 spread evenly: E_j = F_j·H^{−j/N}.
pub fn build_frames(x: &DiscreteLoop) -> Result<Frames> {
    let m = x.manifold();
    let n = x.n_samples();
    let e0 = m.tangent_basis(x.point(0));
    let mut raw = Vec::with_capacity(n + 1);
    raw.push(e0.clone());
    for j in 0..n {
        let p = x.point(j);
        let q = x.point((j + 1) % n);
        let xi = m.log(p, q)?;
        let phi = m.transport_matrix(p, &xi);
        let mut f = &phi * &raw[j];
        // re-orthonormalise against drift
        let qr = f.clone().qr();
        let (qm, r) = qr.unpack();
        for c in 0..f.ncols() {
            let s = r[(c, c)].signum();
            for rr in 0..f.nrows() {
                f[(rr, c)] = qm[(rr, c)] * s;
            }
        }
        raw.push(f);
    }
    let hol = e0.transpose() * &raw[n];
    if hol.determinant() < 0.0 {
        return Err(Error::FrameConstructionFailed("holonomy has determinant -1".into()));
    }
    let frames = (0..n)
        .map(|j| Ok(&raw[j] * orthogonal_power(&hol, -(j as f64) / n as f64)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Frames { frames })
}

/// Geometry of the segment from x_j to x_{j+1} entering the second variation
/// of ½d².
#[derive(Clone, Debug)]
struct Segment {
    log_pq: Vec<f64>,
    log_qp: Vec<f64>,
    u_p: Vec<f64>,
    u_q: Vec<f64>,
    kappa: f64,
    sigma: f64,
}

fn segments(x: &DiscreteLoop) -> Result<Vec<Segment>> {
    let m = x.manifold();
    let n = x.n_samples();
    let curv = m.sectional_curvature();
    (0..n)
        .map(|j| {
            let p = x.point(j);
            let q = x.point((j + 1) % n);
            let log_pq = m.log(p, q)?;
            let log_qp = m.log(q, p)?;
            let len = norm(&log_pq);
            let (mut kappa, mut sigma) = (1.0, 1.0);
            let (mut u_p, mut u_q) = (vec![0.0; m.ambient_dim], vec![0.0; m.ambient_dim]);
            if curv > 0.0 && len > 0.0 {
                let th = len * curv.sqrt();
                kappa = th / th.tan();
                sigma = th / th.sin();
                u_p = log_pq.iter().map(|v| v / len).collect();
                u_q = log_qp.iter().map(|v| -v / len).collect();
            }
            Ok(Segment { log_pq, log_qp, u_p, u_q, kappa, sigma })
        })
        .collect()
}

impl Segment {
    /// Diagonal block at the start (u = u_p) or end (u = u_q) of the segment.
    fn diag(&self, u: &[f64], a: &[f64]) -> Vec<f64> {
        let c = dot(a, u);
        let mut out: Vec<f64> = a.iter().map(|v| self.kappa * v).collect();
        axpy(c * (1.0 - self.kappa), u, &mut out);
        out
    }

    /// Mixed block T_pM → T_qM.
    fn qp(&self, m: &ManifoldSpec, p: &[f64], a: &[f64]) -> Vec<f64> {
        let mut out = m.transport(p, &self.log_pq, a);
        out.iter_mut().for_each(|v| *v *= -self.sigma);
        axpy((self.sigma - 1.0) * dot(a, &self.u_p), &self.u_q, &mut out);
        out
    }

    /// Mixed block T_qM → T_pM.
    fn pq(&self, m: &ManifoldSpec, q: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = m.transport(q, &self.log_qp, b);
        out.iter_mut().for_each(|v| *v *= -self.sigma);
        axpy((self.sigma - 1.0) * dot(b, &self.u_q), &self.u_p, &mut out);
        out
    }
}

/// Ambient (matrix-free) application of the discrete Hessian
/// A = Hess(kinetic) − ℋ_V to a tangent field along x.
pub fn hessian_apply(x: &DiscreteLoop, v: &Perturbation, xi: &LoopField) -> Result<LoopField> {
    let segs = segments(x)?;
    let mut out = kinetic_hessian_apply(x, &segs, xi);
    out.axpy(-1.0, &v.hessian_apply(x, xi));
    Ok(out)
}

fn kinetic_hessian_apply(x: &DiscreteLoop, segs: &[Segment], xi: &LoopField) -> LoopField {
    let m = x.manifold();
    let n = x.n_samples();
    let n2 = (n * n) as f64;
    let mut out = x.zero_field();
    for (j, s) in segs.iter().enumerate() {
        let k = (j + 1) % n;
        let (p, q) = (x.point(j), x.point(k));
        let (a, b) = (xi.at(j), xi.at(k));
        let mut wp = s.diag(&s.u_p, a);
        axpy(1.0, &s.pq(m, q, b), &mut wp);
        let mut wq = s.diag(&s.u_q, b);
        axpy(1.0, &s.qp(m, p, a), &mut wq);
        axpy(n2, &wp, out.at_mut(j));
        axpy(n2, &wq, out.at_mut(k));
    }
    x.project_field(&mut out);
    out
}

/// Discrete Hessian in a closed orthonormal frame.
#[derive(Clone, Debug)]
pub struct HessianMatrix {
    pub frames: Frames,
    /// Symmetrised matrix (A + Aᵀ)/2.
    pub matrix: DMatrix<f64>,
    /// max|A − Aᵀ| / max|A| before symmetrisation.
    pub asymmetry: f64,
}

pub fn assemble_hessian(x: &DiscreteLoop, v: &Perturbation) -> Result<HessianMatrix> {
    let frames = build_frames(x)?;
    assemble_in_frames(x, v, frames)
}

fn assemble_in_frames(x: &DiscreteLoop, v: &Perturbation, frames: Frames) -> Result<HessianMatrix> {
    let m = x.manifold();
    let n = x.n_samples();
    let k = frames.fibre_dim();
    let size = n * k;
    let n2 = (n * n) as f64;
    let segs = segments(x)?;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let col = |j: usize, beta: usize| -> Vec<f64> { frames.frames[j].column(beta).iter().copied().collect() };
    let local = v.is_local();
    for j in 0..n {
        let prev = &segs[(j + n - 1) % n];
        let next = &segs[j];
        let jn = (j + 1) % n;
        let t = j as f64 / n as f64;
        for beta in 0..k {
            let e = col(j, beta);
            // diagonal block
            let mut w = next.diag(&next.u_p, &e);
            axpy(1.0, &prev.diag(&prev.u_q, &e), &mut w);
            w.iter_mut().for_each(|c| *c *= n2);
            if local {
                let hv = v.local_hessian(m, t, x.point(j), &e).expect("local perturbation");
                axpy(-1.0, &hv, &mut w);
            }
            for alpha in 0..k {
                a[(j * k + alpha, j * k + beta)] += dot(&col(j, alpha), &w);
            }
            // coupling to the next sample (both directions, assembled independently)
            let wq = next.qp(m, x.point(j), &e);
            let eq = col(jn, beta);
            let wp = next.pq(m, x.point(jn), &eq);
            for alpha in 0..k {
                a[(jn * k + alpha, j * k + beta)] += n2 * dot(&col(jn, alpha), &wq);
                a[(j * k + alpha, jn * k + beta)] += n2 * dot(&col(j, alpha), &wp);
            }
        }
    }
    if !local {
        let d = m.ambient_dim;
        let cols: Vec<(usize, Vec<f64>)> = (0..size)
            .into_par_iter()
            .map(|c| {
                let (j, beta) = (c / k, c % k);
                let mut xi = LoopField::zeros(n, d);
                xi.at_mut(j).copy_from_slice(&col(j, beta));
                let h = v.hessian_apply(x, &xi);
                (c, frames.to_coords(&h))
            })
            .collect();
        for (c, values) in cols {
            for (r, val) in values.iter().enumerate() {
                a[(r, c)] -= val;
            }
        }
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (&a - a.transpose()).amax() / scale;
    let matrix = (&a + a.transpose()) * 0.5;
    Ok(HessianMatrix { frames, matrix, asymmetry: asym })
}

/// Sorted eigen-decomposition of the symmetric Hessian matrix.
pub fn spectrum(h: &HessianMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h.matrix.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vecs)
}

/// Eigenvalues only (ascending).
pub fn eigenvalues(x: &DiscreteLoop, v: &Perturbation) -> Result<Vec<f64>> {
    let h = assemble_hessian(x, v)?;
    let mut ev: Vec<f64> = h.matrix.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Classifies a loop: action, spectrum, Morse index and margin.
pub fn classify(x: DiscreteLoop, v: &Perturbation, tol: &Tolerances, history: Vec<f64>) -> Result<CriticalPoint> {
    let h = assemble_hessian(&x, v)?;
    let (values, vecs) = spectrum(&h);
    // unit Euclidean coordinates have L² norm 1/√N
    let unit = (x.n_samples() as f64).sqrt();
    let eigenvectors = (0..values.len())
        .map(|c| h.frames.to_field(vecs.column(c).as_slice()).scaled(unit))
        .collect();
    let margin = values.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let morse_index = values.iter().filter(|l| **l < 0.0).count();
    let residual_sup = heat_residual(&x, v)?.sup();
    Ok(CriticalPoint {
        action: action(&x, v),
        curve: x,
        eigenvalues: values,
        eigenvectors,
        morse_index,
        nondeg_margin: margin,
        degenerate: margin <= tol.tol_nondeg,
        residual_sup,
        residual_history: history,
    })
}

fn retract(x: &DiscreteLoop, delta: &LoopField) -> Result<DiscreteLoop> {
    let moved = crate::linalg::add(x.points(), delta.data());
    DiscreteLoop::from_projected(x.manifold().clone(), moved)
}

/// Damped Newton iteration on F(x) = ∇_t ẋ + grad V(x).
pub fn newton_solve(seed: &DiscreteLoop, v: &Perturbation, tol: &Tolerances) -> Result<CriticalPoint> {
    let n = seed.n_samples();
    let tol_crit = tol.tol_crit_for(n);
    let step_cap = 0.25 * seed.manifold().injectivity_radius();
    let mut x = seed.clone();
    let mut f = heat_residual(&x, v)?;
    let mut history = vec![f.sup()];
    for _ in 0..tol.max_iter {
        if f.sup() <= tol_crit {
            return classify(x, v, tol, history);
        }
        let h = assemble_hessian(&x, v)?;
        let eig = SymmetricEigen::new(h.matrix.clone());
        let min_abs = eig.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
        if min_abs < tol.tol_nondeg {
            return Err(Error::DegenerateHessian { min_abs_eig: min_abs });
        }
        let rhs = DVector::from_vec(h.frames.to_coords(&f));
        let proj = eig.eigenvectors.transpose() * &rhs;
        let scaled = DVector::from_iterator(proj.len(), proj.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c / l));
        let coords = &eig.eigenvectors * scaled;
        let mut delta = h.frames.to_field(coords.as_slice());
        let biggest = (0..n).map(|j| norm(delta.at(j))).fold(0.0, f64::max);
        if biggest > step_cap {
            delta = delta.scaled(step_cap / biggest);
        }
        let merit = f.l2().powi(2);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            if let Ok(cand) = retract(&x, &delta.scaled(t)) {
                if let Ok(fc) = heat_residual(&cand, v) {
                    let mc = fc.l2().powi(2);
                    if f.l2() < 1e-4 || mc <= (1.0 - 1e-4 * t) * merit {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let (cand, fc) = match accepted {
            Some(pair) => pair,
            None => break,
        };
        x = cand;
        f = fc;
        history.push(f.sup());
    }
    if f.sup() <= tol_crit {
        return classify(x, v, tol, history);
    }
    Err(Error::NoConvergence { iterations: history.len() - 1, residual: f.sup() })
}

/// Seeds for the critical-point search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedStrategy {
    pub n_samples: usize,
    /// Lattice points per circle factor (or Fibonacci points on the sphere
    /// equal to lattice^dim).
    pub lattice: usize,
    /// Offset of the lattice in units of the lattice spacing.
    pub lattice_offset: f64,
    /// Maximal |winding| per factor for geodesic seeds (0: constant seeds only).
    pub winding_bound: i64,
    /// Keep only loops in this free homotopy class (winding vector); `None`
    /// keeps everything. Ignored on the sphere.
    pub component: Option<Vec<i64>>,
    pub dedup_radius: Option<f64>,
    pub tol_reg: f64,
    pub tolerances: Tolerances,
    #[serde(skip)]
    pub user_seeds: Vec<DiscreteLoop>,
}

impl SeedStrategy {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n_samples,
            lattice: 6,
            lattice_offset: 0.37,
            winding_bound: 0,
            component: Some(Vec::new()),
            dedup_radius: None,
            tol_reg: 1e-8,
            tolerances: Tolerances::default(),
            user_seeds: Vec::new(),
        }
    }

    /// Contractible component: all windings zero.
    pub fn contractible(n_samples: usize) -> Self {
        Self::new(n_samples)
    }

    fn in_component(&self, x: &DiscreteLoop) -> bool {
        match &self.component {
            None => true,
            Some(w) if w.is_empty() => x.winding().iter().all(|k| *k == 0),
            Some(w) => x.winding() == *w,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    /// Distinct critical points below the level, sorted by action.
    pub points: Vec<CriticalPoint>,
    pub seeds_tried: usize,
    pub seeds_failed: usize,
}

impl Enumeration {
    pub fn nondegenerate(&self) -> Vec<&CriticalPoint> {
        self.points.iter().filter(|c| !c.degenerate).collect()
    }
}

fn lattice_seeds(m: &ManifoldSpec, s: &SeedStrategy) -> Result<Vec<DiscreteLoop>> {
    let n = s.n_samples;
    let l = s.lattice.max(1);
    let mut seeds = Vec::new();
    match m.kind {
        ManifoldKind::RoundSphere => {
            let count = l.pow(m.intrinsic_dim as u32);
            let pts: Vec<Vec<f64>> = if m.intrinsic_dim == 2 {
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                (0..count)
                    .map(|i| {
                        let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                        let r = (1.0 - z * z).sqrt();
                        let th = golden * i as f64 + s.lattice_offset;
                        vec![m.scale * r * th.cos(), m.scale * r * th.sin(), m.scale * z]
                    })
                    .collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                (0..count).map(|_| m.random_point(&mut rng)).collect()
            };
            for q in &pts {
                seeds.push(DiscreteLoop::constant(m.clone(), q, n)?);
            }
            // great circles through a few base points
            for q in pts.iter().take(l) {
                let basis = m.tangent_basis(q);
                let u: Vec<f64> = basis.column(0).iter().copied().collect();
                let qn: Vec<f64> = q.iter().map(|v| v / m.scale).collect();
                seeds.push(DiscreteLoop::from_fn(m.clone(), n, |t| {
                    let th = 2.0 * std::f64::consts::PI * t;
                    qn.iter().zip(&u).map(|(a, b)| m.scale * (a * th.cos() + b * th.sin())).collect()
                })?);
            }
        }
        _ => {
            let k = m.intrinsic_dim;
            let total = l.pow(k as u32);
            let bound = s.winding_bound;
            let windings: Vec<Vec<i64>> = {
                let side = (2 * bound + 1) as usize;
                (0..side.pow(k as u32))
                    .map(|mut idx| {
                        (0..k)
                            .map(|_| {
                                let w = (idx % side) as i64 - bound;
                                idx /= side;
                                w
                            })
                            .collect()
                    })
                    .collect()
            };
            for w in &windings {
                for mut idx in 0..total {
                    let base: Vec<f64> = (0..k)
                        .map(|_| {
                            let i = idx % l;
                            idx /= l;
                            (i as f64 + s.lattice_offset) / l as f64
                        })
                        .collect();
                    let w = w.clone();
                    seeds.push(DiscreteLoop::from_angles(m.clone(), n, move |t| {
                        base.iter().zip(&w).map(|(b, wi)| b + *wi as f64 * t).collect()
                    })?);
                }
            }
        }
    }
    Ok(seeds)
}

fn lexicographic(a: &DiscreteLoop, b: &DiscreteLoop) -> std::cmp::Ordering {
    for (x, y) in a.points().iter().zip(b.points()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Runs Newton from every seed, keeps distinct points with action ≤ a in the
/// requested component, sorted by action.
pub fn enumerate_below(v: &Perturbation, m: &ManifoldSpec, a: f64, strategy: &SeedStrategy) -> Result<Enumeration> {
    let mut seeds = lattice_seeds(m, strategy)?;
    seeds.extend(strategy.user_seeds.iter().cloned());
    let results: Vec<Result<CriticalPoint>> =
        seeds.par_iter().map(|s| newton_solve(s, v, &strategy.tolerances)).collect();
    let seeds_tried = results.len();
    let mut failed = 0;
    let mut found = Vec::new();
    for r in results {
        match r {
            Ok(c) => found.push(c),
            Err(_) => failed += 1,
        }
    }
    found.retain(|c| strategy.in_component(&c.curve));
    if let Some(c) = found.iter().find(|c| (c.action - a).abs() < strategy.tol_reg) {
        return Err(Error::LevelIsCritical { level: a, value: c.action, tol: strategy.tol_reg });
    }
    found.retain(|c| c.action <= a);
    found.sort_by(|p, q| p.action.total_cmp(&q.action).then_with(|| lexicographic(&p.curve, &q.curve)));
    let radius = strategy.dedup_radius.unwrap_or(1e-4 * m.injectivity_radius());
    let mut points: Vec<CriticalPoint> = Vec::new();
    for c in found {
        let dup = points
            .iter()
            .any(|p| loop_distance(&p.curve, &c.curve, LoopNorm::C0).map(|d| d < radius).unwrap_or(false));
        if !dup {
            points.push(c);
        }
    }
    Ok(Enumeration { points, seeds_tried, seeds_failed: failed })
}

/// Sup-norm displacement between two loops on the same grid.
pub fn displacement(a: &DiscreteLoop, b: &DiscreteLoop) -> f64 {
    (0..a.n_samples()).map(|j| norm(&sub(a.point(j), b.point(j)))).fold(0.0, f64::max)
}
