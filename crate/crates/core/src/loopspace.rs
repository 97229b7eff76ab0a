//! Discrete loops S¹ → M, tangent fields along them, the action and the
//! heat-equation residual.
//!
//! A loop is stored as N samples at t_j = j/N in one flat buffer of N·d
//! ambient coordinates. Integrals over t are Riemann sums on the periodic
//! grid, so the L² inner product of two fields is Σ_j ⟨ξ_j, η_j⟩ / N.
//!
//! The kinetic term is the geodesic polygon energy (N/2)·Σ_j d(x_j, x_{j+1})².
//! Its exact L² gradient is −N²(log_{x_j} x_{j+1} + log_{x_j} x_{j−1}), a
//! second-order approximation of −∇_t ẋ, so [`heat_residual`] is the exact
//! negative gradient of the discrete [`action`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::manifold::ManifoldSpec;
use crate::perturbation::Perturbation;

/// Smallest admissible number of samples.
pub const MIN_SAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLoop {
    manifold: ManifoldSpec,
    n: usize,
    points: Vec<f64>,
}

/// Tangent vectors along a loop, stored flat like [`DiscreteLoop`].
#[derive(Clone, Debug, PartialEq)]
pub struct LoopField {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopNorm {
    L2,
    C0,
    W12,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopNorms {
    pub l2: f64,
    pub p: f64,
    pub lp: f64,
    pub sup: f64,
    pub w12: f64,
    pub w22: f64,
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES || !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "number of samples must be a power of two >= {MIN_SAMPLES}, got {n}"
        )));
    }
    Ok(())
}

impl DiscreteLoop {
    /// Builds a loop from ambient samples, checking they lie on M.
    pub fn new(manifold: ManifoldSpec, points: Vec<f64>) -> Result<Self> {
        let d = manifold.ambient_dim;
        if points.len() % d != 0 {
            return Err(Error::InvalidInput(format!(
                "{} coordinates is not a multiple of the ambient dimension {d}",
                points.len()
            )));
        }
        let n = points.len() / d;
        check_samples(n)?;
        let tol = 1e3 * manifold.eps * manifold.scale.max(1.0);
        for (j, q) in points.chunks_exact(d).enumerate() {
            let dist = manifold.distance_to_manifold(q);
            if !(dist <= tol) {
                return Err(Error::InvalidInput(format!("sample {j} is {dist:e} away from the manifold")));
            }
        }
        Ok(Self { manifold, n, points })
    }

    /// Builds a loop by projecting arbitrary ambient samples onto M.
    pub fn from_projected(manifold: ManifoldSpec, mut points: Vec<f64>) -> Result<Self> {
        let d = manifold.ambient_dim;
        for q in points.chunks_exact_mut(d) {
            manifold.project_point_in_place(q)?;
        }
        Self::new(manifold, points)
    }

    /// Samples `f(t)` at t_j = j/N and projects onto M.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(manifold: ManifoldSpec, n: usize, f: F) -> Result<Self> {
        check_samples(n)?;
        let mut points = Vec::with_capacity(n * manifold.ambient_dim);
        for j in 0..n {
            points.extend(f(j as f64 / n as f64));
        }
        Self::from_projected(manifold, points)
    }

    /// Loop on a product of circles given by its angle functions (in turns).
    pub fn from_angles<F: Fn(f64) -> Vec<f64>>(manifold: ManifoldSpec, n: usize, angles: F) -> Result<Self> {
        let m = manifold.clone();
        Self::from_fn(manifold, n, move |t| m.point_from_angles(&angles(t)))
    }

    pub fn constant(manifold: ManifoldSpec, q: &[f64], n: usize) -> Result<Self> {
        Self::from_fn(manifold, n, |_| q.to_vec())
    }

    pub fn manifold(&self) -> &ManifoldSpec {
        &self.manifold
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.manifold.ambient_dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.points[j * d..(j + 1) * d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim())
    }

    pub fn zero_field(&self) -> LoopField {
        LoopField::zeros(self.n, self.dim())
    }

    /// Pointwise exponential x_j ↦ exp_{x_j}(ξ_j).
    pub fn exp_field(&self, xi: &LoopField) -> DiscreteLoop {
        let d = self.dim();
        let mut points = vec![0.0; self.points.len()];
        for j in 0..self.n {
            self.manifold.exp_into(self.point(j), xi.at(j), &mut points[j * d..(j + 1) * d]);
        }
        Self { manifold: self.manifold.clone(), n: self.n, points }
    }

    /// Pointwise logarithm j ↦ log_{x_j}(y_j).
    pub fn log_to(&self, other: &DiscreteLoop) -> Result<LoopField> {
        self.check_same_grid(other)?;
        let mut out = self.zero_field();
        for j in 0..self.n {
            self.manifold.log_into(self.point(j), other.point(j), out.at_mut(j))?;
        }
        Ok(out)
    }

    /// Tangent projection of an arbitrary ambient field along the loop.
    pub fn project_field(&self, field: &mut LoopField) {
        for j in 0..self.n {
            let (q, v) = (self.point(j), &mut field.data[j * self.dim()..(j + 1) * self.dim()]);
            self.manifold.project_tangent_in_place(q, v);
        }
    }

    pub fn check_same_grid(&self, other: &DiscreteLoop) -> Result<()> {
        if self.manifold != other.manifold || self.n != other.n {
            return Err(Error::GridMismatch(format!(
                "{:?} with {} samples vs {:?} with {}",
                self.manifold.kind, self.n, other.manifold.kind, other.n
            )));
        }
        Ok(())
    }

    /// Forward and backward logarithms log_{x_j} x_{j±1}.
    pub fn neighbour_logs(&self) -> Result<(LoopField, LoopField)> {
        let n = self.n;
        let mut fwd = self.zero_field();
        let mut bwd = self.zero_field();
        for j in 0..n {
            let p = self.point(j);
            self.manifold.log_into(p, self.point((j + 1) % n), fwd.at_mut(j))?;
            self.manifold.log_into(p, self.point((j + n - 1) % n), bwd.at_mut(j))?;
        }
        Ok((fwd, bwd))
    }

    /// Centred velocity ∂_t x ≈ N(log_{x_j} x_{j+1} − log_{x_j} x_{j−1})/2.
    pub fn velocity(&self) -> Result<LoopField> {
        let (mut fwd, bwd) = self.neighbour_logs()?;
        let h = self.n as f64 / 2.0;
        for (a, b) in fwd.data.iter_mut().zip(&bwd.data) {
            *a = h * (*a - b);
        }
        Ok(fwd)
    }

    /// Covariant acceleration ∇_t ∂_t x ≈ N²(log_{x_j} x_{j+1} + log_{x_j} x_{j−1}).
    pub fn acceleration(&self) -> Result<LoopField> {
        let (mut fwd, bwd) = self.neighbour_logs()?;
        let n2 = (self.n * self.n) as f64;
        for (a, b) in fwd.data.iter_mut().zip(&bwd.data) {
            *a = n2 * (*a + b);
        }
        Ok(fwd)
    }

    /// Winding numbers of each circle factor (empty on the sphere).
    pub fn winding(&self) -> Vec<i64> {
        if self.manifold.kind == crate::manifold::ManifoldKind::RoundSphere {
            return Vec::new();
        }
        let factors = self.dim() / 2;
        let mut total = vec![0.0; factors];
        for j in 0..self.n {
            let p = self.point(j);
            let q = self.point((j + 1) % self.n);
            for (f, tot) in total.iter_mut().enumerate() {
                let (px, py, qx, qy) = (p[2 * f], p[2 * f + 1], q[2 * f], q[2 * f + 1]);
                *tot += (px * qy - py * qx).atan2(px * qx + py * qy);
            }
        }
        total.iter().map(|a| (a / (2.0 * std::f64::consts::PI)).round() as i64).collect()
    }

    /// Loop with samples reordered t ↦ −t.
    pub fn reversed(&self) -> DiscreteLoop {
        let d = self.dim();
        let mut points = vec![0.0; self.points.len()];
        for j in 0..self.n {
            let k = (self.n - j) % self.n;
            points[j * d..(j + 1) * d].copy_from_slice(self.point(k));
        }
        Self { manifold: self.manifold.clone(), n: self.n, points }
    }

    /// Every other sample (exact grid nesting).
    pub fn coarsened(&self) -> Result<DiscreteLoop> {
        check_samples(self.n / 2)?;
        let d = self.dim();
        let points = (0..self.n / 2).flat_map(|j| self.point(2 * j).to_vec()).collect::<Vec<_>>();
        let _ = d;
        Ok(Self { manifold: self.manifold.clone(), n: self.n / 2, points })
    }

    /// Writes one row per sample: t, coord_1, ..., coord_d.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("coord_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for j in 0..self.n {
            let mut row = vec![format!("{:.17e}", j as f64 / self.n as f64)];
            row.extend(self.point(j).iter().map(|x| format!("{x:.17e}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(manifold: ManifoldSpec, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let d = manifold.ambient_dim;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != d + 1 {
                return Err(Error::InvalidInput(format!("expected {} columns, found {}", d + 1, rec.len())));
            }
            for field in rec.iter().skip(1) {
                points.push(field.trim().parse::<f64>().map_err(|e| Error::InvalidInput(e.to_string()))?);
            }
        }
        Self::new(manifold, points)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

impl LoopField {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * d, "field buffer has the wrong length");
        Self { n, d, data }
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn at(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn at_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { n: self.n, d: self.d, data: self.data.iter().map(|x| alpha * x).collect() }
    }

    pub fn axpy(&mut self, alpha: f64, other: &LoopField) {
        axpy(alpha, &other.data, &mut self.data);
    }

    pub fn add(&self, other: &LoopField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &LoopField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// L² inner product Σ⟨ξ_j, η_j⟩/N.
    pub fn inner(&self, other: &LoopField) -> f64 {
        dot(&self.data, &other.data) / self.n as f64
    }

    pub fn l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn lp(&self, p: f64) -> f64 {
        let s: f64 = (0..self.n).map(|j| norm(self.at(j)).powf(p)).sum();
        (s / self.n as f64).powf(1.0 / p)
    }

    pub fn sup(&self) -> f64 {
        (0..self.n).map(|j| norm(self.at(j))).fold(0.0, f64::max)
    }

    /// Periodic centred first difference of the ambient coordinates.
    fn diff1(&self) -> LoopField {
        let n = self.n;
        let h = n as f64 / 2.0;
        let mut out = LoopField::zeros(n, self.d);
        for j in 0..n {
            let (a, b) = (self.at((j + 1) % n), self.at((j + n - 1) % n));
            for (o, (x, y)) in out.at_mut(j).iter_mut().zip(a.iter().zip(b)) {
                *o = h * (x - y);
            }
        }
        out
    }

    /// Periodic second difference of the ambient coordinates.
    fn diff2(&self) -> LoopField {
        let n = self.n;
        let n2 = (n * n) as f64;
        let mut out = LoopField::zeros(n, self.d);
        for j in 0..n {
            let (a, c, b) = (self.at((j + 1) % n), self.at(j), self.at((j + n - 1) % n));
            for (k, o) in out.at_mut(j).iter_mut().enumerate() {
                *o = n2 * (a[k] - 2.0 * c[k] + b[k]);
            }
        }
        out
    }

    /// All norms of the field along `base`; covariant t-derivatives are the
    /// tangent projections of ambient differences.
    pub fn norms(&self, base: &DiscreteLoop, p: f64) -> LoopNorms {
        let mut d1 = self.diff1();
        base.project_field(&mut d1);
        let mut d2 = self.diff2();
        base.project_field(&mut d2);
        let l2 = self.l2();
        let (a, b) = (d1.l2(), d2.l2());
        LoopNorms {
            l2,
            p,
            lp: self.lp(p),
            sup: self.sup(),
            w12: (l2 * l2 + a * a).sqrt(),
            w22: (l2 * l2 + a * a + b * b).sqrt(),
        }
    }
}

/// S_V(x) = (N/2)·Σ_j d(x_j, x_{j+1})² − V(x).
pub fn action(x: &DiscreteLoop, v: &Perturbation) -> f64 {
    kinetic(x) - v.eval(x)
}

/// Geodesic polygon energy (N/2)·Σ_j d(x_j, x_{j+1})².
pub fn kinetic(x: &DiscreteLoop) -> f64 {
    let n = x.n_samples();
    let m = x.manifold();
    let sum: f64 = (0..n)
        .map(|j| {
            let d = m.distance(x.point(j), x.point((j + 1) % n));
            d * d
        })
        .sum();
    0.5 * n as f64 * sum
}

/// ∇_t ∂_t x + grad V(x) on the grid; zero exactly at discrete critical points.
pub fn heat_residual(x: &DiscreteLoop, v: &Perturbation) -> Result<LoopField> {
    let mut r = x.acceleration()?;
    r.axpy(1.0, &v.gradient(x));
    Ok(r)
}

/// Ambient distance between two loops on the same grid.
pub fn loop_distance(x: &DiscreteLoop, y: &DiscreteLoop, which: LoopNorm) -> Result<f64> {
    x.check_same_grid(y)?;
    let diff = LoopField::from_vec(x.n_samples(), x.dim(), crate::linalg::sub(x.points(), y.points()));
    Ok(match which {
        LoopNorm::L2 => diff.l2(),
        LoopNorm::C0 => diff.sup(),
        LoopNorm::W12 => {
            let a = diff.l2();
            let b = diff.diff1().l2();
            (a * a + b * b).sqrt()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::UNIT_CIRCUMFERENCE_RADIUS;
    use crate::perturbation::GeometricPotential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pendulum(eps: f64) -> Perturbation {
        Perturbation::Geometric(GeometricPotential::cosine(vec![(eps, vec![1])]))
    }

    fn circle() -> ManifoldSpec {
        ManifoldSpec::circle(UNIT_CIRCUMFERENCE_RADIUS)
    }

    /// Smooth non-geodesic test loop on each catalogue manifold.
    pub(crate) fn wobbly(m: &ManifoldSpec, n: usize, seed: u64) -> DiscreteLoop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
        match m.kind {
            crate::ManifoldKind::RoundSphere => {
                let d = m.ambient_dim;
                let r = m.scale;
                DiscreteLoop::from_fn(m.clone(), n, |t| {
                    let th = 2.0 * PI * t;
                    let mut q = vec![0.0; d];
                    q[0] = (th + phase[0]).cos();
                    q[1] = (th + phase[1]).sin() + 0.2 * (2.0 * th).cos();
                    q[d - 1] += 0.3 * (th + phase[2]).sin();
                    let s = r / norm(&q);
                    q.iter().map(|x| x * s).collect()
                })
                .unwrap()
            }
            _ => {
                let k = m.intrinsic_dim;
                DiscreteLoop::from_angles(m.clone(), n, |t| {
                    (0..k)
                        .map(|f| phase[f] + 0.1 * (2.0 * PI * (t + phase[f + 3])).sin() + 0.05 * (4.0 * PI * t).cos())
                        .collect()
                })
                .unwrap()
            }
        }
    }

    #[test]
    fn action_examples() {
        let v = pendulum(0.1);
        let x = DiscreteLoop::constant(circle(), &circle().point_from_angles(&[0.0]), 64).unwrap();
        assert!((action(&x, &v) + 0.1).abs() < 1e-12);

        let x = DiscreteLoop::from_angles(circle(), 64, |t| vec![t]).unwrap();
        assert!((action(&x, &Perturbation::zero()) - 0.5).abs() < 1e-12);

        let unit = ManifoldSpec::circle(1.0);
        let x = DiscreteLoop::from_fn(unit, 64, |t| vec![(2.0 * PI * t).cos(), (2.0 * PI * t).sin()]).unwrap();
        assert!((action(&x, &Perturbation::zero()) - 2.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn residual_examples() {
        let v = pendulum(0.1);
        let m = circle();
        let x = DiscreteLoop::constant(m.clone(), &m.point_from_angles(&[0.0]), 64).unwrap();
        assert!(heat_residual(&x, &v).unwrap().sup() <= 1e-12);

        let q0 = 0.13;
        let x = DiscreteLoop::constant(m.clone(), &m.point_from_angles(&[q0]), 64).unwrap();
        let vprime = -0.1 * 2.0 * PI * (2.0 * PI * q0).sin();
        assert!((heat_residual(&x, &v).unwrap().sup() - vprime.abs()).abs() < 1e-10);
    }

    #[test]
    fn geodesic_curvature_is_second_order() {
        let m = ManifoldSpec::round_sphere(2, 1.0);
        let (rho, z) = (0.6_f64, 0.8_f64);
        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            // great circles have zero residual to rounding
            let g = DiscreteLoop::from_fn(m.clone(), n, |t| {
                let th = 2.0 * PI * t;
                vec![th.cos(), 0.6 * th.sin(), 0.8 * th.sin()]
            })
            .unwrap();
            assert!(heat_residual(&g, &Perturbation::zero()).unwrap().sup() < 1e-9);

            // latitude circle: ∇_t ẋ is the tangential part of the ambient acceleration
            let x = DiscreteLoop::from_fn(m.clone(), n, |t| {
                let th = 2.0 * PI * t;
                vec![rho * th.cos(), rho * th.sin(), z]
            })
            .unwrap();
            let r = heat_residual(&x, &Perturbation::zero()).unwrap();
            let mut err = 0.0_f64;
            for j in 0..n {
                let th = 2.0 * PI * j as f64 / n as f64;
                let acc = [-(2.0 * PI).powi(2) * rho * th.cos(), -(2.0 * PI).powi(2) * rho * th.sin(), 0.0];
                let exact = m.project_tangent(x.point(j), &acc);
                err = err.max(norm(&crate::linalg::sub(r.at(j), &exact)));
            }
            errs.push(err);
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order > 1.9, "order {order}, errors {errs:?}");
    }

    #[test]
    fn residual_is_negative_l2_gradient_of_action() {
        for m in [circle(), ManifoldSpec::flat_torus(2), ManifoldSpec::round_sphere(2, 1.0)] {
            let v = Perturbation::Geometric(match m.kind {
                crate::ManifoldKind::RoundSphere => GeometricPotential::polynomial(
                    0.0,
                    vec![0.1, -0.2, 0.05],
                    vec![vec![0.3, 0.1, 0.0], vec![0.1, -0.2, 0.0], vec![0.0, 0.0, 0.1]],
                ),
                _ => GeometricPotential::cosine(vec![(0.1, vec![1; m.intrinsic_dim])]),
            });
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            for trial in 0..50 {
                let x = wobbly(&m, 128, trial);
                let mut xi = x.zero_field();
                for j in 0..128 {
                    let t = m.random_tangent(&mut rng, x.point(j));
                    xi.at_mut(j).copy_from_slice(&t);
                }
                let h = 1e-5;
                let sp = action(&x.exp_field(&xi.scaled(h)), &v);
                let sm = action(&x.exp_field(&xi.scaled(-h)), &v);
                let fd = (sp - sm) / (2.0 * h);
                let pred = -heat_residual(&x, &v).unwrap().inner(&xi);
                assert!((fd - pred).abs() <= 1e-4 * pred.abs().max(1e-3), "{fd} vs {pred}");
            }
        }
    }

    #[test]
    fn action_converges_under_refinement() {
        let m = ManifoldSpec::round_sphere(2, 1.0);
        let acts: Vec<f64> = [32, 64, 128, 256]
            .iter()
            .map(|&n| action(&wobbly(&m, n, 3), &Perturbation::zero()))
            .collect();
        let e1 = (acts[0] - acts[3]).abs();
        let e2 = (acts[1] - acts[3]).abs();
        let e3 = (acts[2] - acts[3]).abs();
        // Richardson-style observed order from three successive differences
        let order = ((e1 - e2) / (e2 - e3)).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn loop_distance_examples() {
        let m = ManifoldSpec::round_sphere(2, 1.0);
        let x = DiscreteLoop::constant(m.clone(), &[0.0, 0.0, 1.0], 16).unwrap();
        let y = DiscreteLoop::constant(m.clone(), &[0.0, 0.0, -1.0], 16).unwrap();
        assert_eq!(loop_distance(&x, &x, LoopNorm::L2).unwrap(), 0.0);
        assert!((loop_distance(&x, &y, LoopNorm::L2).unwrap() - 2.0).abs() < 1e-15);
        let z = DiscreteLoop::constant(m, &[0.0, 0.0, 1.0], 32).unwrap();
        assert_eq!(loop_distance(&x, &z, LoopNorm::C0).unwrap_err().code(), "grid-mismatch");
        for seed in 0..20 {
            let a = wobbly(&ManifoldSpec::flat_torus(2), 32, seed);
            let b = wobbly(&ManifoldSpec::flat_torus(2), 32, seed + 100);
            for which in [LoopNorm::L2, LoopNorm::C0, LoopNorm::W12] {
                assert_eq!(loop_distance(&a, &b, which).unwrap(), loop_distance(&b, &a, which).unwrap());
            }
        }
    }

    #[test]
    fn norms_are_ordered() {
        let m = ManifoldSpec::round_sphere(2, 1.0);
        let x = wobbly(&m, 64, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xi = x.zero_field();
        for j in 0..64 {
            xi.at_mut(j).copy_from_slice(&m.random_tangent(&mut rng, x.point(j)));
        }
        let n = xi.norms(&x, 4.0);
        assert!(n.l2 <= n.lp && n.lp <= n.sup);
        assert!(xi.lp(2.0) <= xi.lp(3.0) && xi.lp(3.0) <= xi.lp(6.0));
        assert!(n.l2 <= n.w12 && n.w12 <= n.w22);
    }

    #[test]
    fn csv_round_trip() {
        let x = wobbly(&ManifoldSpec::flat_torus(2), 32, 4);
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,coord_1,coord_2,coord_3,coord_4"));
        let y = DiscreteLoop::read_csv(x.manifold().clone(), &buf[..]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn winding_counts_turns() {
        let m = ManifoldSpec::flat_torus(2);
        let x = DiscreteLoop::from_angles(m, 32, |t| vec![2.0 * t, -t]).unwrap();
        assert_eq!(x.winding(), vec![2, -1]);
    }

    #[test]
    fn rejects_bad_sample_counts() {
        let m = circle();
        assert!(DiscreteLoop::constant(m.clone(), &[UNIT_CIRCUMFERENCE_RADIUS, 0.0], 24).is_err());
        assert!(DiscreteLoop::constant(m, &[UNIT_CIRCUMFERENCE_RADIUS, 0.0], 8).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field(n: usize, d: usize) -> impl Strategy<Value = LoopField> {
            proptest::collection::vec(-10.0..10.0f64, n * d).prop_map(move |v| LoopField::from_vec(n, d, v))
        }

        proptest! {
            #[test]
            fn norms_are_homogeneous_and_subadditive(a in field(16, 3), b in field(16, 3), s in -5.0..5.0f64) {
                let tol = 1e-12;
                prop_assert!((a.scaled(s).l2() - s.abs() * a.l2()).abs() <= tol * (1.0 + a.l2() * s.abs()));
                prop_assert!((a.scaled(s).sup() - s.abs() * a.sup()).abs() <= tol * (1.0 + a.sup() * s.abs()));
                prop_assert!((a.scaled(s).lp(4.0) - s.abs() * a.lp(4.0)).abs() <= tol * (1.0 + a.lp(4.0) * s.abs()));
                let c = a.add(&b);
                prop_assert!(c.l2() <= a.l2() + b.l2() + tol);
                prop_assert!(c.sup() <= a.sup() + b.sup() + tol);
                prop_assert!(c.lp(4.0) <= a.lp(4.0) + b.lp(4.0) + tol);
            }
        }
    }
}
