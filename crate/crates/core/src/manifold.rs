//! Catalogue of isometrically embedded model manifolds.
//!
//! Every entry has closed-form projection, logarithm, exponential map and
//! parallel transport, so geometric errors never mix with discretisation
//! errors downstream. Points and tangent vectors are plain `[f64]` slices of
//! length [`ManifoldSpec::ambient_dim`].
//!
//! * `Circle`: a circle of radius `scale` in ℝ².
//! * `FlatTorus`: a product of `intrinsic_dim` circles of radius `scale`
//!   (circumference 1 for the default radius 1/2π) in ℝ^{2·dim}.
//! * `RoundSphere`: the sphere of radius `scale` in ℝ^{dim+1}.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Default geometric tolerance of the closed-form primitives.
pub const DEFAULT_EPS_MFD: f64 = 1e-12;

/// Radius of a circle of circumference one.
pub const UNIT_CIRCUMFERENCE_RADIUS: f64 = 1.0 / (2.0 * PI);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Circle,
    FlatTorus,
    RoundSphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub scale: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_EPS_MFD
}

impl ManifoldSpec {
    pub fn circle(scale: f64) -> Self {
        Self { kind: ManifoldKind::Circle, intrinsic_dim: 1, ambient_dim: 2, scale, eps: DEFAULT_EPS_MFD }
    }

    /// Flat torus of the given dimension with factor circles of circumference 1.
    pub fn flat_torus(dim: usize) -> Self {
        Self::flat_torus_with_radius(dim, UNIT_CIRCUMFERENCE_RADIUS)
    }

    pub fn flat_torus_with_radius(dim: usize, radius: f64) -> Self {
        Self {
            kind: ManifoldKind::FlatTorus,
            intrinsic_dim: dim,
            ambient_dim: 2 * dim,
            scale: radius,
            eps: DEFAULT_EPS_MFD,
        }
    }

    pub fn round_sphere(dim: usize, scale: f64) -> Self {
        Self {
            kind: ManifoldKind::RoundSphere,
            intrinsic_dim: dim,
            ambient_dim: dim + 1,
            scale,
            eps: DEFAULT_EPS_MFD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_dims = match self.kind {
            ManifoldKind::Circle => self.intrinsic_dim == 1 && self.ambient_dim == 2,
            ManifoldKind::FlatTorus => self.intrinsic_dim >= 1 && self.ambient_dim == 2 * self.intrinsic_dim,
            ManifoldKind::RoundSphere => self.intrinsic_dim >= 1 && self.ambient_dim == self.intrinsic_dim + 1,
        };
        if !ok_dims {
            return Err(Error::InvalidInput(format!(
                "inconsistent dimensions for {:?}: intrinsic {}, ambient {}",
                self.kind, self.intrinsic_dim, self.ambient_dim
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        Ok(())
    }

    /// Injectivity radius: π·scale for every catalogue entry (half the factor
    /// circumference for the torus).
    pub fn injectivity_radius(&self) -> f64 {
        PI * self.scale
    }

    /// Constant sectional curvature of the induced metric.
    pub fn sectional_curvature(&self) -> f64 {
        match self.kind {
            ManifoldKind::RoundSphere if self.intrinsic_dim >= 2 => 1.0 / (self.scale * self.scale),
            _ => 0.0,
        }
    }

    fn is_product_of_circles(&self) -> bool {
        matches!(self.kind, ManifoldKind::Circle | ManifoldKind::FlatTorus)
    }

    fn factors(&self) -> usize {
        self.ambient_dim / 2
    }

    /// Euclidean distance from `q` to the embedded manifold.
    pub fn distance_to_manifold(&self, q: &[f64]) -> f64 {
        let r = self.scale;
        if self.is_product_of_circles() {
            (0..self.factors())
                .map(|f| {
                    let d = (q[2 * f].hypot(q[2 * f + 1]) - r).abs();
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        } else {
            (norm(q) - r).abs()
        }
    }

    /// Closest point on the manifold.
    pub fn project_point(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut out = q.to_vec();
        self.project_point_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_point_in_place(&self, q: &mut [f64]) -> Result<()> {
        let limit = 0.5 * self.injectivity_radius();
        let distance = self.distance_to_manifold(q);
        if !(distance <= limit) {
            return Err(Error::FarFromManifold { distance, limit });
        }
        // points already on M to rounding are returned untouched, which makes
        // the projection exactly idempotent
        if distance <= 4.0 * f64::EPSILON * self.scale {
            return Ok(());
        }
        let r = self.scale;
        if self.is_product_of_circles() {
            for f in 0..self.factors() {
                let n = q[2 * f].hypot(q[2 * f + 1]);
                q[2 * f] *= r / n;
                q[2 * f + 1] *= r / n;
            }
        } else {
            let n = norm(q);
            for x in q.iter_mut() {
                *x *= r / n;
            }
        }
        Ok(())
    }

    /// Orthogonal projection of `v` onto T_qM.
    pub fn project_tangent(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.project_tangent_in_place(q, &mut out);
        out
    }

    pub fn project_tangent_in_place(&self, q: &[f64], v: &mut [f64]) {
        let r2 = self.scale * self.scale;
        if self.is_product_of_circles() {
            for f in 0..self.factors() {
                let c = (q[2 * f] * v[2 * f] + q[2 * f + 1] * v[2 * f + 1]) / r2;
                v[2 * f] -= c * q[2 * f];
                v[2 * f + 1] -= c * q[2 * f + 1];
            }
        } else {
            let c = dot(q, v) / r2;
            axpy(-c, q, v);
        }
    }

    /// Second fundamental form Γ_q(v, w) = (dP(q)[v]) w for tangent v, w.
    ///
    /// This is the normal part of the ambient acceleration of a geodesic with
    /// velocity v (it points towards the centre of each circle factor).
    pub fn second_fundamental_form(&self, q: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let r2 = self.scale * self.scale;
        let mut out = vec![0.0; self.ambient_dim];
        if self.is_product_of_circles() {
            for f in 0..self.factors() {
                let c = (v[2 * f] * w[2 * f] + v[2 * f + 1] * w[2 * f + 1]) / r2;
                out[2 * f] = -c * q[2 * f];
                out[2 * f + 1] = -c * q[2 * f + 1];
            }
        } else {
            let c = dot(v, w) / r2;
            axpy(-c, q, &mut out);
        }
        out
    }

    /// Weingarten map P(q)·(dP(q)[v] n) for tangent v and normal n.
    pub fn weingarten(&self, q: &[f64], v: &[f64], n: &[f64]) -> Vec<f64> {
        let r2 = self.scale * self.scale;
        let mut out = vec![0.0; self.ambient_dim];
        if self.is_product_of_circles() {
            for f in 0..self.factors() {
                let c = (q[2 * f] * n[2 * f] + q[2 * f + 1] * n[2 * f + 1]) / r2;
                out[2 * f] = -c * v[2 * f];
                out[2 * f + 1] = -c * v[2 * f + 1];
            }
        } else {
            let c = dot(q, n) / r2;
            axpy(-c, v, &mut out);
        }
        out
    }

    /// Riemann tensor R(x, y)z from the Gauss equation
    /// ⟨R(x,y)z, w⟩ = ⟨Γ(y,z), Γ(x,w)⟩ − ⟨Γ(x,z), Γ(y,w)⟩.
    pub fn curvature(&self, q: &[f64], x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let d = self.ambient_dim;
        let gyz = self.second_fundamental_form(q, y, z);
        let gxz = self.second_fundamental_form(q, x, z);
        let mut out = vec![0.0; d];
        let mut e = vec![0.0; d];
        for k in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            let ek = self.project_tangent(q, &e);
            let c = dot(&gyz, &self.second_fundamental_form(q, x, &ek))
                - dot(&gxz, &self.second_fundamental_form(q, y, &ek));
            axpy(c, &ek, &mut out);
        }
        out
    }

    /// Angle (in units of full turns, in [0, 1)) of each circle factor.
    pub fn angles(&self, q: &[f64]) -> Vec<f64> {
        assert!(self.is_product_of_circles(), "angle chart only exists on circle factors");
        (0..self.factors())
            .map(|f| {
                let a = q[2 * f + 1].atan2(q[2 * f]) / (2.0 * PI);
                if a < 0.0 {
                    a + 1.0
                } else {
                    a
                }
            })
            .collect()
    }

    pub fn point_from_angles(&self, angles: &[f64]) -> Vec<f64> {
        assert!(self.is_product_of_circles(), "angle chart only exists on circle factors");
        let r = self.scale;
        let mut out = Vec::with_capacity(self.ambient_dim);
        for a in angles {
            let th = 2.0 * PI * a;
            out.push(r * th.cos());
            out.push(r * th.sin());
        }
        out
    }

    /// Unit tangent of circle factor `f` at q (direction of increasing angle).
    pub fn factor_tangent(&self, q: &[f64], f: usize) -> Vec<f64> {
        let r = self.scale;
        let mut out = vec![0.0; self.ambient_dim];
        out[2 * f] = -q[2 * f + 1] / r;
        out[2 * f + 1] = q[2 * f] / r;
        out
    }

    /// Orthonormal basis of T_qM (columns of a d×n matrix).
    pub fn tangent_basis(&self, q: &[f64]) -> DMatrix<f64> {
        let d = self.ambient_dim;
        let n = self.intrinsic_dim;
        let mut basis = DMatrix::zeros(d, n);
        if self.is_product_of_circles() {
            for f in 0..n {
                let t = self.factor_tangent(q, f);
                basis.column_mut(f).copy_from_slice(&t);
            }
            return basis;
        }
        let mut count = 0;
        let mut e = vec![0.0; d];
        // Gram-Schmidt on projected coordinate axes, skipping the axis most aligned with q.
        let skip = (0..d).max_by(|&a, &b| q[a].abs().total_cmp(&q[b].abs())).unwrap_or(0);
        for k in 0..d {
            if k == skip || count == n {
                continue;
            }
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            let mut v = self.project_tangent(q, &e);
            for c in 0..count {
                let col: Vec<f64> = basis.column(c).iter().copied().collect();
                let a = dot(&v, &col);
                axpy(-a, &col, &mut v);
            }
            let nv = norm(&v);
            for x in v.iter_mut() {
                *x /= nv;
            }
            basis.column_mut(count).copy_from_slice(&v);
            count += 1;
        }
        basis
    }

    /// Riemannian logarithm log_p(q). Fails if q is the cut point of p.
    pub fn log(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.ambient_dim];
        self.log_into(p, q, &mut out)?;
        Ok(out)
    }

    pub fn log_into(&self, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
        if p == q {
            out.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let r = self.scale;
        if self.is_product_of_circles() {
            for f in 0..self.factors() {
                let (px, py) = (p[2 * f], p[2 * f + 1]);
                let (qx, qy) = (q[2 * f], q[2 * f + 1]);
                let delta = (px * qy - py * qx).atan2(px * qx + py * qy);
                // unit tangent at p is (-py, px)/r
                out[2 * f] = -py * delta;
                out[2 * f + 1] = px * delta;
            }
            return Ok(());
        }
        let r2 = r * r;
        let c = dot(p, q) / r2;
        for i in 0..p.len() {
            out[i] = q[i] - c * p[i];
        }
        let w = norm(out);
        let theta = (w / r).atan2(c);
        if PI - theta < 1e-9 {
            return Err(Error::BeyondInjectivityRadius { norm: r * theta, iota: self.injectivity_radius() });
        }
        if w < 1e-300 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let s = r * theta / w;
            out.iter_mut().for_each(|v| *v *= s);
        }
        Ok(())
    }

    /// Geodesic distance.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let r = self.scale;
        if self.is_product_of_circles() {
            (0..self.factors())
                .map(|f| {
                    let (px, py) = (p[2 * f], p[2 * f + 1]);
                    let (qx, qy) = (q[2 * f], q[2 * f + 1]);
                    let delta = (px * qy - py * qx).atan2(px * qx + py * qy) * r;
                    delta * delta
                })
                .sum::<f64>()
                .sqrt()
        } else {
            let c = dot(p, q) / (r * r);
            let mut cross2 = 0.0;
            for i in 0..p.len() {
                let w = q[i] - c * p[i];
                cross2 += w * w;
            }
            r * (cross2.sqrt() / r).atan2(c)
        }
    }

    /// Exponential map exp_p(ξ) (defined for all ξ on the catalogue).
    pub fn exp(&self, p: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim];
        self.exp_into(p, xi, &mut out);
        out
    }

    pub fn exp_into(&self, p: &[f64], xi: &[f64], out: &mut [f64]) {
        let r = self.scale;
        if self.is_product_of_circles() {
            for f in 0..self.factors() {
                let (px, py) = (p[2 * f], p[2 * f + 1]);
                let alpha = (-py * xi[2 * f] + px * xi[2 * f + 1]) / (r * r);
                let (s, c) = alpha.sin_cos();
                out[2 * f] = c * px - s * py;
                out[2 * f + 1] = s * px + c * py;
            }
            return;
        }
        let len = norm(xi);
        if len == 0.0 {
            out.copy_from_slice(p);
            return;
        }
        let th = len / r;
        let (s, c) = th.sin_cos();
        for i in 0..p.len() {
            out[i] = c * p[i] + s * r * xi[i] / len;
        }
        // keep the point exactly on the sphere
        let n = norm(out);
        out.iter_mut().for_each(|v| *v *= r / n);
    }

    /// Parallel transport of `v` ∈ T_pM along t ↦ exp_p(tξ), t ∈ [0, 1].
    pub fn transport(&self, p: &[f64], xi: &[f64], v: &[f64]) -> Vec<f64> {
        let r = self.scale;
        if self.is_product_of_circles() {
            let mut out = vec![0.0; self.ambient_dim];
            for f in 0..self.factors() {
                let (px, py) = (p[2 * f], p[2 * f + 1]);
                let alpha = (-py * xi[2 * f] + px * xi[2 * f + 1]) / (r * r);
                let (s, c) = alpha.sin_cos();
                out[2 * f] = c * v[2 * f] - s * v[2 * f + 1];
                out[2 * f + 1] = s * v[2 * f] + c * v[2 * f + 1];
            }
            return out;
        }
        let len = norm(xi);
        if len == 0.0 {
            return v.to_vec();
        }
        let th = len / r;
        let (s, c) = th.sin_cos();
        let a = dot(v, p) / r;
        let b = dot(v, xi) / len;
        let mut out = v.to_vec();
        for i in 0..p.len() {
            let ph = p[i] / r;
            let uh = xi[i] / len;
            out[i] += a * ((c - 1.0) * ph + s * uh) + b * (-s * ph + (c - 1.0) * uh);
        }
        out
    }

    /// Ambient matrix of the parallel transport Φ(p, ξ).
    pub fn transport_matrix(&self, p: &[f64], xi: &[f64]) -> DMatrix<f64> {
        let d = self.ambient_dim;
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for k in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            let col = self.transport(p, xi, &e);
            m.column_mut(k).copy_from_slice(&col);
        }
        m
    }

    fn check_radius(&self, xi: &[f64]) -> Result<()> {
        let n = norm(xi);
        let iota = self.injectivity_radius();
        if n >= iota {
            return Err(Error::BeyondInjectivityRadius { norm: n, iota });
        }
        Ok(())
    }

    /// exp_p(ξ) together with the parallel-transport isometry
    /// Φ(p, ξ): T_pM → T_{exp_p ξ}M as an ambient matrix.
    pub fn exp_and_transport(&self, p: &[f64], xi: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.check_radius(xi)?;
        Ok((self.exp(p, xi), self.transport_matrix(p, xi)))
    }

    /// Radial/transverse scaling factors of the horizontal and vertical
    /// derivatives of exp at ξ: (cos θ, sin θ / θ) with θ = |ξ|·√K.
    fn jacobi_factors(&self, xi: &[f64]) -> (f64, f64) {
        let k = self.sectional_curvature();
        if k == 0.0 {
            return (1.0, 1.0);
        }
        let th = norm(xi) * k.sqrt();
        let sinc = if th < 1e-8 { 1.0 - th * th / 6.0 } else { th.sin() / th };
        (th.cos(), sinc)
    }

    /// Φ ∘ (Π_radial + c·Π_transverse) applied to v ∈ T_pM.
    fn jacobi_apply(&self, p: &[f64], xi: &[f64], c: f64, v: &[f64]) -> Vec<f64> {
        let len = norm(xi);
        let mut w = v.to_vec();
        if c != 1.0 {
            // transverse part of v relative to the geodesic direction
            let mut perp = self.project_tangent(p, v);
            if len > 0.0 {
                let a = dot(&perp, xi) / (len * len);
                axpy(-a, xi, &mut perp);
            }
            axpy(c - 1.0, &perp, &mut w);
        }
        self.transport(p, xi, &w)
    }

    /// E₂(p, ξ)^{-T} η: the L²-adjoint of the inverse vertical derivative of
    /// exp, i.e. the gradient in q of ⟨log_p q, η⟩ at q = exp_p ξ.
    pub fn inverse_exp_adjoint(&self, p: &[f64], xi: &[f64], eta: &[f64]) -> Vec<f64> {
        let (_, sinc) = self.jacobi_factors(xi);
        self.jacobi_apply(p, xi, 1.0 / sinc, eta)
    }

    /// Derivative maps of the exponential at (p, ξ).
    pub fn e_maps(&self, p: &[f64], xi: &[f64]) -> Result<EMaps> {
        self.check_radius(xi)?;
        let d = self.ambient_dim;
        let (cos_f, sinc) = self.jacobi_factors(xi);
        let mut e1 = DMatrix::zeros(d, d);
        let mut e2 = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for k in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[k] = 1.0;
            e1.column_mut(k).copy_from_slice(&self.jacobi_apply(p, xi, cos_f, &e));
            e2.column_mut(k).copy_from_slice(&self.jacobi_apply(p, xi, sinc, &e));
        }
        Ok(EMaps { manifold: self.clone(), base: p.to_vec(), xi: xi.to_vec(), e1, e2 })
    }

    /// Uniformly distributed random point.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.is_product_of_circles() {
            let angles: Vec<f64> = (0..self.factors()).map(|_| rng.gen::<f64>()).collect();
            return self.point_from_angles(&angles);
        }
        loop {
            let v: Vec<f64> = (0..self.ambient_dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let n = norm(&v);
            if n > 0.1 && n <= 1.0 {
                return v.iter().map(|x| x * self.scale / n).collect();
            }
        }
    }

    /// Random tangent vector at q with entries of unit scale.
    pub fn random_tangent<R: Rng + ?Sized>(&self, rng: &mut R, q: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = (0..self.ambient_dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        self.project_tangent(q, &v)
    }
}

/// The maps E₁, E₂ (linear) and E₁₁, E₁₂, E₂₁, E₂₂ (bilinear) of the
/// exponential map at a fixed base point and tangent vector.
///
/// E₁ and E₂ are the horizontal and vertical derivatives of exp, in closed
/// form from Jacobi fields. The bilinear maps vanish on the flat entries and
/// are centred finite differences of E₁, E₂ on the sphere.
#[derive(Clone, Debug)]
pub struct EMaps {
    manifold: ManifoldSpec,
    base: Vec<f64>,
    xi: Vec<f64>,
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
}

const E_MAP_FD_STEP: f64 = 1e-5;

impl EMaps {
    pub fn apply_e1(&self, v: &[f64]) -> Vec<f64> {
        (&self.e1 * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn apply_e2(&self, v: &[f64]) -> Vec<f64> {
        (&self.e2 * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
    }

    fn is_flat(&self) -> bool {
        self.manifold.sectional_curvature() == 0.0
    }

    fn endpoint(&self) -> Vec<f64> {
        self.manifold.exp(&self.base, &self.xi)
    }

    /// Centred difference of s ↦ f(s) projected onto the tangent space at exp_p ξ.
    fn covariant_fd<F: Fn(f64) -> Vec<f64>>(&self, f: F) -> Vec<f64> {
        let h = E_MAP_FD_STEP;
        let plus = f(h);
        let minus = f(-h);
        let diff: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        self.manifold.project_tangent(&self.endpoint(), &diff)
    }

    /// E₁₁(η, w): ∇_s(E₁(u, ξ)η) along u(s) = exp_p(sw) with ξ, η parallel.
    pub fn e11(&self, eta: &[f64], w: &[f64]) -> Vec<f64> {
        if self.is_flat() {
            return vec![0.0; self.manifold.ambient_dim];
        }
        let m = &self.manifold;
        self.covariant_fd(|s| {
            let sw: Vec<f64> = w.iter().map(|x| s * x).collect();
            let u = m.exp(&self.base, &sw);
            let xi_s = m.transport(&self.base, &sw, &self.xi);
            let eta_s = m.transport(&self.base, &sw, eta);
            let (c, _) = m.jacobi_factors(&xi_s);
            m.jacobi_apply(&u, &xi_s, c, &eta_s)
        })
    }

    /// E₁₂(η, w): ∇_s(E₁(p, ξ + sw)η).
    pub fn e12(&self, eta: &[f64], w: &[f64]) -> Vec<f64> {
        if self.is_flat() {
            return vec![0.0; self.manifold.ambient_dim];
        }
        let m = &self.manifold;
        self.covariant_fd(|s| {
            let xi_s: Vec<f64> = self.xi.iter().zip(w).map(|(a, b)| a + s * b).collect();
            let (c, _) = m.jacobi_factors(&xi_s);
            m.jacobi_apply(&self.base, &xi_s, c, eta)
        })
    }

    /// E₂₁(η, η′) = E₁₂(η′, η).
    pub fn e21(&self, eta: &[f64], w: &[f64]) -> Vec<f64> {
        self.e12(w, eta)
    }

    /// E₂₂(η, w), symmetrised.
    pub fn e22(&self, eta: &[f64], w: &[f64]) -> Vec<f64> {
        if self.is_flat() {
            return vec![0.0; self.manifold.ambient_dim];
        }
        let a = self.e22_raw(eta, w);
        let b = self.e22_raw(w, eta);
        a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect()
    }

    fn e22_raw(&self, eta: &[f64], w: &[f64]) -> Vec<f64> {
        let m = &self.manifold;
        self.covariant_fd(|s| {
            let xi_s: Vec<f64> = self.xi.iter().zip(w).map(|(a, b)| a + s * b).collect();
            let (_, sinc) = m.jacobi_factors(&xi_s);
            m.jacobi_apply(&self.base, &xi_s, sinc, eta)
        })
    }
}
