//! Potentials on the loop space: geometric potentials V(t, q), bump
//! perturbations localised near a fixed loop, and weighted linear
//! combinations of generators, together with the admissibility radius and
//! sublevel-inclusion monitors.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crit::CriticalPoint;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, sub};
use crate::loopspace::{action, heat_residual, loop_distance, DiscreteLoop, LoopField, LoopNorm};
use crate::manifold::{ManifoldKind, ManifoldSpec};

/// Step size of the centred covariant difference used for bump Hessians.
pub const HESSIAN_FD_STEP: f64 = 1e-5;

fn flat_bump(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

fn flat_bump_prime(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        flat_bump(s) / (s * s)
    }
}

/// C^∞ transition: 0 for s ≤ 0, 1 for s ≥ 1.
fn transition(s: f64) -> f64 {
    let (a, b) = (flat_bump(s), flat_bump(1.0 - s));
    a / (a + b)
}

fn transition_prime(s: f64) -> f64 {
    let (a, b) = (flat_bump(s), flat_bump(1.0 - s));
    let (da, db) = (flat_bump_prime(s), flat_bump_prime(1.0 - s));
    let den = a + b;
    (da * b + a * db) / (den * den)
}

/// The two cutoff functions of the bump construction.
///
/// `rho` is 1 on [−1, 1] and 0 outside [−4, 4]; `beta` is 1 on
/// [−(ι/2)², (ι/2)²] and 0 outside [−ι², ι²].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub iota: f64,
}

impl CutoffPair {
    pub fn new(iota: f64) -> Self {
        Self { iota }
    }

    pub fn rho(&self, r: f64) -> f64 {
        transition((4.0 - r.abs()) / 3.0)
    }

    pub fn rho_prime(&self, r: f64) -> f64 {
        -r.signum() * transition_prime((4.0 - r.abs()) / 3.0) / 3.0
    }

    fn beta_width(&self) -> f64 {
        0.75 * self.iota * self.iota
    }

    pub fn beta(&self, r: f64) -> f64 {
        transition((self.iota * self.iota - r.abs()) / self.beta_width())
    }

    pub fn beta_prime(&self, r: f64) -> f64 {
        -r.signum() * transition_prime((self.iota * self.iota - r.abs()) / self.beta_width()) / self.beta_width()
    }
}

/// One term A·cos(2π⟨m, θ⟩ + φ)·cos(2π k t) in the angle chart (θ in turns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub freq: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub time_freq: i32,
}

/// Closed-form potentials V(t, q).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeometricPotential {
    Zero,
    /// Sum of cosine terms; circle and torus only.
    Cosine { terms: Vec<CosineTerm> },
    /// c + ⟨a, q⟩ + ½ qᵀBq in ambient coordinates; empty `linear` or
    /// `quadratic` mean zero.
    Polynomial {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        quadratic: Vec<Vec<f64>>,
    },
}

impl GeometricPotential {
    /// Time-independent cosine potential from (amplitude, frequency vector) pairs.
    pub fn cosine(terms: Vec<(f64, Vec<i32>)>) -> Self {
        GeometricPotential::Cosine {
            terms: terms
                .into_iter()
                .map(|(amplitude, freq)| CosineTerm { amplitude, freq, phase: 0.0, time_freq: 0 })
                .collect(),
        }
    }

    pub fn polynomial(constant: f64, linear: Vec<f64>, quadratic: Vec<Vec<f64>>) -> Self {
        GeometricPotential::Polynomial { constant, linear, quadratic }
    }

    pub fn constant(value: f64) -> Self {
        Self::polynomial(value, Vec::new(), Vec::new())
    }

    pub fn validate(&self, m: &ManifoldSpec) -> Result<()> {
        match self {
            GeometricPotential::Zero => Ok(()),
            GeometricPotential::Cosine { terms } => {
                if m.kind == ManifoldKind::RoundSphere {
                    return Err(Error::InvalidInput("cosine potentials need an angle chart (circle or torus)".into()));
                }
                for t in terms {
                    if t.freq.len() != m.intrinsic_dim {
                        return Err(Error::InvalidInput(format!(
                            "frequency vector has length {}, expected {}",
                            t.freq.len(),
                            m.intrinsic_dim
                        )));
                    }
                }
                Ok(())
            }
            GeometricPotential::Polynomial { linear, quadratic, .. } => {
                let d = m.ambient_dim;
                if !linear.is_empty() && linear.len() != d {
                    return Err(Error::InvalidInput(format!("linear term has length {}, expected {d}", linear.len())));
                }
                if !quadratic.is_empty() {
                    if quadratic.len() != d || quadratic.iter().any(|r| r.len() != d) {
                        return Err(Error::InvalidInput(format!("quadratic term must be {d}x{d}")));
                    }
                    for i in 0..d {
                        for j in 0..d {
                            if quadratic[i][j] != quadratic[j][i] {
                                return Err(Error::InvalidInput("quadratic term must be symmetric".into()));
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn time_factor(k: i32, t: f64) -> f64 {
        if k == 0 {
            1.0
        } else {
            (2.0 * PI * k as f64 * t).cos()
        }
    }

    fn cosine_arg(term: &CosineTerm, angles: &[f64]) -> f64 {
        2.0 * PI * term.freq.iter().zip(angles).map(|(m, a)| *m as f64 * a).sum::<f64>() + term.phase
    }

    /// Ambient gradient g = a + Bq of the polynomial variant.
    fn poly_ambient_grad(linear: &[f64], quadratic: &[Vec<f64>], q: &[f64]) -> Vec<f64> {
        let mut g = if linear.is_empty() { vec![0.0; q.len()] } else { linear.to_vec() };
        if !quadratic.is_empty() {
            for (gi, row) in g.iter_mut().zip(quadratic) {
                *gi += dot(row, q);
            }
        }
        g
    }

    pub fn value(&self, m: &ManifoldSpec, t: f64, q: &[f64]) -> f64 {
        match self {
            GeometricPotential::Zero => 0.0,
            GeometricPotential::Cosine { terms } => {
                let angles = m.angles(q);
                terms
                    .iter()
                    .map(|c| c.amplitude * Self::cosine_arg(c, &angles).cos() * Self::time_factor(c.time_freq, t))
                    .sum()
            }
            GeometricPotential::Polynomial { constant, linear, quadratic } => {
                let mut v = *constant;
                if !linear.is_empty() {
                    v += dot(linear, q);
                }
                if !quadratic.is_empty() {
                    v += 0.5 * quadratic.iter().zip(q).map(|(row, qi)| qi * dot(row, q)).sum::<f64>();
                }
                v
            }
        }
    }

    /// Riemannian gradient ∇V_t(q).
    pub fn gradient(&self, m: &ManifoldSpec, t: f64, q: &[f64]) -> Vec<f64> {
        match self {
            GeometricPotential::Zero => vec![0.0; m.ambient_dim],
            GeometricPotential::Cosine { terms } => {
                let angles = m.angles(q);
                let chart = 2.0 * PI * m.scale;
                let mut out = vec![0.0; m.ambient_dim];
                for c in terms {
                    let s = -c.amplitude * 2.0 * PI * Self::cosine_arg(c, &angles).sin() * Self::time_factor(c.time_freq, t);
                    for (f, mf) in c.freq.iter().enumerate() {
                        if *mf != 0 {
                            axpy(s * *mf as f64 / chart, &m.factor_tangent(q, f), &mut out);
                        }
                    }
                }
                out
            }
            GeometricPotential::Polynomial { linear, quadratic, .. } => {
                m.project_tangent(q, &Self::poly_ambient_grad(linear, quadratic, q))
            }
        }
    }

    /// Covariant Hessian ∇_ξ ∇V_t(q).
    pub fn hessian(&self, m: &ManifoldSpec, t: f64, q: &[f64], xi: &[f64]) -> Vec<f64> {
        match self {
            GeometricPotential::Zero => vec![0.0; m.ambient_dim],
            GeometricPotential::Cosine { terms } => {
                let angles = m.angles(q);
                let chart = 2.0 * PI * m.scale;
                let k = m.intrinsic_dim;
                let tangents: Vec<Vec<f64>> = (0..k).map(|f| m.factor_tangent(q, f)).collect();
                let comps: Vec<f64> = tangents.iter().map(|e| dot(e, xi) / chart).collect();
                let mut out = vec![0.0; m.ambient_dim];
                for c in terms {
                    let s = -c.amplitude
                        * (2.0 * PI).powi(2)
                        * Self::cosine_arg(c, &angles).cos()
                        * Self::time_factor(c.time_freq, t);
                    let mxi: f64 = c.freq.iter().zip(&comps).map(|(mf, x)| *mf as f64 * x).sum();
                    for (f, mf) in c.freq.iter().enumerate() {
                        if *mf != 0 {
                            axpy(s * *mf as f64 * mxi / chart, &tangents[f], &mut out);
                        }
                    }
                }
                out
            }
            GeometricPotential::Polynomial { linear, quadratic, .. } => {
                let g = Self::poly_ambient_grad(linear, quadratic, q);
                let normal = sub(&g, &m.project_tangent(q, &g));
                let mut out = m.weingarten(q, xi, &normal);
                if !quadratic.is_empty() {
                    let bxi: Vec<f64> = quadratic.iter().map(|row| dot(row, xi)).collect();
                    let pb = m.project_tangent(q, &bxi);
                    axpy(1.0, &pb, &mut out);
                }
                out
            }
        }
    }
}

/// Bump perturbation ρ(k²‖x − x_c‖²_{L²}) · ∫ β(|ξ_t|²)⟨ξ_t, η(t)⟩ dt with
/// ξ_t = log_{x_c(t)} x(t). Its support is the L² ball of radius 2/k about
/// the centre loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub center: DiscreteLoop,
    pub direction: LoopField,
    pub k: u32,
    pub cutoffs: CutoffPair,
}

struct BumpSample {
    xi: Vec<f64>,
    beta: f64,
    beta_prime: f64,
    pairing: f64,
}

impl Bump {
    pub fn new(center: DiscreteLoop, direction: LoopField, k: u32) -> Result<Self> {
        if direction.n_samples() != center.n_samples() || direction.dim() != center.dim() {
            return Err(Error::GridMismatch("bump direction field does not match its centre loop".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInput("bump parameter k must be positive".into()));
        }
        let mut direction = direction;
        center.project_field(&mut direction);
        let cutoffs = CutoffPair::new(center.manifold().injectivity_radius());
        Ok(Self { center, direction, k, cutoffs })
    }

    /// L² radius of the support ball around the centre loop.
    pub fn support_radius(&self) -> f64 {
        2.0 / self.k as f64
    }

    fn sample(&self, j: usize, q: &[f64]) -> Option<BumpSample> {
        let m = self.center.manifold();
        // the cut point lies outside the β-support, so a failed log contributes nothing
        let xi = m.log(self.center.point(j), q).ok()?;
        let r = dot(&xi, &xi);
        let beta = self.cutoffs.beta(r);
        let beta_prime = self.cutoffs.beta_prime(r);
        if beta == 0.0 && beta_prime == 0.0 {
            return None;
        }
        let pairing = dot(&xi, self.direction.at(j));
        Some(BumpSample { xi, beta, beta_prime, pairing })
    }

    fn outer(&self, x: &DiscreteLoop) -> (f64, f64) {
        let k2 = (self.k as f64).powi(2);
        let w = loop_distance(x, &self.center, LoopNorm::L2).map(|d| d * d).unwrap_or(f64::INFINITY);
        (self.cutoffs.rho(w * k2), self.cutoffs.rho_prime(w * k2) * k2)
    }

    fn inner_integral(&self, x: &DiscreteLoop) -> f64 {
        let n = x.n_samples();
        (0..n).filter_map(|j| self.sample(j, x.point(j))).map(|s| s.beta * s.pairing).sum::<f64>() / n as f64
    }

    pub fn eval(&self, x: &DiscreteLoop) -> f64 {
        let (rho, _) = self.outer(x);
        if rho == 0.0 {
            return 0.0;
        }
        rho * self.inner_integral(x)
    }

    pub fn gradient(&self, x: &DiscreteLoop) -> LoopField {
        let mut out = x.zero_field();
        let (rho, drho) = self.outer(x);
        if rho == 0.0 && drho == 0.0 {
            return out;
        }
        let m = x.manifold();
        let n = x.n_samples();
        let integral = self.inner_integral(x);
        for j in 0..n {
            let q = x.point(j);
            let g = out.at_mut(j);
            if drho != 0.0 {
                let diff = m.project_tangent(q, &sub(q, self.center.point(j)));
                axpy(2.0 * drho * integral, &diff, g);
            }
            if rho == 0.0 {
                continue;
            }
            if let Some(s) = self.sample(j, q) {
                let c = self.center.point(j);
                if s.beta_prime != 0.0 {
                    let radial = m.transport(c, &s.xi, &s.xi);
                    axpy(2.0 * rho * s.beta_prime * s.pairing, &radial, g);
                }
                if s.beta != 0.0 {
                    let adj = m.inverse_exp_adjoint(c, &s.xi, self.direction.at(j));
                    axpy(rho * s.beta, &adj, g);
                }
            }
        }
        out
    }
}

/// Weighted combination Σ λ_ℓ V_ℓ of generators with norm Σ|λ_ℓ|·C_ℓ.
#[derive(Clone, Debug, PartialEq)]
pub struct Combo {
    pub terms: Vec<(f64, Perturbation)>,
    pub constants: Vec<f64>,
}

impl Combo {
    /// Constants are the empirical (V0) bounds over `sample`, rounded up to
    /// a power of two and made non-decreasing.
    pub fn new(terms: Vec<(f64, Perturbation)>, sample: &[DiscreteLoop]) -> Result<Self> {
        let mut constants = Vec::with_capacity(terms.len());
        let mut running = 1.0_f64;
        for (_, g) in &terms {
            let (sv, sg) = v0_bounds(g, sample)?;
            let c = (sv + sg).max(1.0);
            running = running.max(2f64.powi(c.log2().ceil() as i32));
            constants.push(running);
        }
        Ok(Self { terms, constants })
    }

    pub fn with_constants(terms: Vec<(f64, Perturbation)>, constants: Vec<f64>) -> Result<Self> {
        if terms.len() != constants.len() {
            return Err(Error::InvalidInput("one constant per generator is required".into()));
        }
        if constants.iter().any(|c| !(*c > 0.0)) || constants.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("combo constants must be positive and non-decreasing".into()));
        }
        Ok(Self { terms, constants })
    }

    pub fn norm(&self) -> f64 {
        self.terms.iter().zip(&self.constants).map(|((l, _), c)| l.abs() * c).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation {
    Geometric(GeometricPotential),
    Bump(Box<Bump>),
    Combo(Combo),
}

impl Perturbation {
    pub fn zero() -> Self {
        Perturbation::Geometric(GeometricPotential::Zero)
    }

    /// True when the Hessian acts pointwise in t (no bump terms).
    pub fn is_local(&self) -> bool {
        match self {
            Perturbation::Geometric(_) => true,
            Perturbation::Bump(_) => false,
            Perturbation::Combo(c) => c.terms.iter().all(|(_, g)| g.is_local()),
        }
    }

    pub fn eval(&self, x: &DiscreteLoop) -> f64 {
        match self {
            Perturbation::Geometric(g) => {
                let n = x.n_samples();
                let m = x.manifold();
                (0..n).map(|j| g.value(m, j as f64 / n as f64, x.point(j))).sum::<f64>() / n as f64
            }
            Perturbation::Bump(b) => b.eval(x),
            Perturbation::Combo(c) => c.terms.iter().map(|(l, g)| l * g.eval(x)).sum(),
        }
    }

    /// L² gradient along x.
    pub fn gradient(&self, x: &DiscreteLoop) -> LoopField {
        match self {
            Perturbation::Geometric(g) => {
                let n = x.n_samples();
                let m = x.manifold();
                let mut out = x.zero_field();
                for j in 0..n {
                    out.at_mut(j).copy_from_slice(&g.gradient(m, j as f64 / n as f64, x.point(j)));
                }
                out
            }
            Perturbation::Bump(b) => b.gradient(x),
            Perturbation::Combo(c) => {
                let mut out = x.zero_field();
                for (l, g) in &c.terms {
                    out.axpy(*l, &g.gradient(x));
                }
                out
            }
        }
    }

    /// Covariant Hessian applied to a field along x.
    pub fn hessian_apply(&self, x: &DiscreteLoop, xi: &LoopField) -> LoopField {
        match self {
            Perturbation::Geometric(g) => {
                let n = x.n_samples();
                let m = x.manifold();
                let mut out = x.zero_field();
                for j in 0..n {
                    out.at_mut(j).copy_from_slice(&g.hessian(m, j as f64 / n as f64, x.point(j), xi.at(j)));
                }
                out
            }
            Perturbation::Bump(_) => covariant_gradient_difference(self, x, xi),
            Perturbation::Combo(c) => {
                let mut out = x.zero_field();
                for (l, g) in &c.terms {
                    out.axpy(*l, &g.hessian_apply(x, xi));
                }
                out
            }
        }
    }

    /// Pointwise Hessian at sample j for local perturbations (None otherwise).
    pub fn local_hessian(&self, m: &ManifoldSpec, t: f64, q: &[f64], xi: &[f64]) -> Option<Vec<f64>> {
        match self {
            Perturbation::Geometric(g) => Some(g.hessian(m, t, q, xi)),
            Perturbation::Bump(_) => None,
            Perturbation::Combo(c) => {
                let mut out = vec![0.0; m.ambient_dim];
                for (l, g) in &c.terms {
                    axpy(*l, &g.local_hessian(m, t, q, xi)?, &mut out);
                }
                Some(out)
            }
        }
    }

    pub fn validate(&self, m: &ManifoldSpec) -> Result<()> {
        match self {
            Perturbation::Geometric(g) => g.validate(m),
            Perturbation::Bump(b) => {
                if b.center.manifold() != m {
                    return Err(Error::InvalidInput("bump centre lives on a different manifold".into()));
                }
                Ok(())
            }
            Perturbation::Combo(c) => c.terms.iter().try_for_each(|(_, g)| g.validate(m)),
        }
    }
}

/// ∇_ξ grad V by a centred difference of the gradient along exp_x(±hξ),
/// transported back to x.
fn covariant_gradient_difference(v: &Perturbation, x: &DiscreteLoop, xi: &LoopField) -> LoopField {
    let h = HESSIAN_FD_STEP;
    let m = x.manifold();
    let n = x.n_samples();
    let mut out = x.zero_field();
    for (sign, weight) in [(1.0, 0.5 / h), (-1.0, -0.5 / h)] {
        let step = xi.scaled(sign * h);
        let y = x.exp_field(&step);
        let g = v.gradient(&y);
        for j in 0..n {
            let p = x.point(j);
            let arrive = m.transport(p, step.at(j), step.at(j));
            let back: Vec<f64> = arrive.iter().map(|a| -a).collect();
            let gb = m.transport(y.point(j), &back, g.at(j));
            axpy(weight, &gb, out.at_mut(j));
        }
    }
    x.project_field(&mut out);
    out
}

/// Empirical (sup|V|, sup‖grad V‖_∞) over a sample of loops.
pub fn v0_bounds(v: &Perturbation, sample: &[DiscreteLoop]) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("v0_bounds needs at least one loop".into()));
    }
    let mut sv = 0.0_f64;
    let mut sg = 0.0_f64;
    for x in sample {
        sv = sv.max(v.eval(x).abs());
        sg = sg.max(v.gradient(x).sup());
    }
    Ok((sv, sg))
}

/// Random smooth loop: a random base point moved by a few low Fourier modes
/// of tangent directions with total amplitude `amplitude`.
pub fn random_smooth_loop<R: Rng + ?Sized>(m: &ManifoldSpec, n: usize, amplitude: f64, rng: &mut R) -> Result<DiscreteLoop> {
    let base = m.random_point(rng);
    let modes = 3;
    let coeffs: Vec<(Vec<f64>, Vec<f64>)> = (0..modes)
        .map(|_| (m.random_tangent(rng, &base), m.random_tangent(rng, &base)))
        .collect();
    let scale = amplitude / (modes as f64).sqrt();
    let points: Vec<f64> = (0..n)
        .flat_map(|j| {
            let t = j as f64 / n as f64;
            let mut xi = vec![0.0; m.ambient_dim];
            for (k, (a, b)) in coeffs.iter().enumerate() {
                let th = 2.0 * PI * (k + 1) as f64 * t;
                axpy(scale * th.cos() / (k + 1) as f64, a, &mut xi);
                axpy(scale * th.sin() / (k + 1) as f64, b, &mut xi);
            }
            m.exp(&base, &xi)
        })
        .collect();
    DiscreteLoop::new(m.clone(), points)
}

/// Critical-value gap data and the admissibility radius at level a.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub level: f64,
    pub c_below: f64,
    pub c_above: f64,
    /// True when no critical value exceeds the level and c_above was mirrored.
    pub c_above_mirrored: bool,
    pub delta: f64,
    /// Minimum residual norm over the probes; an upper estimate of the infimum.
    pub kappa: f64,
    pub radius: f64,
    pub probes_used: usize,
    pub probes_rejected_in_u: usize,
}

/// δ^a, κ^a and r^a = ½ min(δ^a, κ^a). Probes inside the L² balls of radius
/// `u_radius` about the critical loops, or with action ≥ c_above, are skipped.
pub fn admissible_radius(
    v: &Perturbation,
    a: f64,
    crit: &[CriticalPoint],
    u_radius: f64,
    probe_loops: &[DiscreteLoop],
    tol_reg: f64,
) -> Result<Admissibility> {
    let mut values: Vec<f64> = crit.iter().map(|c| c.action).collect();
    values.sort_by(f64::total_cmp);
    if let Some(&c) = values.iter().find(|c| (*c - a).abs() < tol_reg) {
        return Err(Error::LevelIsCritical { level: a, value: c, tol: tol_reg });
    }
    let c_below = values
        .iter()
        .copied()
        .filter(|c| *c < a)
        .last()
        .ok_or_else(|| Error::InvalidInput(format!("no critical value below the level {a}")))?;
    let above = values.iter().copied().find(|c| *c > a);
    let c_above = above.unwrap_or(a + (a - c_below));
    let delta = 0.5 * (a - c_below).min(c_above - a);

    let mut kappa = f64::INFINITY;
    let mut used = 0;
    let mut rejected = 0;
    for x in probe_loops {
        if action(x, v) >= c_above {
            continue;
        }
        let inside = crit.iter().any(|c| {
            loop_distance(x, &c.curve, LoopNorm::L2).map(|d| d < u_radius).unwrap_or(false)
        });
        if inside {
            rejected += 1;
            continue;
        }
        used += 1;
        kappa = kappa.min(heat_residual(x, v)?.l2());
    }
    let radius = 0.5 * delta.min(kappa);
    Ok(Admissibility {
        level: a,
        c_below,
        c_above,
        c_above_mirrored: above.is_none(),
        delta,
        kappa,
        radius,
        probes_used: used,
        probes_rejected_in_u: rejected,
    })
}

/// The six sublevel inclusions, stated for a loop γ with S = S_V(γ) and
/// S′ = S_{V+v}(γ) = S − v(γ).
pub const INCLUSIONS: [&str; 6] = [
    "S <= c_k implies S' <= a-",
    "S' <= a- implies S <= a",
    "S <= a implies S' <= a+",
    "S' <= a+ implies S < c_k+1",
    "S <= a- implies S' <= a",
    "S' <= a implies S <= a+",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionFailure {
    pub inclusion: String,
    pub loop_index: usize,
    pub action: f64,
    pub perturbed_action: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublevelReport {
    pub checked: usize,
    /// How many loops satisfied the hypothesis of each inclusion.
    pub hypothesis_counts: [usize; 6],
    pub max_abs_v: f64,
    pub failures: Vec<InclusionFailure>,
}

impl SublevelReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks every sublevel inclusion on each sampled loop; counterexamples are
/// collected, never raised.
pub fn check_sublevel_inclusions(
    base: &Perturbation,
    v: &Perturbation,
    adm: &Admissibility,
    sample: &[DiscreteLoop],
) -> SublevelReport {
    let a = adm.level;
    let (am, ap) = (a - adm.delta, a + adm.delta);
    let mut report = SublevelReport { checked: 0, hypothesis_counts: [0; 6], max_abs_v: 0.0, failures: Vec::new() };
    for (i, x) in sample.iter().enumerate() {
        let s = action(x, base);
        let vv = v.eval(x);
        let sp = s - vv;
        report.checked += 1;
        report.max_abs_v = report.max_abs_v.max(vv.abs());
        let checks = [
            (s <= adm.c_below, sp <= am),
            (sp <= am, s <= a),
            (s <= a, sp <= ap),
            (sp <= ap, s < adm.c_above),
            (s <= am, sp <= a),
            (sp <= a, s <= ap),
        ];
        for (k, (hyp, concl)) in checks.iter().enumerate() {
            if *hyp {
                report.hypothesis_counts[k] += 1;
                if !concl {
                    report.failures.push(InclusionFailure {
                        inclusion: INCLUSIONS[k].to_string(),
                        loop_index: i,
                        action: s,
                        perturbed_action: sp,
                    });
                }
            }
        }
    }
    report
}

/// True when the support ball of every bump term stays at L² distance
/// greater than `u_radius` from each of the given loops.
pub fn support_avoids(v: &Perturbation, loops: &[DiscreteLoop], u_radius: f64) -> bool {
    match v {
        Perturbation::Geometric(_) => false,
        Perturbation::Bump(b) => loops.iter().all(|x| {
            loop_distance(x, &b.center, LoopNorm::L2).map(|d| d > b.support_radius() + u_radius).unwrap_or(true)
        }),
        Perturbation::Combo(c) => c.terms.iter().all(|(l, g)| *l == 0.0 || support_avoids(g, loops, u_radius)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::UNIT_CIRCUMFERENCE_RADIUS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle() -> ManifoldSpec {
        ManifoldSpec::circle(UNIT_CIRCUMFERENCE_RADIUS)
    }

    fn pendulum(eps: f64) -> Perturbation {
        Perturbation::Geometric(GeometricPotential::cosine(vec![(eps, vec![1])]))
    }

    fn random_field<R: Rng>(x: &DiscreteLoop, rng: &mut R) -> LoopField {
        let m = x.manifold();
        let mut f = x.zero_field();
        for j in 0..x.n_samples() {
            f.at_mut(j).copy_from_slice(&m.random_tangent(rng, x.point(j)));
        }
        f
    }

    fn directional_fd(v: &Perturbation, x: &DiscreteLoop, xi: &LoopField) -> f64 {
        let h = 1e-5;
        (v.eval(&x.exp_field(&xi.scaled(h))) - v.eval(&x.exp_field(&xi.scaled(-h)))) / (2.0 * h)
    }

    fn sample_bump(m: &ManifoldSpec, n: usize, k: u32, seed: u64) -> (Bump, DiscreteLoop) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = random_smooth_loop(m, n, 0.3 * m.injectivity_radius(), &mut rng).unwrap();
        let eta = random_field(&center, &mut rng);
        let b = Bump::new(center.clone(), eta, k).unwrap();
        (b, center)
    }

    fn catalogue_perturbations() -> Vec<(ManifoldSpec, Perturbation)> {
        let torus = ManifoldSpec::flat_torus(2);
        let sphere = ManifoldSpec::round_sphere(2, 1.0);
        let (b_t, _) = sample_bump(&torus, 32, 3, 1);
        let (b_s, _) = sample_bump(&sphere, 32, 3, 2);
        vec![
            (circle(), pendulum(0.1)),
            (
                circle(),
                Perturbation::Geometric(GeometricPotential::Cosine {
                    terms: vec![CosineTerm { amplitude: 0.2, freq: vec![2], phase: 0.3, time_freq: 1 }],
                }),
            ),
            (torus.clone(), Perturbation::Geometric(GeometricPotential::cosine(vec![(0.1, vec![1, 0]), (0.1, vec![0, 1]), (0.05, vec![1, -1])]))),
            (
                sphere.clone(),
                Perturbation::Geometric(GeometricPotential::polynomial(
                    0.2,
                    vec![0.1, 0.0, -0.3],
                    vec![vec![0.5, 0.2, 0.0], vec![0.2, -0.1, 0.1], vec![0.0, 0.1, 0.3]],
                )),
            ),
            (torus, Perturbation::Bump(Box::new(b_t))),
            (sphere, Perturbation::Bump(Box::new(b_s))),
        ]
    }

    #[test]
    fn cutoff_plateaus_and_supports() {
        let c = CutoffPair::new(0.5);
        let mut max_slope = 0.0_f64;
        for i in 0..=10_000 {
            let r = -5.0 + 10.0 * i as f64 / 10_000.0;
            let rho = c.rho(r);
            assert!((0.0..=1.0).contains(&rho));
            if r.abs() <= 1.0 {
                assert_eq!(rho, 1.0);
            }
            if r.abs() >= 4.0 {
                assert_eq!(rho, 0.0);
            }
            max_slope = max_slope.max(c.rho_prime(r).abs());

            let s = -0.3 + 0.6 * i as f64 / 10_000.0;
            let beta = c.beta(s);
            assert!((0.0..=1.0).contains(&beta));
            if s.abs() <= 0.0625 {
                assert_eq!(beta, 1.0);
            }
            if s.abs() >= 0.25 {
                assert_eq!(beta, 0.0);
            }
        }
        assert!(max_slope < 1.0, "max |rho'| = {max_slope}");
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        let c = CutoffPair::new(0.7);
        for i in 1..200 {
            let r = -4.5 + 9.0 * i as f64 / 200.0;
            let h = 1e-6;
            let fd = (c.rho(r + h) - c.rho(r - h)) / (2.0 * h);
            assert!((fd - c.rho_prime(r)).abs() < 1e-6);
            let s = -0.6 + 1.2 * i as f64 / 200.0;
            let fd = (c.beta(s + h) - c.beta(s - h)) / (2.0 * h);
            assert!((fd - c.beta_prime(s)).abs() < 1e-5);
        }
    }

    #[test]
    fn geometric_examples() {
        let m = circle();
        let v = pendulum(0.1);
        for q0 in [0.0, 0.1, 0.37, 0.5] {
            let x = DiscreteLoop::constant(m.clone(), &m.point_from_angles(&[q0]), 32).unwrap();
            assert!((v.eval(&x) - 0.1 * (2.0 * PI * q0).cos()).abs() < 1e-12);
            let g = v.gradient(&x);
            let expected = -0.1 * 2.0 * PI * (2.0 * PI * q0).sin();
            let e = m.factor_tangent(x.point(0), 0);
            for j in 0..32 {
                assert!(crate::linalg::max_abs(&sub(g.at(j), &crate::linalg::scaled(expected, &e))) < 1e-10);
            }
            let h = v.hessian_apply(&x, &LoopField::from_vec(32, 2, e.repeat(32)));
            let expected_h = -0.1 * (2.0 * PI).powi(2) * (2.0 * PI * q0).cos();
            assert!((dot(h.at(3), &e) - expected_h).abs() < 1e-10);
        }
        let x = DiscreteLoop::constant(m.clone(), &m.point_from_angles(&[0.2]), 32).unwrap();
        let xi = LoopField::from_vec(32, 2, m.factor_tangent(x.point(0), 0).repeat(32));
        assert_eq!(Perturbation::zero().hessian_apply(&x, &xi).sup(), 0.0);
    }

    #[test]
    fn gradients_match_directional_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (m, v) in catalogue_perturbations() {
            let center = match &v {
                Perturbation::Bump(b) => Some(b.center.clone()),
                _ => None,
            };
            for trial in 0..20 {
                let x = match &center {
                    // stay inside the bump support so the test is not vacuous
                    Some(c) => c.exp_field(&random_field(c, &mut rng).scaled(0.05)),
                    None => random_smooth_loop(&m, 32, 0.5, &mut rng).unwrap(),
                };
                let xi = random_field(&x, &mut rng);
                let fd = directional_fd(&v, &x, &xi);
                let pred = v.gradient(&x).inner(&xi);
                assert!(
                    (fd - pred).abs() <= 1e-4 * pred.abs().max(1e-6),
                    "{:?} trial {trial}: {fd} vs {pred}",
                    m.kind
                );
            }
        }
    }

    #[test]
    fn hessians_are_symmetric_and_match_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for (m, v) in catalogue_perturbations() {
            for _ in 0..10 {
                let x = match &v {
                    Perturbation::Bump(b) => b.center.exp_field(&random_field(&b.center, &mut rng).scaled(0.05)),
                    _ => random_smooth_loop(&m, 32, 0.5, &mut rng).unwrap(),
                };
                let a = random_field(&x, &mut rng);
                let b = random_field(&x, &mut rng);
                let ha = v.hessian_apply(&x, &a);
                let hb = v.hessian_apply(&x, &b);
                let (l, r) = (ha.inner(&b), a.inner(&hb));
                let tol = if v.is_local() { 1e-6 } else { 1e-5 };
                assert!((l - r).abs() <= tol * l.abs().max(r.abs()).max(1e-3), "{:?}: {l} vs {r}", m.kind);
                if v.is_local() {
                    let fd = covariant_gradient_difference(&v, &x, &a);
                    assert!(fd.sub(&ha).sup() < 1e-6 * (1.0 + ha.sup()), "{:?}", m.kind);
                }
            }
        }
    }

    #[test]
    fn bump_vanishes_at_centre_and_outside_support() {
        for m in [ManifoldSpec::flat_torus(2), ManifoldSpec::round_sphere(2, 1.0)] {
            let (b, center) = sample_bump(&m, 32, 4, 7);
            assert_eq!(b.eval(&center), 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut inside_nonzero = 0;
            for _ in 0..1000 {
                let dir = random_field(&center, &mut rng);
                let target = b.support_radius() * (0.8 + 0.4 * rng.gen::<f64>());
                let scale = target / dir.l2();
                let x = center.exp_field(&dir.scaled(scale));
                let dist = loop_distance(&x, &center, LoopNorm::L2).unwrap();
                let val = b.eval(&x);
                if dist >= b.support_radius() {
                    assert_eq!(val, 0.0);
                } else if val != 0.0 {
                    inside_nonzero += 1;
                }
            }
            assert!(inside_nonzero > 0);
        }
    }

    #[test]
    fn bump_gradient_at_centre_is_direction_field() {
        let m = ManifoldSpec::round_sphere(2, 1.0);
        let (b, center) = sample_bump(&m, 32, 2, 9);
        let g = b.gradient(&center);
        assert!(g.sub(&b.direction).sup() < 1e-12);
    }

    #[test]
    fn combo_is_linear() {
        let m = ManifoldSpec::flat_torus(2);
        let g1 = Perturbation::Geometric(GeometricPotential::cosine(vec![(1.0, vec![1, 0])]));
        let (b, _) = sample_bump(&m, 32, 3, 11);
        let g2 = Perturbation::Bump(Box::new(b));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_smooth_loop(&m, 32, 0.3, &mut rng).unwrap();
        let c = Perturbation::Combo(Combo::with_constants(vec![(0.25, g1.clone()), (-0.5, g2.clone())], vec![2.0, 4.0]).unwrap());
        assert_eq!(c.eval(&x), 0.25 * g1.eval(&x) + -0.5 * g2.eval(&x));
        let mut expected = g1.gradient(&x).scaled(0.25);
        expected.axpy(-0.5, &g2.gradient(&x));
        assert_eq!(c.gradient(&x), {
            let mut e = x.zero_field();
            e.axpy(0.25, &g1.gradient(&x));
            e.axpy(-0.5, &g2.gradient(&x));
            e
        });
    }

    #[test]
    fn v0_bounds_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = circle();
        let loops: Vec<_> = (0..1000).map(|_| random_smooth_loop(&m, 16, 0.02, &mut rng).unwrap()).collect();
        assert_eq!(v0_bounds(&Perturbation::zero(), &loops).unwrap(), (0.0, 0.0));
        let (sv, sg) = v0_bounds(&pendulum(0.1), &loops).unwrap();
        assert!((sv - 0.1).abs() <= 0.005, "{sv}");
        assert!((sg - 0.2 * PI).abs() <= 0.05 * 0.2 * PI, "{sg}");

        let g1 = pendulum(0.1);
        let g2 = Perturbation::Geometric(GeometricPotential::cosine(vec![(0.3, vec![2])]));
        let combo = Perturbation::Combo(Combo::new(vec![(0.5, g1.clone()), (-2.0, g2.clone())], &loops).unwrap());
        let (cv, cg) = v0_bounds(&combo, &loops).unwrap();
        let (v1, d1) = v0_bounds(&g1, &loops).unwrap();
        let (v2, d2) = v0_bounds(&g2, &loops).unwrap();
        assert!(cv <= 0.5 * v1 + 2.0 * v2 + 1e-15);
        assert!(cg <= 0.5 * d1 + 2.0 * d2 + 1e-15);
    }

    #[test]
    fn combo_constants_are_monotone_powers_of_two() {
        let m = circle();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let loops: Vec<_> = (0..50).map(|_| random_smooth_loop(&m, 16, 0.5, &mut rng).unwrap()).collect();
        let c = Combo::new(
            vec![(1.0, pendulum(3.0)), (1.0, pendulum(0.01)), (1.0, pendulum(10.0))],
            &loops,
        )
        .unwrap();
        for w in c.constants.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for k in &c.constants {
            assert_eq!(k.log2().fract(), 0.0);
        }
        assert_eq!(c.constants[0], c.constants[1]);
    }

    #[test]
    fn cosine_rejected_on_sphere() {
        let v = GeometricPotential::cosine(vec![(0.1, vec![1, 0])]);
        assert!(v.validate(&ManifoldSpec::round_sphere(2, 1.0)).is_err());
        assert!(v.validate(&ManifoldSpec::flat_torus(2)).is_ok());
    }
}
