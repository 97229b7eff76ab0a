use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context as _;
use loopflow_core::complex::ComplexReport;
use loopflow_core::crit::CriticalPoint;
use loopflow_core::heatflow::{self, decay_fit, detect_limit, FlowControls, Side, TailWindow};
use loopflow_core::linearized::spectral_flow_along;
use loopflow_core::loopspace::{action, heat_residual};
use loopflow_core::moduli::{build_chart, ev0_injectivity, unstable_rank, ConnectingOrbit, OrbitSummary};
use loopflow_core::perturbation::{admissible_radius, check_sublevel_inclusions, random_smooth_loop, GeometricPotential};
use loopflow_core::pipeline::{self, MorseRun};
use loopflow_core::{CylinderTrajectory, DiscreteLoop, LoopField, Perturbation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, ToleranceConfig, SCHEMA};
use crate::{CliError, Command};

type Result<T> = std::result::Result<T, CliError>;

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub hash: &'a str,
    pub out: &'a Path,
    pub verbose: bool,
}

/// Common envelope of every JSON artifact.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    schema: &'static str,
    command: &'static str,
    config_hash: &'a str,
    tolerances: &'a ToleranceConfig,
    seed: u64,
    data: T,
}

impl Context<'_> {
    fn potential(&self) -> Perturbation {
        Perturbation::Geometric(self.cfg.potential.clone())
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn write_json<T: Serialize>(&self, command: Command, file: &str, data: T) -> Result<()> {
        let artifact = Artifact {
            schema: SCHEMA,
            command: command.name(),
            config_hash: self.hash,
            tolerances: &self.cfg.tolerances,
            seed: self.cfg.seed,
            data,
        };
        let path = self.prepare(file)?;
        let text = serde_json::to_string_pretty(&artifact).context("serializing").map_err(CliError::Io)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display())).map_err(CliError::Io)?;
        self.note(format!("wrote {}", path.display()));
        Ok(())
    }

    fn write_csv(&self, file: &str, traj: &CylinderTrajectory) -> Result<()> {
        let path = self.prepare(file)?;
        let f = File::create(&path).with_context(|| format!("creating {}", path.display())).map_err(CliError::Io)?;
        traj.write_monitors_csv(BufWriter::new(f))?;
        self.note(format!("wrote {}", path.display()));
        Ok(())
    }

    fn prepare(&self, file: &str) -> Result<std::path::PathBuf> {
        fs::create_dir_all(self.out).with_context(|| format!("creating {}", self.out.display())).map_err(CliError::Io)?;
        Ok(self.out.join(file))
    }

    fn critical_points(&self) -> Result<Vec<CriticalPoint>> {
        let m = self.cfg.manifold_spec().map_err(CliError::Usage)?;
        let crit = pipeline::critical_points(&self.potential(), &m, self.cfg.level, &self.cfg.seed_strategy())?;
        self.note(format!("{} critical points below {}", crit.len(), self.cfg.level));
        Ok(crit)
    }

    fn full_run(&self) -> Result<MorseRun> {
        let m = self.cfg.manifold_spec().map_err(CliError::Usage)?;
        let run = pipeline::run(
            &self.potential(),
            &m,
            self.cfg.level,
            "contractible",
            &self.cfg.seed_strategy(),
            &self.cfg.orbit_controls(),
        )?;
        self.note(format!("{} critical points, {} orbits", run.crit.len(), run.orbits.len()));
        Ok(run)
    }

    fn reference(&self) -> Option<&[usize]> {
        self.cfg.reference.as_ref().map(|r| r.betti.as_slice())
    }
}

pub fn dispatch(command: Command, ctx: &Context) -> Result<()> {
    match command {
        Command::Crit => crit(ctx),
        Command::Flow => flow(ctx),
        Command::Moduli => moduli(ctx),
        Command::Homology => homology(ctx),
        Command::Check => check(ctx),
        Command::Admissible => admissible(ctx),
    }
}

#[derive(Serialize)]
struct CritRecord {
    id: usize,
    action: f64,
    morse_index: usize,
    nondeg_margin: f64,
    residual_sup: f64,
    newton_iterations: usize,
    lowest_eigenvalues: Vec<f64>,
    curve: Vec<Vec<f64>>,
}

fn crit_records(crit: &[CriticalPoint]) -> Vec<CritRecord> {
    crit.iter()
        .enumerate()
        .map(|(id, c)| CritRecord {
            id,
            action: c.action,
            morse_index: c.morse_index,
            nondeg_margin: c.nondeg_margin,
            residual_sup: c.residual_sup,
            newton_iterations: c.residual_history.len().saturating_sub(1),
            lowest_eigenvalues: c.eigenvalues.iter().take(8).copied().collect(),
            curve: (0..c.curve.n_samples()).map(|j| c.curve.point(j).to_vec()).collect(),
        })
        .collect()
}

fn crit(ctx: &Context) -> Result<()> {
    let crit = ctx.critical_points()?;
    ctx.write_json(Command::Crit, "critical_points.json", crit_records(&crit))
}

#[derive(Serialize)]
struct FlowRecord {
    status: heatflow::FlowStatus,
    s_end: f64,
    action_start: f64,
    action_end: f64,
    energy: f64,
    monotonicity_violations: usize,
    limit_id: Option<usize>,
    monitors_csv: &'static str,
}

fn flow(ctx: &Context) -> Result<()> {
    let cfg = ctx.cfg;
    let m = cfg.manifold_spec().map_err(CliError::Usage)?;
    let v = ctx.potential();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u0 = random_smooth_loop(&m, cfg.n_samples, cfg.flow.amplitude * m.injectivity_radius(), &mut rng)?;
    let controls = FlowControls { h: cfg.h, s_max: cfg.flow.s_max, tol_conv: cfg.tolerances.tol_conv, stride: cfg.flow.stride };
    let traj = heatflow::integrate(&u0, &v, &controls)?;
    let crit = ctx.critical_points()?;
    let limit_id = detect_limit(&traj, &crit, cfg.tolerances.capture_radius)?;
    ctx.write_csv("flow_monitors.csv", &traj)?;
    let record = FlowRecord {
        status: traj.status,
        s_end: *traj.s.last().unwrap_or(&0.0),
        action_start: traj.monitors.first().map_or(f64::NAN, |mo| mo.action),
        action_end: traj.monitors.last().map_or(f64::NAN, |mo| mo.action),
        energy: heatflow::energy(&traj),
        monotonicity_violations: heatflow::monotonicity_violations(&traj).len(),
        limit_id,
        monitors_csv: "flow_monitors.csv",
    };
    ctx.write_json(Command::Flow, "flow.json", record)
}

fn summarize(ctx: &Context, crit: &[CriticalPoint], orbits: &[ConnectingOrbit]) -> Result<Vec<OrbitSummary>> {
    let v = ctx.potential();
    let window = TailWindow::default();
    let min_abs = |c: &CriticalPoint| c.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let mut out = Vec::new();
    for (i, o) in orbits.iter().enumerate() {
        let file = format!("orbit_{i:03}.csv");
        ctx.write_csv(&file, &o.trajectory)?;
        let flow = spectral_flow_along(&o.trajectory, &v, ctx.cfg.check.flow_stride, 1e-3, ctx.cfg.tolerances.tol_nondeg)
            .ok()
            .map(|r| r.flow);
        let fwd = decay_fit(&o.trajectory, Side::Forward, min_abs(&crit[o.target_id]), &window).ok();
        let bwd = decay_fit(&o.trajectory, Side::Backward, min_abs(&crit[o.source_id]), &window).ok();
        out.push(OrbitSummary {
            source_id: o.source_id,
            target_id: o.target_id,
            sign: o.sign,
            energy: o.energy,
            action_drop: o.action_drop,
            spectral_flow: flow,
            rho_forward: fwd.map(|f| f.rho),
            rho_backward: bwd.map(|f| f.rho),
            trajectory_csv_path: Some(file),
        });
    }
    Ok(out)
}

fn moduli(ctx: &Context) -> Result<()> {
    let crit = ctx.critical_points()?;
    let orbits = pipeline::all_orbits(&crit, &ctx.potential(), &ctx.cfg.orbit_controls())?;
    let summaries = summarize(ctx, &crit, &orbits)?;
    ctx.write_json(Command::Moduli, "orbits.json", summaries)
}

fn homology(ctx: &Context) -> Result<()> {
    let run = ctx.full_run()?;
    if !run.d_squared.ok {
        ctx.write_json(Command::Homology, "complex.json", &run.d_squared)?;
        return Err(CliError::Invariant(vec!["d_squared".into()]));
    }
    let h = run.homology.as_ref().expect("homology of a complex");
    let report = ComplexReport::new(&run.complex, h, ctx.reference());
    ctx.write_json(Command::Homology, "critical_points.json", crit_records(&run.crit))?;
    ctx.write_json(Command::Homology, "complex.json", &report)?;
    if ctx.verbose {
        eprintln!("betti {:?}", h.betti);
    }
    if report.reference_match.status == loopflow_core::complex::ReferenceStatus::Mismatch {
        return Err(CliError::Invariant(vec!["reference_homology".into()]));
    }
    Ok(())
}

#[derive(Serialize)]
struct InvariantResult {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct CheckReport {
    passed: bool,
    invariants: Vec<InvariantResult>,
}

fn smooth_field(x: &DiscreteLoop, rng: &mut ChaCha8Rng) -> LoopField {
    let (n, d) = (x.n_samples(), x.dim());
    let c: Vec<[f64; 3]> = (0..d).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let mut f = LoopField::zeros(n, d);
    for j in 0..n {
        let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        for (i, a) in c.iter().enumerate() {
            f.at_mut(j)[i] = a[0] + a[1] * t.cos() + a[2] * (2.0 * t).sin();
        }
    }
    x.project_field(&mut f);
    f
}

/// Worst relative mismatch between −⟨F, ξ⟩ and a fourth-order central
/// difference of the action along exp(εξ).
fn gradient_mismatch(ctx: &Context) -> Result<f64> {
    let m = ctx.cfg.manifold_spec().map_err(CliError::Usage)?;
    let v = ctx.potential();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed ^ 0x9e37);
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.cfg.check.gradient_pairs {
        let x = random_smooth_loop(&m, ctx.cfg.n_samples, 0.3 * m.injectivity_radius(), &mut rng)?;
        let xi = smooth_field(&x, &mut rng);
        let analytic = -heat_residual(&x, &v)?.inner(&xi);
        let s = |e: f64| action(&x.exp_field(&xi.scaled(e)), &v);
        let h = 1e-3;
        let fd = (8.0 * (s(h) - s(-h)) - (s(2.0 * h) - s(-2.0 * h))) / (12.0 * h);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-12));
    }
    Ok(worst)
}

fn check(ctx: &Context) -> Result<()> {
    let cfg = ctx.cfg;
    let run = ctx.full_run()?;
    let v = ctx.potential();
    let mut inv = Vec::new();
    let mut push = |name, passed, detail: String| inv.push(InvariantResult { name, passed, detail });

    let tol_crit = cfg.seed_strategy().tolerances.tol_crit_for(cfg.n_samples);
    let worst = run.crit.iter().map(|c| c.residual_sup).fold(0.0, f64::max);
    push("critical_residual", worst <= tol_crit, format!("max residual {worst:e}, tolerance {tol_crit:e}"));

    let energy_err = run
        .orbits
        .iter()
        .map(|o| (o.energy - o.action_drop).abs() / o.action_drop.abs().max(1.0))
        .fold(0.0, f64::max);
    push("energy_identity", energy_err <= cfg.check.energy_rel, format!("worst relative error {energy_err:e}"));

    let mut flows = Vec::new();
    for o in &run.orbits {
        let r = spectral_flow_along(&o.trajectory, &v, cfg.check.flow_stride, 1e-3, cfg.tolerances.tol_nondeg)?;
        let expected = run.crit[o.source_id].morse_index as i64 - run.crit[o.target_id].morse_index as i64;
        flows.push((r.flow, expected, r.crossings.len()));
    }
    push(
        "spectral_flow",
        flows.iter().all(|(f, e, c)| f == e && *c == 1),
        format!("(flow, index difference, crossings) {flows:?}"),
    );

    push("d_squared", run.d_squared.ok, format!("{} defects", run.d_squared.defects.len()));

    if let Some(h) = &run.homology {
        let r = loopflow_core::complex::compare_reference(h, ctx.reference());
        push(
            "reference_homology",
            r.status != loopflow_core::complex::ReferenceStatus::Mismatch,
            format!("betti {:?}, {:?}", h.betti, r.status),
        );
    }

    let mut ranks = Vec::new();
    for c in run.crit.iter().filter(|c| c.morse_index >= 1) {
        let chart = build_chart(c, &v, None)?;
        let r = unstable_rank(&chart, &v, 1.0, cfg.h, cfg.tolerances.rank_tol)?;
        ranks.push((r.rank, c.morse_index));
    }
    push("unstable_rank", ranks.iter().all(|(r, k)| r == k), format!("(rank, index) {ranks:?}"));

    if run.orbits.len() >= 2 {
        let iota = cfg.manifold_spec().map_err(CliError::Usage)?.injectivity_radius();
        let rep = ev0_injectivity(&run.orbits, cfg.check.ev0_fraction * iota)?;
        push("ev0_separation", rep.passed(), format!("min separation {:?}", rep.min_separation));
    }

    let g = gradient_mismatch(ctx)?;
    push("gradient_consistency", g <= cfg.check.gradient_rel, format!("worst relative error {g:e}"));

    let failed: Vec<String> = inv.iter().filter(|i| !i.passed).map(|i| i.name.to_string()).collect();
    for i in &inv {
        eprintln!("{} {}: {}", if i.passed { "PASS" } else { "FAIL" }, i.name, i.detail);
    }
    ctx.write_json(Command::Check, "check_report.json", CheckReport { passed: failed.is_empty(), invariants: inv })?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failed))
    }
}

#[derive(Serialize)]
struct AdmissibleRecord {
    admissibility: loopflow_core::perturbation::Admissibility,
    u_radius: f64,
    /// Inclusions for the constant perturbations ±r^a.
    inclusions_plus: loopflow_core::perturbation::SublevelReport,
    inclusions_minus: loopflow_core::perturbation::SublevelReport,
}

fn admissible(ctx: &Context) -> Result<()> {
    let cfg = ctx.cfg;
    let m = cfg.manifold_spec().map_err(CliError::Usage)?;
    let v = ctx.potential();
    let crit = ctx.critical_points()?;
    let iota = m.injectivity_radius();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probes: Vec<DiscreteLoop> = (0..cfg.admissible.probes)
        .map(|i| {
            let amp = cfg.admissible.probe_amplitude * iota * (i as f64 + rng.gen::<f64>()) / cfg.admissible.probes as f64;
            random_smooth_loop(&m, cfg.n_samples, amp, &mut rng)
        })
        .collect::<std::result::Result<_, _>>()?;
    let u_radius = cfg.admissible.u_fraction * iota;
    let adm = admissible_radius(&v, cfg.level, &crit, u_radius, &probes, cfg.admissible.tol_reg)?;
    let shift = |c: f64| Perturbation::Geometric(GeometricPotential::constant(c));
    let plus = check_sublevel_inclusions(&v, &shift(adm.radius), &adm, &probes);
    let minus = check_sublevel_inclusions(&v, &shift(-adm.radius), &adm, &probes);
    let passed = plus.passed() && minus.passed();
    ctx.write_json(
        Command::Admissible,
        "admissible.json",
        AdmissibleRecord { admissibility: adm, u_radius, inclusions_plus: plus, inclusions_minus: minus },
    )?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Invariant(vec!["sublevel_inclusions".into()]))
    }
}
