//! End-to-end run: critical points below a level, connecting orbits between
//! every index-adjacent pair, the chain complex and its homology.

use crate::complex::{assemble, check_d_squared, homology, ChainComplex, DSquaredReport, HomologyResult};
use crate::crit::{enumerate_below, CriticalPoint, SeedStrategy};
use crate::error::{Error, Result};
use crate::manifold::ManifoldSpec;
use crate::moduli::{enumerate_connecting, ConnectingOrbit, OrbitControls};
use crate::perturbation::Perturbation;

#[derive(Clone, Debug)]
pub struct MorseRun {
    pub crit: Vec<CriticalPoint>,
    pub orbits: Vec<ConnectingOrbit>,
    pub complex: ChainComplex,
    pub d_squared: DSquaredReport,
    pub homology: Option<HomologyResult>,
}

/// Critical points below `a`; degenerate points abort the run.
pub fn critical_points(v: &Perturbation, m: &ManifoldSpec, a: f64, strategy: &SeedStrategy) -> Result<Vec<CriticalPoint>> {
    let e = enumerate_below(v, m, a, strategy)?;
    if let Some(c) = e.points.iter().find(|c| c.degenerate) {
        return Err(Error::Degenerate { margin: c.nondeg_margin });
    }
    Ok(e.points)
}

/// Orbits between all pairs (x, y) with ind x = ind y + 1, in pair order.
pub fn all_orbits(crit: &[CriticalPoint], v: &Perturbation, controls: &OrbitControls) -> Result<Vec<ConnectingOrbit>> {
    let mut out = Vec::new();
    for (i, x) in crit.iter().enumerate() {
        for (j, y) in crit.iter().enumerate() {
            if x.morse_index == y.morse_index + 1 && x.action > y.action {
                out.extend(enumerate_connecting(crit, i, j, v, controls)?);
            }
        }
    }
    Ok(out)
}

pub fn run(
    v: &Perturbation,
    m: &ManifoldSpec,
    a: f64,
    component: &str,
    strategy: &SeedStrategy,
    controls: &OrbitControls,
) -> Result<MorseRun> {
    let crit = critical_points(v, m, a, strategy)?;
    let orbits = all_orbits(&crit, v, controls)?;
    let complex = assemble(a, component, &crit, &orbits, &vec![1; crit.len()])?;
    let d_squared = check_d_squared(&complex);
    let homology = if d_squared.ok { Some(homology(&complex)?) } else { None };
    Ok(MorseRun { crit, orbits, complex, d_squared, homology })
}
