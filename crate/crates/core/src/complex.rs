//! Graded chain complex of critical points with signed orbit counts, and its
//! integer homology through Smith normal form.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::crit::CriticalPoint;
use crate::error::{Error, Result};
use crate::moduli::{compute_sign, ConnectingOrbit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub index: usize,
    pub action: f64,
}

/// Integer matrix, row-major.
pub type IntMatrix = Vec<Vec<i64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainComplex {
    pub level: f64,
    pub component: String,
    pub generators: Vec<Generator>,
    /// Generator ids per degree, ascending id.
    pub degrees: Vec<Vec<usize>>,
    /// ±1 per generator relative to its default orientation.
    pub orientations: Vec<i8>,
    /// boundary[k] : C_k → C_{k−1}; boundary[0] is the empty map.
    pub boundary: Vec<IntMatrix>,
}

impl ChainComplex {
    pub fn rank(&self, k: usize) -> usize {
        self.degrees.get(k).map_or(0, Vec::len)
    }

    pub fn top_degree(&self) -> usize {
        self.degrees.len().saturating_sub(1)
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..self.degrees.len()).map(|k| sign_of_degree(k) * self.rank(k) as i64).sum()
    }

    /// Nonzero boundary entries as (source id, target id, value).
    pub fn triplets(&self) -> Vec<(usize, usize, i64)> {
        let mut out = Vec::new();
        for k in 1..self.boundary.len() {
            for (r, row) in self.boundary[k].iter().enumerate() {
                for (c, &val) in row.iter().enumerate() {
                    if val != 0 {
                        out.push((self.degrees[k][c], self.degrees[k - 1][r], val));
                    }
                }
            }
        }
        out
    }
}

fn sign_of_degree(k: usize) -> i64 {
    if k % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Builds the complex from generators and signed incidences
/// (source id, target id, sign). Ids are indices into `generators`.
pub fn assemble_from_counts(
    level: f64,
    component: &str,
    generators: Vec<Generator>,
    incidences: &[(usize, usize, i64)],
    orientations: &[i8],
) -> Result<ChainComplex> {
    if orientations.len() != generators.len() {
        return Err(Error::InvalidInput("one orientation per generator is required".into()));
    }
    let top = generators.iter().map(|g| g.index).max().map_or(0, |m| m + 1);
    let mut degrees = vec![Vec::new(); top];
    for g in &generators {
        degrees[g.index].push(g.id);
    }
    degrees.iter_mut().for_each(|d| d.sort_unstable());
    let position = |id: usize| -> Option<usize> { degrees[generators[id].index].iter().position(|&x| x == id) };
    let mut boundary: Vec<IntMatrix> = (0..top)
        .map(|k| if k == 0 { Vec::new() } else { vec![vec![0; degrees[k].len()]; degrees[k - 1].len()] })
        .collect();
    for &(src, tgt, val) in incidences {
        if src >= generators.len() || tgt >= generators.len() {
            return Err(Error::DanglingOrbit(format!("{src} -> {tgt}")));
        }
        let k = generators[src].index;
        if k != generators[tgt].index + 1 {
            return Err(Error::InvalidInput(format!("orbit {src} -> {tgt} does not lower the index by one")));
        }
        let (c, r) = (position(src).unwrap(), position(tgt).unwrap());
        boundary[k][r][c] += val;
    }
    Ok(ChainComplex {
        level,
        component: component.to_string(),
        generators,
        degrees,
        orientations: orientations.to_vec(),
        boundary,
    })
}

/// Chain complex of the critical points with n(x, y) summed over orbits.
pub fn assemble(
    level: f64,
    component: &str,
    crit: &[CriticalPoint],
    orbits: &[ConnectingOrbit],
    orientations: &[i8],
) -> Result<ChainComplex> {
    let generators = crit
        .iter()
        .enumerate()
        .map(|(id, c)| Generator { id, index: c.morse_index, action: c.action })
        .collect();
    if orientations.len() != crit.len() {
        return Err(Error::InvalidInput("one orientation per generator is required".into()));
    }
    let mut incidences = Vec::with_capacity(orbits.len());
    for o in orbits {
        if o.source_id >= crit.len() || o.target_id >= crit.len() {
            return Err(Error::DanglingOrbit(format!("{} -> {}", o.source_id, o.target_id)));
        }
        incidences.push((o.source_id, o.target_id, compute_sign(o, orientations) as i64));
    }
    assemble_from_counts(level, component, generators, &incidences, orientations)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DSquaredReport {
    pub ok: bool,
    /// Nonzero entries of ∂_{k−1}∂_k as (k, row, column, value).
    pub defects: Vec<(usize, usize, usize, i64)>,
}

pub fn check_d_squared(cx: &ChainComplex) -> DSquaredReport {
    let mut defects = Vec::new();
    for k in 2..cx.boundary.len() {
        let (outer, inner) = (&cx.boundary[k - 1], &cx.boundary[k]);
        for (r, row) in outer.iter().enumerate() {
            for c in 0..cx.rank(k) {
                let v: i64 = row.iter().enumerate().map(|(m, a)| a * inner[m][c]).sum();
                if v != 0 {
                    defects.push((k, r, c, v));
                }
            }
        }
    }
    DSquaredReport { ok: defects.is_empty(), defects }
}

/// Invariant factors (nonzero diagonal of the Smith normal form), ascending
/// in divisibility.
pub fn smith_invariants(m: &IntMatrix) -> Vec<BigInt> {
    let mut a: Vec<Vec<BigInt>> = m.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut out = Vec::new();
    for t in 0..rows.min(cols) {
        loop {
            // pivot of least absolute value, first in row-major order
            let mut pivot: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    if !a[i][j].is_zero() && pivot.is_none_or(|(pi, pj)| a[i][j].abs() < a[pi][pj].abs()) {
                        pivot = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = pivot else {
                return out;
            };
            a.swap(t, pi);
            for row in a.iter_mut() {
                row.swap(t, pj);
            }
            let p = a[t][t].clone();
            let mut clean = true;
            for i in t + 1..rows {
                let q = &a[i][t] / &p;
                if !q.is_zero() {
                    for j in t..cols {
                        let sub = &q * &a[t][j];
                        a[i][j] -= sub;
                    }
                }
                clean &= a[i][t].is_zero();
            }
            for j in t + 1..cols {
                let q = &a[t][j] / &p;
                if !q.is_zero() {
                    for i in t..rows {
                        let sub = &q * &a[i][t];
                        a[i][j] -= sub;
                    }
                }
                clean &= a[t][j].is_zero();
            }
            if !clean {
                continue;
            }
            // the pivot must divide the remaining block
            let bad = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| !(&a[i][j] % &p).is_zero()));
            match bad {
                Some(i) => {
                    for j in t..cols {
                        let add = a[i][j].clone();
                        a[t][j] += add;
                    }
                }
                None => {
                    out.push(p.abs());
                    break;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomologyResult {
    pub betti: Vec<usize>,
    /// Invariant factors greater than one, per degree, as decimal strings.
    pub torsion: Vec<Vec<String>>,
}

pub fn homology(cx: &ChainComplex) -> Result<HomologyResult> {
    if !check_d_squared(cx).ok {
        return Err(Error::NotAComplex);
    }
    let top = cx.degrees.len();
    let invariants: Vec<Vec<BigInt>> = (0..=top)
        .map(|k| if k == 0 || k >= top { Vec::new() } else { smith_invariants(&cx.boundary[k]) })
        .collect();
    let rank = |k: usize| invariants.get(k).map_or(0, Vec::len);
    let betti: Vec<usize> = (0..top).map(|k| cx.rank(k) - rank(k) - rank(k + 1)).collect();
    let torsion = (0..top)
        .map(|k| {
            invariants[k + 1]
                .iter()
                .filter(|f| !f.is_one())
                .map(|f| f.to_string())
                .collect()
        })
        .collect();
    let result = HomologyResult { betti, torsion };
    debug_assert_eq!(result.euler_characteristic(), cx.euler_characteristic());
    Ok(result)
}

impl HomologyResult {
    pub fn euler_characteristic(&self) -> i64 {
        self.betti.iter().enumerate().map(|(k, b)| sign_of_degree(k) * *b as i64).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceStatus {
    Match,
    Mismatch,
    NoReference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub status: ReferenceStatus,
    /// Degrees whose Betti numbers differ from the reference.
    pub mismatched_degrees: Vec<usize>,
}

/// Degree-wise comparison; degrees missing on either side count as zero.
pub fn compare_reference(result: &HomologyResult, reference: Option<&[usize]>) -> ReferenceReport {
    let Some(reference) = reference else {
        return ReferenceReport { status: ReferenceStatus::NoReference, mismatched_degrees: Vec::new() };
    };
    let len = result.betti.len().max(reference.len());
    let mismatched_degrees: Vec<usize> = (0..len)
        .filter(|&k| result.betti.get(k).copied().unwrap_or(0) != reference.get(k).copied().unwrap_or(0))
        .collect();
    ReferenceReport {
        status: if mismatched_degrees.is_empty() { ReferenceStatus::Match } else { ReferenceStatus::Mismatch },
        mismatched_degrees,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexReport {
    pub level: f64,
    pub component: String,
    pub generators: Vec<Generator>,
    pub boundary: Vec<(usize, usize, i64)>,
    pub betti: Vec<usize>,
    pub torsion: Vec<Vec<String>>,
    pub reference_match: ReferenceReport,
}

impl ComplexReport {
    pub fn new(cx: &ChainComplex, h: &HomologyResult, reference: Option<&[usize]>) -> Self {
        Self {
            level: cx.level,
            component: cx.component.clone(),
            generators: cx.generators.clone(),
            boundary: cx.triplets(),
            betti: h.betti.clone(),
            torsion: h.torsion.clone(),
            reference_match: compare_reference(h, reference),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gens(indices: &[usize]) -> Vec<Generator> {
        indices.iter().enumerate().map(|(id, &index)| Generator { id, index, action: id as f64 }).collect()
    }

    fn torus_cells() -> Vec<Generator> {
        // 0: minimum, 1–2: saddles, 3: maximum
        gens(&[0, 1, 1, 2])
    }

    #[test]
    fn circle_with_cancelling_orbits() {
        let cx = assemble_from_counts(1.0, "0", gens(&[0, 1]), &[(1, 0, 1), (1, 0, -1)], &[1, 1]).unwrap();
        assert_eq!(cx.boundary[1], vec![vec![0]]);
        let h = homology(&cx).unwrap();
        assert_eq!(h.betti, vec![1, 1]);
        assert!(h.torsion.iter().all(Vec::is_empty));
    }

    #[test]
    fn torus_cell_structure() {
        let inc = [(1, 0, 1), (1, 0, -1), (2, 0, 1), (2, 0, -1), (3, 1, 1), (3, 1, -1), (3, 2, 1), (3, 2, -1)];
        let cx = assemble_from_counts(1.0, "0", torus_cells(), &inc, &[1; 4]).unwrap();
        assert!(check_d_squared(&cx).ok);
        assert_eq!(homology(&cx).unwrap().betti, vec![1, 2, 1]);
    }

    #[test]
    fn real_projective_plane_has_two_torsion() {
        // cellular complex of RP²: ∂₁ = 0, ∂₂ = 2
        let cx = assemble_from_counts(0.0, "0", gens(&[0, 1, 2]), &[(2, 1, 1), (2, 1, 1)], &[1, 1, 1]).unwrap();
        let h = homology(&cx).unwrap();
        assert_eq!(h.betti, vec![1, 0, 0]);
        assert_eq!(h.torsion, vec![vec![], vec!["2".to_string()], vec![]]);
    }

    #[test]
    fn flipped_sign_breaks_d_squared() {
        // all signs +1: both paths from the maximum to the minimum add up
        let inc = [(1, 0, 1), (2, 0, 1), (3, 1, 1), (3, 2, 1)];
        let cx = assemble_from_counts(1.0, "0", torus_cells(), &inc, &[1; 4]).unwrap();
        let rep = check_d_squared(&cx);
        assert!(!rep.ok);
        assert_eq!(rep.defects, vec![(2, 0, 0, 2)]);
        assert_eq!(homology(&cx).unwrap_err().code(), "not-a-complex");
    }

    #[test]
    fn empty_orbit_list_gives_zero_maps() {
        let cx = assemble_from_counts(1.0, "0", torus_cells(), &[], &[1; 4]).unwrap();
        assert!(cx.triplets().is_empty());
        assert!(check_d_squared(&cx).ok);
        assert_eq!(homology(&cx).unwrap().betti, vec![1, 2, 1]);
        let single = assemble_from_counts(1.0, "0", gens(&[0, 0]), &[], &[1, 1]).unwrap();
        assert!(check_d_squared(&single).ok);
        assert_eq!(homology(&single).unwrap().betti, vec![2]);
    }

    #[test]
    fn dangling_and_wrong_degree_orbits_are_rejected() {
        assert_eq!(
            assemble_from_counts(1.0, "0", gens(&[0, 1]), &[(1, 5, 1)], &[1, 1]).unwrap_err().code(),
            "dangling-orbit"
        );
        assert!(assemble_from_counts(1.0, "0", gens(&[0, 2]), &[(1, 0, 1)], &[1, 1]).is_err());
    }

    #[test]
    fn reference_comparison() {
        let h = HomologyResult { betti: vec![1, 2, 1], torsion: vec![vec![]; 3] };
        assert_eq!(compare_reference(&h, Some(&[1, 2, 1])).status, ReferenceStatus::Match);
        let bad = compare_reference(&h, Some(&[1, 1]));
        assert_eq!(bad.status, ReferenceStatus::Mismatch);
        assert_eq!(bad.mismatched_degrees, vec![1, 2]);
        assert_eq!(compare_reference(&h, None).status, ReferenceStatus::NoReference);
    }

    #[test]
    fn smith_form_of_known_matrices() {
        let f = |m: IntMatrix| smith_invariants(&m).iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(f(vec![vec![2, 4, 4], vec![-6, 6, 12], vec![10, -4, -16]]), ["2", "6", "12"]);
        assert_eq!(f(vec![vec![0, 0], vec![0, 0]]), Vec::<String>::new());
        assert_eq!(f(vec![vec![6, 0], vec![0, 4]]), ["2", "12"]);
    }

    #[test]
    fn report_serializes_triplets() {
        let cx = assemble_from_counts(1.0, "contractible", gens(&[0, 1]), &[(1, 0, 1)], &[1, 1]).unwrap();
        let h = homology(&cx).unwrap();
        let rep = ComplexReport::new(&cx, &h, Some(&[0, 0]));
        let json = serde_json::to_value(&rep).unwrap();
        assert_eq!(json["boundary"], serde_json::json!([[1, 0, 1]]));
        assert_eq!(json["betti"], serde_json::json!([0, 0]));
        assert_eq!(json["reference_match"]["status"], "match");
    }

    /// Brute-force rank over ℚ by fraction-free elimination in i128.
    fn rational_rank(m: &IntMatrix) -> usize {
        let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
        let (rows, cols) = (a.len(), a.first().map_or(0, Vec::len));
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..rows).find(|&r| a[r][c] != 0) else { continue };
            a.swap(rank, p);
            for r in 0..rows {
                if r != rank && a[r][c] != 0 {
                    let (x, y) = (a[rank][c], a[r][c]);
                    for k in 0..cols {
                        a[r][k] = a[r][k] * x - a[rank][k] * y;
                    }
                    let g = a[r].iter().fold(0i128, |g, v| num_integer_gcd(g, v.abs()));
                    if g > 1 {
                        a[r].iter_mut().for_each(|v| *v /= g);
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn num_integer_gcd(a: i128, b: i128) -> i128 {
        if b == 0 {
            a
        } else {
            num_integer_gcd(b, a % b)
        }
    }

    proptest! {
        #[test]
        fn smith_rank_matches_rational_rank(m in proptest::collection::vec(proptest::collection::vec(-5i64..=5, 4), 3)) {
            prop_assert_eq!(smith_invariants(&m).len(), rational_rank(&m));
        }

        #[test]
        fn smith_factors_divide_each_other(m in proptest::collection::vec(proptest::collection::vec(-9i64..=9, 3), 3)) {
            let f = smith_invariants(&m);
            for w in f.windows(2) {
                prop_assert!((&w[1] % &w[0]).is_zero());
            }
        }

        #[test]
        fn homology_is_orientation_independent(flips in proptest::collection::vec(prop::bool::ANY, 4)) {
            let inc = [(1, 0, 1), (1, 0, -1), (2, 0, 1), (2, 0, -1), (3, 1, 1), (3, 1, -1), (3, 2, 1), (3, 2, -1)];
            let nu: Vec<i8> = flips.iter().map(|&f| if f { -1 } else { 1 }).collect();
            let signed: Vec<(usize, usize, i64)> =
                inc.iter().map(|&(s, t, v)| (s, t, v * (nu[s] * nu[t]) as i64)).collect();
            let cx = assemble_from_counts(1.0, "0", torus_cells(), &signed, &nu).unwrap();
            let h = homology(&cx).unwrap();
            prop_assert_eq!(h.betti.clone(), vec![1, 2, 1]);
            prop_assert_eq!(h.euler_characteristic(), cx.euler_characteristic());
        }
    }
}
