//! Vertex enumeration for the small polytopes that determine one-step risk
//! measures. Everything here lives inside the probability simplex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{self, LpOptions, LpProblem};

const VERTEX_TOL: f64 = 1e-10;
const MAX_BASES: u128 = 20_000_000;

/// Vertices of `{q : 0 ≤ q_j ≤ cap_j, Σ q_j = 1}`.
///
/// At a vertex every coordinate but at most one sits at a bound, so it is
/// enough to pick the free coordinate and the subset of the others held at
/// their cap.
pub fn box_simplex_vertices(caps: &[f64]) -> Vec<Vec<f64>> {
    let m = caps.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for free in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != free).collect();
        for mask in 0u32..(1u32 << others.len()) {
            let mut q = vec![0.0; m];
            let mut used = 0.0;
            for (b, &j) in others.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    q[j] = caps[j];
                    used += caps[j];
                }
            }
            let rest = 1.0 - used;
            if rest < -VERTEX_TOL || rest > caps[free] + VERTEX_TOL {
                continue;
            }
            q[free] = rest.clamp(0.0, caps[free]);
            push_unique(&mut out, q);
        }
    }
    out
}

/// Vertices of `{q : Σ q_j = 1, a·q ≥ b for every (a, b) in rows}` by
/// exhaustive enumeration of active-constraint bases. `rows` must make the
/// set bounded (include `q ≥ 0`).
pub fn basis_enumeration(rows: &[(Vec<f64>, f64)], m: usize) -> Result<Vec<Vec<f64>>> {
    if m == 1 {
        let q = vec![1.0];
        let ok = rows.iter().all(|(a, b)| a[0] >= b - VERTEX_TOL);
        return Ok(if ok { vec![q] } else { Vec::new() });
    }
    let k = m - 1;
    let count = binomial(rows.len() as u128, k as u128);
    if count > MAX_BASES {
        return Err(Error::InvalidSpec(format!(
            "{count} constraint bases exceed the enumeration limit"
        )));
    }
    let mut out = Vec::new();
    if k > rows.len() {
        return Ok(out);
    }
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for j in 0..m {
            a[(0, j)] = 1.0;
        }
        b[0] = 1.0;
        for (r, &i) in combo.iter().enumerate() {
            for j in 0..m {
                a[(r + 1, j)] = rows[i].0[j];
            }
            b[r + 1] = rows[i].1;
        }
        if let Some(q) = a.lu().solve(&b) {
            let q: Vec<f64> = q.iter().copied().collect();
            let finite = q.iter().all(|x| x.is_finite());
            let feasible = finite
                && rows.iter().all(|(a, b)| {
                    let lhs: f64 = a.iter().zip(&q).map(|(x, y)| x * y).sum();
                    lhs >= b - VERTEX_TOL * (1.0 + b.abs())
                });
            if feasible {
                let q = q.into_iter().map(|x| if x.abs() < VERTEX_TOL { 0.0 } else { x }).collect();
                push_unique(&mut out, q);
            }
        }
        if !next_combination(&mut combo, rows.len()) {
            return Ok(out);
        }
    }
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Drops duplicates and points lying in the convex hull of the others.
pub fn hull_vertices(points: &[Vec<f64>], options: &LpOptions) -> Result<Vec<Vec<f64>>> {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in points {
        push_unique(&mut kept, p.clone());
    }
    let mut i = 0;
    while i < kept.len() {
        let others: Vec<&Vec<f64>> = kept
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| v)
            .collect();
        if !others.is_empty() && in_hull(&kept[i], &others, options)? {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(kept)
}

fn in_hull(p: &[f64], others: &[&Vec<f64>], options: &LpOptions) -> Result<bool> {
    let k = others.len();
    let mut lp = LpProblem::new(k);
    lp.add_eq(vec![1.0; k], 1.0);
    for j in 0..p.len() {
        lp.add_eq(others.iter().map(|v| v[j]).collect(), p[j]);
    }
    Ok(lp::solve(&lp, options)?.solution().is_some())
}

pub(crate) fn push_unique(out: &mut Vec<Vec<f64>>, q: Vec<f64>) {
    let dup = out
        .iter()
        .any(|v| v.iter().zip(&q).all(|(a, b)| (a - b).abs() <= VERTEX_TOL));
    if !dup {
        out.push(q);
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    fn box_rows(caps: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let m = caps.len();
        let mut rows = Vec::new();
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            rows.push((e.clone(), 0.0));
            e[j] = -1.0;
            rows.push((e, -caps[j]));
        }
        rows
    }

    #[test]
    fn binomial_cvar_box() {
        let caps = [0.5 / 0.75, 0.5 / 0.75];
        let v = sorted(box_simplex_vertices(&caps));
        assert_eq!(v.len(), 2);
        assert!((v[0][0] - 1.0 / 3.0).abs() < 1e-12 && (v[0][1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((v[1][0] - 2.0 / 3.0).abs() < 1e-12 && (v[1][1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn trinomial_cvar_box_matches_basis_enumeration() {
        let cap = (1.0 / 3.0) / 0.9;
        let caps = [cap; 3];
        let fast = sorted(box_simplex_vertices(&caps));
        let slow = sorted(basis_enumeration(&box_rows(&caps), 3).unwrap());
        assert_eq!(fast.len(), 3);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        // permutations of (10/27, 10/27, 7/27)
        for v in &fast {
            let mut s = v.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!((s[0] - 7.0 / 27.0).abs() < 1e-12);
            assert!((s[2] - 10.0 / 27.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_caps_give_simplex_vertices() {
        let v = sorted(box_simplex_vertices(&[1.0, 1.0, 1.0]));
        assert_eq!(v, vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
    }

    #[test]
    fn exact_caps_give_single_point() {
        let p = [0.2, 0.3, 0.5];
        let v = box_simplex_vertices(&p);
        assert_eq!(v.len(), 1);
        for (a, b) in v[0].iter().zip(&p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hull_pruning_drops_interior_points() {
        let pts = vec![
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let v = hull_vertices(&pts, &LpOptions::default()).unwrap();
        assert_eq!(sorted(v), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    proptest::proptest! {
        #[test]
        fn box_enumerators_agree(raw in proptest::collection::vec(0.05f64..1.0, 2..6), alpha in 0.2f64..1.0) {
            let total: f64 = raw.iter().sum();
            let caps: Vec<f64> = raw.iter().map(|x| x / total / alpha).collect();
            let fast = sorted(box_simplex_vertices(&caps));
            let slow = sorted(basis_enumeration(&box_rows(&caps), caps.len()).unwrap());
            proptest::prop_assert_eq!(fast.len(), slow.len());
            for a in &fast {
                let near = slow.iter().any(|b| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9));
                proptest::prop_assert!(near, "{:?} not in {:?}", a, slow);
            }
        }
    }
}
