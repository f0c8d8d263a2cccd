//! Lamination upper envelope of the rank-one convex envelope.
//!
//! One level replaces each value by the best two-point split along a
//! rank-one lattice direction `v` through the point:
//! `R'(p) = min(R(p), min_{i,k >= 1} (k R(p + i v) + i R(p - k v)) / (i + k))`,
//! where both endpoints must lie on the lattice.

use super::cell::rank_one_directions;
use super::grid::{EnvelopeTable, PointDiagnostic, TableKind, XiGrid};
use crate::error::{Error, Result};
use crate::ext::Ext;

/// Default height of the integer vectors `a`, `b` in the directions `a (x) b`.
pub const DEFAULT_HEIGHT: i64 = 2;

/// Rank-one directions of `grid` as integer steps along its axes, primitive
/// and deduplicated up to sign.
pub fn lattice_directions(grid: &XiGrid, height: i64) -> Vec<Vec<i64>> {
    let shape = grid.shape;
    let mut axis_of = vec![None; shape.len()];
    for (j, a) in grid.axes.iter().enumerate() {
        if a.count > 1 {
            axis_of[a.entry] = Some(j);
        }
    }
    let mut out: Vec<Vec<i64>> = Vec::new();
    for (a, b) in rank_one_directions(shape.m, shape.d, height) {
        let mut v = vec![0i64; grid.dims()];
        let mut ok = true;
        for r in 0..shape.m {
            for c in 0..shape.d {
                let coef = a[r] * b[c];
                if coef == 0 {
                    continue;
                }
                match axis_of[r * shape.d + c] {
                    Some(j) => v[j] = coef,
                    None => ok = false,
                }
            }
        }
        if !ok || v.iter().all(|&c| c == 0) {
            continue;
        }
        let g = v.iter().fold(0i64, |g, &c| gcd(g, c));
        v.iter_mut().for_each(|c| *c /= g);
        if v.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0) {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        if is_rank_one(grid, &v) && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Whether the physical step `sum_j v_j h_j E_{entry_j}` is a rank-one matrix.
fn is_rank_one(grid: &XiGrid, v: &[i64]) -> bool {
    let (m, d) = (grid.shape.m, grid.shape.d);
    let mut mat = vec![0.0; m * d];
    for (a, &c) in grid.axes.iter().zip(v) {
        mat[a.entry] = c as f64 * a.step();
    }
    let scale = mat.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    for r1 in 0..m {
        for r2 in r1 + 1..m {
            for c1 in 0..d {
                for c2 in c1 + 1..d {
                    let minor = mat[r1 * d + c1] * mat[r2 * d + c2] - mat[r1 * d + c2] * mat[r2 * d + c1];
                    if minor.abs() > 1e-12 * scale * scale {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Applies up to `levels` splitting levels, stopping early at a fixpoint.
pub fn lamination_envelope(table: &EnvelopeTable, levels: usize) -> Result<EnvelopeTable> {
    lamination_envelope_with(table, levels, DEFAULT_HEIGHT)
}

pub fn lamination_envelope_with(table: &EnvelopeTable, levels: usize, height: i64) -> Result<EnvelopeTable> {
    if levels == 0 {
        return Err(Error::Config("lamination needs at least one level".into()));
    }
    let grid = &table.grid;
    let dirs = lattice_directions(grid, height);
    let mut current = table.values.clone();
    let mut delta = vec![0.0; current.len()];
    let mut used = 0;
    let mut fixpoint = false;
    while used < levels {
        let next = one_level(grid, &current, &dirs);
        used += 1;
        let mut changed = false;
        for (k, (a, b)) in next.iter().zip(&current).enumerate() {
            delta[k] = match (a, b) {
                (Ext::Fin(x), Ext::Fin(y)) => (y - x).abs(),
                (Ext::Inf, Ext::Inf) => 0.0,
                _ => f64::INFINITY,
            };
            changed |= delta[k] > 1e-14 * (1.0 + a.to_f64().abs().min(1e300));
        }
        current = next;
        if !changed {
            fixpoint = true;
            break;
        }
    }
    let status = if fixpoint { "fixpoint" } else { "level-cap" };
    let diagnostics = delta.into_iter().map(|delta| PointDiagnostic { status: status.into(), delta }).collect();
    table.with_values(TableKind::Lamination { levels: used }, current, diagnostics)
}

fn one_level(grid: &XiGrid, values: &[Ext], dirs: &[Vec<i64>]) -> Vec<Ext> {
    let counts: Vec<i64> = grid.counts().iter().map(|&c| c as i64).collect();
    let strides: Vec<i64> = grid.strides().iter().map(|&s| s as i64).collect();
    let mut out = values.to_vec();
    let mut fwd: Vec<f64> = Vec::new();
    let mut bwd: Vec<f64> = Vec::new();
    for (flat, slot) in out.iter_mut().enumerate() {
        let idx: Vec<i64> = grid.multi_index(flat).into_iter().map(|i| i as i64).collect();
        let mut best = slot.to_f64();
        for v in dirs {
            // Number of lattice steps available forward and backward.
            let reach = |sign: i64| -> i64 {
                let mut r = i64::MAX;
                for j in 0..v.len() {
                    let c = sign * v[j];
                    if c > 0 {
                        r = r.min((counts[j] - 1 - idx[j]) / c);
                    } else if c < 0 {
                        r = r.min(idx[j] / -c);
                    }
                }
                r
            };
            let (nf, nb) = (reach(1), reach(-1));
            if nf == 0 || nb == 0 {
                continue;
            }
            let step: i64 = v.iter().zip(&strides).map(|(c, s)| c * s).sum();
            fwd.clear();
            bwd.clear();
            fwd.extend((1..=nf).map(|i| values[(flat as i64 + i * step) as usize].to_f64()));
            bwd.extend((1..=nb).map(|k| values[(flat as i64 - k * step) as usize].to_f64()));
            for (i, &fi) in fwd.iter().enumerate() {
                if !fi.is_finite() {
                    continue;
                }
                let i = (i + 1) as f64;
                for (k, &bk) in bwd.iter().enumerate() {
                    if !bk.is_finite() {
                        continue;
                    }
                    let k = (k + 1) as f64;
                    let cand = (k * fi + i * bk) / (i + k);
                    if cand < best {
                        best = cand;
                    }
                }
            }
        }
        *slot = Ext::from_f64(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::convex::convex_envelope;
    use crate::envelopes::grid::GridAxis;
    use crate::integrand::{AxisBox, DomainSpec, Formula, Integrand, MatrixShape};

    fn raw(shape: MatrixShape, formula: Formula, grid: XiGrid) -> EnvelopeTable {
        let f = Integrand::new("t", shape, AxisBox::unit(shape.d), DomainSpec::FullSpace, formula).unwrap();
        EnvelopeTable::raw(&f, &vec![0.5; shape.d], grid).unwrap()
    }

    #[test]
    fn scalar_lamination_matches_convexification() {
        let shape = MatrixShape::new(1, 1).unwrap();
        let t = raw(shape, Formula::DoubleWell, XiGrid::full(shape, -2.0, 2.0, 401).unwrap());
        let lam = lamination_envelope(&t, 4).unwrap();
        let conv = convex_envelope(&t).unwrap();
        let worst =
            lam.values.iter().zip(&conv.values).map(|(a, b)| (a.to_f64() - b.to_f64()).abs()).fold(0.0, f64::max);
        assert!(worst < 5e-3, "{worst}");
        assert_eq!(lam.kind, TableKind::Lamination { levels: 2 });
    }

    #[test]
    fn convex_input_is_a_fixpoint_at_level_one() {
        let shape = MatrixShape::new(1, 2).unwrap();
        let t = raw(shape, Formula::Quadratic, XiGrid::full(shape, -1.0, 1.0, 9).unwrap());
        let lam = lamination_envelope(&t, 3).unwrap();
        assert_eq!(lam.kind, TableKind::Lamination { levels: 1 });
        for (a, b) in lam.values.iter().zip(&t.values) {
            assert!((a.to_f64() - b.to_f64()).abs() < 1e-12);
        }
    }

    #[test]
    fn levels_are_monotone() {
        let shape = MatrixShape::new(1, 2).unwrap();
        let t = raw(shape, Formula::DoubleWell, XiGrid::full(shape, -2.0, 2.0, 17).unwrap());
        let mut prev = t.clone();
        for k in 1..=3 {
            let next = lamination_envelope(&t, k).unwrap();
            assert!(next.values.iter().zip(&prev.values).all(|(a, b)| a <= b));
            prev = next;
        }
    }

    #[test]
    fn vectorial_slice_uses_only_rank_one_steps() {
        let shape = MatrixShape::new(2, 2).unwrap();
        let axes = vec![
            GridAxis { entry: 0, lo: -1.0, hi: 1.0, count: 5 },
            GridAxis { entry: 3, lo: -1.0, hi: 1.0, count: 5 },
        ];
        let grid = XiGrid::slice(shape, vec![0.0; 4], axes).unwrap();
        let mut dirs = lattice_directions(&grid, 2);
        dirs.sort();
        assert_eq!(dirs, vec![vec![0, 1], vec![1, 0]]);
        let full = XiGrid::full(shape, -1.0, 1.0, 3).unwrap();
        for v in lattice_directions(&full, 1) {
            let det_free = v[0] * v[3] - v[1] * v[2];
            assert_eq!(det_free, 0, "{v:?}");
        }
    }
}
