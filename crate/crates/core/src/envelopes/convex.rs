//! Discrete convex envelopes `f**` on lattices.
//!
//! With one non-degenerate axis the envelope is the exact lower convex hull
//! of the finite samples. With several axes it is the biconjugate computed by
//! separable discrete Legendre–Fenchel transforms, with the dual slopes
//! along each axis taken from the difference quotients of the input along
//! that axis (subsampled when the dual grid would get too large). Every
//! dual slope contributes an exact affine minorant, so the result is convex
//! and never exceeds the input.

use super::grid::{EnvelopeTable, PointDiagnostic, TableKind};
use crate::error::{Error, Result};
use crate::ext::Ext;

/// Upper bound on the number of dual grid points.
const DUAL_POINTS_CAP: usize = 1 << 20;

/// Lower convex hull of `(x, y)` points sorted by `x` (Andrew's chain).
pub fn lower_hull(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Evaluates a lower hull (as returned by [`lower_hull`]) at `x` inside its range.
pub fn eval_hull(hull: &[(f64, f64)], x: f64) -> Option<f64> {
    let (first, last) = (hull.first()?, hull.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    if hull.len() == 1 {
        return Some(first.1);
    }
    let k = hull.partition_point(|p| p.0 < x).clamp(1, hull.len() - 1);
    let (p, q) = (hull[k - 1], hull[k]);
    let lam = (x - p.0) / (q.0 - p.0);
    Some(p.1 + lam * (q.1 - p.1))
}

/// `out[.., b, ..] = max_a (to[b] * from[a] + input[.., a, ..])` along one
/// axis of a row-major array with the given extents.
fn sup_transform(input: &[f64], extents: &[usize], axis: usize, from: &[f64], to: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let outer: usize = extents[..axis].iter().product();
    let inner: usize = extents[axis + 1..].iter().product();
    let (na, nb) = (from.len(), to.len());
    let mut out = vec![f64::NEG_INFINITY; outer * nb * inner];
    for o in 0..outer {
        for i in 0..inner {
            for (b, &tb) in to.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for (a, &fa) in from.iter().enumerate() {
                    let v = input[(o * na + a) * inner + i];
                    if v > f64::NEG_INFINITY {
                        best = best.max(tb * fa + v);
                    }
                }
                out[(o * nb + b) * inner + i] = best;
            }
        }
    }
    let mut ext = extents.to_vec();
    ext[axis] = nb;
    (out, ext)
}

fn subsample(sorted: Vec<f64>, cap: usize) -> Vec<f64> {
    if sorted.len() <= cap || cap < 2 {
        return sorted;
    }
    (0..cap).map(|i| sorted[i * (sorted.len() - 1) / (cap - 1)]).collect()
}

/// Convex envelope of a tabulated function. Points where the input is
/// `+inf` stay `+inf`, which is exact for convex effective domains.
pub fn convex_envelope(table: &EnvelopeTable) -> Result<EnvelopeTable> {
    if table.values.iter().all(|v| v.is_inf()) {
        return Err(Error::Degenerate("convex envelope of an everywhere-infinite table".into()));
    }
    let grid = &table.grid;
    let active: Vec<usize> = (0..grid.dims()).filter(|&j| grid.axes[j].count > 1).collect();
    let values =
        if active.len() <= 1 { hull_1d(table, active.first().copied()) } else { legendre_biconjugate(table, &active) };
    // The envelope lies between the table minimum and the table itself;
    // clamping removes round-off of the dual transforms.
    let floor = table.values.iter().filter_map(|v| v.finite()).fold(f64::INFINITY, f64::min);
    let values: Vec<Ext> = values
        .into_iter()
        .zip(&table.values)
        .map(|(v, &orig)| match orig {
            Ext::Inf => Ext::Inf,
            Ext::Fin(o) => Ext::Fin(v.max(floor).min(o)),
        })
        .collect();
    let diagnostics = vec![PointDiagnostic::exact(); values.len()];
    table.with_values(TableKind::Convex, values, diagnostics)
}

fn hull_1d(table: &EnvelopeTable, axis: Option<usize>) -> Vec<f64> {
    let Some(axis) = axis else {
        return table.values.iter().map(|v| v.to_f64()).collect();
    };
    let a = &table.grid.axes[axis];
    let pts: Vec<(f64, f64)> = (0..a.count).filter_map(|i| table.values[i].finite().map(|v| (a.value(i), v))).collect();
    let hull = lower_hull(&pts);
    (0..a.count).map(|i| eval_hull(&hull, a.value(i)).unwrap_or(f64::INFINITY)).collect()
}

fn legendre_biconjugate(table: &EnvelopeTable, active: &[usize]) -> Vec<f64> {
    let grid = &table.grid;
    let counts = grid.counts();
    let strides = grid.strides();
    let cap = (DUAL_POINTS_CAP as f64).powf(1.0 / active.len() as f64).floor().max(2.0) as usize;
    let coords: Vec<Vec<f64>> = grid.axes.iter().map(|a| (0..a.count).map(|i| a.value(i)).collect()).collect();
    let mut slopes: Vec<Vec<f64>> = Vec::with_capacity(active.len());
    for &j in active {
        let mut s = Vec::new();
        for flat in 0..grid.len() {
            let idx = grid.multi_index(flat);
            if idx[j] != 0 {
                continue;
            }
            let line: Vec<(f64, f64)> = (0..counts[j])
                .filter_map(|k| table.values[flat + k * strides[j]].finite().map(|v| (coords[j][k], v)))
                .collect();
            for p in 0..line.len() {
                for q in p + 1..line.len() {
                    s.push((line[q].1 - line[p].1) / (line[q].0 - line[p].0));
                }
            }
        }
        s.push(0.0);
        s.sort_by(f64::total_cmp);
        s.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + b.abs()));
        slopes.push(subsample(s, cap));
    }
    // Conjugate: f*(s) = max_xi (s . xi - f(xi)).
    let mut arr: Vec<f64> = table.values.iter().map(|v| -v.to_f64()).collect();
    let mut ext = counts.clone();
    for (k, &j) in active.iter().enumerate() {
        (arr, ext) = sup_transform(&arr, &ext, j, &coords[j], &slopes[k]);
    }
    // Biconjugate: f**(xi) = max_s (s . xi - f*(s)).
    arr.iter_mut().for_each(|v| *v = -*v);
    for (k, &j) in active.iter().enumerate() {
        (arr, ext) = sup_transform(&arr, &ext, j, &slopes[k], &coords[j]);
    }
    debug_assert_eq!(ext, counts);
    arr
}

/// Largest relative midpoint defect `(2 v(p) - v(p-w) - v(p+w)) / (1 + |v(p)|)`
/// over lattice directions `w` with entries in `{-1, 0, 1}` and finite triples.
pub fn convexity_defect(table: &EnvelopeTable) -> f64 {
    let grid = &table.grid;
    let dims = grid.dims();
    let counts = grid.counts();
    let mut dirs: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..dims {
        dirs = dirs.into_iter().flat_map(|v| (-1..=1).map(move |c| [v.clone(), vec![c]].concat())).collect();
    }
    dirs.retain(|v| v.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0));
    let mut worst = f64::NEG_INFINITY;
    for flat in 0..grid.len() {
        let Ext::Fin(mid) = table.values[flat] else { continue };
        let idx = grid.multi_index(flat);
        for w in &dirs {
            let shift = |sign: i64| -> Option<usize> {
                let mut k = Vec::with_capacity(dims);
                for j in 0..dims {
                    let v = idx[j] as i64 + sign * w[j];
                    if v < 0 || v >= counts[j] as i64 {
                        return None;
                    }
                    k.push(v as usize);
                }
                Some(grid.flat_index(&k))
            };
            let (Some(a), Some(b)) = (shift(-1), shift(1)) else { continue };
            if let (Ext::Fin(va), Ext::Fin(vb)) = (table.values[a], table.values[b]) {
                worst = worst.max((2.0 * mid - va - vb) / (1.0 + mid.abs()));
            }
        }
    }
    worst
}
