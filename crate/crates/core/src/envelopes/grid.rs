//! Uniform lattices in matrix space and tabulated envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::ext::{f64_ext, Ext};
use crate::integrand::{MatrixShape, PointwiseEnergy};
use crate::mesh::csv_err;

/// One lattice axis: matrix entry `entry` (row-major index) sampled at
/// `count` equispaced values in `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub entry: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.hi - self.lo) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }
}

/// A lattice `base + sum_j c_j E_{entry_j}` over an axis-aligned box of
/// (some of) the matrix entries; entries without an axis stay at `base`.
/// Points are enumerated lexicographically with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiGrid {
    pub shape: MatrixShape,
    pub base: Vec<f64>,
    pub axes: Vec<GridAxis>,
}

impl XiGrid {
    /// Every entry ranges over `[lo, hi]` with `count` points.
    pub fn full(shape: MatrixShape, lo: f64, hi: f64, count: usize) -> Result<Self> {
        let axes = (0..shape.len()).map(|entry| GridAxis { entry, lo, hi, count }).collect();
        XiGrid::slice(shape, vec![0.0; shape.len()], axes)
    }

    pub fn slice(shape: MatrixShape, base: Vec<f64>, axes: Vec<GridAxis>) -> Result<Self> {
        check_len(shape.len(), base.len())?;
        if axes.is_empty() {
            return Err(Error::Config("grid needs at least one axis".into()));
        }
        let mut seen = vec![false; shape.len()];
        for a in &axes {
            if a.entry >= shape.len() || seen[a.entry] {
                return Err(Error::Config(format!("grid axis entry {} is out of range or repeated", a.entry)));
            }
            seen[a.entry] = true;
            let ok =
                a.count >= 1 && a.lo.is_finite() && a.hi.is_finite() && (a.hi > a.lo || (a.count == 1 && a.hi == a.lo));
            if !ok {
                return Err(Error::Config(format!("invalid grid axis {a:?}")));
            }
        }
        Ok(XiGrid { shape, base, axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for (slot, a) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = flat % a.count;
            flat /= a.count;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.count + i)
    }

    /// Row-major stride of each axis in the flat enumeration.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims()];
        for j in (0..self.dims().saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.axes[j + 1].count;
        }
        s
    }

    /// The matrix at a multi-index.
    pub fn point_at(&self, idx: &[usize]) -> Vec<f64> {
        let mut xi = self.base.clone();
        for (a, &i) in self.axes.iter().zip(idx) {
            xi[a.entry] = a.value(i);
        }
        xi
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.point_at(&self.multi_index(flat))
    }

    /// The same box with `factor - 1` extra points between neighbours on
    /// every axis; the original points keep multi-index `factor * idx`.
    pub fn refined(&self, factor: usize) -> Result<XiGrid> {
        if factor == 0 {
            return Err(Error::Config("refinement factor must be positive".into()));
        }
        let axes = self.axes.iter().map(|a| GridAxis { count: (a.count - 1) * factor + 1, ..a.clone() }).collect();
        XiGrid::slice(self.shape, self.base.clone(), axes)
    }

    /// Cell and multilinear weights of `xi`, or `None` when `xi` is off the
    /// slice or outside the lattice box.
    fn locate(&self, xi: &[f64]) -> Option<Vec<(usize, f64, f64)>> {
        if xi.len() != self.shape.len() {
            return None;
        }
        let mut on_axis = vec![false; xi.len()];
        let mut out = Vec::with_capacity(self.dims());
        for a in &self.axes {
            on_axis[a.entry] = true;
            let v = xi[a.entry];
            let slack = 1e-12 * (1.0 + a.lo.abs().max(a.hi.abs()));
            if v < a.lo - slack || v > a.hi + slack {
                return None;
            }
            if a.count == 1 {
                out.push((0, 0.0, 0.0));
                continue;
            }
            let r = ((v - a.lo) / a.step()).clamp(0.0, (a.count - 1) as f64);
            let i = (r.floor() as usize).min(a.count - 2);
            out.push((i, r - i as f64, a.step()));
        }
        let off_slice = xi
            .iter()
            .zip(&self.base)
            .zip(&on_axis)
            .any(|((v, b), &axis)| !axis && (v - b).abs() > 1e-12 * (1.0 + b.abs()));
        if off_slice {
            return None;
        }
        Some(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TableKind {
    Raw,
    Convex,
    Lamination { levels: usize },
    Quasiconvex { eps: Vec<f64>, n: Vec<usize> },
    Zhat { t_seq: Vec<f64> },
}

impl TableKind {
    pub fn label(&self) -> &'static str {
        match self {
            TableKind::Raw => "raw",
            TableKind::Convex => "convex",
            TableKind::Lamination { .. } => "lamination",
            TableKind::Quasiconvex { .. } => "quasiconvex",
            TableKind::Zhat { .. } => "zhat",
        }
    }
}

/// Per-point solver evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostic {
    pub status: String,
    /// Difference between the last two iterates of the envelope sequence
    /// at this point (`0` for closed-form entries).
    #[serde(with = "f64_ext")]
    pub delta: f64,
}

impl PointDiagnostic {
    pub fn exact() -> Self {
        PointDiagnostic { status: "exact".into(), delta: 0.0 }
    }
}

/// Envelope values at the points of an [`XiGrid`], for a fixed `x`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub grid: XiGrid,
    pub x: Vec<f64>,
    pub kind: TableKind,
    pub values: Vec<Ext>,
    pub diagnostics: Vec<PointDiagnostic>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableMeta<'a> {
    pub kind: &'a TableKind,
    pub grid: &'a XiGrid,
    pub x: &'a [f64],
    pub points: usize,
    pub finite_points: usize,
    #[serde(with = "f64_ext")]
    pub max_delta: f64,
}

impl EnvelopeTable {
    /// `e(x, .)` sampled on the grid.
    pub fn raw<E: PointwiseEnergy + ?Sized>(e: &E, x: &[f64], grid: XiGrid) -> Result<Self> {
        if e.shape() != grid.shape {
            return Err(Error::Shape { expected: e.shape().len(), got: grid.shape.len() });
        }
        let values = (0..grid.len()).map(|i| e.eval(x, &grid.point(i))).collect();
        let diagnostics = vec![PointDiagnostic::exact(); grid.len()];
        Ok(EnvelopeTable { grid, x: x.to_vec(), kind: TableKind::Raw, values, diagnostics })
    }

    pub fn with_values(&self, kind: TableKind, values: Vec<Ext>, diagnostics: Vec<PointDiagnostic>) -> Result<Self> {
        check_len(self.grid.len(), values.len())?;
        check_len(self.grid.len(), diagnostics.len())?;
        Ok(EnvelopeTable { grid: self.grid.clone(), x: self.x.clone(), kind, values, diagnostics })
    }

    /// The entries of a table on `coarse.refined(factor)` at the points of
    /// `coarse`.
    pub fn subsample(&self, coarse: &XiGrid, factor: usize) -> Result<EnvelopeTable> {
        if self.grid != coarse.refined(factor)? {
            return Err(Error::Config("table grid is not the requested refinement".into()));
        }
        let picks: Vec<usize> = (0..coarse.len())
            .map(|k| self.grid.flat_index(&coarse.multi_index(k).into_iter().map(|i| i * factor).collect::<Vec<_>>()))
            .collect();
        Ok(EnvelopeTable {
            grid: coarse.clone(),
            x: self.x.clone(),
            kind: self.kind.clone(),
            values: picks.iter().map(|&i| self.values[i]).collect(),
            diagnostics: picks.iter().map(|&i| self.diagnostics[i].clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multilinear interpolation; `+inf` when any corner is infinite or the
    /// point is off the lattice.
    pub fn interpolate(&self, xi: &[f64]) -> Ext {
        let Some(cells) = self.grid.locate(xi) else { return Ext::Inf };
        let strides = self.grid.strides();
        let base: usize = cells.iter().zip(&strides).map(|((i, _, _), s)| i * s).sum();
        let active: Vec<usize> = (0..cells.len()).filter(|&j| cells[j].2 > 0.0).collect();
        let mut total = 0.0;
        for corner in 0..(1usize << active.len()) {
            let mut w = 1.0;
            let mut idx = base;
            for (bit, &j) in active.iter().enumerate() {
                let frac = cells[j].1;
                if corner >> bit & 1 == 1 {
                    w *= frac;
                    idx += strides[j];
                } else {
                    w *= 1.0 - frac;
                }
            }
            match self.values[idx] {
                Ext::Inf => return Ext::Inf,
                Ext::Fin(v) => total += w * v,
            }
        }
        Ext::Fin(total)
    }

    pub fn max_delta(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.delta).fold(0.0, f64::max)
    }

    pub fn meta(&self) -> TableMeta<'_> {
        TableMeta {
            kind: &self.kind,
            grid: &self.grid,
            x: &self.x,
            points: self.len(),
            finite_points: self.values.iter().filter(|v| v.is_finite()).count(),
            max_delta: self.max_delta(),
        }
    }

    /// Rows `xi_<entry>.., value, status, delta` with a header; infinite
    /// values are written as `inf`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.grid.shape.d;
        let mut header: Vec<String> =
            self.grid.axes.iter().map(|a| format!("xi_{}{}", a.entry / d, a.entry % d)).collect();
        header.extend(["value", "status", "delta"].map(String::from));
        wr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let idx = self.grid.multi_index(i);
            let mut row: Vec<String> = self.grid.axes.iter().zip(&idx).map(|(a, &k)| a.value(k).to_string()).collect();
            row.push(self.values[i].to_string());
            row.push(self.diagnostics[i].status.clone());
            row.push(self.diagnostics[i].delta.to_string());
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl PointwiseEnergy for EnvelopeTable {
    fn shape(&self) -> MatrixShape {
        self.grid.shape
    }

    fn eval(&self, _x: &[f64], xi: &[f64]) -> Ext {
        self.interpolate(xi)
    }

    fn x_independent(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{AxisBox, DomainSpec, Formula, Integrand};

    #[test]
    fn enumeration_round_trip() {
        let g = XiGrid::full(MatrixShape::new(1, 2).unwrap(), -1.0, 1.0, 5).unwrap();
        assert_eq!(g.len(), 25);
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.point(0), vec![-1.0, -1.0]);
        assert_eq!(g.point(24), vec![1.0, 1.0]);
        assert_eq!(g.point(1), vec![-1.0, -0.5]);
    }

    #[test]
    fn interpolation_reproduces_bilinear_data() {
        let shape = MatrixShape::new(1, 2).unwrap();
        let g = XiGrid::full(shape, -1.0, 1.0, 3).unwrap();
        let f = |p: &[f64]| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        let values = (0..g.len()).map(|i| Ext::Fin(f(&g.point(i)))).collect();
        let t = EnvelopeTable {
            grid: g.clone(),
            x: vec![0.0; 2],
            kind: TableKind::Raw,
            values,
            diagnostics: vec![PointDiagnostic::exact(); 9],
        };
        for p in [[0.3, -0.7], [-1.0, 1.0], [0.999, 0.001]] {
            assert!((t.interpolate(&p).to_f64() - f(&p)).abs() < 1e-12);
        }
        assert_eq!(t.interpolate(&[1.5, 0.0]), Ext::Inf);
    }

    #[test]
    fn slices_reject_off_slice_points() {
        let shape = MatrixShape::new(2, 2).unwrap();
        let axes = vec![
            GridAxis { entry: 0, lo: -1.0, hi: 1.0, count: 5 },
            GridAxis { entry: 3, lo: -1.0, hi: 1.0, count: 5 },
        ];
        let g = XiGrid::slice(shape, vec![0.0; 4], axes).unwrap();
        let f = Integrand::new("q", shape, AxisBox::unit(2), DomainSpec::FullSpace, Formula::Quadratic).unwrap();
        let t = EnvelopeTable::raw(&f, &[0.5, 0.5], g).unwrap();
        assert_eq!(t.interpolate(&[0.5, 0.0, 0.0, 0.5]), Ext::Fin(0.5));
        assert_eq!(t.interpolate(&[0.5, 0.1, 0.0, 0.5]), Ext::Inf);
    }

    #[test]
    fn infinite_corner_propagates() {
        let shape = MatrixShape::new(1, 1).unwrap();
        let f = Integrand::new(
            "b",
            shape,
            AxisBox::unit(1),
            DomainSpec::CenteredBox { halfwidth: 1.0 },
            Formula::Quadratic,
        )
        .unwrap();
        let t = EnvelopeTable::raw(&f, &[0.5], XiGrid::full(shape, -2.0, 2.0, 5).unwrap()).unwrap();
        assert_eq!(t.interpolate(&[0.5]), Ext::Fin(0.5));
        assert_eq!(t.interpolate(&[1.5]), Ext::Inf);
    }

    #[test]
    fn subsample_inverts_refinement() {
        let shape = MatrixShape::new(1, 2).unwrap();
        let coarse = XiGrid::full(shape, -1.0, 1.0, 3).unwrap();
        let fine = coarse.refined(4).unwrap();
        assert_eq!(fine.len(), 81);
        let f = Integrand::new("q", shape, AxisBox::unit(2), DomainSpec::FullSpace, Formula::Quadratic).unwrap();
        let t = EnvelopeTable::raw(&f, &[0.5, 0.5], fine).unwrap();
        let s = t.subsample(&coarse, 4).unwrap();
        let direct = EnvelopeTable::raw(&f, &[0.5, 0.5], coarse.clone()).unwrap();
        assert_eq!(s.values, direct.values);
        assert!(t.subsample(&coarse, 2).is_err());
        assert!(coarse.refined(0).is_err());
    }
}
