//! Axis cubes, Kuhn simplicial meshes and piecewise-affine vector fields.
//!
//! Every lattice cell of a [`CubeMesh`] is split into `d!` simplices, one per
//! permutation `sigma` of the axes: the simplex walks from the cell corner
//! `v_0` through `v_{i+1} = v_i + h e_{sigma(i)}`. Along that walk the
//! gradient of a P1 field is a plain difference quotient,
//! `grad u[a][sigma(i)] = (u_a(v_{i+1}) - u_a(v_i)) / h`, and all simplices
//! have the same volume `h^d / d!`. The triangulation is invariant under
//! lattice translations and nests under refinement by two, so P1 fields
//! prolongate exactly onto dyadically refined meshes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::ext::Ext;
use crate::integrand::{frobenius, AxisBox, PointwiseEnergy};

/// Relative tolerance for lattice alignment tests.
const ALIGN_RTOL: f64 = 1e-9;

/// Open axis cube `center + ]-h, h[^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeSpec {
    pub center: Vec<f64>,
    pub halfwidth: f64,
}

impl CubeSpec {
    pub fn new(center: Vec<f64>, halfwidth: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Config("cube needs at least one dimension".into()));
        }
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(Error::Config(format!("cube halfwidth must be positive, got {halfwidth}")));
        }
        Ok(CubeSpec { center, halfwidth })
    }

    /// The unit cell `]0,1[^d`.
    pub fn unit(d: usize) -> Self {
        CubeSpec { center: vec![0.5; d], halfwidth: 0.5 }
    }

    /// Cube with lower corner `corner` and side length `side`.
    pub fn from_corner(corner: &[f64], side: f64) -> Result<Self> {
        CubeSpec::new(corner.iter().map(|c| c + side / 2.0).collect(), side / 2.0)
    }

    /// `Q_eps(x) = x + eps ]0,1[^d`.
    pub fn cell_at(x: &[f64], eps: f64) -> Result<Self> {
        CubeSpec::from_corner(x, eps)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn side(&self) -> f64 {
        2.0 * self.halfwidth
    }

    pub fn corner(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.halfwidth).collect()
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    pub fn diam(&self) -> f64 {
        self.side() * (self.dim() as f64).sqrt()
    }

    pub fn as_box(&self) -> AxisBox {
        AxisBox { lo: self.corner(), hi: self.center.iter().map(|c| c + self.halfwidth).collect() }
    }

    /// Closed-cube membership with a small relative slack.
    pub fn contains_point(&self, p: &[f64]) -> bool {
        let slack = ALIGN_RTOL * self.halfwidth;
        p.len() == self.dim() && p.iter().zip(&self.center).all(|(v, c)| (v - c).abs() <= self.halfwidth + slack)
    }

    /// Closed inclusion `other ⊆ self` up to the alignment tolerance.
    pub fn contains_cube(&self, other: &CubeSpec) -> bool {
        let slack = ALIGN_RTOL * self.halfwidth.max(other.halfwidth);
        other.dim() == self.dim()
            && other
                .center
                .iter()
                .zip(&self.center)
                .all(|(o, c)| (o - c).abs() + other.halfwidth <= self.halfwidth + slack)
    }

    /// True when the open cubes do not intersect.
    pub fn interior_disjoint(&self, other: &CubeSpec) -> bool {
        let slack = ALIGN_RTOL * self.halfwidth.max(other.halfwidth);
        self.center.iter().zip(&other.center).any(|(a, b)| (a - b).abs() >= self.halfwidth + other.halfwidth - slack)
    }

    /// Max-norm distance between the closed cubes (zero when they touch).
    pub fn gap(&self, other: &CubeSpec) -> f64 {
        self.center
            .iter()
            .zip(&other.center)
            .map(|(a, b)| ((a - b).abs() - self.halfwidth - other.halfwidth).max(0.0))
            .fold(0.0, f64::max)
    }

    /// The `2^{d·depth}` dyadic sub-cubes at `depth`, in lexicographic order
    /// of their lower corners (axis 0 slowest).
    pub fn dyadic_children(&self, depth: u32) -> Vec<CubeSpec> {
        let d = self.dim();
        let k = 1usize << depth;
        let side = self.side() / k as f64;
        let lo = self.corner();
        let mut out = Vec::with_capacity(k.pow(d as u32));
        for flat in 0..k.pow(d as u32) {
            let idx = unflatten(flat, k, d);
            let corner: Vec<f64> = idx.iter().zip(&lo).map(|(&i, l)| l + side * i as f64).collect();
            out.push(CubeSpec { center: corner.iter().map(|c| c + side / 2.0).collect(), halfwidth: side / 2.0 });
        }
        out
    }
}

/// Multi-index of `flat` in `{0..k-1}^d`, axis 0 slowest.
fn unflatten(mut flat: usize, k: usize, d: usize) -> Vec<usize> {
    let mut idx = vec![0; d];
    for slot in idx.iter_mut().rev() {
        *slot = flat % k;
        flat /= k;
    }
    idx
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(d), &mut vec![false; d], &mut out);
    out
}

/// Lexicographic rank of a permutation among all permutations of its length.
fn perm_rank(p: &[usize]) -> usize {
    let d = p.len();
    let mut rank = 0;
    for i in 0..d {
        let smaller = p[i + 1..].iter().filter(|&&v| v < p[i]).count();
        rank = rank * (d - i) + smaller;
    }
    rank
}

fn factorial(d: usize) -> usize {
    (1..=d).product()
}

/// Kuhn mesh of a cube with `n` subdivisions per axis, carrying fields with
/// values in `R^m`.
#[derive(Clone, Debug)]
pub struct CubeMesh {
    cube: CubeSpec,
    n: usize,
    m: usize,
    step: f64,
    corner: Vec<f64>,
    perms: Vec<Vec<usize>>,
    /// `d + 1` node indices per simplex, in walk order.
    vertices: Vec<usize>,
    barycenters: Vec<f64>,
    boundary: Vec<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshMeta {
    pub cube: CubeSpec,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub nodes: usize,
    pub simplices: usize,
    pub boundary_nodes: usize,
}

impl CubeMesh {
    /// Kuhn mesh with `(n+1)^d` nodes and `n^d d!` simplices.
    pub fn kuhn(cube: CubeSpec, n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("mesh needs n >= 1 subdivisions".into()));
        }
        if m == 0 {
            return Err(Error::Config("fields need m >= 1 components".into()));
        }
        let d = cube.dim();
        let step = cube.side() / n as f64;
        let corner = cube.corner();
        let perms = permutations(d);
        let np = n + 1;
        let cells = n.pow(d as u32);
        let mut vertices = Vec::with_capacity(cells * perms.len() * (d + 1));
        let mut barycenters = Vec::with_capacity(cells * perms.len() * d);
        for c in 0..cells {
            let k = unflatten(c, n, d);
            for sigma in &perms {
                let mut v = k.clone();
                let mut sum = vec![0.0; d];
                for i in 0..=d {
                    if i > 0 {
                        v[sigma[i - 1]] += 1;
                    }
                    vertices.push(flatten(&v, np));
                    for (s, &vj) in sum.iter_mut().zip(&v) {
                        *s += vj as f64;
                    }
                }
                barycenters.extend(sum.iter().zip(&corner).map(|(s, c)| c + step * s / (d + 1) as f64));
            }
        }
        let boundary = (0..np.pow(d as u32)).map(|i| unflatten(i, np, d).iter().any(|&k| k == 0 || k == n)).collect();
        Ok(CubeMesh { cube, n, m, step, corner, perms, vertices, barycenters, boundary })
    }

    pub fn cube(&self) -> &CubeSpec {
        &self.cube
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.cube.dim()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node_count(&self) -> usize {
        (self.n + 1).pow(self.d() as u32)
    }

    pub fn simplex_count(&self) -> usize {
        self.vertices.len() / (self.d() + 1)
    }

    /// Every simplex has volume `h^d / d!`.
    pub fn simplex_volume(&self) -> f64 {
        self.step.powi(self.d() as i32) / factorial(self.d()) as f64
    }

    pub fn node_multi_index(&self, i: usize) -> Vec<usize> {
        unflatten(i, self.n + 1, self.d())
    }

    pub fn node_index(&self, k: &[usize]) -> usize {
        flatten(k, self.n + 1)
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        self.node_multi_index(i).iter().zip(&self.corner).map(|(&k, c)| c + self.step * k as f64).collect()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Node indices of simplex `t`, in walk order `v_0, ..., v_d`.
    pub fn simplex(&self, t: usize) -> &[usize] {
        let k = self.d() + 1;
        &self.vertices[t * k..(t + 1) * k]
    }

    /// Axis permutation of simplex `t`.
    pub fn simplex_perm(&self, t: usize) -> &[usize] {
        &self.perms[t % self.perms.len()]
    }

    pub fn barycenter(&self, t: usize) -> &[f64] {
        let d = self.d();
        &self.barycenters[t * d..(t + 1) * d]
    }

    /// Writes the gradient of simplex `t` (row-major `m x d`) into `out`.
    #[inline]
    pub fn simplex_gradient(&self, t: usize, values: &[f64], out: &mut [f64]) {
        let (m, d) = (self.m, self.d());
        let verts = self.simplex(t);
        let sigma = self.simplex_perm(t);
        for i in 0..d {
            let (lo, hi) = (verts[i] * m, verts[i + 1] * m);
            for a in 0..m {
                out[a * d + sigma[i]] = (values[hi + a] - values[lo + a]) / self.step;
            }
        }
    }

    /// Adds `w * dE/du` for a simplex with energy gradient `g = dE/dxi`.
    #[inline]
    pub fn scatter_gradient(&self, t: usize, g: &[f64], w: f64, out: &mut [f64]) {
        let (m, d) = (self.m, self.d());
        let verts = self.simplex(t);
        let sigma = self.simplex_perm(t);
        let s = w / self.step;
        for i in 0..d {
            let (lo, hi) = (verts[i] * m, verts[i + 1] * m);
            for a in 0..m {
                let c = s * g[a * d + sigma[i]];
                out[hi + a] += c;
                out[lo + a] -= c;
            }
        }
    }

    /// Locates a point of the closed cube: simplex index and barycentric
    /// weights in walk order.
    pub fn locate(&self, p: &[f64]) -> Result<(usize, Vec<f64>)> {
        let d = self.d();
        check_len(d, p.len())?;
        if !self.cube.contains_point(p) {
            return Err(Error::OutsideDomain(p.to_vec()));
        }
        let mut cell = vec![0usize; d];
        let mut local = vec![0.0; d];
        for j in 0..d {
            let r = ((p[j] - self.corner[j]) / self.step).clamp(0.0, self.n as f64);
            let k = (r.floor() as usize).min(self.n - 1);
            cell[j] = k;
            local[j] = (r - k as f64).clamp(0.0, 1.0);
        }
        let mut sigma: Vec<usize> = (0..d).collect();
        sigma.sort_by(|&a, &b| local[b].total_cmp(&local[a]).then(a.cmp(&b)));
        let mut lambda = vec![0.0; d + 1];
        lambda[0] = 1.0 - local[sigma[0]];
        for j in 1..d {
            lambda[j] = local[sigma[j - 1]] - local[sigma[j]];
        }
        lambda[d] = local[sigma[d - 1]];
        let t = flatten(&cell, self.n) * self.perms.len() + perm_rank(&sigma);
        Ok((t, lambda))
    }

    pub fn meta(&self) -> MeshMeta {
        MeshMeta {
            cube: self.cube.clone(),
            n: self.n,
            m: self.m,
            d: self.d(),
            nodes: self.node_count(),
            simplices: self.simplex_count(),
            boundary_nodes: self.boundary.iter().filter(|&&b| b).count(),
        }
    }

    /// Whether P1 fields on `self` are exactly representable on `finer`:
    /// the step ratio is a power of two and `finer`'s corner lies on the
    /// lattice of `self` refined to `finer`'s step.
    pub fn nests_into(&self, finer: &CubeMesh) -> bool {
        if self.d() != finer.d() {
            return false;
        }
        let ratio = self.step / finer.step;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > ALIGN_RTOL * ratio || (k as u64).count_ones() != 1 {
            return false;
        }
        finer.corner.iter().zip(&self.corner).all(|(f, c)| {
            let r = (f - c) / finer.step;
            (r - r.round()).abs() <= ALIGN_RTOL * (1.0 + r.abs())
        })
    }
}

fn flatten(k: &[usize], base: usize) -> usize {
    k.iter().fold(0, |acc, &v| acc * base + v)
}

/// Piecewise-affine field on a [`CubeMesh`], stored node-major (`m` values
/// per node).
#[derive(Clone, Debug)]
pub struct GridFunction {
    mesh: Arc<CubeMesh>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(mesh: Arc<CubeMesh>) -> Self {
        let len = mesh.node_count() * mesh.m();
        GridFunction { mesh, values: vec![0.0; len] }
    }

    pub fn from_values(mesh: Arc<CubeMesh>, values: Vec<f64>) -> Result<Self> {
        check_len(mesh.node_count() * mesh.m(), values.len())?;
        Ok(GridFunction { mesh, values })
    }

    /// Nodal interpolant of `g : R^d -> R^m`.
    pub fn from_fn(mesh: Arc<CubeMesh>, g: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let m = mesh.m();
        let mut values = Vec::with_capacity(mesh.node_count() * m);
        for i in 0..mesh.node_count() {
            let v = g(&mesh.node_coords(i));
            check_len(m, v.len())?;
            values.extend(v);
        }
        Ok(GridFunction { mesh, values })
    }

    /// `b + xi (y - corner)`, whose gradient is `xi` on every simplex.
    pub fn affine(mesh: Arc<CubeMesh>, xi: &[f64], b: &[f64]) -> Result<Self> {
        let (m, d) = (mesh.m(), mesh.d());
        check_len(m * d, xi.len())?;
        check_len(m, b.len())?;
        let corner = mesh.cube().corner();
        GridFunction::from_fn(mesh, |y| {
            (0..m).map(|a| b[a] + (0..d).map(|j| xi[a * d + j] * (y[j] - corner[j])).sum::<f64>()).collect()
        })
    }

    pub fn mesh(&self) -> &CubeMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<CubeMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node_value(&self, i: usize) -> &[f64] {
        let m = self.mesh.m();
        &self.values[i * m..(i + 1) * m]
    }

    /// Per-simplex gradients, flattened (`simplex_count * m * d`).
    pub fn gradient(&self) -> Vec<f64> {
        let md = self.mesh.m() * self.mesh.d();
        let mut out = vec![0.0; self.mesh.simplex_count() * md];
        for (t, g) in out.chunks_mut(md).enumerate() {
            self.mesh.simplex_gradient(t, &self.values, g);
        }
        out
    }

    pub fn simplex_gradient(&self, t: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.mesh.m() * self.mesh.d()];
        self.mesh.simplex_gradient(t, &self.values, &mut g);
        g
    }

    /// `(sum_T |T| |grad u_T|^p)^{1/p}` with the Frobenius norm.
    pub fn seminorm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Argument(format!("seminorm needs p >= 1, got {p}")));
        }
        let vol = self.mesh.simplex_volume();
        let s: f64 = self.gradient().chunks(self.mesh.m() * self.mesh.d()).map(|g| frobenius(g).powf(p)).sum();
        Ok((vol * s).powf(1.0 / p))
    }

    /// `sum_T |T| e(b_T, grad u_T)`.
    pub fn energy<E: PointwiseEnergy + ?Sized>(&self, e: &E) -> Ext {
        let vol = self.mesh.simplex_volume();
        let md = self.mesh.m() * self.mesh.d();
        let mut g = vec![0.0; md];
        let mut total = Ext::ZERO;
        for t in 0..self.mesh.simplex_count() {
            self.mesh.simplex_gradient(t, &self.values, &mut g);
            total = total + e.eval(self.mesh.barycenter(t), &g).scale(vol);
            if total.is_inf() {
                return Ext::Inf;
            }
        }
        total
    }

    pub fn zero_boundary(&self) -> bool {
        let m = self.mesh.m();
        (0..self.mesh.node_count())
            .filter(|&i| self.mesh.is_boundary(i))
            .all(|i| self.values[i * m..(i + 1) * m].iter().all(|&v| v == 0.0))
    }

    /// P1 value at a point of the closed cube.
    pub fn eval_at(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (t, lambda) = self.mesh.locate(p)?;
        let m = self.mesh.m();
        let mut out = vec![0.0; m];
        for (&v, l) in self.mesh.simplex(t).iter().zip(&lambda) {
            for (o, u) in out.iter_mut().zip(&self.values[v * m..(v + 1) * m]) {
                *o += l * u;
            }
        }
        Ok(out)
    }

    /// Exact transfer onto a nested target mesh (a dyadic refinement of a
    /// sub-cube, or the mesh itself).
    pub fn transfer(&self, target: Arc<CubeMesh>) -> Result<GridFunction> {
        if target.m() != self.mesh.m() {
            return Err(Error::Shape { expected: self.mesh.m(), got: target.m() });
        }
        if !self.mesh.cube().contains_cube(target.cube()) {
            return Err(Error::Resolution("target cube is not contained in the source cube".into()));
        }
        if !self.mesh.nests_into(&target) {
            return Err(Error::Resolution(format!(
                "mesh with step {} does not nest into mesh with step {}",
                self.mesh.step(),
                target.step()
            )));
        }
        let mut values = Vec::with_capacity(target.node_count() * target.m());
        for i in 0..target.node_count() {
            values.extend(self.eval_at(&target.node_coords(i))?);
        }
        Ok(GridFunction { mesh: target, values })
    }

    /// `t u`.
    pub fn scaled(&self, t: f64) -> GridFunction {
        GridFunction { mesh: self.mesh.clone(), values: self.values.iter().map(|v| t * v).collect() }
    }

    /// `self + other` on the same mesh.
    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        check_len(self.values.len(), other.values.len())?;
        Ok(GridFunction {
            mesh: self.mesh.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Writes rows `node, x0.., u0..` with a header.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let (m, d) = (self.mesh.m(), self.mesh.d());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["node".to_string()];
        header.extend((0..d).map(|j| format!("x{j}")));
        header.extend((0..m).map(|a| format!("u{a}")));
        wr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.mesh.node_count() {
            let mut row = vec![i.to_string()];
            row.extend(self.mesh.node_coords(i).iter().map(|v| v.to_string()));
            row.extend(self.node_value(i).iter().map(|v| v.to_string()));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Overwrites `background` by each piece on its cube.
///
/// A piece `(Q_i, v_i)` must agree with the background's trace on `∂Q_i`
/// (within `1e-9 (1 + |u|)`), and its mesh must nest with the background's
/// lattice. The result lives on the background mesh refined to the finest
/// piece step; its values are the background's on every node outside the
/// open piece cubes and on their boundaries.
pub fn glue(pieces: &[(CubeSpec, GridFunction)], background: &GridFunction) -> Result<GridFunction> {
    let bmesh = background.mesh();
    for (i, (qi, vi)) in pieces.iter().enumerate() {
        if vi.mesh().cube() != qi && !(vi.mesh().cube().contains_cube(qi) && qi.contains_cube(vi.mesh().cube())) {
            return Err(Error::Argument(format!("piece {i}: field mesh does not live on its cube")));
        }
        if !bmesh.cube().contains_cube(qi) {
            return Err(Error::Argument(format!("piece {i} leaves the background cube")));
        }
        for (qj, _) in &pieces[..i] {
            if !qi.interior_disjoint(qj) {
                return Err(Error::Argument(format!("piece {i} overlaps an earlier piece")));
            }
        }
        if vi.mesh().m() != bmesh.m() {
            return Err(Error::Shape { expected: bmesh.m(), got: vi.mesh().m() });
        }
    }
    let mut step = bmesh.step();
    for (_, vi) in pieces {
        step = step.min(vi.mesh().step());
    }
    let n_out = (bmesh.cube().side() / step).round() as usize;
    let out_mesh = if n_out == bmesh.n() {
        background.mesh_arc().clone()
    } else {
        Arc::new(CubeMesh::kuhn(bmesh.cube().clone(), n_out, bmesh.m())?)
    };
    let mut out = background.transfer(out_mesh.clone())?;
    let m = out_mesh.m();
    for (i, (qi, vi)) in pieces.iter().enumerate() {
        let ni = (qi.side() / out_mesh.step()).round() as usize;
        let local = Arc::new(CubeMesh::kuhn(qi.clone(), ni, m)?);
        if !out_mesh.nests_into(&local) {
            return Err(Error::Resolution(format!("piece {i} is not aligned with the background lattice")));
        }
        let vi = vi.transfer(local.clone())?;
        let trace = background.transfer(local.clone())?;
        let scale = 1.0 + trace.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let offset: Vec<usize> = qi
            .corner()
            .iter()
            .zip(&out_mesh.cube().corner())
            .map(|(q, c)| ((q - c) / out_mesh.step()).round() as usize)
            .collect();
        for j in 0..local.node_count() {
            let k: Vec<usize> = local.node_multi_index(j).iter().zip(&offset).map(|(a, b)| a + b).collect();
            let g = out_mesh.node_index(&k);
            if local.is_boundary(j) {
                let mismatch = (0..m).any(|a| (vi.values[j * m + a] - trace.values[j * m + a]).abs() > 1e-9 * scale);
                if mismatch {
                    return Err(Error::Argument(format!("piece {i} does not match the background trace")));
                }
            } else {
                out.values[g * m..(g + 1) * m].copy_from_slice(&vi.values[j * m..(j + 1) * m]);
            }
        }
    }
    Ok(out)
}
