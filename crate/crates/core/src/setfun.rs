//! Set functions on cubes: local Dirichlet values `m_F(u; Q)`, their
//! dyadic-family sums `m^eps` and supremum `m*`, the Caratheodory
//! construction `m^sharp`, densities `m(Q_eps(x)) / eps^d`, and the ratio
//! estimate `omega`.
//!
//! Infima over arbitrary Vitali families are realized on the canonical
//! uniform dyadic family of each depth, which is one admissible family, so
//! the computed `m^eps` and `m^delta` bound the true infima from above.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelopes::{dirichlet_solve, CellConfig, DirichletSolution};
use crate::error::{Error, Result};
use crate::ext::{f64_ext, Ext};
use crate::integrand::PointwiseEnergy;
use crate::mesh::{CubeMesh, CubeSpec, GridFunction};
use crate::sampling::Halton;

/// Absolute tolerance charged per cell solve in `m <= m*` checks.
pub const PER_CELL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Dirichlet,
    ClosedForm,
    Composite,
}

type CubeEval = dyn Fn(&CubeSpec) -> Result<Ext> + Send + Sync;

/// A nonnegative function on cubes.
#[derive(Clone)]
pub struct SetFunction {
    pub label: String,
    pub provenance: Provenance,
    eval: Arc<CubeEval>,
}

impl fmt::Debug for SetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetFunction").field("label", &self.label).field("provenance", &self.provenance).finish()
    }
}

impl SetFunction {
    pub fn new(
        label: impl Into<String>,
        provenance: Provenance,
        eval: impl Fn(&CubeSpec) -> Result<Ext> + Send + Sync + 'static,
    ) -> Self {
        SetFunction { label: label.into(), provenance, eval: Arc::new(eval) }
    }

    pub fn eval(&self, q: &CubeSpec) -> Result<Ext> {
        (self.eval)(q)
    }

    /// `m(Q) = |Q|`.
    pub fn volume() -> Self {
        SetFunction::new("volume", Provenance::ClosedForm, |q| Ok(Ext::Fin(q.volume())))
    }

    /// `m(Q) = |Q|^q`.
    pub fn volume_power(q: f64) -> Self {
        SetFunction::new(format!("volume^{q}"), Provenance::ClosedForm, move |c| Ok(Ext::Fin(c.volume().powf(q))))
    }

    pub fn zero() -> Self {
        SetFunction::new("zero", Provenance::ClosedForm, |_| Ok(Ext::ZERO))
    }

    /// `m(Q) = int_Q g` by the midpoint rule on `k^d` sub-cubes.
    pub fn density(label: impl Into<String>, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, k: usize) -> Self {
        let k = k.max(1);
        SetFunction::new(label, Provenance::ClosedForm, move |q| Ok(Ext::Fin(midpoint_integral(&g, q, k))))
    }

    /// `m(Q) = m_F(l_xi; Q)`: the Dirichlet value of the affine datum on
    /// an `n`-mesh of `Q`.
    pub fn dirichlet_affine<E: PointwiseEnergy + Send + Sync + 'static>(
        energy: Arc<E>,
        xi: Vec<f64>,
        n: usize,
        cfg: CellConfig,
    ) -> Self {
        let cache = Arc::new(DirichletCache::default());
        SetFunction::new("dirichlet-affine", Provenance::Dirichlet, move |q| {
            let m = energy.shape().m;
            let mesh = Arc::new(CubeMesh::kuhn(q.clone(), n, m)?);
            let u = GridFunction::affine(mesh, &xi, &vec![0.0; m])?;
            Ok(cached_dirichlet(energy.as_ref(), &u, &cfg, Some(&cache))?.value)
        })
    }

    /// `m(Q) = m_F(u; Q)` for a field `u` whose mesh nests into the
    /// `n`-mesh of every evaluated cube.
    pub fn dirichlet<E: PointwiseEnergy + Send + Sync + 'static>(
        energy: Arc<E>,
        u: GridFunction,
        n: usize,
        cfg: CellConfig,
    ) -> Self {
        let cache = Arc::new(DirichletCache::default());
        SetFunction::new("dirichlet", Provenance::Dirichlet, move |q| {
            let r = restrict(&u, q, n)?;
            Ok(cached_dirichlet(energy.as_ref(), &r, &cfg, Some(&cache))?.value)
        })
    }

    /// `a m1 + b m2`.
    pub fn combine(a: f64, m1: &SetFunction, b: f64, m2: &SetFunction) -> Self {
        let (m1, m2) = (m1.clone(), m2.clone());
        SetFunction::new(format!("{a}*{} + {b}*{}", m1.label, m2.label), Provenance::Composite, move |q| {
            Ok(m1.eval(q)?.scale(a) + m2.eval(q)?.scale(b))
        })
    }
}

fn midpoint_integral(g: &impl Fn(&[f64]) -> f64, q: &CubeSpec, k: usize) -> f64 {
    let d = q.dim();
    let h = q.side() / k as f64;
    let lo = q.corner();
    let mut total = 0.0;
    let mut p = vec![0.0; d];
    for flat in 0..k.pow(d as u32) {
        let mut r = flat;
        for j in (0..d).rev() {
            p[j] = lo[j] + h * ((r % k) as f64 + 0.5);
            r /= k;
        }
        total += g(&p);
    }
    total * h.powi(d as i32)
}

/// Uniform dyadic partition of a root cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicFamily {
    pub root: CubeSpec,
    pub depth: u32,
    /// `(level, multi-index)` of each selected cell.
    pub cells: Vec<(u32, Vec<usize>)>,
}

impl DyadicFamily {
    pub fn uniform(root: &CubeSpec, depth: u32) -> Self {
        let d = root.dim();
        let k = 1usize << depth;
        let cells = (0..k.pow(d as u32))
            .map(|flat| {
                let mut idx = vec![0; d];
                let mut r = flat;
                for slot in idx.iter_mut().rev() {
                    *slot = r % k;
                    r /= k;
                }
                (depth, idx)
            })
            .collect();
        DyadicFamily { root: root.clone(), depth, cells }
    }

    pub fn cubes(&self) -> Vec<CubeSpec> {
        let lo = self.root.corner();
        self.cells
            .iter()
            .map(|(level, idx)| {
                let side = self.root.side() / (1u64 << level) as f64;
                let center = idx.iter().zip(&lo).map(|(&i, l)| l + side * (i as f64 + 0.5)).collect();
                CubeSpec { center, halfwidth: side / 2.0 }
            })
            .collect()
    }

    pub fn total_volume(&self) -> f64 {
        self.cubes().iter().map(CubeSpec::volume).sum()
    }

    pub fn max_diam(&self) -> f64 {
        self.cubes().iter().map(CubeSpec::diam).fold(0.0, f64::max)
    }
}

/// The restriction of `u` to the `n`-mesh of `cube`. Exact when the meshes
/// nest; a coarser target is accepted only when it reproduces `u` at every
/// node of `u` inside `cube` (for instance affine `u`).
pub fn restrict(u: &GridFunction, cube: &CubeSpec, n: usize) -> Result<GridFunction> {
    let mesh = Arc::new(CubeMesh::kuhn(cube.clone(), n, u.mesh().m())?);
    match u.transfer(mesh.clone()) {
        Err(Error::Resolution(msg)) => {
            let mut values = Vec::with_capacity(mesh.node_count() * mesh.m());
            for i in 0..mesh.node_count() {
                values.extend(u.eval_at(&mesh.node_coords(i))?);
            }
            let r = GridFunction::from_values(mesh, values)?;
            let m = u.mesh().m();
            let scale = 1.0 + u.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..u.mesh().node_count() {
                let p = u.mesh().node_coords(i);
                if !cube.contains_point(&p) {
                    continue;
                }
                let back = r.eval_at(&p)?;
                if back.iter().zip(&u.values()[i * m..(i + 1) * m]).any(|(a, b)| (a - b).abs() > 1e-12 * scale) {
                    return Err(Error::Resolution(msg));
                }
            }
            Ok(r)
        }
        other => other,
    }
}

/// Shared store of unit-cell solutions for x-independent energies with
/// affine data, keyed by the datum and the mesh resolution.
#[derive(Debug, Default)]
pub struct DirichletCache {
    map: Mutex<HashMap<(Vec<u64>, usize), CachedCell>>,
}

#[derive(Clone, Debug)]
struct CachedCell {
    mean: Ext,
    /// Unit-cell perturbation values.
    psi: Vec<f64>,
    record: crate::envelopes::SolveRecord,
}

impl DirichletCache {
    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn affine_gradient(u: &GridFunction) -> Option<Vec<f64>> {
    let g = u.gradient();
    let md = u.mesh().m() * u.mesh().d();
    let first = g[..md].to_vec();
    let scale = 1.0 + first.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    g.chunks(md).all(|c| c.iter().zip(&first).all(|(a, b)| (a - b).abs() <= 1e-12 * scale)).then_some(first)
}

fn cache_key<E: PointwiseEnergy + ?Sized>(e: &E, u: &GridFunction) -> Option<(Vec<u64>, usize)> {
    if !e.x_independent() {
        return None;
    }
    let xi = affine_gradient(u)?;
    // Round away solver-irrelevant noise in the datum.
    let bits = xi.iter().map(|v| ((v * 1e12).round() / 1e12).to_bits()).collect();
    Some((bits, u.mesh().n()))
}

fn cached_dirichlet<E: PointwiseEnergy + ?Sized>(
    e: &E,
    u: &GridFunction,
    cfg: &CellConfig,
    cache: Option<&DirichletCache>,
) -> Result<DirichletSolution> {
    let key = cache.and(cache_key(e, u));
    let cube = u.mesh().cube().clone();
    if let (Some(c), Some(k)) = (cache, key.as_ref()) {
        if let Some(hit) = c.map.lock().expect("cache lock").get(k).cloned() {
            let phi =
                GridFunction::from_values(u.mesh_arc().clone(), hit.psi.iter().map(|v| v * cube.side()).collect())?;
            return Ok(DirichletSolution { value: hit.mean.scale(cube.volume()), v: u.add(&phi)?, record: hit.record });
        }
    }
    let sol = dirichlet_solve(e, u, cfg, None)?;
    if let (Some(c), Some(k)) = (cache, key) {
        let psi = sol.v.values().iter().zip(u.values()).map(|(v, b)| (v - b) / cube.side()).collect();
        let mean = sol.value.scale(1.0 / cube.volume());
        c.map.lock().expect("cache lock").insert(k, CachedCell { mean, psi, record: sol.record.clone() });
    }
    Ok(sol)
}

/// `m_F(u; Q)`: best found `int_Q f(x, grad(u + phi))` over zero-boundary
/// P1 perturbations on the `n`-mesh of `cube`.
pub fn dirichlet_value<E: PointwiseEnergy + ?Sized>(
    e: &E,
    u: &GridFunction,
    cube: &CubeSpec,
    n: usize,
    cfg: &CellConfig,
) -> Result<DirichletSolution> {
    let r = restrict(u, cube, n)?;
    dirichlet_solve(e, &r, cfg, None)
}

/// Value of one dyadic family.
#[derive(Clone, Debug)]
pub struct FamilyValue {
    pub depth: u32,
    pub value: Ext,
    pub cells: Vec<CubeSpec>,
    pub solutions: Vec<DirichletSolution>,
}

/// `m^eps(u; O)` on the uniform dyadic family of `O` at `depth`, each cell
/// solved on an `n`-mesh.
pub fn m_eps<E: PointwiseEnergy + Sync + ?Sized>(
    e: &E,
    u: &GridFunction,
    o: &CubeSpec,
    depth: u32,
    n: usize,
    cfg: &CellConfig,
    cache: Option<&DirichletCache>,
) -> Result<FamilyValue> {
    let cells = DyadicFamily::uniform(o, depth).cubes();
    let restricted: Vec<GridFunction> = cells.iter().map(|q| restrict(u, q, n)).collect::<Result<_>>()?;
    // One representative per cache key is solved first; the congruent
    // cells then read the cache.
    if let Some(c) = cache {
        let mut seen = std::collections::HashSet::new();
        let reps: Vec<&GridFunction> =
            restricted.iter().filter(|r| cache_key(e, r).is_some_and(|k| seen.insert(k))).collect();
        reps.par_iter().map(|r| cached_dirichlet(e, r, cfg, Some(c)).map(|_| ())).collect::<Result<Vec<()>>>()?;
    }
    let solutions: Vec<DirichletSolution> =
        restricted.par_iter().map(|r| cached_dirichlet(e, r, cfg, cache)).collect::<Result<_>>()?;
    let value = solutions.iter().map(|s| s.value).sum();
    Ok(FamilyValue { depth, value, cells, solutions })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DepthValue {
    pub depth: u32,
    pub cells: usize,
    pub value: Ext,
    /// Running maximum up to this depth.
    pub running: Ext,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MStar {
    pub value: Ext,
    pub profile: Vec<DepthValue>,
    /// `m_F(u; O)` on the root mesh.
    pub root_value: Ext,
    #[serde(with = "f64_ext")]
    pub slack: f64,
    /// `root_value <= value + slack`.
    pub root_below: bool,
}

/// `m*(u; O) = max` of `m^eps` over `depths`, with the root Dirichlet value
/// and the check `m(u; O) <= m*(u; O) + cells * PER_CELL_TOL`.
pub fn m_star<E: PointwiseEnergy + Sync + ?Sized>(
    e: &E,
    u: &GridFunction,
    o: &CubeSpec,
    depths: &[u32],
    n: usize,
    cfg: &CellConfig,
    cache: Option<&DirichletCache>,
) -> Result<(MStar, Vec<FamilyValue>)> {
    if depths.is_empty() || depths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("depths must be nonempty and increasing".into()));
    }
    let root_value = cached_dirichlet(e, &restrict(u, o, n)?, cfg, cache)?.value;
    let mut profile = Vec::with_capacity(depths.len());
    let mut families = Vec::with_capacity(depths.len());
    let mut running = Ext::ZERO;
    let mut max_cells = 1;
    for &depth in depths {
        let fam = m_eps(e, u, o, depth, n, cfg, cache)?;
        running = running.max(fam.value);
        max_cells = max_cells.max(fam.cells.len());
        profile.push(DepthValue { depth, cells: fam.cells.len(), value: fam.value, running });
        families.push(fam);
    }
    let slack = max_cells as f64 * PER_CELL_TOL;
    let root_below = match (root_value, running) {
        (_, Ext::Inf) => true,
        (Ext::Inf, Ext::Fin(_)) => false,
        (Ext::Fin(a), Ext::Fin(b)) => a <= b + slack,
    };
    Ok((MStar { value: running, profile, root_value, slack, root_below }, families))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharpValue {
    pub value: Ext,
    /// `(depth, m^delta)` pairs.
    pub profile: Vec<(u32, Ext)>,
}

/// `m^sharp` of a union of cubes: per depth, the sum of `m` over the union
/// of their dyadic families; the value is the maximum over depths.
pub fn m_sharp_sets(m: &SetFunction, sets: &[CubeSpec], depths: &[u32]) -> Result<SharpValue> {
    if depths.is_empty() {
        return Err(Error::Config("m_sharp needs at least one depth".into()));
    }
    let mut profile = Vec::with_capacity(depths.len());
    for &depth in depths {
        let cubes: Vec<CubeSpec> = sets.iter().flat_map(|e| DyadicFamily::uniform(e, depth).cubes()).collect();
        let vals: Vec<Ext> = cubes.par_iter().map(|q| m.eval(q)).collect::<Result<_>>()?;
        profile.push((depth, vals.into_iter().sum()));
    }
    let value = profile.iter().map(|p| p.1).fold(Ext::ZERO, Ext::max);
    Ok(SharpValue { value, profile })
}

pub fn m_sharp(m: &SetFunction, e: &CubeSpec, depths: &[u32]) -> Result<SharpValue> {
    m_sharp_sets(m, std::slice::from_ref(e), depths)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityRecord {
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    /// `m(Q) / eps^d` for the cube of side `eps` centered at `x`.
    pub ratios: Vec<Ext>,
    #[serde(with = "f64_ext")]
    pub tail_spread: f64,
    pub converged: bool,
    /// Last centered ratio.
    pub limit: Ext,
    /// Max and min over the `2d + 1` placements at the smallest scale.
    pub upper: Ext,
    pub lower: Ext,
}

/// Share of the side by which face-shifted cubes move off center; `x`
/// stays inside every placement.
const FACE_SHIFT: f64 = 0.45;

/// Density ratios of `m` at `x` along `eps_seq`.
pub fn set_derivative(m: &SetFunction, x: &[f64], eps_seq: &[f64], tol: f64) -> Result<DensityRecord> {
    if eps_seq.is_empty() || eps_seq.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("eps sequence must be nonempty and positive".into()));
    }
    let d = x.len() as i32;
    let ratios: Vec<Ext> = eps_seq
        .iter()
        .map(|&eps| Ok(m.eval(&CubeSpec::new(x.to_vec(), eps / 2.0)?)?.scale(1.0 / eps.powi(d))))
        .collect::<Result<_>>()?;
    let tail = &ratios[ratios.len().saturating_sub(3)..];
    let tail_spread = if tail.iter().any(|v| v.is_inf()) {
        f64::INFINITY
    } else {
        let t: Vec<f64> = tail.iter().map(|v| v.to_f64()).collect();
        t.iter().cloned().fold(f64::MIN, f64::max) - t.iter().cloned().fold(f64::MAX, f64::min)
    };
    let limit = *ratios.last().expect("nonempty");
    let eps = *eps_seq.last().expect("nonempty");
    let mut placements = vec![x.to_vec()];
    for j in 0..x.len() {
        for s in [-1.0, 1.0] {
            let mut c = x.to_vec();
            c[j] += s * FACE_SHIFT * eps;
            placements.push(c);
        }
    }
    let vals: Vec<Ext> = placements
        .iter()
        .map(|c| Ok(m.eval(&CubeSpec::new(c.clone(), eps / 2.0)?)?.scale(1.0 / eps.powi(d))))
        .collect::<Result<_>>()?;
    let upper = vals.iter().cloned().fold(Ext::ZERO, Ext::max);
    let lower = vals.iter().cloned().fold(Ext::Inf, Ext::min);
    Ok(DensityRecord {
        x: x.to_vec(),
        eps: eps_seq.to_vec(),
        ratios,
        tail_spread,
        converged: tail_spread < tol,
        limit,
        upper,
        lower,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmegaEstimate {
    pub delta: Vec<f64>,
    /// Largest sampled `m(Q) / |Q|` with `diam Q < delta`, per delta.
    pub sup_ratio: Vec<Ext>,
    /// Fitted exponent `s` in `sup_ratio ~ delta^s`.
    #[serde(with = "f64_ext")]
    pub log_slope: f64,
    /// Sampled ratios grow like a negative power of delta.
    pub diverging: bool,
    /// `+inf` when diverging, else the ratio at the smallest delta.
    pub value: Ext,
}

/// Log-log slope below which the sampled ratios are flagged as divergent.
const DIVERGENCE_SLOPE: f64 = -0.25;

/// Sampled `omega = limsup_{delta -> 0} sup m(Q) / |Q|` over cubes inside
/// `root` (its corner cubes plus `samples` low-discrepancy positions).
pub fn omega_ratio(
    m: &SetFunction,
    root: &CubeSpec,
    delta_seq: &[f64],
    samples: usize,
    seed: u64,
) -> Result<OmegaEstimate> {
    if delta_seq.is_empty() || delta_seq.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config("delta sequence must be nonempty and positive".into()));
    }
    let d = root.dim();
    let lo = root.corner();
    let mut sup_ratio = Vec::with_capacity(delta_seq.len());
    for &delta in delta_seq {
        let side = (0.999 * delta / (d as f64).sqrt()).min(root.side());
        let mut corners: Vec<Vec<f64>> = (0..1usize << d)
            .map(|mask| (0..d).map(|j| lo[j] + if mask >> j & 1 == 1 { root.side() - side } else { 0.0 }).collect())
            .collect();
        let mut h = Halton::new(d, seed);
        for _ in 0..samples {
            let u = h.next_point();
            corners.push((0..d).map(|j| lo[j] + u[j] * (root.side() - side)).collect());
        }
        let vals: Vec<Ext> = corners
            .par_iter()
            .map(|c| {
                let q = CubeSpec::from_corner(c, side)?;
                Ok(m.eval(&q)?.scale(1.0 / q.volume()))
            })
            .collect::<Result<_>>()?;
        sup_ratio.push(vals.into_iter().fold(Ext::ZERO, Ext::max));
    }
    let pts: Vec<(f64, f64)> = delta_seq
        .iter()
        .zip(&sup_ratio)
        .filter_map(|(dl, r)| r.finite().filter(|v| *v > 0.0).map(|v| (dl.ln(), v.ln())))
        .collect();
    let log_slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    let any_inf = sup_ratio.iter().any(|v| v.is_inf());
    let diverging = any_inf || log_slope < DIVERGENCE_SLOPE;
    let smallest = delta_seq.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let value = if diverging { Ext::Inf } else { sup_ratio[smallest] };
    Ok(OmegaEstimate { delta: delta_seq.to_vec(), sup_ratio, log_slope, diverging, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{AxisBox, DomainSpec, Formula, Integrand, MatrixShape};

    fn g(x: &[f64]) -> f64 {
        1.0 + x.iter().map(|v| v * v).sum::<f64>()
    }

    /// Exact `int_Q (1 + |x|^2)` over an axis cube.
    fn g_integral(q: &CubeSpec) -> f64 {
        let lo = q.corner();
        let s = q.side();
        let d = q.dim();
        let mut total = s.powi(d as i32);
        for j in 0..d {
            let (a, b) = (lo[j], lo[j] + s);
            total += (b.powi(3) - a.powi(3)) / 3.0 * s.powi(d as i32 - 1);
        }
        total
    }

    fn scalar(d: usize, formula: Formula) -> Arc<Integrand> {
        Arc::new(
            Integrand::new("t", MatrixShape::new(1, d).unwrap(), AxisBox::unit(d), DomainSpec::FullSpace, formula)
                .unwrap(),
        )
    }

    #[test]
    fn dyadic_family_partitions_the_root() {
        let root = CubeSpec::new(vec![0.5, 0.5], 0.5).unwrap();
        for depth in 0..4 {
            let fam = DyadicFamily::uniform(&root, depth);
            assert!((fam.total_volume() - 1.0).abs() < 1e-12);
            assert!((fam.max_diam() - root.diam() / (1 << depth) as f64).abs() < 1e-12);
            assert_eq!(fam.cubes(), root.dyadic_children(depth));
        }
    }

    #[test]
    fn volume_is_its_own_sharp_envelope() {
        let e = CubeSpec::new(vec![0.3, 0.6], 0.2).unwrap();
        let s = m_sharp(&SetFunction::volume(), &e, &[0, 1, 2, 3]).unwrap();
        for (_, v) in &s.profile {
            assert!((v.to_f64() - e.volume()).abs() < 1e-12);
        }
        assert_eq!(m_sharp(&SetFunction::zero(), &e, &[0, 2]).unwrap().value, Ext::ZERO);
    }

    #[test]
    fn density_sharp_matches_quadrature_oracle() {
        let m = SetFunction::density("g", g, 8);
        let e = CubeSpec::new(vec![0.4, 0.5], 0.25).unwrap();
        let s = m_sharp(&m, &e, &[0, 1, 2]).unwrap();
        assert!((s.value.to_f64() - g_integral(&e)).abs() < 1e-3);
    }

    #[test]
    fn derivative_of_density_is_the_density() {
        let m = SetFunction::density("g", g, 4);
        let eps: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
        let x = [0.3, 0.7];
        let r = set_derivative(&m, &x, &eps, 1e-3).unwrap();
        assert!(r.converged);
        assert!((r.limit.to_f64() - g(&x)).abs() < 1e-3);
        assert!(r.lower <= r.upper);
        let sq = set_derivative(&SetFunction::volume_power(2.0), &x, &eps, 1e-3).unwrap();
        assert!(sq.limit.to_f64() < 1e-4);
    }

    #[test]
    fn omega_of_volume_and_square_root() {
        let root = CubeSpec::unit(1);
        let deltas = [0.2, 0.1, 0.05, 0.025];
        let v = omega_ratio(&SetFunction::volume(), &root, &deltas, 8, 3).unwrap();
        assert!((v.value.to_f64() - 1.0).abs() < 1e-12 && !v.diverging);
        let s = omega_ratio(&SetFunction::volume_power(0.5), &root, &deltas, 8, 3).unwrap();
        assert!(s.diverging && s.value.is_inf());
        assert!((s.log_slope + 0.5).abs() < 1e-6);
        let gm = SetFunction::density("g", g, 4);
        let w = omega_ratio(&gm, &root, &deltas, 8, 3).unwrap();
        assert!(w.value.to_f64() <= 2.0 + 1e-9);
    }

    #[test]
    fn m_star_of_convex_affine_is_flat() {
        let f = scalar(1, Formula::Quadratic);
        let o = CubeSpec::unit(1);
        let mesh = Arc::new(CubeMesh::kuhn(o.clone(), 16, 1).unwrap());
        let u = GridFunction::affine(mesh, &[0.6], &[0.0]).unwrap();
        let cache = DirichletCache::default();
        let (ms, _) = m_star(f.as_ref(), &u, &o, &[0, 1, 2, 3, 4], 8, &CellConfig::default(), Some(&cache)).unwrap();
        for p in &ms.profile {
            assert!((p.value.to_f64() - 0.36).abs() < 1e-6);
        }
        assert!(ms.root_below);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn double_well_m_eps_stays_near_zero() {
        let f = scalar(1, Formula::DoubleWell);
        let o = CubeSpec::unit(1);
        let mesh = Arc::new(CubeMesh::kuhn(o.clone(), 16, 1).unwrap());
        let u = GridFunction::zeros(mesh);
        for depth in [0, 2, 4] {
            let fam = m_eps(f.as_ref(), &u, &o, depth, 16, &CellConfig::default(), None).unwrap();
            assert!(fam.value.to_f64() < 0.05, "{depth}: {:?}", fam.value);
        }
    }

    #[test]
    fn misaligned_restriction_is_a_resolution_error() {
        let f = scalar(1, Formula::Quadratic);
        let mesh = Arc::new(CubeMesh::kuhn(CubeSpec::unit(1), 8, 1).unwrap());
        let u = GridFunction::from_fn(mesh, |x| vec![x[0] * x[0]]).unwrap();
        let q = CubeSpec::new(vec![0.33], 0.1).unwrap();
        let affine = GridFunction::affine(u.mesh_arc().clone(), &[1.0], &[0.0]).unwrap();
        assert!(dirichlet_value(f.as_ref(), &affine, &q, 4, &CellConfig::default()).is_ok());
        assert!(matches!(dirichlet_value(f.as_ref(), &u, &q, 4, &CellConfig::default()), Err(Error::Resolution(_))));
    }

    #[test]
    fn separated_sets_add_up() {
        let m = SetFunction::density("g", g, 6);
        let e1 = CubeSpec::new(vec![0.125, 0.125], 0.125).unwrap();
        let e2 = CubeSpec::new(vec![0.75, 0.625], 0.125).unwrap();
        let depths = [0, 1, 2];
        let both = m_sharp_sets(&m, &[e1.clone(), e2.clone()], &depths).unwrap().value.to_f64();
        let sum = m_sharp(&m, &e1, &depths).unwrap().value.to_f64() + m_sharp(&m, &e2, &depths).unwrap().value.to_f64();
        assert!((both - sum).abs() < 1e-4);
    }
}
