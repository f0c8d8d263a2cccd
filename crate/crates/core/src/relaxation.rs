//! Both sides of the representation `Fbar(u; O) = int_O Zhat f(x, grad u)`:
//! the representation integral, the direct upper bound from glued Dirichlet
//! minimizers, the cut-off comparison, radial moduli of the functional, the
//! radial extension and the scalar convexification check.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelopes::{
    convex_envelope, dirichlet_solve, zl, zl_hat, CellConfig, EnvelopeTable, Placement, XiGrid, ZhatConfig,
};
use crate::error::{Error, Result};
use crate::ext::{f64_ext, Ext};
use crate::integrand::{frobenius, AxisBox, Integrand, ModulusKind, RuUscWeight};
use crate::mesh::{glue, CubeMesh, CubeSpec, GridFunction};
use crate::setfun::{m_star, restrict, DepthValue, DirichletCache};

/// Which cell envelope the representation integrates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeChoice {
    /// `Zhat f`, the radial regularization.
    #[default]
    Zhat,
    /// `Zf` itself.
    Zl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxConfig {
    pub envelope: ZhatConfig,
    /// Cells per axis of `Omega` used to group simplices of x-dependent
    /// energies in the envelope cache.
    pub x_cells: usize,
    /// Gradients closer than this (max-norm) share one envelope evaluation.
    pub xi_step: f64,
    /// Mesh resolution of each dyadic cell in the direct upper bound.
    pub cell_n: usize,
    pub cell: CellConfig,
    pub depths: Vec<u32>,
    /// Tolerance of the two-sided comparisons, relative to `|O|` plus the
    /// compared value.
    pub tol: f64,
    /// Lattice points per axis of the convex-envelope tables (0 picks a
    /// dimension-dependent default).
    pub fstar_count: usize,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            envelope: ZhatConfig::default(),
            x_cells: 8,
            xi_step: 1e-9,
            cell_n: 16,
            cell: CellConfig::default(),
            depths: vec![0, 1, 2, 3, 4],
            tol: 5e-2,
            fstar_count: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Representation {
    pub value: Ext,
    pub choice: EnvelopeChoice,
    pub simplices: usize,
    /// Distinct envelope evaluations after quantization.
    pub evaluations: usize,
}

fn restrict_to(u: &GridFunction, o: &CubeSpec) -> Result<GridFunction> {
    let n = (o.side() / u.mesh().step()).round().max(1.0) as usize;
    restrict(u, o, n)
}

fn x_cell(omega: &AxisBox, cells: usize, b: &[f64]) -> Vec<usize> {
    b.iter()
        .enumerate()
        .map(|(j, v)| {
            let w = (omega.hi[j] - omega.lo[j]) / cells as f64;
            (((v - omega.lo[j]) / w).floor().max(0.0) as usize).min(cells - 1)
        })
        .collect()
}

/// `sum_T |T| env(b_T, grad u_T)` over the simplices of `u` inside `O`,
/// with `env` either `Zhat f` or `Zf`. Cubes are centered at the
/// barycenters and shrunk to fit in `Omega`.
pub fn represent_with(
    f: &Integrand,
    u: &GridFunction,
    o: &CubeSpec,
    cfg: &RelaxConfig,
    choice: EnvelopeChoice,
) -> Result<Representation> {
    let u = restrict_to(u, o)?;
    let mesh = u.mesh();
    let md = f.shape.len();
    if mesh.m() * mesh.d() != md {
        return Err(Error::Shape { expected: md, got: mesh.m() * mesh.d() });
    }
    let grads = u.gradient();
    let cells = cfg.x_cells.max(1);
    let mut buckets: HashMap<(Vec<usize>, Vec<i64>), usize> = HashMap::new();
    let mut reps: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut slot = Vec::with_capacity(mesh.simplex_count());
    for t in 0..mesh.simplex_count() {
        let xi = &grads[t * md..(t + 1) * md];
        let b = mesh.barycenter(t);
        let xk = if f.x_independent() { Vec::new() } else { x_cell(&f.omega, cells, b) };
        let qk: Vec<i64> = xi.iter().map(|v| (v / cfg.xi_step).round() as i64).collect();
        let id = *buckets.entry((xk, qk)).or_insert_with(|| {
            reps.push((b.to_vec(), xi.to_vec()));
            reps.len() - 1
        });
        slot.push(id);
    }
    let values: Vec<Ext> = reps.par_iter().map(|(b, xi)| envelope_at(f, b, xi, cfg, choice)).collect::<Result<_>>()?;
    let vol = mesh.simplex_volume();
    let mut total = Ext::ZERO;
    for id in slot {
        total = total + values[id].scale(vol);
    }
    Ok(Representation { value: total, choice, simplices: mesh.simplex_count(), evaluations: reps.len() })
}

pub fn represent(f: &Integrand, u: &GridFunction, o: &CubeSpec, cfg: &RelaxConfig) -> Result<Ext> {
    Ok(represent_with(f, u, o, cfg, EnvelopeChoice::Zhat)?.value)
}

fn envelope_at(f: &Integrand, b: &[f64], xi: &[f64], cfg: &RelaxConfig, choice: EnvelopeChoice) -> Result<Ext> {
    let dist =
        b.iter().enumerate().map(|(j, v)| (v - f.omega.lo[j]).min(f.omega.hi[j] - v)).fold(f64::INFINITY, f64::min);
    if !(dist > 0.0) {
        return Err(Error::OutsideDomain(b.to_vec()));
    }
    let mut zcfg = cfg.envelope.clone();
    let eps0 = zcfg.zl.eps_seq.first().copied().unwrap_or(0.25);
    let fitted = eps0.min(1.99 * dist);
    zcfg.zl.eps_seq.iter_mut().for_each(|e| *e *= fitted / eps0);
    zcfg.zl.placement = Placement::Centered;
    match choice {
        EnvelopeChoice::Zhat => Ok(zl_hat(f, &f.omega, &f.domain, b, xi, &zcfg)?.value),
        EnvelopeChoice::Zl => Ok(zl(f, &f.omega, b, xi, &zcfg.zl, None)?.value),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectUpper {
    /// `m*(u; O)` over the configured depths.
    pub value: Ext,
    pub history: Vec<DepthValue>,
    /// Raw energy `int_O f(x, grad u_eps)` of the glued competitor per depth.
    pub glued_energy: Vec<Ext>,
    /// `glued_energy >= m^eps - slack` per depth.
    pub glued_consistent: Vec<bool>,
    pub root_value: Ext,
    #[serde(with = "f64_ext")]
    pub slack: f64,
}

/// `m*(u; O)` and, per depth, the glued competitor `u_eps` built from the
/// per-cell Dirichlet minimizers. Returns the report and the glued field at
/// the deepest level.
pub fn direct_upper(
    f: &Integrand,
    u: &GridFunction,
    o: &CubeSpec,
    cfg: &RelaxConfig,
) -> Result<(DirectUpper, GridFunction)> {
    let background = restrict_to(u, o)?;
    let cache = DirichletCache::default();
    let (ms, families) = m_star(f, &background, o, &cfg.depths, cfg.cell_n, &cfg.cell, Some(&cache))?;
    let mut glued_energy = Vec::with_capacity(families.len());
    let mut glued_consistent = Vec::with_capacity(families.len());
    let mut last = background.clone();
    for fam in &families {
        let pieces: Vec<(CubeSpec, GridFunction)> =
            fam.cells.iter().cloned().zip(fam.solutions.iter().map(|s| s.v.clone())).collect();
        let g = glue(&pieces, &background)?;
        let energy = g.energy(f);
        let slack = fam.cells.len() as f64 * crate::setfun::PER_CELL_TOL;
        glued_consistent.push(match (energy, fam.value) {
            (Ext::Fin(e), Ext::Fin(v)) => e >= v - slack - 1e-9 * v.abs(),
            (Ext::Inf, _) => true,
            (Ext::Fin(_), Ext::Inf) => false,
        });
        glued_energy.push(energy);
        last = g;
    }
    let report = DirectUpper {
        value: ms.value,
        history: ms.profile,
        glued_energy,
        glued_consistent,
        root_value: ms.root_value,
        slack: ms.slack,
    };
    Ok((report, last))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub representation: Ext,
    pub direct_upper: Ext,
    pub history: Vec<DepthValue>,
    pub glued_energy: Vec<Ext>,
    /// `direct_upper - representation`.
    #[serde(with = "f64_ext")]
    pub gap: f64,
    #[serde(with = "f64_ext")]
    pub tolerance: f64,
    /// `direct_upper >= representation - tolerance`.
    pub two_sided: bool,
    pub glued_consistent: bool,
}

pub fn relax(f: &Integrand, u: &GridFunction, o: &CubeSpec, cfg: &RelaxConfig) -> Result<RelaxationReport> {
    let representation = represent(f, u, o, cfg)?;
    let (up, _) = direct_upper(f, u, o, cfg)?;
    let gap = match (up.value, representation) {
        (Ext::Fin(a), Ext::Fin(b)) => a - b,
        (Ext::Inf, Ext::Inf) => 0.0,
        (Ext::Inf, _) => f64::INFINITY,
        (_, Ext::Inf) => f64::NEG_INFINITY,
    };
    let tolerance = cfg.tol * (o.volume() + representation.to_f64().abs().min(1e300)) + up.slack;
    Ok(RelaxationReport {
        representation,
        direct_upper: up.value,
        history: up.history,
        glued_energy: up.glued_energy,
        gap,
        tolerance,
        two_sided: gap >= -tolerance,
        glued_consistent: up.glued_consistent.iter().all(|&b| b),
    })
}

/// Terms of the cut-off comparison on the cube of side `eps` centered at
/// `x0`, with inner cubes of sides `s eps < r eps`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutoffLedger {
    /// `m_F(t u; Q_eps)`.
    pub left: Ext,
    /// `F(t v; Q_{s eps})` for the Dirichlet minimizer `v` of the tangent datum.
    pub inner: Ext,
    #[serde(with = "f64_ext")]
    pub eps_term: f64,
    /// `F(t w; Q_{r eps} \ Q_{s eps})`.
    pub ring: Ext,
    /// `F(t u; Q_eps \ Q_{r eps})`.
    pub outer: Ext,
    /// `inner + eps_term + ring + outer`.
    pub right: Ext,
    pub holds: bool,
    /// `|ring| / eps^d = r^d - s^d` and `|outer| / eps^d = 1 - r^d`.
    pub ring_fraction: f64,
    pub outer_fraction: f64,
    /// Largest Frobenius norm of the cut-off gradient, times `(r - s) eps`.
    pub cutoff_lipschitz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub x0: Vec<f64>,
    pub eps: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
    /// Mesh resolution of the outer cube.
    pub n: usize,
}

pub fn cutoff_compare(f: &Integrand, u: &GridFunction, p: &CutoffParams, cell: &CellConfig) -> Result<CutoffLedger> {
    let CutoffParams { x0, eps, r, s, t, n } = p.clone();
    if !(0.0 < s && s < r && r < 1.0) || !(t > 0.0 && t < 1.0) || !(eps > 0.0) {
        return Err(Error::Argument(format!("cut-off needs 0 < s < r < 1 and t in ]0,1[ (got s={s}, r={r}, t={t})")));
    }
    let q = CubeSpec::new(x0.clone(), eps / 2.0)?;
    if !u.mesh().cube().contains_cube(&q) {
        return Err(Error::Argument("the cut-off cube leaves the domain of u".into()));
    }
    let lattice = |frac: f64| -> Result<usize> {
        let k = (1.0 - frac) * n as f64 / 2.0;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::Argument(format!("(1 - {frac}) n / 2 must be an integer for n = {n}")));
        }
        Ok(n - 2 * k.round() as usize)
    };
    let (ns, _nr) = (lattice(s)?, lattice(r)?);
    let d = x0.len();
    let m = f.shape.m;
    let md = f.shape.len();
    // Discrete differentiability: one gradient on the simplices next to x0.
    let (t0, _) = u.mesh().locate(&x0)?;
    let xi0 = u.simplex_gradient(t0);
    let h = u.mesh().step();
    let scale = 1.0 + xi0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for k in 0..u.mesh().simplex_count() {
        let b = u.mesh().barycenter(k);
        if b.iter().zip(&x0).all(|(a, c)| (a - c).abs() <= h) {
            let g = u.simplex_gradient(k);
            if g.iter().zip(&xi0).any(|(a, c)| (a - c).abs() > 1e-9 * scale) {
                return Err(Error::Precondition("u is not affine on the simplices around x0".into()));
            }
        }
    }
    let u0 = u.eval_at(&x0)?;
    let tangent = |y: &[f64]| -> Vec<f64> {
        (0..m).map(|a| t * (u0[a] + (0..d).map(|j| xi0[a * d + j] * (y[j] - x0[j])).sum::<f64>())).collect()
    };
    let qmesh = Arc::new(CubeMesh::kuhn(q.clone(), n, m)?);
    let tu = restrict(u, &q, n)?.scaled(t);
    let q_s = CubeSpec::new(x0.clone(), s * eps / 2.0)?;
    let smesh = Arc::new(CubeMesh::kuhn(q_s.clone(), ns, m)?);
    let datum = GridFunction::from_fn(smesh, tangent)?;
    let vsol = dirichlet_solve(f, &datum, cell, None)?;
    let inner = vsol.value;
    let phi = |y: &[f64]| -> f64 {
        let dist = y.iter().zip(&x0).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        ((r * eps / 2.0 - dist) / ((r - s) * eps / 2.0)).clamp(0.0, 1.0)
    };
    let w = GridFunction::from_fn(qmesh.clone(), |y| {
        let c = phi(y);
        let inside = y.iter().zip(&x0).all(|(a, b)| (a - b).abs() <= s * eps / 2.0 * (1.0 + 1e-12));
        let v = if inside { vsol.v.eval_at(y).unwrap_or_else(|_| tangent(y)) } else { tangent(y) };
        let base = tu.eval_at(y).unwrap_or_else(|_| vec![0.0; m]);
        (0..m).map(|a| c * v[a] + (1.0 - c) * base[a]).collect()
    })?;
    let cut = GridFunction::from_fn(Arc::new(CubeMesh::kuhn(q.clone(), n, 1)?), |y| vec![phi(y)])?;
    let lip = cut.gradient().chunks(d).map(frobenius).fold(0.0, f64::max) * (r - s) * eps;
    let vol = qmesh.simplex_volume();
    let (mut ring, mut outer) = (Ext::ZERO, Ext::ZERO);
    let wg = w.gradient();
    let ug = tu.gradient();
    for k in 0..qmesh.simplex_count() {
        let b = qmesh.barycenter(k);
        let dist = b.iter().zip(&x0).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        if dist < s * eps / 2.0 {
            continue;
        }
        if dist < r * eps / 2.0 {
            ring = ring + f.value(b, &wg[k * md..(k + 1) * md]).scale(vol);
        } else {
            outer = outer + f.value(b, &ug[k * md..(k + 1) * md]).scale(vol);
        }
    }
    let perturbation =
        GridFunction::from_values(qmesh.clone(), w.values().iter().zip(tu.values()).map(|(a, b)| a - b).collect())?;
    let left = dirichlet_solve(f, &tu, cell, Some(&perturbation))?.value;
    let eps_term = eps.powi(d as i32 + 1);
    let right = inner + Ext::Fin(eps_term) + ring + outer;
    let competitor = inner + ring + outer;
    let holds = match (left, competitor) {
        (_, Ext::Inf) => true,
        (Ext::Inf, _) => false,
        (Ext::Fin(a), Ext::Fin(b)) => a <= b + 1e-9 * (1.0 + b.abs()),
    };
    let rd = r.powi(d as i32);
    Ok(CutoffLedger {
        left,
        inner,
        eps_term,
        ring,
        outer,
        right,
        holds,
        ring_fraction: rd - s.powi(d as i32),
        outer_fraction: 1.0 - rd,
        cutoff_lipschitz: lip,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalModulus {
    pub t: Vec<f64>,
    /// Sampled modulus per `t`.
    pub delta: Vec<Ext>,
    /// `J(u)` for each member of `D`.
    pub energies: Vec<f64>,
    /// `int_O a`.
    pub a_integral: f64,
    pub kind: ModulusKind,
}

/// `sup_{u in D} (J(t u) - J(u)) / (int_O a + J(u))` with
/// `J(u) = int_O Zhat f(x, grad u)`.
pub fn functional_modulus(
    f: &Integrand,
    members: &[GridFunction],
    a: &RuUscWeight,
    t_seq: &[f64],
    o: &CubeSpec,
    kind: ModulusKind,
    cfg: &RelaxConfig,
) -> Result<FunctionalModulus> {
    if members.is_empty() {
        return Err(Error::Config("the function set D is empty".into()));
    }
    let energies: Vec<f64> = members
        .iter()
        .map(|u| {
            represent(f, u, o, cfg)?
                .finite()
                .ok_or_else(|| Error::Precondition("a member of D has infinite energy".into()))
        })
        .collect::<Result<_>>()?;
    let k = 8usize;
    let a_integral = {
        let h = o.side() / k as f64;
        let lo = o.corner();
        let d = o.dim();
        let mut total = 0.0;
        for flat in 0..k.pow(d as u32) {
            let mut r = flat;
            let mut p = vec![0.0; d];
            for j in (0..d).rev() {
                p[j] = lo[j] + h * ((r % k) as f64 + 0.5);
                r /= k;
            }
            total += a.at(&p);
        }
        total * h.powi(d as i32)
    };
    if !(a_integral > 0.0) {
        return Err(Error::Config("the weight must have a positive integral".into()));
    }
    let mut delta = Vec::with_capacity(t_seq.len());
    for &t in t_seq {
        let mut worst = f64::NEG_INFINITY;
        for (u, &ju) in members.iter().zip(&energies) {
            let jt = represent(f, &u.scaled(t), o, cfg)?;
            let r = match jt {
                Ext::Inf => f64::INFINITY,
                Ext::Fin(v) => {
                    let num = v - ju;
                    (if kind == ModulusKind::Absolute { num.abs() } else { num }) / (a_integral + ju)
                }
            };
            worst = worst.max(r);
        }
        delta.push(Ext::from_f64(worst.max(if kind == ModulusKind::Absolute { 0.0 } else { f64::NEG_INFINITY })));
    }
    Ok(FunctionalModulus { t: t_seq.to_vec(), delta, energies, a_integral, kind })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtendRecord {
    pub t: Vec<f64>,
    pub profile: Vec<Ext>,
    pub value: Ext,
    /// `|profile_k - profile_{k-1}|` over the last three entries is
    /// nonincreasing.
    pub oscillation_decreasing: bool,
}

/// Radial extension `lim_{t -> 1} J(t u)`, realized as the last value of
/// `J(t u)` along `t_seq`; `+inf` when any `J(t u)` is infinite.
pub fn extend_ruusc(
    f: &Integrand,
    u: &GridFunction,
    t_seq: &[f64],
    o: &CubeSpec,
    cfg: &RelaxConfig,
) -> Result<ExtendRecord> {
    if t_seq.is_empty() {
        return Err(Error::Config("t sequence is empty".into()));
    }
    let profile: Vec<Ext> = t_seq.iter().map(|&t| represent(f, &u.scaled(t), o, cfg)).collect::<Result<_>>()?;
    let value = if profile.iter().any(|v| v.is_inf()) { Ext::Inf } else { *profile.last().expect("nonempty") };
    let diffs: Vec<f64> = profile.windows(2).map(|w| (w[1].to_f64() - w[0].to_f64()).abs()).collect();
    let tail = &diffs[diffs.len().saturating_sub(2)..];
    let oscillation_decreasing = value.is_inf() || tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
    Ok(ExtendRecord { t: t_seq.to_vec(), profile, value, oscillation_decreasing })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalarCheck {
    pub representation: Ext,
    /// `int_O f**(x, grad u)` from convex-envelope tables per x-cell.
    pub fstar_integral: Ext,
    pub direct_upper: Ext,
    #[serde(with = "f64_ext")]
    pub tol_representation: f64,
    #[serde(with = "f64_ext")]
    pub tol_upper: f64,
    pub representation_matches: bool,
    pub upper_dominates: bool,
}

/// `int_O f**(x, grad u)` with `f**` tabulated per x-cell on a lattice
/// covering the gradients of `u`.
pub fn fstar_integral(f: &Integrand, u: &GridFunction, o: &CubeSpec, cfg: &RelaxConfig) -> Result<Ext> {
    if f.shape.m != 1 {
        return Err(Error::Precondition("convexification identity needs m = 1".into()));
    }
    let u = restrict_to(u, o)?;
    let mesh = u.mesh();
    let d = f.shape.d;
    let grads = u.gradient();
    let reach = grads.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let halfwidth = 1.25 * reach + 1.0;
    let count = match (cfg.fstar_count, d) {
        (0, 1) => 1601,
        (0, 2) => 81,
        (0, _) => 17,
        (c, _) => c,
    };
    let cells = if f.x_independent() { 1 } else { cfg.x_cells.max(1) };
    let mut tables: HashMap<Vec<usize>, EnvelopeTable> = HashMap::new();
    let vol = mesh.simplex_volume();
    let mut total = Ext::ZERO;
    for t in 0..mesh.simplex_count() {
        let b = mesh.barycenter(t);
        let key = x_cell(&f.omega, cells, b);
        if !tables.contains_key(&key) {
            let center: Vec<f64> = key
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let w = (f.omega.hi[j] - f.omega.lo[j]) / cells as f64;
                    if cells == 1 {
                        b[j]
                    } else {
                        f.omega.lo[j] + w * (k as f64 + 0.5)
                    }
                })
                .collect();
            let grid = XiGrid::full(f.shape, -halfwidth, halfwidth, count)?;
            let raw = EnvelopeTable::raw(f, &center, grid)?;
            tables.insert(key.clone(), convex_envelope(&raw)?);
        }
        let xi = &grads[t * d..(t + 1) * d];
        total = total + tables[&key].interpolate(xi).scale(vol);
    }
    Ok(total)
}

pub fn scalar_check(f: &Integrand, u: &GridFunction, o: &CubeSpec, cfg: &RelaxConfig) -> Result<ScalarCheck> {
    if f.shape.m != 1 {
        return Err(Error::Precondition("scalar check needs m = 1".into()));
    }
    let representation = represent(f, u, o, cfg)?;
    let fstar = fstar_integral(f, u, o, cfg)?;
    let (up, _) = direct_upper(f, u, o, cfg)?;
    let size = |v: Ext| v.to_f64().abs().min(1e300);
    let tol_representation = cfg.tol * (o.volume() + size(fstar));
    let tol_upper = cfg.tol * (o.volume() + size(representation).max(size(fstar))) + up.slack;
    let representation_matches = match (representation, fstar) {
        (Ext::Inf, Ext::Inf) => true,
        (Ext::Fin(a), Ext::Fin(b)) => (a - b).abs() <= tol_representation,
        _ => false,
    };
    let upper_dominates = [representation, fstar].iter().all(|&v| match (up.value, v) {
        (Ext::Inf, _) => true,
        (_, Ext::Inf) => false,
        (Ext::Fin(a), Ext::Fin(b)) => a >= b - tol_upper,
    });
    Ok(ScalarCheck {
        representation,
        fstar_integral: fstar,
        direct_upper: up.value,
        tol_representation,
        tol_upper,
        representation_matches,
        upper_dominates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{DomainSpec, Formula, MatrixShape};

    fn scalar(d: usize, formula: Formula, domain: DomainSpec) -> Integrand {
        Integrand::new("t", MatrixShape::new(1, d).unwrap(), AxisBox::unit(d), domain, formula).unwrap()
    }

    fn affine(d: usize, n: usize, xi: &[f64]) -> GridFunction {
        let mesh = Arc::new(CubeMesh::kuhn(CubeSpec::unit(d), n, 1).unwrap());
        GridFunction::affine(mesh, xi, &[0.0]).unwrap()
    }

    fn quick() -> RelaxConfig {
        let mut cfg = RelaxConfig { cell_n: 8, depths: vec![0, 1, 2], ..RelaxConfig::default() };
        cfg.envelope.zl.n_seq = vec![8];
        cfg
    }

    #[test]
    fn convex_affine_representation_is_exact() {
        let f = scalar(2, Formula::Quadratic, DomainSpec::FullSpace);
        let u = affine(2, 4, &[0.5, -1.0]);
        let o = CubeSpec::unit(2);
        let rep = represent_with(&f, &u, &o, &quick(), EnvelopeChoice::Zl).unwrap();
        assert!((rep.value.to_f64() - 1.25).abs() < 1e-6);
        assert_eq!(rep.evaluations, 1);
        let report = relax(&f, &u, &o, &quick()).unwrap();
        let t8 = 1.0 - 0.5f64.powi(8);
        assert!((report.representation.to_f64() - 1.25 * t8 * t8).abs() < 1e-6);
        assert!((report.direct_upper.to_f64() - 1.25).abs() < 1e-5);
        assert!(report.two_sided && report.glued_consistent);
    }

    #[test]
    fn gradients_outside_the_domain_give_infinity() {
        let f = scalar(1, Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 1.0 });
        let u = affine(1, 4, &[1.5]);
        assert!(represent(&f, &u, &CubeSpec::unit(1), &quick()).unwrap().is_inf());
    }

    #[test]
    fn representation_is_homogeneous_in_the_energy() {
        let f = scalar(1, Formula::DoubleWell, DomainSpec::FullSpace);
        let u = affine(1, 4, &[0.4]);
        let o = CubeSpec::unit(1);
        let a = represent(&f, &u, &o, &quick()).unwrap().to_f64();
        let b = represent(&f.scaled(2.0).unwrap(), &u, &o, &quick()).unwrap().to_f64();
        assert!((b - 2.0 * a).abs() <= 1e-9 * b.abs().max(1e-300));
    }

    #[test]
    fn double_well_upper_history_goes_to_zero() {
        let f = scalar(1, Formula::DoubleWell, DomainSpec::FullSpace);
        let u = affine(1, 16, &[0.0]);
        let cfg = RelaxConfig { cell_n: 16, depths: vec![0, 1, 2, 3, 4], ..quick() };
        let (up, glued) = direct_upper(&f, &u, &CubeSpec::unit(1), &cfg).unwrap();
        assert!(up.value.to_f64() < 0.05, "{up:?}");
        assert!(up.glued_consistent.iter().all(|&b| b));
        assert_eq!(glued.eval_at(&[0.0]).unwrap()[0], 0.0);
        assert_eq!(glued.eval_at(&[1.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn cutoff_inequality_and_ring_fractions() {
        let f = scalar(2, Formula::DoubleWell, DomainSpec::FullSpace);
        let u = affine(2, 8, &[0.3, 0.1]);
        let p = CutoffParams { x0: vec![0.5, 0.5], eps: 0.5, r: 0.75, s: 0.5, t: 0.9, n: 16 };
        let ledger = cutoff_compare(&f, &u, &p, &CellConfig::default()).unwrap();
        assert!(ledger.holds, "{ledger:?}");
        assert!((ledger.ring_fraction - (0.5625 - 0.25)).abs() < 1e-12);
        assert!(ledger.cutoff_lipschitz <= 4.0 + 1e-9);
        let bad = CutoffParams { s: 0.3, ..p.clone() };
        assert!(matches!(cutoff_compare(&f, &u, &bad, &CellConfig::default()), Err(Error::Argument(_))));
        let half = CutoffParams { t: 0.5, ..p };
        let box_f = scalar(2, Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 0.5 });
        let ledger = cutoff_compare(&box_f, &affine(2, 8, &[0.9, 0.9]), &half, &CellConfig::default()).unwrap();
        assert!(ledger.left.is_finite() && ledger.ring.is_finite() && ledger.outer.is_finite());
    }

    #[test]
    fn modulus_of_convex_and_zero_members() {
        let f = scalar(1, Formula::Quadratic, DomainSpec::FullSpace);
        let o = CubeSpec::unit(1);
        let members = vec![affine(1, 4, &[0.0]), affine(1, 4, &[1.0])];
        let m =
            functional_modulus(&f, &members, &RuUscWeight::default(), &[0.9, 0.99], &o, ModulusKind::Signed, &quick())
                .unwrap();
        assert!(m.delta.iter().all(|d| d.to_f64() <= 1e-12));
        let zero =
            functional_modulus(&f, &members[..1], &RuUscWeight::default(), &[0.5], &o, ModulusKind::Signed, &quick())
                .unwrap();
        assert_eq!(zero.delta[0], Ext::ZERO);
    }

    #[test]
    fn extension_of_boundary_datum_is_finite() {
        let f = scalar(1, Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 1.0 });
        let o = CubeSpec::unit(1);
        let t_seq = crate::envelopes::default_t_seq(6);
        let rec = extend_ruusc(&f, &affine(1, 4, &[1.0]), &t_seq, &o, &quick()).unwrap();
        assert!(rec.value.is_finite() && rec.oscillation_decreasing);
        assert!(extend_ruusc(&f, &affine(1, 4, &[1.2]), &t_seq, &o, &quick()).unwrap().value.is_inf());
    }

    #[test]
    fn scalar_check_on_box_constrained_quartic() {
        let f = scalar(1, Formula::Power { p: 4.0 }, DomainSpec::CenteredBox { halfwidth: 1.0 });
        let o = CubeSpec::unit(1);
        let inside = scalar_check(&f, &affine(1, 4, &[0.5]), &o, &quick()).unwrap();
        assert!(inside.representation_matches && inside.upper_dominates, "{inside:?}");
        let outside = fstar_integral(&f, &affine(1, 4, &[1.5]), &o, &quick()).unwrap();
        assert!(outside.is_inf());
        let v = scalar(2, Formula::Quadratic, DomainSpec::FullSpace);
        let mut vf = v.clone();
        vf.shape = MatrixShape::new(2, 1).unwrap();
        assert!(matches!(fstar_integral(&vf, &affine(2, 2, &[0.0, 0.0]), &o, &quick()), Err(Error::Precondition(_))));
    }
}
