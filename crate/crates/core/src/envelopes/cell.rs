//! Zero-boundary cell problems
//! `inf { mean_{Q_eps(x)} f(y, xi + grad phi(y)) dy : phi in P1_0 }`
//! and Dirichlet problems with a general background field.
//!
//! Working on the unit cell with `phi(x + eps y) = eps psi(y)` leaves the
//! gradients unchanged, so a minimizer on one cube warm-starts the problem on
//! any other cube with the same mesh resolution.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::descent::{minimize, DescentConfig, DescentStatus, Objective};
use crate::error::{check_len, Error, Result};
use crate::ext::{f64_ext, Ext};
use crate::integrand::{AxisBox, Integrand, PointwiseEnergy};
use crate::mesh::{CubeMesh, CubeSpec, GridFunction};

/// Slack of the exact-side inequality `value <= zero-start value`.
pub const ZERO_START_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellConfig {
    /// Seeded random perturbations of `phi = 0`, tried after `phi = 0`, the
    /// warm or coarse-level start and the laminate starts.
    pub random_starts: usize,
    /// Add simple-laminate starts built from the best rank-one split of the
    /// datum (one with a single period, one with `n / 8` periods).
    pub laminate_starts: bool,
    pub descent: DescentConfig,
    /// Relative step of the central differences in `xi`.
    pub fd_step: f64,
    /// Amplitude of random starts, in units of the mesh step.
    pub perturbation: f64,
    pub seed: u64,
    /// Solve on the mesh with half the resolution first (recursively, down
    /// to `coarse_min`) and use its prolongated minimizer as a start.
    pub multilevel: bool,
    pub coarse_min: usize,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            random_starts: 2,
            laminate_starts: true,
            descent: DescentConfig::default(),
            fd_step: 1e-6,
            perturbation: 0.5,
            seed: 0x5eed,
            multilevel: true,
            coarse_min: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Solved(DescentStatus),
    /// The datum lies outside the effective domain; no solve was attempted.
    InfeasibleDatum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub status: CellStatus,
    /// Energy of `phi = 0`.
    pub zero_start: Ext,
    /// Final value reached from each start, in start order (`inf` for starts
    /// that could not be made feasible).
    pub start_values: Vec<Ext>,
    pub best_start: usize,
    /// Spread `max - min` of the finite start values.
    #[serde(with = "f64_ext")]
    pub dispersion: f64,
    pub iterations: usize,
}

static SOLVES: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);
static WORST_EXCESS: AtomicU64 = AtomicU64::new(0);

/// Process-wide tally of the inequality `value <= zero_start + 1e-9` over
/// every finished solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveAudit {
    pub solves: u64,
    pub violations: u64,
    /// Largest `value - zero_start` seen (relative to `1 + zero_start`).
    pub worst_excess: f64,
}

pub fn solve_audit() -> SolveAudit {
    SolveAudit {
        solves: SOLVES.load(Ordering::SeqCst),
        violations: VIOLATIONS.load(Ordering::SeqCst),
        worst_excess: f64::from_bits(WORST_EXCESS.load(Ordering::SeqCst)) - 1.0,
    }
}

fn record_audit(value: Ext, zero_start: Ext) {
    SOLVES.fetch_add(1, Ordering::SeqCst);
    let excess = match (value, zero_start) {
        (_, Ext::Inf) => f64::NEG_INFINITY,
        (Ext::Inf, Ext::Fin(_)) => f64::INFINITY,
        (Ext::Fin(v), Ext::Fin(z)) => (v - z) / (1.0 + z),
    };
    if excess > ZERO_START_SLACK {
        VIOLATIONS.fetch_add(1, Ordering::SeqCst);
    }
    // Offset by one so the stored bits of nonnegative floats order like the floats.
    let shifted = (excess + 1.0).max(0.0);
    WORST_EXCESS.fetch_max(shifted.to_bits(), Ordering::SeqCst);
}

/// `sum_T w e(x_T, G_T + grad phi_T)` over the free (interior) nodal values.
struct DirichletObjective<'a, E: ?Sized> {
    energy: &'a E,
    mesh: &'a CubeMesh,
    background: &'a [f64],
    points: &'a [f64],
    weight: f64,
    free: Vec<usize>,
    fd_step: f64,
}

impl<E: PointwiseEnergy + ?Sized> DirichletObjective<'_, E> {
    fn full(&self, z: &[f64]) -> Vec<f64> {
        let m = self.mesh.m();
        let mut v = vec![0.0; self.mesh.node_count() * m];
        for (k, &node) in self.free.iter().enumerate() {
            v[node * m..(node + 1) * m].copy_from_slice(&z[k * m..(k + 1) * m]);
        }
        v
    }

    fn gather(&self, full: &[f64]) -> Vec<f64> {
        let m = self.mesh.m();
        let mut z = Vec::with_capacity(self.free.len() * m);
        for &node in &self.free {
            z.extend_from_slice(&full[node * m..(node + 1) * m]);
        }
        z
    }

    fn point(&self, t: usize) -> &[f64] {
        let d = self.mesh.d();
        &self.points[t * d..(t + 1) * d]
    }

    fn local_xi(&self, t: usize, full: &[f64], xi: &mut [f64]) {
        self.mesh.simplex_gradient(t, full, xi);
        let md = xi.len();
        for (a, b) in xi.iter_mut().zip(&self.background[t * md..(t + 1) * md]) {
            *a += b;
        }
    }

    fn energy_of_full(&self, full: &[f64]) -> Ext {
        let md = self.mesh.m() * self.mesh.d();
        let mut xi = vec![0.0; md];
        let mut sum = 0.0;
        for t in 0..self.mesh.simplex_count() {
            self.local_xi(t, full, &mut xi);
            match self.energy.eval(self.point(t), &xi) {
                Ext::Inf => return Ext::Inf,
                Ext::Fin(v) => sum += v,
            }
        }
        Ext::Fin(self.weight * sum)
    }
}

impl<E: PointwiseEnergy + ?Sized> Objective for DirichletObjective<'_, E> {
    fn dim(&self) -> usize {
        self.free.len() * self.mesh.m()
    }

    fn value(&self, z: &[f64]) -> Ext {
        self.energy_of_full(&self.full(z))
    }

    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> Ext {
        let full = self.full(z);
        let md = self.mesh.m() * self.mesh.d();
        let mut xi = vec![0.0; md];
        let mut probe = vec![0.0; md];
        let mut dxi = vec![0.0; md];
        let mut grad_full = vec![0.0; full.len()];
        let mut sum = 0.0;
        for t in 0..self.mesh.simplex_count() {
            self.local_xi(t, &full, &mut xi);
            let x = self.point(t);
            let Ext::Fin(f0) = self.energy.eval(x, &xi) else {
                return Ext::Inf;
            };
            sum += f0;
            probe.copy_from_slice(&xi);
            for k in 0..md {
                let h = self.fd_step * (1.0 + xi[k].abs());
                probe[k] = xi[k] + h;
                let up = self.energy.eval(x, &probe);
                probe[k] = xi[k] - h;
                let down = self.energy.eval(x, &probe);
                probe[k] = xi[k];
                dxi[k] = match (up, down) {
                    (Ext::Fin(u), Ext::Fin(l)) => (u - l) / (2.0 * h),
                    (Ext::Fin(u), Ext::Inf) => (u - f0) / h,
                    (Ext::Inf, Ext::Fin(l)) => (f0 - l) / h,
                    (Ext::Inf, Ext::Inf) => 0.0,
                };
            }
            self.mesh.scatter_gradient(t, &dxi, self.weight, &mut grad_full);
        }
        g.copy_from_slice(&self.gather(&grad_full));
        Ext::Fin(self.weight * sum)
    }
}

/// A Dirichlet problem on one mesh: background gradients and quadrature
/// points per simplex, and the weight multiplying every simplex term.
struct Setup<'a, E: ?Sized> {
    energy: &'a E,
    mesh: Arc<CubeMesh>,
    background: Vec<f64>,
    points: Vec<f64>,
    weight: f64,
}

struct Solved {
    value: Ext,
    phi: Vec<f64>,
    record: SolveRecord,
}

fn shrink_to_feasible<E: PointwiseEnergy + ?Sized>(obj: &DirichletObjective<'_, E>, z: Vec<f64>) -> Option<Vec<f64>> {
    let mut z = z;
    for _ in 0..30 {
        if obj.value(&z).is_finite() {
            return Some(z);
        }
        z.iter_mut().for_each(|v| *v *= 0.5);
    }
    None
}

fn solve_setup<E: PointwiseEnergy + ?Sized>(
    s: &Setup<'_, E>,
    cfg: &CellConfig,
    guided: Vec<Vec<f64>>,
) -> Result<Solved> {
    let obj = DirichletObjective {
        energy: s.energy,
        mesh: &s.mesh,
        background: &s.background,
        points: &s.points,
        weight: s.weight,
        free: s.mesh.interior_nodes(),
        fd_step: cfg.fd_step,
    };
    let dim = obj.dim();
    let zero = vec![0.0; dim];
    let zero_start = obj.value(&zero);
    if zero_start.is_inf() {
        let record = SolveRecord {
            status: CellStatus::InfeasibleDatum,
            zero_start,
            start_values: Vec::new(),
            best_start: 0,
            dispersion: 0.0,
            iterations: 0,
        };
        return Ok(Solved { value: Ext::Inf, phi: vec![0.0; s.mesh.node_count() * s.mesh.m()], record });
    }
    let h = s.mesh.step();
    let mut starts: Vec<Option<Vec<f64>>> = vec![Some(zero)];
    for gz in guided {
        starts.push(shrink_to_feasible(&obj, obj.gather(&gz)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random_starts {
        let z: Vec<f64> = (0..dim).map(|_| cfg.perturbation * h * rng.gen_range(-1.0..1.0)).collect();
        starts.push(shrink_to_feasible(&obj, z));
    }
    let mut best: Option<(f64, Vec<f64>, DescentStatus, usize)> = None;
    let mut start_values = Vec::with_capacity(starts.len());
    let mut iterations = 0;
    for (i, z0) in starts.into_iter().enumerate() {
        let Some(z0) = z0 else {
            start_values.push(Ext::Inf);
            continue;
        };
        let r = minimize(&obj, z0, h, &cfg.descent)?;
        iterations += r.iterations;
        start_values.push(Ext::Fin(r.value));
        if best.as_ref().is_none_or(|b| r.value < b.0) {
            best = Some((r.value, r.z, r.status, i));
        }
    }
    let (value, z, status, best_start) = best.expect("the zero start is always feasible");
    let finite: Vec<f64> = start_values.iter().filter_map(|v| v.finite()).collect();
    let dispersion = finite.iter().cloned().fold(f64::MIN, f64::max) - finite.iter().cloned().fold(f64::MAX, f64::min);
    let record = SolveRecord {
        status: CellStatus::Solved(status),
        zero_start,
        start_values,
        best_start,
        dispersion,
        iterations,
    };
    record_audit(Ext::Fin(value), zero_start);
    Ok(Solved { value: Ext::Fin(value), phi: obj.full(&z), record })
}

/// The cell problem on `Q_eps(x) = x + eps ]0,1[^d` with affine datum `xi`.
pub struct CellProblem<'a, E: ?Sized> {
    pub energy: &'a E,
    pub omega: AxisBox,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub eps: f64,
    pub n: usize,
    pub cfg: CellConfig,
}

impl<'a> CellProblem<'a, Integrand> {
    pub fn new(f: &'a Integrand, x: &[f64], xi: &[f64], eps: f64, n: usize) -> Self {
        CellProblem {
            energy: f,
            omega: f.omega.clone(),
            x: x.to_vec(),
            xi: xi.to_vec(),
            eps,
            n,
            cfg: CellConfig::default(),
        }
    }
}

impl<'a, E: PointwiseEnergy + ?Sized> CellProblem<'a, E> {
    pub fn with_energy(energy: &'a E, omega: AxisBox, x: &[f64], xi: &[f64], eps: f64, n: usize) -> Self {
        CellProblem { energy, omega, x: x.to_vec(), xi: xi.to_vec(), eps, n, cfg: CellConfig::default() }
    }

    pub fn with_config(mut self, cfg: CellConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn cube(&self) -> Result<CubeSpec> {
        CubeSpec::cell_at(&self.x, self.eps)
    }

    fn validate(&self) -> Result<CubeSpec> {
        let shape = self.energy.shape();
        check_len(shape.len(), self.xi.len())?;
        check_len(shape.d, self.x.len())?;
        if self.n == 0 {
            return Err(Error::Config("cell mesh needs n >= 1".into()));
        }
        let cube = self.cube()?;
        let b = cube.as_box();
        if !(self.omega.contains(&b.lo) && self.omega.contains(&b.hi)) {
            return Err(Error::OutsideDomain(b.hi));
        }
        Ok(cube)
    }

    fn setup(&self, n: usize) -> Result<Setup<'a, E>> {
        let shape = self.energy.shape();
        let mesh = Arc::new(CubeMesh::kuhn(CubeSpec::unit(shape.d), n, shape.m)?);
        let s = mesh.simplex_count();
        let background = self.xi.repeat(s);
        let mut points = Vec::with_capacity(s * shape.d);
        for t in 0..s {
            points.extend(mesh.barycenter(t).iter().zip(&self.x).map(|(y, x)| x + self.eps * y));
        }
        let weight = mesh.simplex_volume();
        Ok(Setup { energy: self.energy, mesh, background, points, weight })
    }

    fn solve_level(&self, n: usize, warm: Option<&GridFunction>) -> Result<Solved> {
        let setup = self.setup(n)?;
        let mut guided = Vec::new();
        let carried = match warm {
            Some(w) => Some(resample(w, &setup.mesh)?),
            None if self.cfg.multilevel && n % 2 == 0 && n / 2 >= self.cfg.coarse_min => {
                let coarse = self.solve_level(n / 2, None)?;
                if coarse.value.is_inf() {
                    let phi = vec![0.0; setup.mesh.node_count() * setup.mesh.m()];
                    return Ok(Solved { phi, ..coarse });
                }
                let cm = Arc::new(CubeMesh::kuhn(CubeSpec::unit(self.x.len()), n / 2, setup.mesh.m())?);
                let cg = GridFunction::from_values(cm, coarse.phi)?;
                Some(cg.transfer(setup.mesh.clone())?.into_values())
            }
            None => None,
        };
        guided.extend(carried);
        if self.cfg.laminate_starts {
            let centre: Vec<f64> = self.x.iter().map(|x| x + self.eps / 2.0).collect();
            guided.extend(laminate_starts(self.energy, &centre, &self.xi, &setup.mesh));
        }
        solve_setup(&setup, &self.cfg, guided)
    }
}

/// Largest drop `g(0) - g**(0)` of `g(t) = e(x, xi + t v)` over unit
/// rank-one directions `v`, with the hull segment `[t1, t2]` around 0.
struct Split {
    a: Vec<f64>,
    b: Vec<f64>,
    norm: f64,
    t1: f64,
    t2: f64,
}

fn best_split<E: PointwiseEnergy + ?Sized>(e: &E, x: &[f64], xi: &[f64]) -> Option<Split> {
    let shape = e.shape();
    let g0 = e.eval(x, xi).finite()?;
    let radius = 2.0 * (1.0 + crate::integrand::frobenius(xi));
    let half = 200;
    let mut best: Option<(f64, Split)> = None;
    for (a, b) in rank_one_directions(shape.m, shape.d, 1) {
        let v: Vec<f64> = a.iter().flat_map(|&ai| b.iter().map(move |&bj| (ai * bj) as f64)).collect();
        let norm = crate::integrand::frobenius(&v);
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(2 * half + 1);
        let mut probe = xi.to_vec();
        for i in 0..=2 * half {
            let t = radius * (i as f64 - half as f64) / half as f64;
            for ((p, x0), vk) in probe.iter_mut().zip(xi).zip(&v) {
                *p = x0 + t * vk / norm;
            }
            if let Ext::Fin(val) = e.eval(x, &probe) {
                pts.push((t, val));
            }
        }
        let Some((t1, t2, at0)) = hull_at_zero(&pts) else { continue };
        let drop = g0 - at0;
        if drop > 1e-9 * (1.0 + g0) && best.as_ref().is_none_or(|(d, _)| drop > *d) {
            let a = a.iter().map(|&v| v as f64).collect();
            let b = b.iter().map(|&v| v as f64).collect();
            best = Some((drop, Split { a, b, norm, t1, t2 }));
        }
    }
    best.map(|(_, s)| s)
}

/// Lower convex hull of `(t, g)` points sorted by `t`, evaluated at `t = 0`:
/// the bracketing hull vertices and the hull value.
fn hull_at_zero(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
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
    let w = hull.windows(2).find(|w| w[0].0 < 0.0 && w[1].0 > 0.0)?;
    let (p, q) = (w[0], w[1]);
    let lam = -p.0 / (q.0 - p.0);
    Some((p.0, q.0, p.1 + lam * (q.1 - p.1)))
}

/// Simple laminates `phi(y) = a psi(b . y) chi(y)`: `psi` is a sawtooth with
/// slopes `t2 / |a x b|` on a fraction `lambda` of each period and
/// `t1 / |a x b|` on the rest, and `chi` cuts off towards the faces that the
/// layers do not meet at a zero.
fn laminate_starts<E: PointwiseEnergy + ?Sized>(e: &E, x: &[f64], xi: &[f64], mesh: &CubeMesh) -> Vec<Vec<f64>> {
    let Some(split) = best_split(e, x, xi) else { return Vec::new() };
    let (m, d) = (mesh.m(), mesh.d());
    let n = mesh.n();
    let lam = -split.t1 / (split.t2 - split.t1);
    let s_min: f64 = split.b.iter().map(|v| v.min(0.0)).sum();
    let s_len: f64 = split.b.iter().map(|v| v.abs()).sum();
    let single_axis = split.b.iter().filter(|v| **v != 0.0).count() == 1;
    let cut_axes: Vec<usize> = (0..d).filter(|&j| !single_axis || split.b[j] == 0.0).collect();
    let mut periods = vec![1];
    if n >= 16 {
        periods.push(n / 8);
    }
    periods
        .into_iter()
        .map(|k| {
            let p = s_len / k as f64;
            let w = (2.0 * mesh.step()).max((p / 2.0).min(0.25));
            let (up, down) = (split.t2 / split.norm, split.t1 / split.norm);
            let mut vals = vec![0.0; mesh.node_count() * m];
            for i in 0..mesh.node_count() {
                if mesh.is_boundary(i) {
                    continue;
                }
                let y = mesh.node_coords(i);
                let s: f64 = y.iter().zip(&split.b).map(|(a, b)| a * b).sum::<f64>() - s_min;
                let sigma = s.rem_euclid(p);
                let psi = if sigma < lam * p { up * sigma } else { up * lam * p + down * (sigma - lam * p) };
                let chi = cut_axes.iter().fold(1.0f64, |c, &j| c.min(y[j].min(1.0 - y[j]) / w)).min(1.0);
                for a in 0..m {
                    vals[i * m + a] = split.a[a] * psi * chi;
                }
            }
            vals
        })
        .collect()
}

/// Primitive rank-one directions `a (x) b` with integer entries in
/// `[-height, height]`, one representative per sign class.
pub fn rank_one_directions(m: usize, d: usize, height: i64) -> Vec<(Vec<i64>, Vec<i64>)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    fn vectors(len: usize, height: i64) -> Vec<Vec<i64>> {
        let mut out = vec![Vec::new()];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|v| {
                    (-height..=height).map(move |c| {
                        let mut w = v.clone();
                        w.push(c);
                        w
                    })
                })
                .collect();
        }
        // Primitive, first nonzero entry positive.
        out.retain(|v| {
            let g = v.iter().fold(0, |g, &c| gcd(g, c));
            g == 1 && v.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
        });
        out
    }
    let mut out = Vec::new();
    for a in vectors(m, height) {
        for b in vectors(d, height) {
            out.push((a.clone(), b));
        }
    }
    out
}

/// Nodal values of `w` (a unit-cell field) on `target`, by P1 evaluation;
/// exact when the meshes nest.
fn resample(w: &GridFunction, target: &Arc<CubeMesh>) -> Result<Vec<f64>> {
    if w.mesh().m() != target.m() || w.mesh().d() != target.d() {
        return Err(Error::Shape { expected: target.m() * target.d(), got: w.mesh().m() * w.mesh().d() });
    }
    let mut out = Vec::with_capacity(target.node_count() * target.m());
    for i in 0..target.node_count() {
        out.extend(w.eval_at(&target.node_coords(i))?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    /// Best mean energy found.
    pub value: Ext,
    /// Minimizer `psi` on the unit cell (`phi(x + eps y) = eps psi(y)`).
    pub psi: GridFunction,
    pub record: SolveRecord,
}

impl CellSolution {
    /// The minimizer `phi` on `Q_eps(x)`.
    pub fn phi(&self, cube: &CubeSpec) -> Result<GridFunction> {
        let mesh = Arc::new(CubeMesh::kuhn(cube.clone(), self.psi.mesh().n(), self.psi.mesh().m())?);
        GridFunction::from_values(mesh, self.psi.scaled(cube.side()).into_values())
    }
}

/// Solves a cell problem; `warm` is a unit-cell field used as an extra start.
pub fn cell_inf<E: PointwiseEnergy + ?Sized>(
    cp: &CellProblem<'_, E>,
    warm: Option<&GridFunction>,
) -> Result<CellSolution> {
    cp.validate()?;
    let solved = cp.solve_level(cp.n, warm)?;
    let shape = cp.energy.shape();
    let mesh = Arc::new(CubeMesh::kuhn(CubeSpec::unit(shape.d), cp.n, shape.m)?);
    Ok(CellSolution { value: solved.value, psi: GridFunction::from_values(mesh, solved.phi)?, record: solved.record })
}

#[derive(Clone, Debug)]
pub struct DirichletSolution {
    /// Best total energy `int_Q e(x, grad v)` found.
    pub value: Ext,
    /// The competitor `v = u + phi` with `phi` zero on the boundary.
    pub v: GridFunction,
    pub record: SolveRecord,
}

/// Minimizes `int_Q e(x, grad(u + phi))` over zero-boundary `phi` on `u`'s
/// own mesh. Affine `u` on a cube is routed through the cell machinery
/// (with coarse-level starts).
pub fn dirichlet_solve<E: PointwiseEnergy + ?Sized>(
    e: &E,
    u: &GridFunction,
    cfg: &CellConfig,
    warm: Option<&GridFunction>,
) -> Result<DirichletSolution> {
    let mesh = u.mesh_arc().clone();
    let shape = e.shape();
    if mesh.m() != shape.m || mesh.d() != shape.d {
        return Err(Error::Shape { expected: shape.len(), got: mesh.m() * mesh.d() });
    }
    let grads = u.gradient();
    let md = shape.len();
    let first = &grads[..md];
    let scale = 1.0 + first.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let affine = grads.chunks(md).all(|g| g.iter().zip(first).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
    let cube = mesh.cube().clone();
    let volume = cube.volume();
    if affine {
        let cp = CellProblem {
            energy: e,
            omega: cube.as_box(),
            x: cube.corner(),
            xi: first.to_vec(),
            eps: cube.side(),
            n: mesh.n(),
            cfg: cfg.clone(),
        };
        let warm_psi = warm.map(|w| w.scaled(1.0 / cube.side()));
        let warm_unit = match warm_psi {
            Some(w) => {
                let unit = Arc::new(CubeMesh::kuhn(CubeSpec::unit(shape.d), w.mesh().n(), shape.m)?);
                Some(GridFunction::from_values(unit, w.into_values())?)
            }
            None => None,
        };
        let sol = cell_inf(&cp, warm_unit.as_ref())?;
        let phi = GridFunction::from_values(mesh.clone(), sol.psi.scaled(cube.side()).into_values())?;
        return Ok(DirichletSolution { value: sol.value.scale(volume), v: u.add(&phi)?, record: sol.record });
    }
    let mut points = Vec::with_capacity(mesh.simplex_count() * shape.d);
    for t in 0..mesh.simplex_count() {
        points.extend_from_slice(mesh.barycenter(t));
    }
    let setup = Setup { energy: e, mesh: mesh.clone(), background: grads, points, weight: mesh.simplex_volume() };
    let guided = match warm {
        Some(w) => vec![resample(w, &mesh)?],
        None => Vec::new(),
    };
    let solved = solve_setup(&setup, cfg, guided)?;
    let phi = GridFunction::from_values(mesh, solved.phi)?;
    Ok(DirichletSolution { value: solved.value, v: u.add(&phi)?, record: solved.record })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{DomainSpec, Formula, MatrixShape};

    fn scalar(d: usize, formula: Formula, domain: DomainSpec) -> Integrand {
        Integrand::new("t", MatrixShape::new(1, d).unwrap(), AxisBox::unit(d), domain, formula).unwrap()
    }

    #[test]
    fn convex_energy_is_its_own_cell_value() {
        let f = scalar(2, Formula::Power { p: 3.0 }, DomainSpec::FullSpace);
        let xi = [0.6, -0.8];
        let sol = cell_inf(&CellProblem::new(&f, &[0.2, 0.2], &xi, 0.5, 8), None).unwrap();
        assert!((sol.value.to_f64() - 1.0).abs() < 1e-6, "{sol:?}");
    }

    /// Mean double-well energy of the zero-boundary sawtooth with slopes
    /// `+-1` and `k` teeth on an `n`-element mesh of the unit interval.
    fn sawtooth_oracle(n: usize, k: usize) -> f64 {
        let h = 1.0 / n as f64;
        let psi = |y: f64| {
            let p = 1.0 / k as f64;
            let s = y.rem_euclid(p);
            s.min(p - s)
        };
        (0..n)
            .map(|i| {
                let g = (psi((i + 1) as f64 * h) - psi(i as f64 * h)) / h;
                (g * g - 1.0).powi(2) * h
            })
            .sum()
    }

    #[test]
    fn double_well_relaxes_to_zero_at_the_origin() {
        let f = scalar(1, Formula::DoubleWell, DomainSpec::FullSpace);
        let oracle = sawtooth_oracle(16, 4);
        assert!(oracle < 1e-12);
        let sol = cell_inf(&CellProblem::new(&f, &[0.3], &[0.0], 0.125, 16), None).unwrap();
        assert!(sol.value.to_f64() <= 0.05, "{sol:?}");
        assert!(sol.value.to_f64() <= sol.record.zero_start.to_f64());
    }

    #[test]
    fn boundary_datum_stays_feasible() {
        let f = scalar(2, Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 1.0 });
        let xi = [1.0, 0.5];
        let sol = cell_inf(&CellProblem::new(&f, &[0.1, 0.1], &xi, 0.5, 8), None).unwrap();
        let v = sol.value.to_f64();
        assert!(v.is_finite() && v >= 0.0 && v <= 1.25 + 1e-9);
        let g = sol.psi.gradient();
        for t in g.chunks(2) {
            assert!(f.in_domain(&[xi[0] + t[0], xi[1] + t[1]]));
        }
        let outside = cell_inf(&CellProblem::new(&f, &[0.1, 0.1], &[1.5, 0.0], 0.5, 8), None).unwrap();
        assert!(outside.value.is_inf());
        assert_eq!(outside.record.status, CellStatus::InfeasibleDatum);
    }

    #[test]
    fn values_scale_with_the_energy() {
        let f = scalar(1, Formula::DoubleWell, DomainSpec::FullSpace);
        let base = cell_inf(&CellProblem::new(&f, &[0.3], &[0.5], 0.25, 7), None).unwrap().value.to_f64();
        assert!(base > 1e-3);
        for s in [2.0, 3.0] {
            let g = f.scaled(s).unwrap();
            let v = cell_inf(&CellProblem::new(&g, &[0.3], &[0.5], 0.25, 7), None).unwrap().value.to_f64();
            assert!(base > 1e-3);
            assert!((v - s * base).abs() <= 1e-12 * s * base, "{s}: {v} vs {}", s * base);
        }
    }

    #[test]
    fn translation_leaves_x_independent_values_unchanged() {
        let f = scalar(2, Formula::DoubleWell, DomainSpec::FullSpace);
        let xi = [0.3, 0.4];
        let a = cell_inf(&CellProblem::new(&f, &[0.0, 0.0], &xi, 0.25, 8), None).unwrap().value;
        let b = cell_inf(&CellProblem::new(&f, &[0.6, 0.3], &xi, 0.25, 8), None).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn cube_must_fit_in_omega() {
        let f = scalar(1, Formula::Quadratic, DomainSpec::FullSpace);
        assert!(matches!(cell_inf(&CellProblem::new(&f, &[0.8], &[0.0], 0.5, 4), None), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn dirichlet_on_affine_data_matches_the_cell_problem() {
        let f = scalar(1, Formula::Quadratic, DomainSpec::FullSpace);
        let mesh = Arc::new(CubeMesh::kuhn(CubeSpec::new(vec![0.5], 0.25).unwrap(), 8, 1).unwrap());
        let u = GridFunction::affine(mesh, &[2.0], &[0.0]).unwrap();
        let sol = dirichlet_solve(&f, &u, &CellConfig::default(), None).unwrap();
        assert!((sol.value.to_f64() - 4.0 * 0.5).abs() < 1e-6);
    }

    #[test]
    fn rank_one_directions_are_primitive_representatives() {
        let dirs = rank_one_directions(1, 2, 1);
        assert_eq!(dirs.len(), 4);
        let dirs = rank_one_directions(2, 2, 2);
        assert!(dirs.iter().all(|(a, b)| a.iter().any(|&c| c > 0) && b.iter().any(|&c| c != 0)));
    }
}
