//! The acceptance criteria. Each one evaluates a family of inequalities
//! `lhs <= rhs` and reports the worst excess `lhs - rhs`; a criterion passes
//! when that excess is not positive.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use qrelax::corpus::{lookup, FieldSpec};
use qrelax::envelopes::{
    convex_envelope, lamination_envelope, solve_audit, zhat_table, zl, zl_hat, zl_table, CellConfig, DescentConfig,
    EnvelopeTable, GridAxis, XiGrid, ZhatConfig, ZlConfig, ZERO_START_SLACK,
};
use qrelax::integrand::{
    check_h3_with, ruusc_modulus, AxisBox, Integrand, ModulusKind, PointwiseEnergy, RuUscWeight, Sample, SamplingPlan,
    XiRegion,
};
use qrelax::mesh::CubeSpec;
use qrelax::relaxation::{direct_upper, extend_ruusc, functional_modulus, represent_with, EnvelopeChoice, RelaxConfig};
use qrelax::sampling::Halton;
use qrelax::setfun::{dirichlet_value, m_sharp, m_star, omega_ratio, set_derivative, DirichletCache, SetFunction};
use qrelax::{Ext, Result};

use crate::oracles::{
    chord_hull_at, double_well, fit_through_origin, sample_graph, sawtooth_cell_value, weighted_cube_average,
};

/// Envelope tolerance factor shared by the table comparisons.
pub const ENVELOPE_TOL: f64 = 5e-2;

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    /// Worst `lhs - rhs` over all checked inequalities.
    pub excess: f64,
    pub checks: usize,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} checks, worst excess {:.3e}; {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks,
            self.excess,
            self.detail,
            self.seconds
        )
    }
}

/// Accumulates `lhs <= rhs` checks.
#[derive(Default)]
struct Tally {
    excess: f64,
    checks: usize,
    notes: Vec<String>,
    worst_label: String,
}

impl Tally {
    fn new() -> Self {
        Tally { excess: f64::NEG_INFINITY, ..Tally::default() }
    }

    fn le(&mut self, label: impl Into<String>, lhs: f64, rhs: f64) {
        let e = match (lhs.is_infinite() && lhs > 0.0, rhs.is_infinite() && rhs > 0.0) {
            (_, true) => f64::NEG_INFINITY,
            (true, false) => f64::INFINITY,
            _ => lhs - rhs,
        };
        let e = if e.is_nan() { f64::INFINITY } else { e };
        self.checks += 1;
        if e > self.excess {
            self.excess = e;
            self.worst_label = label.into();
        }
    }

    fn holds(&mut self, label: impl Into<String>, ok: bool) {
        self.le(label, if ok { 0.0 } else { 1.0 }, 0.0);
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn finish(self, id: u32, title: &'static str, start: Instant) -> Outcome {
        let mut detail = self.notes.join("; ");
        if !self.worst_label.is_empty() {
            if !detail.is_empty() {
                detail.push_str("; ");
            }
            detail.push_str(&format!("worst at {}", self.worst_label));
        }
        Outcome {
            id,
            title,
            passed: self.checks > 0 && self.excess <= 0.0,
            excess: self.excess,
            checks: self.checks,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn ext(v: Ext) -> f64 {
    v.to_f64()
}

/// Ids in execution order. The solve audit comes last and covers every
/// cell solve of the suite.
pub const ORDER: [u32; 11] = [1, 2, 4, 5, 6, 7, 8, 9, 10, 11, 3];

pub fn title(id: u32) -> &'static str {
    match id {
        1 => "scalar convexification identity",
        2 => "envelope ordering chain",
        3 => "cell value below the zero start",
        4 => "ru-usc modulus transfer",
        5 => "H3 transfer",
        6 => "m below m*",
        7 => "derivative of set functions",
        8 => "Caratheodory bound",
        9 => "direct upper bound below the Zf integral",
        10 => "p(x)-growth modulus decay",
        11 => "radial extension",
        _ => "unknown criterion",
    }
}

/// Runs the requested criteria (all when `ids` is empty) in [`ORDER`].
pub fn run(ids: &[u32], mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    ORDER
        .iter()
        .filter(|id| ids.is_empty() || ids.contains(id))
        .map(|&id| {
            let out = run_one(id);
            report(&out);
            out
        })
        .collect()
}

pub fn run_one(id: u32) -> Outcome {
    let start = Instant::now();
    let result = match id {
        1 => convexification(),
        2 => ordering_chain(),
        3 => zero_start_audit(),
        4 => modulus_transfer(),
        5 => h3_transfer(),
        6 => m_below_mstar(),
        7 => derivative(),
        8 => caratheodory(),
        9 => upper_below_zf(),
        10 => px_decay(),
        11 => radial_extension(),
        _ => {
            let mut t = Tally::new();
            t.note(format!("no criterion {id}"));
            Ok(t)
        }
    };
    match result {
        Ok(t) => t.finish(id, title(id), start),
        Err(e) => {
            let mut t = Tally::new();
            t.le(format!("error: {e}"), f64::INFINITY, 0.0);
            t.finish(id, title(id), start)
        }
    }
}

fn grid_along_first_axis(f: &Integrand, lo: f64, hi: f64, count: usize) -> Result<XiGrid> {
    XiGrid::slice(f.shape, vec![0.0; f.shape.len()], vec![GridAxis { entry: 0, lo, hi, count }])
}

fn convexification() -> Result<Tally> {
    let mut t = Tally::new();
    let (xs, ys) = sample_graph(double_well, -2.5, 2.5, 1001);
    let start = Instant::now();
    for (id, n) in [("double-well-1d", 64), ("double-well-2d", 24)] {
        let f = lookup(id)?.integrand;
        let grid = grid_along_first_axis(&f, -2.0, 2.0, 30)?;
        let mut cfg = ZhatConfig::default();
        cfg.zl.n_seq = vec![n];
        let x = vec![0.25; f.shape.d];
        let table = zhat_table(&f, &f.omega, &f.domain, &x, grid.clone(), &cfg)?;
        let mut worst = 0.0f64;
        for k in 0..grid.len() {
            let s = grid.point(k)[0];
            let fss = chord_hull_at(&xs, &ys, s).expect("inside the sampled range");
            let err = (ext(table.values[k]) - fss).abs();
            worst = worst.max(err / (1.0 + fss));
            t.le(format!("{id} xi={s:.3}"), err, ENVELOPE_TOL * (1.0 + fss));
        }
        t.note(format!("{id} (n={n}) max |Zhat - f**|/(1+f**) = {worst:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    t.le("runtime", secs, 300.0);
    Ok(t)
}

fn ordering_chain() -> Result<Tally> {
    let mut t = Tally::new();
    let factor = 4;
    for entry in qrelax::corpus::corpus() {
        let f = &entry.integrand;
        let grid = entry.default_grid.clone();
        let x = vec![0.5; f.shape.d];
        let n = match (f.shape.m, f.shape.d) {
            (_, 1) => 16,
            (1, _) => 24,
            _ => 16,
        };
        let raw = EnvelopeTable::raw(f, &x, grid.clone())?;
        let fine = EnvelopeTable::raw(f, &x, grid.refined(factor)?)?;
        let convex = convex_envelope(&fine)?.subsample(&grid, factor)?.values;
        let ztab = zl_table(f, &f.omega, &x, grid.clone(), &ZlConfig::default().with_n(n))?;
        let lam = lamination_envelope(&raw, 8)?;
        let mut worst = f64::NEG_INFINITY;
        for k in 0..grid.len() {
            let chain = [convex[k], ztab.values[k], lam.values[k], raw.values[k]];
            for (j, pair) in chain.windows(2).enumerate() {
                let (lo, hi) = (pair[0], pair[1]);
                let scale = match (lo, hi) {
                    (Ext::Fin(a), Ext::Fin(b)) => a.abs().max(b.abs()),
                    (_, Ext::Fin(b)) => b.abs(),
                    _ => 0.0,
                };
                let bound = ext(hi) + ENVELOPE_TOL * (1.0 + scale);
                let names = ["convex", "Zf", "lamination", "raw"];
                let label = format!("{} {}<={} at {:?}", entry.id, names[j], names[j + 1], grid.point(k));
                if let (Ext::Fin(a), Ext::Fin(b)) = (lo, hi) {
                    worst = worst.max(a - b);
                }
                t.le(label, ext(lo), bound);
            }
        }
        t.note(format!("{} worst raw gap {:.1e}", entry.id, worst));
    }
    Ok(t)
}

fn zero_start_audit() -> Result<Tally> {
    let mut t = Tally::new();
    let audit = solve_audit();
    t.holds("cell solves recorded", audit.solves > 0);
    t.le("value - zero start over all solves", audit.worst_excess, ZERO_START_SLACK);
    t.le("violations", audit.violations as f64, 0.0);
    t.note(format!("{} solves, worst excess {:.1e}", audit.solves, audit.worst_excess));
    Ok(t)
}

fn modulus_transfer() -> Result<Tally> {
    let mut t = Tally::new();
    let cfg = ZlConfig::default();
    let slack = 2.0 * DescentConfig::default().obj_tol;
    let last = *cfg.eps_seq.last().expect("nonempty");
    let finest = ZlConfig { eps_seq: vec![last], ..cfg.clone() };
    let a = RuUscWeight::default();
    for (id, halfwidth) in [("double-well-1d", 1.5), ("box-quadratic", 1.0), ("px-growth", 1.5)] {
        let f = lookup(id)?.integrand;
        let region = AxisBox::new(vec![0.0; f.shape.d], vec![0.75; f.shape.d])?;
        let base = SamplingPlan::new(12, 0x4a, XiRegion::Box { halfwidth }).samples(f.shape, &region);
        let mut all: Vec<Sample> = base.clone();
        all.push(Sample {
            x: vec![0.5; f.shape.d],
            xi: vec![0.0; f.shape.len()],
            zeta: vec![0.0; f.shape.len()],
            t: 0.5,
        });
        let mut solved = Vec::new();
        for s in &base {
            let out = zl(&f, &f.omega, &s.x, &s.xi, &cfg, None)?;
            let psi = out.psi.expect("datum in the domain");
            // Every gradient of the minimizer enters the sampled modulus of f.
            let mesh = psi.mesh();
            for k in 0..mesh.simplex_count() {
                let g = psi.simplex_gradient(k);
                let y: Vec<f64> = mesh.barycenter(k).iter().zip(&s.x).map(|(b, x)| x + last * b).collect();
                let xi: Vec<f64> = s.xi.iter().zip(&g).map(|(a, b)| a + b).collect();
                all.push(Sample { x: y, xi, zeta: s.zeta.clone(), t: 0.5 });
            }
            solved.push((s.clone(), out.value, psi));
        }
        for tt in [0.9, 0.99] {
            let df = ruusc_modulus(&f, &a, tt, &all, ModulusKind::Signed)?.value;
            let mut dz = f64::NEG_INFINITY;
            for (s, z, psi) in &solved {
                let Ext::Fin(z) = *z else { continue };
                let txi: Vec<f64> = s.xi.iter().map(|v| tt * v).collect();
                let zt = zl(&f, &f.omega, &s.x, &txi, &finest, Some(&psi.scaled(tt)))?.value;
                dz = dz.max((ext(zt) - z) / (1.0 + z));
            }
            t.le(format!("{id} t={tt}"), dz, df + slack);
            t.note(format!("{id} t={tt}: Delta_Zf {dz:.3e} vs Delta_f {df:.3e}"));
        }
    }
    Ok(t)
}

fn h3_transfer() -> Result<Tally> {
    let mut t = Tally::new();
    for id in ["double-well-1d", "box-quadratic", "px-growth", "g-growth", "power-3"] {
        let entry = lookup(id)?;
        let f = &entry.integrand;
        let c = f.growth.h3.expect("corpus entries declare C");
        let x = vec![0.5];
        let table = zl_table(f, &f.omega, &x, entry.default_grid.clone(), &ZlConfig::default())?;
        let halfwidth = if id == "box-quadratic" { 1.0 } else { 2.0 };
        let samples = SamplingPlan::new(10_000, 0xc5, XiRegion::Box { halfwidth })
            .with_fixed_x(x.clone())
            .samples(f.shape, &f.omega);
        let rf = check_h3_with(f, c, &samples).worst;
        let rz = check_h3_with(&table as &dyn PointwiseEnergy, c, &samples).worst;
        t.le(id, rz, rf + ENVELOPE_TOL * (1.0 + rf.abs()));
        t.note(format!("{id}: Zf {rz:.3}, f {rf:.3}"));
    }
    Ok(t)
}

fn m_below_mstar() -> Result<Tally> {
    let mut t = Tally::new();
    let o = CubeSpec::unit(1);
    let cfg = CellConfig::default();
    let depths: Vec<u32> = (0..=4).collect();
    for id in ["double-well-1d", "box-quadratic", "power-3"] {
        let f = lookup(id)?.integrand;
        for field in [
            FieldSpec::affine(vec![0.5], 1),
            FieldSpec::PerturbedAffine { xi: vec![0.5], offset: vec![0.0], amplitude: 0.05 },
        ] {
            let u = field.build(&o, 16, 1)?;
            let kind = if matches!(field, FieldSpec::Affine { .. }) { "affine" } else { "perturbed" };
            let dv = dirichlet_value(&f, &u, &o, 16, &cfg)?.value;
            let cache = DirichletCache::default();
            let (ms, _) = m_star(&f, &u, &o, &depths, 16, &cfg, Some(&cache))?;
            t.le(format!("{id} {kind}"), ext(dv), ext(ms.value) + ms.slack);
            let running: Vec<Ext> = ms.profile.iter().map(|p| p.running).collect();
            t.holds(format!("{id} {kind} running max"), running.windows(2).all(|w| w[0] <= w[1]));
            t.note(format!("{id} {kind}: m {:.4} m* {:.4}", ext(dv), ext(ms.value)));
        }
    }
    Ok(t)
}

fn derivative() -> Result<Tally> {
    let mut t = Tally::new();
    let eps: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    let g = |x: &[f64]| 1.0 + x.iter().map(|v| v * v).sum::<f64>();
    let m = SetFunction::density("1+|x|^2", g, 8);
    let mut h = Halton::new(2, 7);
    let mut worst_limit = 0.0f64;
    for _ in 0..10 {
        let x: Vec<f64> = h.next_point().iter().map(|u| 0.1 + 0.8 * u).collect();
        let rec = set_derivative(&m, &x, &eps, 1e-3)?;
        let gx = weighted_cube_average(&x, 0.0);
        t.le(format!("spread at {x:.3?}"), rec.tail_spread, 1e-3);
        let dev = (ext(rec.limit) - gx).abs();
        worst_limit = worst_limit.max(dev);
        t.le(format!("limit at {x:.3?}"), dev, 1e-3);
    }
    t.note(format!("density: max |limit - g| {worst_limit:.1e}"));
    let f = Arc::new(lookup("double-well-1d")?.integrand);
    let cfg = CellConfig::default();
    for xi in [0.0, 0.3, 1.2] {
        let m = SetFunction::dirichlet_affine(f.clone(), vec![xi], 16, cfg.clone());
        let rec = set_derivative(&m, &[0.5], &eps, 1e-3)?;
        let zhat = zl_hat(f.as_ref(), &f.omega, &f.domain, &[0.25], &[xi], &ZhatConfig::default())?.value;
        let lim = ext(rec.limit);
        t.le(format!("Dirichlet xi={xi}"), (lim - ext(zhat)).abs(), ENVELOPE_TOL);
        let saw = sawtooth_cell_value(double_well, xi, 16, 3.0);
        t.note(format!("xi={xi}: limit {lim:.4}, Zhat {:.4}, sawtooth oracle {saw:.4}", ext(zhat)));
    }
    Ok(t)
}

fn caratheodory() -> Result<Tally> {
    let mut t = Tally::new();
    let root = CubeSpec::unit(2);
    let quad = Arc::new(lookup("quadratic-2d")?.integrand);
    let functions = [
        SetFunction::volume(),
        SetFunction::density("1+|x|^2", |x: &[f64]| 1.0 + x.iter().map(|v| v * v).sum::<f64>(), 8),
        SetFunction::dirichlet_affine(quad, vec![0.5, -0.3], 8, CellConfig::default()),
    ];
    let deltas = [0.5, 0.25, 0.125, 0.0625];
    for m in &functions {
        let omega = omega_ratio(m, &root, &deltas, 16, 0x0e)?;
        let mut h = Halton::new(3, 11);
        for _ in 0..20 {
            let u = h.next_point();
            let side = 0.2 + 0.3 * u[2];
            let e = CubeSpec::from_corner(&[u[0] * (1.0 - side), u[1] * (1.0 - side)], side)?;
            let sharp = m_sharp(m, &e, &[0, 1, 2])?.value;
            t.le(format!("{} on side {side:.3}", m.label), ext(sharp), ext(omega.value) * e.volume() + 1e-6);
        }
        t.note(format!("{}: omega {:.4}", m.label, ext(omega.value)));
    }
    Ok(t)
}

fn upper_below_zf() -> Result<Tally> {
    let mut t = Tally::new();
    let o = CubeSpec::unit(1);
    let mut cfg = RelaxConfig { cell_n: 16, depths: (0..=4).collect(), ..RelaxConfig::default() };
    cfg.envelope.zl.n_seq = vec![16];
    for (id, xi) in [("double-well-1d", 0.5), ("box-quadratic", 0.8)] {
        let f = lookup(id)?.integrand;
        let u = FieldSpec::affine(vec![xi], 1).build(&o, 4, 1)?;
        for tt in [0.5, 0.9] {
            let tu = u.scaled(tt);
            let (up, _) = direct_upper(&f, &tu, &o, &cfg)?;
            let rep = represent_with(&f, &tu, &o, &cfg, EnvelopeChoice::Zl)?.value;
            t.le(format!("{id} t={tt}"), ext(up.value), ext(rep) + ENVELOPE_TOL * o.volume());
            t.note(format!("{id} t={tt}: upper {:.4}, Zf integral {:.4}", ext(up.value), ext(rep)));
        }
    }
    Ok(t)
}

fn px_decay() -> Result<Tally> {
    let mut t = Tally::new();
    let f = lookup("px-growth")?.integrand;
    let ts = [0.9, 0.99, 0.999];
    let xs: Vec<f64> = ts.iter().map(|t| 1.0 - t).collect();
    let a = RuUscWeight::default();
    let samples = SamplingPlan::new(2000, 0xd0, XiRegion::Box { halfwidth: 4.0 }).samples(f.shape, &f.omega);
    let pointwise: Vec<f64> = ts
        .iter()
        .map(|&tt| ruusc_modulus(&f, &a, tt, &samples, ModulusKind::Absolute).map(|m| m.value))
        .collect::<Result<_>>()?;
    let o = CubeSpec::unit(1);
    let members: Vec<_> =
        [0.5, 1.0, 2.0].iter().map(|&xi| FieldSpec::affine(vec![xi], 1).build(&o, 4, 1)).collect::<Result<_>>()?;
    let mut cfg = RelaxConfig::default();
    cfg.envelope.zl.n_seq = vec![16];
    let functional = functional_modulus(&f, &members, &a, &ts, &o, ModulusKind::Absolute, &cfg)?;
    let functional: Vec<f64> = functional.delta.iter().map(|d| ext(*d)).collect();
    for (label, ys) in [("integrand", pointwise), ("functional", functional)] {
        let k = xs.iter().zip(&ys).map(|(x, y)| y / x).fold(0.0, f64::max);
        let (k_ls, r2_ls) = fit_through_origin(&xs, &ys);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - k * x).powi(2)).sum();
        let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        let r2 = 1.0 - ss_res / ss_tot;
        t.le(format!("{label} R^2 of the bounding line"), 0.95, r2);
        t.le(format!("{label} R^2 of the least-squares line"), 0.95, r2_ls);
        t.holds(format!("{label} positive K'"), k > 0.0 && k.is_finite());
        t.note(format!("{label}: Delta {ys:.4?}, K' {k:.3} (R^2 {r2:.4}), least squares {k_ls:.3} (R^2 {r2_ls:.4})"));
    }
    Ok(t)
}

fn radial_extension() -> Result<Tally> {
    let mut t = Tally::new();
    let f = lookup("box-quadratic")?.integrand;
    let o = CubeSpec::unit(1);
    let ts = qrelax::envelopes::default_t_seq(14);
    let mut cfg = RelaxConfig::default();
    cfg.envelope.t_seq = ts.clone();
    let on_boundary = FieldSpec::affine(vec![1.0], 1).build(&o, 4, 1)?;
    let rec = extend_ruusc(&f, &on_boundary, &ts, &o, &cfg)?;
    // Closed form: lim_{t -> 1} f(t xi) = |xi|^2 = 1 on the closed box, times |O|.
    let limit = 1.0 * o.volume();
    t.holds("finite on the boundary", rec.value.is_finite());
    t.le("boundary limit", (ext(rec.value) - limit).abs(), 1e-3);
    t.note(format!("boundary: {:.6} vs {limit}", ext(rec.value)));
    let outside = FieldSpec::affine(vec![1.1], 1).build(&o, 4, 1)?;
    let rec = extend_ruusc(&f, &outside, &ts, &o, &cfg)?;
    t.holds("infinite at distance 0.1", rec.value.is_inf());
    t.note(format!("outside: {:?}", rec.value));
    Ok(t)
}
