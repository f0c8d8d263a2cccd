//! Sampled checkers for the integrand hypotheses. They certify violations
//! (a positive worst residual with a witness), never truth.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frobenius, AxisBox, Integrand, MatrixShape, PointwiseEnergy};
use crate::error::{check_len, Error, Result};
use crate::ext::{f64_ext, Ext};
use crate::sampling::Halton;

/// Where matrix samples are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum XiRegion {
    /// Uniform low-discrepancy cover of `[-halfwidth, halfwidth]^{md}`.
    Box { halfwidth: f64 },
    /// Radii uniform in `[rmin, rmax]`, directions from the box sequence.
    Shell { rmin: f64, rmax: f64 },
}

/// How the space variable is sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XSampling {
    /// Low-discrepancy points of `Omega`.
    Halton,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub t: f64,
}

/// Deterministic sampling plan; `samples()` is a pure function of the plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub count: usize,
    pub seed: u64,
    pub region: XiRegion,
    pub x: XSampling,
    /// Samples appended verbatim after the generated ones.
    #[serde(default)]
    pub extra: Vec<Sample>,
}

impl SamplingPlan {
    pub fn new(count: usize, seed: u64, region: XiRegion) -> Self {
        SamplingPlan { count, seed, region, x: XSampling::Halton, extra: Vec::new() }
    }

    pub fn explicit(samples: Vec<Sample>) -> Self {
        SamplingPlan {
            count: 0,
            seed: 0,
            region: XiRegion::Box { halfwidth: 0.0 },
            x: XSampling::Halton,
            extra: samples,
        }
    }

    pub fn with_fixed_x(mut self, x: Vec<f64>) -> Self {
        self.x = XSampling::Fixed(x);
        self
    }

    pub fn with_extra(mut self, extra: Vec<Sample>) -> Self {
        self.extra.extend(extra);
        self
    }

    pub fn samples(&self, shape: MatrixShape, omega: &AxisBox) -> Vec<Sample> {
        let len = shape.len();
        let shell = matches!(self.region, XiRegion::Shell { .. });
        let xi_dims = len + usize::from(shell);
        let x_dims = match self.x {
            XSampling::Halton => shape.d,
            XSampling::Fixed(_) => 0,
        };
        let mut seq = Halton::new(x_dims + 2 * xi_dims + 1, self.seed);
        let mut out = Vec::with_capacity(self.count + self.extra.len());
        for _ in 0..self.count {
            let u = seq.next_point();
            let x = match &self.x {
                XSampling::Halton => omega.map_unit(&u[..x_dims]),
                XSampling::Fixed(x) => x.clone(),
            };
            let xi = self.map_xi(&u[x_dims..x_dims + xi_dims]);
            let zeta = self.map_xi(&u[x_dims + xi_dims..x_dims + 2 * xi_dims]);
            let t = 1e-6 + (1.0 - 2e-6) * u[x_dims + 2 * xi_dims];
            out.push(Sample { x, xi, zeta, t });
        }
        out.extend(self.extra.iter().cloned());
        out
    }

    fn map_xi(&self, u: &[f64]) -> Vec<f64> {
        match self.region {
            XiRegion::Box { halfwidth } => u.iter().map(|v| halfwidth * (2.0 * v - 1.0)).collect(),
            XiRegion::Shell { rmin, rmax } => {
                let (dir, r) = u.split_at(u.len() - 1);
                let mut v: Vec<f64> = dir.iter().map(|t| 2.0 * t - 1.0).collect();
                let n = frobenius(&v);
                if n < 1e-12 {
                    v.iter_mut().for_each(|c| *c = 0.0);
                    v[0] = 1.0;
                } else {
                    v.iter_mut().for_each(|c| *c /= n);
                }
                let radius = rmin + (rmax - rmin) * r[0];
                v.iter().map(|c| c * radius).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

/// Outcome of a sampled hypothesis check. `worst <= 0` means no violation
/// was found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis: String,
    pub samples: usize,
    #[serde(with = "f64_ext")]
    pub worst: f64,
    pub witness: Option<Witness>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.worst <= 0.0
    }
}

/// Max-reduction that keeps the first witness among equal residuals, so the
/// result does not depend on the parallel schedule.
fn reduce_worst(hypothesis: &str, items: Vec<Option<(f64, Witness)>>) -> HypothesisReport {
    let mut samples = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for (r, w) in items.into_iter().flatten() {
        samples += 1;
        if witness.is_none() || r > worst {
            worst = r;
            witness = Some(w);
        }
    }
    HypothesisReport { hypothesis: hypothesis.to_string(), samples, worst, witness }
}

fn witness_of(s: &Sample, with_pair: bool) -> Witness {
    Witness { x: s.x.clone(), xi: s.xi.clone(), zeta: with_pair.then(|| s.zeta.clone()), t: with_pair.then_some(s.t) }
}

/// Samples `c|xi|^p - f(x, xi)`; an infinite `f` trivially satisfies the bound.
pub fn check_coercivity(f: &Integrand, plan: &SamplingPlan) -> Result<HypothesisReport> {
    let (p, c) = match (f.growth.p, f.growth.c) {
        (Some(p), Some(c)) => (p, c),
        _ => return Err(Error::Config("coercivity check needs declared growth p and c".into())),
    };
    let samples = plan.samples(f.shape, &f.omega);
    let items = samples
        .par_iter()
        .map(|s| {
            let r = match f.value(&s.x, &s.xi) {
                Ext::Inf => f64::NEG_INFINITY,
                Ext::Fin(v) => c * frobenius(&s.xi).powf(p) - v,
            };
            Some((r, witness_of(s, false)))
        })
        .collect();
    Ok(reduce_worst("H0", items))
}

/// Convex-combination bound with the integrand's declared constant.
pub fn check_h3(f: &Integrand, plan: &SamplingPlan) -> Result<HypothesisReport> {
    let c = f.growth.h3.ok_or_else(|| Error::Config("H3 check needs a declared constant C".into()))?;
    let samples = plan.samples(f.shape, &f.omega);
    Ok(check_h3_with(f, c, &samples))
}

/// Samples `e(x, t xi + (1-t) zeta) - C (1 + e(x, xi) + e(x, zeta))`,
/// skipping pairs whose right side is infinite.
pub fn check_h3_with<E: PointwiseEnergy + ?Sized>(e: &E, c: f64, samples: &[Sample]) -> HypothesisReport {
    let items = samples
        .par_iter()
        .map(|s| {
            let (Ext::Fin(a), Ext::Fin(b)) = (e.eval(&s.x, &s.xi), e.eval(&s.x, &s.zeta)) else {
                return None;
            };
            let mid: Vec<f64> = s.xi.iter().zip(&s.zeta).map(|(u, v)| s.t * u + (1.0 - s.t) * v).collect();
            let r = match e.eval(&s.x, &mid) {
                Ext::Inf => f64::INFINITY,
                Ext::Fin(m) => m - c * (1.0 + a + b),
            };
            Some((r, witness_of(s, true)))
        })
        .collect();
    reduce_worst("H3", items)
}

/// Sequence of cube averages `avg_{Q_eps(x)} f(y, xi) dy` against `f(x, xi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LebesgueRecord {
    pub reference: f64,
    pub eps: Vec<f64>,
    pub averages: Vec<f64>,
    pub deviations: Vec<f64>,
    pub converged: bool,
}

/// Midpoint-composite averages over `Q_eps(x) = x + eps ]0,1[^d` with `k^d`
/// nodes; converged when the last two deviations are below `tol`.
pub fn check_lebesgue_pts(
    f: &Integrand,
    x: &[f64],
    xi: &[f64],
    eps_seq: &[f64],
    k: usize,
    tol: f64,
) -> Result<LebesgueRecord> {
    check_len(f.shape.len(), xi.len())?;
    check_len(f.shape.d, x.len())?;
    if eps_seq.is_empty() || k == 0 {
        return Err(Error::Config("need a nonempty eps sequence and at least one quadrature node".into()));
    }
    let reference =
        f.value(x, xi).finite().ok_or_else(|| Error::Precondition("xi must lie in the effective domain".into()))?;
    let d = f.shape.d;
    let mut averages = Vec::with_capacity(eps_seq.len());
    for &eps in eps_seq {
        let far: Vec<f64> = x.iter().map(|v| v + eps).collect();
        if !(f.omega.contains(x) && f.omega.contains(&far)) {
            return Err(Error::OutsideDomain(far));
        }
        let total = k.pow(d as u32);
        let mut sum = 0.0;
        let mut y = vec![0.0; d];
        for flat in 0..total {
            let mut r = flat;
            for (j, yj) in y.iter_mut().enumerate().rev() {
                let i = r % k;
                r /= k;
                *yj = x[j] + eps * (i as f64 + 0.5) / k as f64;
            }
            sum += f.value(&y, xi).to_f64();
        }
        averages.push(sum / total as f64);
    }
    let deviations: Vec<f64> = averages.iter().map(|a| (a - reference).abs()).collect();
    let n = deviations.len();
    let converged = deviations[n.saturating_sub(2)..].iter().all(|&v| v < tol);
    Ok(LebesgueRecord { reference, eps: eps_seq.to_vec(), averages, deviations, converged })
}

/// Max of `f(x, .)` over a `(resolution+1)^{md}` grid of the closed box
/// `[-rho, rho]^{md}`; an even resolution contains every vertex and face
/// center. Any sample outside the domain gives `+inf`.
pub fn sup_on_box(f: &Integrand, x: &[f64], rho: f64, resolution: usize) -> Ext {
    let res = resolution.max(2) + resolution % 2;
    let len = f.shape.len();
    let per_axis = res + 1;
    let total = per_axis.pow(len as u32);
    let mut best = Ext::ZERO;
    let mut xi = vec![0.0; len];
    for flat in 0..total {
        let mut r = flat;
        for c in xi.iter_mut().rev() {
            let i = r % per_axis;
            r /= per_axis;
            *c = -rho + 2.0 * rho * i as f64 / res as f64;
        }
        let v = f.value(x, &xi);
        if v.is_inf() {
            return Ext::Inf;
        }
        best = best.max(v);
    }
    best
}

/// Positive weight `a(x)` in the radial modulus.
#[derive(Clone)]
pub struct RuUscWeight(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl RuUscWeight {
    pub fn constant(c: f64) -> Self {
        RuUscWeight(Arc::new(move |_| c))
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

impl Default for RuUscWeight {
    fn default() -> Self {
        RuUscWeight::constant(1.0)
    }
}

impl fmt::Debug for RuUscWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RuUscWeight(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulusKind {
    /// `(e(t xi) - e(xi)) / (a + e(xi))`.
    Signed,
    /// `|e(t xi) - e(xi)| / (a + e(xi))`, the two-sided quantity that grows
    /// linearly in `1 - t` for Lipschitz-type integrands.
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub t: f64,
    #[serde(with = "f64_ext")]
    pub value: f64,
    pub samples: usize,
    pub witness: Option<Witness>,
}

/// Sampled lower estimate of the radial modulus at `t`, taken over samples
/// with `xi` in the effective domain.
pub fn ruusc_modulus<E: PointwiseEnergy + ?Sized>(
    e: &E,
    a: &RuUscWeight,
    t: f64,
    samples: &[Sample],
    kind: ModulusKind,
) -> Result<ModulusEstimate> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Argument(format!("t must lie in ]0,1[, got {t}")));
    }
    let items: Vec<Option<(f64, Witness)>> = samples
        .par_iter()
        .map(|s| {
            let base = e.eval(&s.x, &s.xi).finite()?;
            let w = a.at(&s.x);
            let txi: Vec<f64> = s.xi.iter().map(|v| t * v).collect();
            let r = match e.eval(&s.x, &txi) {
                Ext::Inf => f64::INFINITY,
                Ext::Fin(v) => {
                    let num = v - base;
                    let num = if kind == ModulusKind::Absolute { num.abs() } else { num };
                    num / (w + base)
                }
            };
            Some((r, witness_of(s, false)))
        })
        .collect();
    if let Some(bad) = samples.iter().find(|s| !(a.at(&s.x) > 0.0)) {
        return Err(Error::Config(format!("weight a must be positive, got a({:?}) <= 0", bad.x)));
    }
    let rep = reduce_worst("ru-usc", items);
    if rep.samples == 0 {
        return Err(Error::Config("no sample lies in the effective domain".into()));
    }
    Ok(ModulusEstimate { t, value: rep.worst, samples: rep.samples, witness: rep.witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::{DomainSpec, Formula, Growth, PExponent};

    fn integrand(m: usize, d: usize, formula: Formula, domain: DomainSpec) -> Integrand {
        Integrand::new("t", MatrixShape::new(m, d).unwrap(), AxisBox::unit(d), domain, formula).unwrap()
    }

    fn radial_samples(x: f64, radii: &[f64]) -> Vec<Sample> {
        radii.iter().map(|&r| Sample { x: vec![x], xi: vec![r], zeta: vec![0.0], t: 0.5 }).collect()
    }

    #[test]
    fn coercivity_equality_case_passes() {
        let f = integrand(1, 1, Formula::Power { p: 3.0 }, DomainSpec::FullSpace).with_growth(Growth {
            p: Some(3.0),
            c: Some(1.0),
            ..Growth::default()
        });
        let plan = SamplingPlan::new(200, 1, XiRegion::Box { halfwidth: 3.0 });
        let rep = check_coercivity(&f, &plan).unwrap();
        assert_eq!(rep.samples, 200);
        assert!(rep.worst.abs() < 1e-12, "worst {}", rep.worst);
    }

    #[test]
    fn coercivity_double_well_fails_near_unit_sphere() {
        let f = integrand(1, 1, Formula::DoubleWell, DomainSpec::FullSpace).with_growth(Growth {
            p: Some(4.0),
            c: Some(1.0),
            ..Growth::default()
        });
        // Radial grid oracle: residual r^4 - (r^2-1)^2 = 2r^2 - 1 on r in [0,1.5],
        // largest at the grid end; at the well bottom r = 1 it equals 1.
        let radii: Vec<f64> = (0..=150).map(|i| i as f64 / 100.0).collect();
        let rep = check_coercivity(&f, &SamplingPlan::explicit(radial_samples(0.5, &radii))).unwrap();
        assert!(!rep.passed());
        let at_one = radial_samples(0.5, &[1.0]);
        let rep1 = check_coercivity(&f, &SamplingPlan::explicit(at_one)).unwrap();
        assert!((rep1.worst - 1.0).abs() < 1e-12);
        assert!((rep.worst - (2.0 * 1.5f64.powi(2) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn coercivity_variable_exponent_on_outer_shell() {
        let f = integrand(
            1,
            1,
            Formula::PxPower { exponent: PExponent { base: 2.0, amplitude: 1.0 } },
            DomainSpec::FullSpace,
        )
        .with_growth(Growth { p: Some(2.0), c: Some(1.0), ..Growth::default() });
        let plan = SamplingPlan::new(300, 4, XiRegion::Shell { rmin: 1.0, rmax: 4.0 });
        let rep = check_coercivity(&f, &plan).unwrap();
        assert!(rep.passed(), "worst {}", rep.worst);
    }

    #[test]
    fn coercivity_requires_declared_constants() {
        let f = integrand(1, 1, Formula::Quadratic, DomainSpec::FullSpace);
        let plan = SamplingPlan::new(10, 1, XiRegion::Box { halfwidth: 1.0 });
        assert!(matches!(check_coercivity(&f, &plan), Err(Error::Config(_))));
        assert!(matches!(check_h3(&f, &plan), Err(Error::Config(_))));
    }

    fn h3_brute_force(g: impl Fn(f64) -> f64, c: f64, lim: f64, n: usize) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..=n {
            let a = -lim + 2.0 * lim * i as f64 / n as f64;
            for j in 0..=n {
                let b = -lim + 2.0 * lim * j as f64 / n as f64;
                for k in 1..n {
                    let t = k as f64 / n as f64;
                    worst = worst.max(g(t * a + (1.0 - t) * b) - c * (1.0 + g(a) + g(b)));
                }
            }
        }
        worst
    }

    fn grid_samples(lim: f64, n: usize) -> Vec<Sample> {
        let mut out = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                for k in 1..n {
                    out.push(Sample {
                        x: vec![0.5],
                        xi: vec![-lim + 2.0 * lim * i as f64 / n as f64],
                        zeta: vec![-lim + 2.0 * lim * j as f64 / n as f64],
                        t: k as f64 / n as f64,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn h3_convex_passes() {
        let f = integrand(1, 2, Formula::Quadratic, DomainSpec::FullSpace)
            .with_growth(Growth { h3: Some(1.0), ..Growth::default() });
        let plan = SamplingPlan::new(2000, 3, XiRegion::Box { halfwidth: 3.0 });
        assert!(check_h3(&f, &plan).unwrap().passed());
    }

    #[test]
    fn h3_matches_brute_force_grid() {
        let dw = integrand(1, 1, Formula::DoubleWell, DomainSpec::FullSpace);
        let g = |v: f64| (v * v - 1.0).powi(2);
        let oracle = h3_brute_force(g, 2.0, 2.0, 20);
        let rep = check_h3_with(&dw, 2.0, &grid_samples(2.0, 20));
        assert!((rep.worst - oracle).abs() < 1e-12, "{} vs {}", rep.worst, oracle);
        assert_eq!(rep.passed(), oracle <= 0.0);

        let ex = integrand(1, 1, Formula::ExpNorm, DomainSpec::FullSpace);
        let oracle = h3_brute_force(|v: f64| v.abs().exp(), 1.0, 1.0, 20);
        let rep = check_h3_with(&ex, 1.0, &grid_samples(1.0, 20));
        assert!((rep.worst - oracle).abs() < 1e-12);
    }

    #[test]
    fn h3_skips_infinite_right_side() {
        let f = integrand(1, 1, Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 1.0 });
        let s = vec![Sample { x: vec![0.5], xi: vec![2.0], zeta: vec![0.0], t: 0.5 }];
        assert_eq!(check_h3_with(&f, 1.0, &s).samples, 0);
    }

    #[test]
    fn lebesgue_constant_in_x() {
        let f = integrand(1, 2, Formula::Quadratic, DomainSpec::FullSpace);
        let rec = check_lebesgue_pts(&f, &[0.2, 0.3], &[1.0, 2.0], &[0.5, 0.25, 0.125], 4, 1e-12).unwrap();
        assert!(rec.deviations.iter().all(|&v| v < 1e-12));
        assert!(rec.converged);
    }

    #[test]
    fn lebesgue_weighted_against_exact_integral() {
        // Exact average of 1 + |y|^2 over [0, eps]^2 is 1 + 2 eps^2 / 3.
        let f = integrand(1, 2, Formula::WeightedQuadratic, DomainSpec::FullSpace);
        let f = Integrand { omega: AxisBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), ..f };
        let eps = [0.5, 0.25, 0.125];
        let rec = check_lebesgue_pts(&f, &[0.0, 0.0], &[1.0, 0.0], &eps, 64, 0.05).unwrap();
        for (avg, e) in rec.averages.iter().zip(eps) {
            let exact = 1.0 + 2.0 * e * e / 3.0;
            assert!((avg - exact).abs() < 1e-3 * e * e, "{avg} vs {exact}");
        }
        assert!(rec.deviations.windows(2).all(|w| w[1] < w[0]));
        assert!(rec.converged);
    }

    #[test]
    fn lebesgue_jump_is_flagged() {
        let f = integrand(1, 1, Formula::JumpQuadratic { at: 0.5 }, DomainSpec::FullSpace);
        let rec = check_lebesgue_pts(&f, &[0.5], &[1.0], &[0.25, 0.125, 0.0625], 8, 1e-3).unwrap();
        assert!(!rec.converged);
        assert!(rec.deviations.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn lebesgue_cube_escaping_omega() {
        let f = integrand(1, 1, Formula::Quadratic, DomainSpec::FullSpace);
        assert!(matches!(check_lebesgue_pts(&f, &[0.9], &[1.0], &[0.5], 4, 1e-3), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn sup_on_box_examples() {
        let q = integrand(1, 1, Formula::Quadratic, DomainSpec::FullSpace);
        assert_eq!(sup_on_box(&q, &[0.5], 1.0, 10), Ext::Fin(1.0));
        let dw = integrand(1, 1, Formula::DoubleWell, DomainSpec::FullSpace);
        assert_eq!(sup_on_box(&dw, &[0.5], 2.0, 40), Ext::Fin(9.0));
        let bx = integrand(1, 1, Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 1.0 });
        assert_eq!(sup_on_box(&bx, &[0.5], 2.0, 8), Ext::Inf);
    }

    #[test]
    fn modulus_quadratic_closed_form() {
        // (t^2 - 1) r^2 / (1 + r^2) maximized over the grid r in [0.05, 2].
        let q = integrand(1, 1, Formula::Quadratic, DomainSpec::FullSpace);
        let radii: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
        let t = 0.9;
        let closed = radii.iter().map(|r| (t * t - 1.0) * r * r / (1.0 + r * r)).fold(f64::MIN, f64::max);
        let est =
            ruusc_modulus(&q, &RuUscWeight::default(), t, &radial_samples(0.5, &radii), ModulusKind::Signed).unwrap();
        assert!(est.value <= 0.0);
        assert!((est.value - closed).abs() < 1e-14);
    }

    #[test]
    fn modulus_requires_domain_samples() {
        let bx = integrand(1, 1, Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 1.0 });
        let s = radial_samples(0.5, &[3.0]);
        assert!(matches!(
            ruusc_modulus(&bx, &RuUscWeight::default(), 0.9, &s, ModulusKind::Signed),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn plan_is_reproducible() {
        let p = SamplingPlan::new(20, 9, XiRegion::Shell { rmin: 1.0, rmax: 2.0 });
        let shape = MatrixShape::new(2, 2).unwrap();
        let a = p.samples(shape, &AxisBox::unit(2));
        assert_eq!(a, p.samples(shape, &AxisBox::unit(2)));
        for s in &a {
            let r = frobenius(&s.xi);
            assert!((1.0..=2.0).contains(&r));
        }
    }
}
