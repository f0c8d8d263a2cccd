//! Extended-real-valued integrands `f(x, xi)` on `Omega x M^{m x d}` with a
//! convex, x-independent effective domain, plus sampled hypothesis checkers.

mod checks;

pub use checks::{
    check_coercivity, check_h3, check_h3_with, check_lebesgue_pts, ruusc_modulus, sup_on_box, HypothesisReport,
    LebesgueRecord, ModulusEstimate, ModulusKind, RuUscWeight, Sample, SamplingPlan, Witness, XSampling, XiRegion,
};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::ext::Ext;

/// Relative tolerance for boundary membership; boundary points are members.
pub const MEMBERSHIP_RTOL: f64 = 1e-12;

/// Dimensions of the matrix space `M^{m x d}`, flattened row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixShape {
    pub m: usize,
    pub d: usize,
}

impl MatrixShape {
    pub fn new(m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::Config(format!("matrix shape must have m, d >= 1 (got {m}x{d})")));
        }
        Ok(MatrixShape { m, d })
    }

    /// Number of matrix entries `m * d`.
    pub fn len(&self) -> usize {
        self.m * self.d
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unit matrix `e_{ij}` (one at row `i`, column `j`).
    pub fn unit(&self, i: usize, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[i * self.d + j] = 1.0;
        v
    }
}

pub fn frobenius_sq(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum()
}

pub fn frobenius(xi: &[f64]) -> f64 {
    frobenius_sq(xi).sqrt()
}

/// Axis-aligned box in `R^d`, used for `Omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config("box corners must have equal nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Config(format!("degenerate box {lo:?}..{hi:?}")));
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        AxisBox { lo: vec![0.0; d], hi: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Closed-box membership with a relative slack of `MEMBERSHIP_RTOL`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&a, &b))| {
                let slack = MEMBERSHIP_RTOL * (1.0 + a.abs().max(b.abs()));
                v >= a - slack && v <= b + slack
            })
    }

    /// Maps a point of `[0,1)^d` into the box.
    pub fn map_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lo.iter().zip(&self.hi)).map(|(&t, (&a, &b))| a + t * (b - a)).collect()
    }
}

/// A half-space `{xi : normal . xi <= offset}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Convex effective domain `dom f(x, .)`, identical for every `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainSpec {
    FullSpace,
    /// `max_ij |xi_ij| <= halfwidth`.
    CenteredBox {
        halfwidth: f64,
    },
    /// `|xi| <= radius` in the Frobenius norm.
    Ball {
        radius: f64,
    },
    HalfSpaceIntersection {
        planes: Vec<HalfSpace>,
    },
}

impl DomainSpec {
    pub fn validate(&self, len: usize) -> Result<()> {
        match self {
            DomainSpec::FullSpace => Ok(()),
            DomainSpec::CenteredBox { halfwidth: r } | DomainSpec::Ball { radius: r } => {
                if r.is_finite() && *r >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("domain radius must be finite and nonnegative, got {r}")))
                }
            }
            DomainSpec::HalfSpaceIntersection { planes } => {
                for p in planes {
                    check_len(len, p.normal.len())?;
                    if !p.offset.is_finite() || p.normal.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Config("half-space parameters must be finite".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Closed membership with relative boundary tolerance `MEMBERSHIP_RTOL`.
    pub fn contains(&self, xi: &[f64]) -> bool {
        match self {
            DomainSpec::FullSpace => true,
            DomainSpec::CenteredBox { halfwidth } => {
                let lim = halfwidth * (1.0 + MEMBERSHIP_RTOL);
                xi.iter().all(|v| v.abs() <= lim)
            }
            DomainSpec::Ball { radius } => frobenius(xi) <= radius * (1.0 + MEMBERSHIP_RTOL),
            DomainSpec::HalfSpaceIntersection { planes } => planes.iter().all(|p| {
                let dot: f64 = p.normal.iter().zip(xi).map(|(a, b)| a * b).sum();
                let scale = p.offset.abs() + frobenius(&p.normal) * frobenius(xi);
                dot <= p.offset + MEMBERSHIP_RTOL * scale
            }),
        }
    }

    /// Euclidean distance to the domain when it is easy to compute (box, ball,
    /// full space); `None` for half-space intersections.
    pub fn distance(&self, xi: &[f64]) -> Option<f64> {
        match self {
            DomainSpec::FullSpace => Some(0.0),
            DomainSpec::CenteredBox { halfwidth } => {
                Some(xi.iter().map(|v| (v.abs() - halfwidth).max(0.0).powi(2)).sum::<f64>().sqrt())
            }
            DomainSpec::Ball { radius } => Some((frobenius(xi) - radius).max(0.0)),
            DomainSpec::HalfSpaceIntersection { .. } => None,
        }
    }
}

/// Variable exponent `p(x) = base + amplitude * sin^2(pi x_1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PExponent {
    pub base: f64,
    pub amplitude: f64,
}

impl PExponent {
    pub fn at(&self, x: &[f64]) -> f64 {
        let s = (std::f64::consts::PI * x[0]).sin();
        self.base + self.amplitude * s * s
    }

    pub fn max(&self) -> f64 {
        self.base + self.amplitude.max(0.0)
    }
}

/// Declared growth profile; every field is optional and only the checkers
/// that need a constant require it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    /// Coercivity exponent, `p > d`.
    pub p: Option<f64>,
    /// Coercivity constant `c` in `c|xi|^p <= f`.
    pub c: Option<f64>,
    /// Constant `C` of the convex-combination bound.
    pub h3: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub px: Option<PExponent>,
}

/// User-supplied formula for library use and tests; it has no TOML form.
#[derive(Clone)]
pub struct CustomFormula {
    pub label: String,
    pub x_independent: bool,
    pub eval: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFormula").field("label", &self.label).finish_non_exhaustive()
    }
}

/// Built-in integrand formulas (finite part; the domain indicator is added by
/// [`Integrand`]).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Formula {
    /// `|xi|^2`
    Quadratic,
    /// `|xi|^p`
    Power { p: f64 },
    /// `(|xi|^2 - 1)^2`
    DoubleWell,
    /// `|xi - A|^2 |xi - B|^2`
    TwoWell { a: Vec<f64>, b: Vec<f64> },
    /// `|xi|^{p(x)}`
    PxPower { exponent: PExponent },
    /// `(alpha + (beta - alpha) sin^2(pi x_1)) (1 + (|xi|^2 - 1)^2)`
    GGrowth { alpha: f64, beta: f64 },
    /// `(1 + |x|^2) |xi|^2`
    WeightedQuadratic,
    /// `(1 + [x_1 > at]) |xi|^2`
    JumpQuadratic { at: f64 },
    /// `exp(|xi|)`
    ExpNorm,
    #[serde(skip)]
    Custom(CustomFormula),
}

impl Formula {
    pub fn x_independent(&self) -> bool {
        match self {
            Formula::PxPower { .. }
            | Formula::GGrowth { .. }
            | Formula::WeightedQuadratic
            | Formula::JumpQuadratic { .. } => false,
            Formula::Custom(c) => c.x_independent,
            _ => true,
        }
    }

    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        match self {
            Formula::Quadratic => frobenius_sq(xi),
            Formula::Power { p } => frobenius(xi).powf(*p),
            Formula::DoubleWell => {
                let s = frobenius_sq(xi) - 1.0;
                s * s
            }
            Formula::TwoWell { a, b } => {
                let da: f64 = xi.iter().zip(a).map(|(v, w)| (v - w) * (v - w)).sum();
                let db: f64 = xi.iter().zip(b).map(|(v, w)| (v - w) * (v - w)).sum();
                da * db
            }
            Formula::PxPower { exponent } => frobenius(xi).powf(exponent.at(x)),
            Formula::GGrowth { alpha, beta } => {
                let s = (std::f64::consts::PI * x[0]).sin();
                let w = frobenius_sq(xi) - 1.0;
                (alpha + (beta - alpha) * s * s) * (1.0 + w * w)
            }
            Formula::WeightedQuadratic => (1.0 + frobenius_sq(x)) * frobenius_sq(xi),
            Formula::JumpQuadratic { at } => {
                let w = if x[0] > *at { 2.0 } else { 1.0 };
                w * frobenius_sq(xi)
            }
            Formula::ExpNorm => frobenius(xi).exp(),
            Formula::Custom(c) => (c.eval)(x, xi),
        }
    }
}

/// Anything that can be evaluated pointwise as an extended-real integrand:
/// integrands themselves, interpolated envelope tables, and envelope
/// evaluators built on cell problems.
pub trait PointwiseEnergy: Sync {
    fn shape(&self) -> MatrixShape;
    fn eval(&self, x: &[f64], xi: &[f64]) -> Ext;

    /// True when `eval` ignores `x`; cell problems then depend on the cube
    /// only through the mesh resolution.
    fn x_independent(&self) -> bool {
        false
    }
}

/// An integrand `f : Omega x M^{m x d} -> [0, +inf]`.
#[derive(Clone, Debug)]
pub struct Integrand {
    pub name: String,
    pub shape: MatrixShape,
    pub omega: AxisBox,
    pub domain: DomainSpec,
    pub formula: Formula,
    pub growth: Growth,
    /// Positive multiplier applied to the formula.
    pub scale: f64,
}

impl Integrand {
    pub fn new(
        name: impl Into<String>,
        shape: MatrixShape,
        omega: AxisBox,
        domain: DomainSpec,
        formula: Formula,
    ) -> Result<Self> {
        if omega.dim() != shape.d {
            return Err(Error::Config(format!(
                "omega has dimension {} but the matrix shape has d = {}",
                omega.dim(),
                shape.d
            )));
        }
        domain.validate(shape.len())?;
        if let Formula::TwoWell { a, b } = &formula {
            check_len(shape.len(), a.len())?;
            check_len(shape.len(), b.len())?;
        }
        Ok(Integrand { name: name.into(), shape, omega, domain, formula, growth: Growth::default(), scale: 1.0 })
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = growth;
        self
    }

    /// The integrand `s * f` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Argument(format!("scale factor must be positive and finite, got {s}")));
        }
        let mut g = self.clone();
        g.scale *= s;
        Ok(g)
    }

    pub fn x_independent(&self) -> bool {
        self.formula.x_independent()
    }

    pub fn in_domain(&self, xi: &[f64]) -> bool {
        self.domain.contains(xi)
    }

    /// Unchecked evaluation used in inner loops.
    #[inline]
    pub fn value(&self, x: &[f64], xi: &[f64]) -> Ext {
        if !self.domain.contains(xi) {
            return Ext::Inf;
        }
        let v = self.scale * self.formula.value(x, xi);
        if v.is_nan() {
            // Only reachable through custom formulas.
            return Ext::Inf;
        }
        Ext::from_f64(v.max(0.0))
    }

    /// Checked evaluation `f(x, xi)`.
    pub fn eval_ext(&self, x: &[f64], xi: &[f64]) -> Result<Ext> {
        check_len(self.shape.len(), xi.len())?;
        check_len(self.shape.d, x.len())?;
        if !self.omega.contains(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        Ok(self.value(x, xi))
    }
}

impl PointwiseEnergy for Integrand {
    fn shape(&self) -> MatrixShape {
        self.shape
    }

    fn eval(&self, x: &[f64], xi: &[f64]) -> Ext {
        self.value(x, xi)
    }

    fn x_independent(&self) -> bool {
        self.formula.x_independent()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(formula: Formula, domain: DomainSpec) -> Integrand {
        Integrand::new("t", MatrixShape::new(1, 1).unwrap(), AxisBox::unit(1), domain, formula).unwrap()
    }

    #[test]
    fn eval_examples() {
        let q = scalar(Formula::Quadratic, DomainSpec::FullSpace);
        assert_eq!(q.eval_ext(&[0.3], &[0.0]).unwrap(), Ext::Fin(0.0));
        let dw = scalar(Formula::DoubleWell, DomainSpec::FullSpace);
        assert_eq!(dw.eval_ext(&[0.3], &[1.0]).unwrap(), Ext::Fin(0.0));
        assert_eq!(dw.eval_ext(&[0.3], &[-1.0]).unwrap(), Ext::Fin(0.0));
        let bx = scalar(Formula::Quadratic, DomainSpec::CenteredBox { halfwidth: 1.0 });
        assert_eq!(bx.eval_ext(&[0.3], &[2.0]).unwrap(), Ext::Inf);
        assert_eq!(bx.eval_ext(&[0.3], &[1.0]).unwrap(), Ext::Fin(1.0));
    }

    #[test]
    fn eval_errors() {
        let q = scalar(Formula::Quadratic, DomainSpec::FullSpace);
        assert!(matches!(q.eval_ext(&[0.3], &[0.0, 1.0]), Err(Error::Shape { .. })));
        assert!(matches!(q.eval_ext(&[1.5], &[0.0]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn domain_contains_origin_and_half_axes() {
        let rho = 1.0;
        for dom in [DomainSpec::CenteredBox { halfwidth: rho }, DomainSpec::Ball { radius: rho }] {
            assert!(dom.contains(&[0.0, 0.0, 0.0, 0.0]));
            for k in 0..4 {
                let mut e = vec![0.0; 4];
                e[k] = rho / 2.0;
                assert!(dom.contains(&e));
                e[k] = -rho / 2.0;
                assert!(dom.contains(&e));
            }
        }
        let hs = DomainSpec::HalfSpaceIntersection {
            planes: vec![HalfSpace { normal: vec![1.0], offset: 1.0 }, HalfSpace { normal: vec![-1.0], offset: 2.0 }],
        };
        assert!(hs.contains(&[1.0]) && hs.contains(&[-2.0]) && !hs.contains(&[1.1]));
    }

    #[test]
    fn boundary_tolerance_is_relative() {
        let dom = DomainSpec::CenteredBox { halfwidth: 1.0 };
        assert!(dom.contains(&[1.0 + 1e-14]));
        assert!(!dom.contains(&[1.0 + 1e-9]));
    }

    #[test]
    fn scaling_multiplies_values() {
        let dw = scalar(Formula::DoubleWell, DomainSpec::FullSpace);
        let s = dw.scaled(3.0).unwrap();
        assert_eq!(s.value(&[0.1], &[0.5]), Ext::Fin(3.0 * 0.5625));
        assert!(dw.scaled(0.0).is_err());
    }

    #[test]
    fn px_exponent() {
        let e = PExponent { base: 2.0, amplitude: 1.0 };
        assert!((e.at(&[0.5]) - 3.0).abs() < 1e-15);
        assert!((e.at(&[0.0]) - 2.0).abs() < 1e-15);
    }
}
