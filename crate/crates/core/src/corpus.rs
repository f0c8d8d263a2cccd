//! Built-in integrands with their reference facts, the TOML form of an
//! integrand, and the field descriptions used by the command line.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envelopes::{GridAxis, XiGrid};
use crate::error::{Error, Result};
use crate::ext::Ext;
use crate::integrand::{frobenius_sq, AxisBox, DomainSpec, Formula, Growth, Integrand, MatrixShape, PExponent};
use crate::mesh::{CubeMesh, CubeSpec, GridFunction};

/// How a reference fact is known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Basis {
    /// Immediate from the definitions.
    Trivial,
    /// Recomputed by the named independent oracle in the test suite.
    Derived { oracle: String },
    /// A proved result; the suite checks a sampled consequence.
    Cited { result: String },
}

impl Basis {
    pub fn tag(&self) -> &'static str {
        match self {
            Basis::Trivial => "TRIVIAL",
            Basis::Derived { .. } => "DERIVED",
            Basis::Cited { .. } => "CITED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fact", rename_all = "kebab-case")]
pub enum FactKind {
    /// `f** = f`.
    ConvexEnvelopeIsSelf,
    /// `Zf = f`.
    QuasiconvexEnvelopeIsSelf,
    /// `f** = w(x) (c + max(0, |xi|^2 - 1)^2)`, with `w = 1, c = 0` for the
    /// plain double well and the x-weight with `c = 1` for the G-growth entry.
    DoubleWellHull,
    /// `Zf` vanishes on the segment between the wells.
    ZeroOnWellSegment,
    /// `lim_{t -> 1} f(t xi) = |xi|^2` on the closed box, `+inf` outside.
    RadialLimitOnClosedBox { halfwidth: f64 },
    /// The ru-usc modulus decays like `K (1 - t)`.
    ModulusLinearDecay,
    /// `alpha G <= f <= beta (1 + G)`.
    Sandwich { alpha: f64, beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFact {
    pub kind: FactKind,
    pub basis: Basis,
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub id: &'static str,
    /// Short letter naming the family; several entries can share one.
    pub family: char,
    pub description: &'static str,
    pub integrand: Integrand,
    pub facts: Vec<ReferenceFact>,
    pub default_grid: XiGrid,
    pub default_n: usize,
}

impl CorpusEntry {
    pub fn has(&self, kind: &FactKind) -> bool {
        self.facts.iter().any(|f| &f.kind == kind)
    }

    /// `f**(x, xi)` when a closed form is recorded.
    pub fn known_convex_envelope(&self, x: &[f64], xi: &[f64]) -> Option<Ext> {
        let f = &self.integrand;
        if self.has(&FactKind::ConvexEnvelopeIsSelf) {
            return Some(f.value(x, xi));
        }
        if self.has(&FactKind::DoubleWellHull) {
            let s = (frobenius_sq(xi) - 1.0).max(0.0);
            return Some(Ext::Fin(match &f.formula {
                Formula::DoubleWell => f.scale * s * s,
                Formula::GGrowth { alpha, beta } => {
                    let w = (std::f64::consts::PI * x[0]).sin();
                    f.scale * (alpha + (beta - alpha) * w * w) * (1.0 + s * s)
                }
                _ => return None,
            }));
        }
        None
    }
}

fn scalar_grid(d: usize, count: usize) -> XiGrid {
    XiGrid::full(MatrixShape { m: 1, d }, -2.0, 2.0, count).expect("static grid")
}

fn entry(
    id: &'static str,
    family: char,
    description: &'static str,
    shape: (usize, usize),
    domain: DomainSpec,
    formula: Formula,
    growth: Growth,
    facts: Vec<ReferenceFact>,
    default_grid: XiGrid,
) -> CorpusEntry {
    let shape = MatrixShape { m: shape.0, d: shape.1 };
    let integrand = Integrand::new(id, shape, AxisBox::unit(shape.d), domain, formula)
        .expect("built-in corpus parameters are valid")
        .with_growth(growth);
    CorpusEntry {
        id,
        family,
        description,
        integrand,
        facts,
        default_grid,
        default_n: if shape.d == 1 { 16 } else { 8 },
    }
}

fn trivial(kind: FactKind) -> ReferenceFact {
    ReferenceFact { kind, basis: Basis::Trivial }
}

fn derived(kind: FactKind, oracle: &str) -> ReferenceFact {
    ReferenceFact { kind, basis: Basis::Derived { oracle: oracle.into() } }
}

/// The built-in corpus, in family order.
pub fn corpus() -> Vec<CorpusEntry> {
    let double_well_growth = Growth { p: Some(4.0), h3: Some(1.0), ..Growth::default() };
    let convex_growth = |p: f64| Growth { p: Some(p), c: Some(1.0), h3: Some(1.0), ..Growth::default() };
    let exponent = PExponent { base: 2.0, amplitude: 1.0 };
    let two_well_shape = MatrixShape { m: 2, d: 2 };
    let two_well_grid = XiGrid::slice(
        two_well_shape,
        vec![0.0; 4],
        vec![GridAxis { entry: 0, lo: -1.0, hi: 2.0, count: 13 }, GridAxis { entry: 3, lo: -1.0, hi: 1.0, count: 9 }],
    )
    .expect("static grid");
    vec![
        entry(
            "double-well-1d",
            'a',
            "(xi^2 - 1)^2 in one dimension",
            (1, 1),
            DomainSpec::FullSpace,
            Formula::DoubleWell,
            double_well_growth.clone(),
            vec![derived(FactKind::DoubleWellHull, "lower-hull")],
            scalar_grid(1, 41),
        ),
        entry(
            "double-well-2d",
            'a',
            "(|xi|^2 - 1)^2 for scalar fields on the unit square",
            (1, 2),
            DomainSpec::FullSpace,
            Formula::DoubleWell,
            double_well_growth.clone(),
            vec![derived(FactKind::DoubleWellHull, "lower-hull")],
            scalar_grid(2, 9),
        ),
        entry(
            "two-well-rank-one",
            'b',
            "|xi - A|^2 |xi - B|^2 with A = 0, B = E11",
            (2, 2),
            DomainSpec::FullSpace,
            Formula::TwoWell { a: vec![0.0; 4], b: vec![1.0, 0.0, 0.0, 0.0] },
            Growth { p: Some(4.0), h3: Some(4.0), ..Growth::default() },
            vec![derived(FactKind::ZeroOnWellSegment, "laminate")],
            two_well_grid,
        ),
        entry(
            "box-quadratic",
            'c',
            "|xi|^2 restricted to the closed box of halfwidth 1",
            (1, 1),
            DomainSpec::CenteredBox { halfwidth: 1.0 },
            Formula::Quadratic,
            convex_growth(2.0),
            vec![
                trivial(FactKind::ConvexEnvelopeIsSelf),
                trivial(FactKind::QuasiconvexEnvelopeIsSelf),
                derived(FactKind::RadialLimitOnClosedBox { halfwidth: 1.0 }, "closed-form"),
            ],
            scalar_grid(1, 41),
        ),
        entry(
            "px-growth",
            'd',
            "|xi|^p(x) with p(x) = 2 + sin^2(pi x_1)",
            (1, 1),
            DomainSpec::FullSpace,
            Formula::PxPower { exponent },
            Growth {
                p: Some(2.0),
                c: Some(1.0),
                h3: Some(1.0),
                alpha: Some(1.0),
                px: Some(exponent),
                ..Growth::default()
            },
            vec![
                trivial(FactKind::ConvexEnvelopeIsSelf),
                trivial(FactKind::QuasiconvexEnvelopeIsSelf),
                ReferenceFact {
                    kind: FactKind::ModulusLinearDecay,
                    basis: Basis::Cited { result: "variable-exponent growth gives a modulus of order 1 - t".into() },
                },
            ],
            scalar_grid(1, 41),
        ),
        entry(
            "g-growth",
            'e',
            "(1 + sin^2(pi x_1)) (1 + G(xi)) with G the double well",
            (1, 1),
            DomainSpec::FullSpace,
            Formula::GGrowth { alpha: 1.0, beta: 2.0 },
            Growth { alpha: Some(1.0), beta: Some(2.0), h3: Some(1.0), ..Growth::default() },
            vec![
                trivial(FactKind::Sandwich { alpha: 1.0, beta: 2.0 }),
                derived(FactKind::DoubleWellHull, "lower-hull"),
            ],
            scalar_grid(1, 41),
        ),
        entry(
            "quadratic-2d",
            'f',
            "|xi|^2 for scalar fields on the unit square",
            (1, 2),
            DomainSpec::FullSpace,
            Formula::Quadratic,
            convex_growth(2.0),
            vec![trivial(FactKind::ConvexEnvelopeIsSelf), trivial(FactKind::QuasiconvexEnvelopeIsSelf)],
            scalar_grid(2, 9),
        ),
        entry(
            "power-3",
            'f',
            "|xi|^3 in one dimension",
            (1, 1),
            DomainSpec::FullSpace,
            Formula::Power { p: 3.0 },
            convex_growth(3.0),
            vec![trivial(FactKind::ConvexEnvelopeIsSelf), trivial(FactKind::QuasiconvexEnvelopeIsSelf)],
            scalar_grid(1, 41),
        ),
    ]
}

/// Entry by id.
pub fn lookup(id: &str) -> Result<CorpusEntry> {
    corpus().into_iter().find(|e| e.id == id).ok_or_else(|| Error::UnknownId(id.to_string()))
}

/// All entries of a family letter.
pub fn family(letter: char) -> Result<Vec<CorpusEntry>> {
    let v: Vec<_> = corpus().into_iter().filter(|e| e.family == letter).collect();
    if v.is_empty() {
        return Err(Error::UnknownId(letter.to_string()));
    }
    Ok(v)
}

fn one() -> f64 {
    1.0
}

/// Textual description of an integrand, read from TOML or JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrandSpec {
    pub name: String,
    pub shape: MatrixShape,
    pub omega: AxisBox,
    #[serde(default = "full_space")]
    pub domain: DomainSpec,
    #[serde(default)]
    pub growth: Growth,
    pub formula: FormulaSpec,
    #[serde(default = "one")]
    pub scale: f64,
}

fn full_space() -> DomainSpec {
    DomainSpec::FullSpace
}

/// Serializable subset of [`Formula`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum FormulaSpec {
    Quadratic,
    Power { p: f64 },
    DoubleWell,
    TwoWell { a: Vec<f64>, b: Vec<f64> },
    PxPower { base: f64, amplitude: f64 },
    GGrowth { alpha: f64, beta: f64 },
    WeightedQuadratic,
    JumpQuadratic { at: f64 },
    ExpNorm,
}

impl FormulaSpec {
    fn formula(&self) -> Formula {
        match self.clone() {
            FormulaSpec::Quadratic => Formula::Quadratic,
            FormulaSpec::Power { p } => Formula::Power { p },
            FormulaSpec::DoubleWell => Formula::DoubleWell,
            FormulaSpec::TwoWell { a, b } => Formula::TwoWell { a, b },
            FormulaSpec::PxPower { base, amplitude } => Formula::PxPower { exponent: PExponent { base, amplitude } },
            FormulaSpec::GGrowth { alpha, beta } => Formula::GGrowth { alpha, beta },
            FormulaSpec::WeightedQuadratic => Formula::WeightedQuadratic,
            FormulaSpec::JumpQuadratic { at } => Formula::JumpQuadratic { at },
            FormulaSpec::ExpNorm => Formula::ExpNorm,
        }
    }

    fn from_formula(f: &Formula) -> Result<Self> {
        Ok(match f.clone() {
            Formula::Quadratic => FormulaSpec::Quadratic,
            Formula::Power { p } => FormulaSpec::Power { p },
            Formula::DoubleWell => FormulaSpec::DoubleWell,
            Formula::TwoWell { a, b } => FormulaSpec::TwoWell { a, b },
            Formula::PxPower { exponent } => {
                FormulaSpec::PxPower { base: exponent.base, amplitude: exponent.amplitude }
            }
            Formula::GGrowth { alpha, beta } => FormulaSpec::GGrowth { alpha, beta },
            Formula::WeightedQuadratic => FormulaSpec::WeightedQuadratic,
            Formula::JumpQuadratic { at } => FormulaSpec::JumpQuadratic { at },
            Formula::ExpNorm => FormulaSpec::ExpNorm,
            Formula::Custom(c) => {
                return Err(Error::Config(format!("custom formula `{}` has no textual form", c.label)))
            }
        })
    }
}

impl IntegrandSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn build(&self) -> Result<Integrand> {
        let f = Integrand::new(
            self.name.clone(),
            self.shape,
            self.omega.clone(),
            self.domain.clone(),
            self.formula.formula(),
        )?
        .with_growth(self.growth.clone());
        if self.scale == 1.0 {
            Ok(f)
        } else {
            f.scaled(self.scale)
        }
    }

    pub fn from_integrand(f: &Integrand) -> Result<Self> {
        Ok(IntegrandSpec {
            name: f.name.clone(),
            shape: f.shape,
            omega: f.omega.clone(),
            domain: f.domain.clone(),
            growth: f.growth.clone(),
            formula: FormulaSpec::from_formula(&f.formula)?,
            scale: f.scale,
        })
    }
}

/// A piecewise-affine field on a cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    /// `u(x) = xi x + offset`.
    Affine { xi: Vec<f64>, offset: Vec<f64> },
    /// The affine field plus `amplitude * prod_j sin(pi (x_j - a_j) / side)`
    /// in every component, which vanishes on the boundary of the cube.
    PerturbedAffine { xi: Vec<f64>, offset: Vec<f64>, amplitude: f64 },
}

impl FieldSpec {
    pub fn affine(xi: Vec<f64>, m: usize) -> Self {
        FieldSpec::Affine { xi, offset: vec![0.0; m] }
    }

    pub fn build(&self, cube: &CubeSpec, n: usize, m: usize) -> Result<GridFunction> {
        let mesh = Arc::new(CubeMesh::kuhn(cube.clone(), n, m)?);
        match self {
            FieldSpec::Affine { xi, offset } => GridFunction::affine(mesh, xi, offset),
            FieldSpec::PerturbedAffine { xi, offset, amplitude } => {
                let base = GridFunction::affine(mesh.clone(), xi, offset)?;
                let corner = cube.corner();
                let side = cube.side();
                let bump = GridFunction::from_fn(mesh, |x| {
                    let b: f64 =
                        x.iter().zip(&corner).map(|(v, a)| (std::f64::consts::PI * (v - a) / side).sin()).product();
                    vec![amplitude * b; m]
                })?;
                base.add(&bump)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_family_is_present() {
        for letter in ['a', 'b', 'c', 'd', 'e', 'f'] {
            assert!(!family(letter).unwrap().is_empty());
        }
        assert_eq!(family('a').unwrap().len(), 2);
        assert!(matches!(lookup("nope"), Err(Error::UnknownId(_))));
        assert!(matches!(family('z'), Err(Error::UnknownId(_))));
    }

    #[test]
    fn ids_are_unique_and_facts_have_a_basis() {
        let c = corpus();
        for (i, e) in c.iter().enumerate() {
            assert!(c[i + 1..].iter().all(|o| o.id != e.id));
            assert!(!e.facts.is_empty());
            assert_eq!(e.default_grid.shape, e.integrand.shape);
            assert!(["TRIVIAL", "DERIVED", "CITED"].contains(&e.facts[0].basis.tag()));
        }
    }

    #[test]
    fn known_envelopes_are_below_the_integrand() {
        for e in corpus() {
            let x = vec![0.3; e.integrand.shape.d];
            for k in 0..e.default_grid.len() {
                let xi = e.default_grid.point(k);
                if let Some(v) = e.known_convex_envelope(&x, &xi) {
                    assert!(v <= e.integrand.value(&x, &xi), "{} at {xi:?}", e.id);
                }
            }
        }
        let a = lookup("double-well-1d").unwrap();
        assert_eq!(a.known_convex_envelope(&[0.5], &[0.5]), Some(Ext::Fin(0.0)));
        assert_eq!(a.known_convex_envelope(&[0.5], &[2.0]), Some(Ext::Fin(9.0)));
    }

    #[test]
    fn spec_files_round_trip() {
        for e in corpus() {
            let spec = IntegrandSpec::from_integrand(&e.integrand).unwrap();
            let text = spec.to_toml().unwrap();
            let back = IntegrandSpec::from_toml(&text).unwrap();
            assert_eq!(back, spec);
            let f = back.build().unwrap();
            let xi = vec![0.7; f.shape.len()];
            let x = vec![0.25; f.shape.d];
            assert_eq!(f.value(&x, &xi), e.integrand.value(&x, &xi));
        }
    }

    #[test]
    fn spec_file_by_hand() {
        let text = r#"
name = "box"
shape = { m = 1, d = 1 }
omega = { lo = [0.0], hi = [1.0] }
domain = { kind = "centered-box", halfwidth = 1.0 }
formula = { id = "quadratic" }
"#;
        let f = IntegrandSpec::from_toml(text).unwrap().build().unwrap();
        assert!(f.value(&[0.5], &[1.5]).is_inf());
        assert!(matches!(IntegrandSpec::from_toml("name = 3"), Err(Error::Parse(_))));
        let bad = text.replace("m = 1, d = 1", "m = 1, d = 2");
        assert!(matches!(IntegrandSpec::from_toml(&bad).unwrap().build(), Err(Error::Config(_))));
    }

    #[test]
    fn perturbed_field_keeps_the_trace() {
        let cube = CubeSpec::unit(2);
        let xi = vec![0.5, -0.25];
        let plain = FieldSpec::affine(xi.clone(), 1).build(&cube, 8, 1).unwrap();
        let bumped = FieldSpec::PerturbedAffine { xi, offset: vec![0.0], amplitude: 0.1 }.build(&cube, 8, 1).unwrap();
        let mesh = plain.mesh();
        for i in 0..mesh.node_count() {
            if mesh.is_boundary(i) {
                assert!((plain.node_value(i)[0] - bumped.node_value(i)[0]).abs() < 1e-12);
            }
        }
        assert!((bumped.eval_at(&[0.5, 0.5]).unwrap()[0] - plain.eval_at(&[0.5, 0.5]).unwrap()[0] - 0.1).abs() < 1e-12);
    }
}
