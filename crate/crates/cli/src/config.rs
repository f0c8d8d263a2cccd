use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qrelax::corpus::{lookup, FieldSpec, IntegrandSpec};
use qrelax::envelopes::{GridAxis, XiGrid};
use qrelax::integrand::{AxisBox, Integrand};
use qrelax::mesh::CubeSpec;
use qrelax::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Sampled hypothesis reports and the radial modulus.
    Check,
    /// Raw, convex, lamination, Zf and Zhat f tables at one point `x`.
    #[default]
    Envelope,
    /// Representation integral against the dyadic upper bound.
    Relax,
    /// Density ratios of a set function.
    Derive,
    /// The acceptance criteria.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Envelope => "envelope",
            Command::Relax => "relax",
            Command::Derive => "derive",
            Command::Verify => "verify",
        }
    }
}

/// A corpus id, a path to an integrand TOML file, or an inline description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntegrandRef {
    Named(String),
    Inline(Box<IntegrandSpec>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TableChoice {
    Raw,
    Convex,
    Lamination,
    Zl,
    Zhat,
}

pub const ALL_TABLES: [TableChoice; 5] =
    [TableChoice::Raw, TableChoice::Convex, TableChoice::Lamination, TableChoice::Zl, TableChoice::Zhat];

/// A full lattice `[lo, hi]^{md}` with `count` points per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Restrict the lattice to these matrix entries (row-major); the others
    /// stay at zero. Empty means every entry.
    #[serde(default)]
    pub entries: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetFunctionSpec {
    /// Lebesgue measure.
    Volume,
    /// `int_Q (1 + |x|^2) dx` by the midpoint rule.
    WeightedVolume { k: usize },
    /// Dirichlet value of the affine datum with gradient `xi` under the
    /// configured integrand.
    DirichletAffine { xi: Vec<f64> },
}

/// Everything a run needs. Serialized verbatim next to the results, so a
/// run can be replayed from its own output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub integrand: Option<IntegrandRef>,
    /// Point of the envelope tables; defaults to the center of `Omega`.
    pub x: Option<Vec<f64>>,
    pub grid: Option<GridSpec>,
    pub tables: Vec<TableChoice>,
    /// Levels of the lamination recursion.
    pub lamination_levels: usize,
    /// Refinement factor of the lattice the convex envelope is computed on.
    pub convex_refine: usize,
    pub field: Option<FieldSpec>,
    /// Resolution of the mesh carrying `field`.
    pub field_n: usize,
    /// The open set `O`; defaults to the largest cube centered in `Omega`.
    pub region: Option<CubeSpec>,
    /// Cell mesh resolution; defaults to 16 in one dimension and 8 otherwise.
    pub mesh_n: Option<usize>,
    pub depths: Option<Vec<u32>>,
    pub eps_seq: Option<Vec<f64>>,
    pub t_seq: Option<Vec<f64>>,
    pub seed: u64,
    pub tol: Option<f64>,
    pub out: PathBuf,
    /// Sample count of `check`.
    pub samples: usize,
    /// Half width of the gradient box sampled by `check`.
    pub halfwidth: f64,
    /// Points of `derive`; defaults to the center of `Omega`.
    pub points: Vec<Vec<f64>>,
    pub set_function: SetFunctionSpec,
    /// Criteria run by `verify`; empty means all.
    pub only: Vec<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::default(),
            integrand: None,
            x: None,
            grid: None,
            tables: ALL_TABLES.to_vec(),
            lamination_levels: 8,
            convex_refine: 4,
            field: None,
            field_n: 4,
            region: None,
            mesh_n: None,
            depths: None,
            eps_seq: None,
            t_seq: None,
            seed: 0x5eed,
            tol: None,
            out: PathBuf::from("qrelax-out"),
            samples: 2000,
            halfwidth: 2.0,
            points: Vec::new(),
            set_function: SetFunctionSpec::Volume,
            only: Vec::new(),
        }
    }
}

/// The integrand of a run together with its corpus defaults, if any.
pub struct Resolved {
    pub integrand: Integrand,
    pub default_grid: Option<XiGrid>,
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(5e-2)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        match &self.integrand {
            None => Err(Error::Config(format!("`{}` needs an integrand", self.command.name()))),
            Some(IntegrandRef::Inline(spec)) => Ok(Resolved { integrand: spec.build()?, default_grid: None }),
            Some(IntegrandRef::Named(name)) => match lookup(name) {
                Ok(entry) => Ok(Resolved { integrand: entry.integrand, default_grid: Some(entry.default_grid) }),
                Err(unknown) => {
                    let path = Path::new(name);
                    if !path.is_file() {
                        return Err(unknown);
                    }
                    let spec = IntegrandSpec::from_toml(&std::fs::read_to_string(path)?)?;
                    Ok(Resolved { integrand: spec.build()?, default_grid: None })
                }
            },
        }
    }

    pub fn mesh_n(&self, d: usize) -> usize {
        self.mesh_n.unwrap_or(if d == 1 { 16 } else { 8 })
    }

    pub fn x_point(&self, f: &Integrand) -> Vec<f64> {
        self.x.clone().unwrap_or_else(|| center(&f.omega))
    }

    pub fn grid(&self, r: &Resolved) -> Result<XiGrid> {
        let shape = r.integrand.shape;
        match (&self.grid, &r.default_grid) {
            (Some(g), _) if g.entries.is_empty() => XiGrid::full(shape, g.lo, g.hi, g.count),
            (Some(g), _) => {
                let axes =
                    g.entries.iter().map(|&entry| GridAxis { entry, lo: g.lo, hi: g.hi, count: g.count }).collect();
                XiGrid::slice(shape, vec![0.0; shape.len()], axes)
            }
            (None, Some(g)) => Ok(g.clone()),
            (None, None) => XiGrid::full(shape, -2.0, 2.0, 41),
        }
    }

    /// The largest cube centered in `Omega`.
    pub fn region(&self, f: &Integrand) -> Result<CubeSpec> {
        match &self.region {
            Some(o) => Ok(o.clone()),
            None => {
                let half = f.omega.lo.iter().zip(&f.omega.hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
                CubeSpec::new(center(&f.omega), half)
            }
        }
    }
}

pub fn center(b: &AxisBox) -> Vec<f64> {
    b.lo.iter().zip(&b.hi).map(|(a, b)| 0.5 * (a + b)).collect()
}
