//! `Zf` as the small-cube limit of cell problems, its radial regularization
//! `Zhat f(x, xi) = liminf_{t -> 1-} Zf(x, t xi)`, the regularity functional
//! `omega_delta`, and parallel table fills.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{cell_inf, CellConfig, CellProblem, SolveRecord};
use super::grid::{EnvelopeTable, PointDiagnostic, TableKind, XiGrid};
use crate::error::{check_len, Error, Result};
use crate::ext::{f64_ext, Ext};
use crate::integrand::{AxisBox, DomainSpec, PointwiseEnergy};
use crate::mesh::GridFunction;
use crate::sampling::Halton;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZlConfig {
    /// Decreasing cube sides.
    pub eps_seq: Vec<f64>,
    /// Mesh resolution per side; a shorter list is padded with its last entry.
    pub n_seq: Vec<usize>,
    /// Relative tolerance on the spread of the last three values.
    pub spread_tol: f64,
    pub placement: Placement,
    pub cell: CellConfig,
}

/// Where the cube of side `eps` sits relative to `x`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// `x + eps ]0,1[^d`.
    #[default]
    Corner,
    /// The cube of side `eps` centered at `x`.
    Centered,
}

impl Placement {
    pub fn anchor(self, x: &[f64], eps: f64) -> Vec<f64> {
        match self {
            Placement::Corner => x.to_vec(),
            Placement::Centered => x.iter().map(|v| v - eps / 2.0).collect(),
        }
    }
}

impl Default for ZlConfig {
    fn default() -> Self {
        ZlConfig {
            eps_seq: (0..5).map(|k| 0.25 * 0.5f64.powi(k)).collect(),
            n_seq: vec![16],
            spread_tol: 1e-3,
            placement: Placement::Corner,
            cell: CellConfig::default(),
        }
    }
}

impl ZlConfig {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n_seq = vec![n];
        self
    }

    fn n_at(&self, k: usize) -> usize {
        self.n_seq.get(k).or(self.n_seq.last()).copied().unwrap_or(16)
    }

    fn validate(&self) -> Result<()> {
        if self.eps_seq.is_empty() || self.n_seq.is_empty() {
            return Err(Error::Config("zl needs nonempty eps and n sequences".into()));
        }
        if self.eps_seq.iter().any(|e| !(*e > 0.0)) || self.eps_seq.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("eps sequence must be positive and decreasing".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZlRecord {
    pub eps: Vec<f64>,
    pub n: Vec<usize>,
    pub values: Vec<Ext>,
    /// `true` where the previous solve was reused (x-independent energy,
    /// same resolution).
    pub reused: Vec<bool>,
    pub solves: Vec<SolveRecord>,
    /// `max - min` over the last three values.
    #[serde(with = "f64_ext")]
    pub tail_spread: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct ZlOutcome {
    pub value: Ext,
    pub record: ZlRecord,
    /// Unit-cell minimizer of the last solve.
    pub psi: Option<GridFunction>,
}

fn tail_spread(values: &[Ext]) -> f64 {
    let tail = &values[values.len().saturating_sub(3)..];
    if tail.iter().all(|v| v.is_inf()) {
        return 0.0;
    }
    if tail.iter().any(|v| v.is_inf()) {
        return f64::INFINITY;
    }
    let vals: Vec<f64> = tail.iter().map(|v| v.to_f64()).collect();
    vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min)
}

/// Cell-problem values on `Q_eps(x)` along `cfg.eps_seq`, each solve warm
/// started from the previous minimizer (and the first from `warm`).
pub fn zl<E: PointwiseEnergy + ?Sized>(
    e: &E,
    omega: &AxisBox,
    x: &[f64],
    xi: &[f64],
    cfg: &ZlConfig,
    warm: Option<&GridFunction>,
) -> Result<ZlOutcome> {
    cfg.validate()?;
    let mut values = Vec::new();
    let mut reused = Vec::new();
    let mut solves: Vec<SolveRecord> = Vec::new();
    let mut ns = Vec::new();
    let mut psi: Option<GridFunction> = warm.cloned();
    let mut last_n = None;
    for (k, &eps) in cfg.eps_seq.iter().enumerate() {
        let n = cfg.n_at(k);
        ns.push(n);
        let anchor = cfg.placement.anchor(x, eps);
        let cp = CellProblem::with_energy(e, omega.clone(), &anchor, xi, eps, n).with_config(cfg.cell.clone());
        if e.x_independent() && last_n == Some(n) {
            cp.cube().and_then(|c| {
                if omega.contains(&c.as_box().lo) && omega.contains(&c.as_box().hi) {
                    Ok(())
                } else {
                    Err(Error::OutsideDomain(c.as_box().hi))
                }
            })?;
            values.push(*values.last().expect("a previous value exists"));
            solves.push(solves.last().expect("a previous solve exists").clone());
            reused.push(true);
            continue;
        }
        let sol = cell_inf(&cp, psi.as_ref())?;
        values.push(sol.value);
        solves.push(sol.record);
        reused.push(false);
        last_n = Some(n);
        if sol.value.is_inf() {
            // Infeasible datum: every later cube gives the same answer.
            break;
        }
        psi = Some(sol.psi);
    }
    let value = *values.last().expect("eps sequence is nonempty");
    let spread = tail_spread(&values);
    let converged = spread <= cfg.spread_tol * (1.0 + value.to_f64().abs().min(1e300));
    let record = ZlRecord {
        eps: cfg.eps_seq[..values.len()].to_vec(),
        n: ns,
        values,
        reused,
        solves,
        tail_spread: spread,
        converged,
    };
    Ok(ZlOutcome { value, record, psi })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZhatConfig {
    /// Increasing radial factors below 1.
    pub t_seq: Vec<f64>,
    /// Relative tolerance for the flattening of the last two profile values.
    pub flat_tol: f64,
    pub zl: ZlConfig,
}

impl Default for ZhatConfig {
    fn default() -> Self {
        ZhatConfig { t_seq: default_t_seq(8), flat_tol: 1e-2, zl: ZlConfig::default() }
    }
}

/// `1 - 2^-j` for `j = 1..=count`.
pub fn default_t_seq(count: usize) -> Vec<f64> {
    (1..=count as i32).map(|j| 1.0 - 0.5f64.powi(j)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZhatRecord {
    pub t: Vec<f64>,
    pub profile: Vec<Ext>,
    /// `|last - previous|` of the profile.
    #[serde(with = "f64_ext")]
    pub last_delta: f64,
    pub flattened: bool,
    /// Whether `xi` was rejected for lying at positive distance from the domain.
    pub outside: bool,
}

#[derive(Clone, Debug)]
pub struct ZhatOutcome {
    pub value: Ext,
    pub record: ZhatRecord,
    pub psi: Option<GridFunction>,
}

/// `Zf(x, t xi)` along `cfg.t_seq`; the value is the last profile entry.
pub fn zl_hat<E: PointwiseEnergy + ?Sized>(
    e: &E,
    omega: &AxisBox,
    domain: &DomainSpec,
    x: &[f64],
    xi: &[f64],
    cfg: &ZhatConfig,
) -> Result<ZhatOutcome> {
    check_len(e.shape().len(), xi.len())?;
    if cfg.t_seq.is_empty() || cfg.t_seq.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::Config("t sequence must be nonempty and inside ]0,1[".into()));
    }
    if !domain.contains(xi) {
        let record = ZhatRecord { t: Vec::new(), profile: Vec::new(), last_delta: 0.0, flattened: true, outside: true };
        return Ok(ZhatOutcome { value: Ext::Inf, record, psi: None });
    }
    let mut profile = Vec::with_capacity(cfg.t_seq.len());
    let mut psi: Option<GridFunction> = None;
    for &t in &cfg.t_seq {
        let txi: Vec<f64> = xi.iter().map(|v| t * v).collect();
        let out = zl(e, omega, x, &txi, &cfg.zl, psi.as_ref())?;
        profile.push(out.value);
        psi = out.psi.or(psi);
    }
    let value = *profile.last().expect("t sequence is nonempty");
    let last_delta = match profile.len() {
        0 | 1 => 0.0,
        k => match (profile[k - 1], profile[k - 2]) {
            (Ext::Fin(a), Ext::Fin(b)) => (a - b).abs(),
            (Ext::Inf, Ext::Inf) => 0.0,
            _ => f64::INFINITY,
        },
    };
    let flattened = last_delta <= cfg.flat_tol * (1.0 + value.to_f64().abs().min(1e300));
    let record = ZhatRecord { t: cfg.t_seq.clone(), profile, last_delta, flattened, outside: false };
    Ok(ZhatOutcome { value, record, psi })
}

/// Sampled `omega_delta(xi)`: the largest cell value over cubes of diameter
/// just below `delta` placed at the corners of `Omega` and at `samples`
/// low-discrepancy positions.
pub fn omega_delta<E: PointwiseEnergy + ?Sized>(
    e: &E,
    omega: &AxisBox,
    xi: &[f64],
    delta: f64,
    samples: usize,
    n: usize,
    cfg: &CellConfig,
) -> Result<Ext> {
    if !(delta > 0.0) {
        return Err(Error::Config("delta must be positive".into()));
    }
    let d = omega.dim();
    let widest = omega.lo.iter().zip(&omega.hi).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    let side = (0.999 * delta / (d as f64).sqrt()).min(widest);
    let mut corners: Vec<Vec<f64>> = (0..1usize << d)
        .map(|mask| (0..d).map(|j| if mask >> j & 1 == 1 { omega.hi[j] - side } else { omega.lo[j] }).collect())
        .collect();
    let mut h = Halton::new(d, 0x0de1);
    for _ in 0..samples {
        let u = h.next_point();
        corners.push((0..d).map(|j| omega.lo[j] + u[j] * (omega.hi[j] - omega.lo[j] - side)).collect());
    }
    let values: Result<Vec<Ext>> = corners
        .par_iter()
        .map(|c| {
            let cp = CellProblem::with_energy(e, omega.clone(), c, xi, side, n).with_config(cfg.clone());
            cell_inf(&cp, None).map(|s| s.value)
        })
        .collect();
    Ok(values?.into_iter().fold(Ext::ZERO, Ext::max))
}

/// `Zf(x, .)` on every grid point, in parallel.
pub fn zl_table<E: PointwiseEnergy + ?Sized>(
    e: &E,
    omega: &AxisBox,
    x: &[f64],
    grid: XiGrid,
    cfg: &ZlConfig,
) -> Result<EnvelopeTable> {
    let outs: Result<Vec<(Ext, PointDiagnostic)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let out = zl(e, omega, x, &grid.point(i), cfg, None)?;
            let status = if out.value.is_inf() {
                "infeasible-datum"
            } else if out.record.converged {
                "converged"
            } else {
                "spread"
            };
            Ok((out.value, PointDiagnostic { status: status.into(), delta: out.record.tail_spread }))
        })
        .collect();
    let (values, diagnostics) = outs?.into_iter().unzip();
    let n = (0..cfg.eps_seq.len()).map(|k| cfg.n_at(k)).collect();
    Ok(EnvelopeTable {
        grid,
        x: x.to_vec(),
        kind: TableKind::Quasiconvex { eps: cfg.eps_seq.clone(), n },
        values,
        diagnostics,
    })
}

/// `Zhat f(x, .)` on every grid point, in parallel.
pub fn zhat_table<E: PointwiseEnergy + ?Sized>(
    e: &E,
    omega: &AxisBox,
    domain: &DomainSpec,
    x: &[f64],
    grid: XiGrid,
    cfg: &ZhatConfig,
) -> Result<EnvelopeTable> {
    let outs: Result<Vec<(Ext, PointDiagnostic)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let out = zl_hat(e, omega, domain, x, &grid.point(i), cfg)?;
            let status = if out.record.outside {
                "outside-domain"
            } else if out.record.flattened {
                "flattened"
            } else {
                "not-flat"
            };
            Ok((out.value, PointDiagnostic { status: status.into(), delta: out.record.last_delta }))
        })
        .collect();
    let (values, diagnostics) = outs?.into_iter().unzip();
    Ok(EnvelopeTable { grid, x: x.to_vec(), kind: TableKind::Zhat { t_seq: cfg.t_seq.clone() }, values, diagnostics })
}

/// Residual of applying the cell problem to a tabulated envelope again.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdempotenceProbe {
    pub points: Vec<Vec<f64>>,
    pub table_values: Vec<Ext>,
    pub reapplied: Vec<Ext>,
    /// Largest `table - reapplied` over points with finite table values.
    #[serde(with = "f64_ext")]
    pub residual: f64,
}

/// Solves the cell problem for the (x-independent) energy given by `table`
/// at the grid points `indices`; a positive residual means that further
/// relaxation of the table lowers it.
pub fn idempotence_probe(
    table: &EnvelopeTable,
    indices: &[usize],
    n: usize,
    cfg: &CellConfig,
) -> Result<IdempotenceProbe> {
    let d = table.grid.shape.d;
    let omega = AxisBox::unit(d);
    let x = vec![0.0; d];
    let rows: Result<Vec<(Vec<f64>, Ext, Ext)>> = indices
        .par_iter()
        .map(|&i| {
            let xi = table.grid.point(i);
            let cp = CellProblem::with_energy(table, omega.clone(), &x, &xi, 1.0, n).with_config(cfg.clone());
            Ok((xi, table.values[i], cell_inf(&cp, None)?.value))
        })
        .collect();
    let rows = rows?;
    let residual = rows
        .iter()
        .filter_map(|(_, a, b)| match (a, b) {
            (Ext::Fin(a), Ext::Fin(b)) => Some(a - b),
            _ => None,
        })
        .fold(0.0, f64::max);
    let (points, (table_values, reapplied)) = rows.into_iter().map(|(p, a, b)| (p, (a, b))).unzip();
    Ok(IdempotenceProbe { points, table_values, reapplied, residual })
}
