use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use qrelax::corpus::FieldSpec;
use qrelax::envelopes::{
    convex_envelope, default_t_seq, lamination_envelope, zhat_table, zl_table, CellConfig, EnvelopeTable, ZhatConfig,
    ZlConfig,
};
use qrelax::integrand::{
    check_coercivity, check_h3, ruusc_modulus, HypothesisReport, ModulusKind, RuUscWeight, SamplingPlan, XiRegion,
};
use qrelax::relaxation::{relax, RelaxConfig};
use qrelax::setfun::{set_derivative, DensityRecord, SetFunction};
use qrelax::{Error, Ext, Result};

use crate::config::{center, Command, RunConfig, SetFunctionSpec, TableChoice};

/// Result of a run that completed without error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some asserted inequality failed.
    Violation,
}

impl Status {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Status::Ok
        } else {
            Status::Violation
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Violation => 1,
        }
    }
}

/// Exit code for configuration, input and numeric errors.
pub const ERROR_EXIT: u8 = 2;

pub fn execute(cfg: &RunConfig) -> Result<Status> {
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("run.toml"), cfg.to_toml()?)?;
    let started = Instant::now();
    let (status, summary) = match cfg.command {
        Command::Check => check(cfg)?,
        Command::Envelope => envelope(cfg)?,
        Command::Relax => relaxation(cfg)?,
        Command::Derive => derive(cfg)?,
        Command::Verify => verify(cfg)?,
    };
    let meta = json!({
        "command": cfg.command.name(),
        "config": cfg,
        "status": if status == Status::Ok { "ok" } else { "violation" },
        "started_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "elapsed_seconds": started.elapsed().as_secs_f64(),
        "result": summary,
    });
    write_json(&cfg.out.join(format!("{}.json", cfg.command.name())), &meta)?;
    Ok(status)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))
}

fn csv_row(w: &mut csv::Writer<File>, row: Vec<String>) -> Result<()> {
    w.write_record(&row).map_err(|e| Error::Parse(e.to_string()))
}

/// The shared cell settings with the run seed.
fn cell_config(cfg: &RunConfig) -> CellConfig {
    CellConfig { seed: cfg.seed, ..CellConfig::default() }
}

fn zl_config(cfg: &RunConfig, d: usize) -> ZlConfig {
    let mut z = ZlConfig { cell: cell_config(cfg), ..ZlConfig::default() }.with_n(cfg.mesh_n(d));
    if let Some(eps) = &cfg.eps_seq {
        z.eps_seq = eps.clone();
    }
    z
}

fn zhat_config(cfg: &RunConfig, d: usize) -> ZhatConfig {
    let mut z = ZhatConfig { zl: zl_config(cfg, d), ..ZhatConfig::default() };
    if let Some(t) = &cfg.t_seq {
        z.t_seq = t.clone();
    }
    z
}

fn check(cfg: &RunConfig) -> Result<(Status, Value)> {
    let f = cfg.resolve()?.integrand;
    let plan = SamplingPlan::new(cfg.samples, cfg.seed, XiRegion::Box { halfwidth: cfg.halfwidth });
    let mut reports: Vec<HypothesisReport> = Vec::new();
    if f.growth.p.is_some() && f.growth.c.is_some() {
        reports.push(check_coercivity(&f, &plan)?);
    }
    if f.growth.h3.is_some() {
        reports.push(check_h3(&f, &plan)?);
    }
    let samples = plan.samples(f.shape, &f.omega);
    let t_seq = cfg.t_seq.clone().unwrap_or_else(|| default_t_seq(8));
    let weight = RuUscWeight::default();
    let mut w = csv_writer(&cfg.out.join("modulus.csv"))?;
    csv_row(&mut w, vec!["t".into(), "signed".into(), "absolute".into()])?;
    let mut modulus = Vec::with_capacity(t_seq.len());
    for &t in &t_seq {
        let signed = ruusc_modulus(&f, &weight, t, &samples, ModulusKind::Signed)?;
        let absolute = ruusc_modulus(&f, &weight, t, &samples, ModulusKind::Absolute)?;
        csv_row(&mut w, vec![t.to_string(), signed.value.to_string(), absolute.value.to_string()])?;
        modulus.push(json!({ "signed": signed, "absolute": absolute }));
    }
    w.flush()?;
    for r in &reports {
        println!("{}: worst residual {:.3e} over {} samples", r.hypothesis, r.worst, r.samples);
    }
    let ok = reports.iter().all(HypothesisReport::passed);
    Ok((Status::from_ok(ok), json!({ "hypotheses": reports, "modulus": modulus })))
}

fn table_name(t: TableChoice) -> &'static str {
    match t {
        TableChoice::Raw => "raw",
        TableChoice::Convex => "convex",
        TableChoice::Lamination => "lamination",
        TableChoice::Zl => "zl",
        TableChoice::Zhat => "zhat",
    }
}

/// Pairs `(lower, upper)` of the envelope ordering.
const ORDERING: [(TableChoice, TableChoice); 4] = [
    (TableChoice::Convex, TableChoice::Zl),
    (TableChoice::Zl, TableChoice::Lamination),
    (TableChoice::Lamination, TableChoice::Raw),
    (TableChoice::Convex, TableChoice::Zhat),
];

/// Worst `lo - hi - tol (1 + max(|lo|, |hi|))` over the grid.
fn ordering_excess(lo: &EnvelopeTable, hi: &EnvelopeTable, tol: f64) -> f64 {
    lo.values
        .iter()
        .zip(&hi.values)
        .map(|(&a, &b)| match (a, b) {
            (Ext::Fin(a), Ext::Fin(b)) => a - b - tol * (1.0 + a.abs().max(b.abs())),
            (Ext::Inf, Ext::Fin(_)) => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn envelope(cfg: &RunConfig) -> Result<(Status, Value)> {
    let resolved = cfg.resolve()?;
    let f = &resolved.integrand;
    let x = cfg.x_point(f);
    let grid = cfg.grid(&resolved)?;
    let d = f.shape.d;
    let raw = EnvelopeTable::raw(f, &x, grid.clone())?;
    let mut tables: Vec<(TableChoice, EnvelopeTable)> = Vec::new();
    for &choice in &cfg.tables {
        if tables.iter().any(|(c, _)| *c == choice) {
            continue;
        }
        let table = match choice {
            TableChoice::Raw => raw.clone(),
            TableChoice::Convex => {
                let k = cfg.convex_refine.max(1);
                convex_envelope(&EnvelopeTable::raw(f, &x, grid.refined(k)?)?)?.subsample(&grid, k)?
            }
            TableChoice::Lamination => lamination_envelope(&raw, cfg.lamination_levels)?,
            TableChoice::Zl => zl_table(f, &f.omega, &x, grid.clone(), &zl_config(cfg, d))?,
            TableChoice::Zhat => zhat_table(f, &f.omega, &f.domain, &x, grid.clone(), &zhat_config(cfg, d))?,
        };
        table.write_csv(File::create(cfg.out.join(format!("{}.csv", table_name(choice))))?)?;
        tables.push((choice, table));
    }
    let find = |c: TableChoice| tables.iter().find(|(t, _)| *t == c).map(|(_, t)| t);
    let mut chain = Vec::new();
    let mut ok = true;
    for (lo, hi) in ORDERING {
        if let (Some(a), Some(b)) = (find(lo), find(hi)) {
            let excess = ordering_excess(a, b, cfg.tol());
            ok &= excess <= 0.0;
            println!("{} <= {}: worst excess {excess:.3e}", table_name(lo), table_name(hi));
            chain.push(
                json!({ "lower": table_name(lo), "upper": table_name(hi), "excess": excess, "holds": excess <= 0.0 }),
            );
        }
    }
    let metas: Vec<Value> = tables
        .iter()
        .map(|(c, t)| json!({ "table": table_name(*c), "file": format!("{}.csv", table_name(*c)), "meta": t.meta() }))
        .collect();
    Ok((Status::from_ok(ok), json!({ "integrand": f.name, "x": x, "tables": metas, "ordering": chain })))
}

fn relaxation(cfg: &RunConfig) -> Result<(Status, Value)> {
    let f = cfg.resolve()?.integrand;
    let (m, d) = (f.shape.m, f.shape.d);
    let o = cfg.region(&f)?;
    let field = cfg.field.clone().unwrap_or_else(|| FieldSpec::affine(vec![0.0; m * d], m));
    let u = field.build(&o, cfg.field_n, m)?;
    let mut rcfg =
        RelaxConfig { cell_n: cfg.mesh_n(d), cell: cell_config(cfg), tol: cfg.tol(), ..RelaxConfig::default() };
    rcfg.envelope = zhat_config(cfg, d);
    if let Some(depths) = &cfg.depths {
        rcfg.depths = depths.clone();
    }
    let report = relax(&f, &u, &o, &rcfg)?;
    let mut w = csv_writer(&cfg.out.join("history.csv"))?;
    csv_row(&mut w, ["depth", "cells", "value", "running", "glued_energy"].map(String::from).to_vec())?;
    for (h, g) in report.history.iter().zip(&report.glued_energy) {
        csv_row(
            &mut w,
            vec![h.depth.to_string(), h.cells.to_string(), h.value.to_string(), h.running.to_string(), g.to_string()],
        )?;
    }
    w.flush()?;
    println!(
        "representation {}, direct upper {}, gap {:.3e}, tolerance {:.3e}",
        report.representation, report.direct_upper, report.gap, report.tolerance
    );
    let ok = report.two_sided && report.glued_consistent;
    Ok((Status::from_ok(ok), json!({ "integrand": f.name, "region": o, "report": report })))
}

fn derive(cfg: &RunConfig) -> Result<(Status, Value)> {
    let resolved = if cfg.integrand.is_some() { Some(cfg.resolve()?) } else { None };
    let points = match (&cfg.points, &resolved) {
        (p, _) if !p.is_empty() => p.clone(),
        (_, Some(r)) => vec![center(&r.integrand.omega)],
        _ => return Err(Error::Config("`derive` needs points or an integrand".into())),
    };
    let m = match &cfg.set_function {
        SetFunctionSpec::Volume => SetFunction::volume(),
        SetFunctionSpec::WeightedVolume { k } => {
            SetFunction::density("weighted-volume", |x| 1.0 + x.iter().map(|v| v * v).sum::<f64>(), *k)
        }
        SetFunctionSpec::DirichletAffine { xi } => {
            let f = resolved
                .as_ref()
                .map(|r| r.integrand.clone())
                .ok_or_else(|| Error::Config("a Dirichlet set function needs an integrand".into()))?;
            let d = f.shape.d;
            SetFunction::dirichlet_affine(Arc::new(f), xi.clone(), cfg.mesh_n(d), cell_config(cfg))
        }
    };
    let eps = cfg.eps_seq.clone().unwrap_or_else(|| (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect());
    let records: Vec<DensityRecord> =
        points.iter().map(|x| set_derivative(&m, x, &eps, cfg.tol())).collect::<Result<_>>()?;
    let dim = points[0].len();
    let mut w = csv_writer(&cfg.out.join("derive.csv"))?;
    let mut header = vec!["point".to_string()];
    header.extend((0..dim).map(|j| format!("x_{j}")));
    header.extend(["scale", "value"].map(String::from));
    csv_row(&mut w, header)?;
    for (i, r) in records.iter().enumerate() {
        for (e, v) in r.eps.iter().zip(&r.ratios) {
            let mut row = vec![i.to_string()];
            row.extend(r.x.iter().map(|c| c.to_string()));
            row.extend([e.to_string(), v.to_string()]);
            csv_row(&mut w, row)?;
        }
    }
    w.flush()?;
    for r in &records {
        println!("{:?}: limit {}, tail spread {:.3e}, converged {}", r.x, r.limit, r.tail_spread, r.converged);
    }
    let ok = records.iter().all(|r| r.converged);
    Ok((Status::from_ok(ok), json!({ "set_function": m.label, "records": records })))
}

fn verify(cfg: &RunConfig) -> Result<(Status, Value)> {
    let outcomes = qrelax_verify::run(&cfg.only, |o| println!("{}", o.line()));
    let ok = outcomes.iter().all(|o| o.passed);
    Ok((Status::from_ok(ok), json!({ "outcomes": outcomes })))
}
