//! Command-line front end: run configuration, flag handling and the
//! subcommands that write tables and reports to an output directory.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{Command, IntegrandRef, RunConfig, SetFunctionSpec, TableChoice};
pub use run::{execute, Status, ERROR_EXIT};

#[derive(Debug, Parser)]
#[command(name = "qrelax", version, about = "Envelopes, relaxation and set-function densities of integral functionals")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Corpus id or path to an integrand TOML file.
    #[arg(long)]
    pub integrand: Option<String>,
    /// Run configuration (TOML, or JSON by extension); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mesh_n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub eps_seq: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub t_seq: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Point of the envelope tables, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub tables: Option<Vec<TableChoice>>,
    /// Criteria run by `verify`.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<u32>>,
    /// Size of the worker pool.
    #[arg(long, env = "QRELAX_WORKERS")]
    pub workers: Option<usize>,
}

impl Cli {
    /// The configuration file, if any, with every given flag applied.
    pub fn into_config(self) -> qrelax::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.command = self.command;
        if let Some(id) = self.integrand {
            cfg.integrand = Some(IntegrandRef::Named(id));
        }
        if let Some(out) = self.out {
            cfg.out = out;
        }
        cfg.mesh_n = self.mesh_n.or(cfg.mesh_n);
        cfg.depths = self.depths.or(cfg.depths);
        cfg.eps_seq = self.eps_seq.or(cfg.eps_seq);
        cfg.t_seq = self.t_seq.or(cfg.t_seq);
        cfg.tol = self.tol.or(cfg.tol);
        cfg.x = self.x.or(cfg.x);
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(tables) = self.tables {
            cfg.tables = tables;
        }
        if let Some(only) = self.only {
            cfg.only = only;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = std::env::temp_dir().join(format!("qrelax-cli-unit-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "integrand = \"power-3\"\nseed = 7\ntol = 0.1\n[grid]\nlo = -1.0\nhi = 1.0\ncount = 5\n")
            .unwrap();
        let cli =
            Cli::parse_from(["qrelax", "envelope", "--config", path.to_str().unwrap(), "--seed", "9", "--x", "-0.25"]);
        let cfg = cli.into_config().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.tol, Some(0.1));
        assert_eq!(cfg.x, Some(vec![-0.25]));
        assert_eq!(cfg.integrand, Some(IntegrandRef::Named("power-3".into())));
        assert_eq!(cfg.grid.as_ref().map(|g| g.count), Some(5));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig {
            integrand: Some(IntegrandRef::Named("double-well-1d".into())),
            depths: Some(vec![0, 1]),
            field: Some(qrelax::corpus::FieldSpec::affine(vec![0.5], 1)),
            set_function: SetFunctionSpec::DirichletAffine { xi: vec![0.3] },
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn inline_integrands_parse() {
        let text = r#"
            [integrand]
            name = "q"
            shape = { m = 1, d = 1 }
            omega = { lo = [0.0], hi = [1.0] }
            formula = { id = "quadratic" }
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        let f = cfg.resolve().unwrap().integrand;
        assert_eq!(f.value(&[0.5], &[2.0]), qrelax::Ext::Fin(4.0));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(toml::from_str::<RunConfig>("mesh = 4\n").is_err());
    }
}
