use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use midway::matching::DEFAULT_SEED;
use midway::monitoring::{CentreConfig, EggerConfig, EggerWeighting};
use midway::scm::MulticentreConfig;
use midway_cli::manifest::Manifest;
use midway_cli::run::{
    read_input, run_identify, run_match, run_monitor, run_positivity, run_simulate, Dataset, IdentifyRequest,
    InputFile, LoadedDag, MatchRequest, MonitorRequest, PositivityRequest, Report, RunError, SimulateRequest,
};
use midway_cli::service::{self, AppState};
use serde::Serialize;

/// Causal feasibility analysis for observational clinical studies.
#[derive(Debug, Parser)]
#[command(name = "midway", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Patient-level CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column schema (JSON).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Debug, Args)]
struct StratumArgs {
    /// Stratum filter, e.g. "wfns == 1 and age < 70".
    #[arg(long)]
    filter: Option<String>,
    /// Treatment column; defaults to the schema's treatment role.
    #[arg(long)]
    treatment: Option<String>,
    /// Comma-separated propensity covariates; defaults to the schema's
    /// covariate-role columns not fixed by the filter.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Directory for the JSON report, plot data and run manifest.
    #[arg(long, default_value = "midway-out")]
    out: PathBuf,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search back-door adjustment sets for the effect of --x on --y.
    Identify {
        /// Causal graph in the edge DSL.
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Comma-separated nodes conditioned on by design.
        #[arg(long, value_delimiter = ',')]
        forced: Vec<String>,
        /// Comma-separated unobserved nodes.
        #[arg(long, value_delimiter = ',')]
        latent: Vec<String>,
        /// Stratum filter; its columns are conditioned on.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        max_candidates: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Propensity density overlap within a stratum.
    Positivity {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        stratum: StratumArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Seeded caliper matching, balance and RCT-equivalent sample size.
    Match {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        stratum: StratumArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Caliper on the logit scale; default 0.2 sd of the pooled logits.
        #[arg(long)]
        caliper: Option<f64>,
        /// Controls per treated patient.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        ratio: u64,
        #[arg(long)]
        with_replacement: bool,
        /// Trial size to translate into an observational sample size.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        rct_n: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Centre fixed effects and the Egger IV slope.
    Monitor {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        filter: Option<String>,
        /// Centre column; defaults to the schema's centre role.
        #[arg(long)]
        centre: Option<String>,
        #[arg(long)]
        treatment: Option<String>,
        #[arg(long)]
        outcome: Option<String>,
        #[arg(long, value_delimiter = ',')]
        covariates: Option<Vec<String>>,
        /// Reference centre; defaults to the first with data.
        #[arg(long)]
        reference: Option<String>,
        /// Centres with fewer complete rows are reported.
        #[arg(long)]
        min_per_centre: Option<usize>,
        /// Weight every centre equally in the Egger fit.
        #[arg(long)]
        unit_weights: bool,
        /// Replace centre labels with stable pseudonyms in the scatter.
        #[arg(long)]
        anonymize: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sample a dataset from a model file or the multicentre generator.
    Simulate {
        /// Discrete model (JSON).
        #[arg(long, conflicts_with = "multicentre")]
        scm: Option<PathBuf>,
        /// Multicentre generator, optionally configured from a JSON file.
        #[arg(long)]
        multicentre: Option<Option<PathBuf>>,
        /// Rows to draw from the model.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Intervention NODE=LEVEL; repeatable.
        #[arg(long = "do", value_name = "NODE=LEVEL")]
        intervention: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// JSON-over-HTTP service over a loaded dataset and graph.
    Serve {
        #[arg(long, requires = "schema")]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        schema: Option<PathBuf>,
        #[arg(long)]
        dag: Option<PathBuf>,
        #[arg(long, default_value_t = 8787)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Prints the report and writes it, its files and the manifest under `out`.
fn emit<T: Serialize>(
    report: &Report,
    out: &OutArgs,
    seed: Option<u64>,
    config: &T,
    inputs: Vec<InputFile>,
) -> Result<(), RunError> {
    std::fs::create_dir_all(&out.out).map_err(io_err(&out.out))?;
    let config = serde_json::to_value(config).expect("request serializes");
    let mut manifest = Manifest::new(report.command, seed, config, inputs);
    let main = format!("{}.json", report.command);
    let mut files = vec![(main.as_str(), report.json.as_str())];
    files.extend(report.files.iter().map(|(n, c)| (n.as_str(), c.as_str())));
    for (name, content) in files {
        let path = out.out.join(name);
        std::fs::write(&path, content).map_err(io_err(&path))?;
        manifest.outputs.push(name.to_string());
    }
    let path = out.out.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(io_err(&path))?;
    if out.json {
        print!("{}", report.json);
    } else {
        print!("{}", report.text);
    }
    Ok(())
}

fn parse_intervention(items: &[String]) -> Result<std::collections::BTreeMap<String, String>, RunError> {
    items
        .iter()
        .map(|s| match s.split_once('=') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), v.to_string())),
            _ => Err(RunError::Usage(format!("intervention `{s}` is not NODE=LEVEL"))),
        })
        .collect()
}

fn dispatch(command: Command) -> Result<ExitCode, RunError> {
    match command {
        Command::Identify {
            dag,
            x,
            y,
            forced,
            latent,
            filter,
            max_candidates,
            out,
        } => {
            let g = LoadedDag::load(&dag)?;
            let req = IdentifyRequest {
                x,
                y,
                forced,
                latent,
                filter,
                max_candidates,
            };
            let report = run_identify(&g.dag, &req)?;
            emit(&report, &out, None, &req, vec![g.input])?;
            Ok(if report.identified == Some(true) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Positivity { data, stratum, out } => {
            let d = Dataset::load(&data.data, &data.schema)?;
            let req = PositivityRequest {
                filter: stratum.filter,
                treatment: stratum.treatment,
                covariates: stratum.covariates,
                ..Default::default()
            };
            let report = run_positivity(&d, &req)?;
            emit(&report, &out, None, &req, d.inputs)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Match {
            data,
            stratum,
            seed,
            caliper,
            ratio,
            with_replacement,
            rct_n,
            out,
        } => {
            let d = Dataset::load(&data.data, &data.schema)?;
            let req = MatchRequest {
                filter: stratum.filter,
                treatment: stratum.treatment,
                covariates: stratum.covariates,
                seed,
                caliper,
                ratio: ratio as usize,
                with_replacement,
                rct_n,
                ..Default::default()
            };
            let report = run_match(&d, &req)?;
            emit(&report, &out, Some(seed), &req, d.inputs)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Monitor {
            data,
            filter,
            centre,
            treatment,
            outcome,
            covariates,
            reference,
            min_per_centre,
            unit_weights,
            anonymize,
            out,
        } => {
            let d = Dataset::load(&data.data, &data.schema)?;
            let weighting = if unit_weights {
                EggerWeighting::Unit
            } else {
                EggerWeighting::OutcomePrecision
            };
            let req = MonitorRequest {
                filter,
                centre,
                treatment,
                outcome,
                covariates,
                centres: CentreConfig {
                    reference,
                    min_per_centre,
                },
                egger: EggerConfig {
                    weighting,
                    ..Default::default()
                },
                anonymize,
            };
            let report = run_monitor(&d, &req)?;
            emit(&report, &out, None, &req, d.inputs)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            scm,
            multicentre,
            n,
            seed,
            intervention,
            out,
        } => {
            let mut inputs = Vec::new();
            let mut req = SimulateRequest {
                n,
                seed,
                intervention: parse_intervention(&intervention)?,
                ..Default::default()
            };
            if let Some(path) = scm {
                let (text, file) = read_input("scm", &path)?;
                req.scm = Some(serde_json::from_str(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))?);
                inputs.push(file);
            }
            match multicentre {
                Some(Some(path)) => {
                    let (text, file) = read_input("multicentre", &path)?;
                    let cfg: MulticentreConfig =
                        serde_json::from_str(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))?;
                    req.multicentre = Some(cfg);
                    inputs.push(file);
                }
                Some(None) => req.multicentre = Some(MulticentreConfig::default()),
                None => {}
            }
            let report = run_simulate(&req)?;
            emit(&report, &out, Some(seed), &req, inputs)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            data,
            schema,
            dag,
            port,
            host,
        } => {
            let dataset = match (data, schema) {
                (Some(d), Some(s)) => Some(Dataset::load(&d, &s)?),
                _ => None,
            };
            let dag = dag.as_deref().map(LoadedDag::load).transpose()?;
            let state = AppState { dataset, dag };
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().map_err(|source| RunError::Io {
                path: "runtime".into(),
                source,
            })?;
            eprintln!("serving on http://{addr}");
            rt.block_on(service::serve(state, addr)).map_err(|source| RunError::Io {
                path: addr.to_string(),
                source,
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
