use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use fairlens::harness::{
    cmd_audit, cmd_reproduce_separation, cmd_table, emit_report, exit_code, OutputFormat,
    RunConfig, DEFAULT_TABLE_PAIRS, EXIT_DISAGREEMENT, EXIT_OK,
};
use fairlens::Error;

/// Group-fairness audits of the Gaussian insurance-pricing model.
#[derive(Parser)]
#[command(name = "fairlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, price and test all three axioms against their analytic verdicts.
    Audit {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Reproduce published numbers.
    Reproduce {
        #[command(subcommand)]
        what: Reproduce,
    },
    /// YES/NO grid of the three axioms over correlation regimes.
    Table {
        /// A `rho1,rho2` pair; repeat for several rows. Defaults to one
        /// representative per regime.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(f64, f64)>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Subcommand)]
enum Reproduce {
    /// Monte Carlo second moments of X1 given Y = 0, with and without D = 0.
    SeparationMoments {
        #[arg(long, default_value_t = 10_000_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho2: Option<f64>,
    /// Pricing functional: best_estimate, unawareness, discrimination_free,
    /// null, or subset:<covariates> such as subset:x1.
    #[arg(long)]
    pricing: Option<String>,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON file of run settings; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Data-generation seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_permutations: Option<usize>,
    /// Bins of the conditioning variable in the separation and sufficiency tests.
    #[arg(long)]
    n_bins: Option<usize>,
    /// Seed of the permutation streams.
    #[arg(long)]
    test_seed: Option<u64>,
    /// Test raw values instead of ranks.
    #[arg(long)]
    no_rank_transform: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; inferred from the extension of --out when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `rho1,rho2`, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown format `{s}`"))
}

fn overrides(model: Option<&ModelArgs>, common: &CommonArgs) -> Map<String, Value> {
    let mut top = Map::new();
    let mut test = Map::new();
    let put = |m: &mut Map<String, Value>, k: &str, v: Option<Value>| {
        if let Some(v) = v {
            m.insert(k.to_owned(), v);
        }
    };
    if let Some(m) = model {
        put(&mut top, "rho1", m.rho1.map(|v| json!(v)));
        put(&mut top, "rho2", m.rho2.map(|v| json!(v)));
        put(&mut top, "pricing", m.pricing.as_ref().map(|v| json!(v)));
    }
    put(&mut top, "n", common.n.map(|v| json!(v)));
    put(&mut top, "seed", common.seed.map(|v| json!(v)));
    put(
        &mut top,
        "output_path",
        common.out.as_ref().map(|v| json!(v)),
    );
    put(&mut top, "output_format", common.format.map(|v| json!(v)));
    put(&mut test, "alpha", common.alpha.map(|v| json!(v)));
    put(
        &mut test,
        "n_permutations",
        common.n_permutations.map(|v| json!(v)),
    );
    put(&mut test, "n_bins_y", common.n_bins.map(|v| json!(v)));
    put(&mut test, "seed", common.test_seed.map(|v| json!(v)));
    put(
        &mut test,
        "rank_transform",
        common.no_rank_transform.then_some(json!(false)),
    );
    if !test.is_empty() {
        top.insert("test".to_owned(), Value::Object(test));
    }
    top
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Audit { model, common } => {
            let cfg =
                RunConfig::layered(common.config.as_deref(), overrides(Some(&model), &common))?;
            let report = cmd_audit(&cfg)?;
            print!("{}", report.render());
            if let Some(path) = &cfg.output_path {
                emit_report(&report, cfg.output_format, path)?;
            }
            Ok(if report.disagreements().is_empty() {
                EXIT_OK
            } else {
                EXIT_DISAGREEMENT
            })
        }
        Command::Reproduce {
            what: Reproduce::SeparationMoments { n, seed, out },
        } => {
            let rep = cmd_reproduce_separation(n, seed)?;
            print!("{}", rep.render());
            if let Some(path) = &out {
                rep.emit(path)?;
            }
            let consistent = rep.value1.z_distance(&rep.value1_quadrature) <= 4.0
                && rep.value2.z_distance(&rep.value2_quadrature) <= 4.0;
            Ok(if rep.value1_lt_value2 && rep.value2_lt_one && consistent {
                EXIT_OK
            } else {
                EXIT_DISAGREEMENT
            })
        }
        Command::Table { pairs, common } => {
            let cfg = RunConfig::layered(common.config.as_deref(), overrides(None, &common))?;
            let pairs = if pairs.is_empty() {
                DEFAULT_TABLE_PAIRS.to_vec()
            } else {
                pairs
            };
            let table = cmd_table(&pairs, cfg.n, cfg.seed, &cfg.test)?;
            print!("{}", table.render());
            if let Some(path) = &cfg.output_path {
                table.emit(cfg.output_format, path)?;
            }
            Ok(if table.has_disagreement() {
                EXIT_DISAGREEMENT
            } else {
                EXIT_OK
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
