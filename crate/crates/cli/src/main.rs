//! `dynograph`: check models, export and query influence graphs, simulate
//! trajectories and analyze faithfulness of the linear latent system.

mod error;
mod faithfulness;
mod input;
mod manifest;
mod query;
mod simulate;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use dynograph_core::derive_graph;
use dynograph_core::influence::dependence_warnings;
use dynograph_core::kalman::marginal_decomposition;
use dynograph_core::simulate::SimConfig;

use error::{CliError, CliResult};
use faithfulness::{B3RuleArg, FaithfulnessArgs};
use manifest::{read_input, RunManifest};
use query::{QueryArgs, RelationArg};
use simulate::{ObserveSpec, SimulateArgs};

#[derive(Parser)]
#[command(name = "dynograph", version, about = "Influence graphs and simulation for dynamical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model; exit 1 on any error or rule violation.
    Check {
        file: PathBuf,
        /// Also probe each drift numerically for mentions it does not depend on.
        #[arg(long)]
        probe: bool,
    },
    /// Export the influence graph of a model (or a graph JSON file).
    Graph {
        file: PathBuf,
        /// Graphviz output; printed to stdout when neither output is named.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// JSON output with nodes and edges.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Answer a relation query on the influence graph; prints a JSON verdict.
    Query {
        /// Model file, or a graph JSON file ending in `.json`.
        file: PathBuf,
        #[arg(long, value_enum)]
        relation: RelationArg,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        /// Comma-separated blocking set for `blocks`.
        #[arg(long, default_value = "")]
        block: String,
        /// Comma-separated node group for `noninfluenced`.
        #[arg(long, default_value = "")]
        group: String,
        /// Also write the verdict here, with a manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate replicate trajectories on a fixed grid.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        /// Trajectory CSV: `replicate,time,<components>`.
        #[arg(long)]
        out: PathBuf,
        /// `channel:t1,t2,...:sd:eta`, with `eta` a detection limit or `none`.
        /// One flag per channel.
        #[arg(long, value_name = "SPEC")]
        observe: Vec<ObserveSpec>,
        /// Observation CSV; required with --observe.
        #[arg(long)]
        obs_out: Option<PathBuf>,
        /// Seed for measurement error; derived from --seed when absent.
        #[arg(long)]
        obs_seed: Option<u64>,
        /// Realized attribute values per replicate.
        #[arg(long)]
        attributes_out: Option<PathBuf>,
        /// Worker threads; all cores when unset.
        #[arg(long, env = "DYNOGRAPH_THREADS")]
        threads: Option<usize>,
    },
    /// Faithfulness of the three-component linear system after marginalizing X3.
    #[command(group(ArgGroup::new("coeffs_source").required(true).args(["coeffs", "coeffs_file"])))]
    Faithfulness {
        /// `a1,b1,c1,a2,b2,c2,a3,b3,c3`.
        #[arg(long, allow_hyphen_values = true)]
        coeffs: Option<String>,
        /// JSON array of nine numbers or an object keyed `a1` ... `c3`.
        #[arg(long)]
        coeffs_file: Option<PathBuf>,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        dt: f64,
        /// Verdict tolerance; scales with the largest cross coefficient by default.
        #[arg(long)]
        tol: Option<f64>,
        /// Build the cancelling system from b2, c1, c2, c3 instead.
        #[arg(long)]
        construct_unfaithful: bool,
        #[arg(long, value_enum, default_value = "printed", requires = "construct_unfaithful")]
        b3_rule: B3RuleArg,
        /// Also write the verdict JSON here, with a manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Riccati trace CSV (`t,R`, plus `b1,b3` for a construction).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Filter and marginal drift coefficients per grid point.
        #[arg(long)]
        decomposition: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Check { file, probe } => cmd_check(&file, probe),
        Command::Graph { file, dot, json } => cmd_graph(&file, dot.as_deref(), json.as_deref()),
        Command::Query { file, relation, from, to, block, group, out } => {
            let block = input::name_list(&block);
            let group = input::name_list(&group);
            let q = QueryArgs { relation, from: from.as_deref(), to: to.as_deref(), block: &block, group: &group };
            cmd_query(&file, &q, out.as_deref())
        }
        Command::Simulate {
            file,
            dt,
            horizon,
            reps,
            seed,
            out,
            observe,
            obs_out,
            obs_seed,
            attributes_out,
            threads,
        } => {
            if observe.is_empty() != obs_out.is_none() {
                return Err(CliError::usage("--observe and --obs-out must be given together"));
            }
            if threads == Some(0) {
                return Err(CliError::usage("--threads must be at least 1"));
            }
            simulate::distinct_outputs(&[Some(&out), obs_out.as_deref(), attributes_out.as_deref()])?;
            let args = SimulateArgs {
                config: SimConfig::new(dt, horizon, reps, seed),
                observe: &observe,
                observation_seed: obs_seed.unwrap_or_else(|| simulate::default_observation_seed(seed)),
                threads,
            };
            cmd_simulate(&file, &args, &out, obs_out.as_deref(), attributes_out.as_deref())
        }
        Command::Faithfulness {
            coeffs,
            coeffs_file,
            horizon,
            dt,
            tol,
            construct_unfaithful,
            b3_rule,
            out,
            trace,
            decomposition,
        } => {
            let mut manifest = RunManifest::start();
            let coefficients = match (coeffs, coeffs_file) {
                (Some(list), None) => faithfulness::parse_coeff_list(&list)?,
                (None, Some(path)) => {
                    let bytes = read_input(&path)?;
                    manifest.input(&path, &bytes);
                    let text = String::from_utf8(bytes)
                        .map_err(|_| CliError::validation(format!("{}: not UTF-8", path.display())))?;
                    faithfulness::parse_coeff_json(&text)?
                }
                _ => unreachable!("clap enforces exactly one source"),
            };
            if let Some(t) = tol {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(CliError::usage(format!("--tol must be finite and >= 0, got {t}")));
                }
            }
            simulate::distinct_outputs(&[out.as_deref(), trace.as_deref(), decomposition.as_deref()])?;
            let args =
                FaithfulnessArgs { coefficients, horizon, dt, tol, construct: construct_unfaithful.then_some(b3_rule) };
            cmd_faithfulness(manifest, &args, out.as_deref(), trace.as_deref(), decomposition.as_deref())
        }
    }
}

fn cmd_check(file: &Path, probe: bool) -> CliResult<()> {
    let bytes = read_input(file)?;
    let spec = input::load_model(file, &bytes)?;
    let g = derive_graph(&spec).map_err(|e| CliError::validation(e.to_string()))?;
    if probe {
        let warnings = dependence_warnings(&spec, 16, 1e-3).map_err(|e| CliError::runtime(e.to_string()))?;
        for w in warnings {
            eprintln!("{}: warning: {w}", file.display());
        }
    }
    println!(
        "{}: ok: {} attributes, {} inputs, {} components, {} direct influences",
        file.display(),
        spec.attributes.len(),
        spec.inputs.len(),
        spec.components.len(),
        g.edge_count()
    );
    Ok(())
}

fn cmd_graph(file: &Path, dot: Option<&Path>, json: Option<&Path>) -> CliResult<()> {
    if dot.is_some() && dot == json {
        return Err(CliError::usage("--dot and --json name the same file"));
    }
    let mut manifest = RunManifest::start();
    let bytes = read_input(file)?;
    manifest.input(file, &bytes);
    let (name, g) = input::load_graph(file, &bytes)?;
    let Some(primary) = dot.or(json) else {
        print!("{}", g.to_dot(&name));
        return Ok(());
    };
    if let Some(path) = dot {
        manifest.output(path, g.to_dot(&name).as_bytes())?;
    }
    if let Some(path) = json {
        manifest.output(path, g.to_json().as_bytes())?;
    }
    manifest.finish(primary)?;
    Ok(())
}

fn cmd_query(file: &Path, q: &QueryArgs<'_>, out: Option<&Path>) -> CliResult<()> {
    let mut manifest = RunManifest::start();
    let bytes = read_input(file)?;
    manifest.input(file, &bytes);
    let (_, g) = input::load_graph(file, &bytes)?;
    let verdict = query::run(&g, q)?;
    let mut text = serde_json::to_string_pretty(&verdict).expect("verdict serializes");
    text.push('\n');
    print!("{text}");
    if let Some(path) = out {
        manifest.output(path, text.as_bytes())?;
        manifest.finish(path)?;
    }
    Ok(())
}

fn cmd_simulate(
    file: &Path,
    args: &SimulateArgs<'_>,
    out: &Path,
    obs_out: Option<&Path>,
    attributes_out: Option<&Path>,
) -> CliResult<()> {
    let mut manifest = RunManifest::start();
    manifest.master_seed = Some(args.config.master_seed);
    manifest.threads = args.threads;
    let bytes = read_input(file)?;
    manifest.input(file, &bytes);
    let spec = input::load_model(file, &bytes)?;
    let result = simulate::run(&spec, args)?;

    for note in simulate::warning_notes(&result.bundle) {
        eprintln!("warning: {note}");
        manifest.notes.push(note);
    }
    manifest.output(out, &simulate::trajectories_csv(&result.bundle))?;
    if let (Some(path), Some(records)) = (obs_out, &result.observations) {
        manifest.observation_seed = Some(args.observation_seed);
        manifest.output(path, &simulate::observations_csv(records))?;
    }
    if let Some(path) = attributes_out {
        manifest.output(path, &simulate::attributes_csv(&result.bundle))?;
    }
    manifest.finish(out)?;
    Ok(())
}

fn cmd_faithfulness(
    mut manifest: RunManifest,
    args: &FaithfulnessArgs,
    out: Option<&Path>,
    trace: Option<&Path>,
    decomposition: Option<&Path>,
) -> CliResult<()> {
    let result = faithfulness::run(args)?;
    let json = faithfulness::report_json(&result.report);
    std::io::stdout().write_all(&json).map_err(|e| CliError::runtime(e.to_string()))?;
    if let Some(path) = out {
        manifest.output(path, &json)?;
    }
    if let Some(path) = trace {
        manifest.output(path, &result.trace)?;
    }
    if let Some(path) = decomposition {
        let d = marginal_decomposition(&result.system, args.horizon, args.dt)
            .map_err(|e| CliError::runtime(e.to_string()))?;
        manifest.output(path, &faithfulness::decomposition_csv(&d))?;
    }
    if let Some(primary) = out.or(trace).or(decomposition) {
        manifest.finish(primary)?;
    }
    Ok(())
}
