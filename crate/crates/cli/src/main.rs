//! `evgate`: command-line front end for the e-value toolkit.
//!
//! Exit codes: 0 success, 2 bad input, 3 solver failure, 4 geometry failure,
//! 5 infeasible. `EVGATE_THREADS` caps the worker threads.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use evgate::evariable::{outcome_pivotality_gap, recover_evariable, EVariableFn};
use evgate::hypothesis::{gate, max_epower_exact, product_power, DiscreteHypothesis, GateMode};
use evgate::martingale::{simulate, Model, Regime, SimConfig, Statistic};
use evgate::oracles::{gamma_cloud, optimal_epower, ClosedForm, CloudMethod, OracleSpec, DEFAULT_NODES};
use evgate::shine;
use evgate::{ParticleMeasure, Provenance, RNCloud};

use output::{check_writable, csv_artifact, fmt10, json_artifact, json_artifact_exact, payload, write_file, InputError, Meta};

#[derive(Parser)]
#[command(name = "evgate", version, about = "Exact and pivotal e-values from likelihood-ratio geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the null and alternative families meet.
    Gate {
        /// Hypothesis JSON: {"outcomes": [...], "null": [[...]], "alt": [[...]]}.
        hyp: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Test the k-fold iid product instead.
        #[arg(long)]
        power: Option<u32>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the iterated separating-hyperplane construction.
    Shine {
        #[command(flatten)]
        source: SourceArgs,
        /// Likelihood-ratio cloud JSON (instead of an oracle).
        #[arg(long, conflicts_with = "oracle")]
        gamma: Option<PathBuf>,
        #[arg(long)]
        steps: usize,
        /// Stop early once a step gains less e-power than this.
        #[arg(long, default_value_t = 0.0)]
        stop_eps: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Composite)]
        method: MethodArg,
        /// Quadrature nodes (composite, hermite).
        #[arg(long)]
        nodes: Option<usize>,
        /// Monte Carlo sample count.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        /// Required for Monte Carlo clouds.
        #[arg(long)]
        seed: Option<u64>,
        /// Tree JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Trace CSV output (step,e_power,n_leaves).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Recovered e-variable JSON output.
        #[arg(long)]
        evar: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Optimal e-power of a Gaussian oracle.
    Epower {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate wealth paths `M_t = Π X(Z_i)`.
    Simulate {
        /// E-variable JSON file, `closed-form`, or `one`.
        #[arg(long)]
        evar: String,
        #[command(flatten)]
        source: SourceArgs,
        /// Hypothesis JSON (instead of an oracle).
        #[arg(long, conflicts_with = "oracle")]
        hyp: Option<PathBuf>,
        /// `q` or `p1`, `p2`, ...
        #[arg(long)]
        regime: String,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        seed: u64,
        /// Paths CSV output (path,t,M,logM,regime).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Maximal e-power over exact (not necessarily pivotal) e-variables.
    Maxe {
        hyp: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
    /// Observations per block for the Gaussian shift oracle.
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Bernoulli null parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    nulls: Vec<f64>,
    /// Bernoulli alternative parameter.
    #[arg(long)]
    alt: Option<f64>,
}

impl SourceArgs {
    fn spec(&self) -> Result<Option<OracleSpec>> {
        let spec = match self.oracle {
            None => return Ok(None),
            Some(OracleArg::Gauss) => OracleSpec::GaussShift { n_obs: self.n },
            Some(OracleArg::Sym3) => OracleSpec::GaussSym3,
            Some(OracleArg::Atom) => OracleSpec::AtomExample,
            Some(OracleArg::Bernoulli) => {
                let alt = self.alt.ok_or_else(|| InputError("--oracle bernoulli needs --alt".into()))?;
                OracleSpec::Bernoulli { nulls: self.nulls.clone(), alt }
            }
        };
        spec.validate()?;
        Ok(Some(spec))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Gauss,
    Sym3,
    Bernoulli,
    Atom,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Composite,
    Hermite,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SpanMembership,
    ConvMembership,
    SpanConvDisjoint,
    ConvConvDisjoint,
}

impl From<ModeArg> for GateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SpanMembership => GateMode::SpanMembership,
            ModeArg::ConvMembership => GateMode::ConvMembership,
            ModeArg::SpanConvDisjoint => GateMode::SpanConvDisjoint,
            ModeArg::ConvConvDisjoint => GateMode::ConvConvDisjoint,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match evgate::rng::with_thread_cap(move || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<evgate::Error>() {
            return err.exit_code() as u8;
        }
        if cause.is::<InputError>() || cause.is::<serde_json::Error>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gate { hyp, mode, power, out } => cmd_gate(&hyp, mode.into(), power, &out),
        Command::Shine { source, gamma, steps, stop_eps, method, nodes, samples, seed, out, trace, evar, force } => {
            let gamma = load_gamma(&source, gamma.as_deref(), method, nodes, samples, seed)?;
            cmd_shine(gamma, steps, stop_eps, seed, &out, trace.as_deref(), evar.as_deref(), force)
        }
        Command::Epower { source, out } => cmd_epower(&source, &out),
        Command::Simulate { evar, source, hyp, regime, paths, horizon, seed, out, force } => {
            cmd_simulate(&evar, &source, hyp.as_deref(), &regime, paths, horizon, seed, &out, force)
        }
        Command::Maxe { hyp, out } => cmd_maxe(&hyp, &out),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    Ok(payload(v))
}

fn read_hypothesis(path: &Path) -> Result<DiscreteHypothesis> {
    serde_json::from_value(read_json(path)?).with_context(|| format!("{} is not a valid hypothesis", path.display()))
}

fn emit(out: &OutArgs, text: &str) -> Result<()> {
    match &out.out {
        Some(p) => {
            check_writable(p, out.force)?;
            write_file(p, text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gate(hyp: &Path, mode: GateMode, power: Option<u32>, out: &OutArgs) -> Result<()> {
    let mut h = read_hypothesis(hyp)?;
    if let Some(k) = power {
        h = product_power(&h, k)?;
    }
    let verdict = gate(&h, mode)?;
    let verified = verdict.verify(&h);
    let mut v = serde_json::to_value(&verdict)?;
    v["verified"] = json!(verified);
    v["n_outcomes"] = json!(h.n_outcomes());
    emit(out, &json_artifact(&Meta::new(None), v)?)
}

fn load_gamma(
    source: &SourceArgs,
    file: Option<&Path>,
    method: MethodArg,
    nodes: Option<usize>,
    samples: usize,
    seed: Option<u64>,
) -> Result<RNCloud> {
    if let Some(path) = file {
        let v = read_json(path)?;
        if v.get("base").is_some() {
            let cloud: RNCloud = serde_json::from_value(v)?;
            // re-validate whatever was deserialized
            return Ok(RNCloud::new(cloud.base, cloud.provenance)?);
        }
        let m: ParticleMeasure = serde_json::from_value(v).with_context(|| format!("{} is not a cloud", path.display()))?;
        return Ok(RNCloud::new(m, Provenance::ExactDiscrete)?);
    }
    let spec = source.spec()?.ok_or_else(|| InputError("give --oracle or --gamma".into()))?;
    let method = match method {
        MethodArg::Composite => CloudMethod::Composite { nodes: nodes.unwrap_or(DEFAULT_NODES) },
        MethodArg::Hermite => CloudMethod::Hermite { nodes: nodes.unwrap_or(256) },
        MethodArg::Mc => {
            let seed = seed.ok_or_else(|| InputError("Monte Carlo clouds need --seed".into()))?;
            CloudMethod::MonteCarlo { n: samples, seed }
        }
    };
    Ok(gamma_cloud(&spec, method)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_shine(
    gamma: RNCloud,
    steps: usize,
    stop_eps: f64,
    seed: Option<u64>,
    out: &Path,
    trace: Option<&Path>,
    evar: Option<&Path>,
    force: bool,
) -> Result<()> {
    for p in std::iter::once(out).chain(trace).chain(evar) {
        check_writable(p, force)?;
    }
    let run = shine::run(gamma, steps, stop_eps)?;
    let meta = Meta::new(seed);
    write_file(out, &json_artifact_exact(&meta, run.tree.to_json())?)?;
    if let Some(p) = trace {
        let rows = run.trace.iter().map(|r| format!("{},{},{}", r.step, fmt10(r.e_power), r.n_leaves));
        write_file(p, &csv_artifact(&meta, "step,e_power,n_leaves", rows))?;
    }
    if let Some(p) = evar {
        write_file(p, &json_artifact_exact(&meta, recover_evariable(&run.tree)?)?)?;
    }
    let last = run.trace.last().expect("trace starts with step 0");
    print!("{}", json_artifact(&meta, json!({ "steps": last.step, "e_power": last.e_power, "n_leaves": last.n_leaves }))?);
    Ok(())
}

fn cmd_epower(source: &SourceArgs, out: &OutArgs) -> Result<()> {
    let spec = source.spec()?.ok_or_else(|| InputError("give --oracle gauss".into()))?;
    let v = optimal_epower(&spec)?;
    emit(out, &json_artifact(&Meta::new(None), json!({ "oracle": spec, "optimal_epower": v }))?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    evar: &str,
    source: &SourceArgs,
    hyp: Option<&Path>,
    regime: &str,
    paths: usize,
    horizon: usize,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<()> {
    check_writable(out, force)?;
    let model = match (source.spec()?, hyp) {
        (Some(spec), None) => Model::Oracle(spec),
        (None, Some(p)) => Model::Discrete(read_hypothesis(p)?),
        _ => bail!(InputError("give exactly one of --oracle or --hyp".into())),
    };
    let stat = match evar {
        "closed-form" => match &model {
            Model::Oracle(spec) => Statistic::ClosedForm(ClosedForm::of(spec)?),
            Model::Discrete(_) => bail!(InputError("closed-form needs a Gaussian oracle".into())),
        },
        "one" => {
            let dim = match &model {
                Model::Oracle(spec) => spec.n_null(),
                Model::Discrete(h) => h.n_null(),
            };
            Statistic::EVar(EVariableFn::constant_one(dim))
        }
        file => {
            let x: EVariableFn = serde_json::from_value(read_json(Path::new(file))?)
                .with_context(|| format!("{file} is not a valid e-variable"))?;
            Statistic::EVar(x)
        }
    };
    let regime: Regime = regime.parse()?;
    let cfg = SimConfig { regime, horizon, paths, seed };
    let result = simulate(&stat, &model, &cfg)?;
    let rows = result.iter().enumerate().flat_map(|(k, p)| {
        p.values
            .iter()
            .zip(&p.log_values)
            .enumerate()
            .map(move |(t, (m, lm))| format!("{k},{t},{},{},{}", fmt10(*m), fmt10(*lm), p.regime))
    });
    write_file(out, &csv_artifact(&Meta::new(Some(seed)), "path,t,M,logM,regime", rows))
}

fn cmd_maxe(hyp: &Path, out: &OutArgs) -> Result<()> {
    let h = read_hypothesis(hyp)?;
    let best = max_epower_exact(&h)?;
    let gap = outcome_pivotality_gap(&best.values, &h)?;
    let v = json!({
        "outcomes": h.outcomes,
        "values": best.values,
        "e_power": best.epower,
        "lambda": best.lambda,
        "null_expectations": h.null_expectations(&best.values),
        "pivotality_gap": gap,
    });
    emit(out, &json_artifact(&Meta::new(None), v)?)
}
