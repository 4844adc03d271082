use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nfvac_core::config::{ExperimentKind, RunConfig};
use nfvac_core::eval::{
    gap, learning_curve, preference_study, run_experiment, solve_pi, write_csv, write_curve, ExperimentSpec,
    PolicyMetrics, CSV_HEADER,
};
use nfvac_core::policy_file::PolicyFile;
use nfvac_core::rl::Algorithm;
use nfvac_core::sim::{derive_seed, generate_trace, run_policy, LatencyModel, Trace};
use nfvac_core::{AdmissionPolicy, DelegationMdp, MdpError, PolicyKind, PolicySource};

#[derive(Parser, Debug)]
#[command(name = "nfvac", version, about = "Admission control for federated network-service delegation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the MDP exactly with Policy Iteration and store the policy.
    SolvePi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a Q-Learning or R-Learning agent and store its greedy policy.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        algo: Algo,
        /// Discount factor, required for Q-Learning.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Requests per training episode.
        #[arg(long)]
        requests: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Learning-curve CSV; defaults to `<out>.curve.csv`.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Run policies on one shared request trace and print their metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy files, or the built-ins `greedy` and `always-reject`.
        #[arg(long = "policy", required = true)]
        policies: Vec<String>,
        /// Replay this trace instead of sampling one.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the evaluated trace here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Requests in a sampled trace.
        #[arg(long)]
        requests: Option<usize>,
        /// Enable the instantiation/termination latency model.
        #[arg(long)]
        latency_model: bool,
        /// Load policies whose config hash does not match.
        #[arg(long)]
        force: bool,
    },
    /// Run the experiment described in the config's [experiment] section.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output directory for the figure CSVs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        requests: Option<usize>,
        #[arg(long)]
        latency_model: bool,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the undivided capacities of the config.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algo {
    Ql,
    Rl,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Cap(String),
    Convergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Cap(_) => 3,
            Failure::Convergence(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Cap(m) | Failure::Convergence(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn mdp_err(e: MdpError) -> Failure {
    match e {
        MdpError::StateCapExceeded { .. } => Failure::Cap(e.to_string()),
        other => Failure::Config(other.to_string()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn load(common: &Common) -> Result<(RunConfig, DelegationMdp), Failure> {
    let mut cfg = RunConfig::load(&common.config).map_err(config_err)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let contract = cfg.contract(common.full_scale).map_err(config_err)?;
    Ok((cfg, DelegationMdp::new(contract)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::SolvePi { common, out } => solve(&common, &out),
        Command::Train { common, algo, gamma, episodes, requests, out, curve } => {
            train(&common, algo, gamma, episodes, requests, &out, curve)
        }
        Command::Evaluate { common, policies, trace, trace_out, requests, latency_model, force } => {
            evaluate(&common, &policies, trace, trace_out, requests, latency_model, force)
        }
        Command::Sweep { common, out, repetitions, episodes, requests, latency_model } => {
            sweep(&common, &out, repetitions, episodes, requests, latency_model)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn solve(common: &Common, out: &Path) -> Result<(), Failure> {
    let (cfg, mdp) = load(common)?;
    let (table, outcome) = solve_pi(&mdp, &cfg).map_err(mdp_err)?;
    let d = &outcome.diagnostics;
    eprintln!(
        "states={} rounds={} sweeps={} bellman_residual={:e} converged={}",
        d.states, d.rounds, d.total_sweeps, d.bellman_residual, d.converged
    );
    if !d.converged {
        return Err(Failure::Convergence(format!(
            "policy iteration did not converge within {} rounds",
            cfg.solver.max_improvement_rounds
        )));
    }
    let mut file = PolicyFile::new(mdp.contract(), table);
    file.gamma = Some(cfg.solver.gamma);
    file.save(out).map_err(config_err)
}

fn train(
    common: &Common,
    algo: Algo,
    gamma: Option<f64>,
    episodes: Option<usize>,
    requests: Option<usize>,
    out: &Path,
    curve: Option<PathBuf>,
) -> Result<(), Failure> {
    let algorithm = match (algo, gamma) {
        (Algo::Ql, Some(g)) if (0.0..1.0).contains(&g) => Algorithm::QLearning { gamma: g },
        (Algo::Ql, Some(g)) => return Err(Failure::Usage(format!("--gamma {g} must lie in [0, 1)"))),
        (Algo::Ql, None) => return Err(Failure::Usage("--algo ql requires --gamma".into())),
        (Algo::Rl, None) => Algorithm::RLearning,
        (Algo::Rl, Some(_)) => return Err(Failure::Usage("--gamma only applies to --algo ql".into())),
    };
    let (mut cfg, mdp) = load(common)?;
    if let Some(n) = episodes {
        cfg.rl.episodes = n;
    }
    if let Some(m) = requests {
        cfg.rl.requests_per_episode = m;
    }
    let hyper = cfg.rl.hyper();
    hyper.validate().map_err(Failure::Config)?;

    // The PI reference for the gap column is optional: large configs train without it.
    let reference = match solve_pi(&mdp, &cfg) {
        Ok((table, _)) => Some(PolicyKind::from_table(table)),
        Err(MdpError::StateCapExceeded { cap }) => {
            eprintln!("warning: state space exceeds {cap}; learning curve has no gap column");
            None
        }
        Err(e) => return Err(mdp_err(e)),
    };
    let (outcome, points) = learning_curve(
        &mdp,
        &hyper,
        algorithm,
        cfg.seed,
        cfg.rl.checkpoint_every,
        cfg.rl.eval_requests,
        reference.as_ref(),
    )
    .map_err(config_err)?;
    eprintln!(
        "episodes={} steps={} visited_states={} rho={}",
        hyper.episodes,
        outcome.steps,
        outcome.q.len(),
        outcome.rho
    );

    let mut file = PolicyFile::new(mdp.contract(), outcome.policy());
    match algorithm {
        Algorithm::QLearning { gamma } => file.gamma = Some(gamma),
        Algorithm::RLearning => file.rho = Some(outcome.rho),
    }
    file.save(out).map_err(config_err)?;
    let curve = curve.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".curve.csv");
        PathBuf::from(p)
    });
    let mut w = create(&curve)?;
    write_curve(&points, &mut w).and_then(|_| w.flush()).map_err(config_err)
}

fn load_policy(name: &str, mdp: &DelegationMdp, force: bool) -> Result<PolicyKind, Failure> {
    Ok(match name {
        "greedy" => PolicyKind::Greedy,
        "always-reject" => PolicyKind::AlwaysReject,
        path => {
            PolicyKind::from_table(PolicyFile::load(Path::new(path), mdp.contract(), force).map_err(config_err)?.table)
        }
    })
}

fn evaluate(
    common: &Common,
    names: &[String],
    trace_path: Option<PathBuf>,
    trace_out: Option<PathBuf>,
    requests: Option<usize>,
    latency_model: bool,
    force: bool,
) -> Result<(), Failure> {
    let (cfg, mdp) = load(common)?;
    let policies = names.iter().map(|n| load_policy(n, &mdp, force)).collect::<Result<Vec<_>, _>>()?;
    let trace = match trace_path {
        Some(p) => {
            let f = File::open(&p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            Trace::read_from(BufReader::new(f)).map_err(config_err)?
        }
        None => generate_trace(mdp.contract().catalog(), requests.unwrap_or(cfg.rl.eval_requests), cfg.seed),
    };
    if let Some(p) = trace_out {
        let mut w = create(&p)?;
        trace.write_to(&mut w).and_then(|_| w.flush()).map_err(config_err)?;
    }
    let latency = latency_model.then(|| LatencyModel {
        min: cfg.latency.min,
        max: cfg.latency.max,
        seed: derive_seed(cfg.seed, &[0x1a7e]),
    });
    let metrics: Vec<PolicyMetrics> = policies
        .iter()
        .map(|p| nfvac_core::eval::metrics(p.label(), &run_policy(&mdp, p, &trace, latency)))
        .collect::<Result<_, _>>()
        .map_err(config_err)?;
    let reference = policies
        .iter()
        .position(|p| p.table().is_some_and(|t| t.source == PolicySource::PolicyIteration))
        .map(|i| metrics[i].ap);

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for m in &metrics {
            let g = reference.and_then(|r| gap(r, m.ap).ok()).map(|g| format!("{g:.6}")).unwrap_or_default();
            writeln!(w, "0,{},{:.6},{},{:.6},{:.6},0", m.label, m.ap, g, m.ar, m.dr)?;
        }
        w.flush()
    };
    emit().map_err(config_err)?;
    for m in metrics.iter().filter(|m| m.fallbacks > 0) {
        eprintln!("{}: greedy fallback used for {} requests", m.label, m.fallbacks);
    }
    Ok(())
}

fn sweep(
    common: &Common,
    out: &Path,
    repetitions: Option<usize>,
    episodes: Option<usize>,
    requests: Option<usize>,
    latency_model: bool,
) -> Result<(), Failure> {
    let (mut cfg, mdp) = load(common)?;
    if let Some(n) = episodes {
        cfg.rl.episodes = n;
    }
    if let Some(m) = requests {
        cfg.rl.requests_per_episode = m;
    }
    let Some(exp) = cfg.experiment.as_mut() else {
        return Err(Failure::Config("config has no [experiment] section".into()));
    };
    if let Some(r) = repetitions {
        exp.repetitions = r;
    }
    exp.validate().map_err(Failure::Config)?;
    cfg.rl.hyper().validate().map_err(Failure::Config)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;

    let exp = cfg.experiment.clone().expect("checked above");
    match exp.kind {
        ExperimentKind::Theorem1 => {
            let report =
                preference_study(&mdp, &cfg.rl.hyper(), &exp.gammas, exp.repetitions, cfg.seed).map_err(config_err)?;
            let path = out.join("fig_theorem1.csv");
            let mut w = create(&path)?;
            report.write_csv(&mut w).and_then(|_| w.flush()).map_err(config_err)?;
            eprintln!(
                "wrote {} (f at first gamma {:.4}, {} inversions)",
                path.display(),
                report.rows[0].f,
                report.inversions()
            );
        }
        ExperimentKind::Sweep => {
            let spec = ExperimentSpec::from_config(&cfg, common.full_scale, latency_model).map_err(config_err)?;
            let rows = run_experiment(&spec).map_err(config_err)?;
            let path = out.join(format!("{}.csv", spec.variable.figure_name()));
            let mut w = create(&path)?;
            write_csv(&rows, &mut w).and_then(|_| w.flush()).map_err(config_err)?;
            let skipped = rows.iter().filter(|r| r.skipped).count();
            if skipped > 0 {
                eprintln!("warning: {skipped} sweep points skipped (state space over the cap)");
            }
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}
