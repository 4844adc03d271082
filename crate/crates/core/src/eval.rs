//! Metrics and experiment drivers: optimality gap, acceptance and
//! delegation rates, parameter sweeps with repeated trials, learning
//! curves and the discount-factor preference study.

use std::io::Write;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{apply_sweep, RunConfig, SweepVariable};
use crate::domain::money_to_f64;
use crate::dp::{policy_iteration, PiOutcome, SolverModel};
use crate::error::{ConfigError, EvalError, MdpError};
use crate::mdp::{Action, DelegationMdp, StateSpace};
use crate::policy::{AdmissionPolicy, PolicyKind, PolicySource, PolicyTable};
use crate::rl::{train, Algorithm, QTable, RlHyper, TrainOutcome};
use crate::sim::{average_profit, derive_seed, generate_trace, run_policy, EpisodeTrace, LatencyModel, Trace};

/// `(AP(PI) − AP(alg)) / AP(PI)`; negative values mean the candidate beat
/// the reference.
pub fn gap(ap_pi: f64, ap_alg: f64) -> Result<f64, EvalError> {
    if ap_pi <= 0.0 || !ap_pi.is_finite() {
        return Err(EvalError::NonPositiveReference(ap_pi));
    }
    Ok((ap_pi - ap_alg) / ap_pi)
}

/// `(|𝓛| / |𝓓|, |𝓕| / |𝓓|)`.
pub fn rates(trace: &EpisodeTrace) -> Result<(f64, f64), EvalError> {
    let d = trace.requests();
    if d == 0 {
        return Err(EvalError::Sim(crate::error::SimError::EmptyTrace));
    }
    Ok((trace.local_count() as f64 / d as f64, trace.delegated_count() as f64 / d as f64))
}

/// Sample mean and half-width of the two-sided 95% Student-t interval.
/// A single sample has half-width 0.
pub fn mean_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof > 0").inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

/// Per-policy outcome of one evaluation run.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMetrics {
    pub label: String,
    pub ap: f64,
    pub ar: f64,
    pub dr: f64,
    pub total_profit: f64,
    pub fallbacks: usize,
}

pub fn metrics(label: &str, trace: &EpisodeTrace) -> Result<PolicyMetrics, EvalError> {
    let (ar, dr) = rates(trace)?;
    Ok(PolicyMetrics {
        label: label.to_string(),
        ap: money_to_f64(average_profit(trace)?),
        ar,
        dr,
        total_profit: money_to_f64(trace.total_profit()),
        fallbacks: trace.records.iter().filter(|r| r.fallback_used).count(),
    })
}

/// Runs every policy on the same trace.
pub fn evaluate_policies(
    mdp: &DelegationMdp,
    policies: &[&dyn AdmissionPolicy],
    trace: &Trace,
    latency: Option<LatencyModel>,
) -> Result<Vec<PolicyMetrics>, EvalError> {
    policies.iter().map(|p| metrics(p.label(), &run_policy(mdp, *p, trace, latency))).collect()
}

/// Solves the contract's MDP and wraps the optimal policy as a table.
pub fn solve_pi(mdp: &DelegationMdp, cfg: &RunConfig) -> Result<(PolicyTable, PiOutcome), MdpError> {
    let space = StateSpace::enumerate(mdp, cfg.solver.state_cap)?;
    let model = SolverModel::build(mdp, &space)?;
    let out = policy_iteration(&model, &cfg.solver.dp_config());
    let mut table = PolicyTable::new("PI", PolicySource::PolicyIteration);
    for (id, s) in space.states().iter().enumerate() {
        table.actions.insert(s.clone(), out.policy.action(id));
    }
    Ok((table, out))
}

/// One aggregated line of a figure table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub sweep_value: f64,
    pub algorithm: String,
    pub ap: f64,
    pub gap: f64,
    pub ar: f64,
    pub dr: f64,
    /// 95% half-width of the gap across repetitions.
    pub ci_halfwidth: f64,
    /// 95% half-width of AP across repetitions.
    pub ap_ci_halfwidth: f64,
    pub skipped: bool,
}

pub const CSV_HEADER: &str = "sweep_value,algorithm,ap,gap,ar,dr,ci_halfwidth";

pub fn write_csv(rows: &[MetricRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        if r.skipped {
            writeln!(w, "{},{},,,,,", r.sweep_value, r.algorithm)?;
        } else {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.sweep_value, r.algorithm, r.ap, r.gap, r.ar, r.dr, r.ci_halfwidth
            )?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub base: RunConfig,
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub repetitions: usize,
    pub ql_gammas: Vec<f64>,
    /// Requests in each evaluation trace.
    pub eval_requests: usize,
    pub full_scale: bool,
    pub latency: bool,
    /// Restricts the learned agents; `None` trains QL for every gamma and RL.
    pub algorithms: Option<Vec<Algorithm>>,
}

impl ExperimentSpec {
    /// Reads the `[experiment]` section of a sweep config.
    pub fn from_config(cfg: &RunConfig, full_scale: bool, latency: bool) -> Result<ExperimentSpec, ConfigError> {
        let exp =
            cfg.experiment.as_ref().ok_or_else(|| ConfigError::Invalid("config has no [experiment] section".into()))?;
        let variable =
            exp.variable.ok_or_else(|| ConfigError::Invalid("sweep experiments need experiment.variable".into()))?;
        Ok(ExperimentSpec {
            base: cfg.clone(),
            variable,
            grid: exp.grid.clone(),
            repetitions: exp.repetitions,
            ql_gammas: exp.ql_gammas.clone(),
            eval_requests: exp.eval_requests.unwrap_or(cfg.rl.eval_requests),
            full_scale,
            latency,
            algorithms: None,
        })
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.grid.is_empty() || self.repetitions == 0 || self.eval_requests == 0 {
            return Err(EvalError::InvalidExperiment("grid, repetitions and eval_requests must be nonempty".into()));
        }
        Ok(())
    }

    fn agents(&self) -> Vec<Algorithm> {
        self.algorithms.clone().unwrap_or_else(|| {
            let mut v: Vec<Algorithm> = self.ql_gammas.iter().map(|&gamma| Algorithm::QLearning { gamma }).collect();
            v.push(Algorithm::RLearning);
            v
        })
    }
}

/// Raw per-repetition measurements of one sweep point, keyed by label.
struct RepResult {
    point: usize,
    metrics: Vec<PolicyMetrics>,
}

struct PointSetup {
    cfg: RunConfig,
    mdp: DelegationMdp,
    pi: Option<PolicyKind>,
}

fn latency_for(cfg: &RunConfig, enabled: bool, seed: u64) -> Option<LatencyModel> {
    enabled.then_some(LatencyModel { min: cfg.latency.min, max: cfg.latency.max, seed })
}

/// Executes a sweep. Each sweep point solves PI once; each repetition
/// trains the agents, samples a fresh evaluation trace and runs all
/// policies on it. Points whose state space exceeds the cap are returned
/// as skipped rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<MetricRow>, EvalError> {
    spec.validate()?;
    let seed = spec.base.seed;
    let agents = spec.agents();
    let episodes_sweep = spec.variable == SweepVariable::Episodes;

    // The episodes sweep shares one contract across points.
    let point_cfgs: Vec<RunConfig> = spec
        .grid
        .iter()
        .map(|&eta| {
            if episodes_sweep {
                if eta < 1.0 || eta.fract() != 0.0 {
                    return Err(EvalError::InvalidExperiment(format!("episode count {eta} is not a positive integer")));
                }
                Ok(spec.base.clone())
            } else {
                apply_sweep(&spec.base, spec.variable, eta).map_err(|e| EvalError::InvalidExperiment(e.to_string()))
            }
        })
        .collect::<Result<_, _>>()?;

    let setups: Vec<PointSetup> = if episodes_sweep {
        let setup = setup_point(&point_cfgs[0], spec.full_scale)?;
        point_cfgs
            .iter()
            .map(|cfg| PointSetup { cfg: cfg.clone(), mdp: setup.mdp.clone(), pi: setup.pi.clone() })
            .collect()
    } else {
        point_cfgs.par_iter().map(|cfg| setup_point(cfg, spec.full_scale)).collect::<Result<_, _>>()?
    };

    let mut results: Vec<RepResult> = if episodes_sweep {
        let checkpoints: Vec<usize> = spec.grid.iter().map(|&n| n as usize).collect();
        (0..spec.repetitions)
            .into_par_iter()
            .map(|rep| episodes_rep(spec, &setups[0], &agents, &checkpoints, rep))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect()
    } else {
        let jobs: Vec<(usize, usize)> = (0..setups.len())
            .filter(|&p| setups[p].pi.is_some())
            .flat_map(|p| (0..spec.repetitions).map(move |r| (p, r)))
            .collect();
        jobs.par_iter()
            .map(|&(point, rep)| {
                let setup = &setups[point];
                let rep_seed = derive_seed(seed, &[point as u64, rep as u64]);
                let hyper = setup.cfg.rl.hyper();
                let tables: Vec<PolicyKind> = agents
                    .iter()
                    .enumerate()
                    .map(|(k, &algo)| {
                        let out = train(&setup.mdp, &hyper, algo, derive_seed(rep_seed, &[1, k as u64]), &[], |_| {});
                        PolicyKind::from_table(out.policy())
                    })
                    .collect();
                let trace =
                    generate_trace(setup.mdp.contract().catalog(), spec.eval_requests, derive_seed(rep_seed, &[2]));
                let latency = latency_for(&setup.cfg, spec.latency, derive_seed(rep_seed, &[3]));
                let mut policies: Vec<&dyn AdmissionPolicy> = vec![setup.pi.as_ref().expect("filtered")];
                policies.extend(tables.iter().map(|t| t as &dyn AdmissionPolicy));
                policies.push(&PolicyKind::Greedy);
                let metrics = evaluate_policies(&setup.mdp, &policies, &trace, latency)?;
                Ok(RepResult { point, metrics })
            })
            .collect::<Result<Vec<_>, EvalError>>()?
    };
    results.sort_by_key(|r| r.point);

    let mut rows = Vec::new();
    for (point, setup) in setups.iter().enumerate() {
        let eta = spec.grid[point];
        if setup.pi.is_none() {
            rows.push(MetricRow {
                sweep_value: eta,
                algorithm: "ALL".into(),
                ap: f64::NAN,
                gap: f64::NAN,
                ar: f64::NAN,
                dr: f64::NAN,
                ci_halfwidth: f64::NAN,
                ap_ci_halfwidth: f64::NAN,
                skipped: true,
            });
            continue;
        }
        let reps: Vec<&RepResult> = results.iter().filter(|r| r.point == point).collect();
        let labels: Vec<String> = reps[0].metrics.iter().map(|m| m.label.clone()).collect();
        for (k, label) in labels.iter().enumerate() {
            let mut aps = Vec::new();
            let mut gaps = Vec::new();
            let mut ars = Vec::new();
            let mut drs = Vec::new();
            for r in &reps {
                let m = &r.metrics[k];
                aps.push(m.ap);
                gaps.push(gap(r.metrics[0].ap, m.ap)?);
                ars.push(m.ar);
                drs.push(m.dr);
            }
            let (ap, ap_ci) = mean_ci(&aps);
            let (g, g_ci) = mean_ci(&gaps);
            rows.push(MetricRow {
                sweep_value: eta,
                algorithm: label.clone(),
                ap,
                gap: g,
                ar: mean_ci(&ars).0,
                dr: mean_ci(&drs).0,
                ci_halfwidth: g_ci,
                ap_ci_halfwidth: ap_ci,
                skipped: false,
            });
        }
    }
    Ok(rows)
}

fn setup_point(cfg: &RunConfig, full_scale: bool) -> Result<PointSetup, EvalError> {
    let contract = cfg.contract(full_scale).map_err(|e| EvalError::InvalidExperiment(e.to_string()))?;
    let mdp = DelegationMdp::new(contract);
    let pi = match solve_pi(&mdp, cfg) {
        Ok((table, _)) => Some(PolicyKind::from_table(table)),
        Err(MdpError::StateCapExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(PointSetup { cfg: cfg.clone(), mdp, pi })
}

/// One repetition of the episodes sweep: every agent trains once to the
/// largest episode count and is evaluated at each grid checkpoint.
fn episodes_rep(
    spec: &ExperimentSpec,
    setup: &PointSetup,
    agents: &[Algorithm],
    checkpoints: &[usize],
    rep: usize,
) -> Result<Vec<RepResult>, EvalError> {
    let rep_seed = derive_seed(spec.base.seed, &[0, rep as u64]);
    let pi = setup.pi.as_ref().expect("checked by caller");
    let trace = generate_trace(setup.mdp.contract().catalog(), spec.eval_requests, derive_seed(rep_seed, &[2]));
    let latency = latency_for(&setup.cfg, spec.latency, derive_seed(rep_seed, &[3]));
    let base = evaluate_policies(&setup.mdp, &[pi, &PolicyKind::Greedy], &trace, latency)?;

    let mut sorted: Vec<usize> = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let hyper = RlHyper { episodes: *sorted.last().expect("nonempty grid"), ..setup.cfg.rl.hyper() };

    // per[checkpoint index][agent index]
    let mut per: Vec<Vec<PolicyMetrics>> = vec![Vec::new(); sorted.len()];
    for (k, &algo) in agents.iter().enumerate() {
        let mut err = None;
        train(&setup.mdp, &hyper, algo, derive_seed(rep_seed, &[1, k as u64]), &sorted, |c| {
            let idx = sorted.iter().position(|&n| n == c.episodes).expect("requested checkpoint");
            let policy = PolicyKind::from_table(c.q.greedy_policy(algo.label(), algo.source()));
            match metrics(&algo.label(), &run_policy(&setup.mdp, &policy, &trace, latency)) {
                Ok(m) => per[idx].push(m),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(point, n)| {
            let idx = sorted.iter().position(|m| m == n).expect("present");
            let mut metrics = vec![base[0].clone()];
            metrics.extend(per[idx].iter().cloned());
            metrics.push(base[1].clone());
            RepResult { point, metrics }
        })
        .collect())
}

/// One learning-curve sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    /// Gap to the PI reference on the held-out trace, when available.
    pub gap: Option<f64>,
    pub acceptance_rate: f64,
    pub delegation_rate: f64,
    pub rho: f64,
}

pub const CURVE_HEADER: &str = "episode,gap,acceptance_rate,delegation_rate,rho";

pub fn write_curve(points: &[CurvePoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for p in points {
        let gap = p.gap.map(|g| format!("{g:.6}")).unwrap_or_default();
        writeln!(w, "{},{},{:.6},{:.6},{:.6}", p.episode, gap, p.acceptance_rate, p.delegation_rate, p.rho)?;
    }
    Ok(())
}

/// Trains an agent and evaluates its frozen greedy policy on a held-out
/// trace every `every` episodes. `reference` is the PI policy used for
/// the gap column.
pub fn learning_curve(
    mdp: &DelegationMdp,
    hyper: &RlHyper,
    algo: Algorithm,
    seed: u64,
    every: usize,
    eval_requests: usize,
    reference: Option<&PolicyKind>,
) -> Result<(TrainOutcome, Vec<CurvePoint>), EvalError> {
    let trace = generate_trace(mdp.contract().catalog(), eval_requests, derive_seed(seed, &[0xe7a1]));
    let ref_ap = match reference {
        Some(p) => Some(metrics(p.label(), &run_policy(mdp, p, &trace, None))?.ap),
        None => None,
    };
    let checkpoints: Vec<usize> =
        if every == 0 { Vec::new() } else { (every..=hyper.episodes).step_by(every).collect() };
    let mut points = Vec::new();
    let mut err = None;
    let out = train(mdp, hyper, algo, seed, &checkpoints, |c| {
        let policy = PolicyKind::from_table(c.q.greedy_policy(algo.label(), algo.source()));
        let result = metrics(&algo.label(), &run_policy(mdp, &policy, &trace, None)).and_then(|m| {
            let gap = ref_ap.map(|r| gap(r, m.ap)).transpose()?;
            Ok(CurvePoint { episode: c.episodes, gap, acceptance_rate: m.ar, delegation_rate: m.dr, rho: c.rho })
        });
        match result {
            Ok(p) => points.push(p),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok((out, points)),
    }
}

/// Arrival states of the preference study: both accept and delegate are
/// valid, and accepting would leave too little local room for another
/// type that fits right now.
pub fn in_preference_set(mdp: &DelegationMdp, s: &crate::mdp::State) -> bool {
    if !s.event.is_arrival() {
        return false;
    }
    let valid = mdp.valid_actions(s);
    if !(valid.contains(Action::Accept) && valid.contains(Action::Delegate)) {
        return false;
    }
    let Some(room) = mdp.local_available(&s.occupancy) else { return false };
    let contract = mdp.contract();
    let i = s.event.service();
    let Some(after) = room.checked_sub(&contract.service(i).demand) else { return false };
    contract
        .catalog()
        .iter()
        .enumerate()
        .any(|(j, svc)| j != i && svc.demand.fits(&room) == Ok(true) && svc.demand.fits(&after) == Ok(false))
}

/// `+1` if the table prefers delegate, `−1` if it prefers accept (ties go
/// to accept, matching the greedy tie order).
fn preference(q: &QTable, s: &crate::mdp::State) -> f64 {
    if q.get(s, Action::Delegate) > q.get(s, Action::Accept) {
        1.0
    } else {
        -1.0
    }
}

/// Visits after which a pair's value is treated as settled. With the
/// default decay a pair first tried late still carries only a fraction of
/// its target after a handful of updates.
pub const SETTLED_VISITS: u32 = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceRow {
    pub gamma: f64,
    /// Mean over repetitions of `Pr(delegate) − Pr(accept)` on the study set.
    pub f: f64,
    pub ci_halfwidth: f64,
    /// Mean size of the study set.
    pub states: f64,
    /// Arrival states where both accept and delegate were tried at least
    /// [`SETTLED_VISITS`] times and delegate has the strictly larger value,
    /// summed over repetitions.
    pub delegate_wins: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceReport {
    pub rows: Vec<PreferenceRow>,
}

impl PreferenceReport {
    /// Count of adjacent decreases of `f` larger than the combined CI.
    pub fn significant_inversions(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].f < w[0].f - (w[0].ci_halfwidth + w[1].ci_halfwidth)).count()
    }

    /// Count of adjacent decreases of `f`.
    pub fn inversions(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].f < w[0].f).count()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "gamma,f,ci_halfwidth,states,delegate_wins")?;
        for r in &self.rows {
            writeln!(w, "{},{:.6},{:.6},{:.1},{}", r.gamma, r.f, r.ci_halfwidth, r.states, r.delegate_wins)?;
        }
        Ok(())
    }
}

/// Trains Q-Learning once per discount factor and repetition and measures
/// how often the learned values prefer delegation on the study set. The
/// set for a repetition is the intersection of the study states visited
/// by every discount factor's run, so all factors are compared on the
/// same states.
pub fn preference_study(
    mdp: &DelegationMdp,
    hyper: &RlHyper,
    gammas: &[f64],
    repetitions: usize,
    seed: u64,
) -> Result<PreferenceReport, EvalError> {
    if gammas.is_empty() || repetitions == 0 {
        return Err(EvalError::InvalidExperiment("need at least one gamma and one repetition".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..repetitions).flat_map(|r| (0..gammas.len()).map(move |g| (r, g))).collect();
    let tables: Vec<QTable> = jobs
        .par_iter()
        .map(|&(rep, g)| {
            train(
                mdp,
                hyper,
                Algorithm::QLearning { gamma: gammas[g] },
                derive_seed(seed, &[rep as u64, g as u64]),
                &[],
                |_| {},
            )
            .q
        })
        .collect();

    let mut f_samples = vec![Vec::new(); gammas.len()];
    let mut sizes = vec![0.0; gammas.len()];
    let mut wins = vec![0; gammas.len()];
    for rep in 0..repetitions {
        let runs = &tables[rep * gammas.len()..(rep + 1) * gammas.len()];
        let mut study: Vec<&crate::mdp::State> = runs[0]
            .rows()
            .map(|(s, _)| s)
            .filter(|s| in_preference_set(mdp, s) && runs[1..].iter().all(|q| q.row(s).is_some()))
            .collect();
        study.sort();
        for (g, q) in runs.iter().enumerate() {
            wins[g] += q
                .rows()
                .filter(|(s, row)| {
                    s.event.is_arrival()
                        && row.visits(Action::Accept) >= SETTLED_VISITS
                        && row.visits(Action::Delegate) >= SETTLED_VISITS
                        && q.get(s, Action::Delegate) > q.get(s, Action::Accept)
                })
                .count();
            if study.is_empty() {
                continue;
            }
            let f = study.iter().map(|s| preference(q, s)).sum::<f64>() / study.len() as f64;
            f_samples[g].push(f);
            sizes[g] += study.len() as f64 / repetitions as f64;
        }
    }
    if f_samples[0].is_empty() {
        return Err(EvalError::InvalidExperiment("no study states were visited".into()));
    }
    let rows = gammas
        .iter()
        .enumerate()
        .map(|(g, &gamma)| {
            let (f, ci) = mean_ci(&f_samples[g]);
            PreferenceRow { gamma, f, ci_halfwidth: ci, states: sizes[g], delegate_wins: wins[g] }
        })
        .collect();
    Ok(PreferenceReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Money;
    use crate::mdp::{Event, State};
    use crate::presets;
    use crate::sim::DecisionRecord;

    fn trace_of(actions: &[Action]) -> EpisodeTrace {
        EpisodeTrace {
            records: actions
                .iter()
                .map(|&action| DecisionRecord {
                    request: 0,
                    service: 0,
                    time: 0.0,
                    state: State::new(vec![0], vec![0], Event::Arrival(0)),
                    action,
                    reward: Money::from_integer(0),
                    fallback_used: false,
                    failed: false,
                })
                .collect(),
            departures: 0,
        }
    }

    #[test]
    fn gap_examples() {
        assert!((gap(100.0, 91.0).unwrap() - 0.09).abs() < 1e-12);
        assert_eq!(gap(42.0, 42.0).unwrap(), 0.0);
        assert!((gap(100.0, 110.0).unwrap() + 0.10).abs() < 1e-12);
        assert!(gap(0.0, 1.0).is_err());
        assert!(gap(-5.0, 1.0).is_err());
    }

    #[test]
    fn rate_examples() {
        let mut half = vec![Action::Accept; 50];
        half.extend(vec![Action::Reject; 50]);
        assert_eq!(rates(&trace_of(&half)).unwrap(), (0.5, 0.0));
        assert_eq!(rates(&trace_of(&[Action::Delegate; 7])).unwrap(), (0.0, 1.0));
        assert_eq!(rates(&trace_of(&[Action::Reject; 3])).unwrap(), (0.0, 0.0));
        assert!(rates(&trace_of(&[])).is_err());
    }

    #[test]
    fn student_t_interval() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        // t_{0.975, 4} = 2.776445 and s/√n = √2.5/√5
        assert!((h - 2.776445 * (0.5f64).sqrt()).abs() < 1e-5);
        assert_eq!(mean_ci(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn always_reject_metrics_are_zero() {
        let mdp = DelegationMdp::new(presets::table1_desk_contract());
        let trace = generate_trace(mdp.contract().catalog(), 500, 3);
        let m = evaluate_policies(&mdp, &[&PolicyKind::AlwaysReject], &trace, None).unwrap();
        assert_eq!((m[0].ap, m[0].ar, m[0].dr), (0.0, 0.0, 0.0));
    }

    #[test]
    fn small_sweep_shapes_rows() {
        let mut cfg = presets::config(presets::TINY);
        cfg.rl.episodes = 5;
        cfg.rl.requests_per_episode = 50;
        let spec = ExperimentSpec {
            base: cfg,
            variable: SweepVariable::LocalScale,
            grid: vec![1.0],
            repetitions: 1,
            ql_gammas: vec![0.2],
            eval_requests: 200,
            full_scale: false,
            latency: false,
            algorithms: None,
        };
        let rows = run_experiment(&spec).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.algorithm.as_str()).collect();
        assert_eq!(labels, ["PI", "QL-20", "RL", "Greedy"]);
        assert_eq!(rows[0].gap, 0.0);
        for r in &rows {
            assert!(r.ar + r.dr <= 1.0 + 1e-12);
        }
        let again = run_experiment(&spec).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn episodes_sweep_reuses_one_training_run() {
        let mut cfg = presets::config(presets::TINY);
        cfg.rl.requests_per_episode = 50;
        let spec = ExperimentSpec {
            base: cfg,
            variable: SweepVariable::Episodes,
            grid: vec![2.0, 4.0],
            repetitions: 2,
            ql_gammas: vec![],
            eval_requests: 200,
            full_scale: false,
            latency: false,
            algorithms: None,
        };
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[1].algorithm, "RL");
        assert_eq!(rows[0].ap, rows[3].ap);
    }

    #[test]
    fn capped_points_are_skipped() {
        let mut cfg = presets::config(presets::TINY);
        cfg.solver.state_cap = 5;
        cfg.rl.episodes = 2;
        cfg.rl.requests_per_episode = 20;
        let spec = ExperimentSpec {
            base: cfg,
            variable: SweepVariable::FeeScale,
            grid: vec![1.0],
            repetitions: 1,
            ql_gammas: vec![],
            eval_requests: 50,
            full_scale: false,
            latency: false,
            algorithms: None,
        };
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].skipped);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\n1,ALL,,,,,\n"));
    }

    #[test]
    fn preference_set_membership() {
        let mdp = DelegationMdp::new(presets::theorem1_contract());
        // CD holds 4 units; accepting a 2-unit request leaves 2 < 3
        assert!(in_preference_set(&mdp, &State::new(vec![0, 0], vec![0, 0], Event::Arrival(0))));
        // with 2 units in use the 3-unit type already does not fit
        assert!(!in_preference_set(&mdp, &State::new(vec![1, 0], vec![0, 0], Event::Arrival(0))));
        assert!(!in_preference_set(&mdp, &State::new(vec![0, 0], vec![0, 0], Event::Departure(0))));
    }
}
