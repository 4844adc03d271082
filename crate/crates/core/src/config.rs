//! Run configuration: contract, catalog, solver, learning and experiment
//! settings in one TOML document.
//!
//! Monetary values accept integers, decimals (`0.75`) or fractions
//! (`"3/4"`) and are held exactly. Rates accept numbers or fractions
//! (`"1/300"`). Unknown keys are rejected everywhere.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_traits::Signed;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::domain::{FederationContract, Money, ResourceVector, ServiceType};
use crate::dp::DpConfig;
use crate::error::ConfigError;
use crate::rl::RlHyper;

/// Parses `"7"`, `"-1.25"` or `"3/4"` into an exact rational.
pub fn parse_money(s: &str) -> Result<Money, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
        let d: i64 = d.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
        if d == 0 {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(Money::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(format!("`{s}` is not a decimal number or fraction"));
    }
    if frac.len() > 12 {
        return Err(format!("`{s}` has more than 12 decimal places"));
    }
    let digits: i64 = format!("{int}{frac}").parse().map_err(|_| format!("`{s}` is out of range"))?;
    let v = Money::new(digits, 10i64.pow(frac.len() as u32));
    Ok(if neg { -v } else { v })
}

pub fn format_money(m: Money) -> String {
    if m.is_integer() {
        m.to_integer().to_string()
    } else {
        format!("{}/{}", m.numer(), m.denom())
    }
}

/// An exact monetary config value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Amount(pub Money);

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_integer() {
            s.serialize_i64(self.0.to_integer())
        } else {
            s.serialize_str(&format_money(self.0))
        }
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Amount;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer, a decimal, or a fraction string like \"3/4\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Amount, E> {
                Ok(Amount(Money::from_integer(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Amount, E> {
                i64::try_from(v).map(|v| Amount(Money::from_integer(v))).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Amount, E> {
                parse_money(&v.to_string()).map(Amount).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Amount, E> {
                parse_money(v).map(Amount).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// A positive rate, given as a number or a fraction string.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rate(pub f64);

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Rate;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a fraction string like \"1/300\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rate, E> {
                Ok(Rate(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rate, E> {
                Ok(Rate(v as f64))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rate, E> {
                Ok(Rate(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Rate, E> {
                let m = parse_money(v).map_err(E::custom)?;
                Ok(Rate(*m.numer() as f64 / *m.denom() as f64))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSection {
    pub local_capacity: Vec<u32>,
    pub quota: Vec<u32>,
    pub reject_thresholds: Vec<Amount>,
}

fn unit_amount() -> Amount {
    Amount(Money::from_integer(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub demand: Vec<u32>,
    pub revenue: Amount,
    pub delegation_fee: Amount,
    #[serde(default = "unit_amount")]
    pub overcharge_scale: Amount,
    pub arrival_rate: Rate,
    pub departure_rate: Rate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub gamma: f64,
    pub eval_tolerance: f64,
    pub max_eval_sweeps: usize,
    pub max_improvement_rounds: usize,
    pub state_cap: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = DpConfig::default();
        SolverSection {
            gamma: d.gamma,
            eval_tolerance: d.eval_tolerance,
            max_eval_sweeps: d.max_eval_sweeps,
            max_improvement_rounds: d.max_improvement_rounds,
            state_cap: 2_000_000,
        }
    }
}

impl SolverSection {
    pub fn dp_config(&self) -> DpConfig {
        DpConfig {
            gamma: self.gamma,
            eval_tolerance: self.eval_tolerance,
            max_eval_sweeps: self.max_eval_sweeps,
            max_improvement_rounds: self.max_improvement_rounds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSection {
    pub episodes: usize,
    pub requests_per_episode: usize,
    pub alpha0: f64,
    pub beta0: f64,
    pub epsilon0: f64,
    pub decay: f64,
    /// Episodes between learning-curve checkpoints.
    pub checkpoint_every: usize,
    /// Length of the held-out trace used at checkpoints.
    pub eval_requests: usize,
}

impl Default for RlSection {
    fn default() -> Self {
        RlSection {
            episodes: 2500,
            requests_per_episode: 4000,
            alpha0: 1.0,
            beta0: 1.0,
            epsilon0: 1.0,
            decay: 0.025,
            checkpoint_every: 100,
            eval_requests: 4000,
        }
    }
}

impl RlSection {
    pub fn hyper(&self) -> RlHyper {
        RlHyper {
            episodes: self.episodes,
            requests_per_episode: self.requests_per_episode,
            alpha0: self.alpha0,
            beta0: self.beta0,
            epsilon0: self.epsilon0,
            decay: self.decay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sweep,
    Theorem1,
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Number of training episodes `n`.
    Episodes,
    /// `C̄^l ← η · C̄^l`.
    LocalScale,
    /// `θ_k ← 1 + η`.
    ThresholdScale,
    /// `ω_i ← η · ω_i`.
    OverchargeScale,
    /// `C̄^p ← η · C̄^p`.
    QuotaScale,
    /// `σ_i ← η · σ_i`.
    FeeScale,
}

impl SweepVariable {
    /// Output file stem for the sweep's figure CSV.
    pub fn figure_name(self) -> &'static str {
        match self {
            SweepVariable::Episodes => "fig1_episodes",
            SweepVariable::LocalScale => "fig2_local_capacity",
            SweepVariable::ThresholdScale => "fig3_threshold",
            SweepVariable::OverchargeScale => "fig4_overcharge",
            SweepVariable::QuotaScale => "fig_quota",
            SweepVariable::FeeScale => "fig_fee",
        }
    }
}

fn default_repetitions() -> usize {
    20
}

fn default_ql_gammas() -> Vec<f64> {
    vec![0.20, 0.55, 0.95]
}

fn default_theorem_gammas() -> Vec<f64> {
    vec![0.0, 0.20, 0.55, 0.95]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<SweepVariable>,
    #[serde(default)]
    pub grid: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_ql_gammas")]
    pub ql_gammas: Vec<f64>,
    /// Discount factors studied by the `theorem1` kind.
    #[serde(default = "default_theorem_gammas")]
    pub gammas: Vec<f64>,
    /// Requests in each evaluation trace; defaults to `rl.eval_requests`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_requests: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencySection {
    /// Lower bound of the uniform lifecycle latency (time units).
    pub min: f64,
    pub max: f64,
}

impl Default for LatencySection {
    fn default() -> Self {
        LatencySection { min: 27.0, max: 40.0 }
    }
}

fn default_divisor() -> u32 {
    1
}

fn is_one(x: &u32) -> bool {
    *x == 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Capacities and quota are divided by this factor unless full scale is
    /// requested.
    #[serde(default = "default_divisor", skip_serializing_if = "is_one")]
    pub desk_scale_divisor: u32,
    pub contract: ContractSection,
    #[serde(rename = "service")]
    pub services: Vec<ServiceSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub rl: RlSection,
    #[serde(default)]
    pub latency: LatencySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        text.parse().map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.desk_scale_divisor == 0 {
            return Err(ConfigError::Invalid("desk_scale_divisor must be at least 1".into()));
        }
        self.contract(true)?;
        self.solver.dp_config().validate().map_err(ConfigError::Invalid)?;
        if self.solver.state_cap == 0 {
            return Err(ConfigError::Invalid("solver.state_cap must be positive".into()));
        }
        self.rl.hyper().validate().map_err(ConfigError::Invalid)?;
        if self.rl.checkpoint_every == 0 || self.rl.eval_requests == 0 {
            return Err(ConfigError::Invalid("rl.checkpoint_every and rl.eval_requests must be positive".into()));
        }
        if !(self.latency.min >= 0.0 && self.latency.max >= self.latency.min) {
            return Err(ConfigError::Invalid("latency bounds must satisfy 0 <= min <= max".into()));
        }
        if let Some(exp) = &self.experiment {
            exp.validate().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    /// The contract used for a run. Without `full_scale`, capacities and
    /// quota are divided (rounding down) by `desk_scale_divisor`.
    pub fn contract(&self, full_scale: bool) -> Result<FederationContract, ConfigError> {
        let div = if full_scale { 1 } else { self.desk_scale_divisor.max(1) };
        let scale = |v: &[u32]| ResourceVector::new(v.iter().map(|x| x / div).collect());
        let catalog = self
            .services
            .iter()
            .map(|s| ServiceType {
                demand: ResourceVector::new(s.demand.clone()),
                revenue: s.revenue.0,
                delegation_fee: s.delegation_fee.0,
                overcharge_scale: s.overcharge_scale.0,
                arrival_rate: s.arrival_rate.0,
                departure_rate: s.departure_rate.0,
            })
            .collect();
        Ok(FederationContract::new(
            scale(&self.contract.local_capacity),
            scale(&self.contract.quota),
            self.contract.reject_thresholds.iter().map(|a| a.0).collect(),
            catalog,
        )?)
    }
}

impl ExperimentSection {
    pub fn validate(&self) -> Result<(), String> {
        if self.repetitions == 0 {
            return Err("experiment.repetitions must be at least 1".into());
        }
        match self.kind {
            ExperimentKind::Sweep => {
                let var = self.variable.ok_or("a sweep experiment needs `variable`")?;
                if self.grid.is_empty() {
                    return Err("experiment.grid must be nonempty".into());
                }
                if self.grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err("experiment.grid values must be finite and nonnegative".into());
                }
                if var == SweepVariable::Episodes && self.grid.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
                    return Err("an episodes grid must hold positive integers".into());
                }
                if self.ql_gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
                    return Err("experiment.ql_gammas must lie in [0, 1)".into());
                }
            }
            ExperimentKind::Theorem1 => {
                if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
                    return Err("experiment.gammas must be nonempty and lie in [0, 1)".into());
                }
            }
        }
        if self.eval_requests == Some(0) {
            return Err("experiment.eval_requests must be positive".into());
        }
        Ok(())
    }
}

/// Short stable fingerprint of a contract, stored in policy files.
pub fn contract_hash(contract: &FederationContract) -> String {
    let mut canon = String::new();
    let join = |v: &ResourceVector| v.as_slice().iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    canon.push_str(&format!("local={};quota={};", join(contract.local_capacity()), join(contract.quota())));
    let thresholds: Vec<String> = contract.reject_thresholds().iter().map(|t| format_money(*t)).collect();
    canon.push_str(&format!("theta={};", thresholds.join(",")));
    for s in contract.catalog() {
        canon.push_str(&format!(
            "svc(c={};r={};sigma={};omega={};lambda={:?};mu={:?});",
            join(&s.demand),
            format_money(s.revenue),
            format_money(s.delegation_fee),
            format_money(s.overcharge_scale),
            s.arrival_rate,
            s.departure_rate
        ));
    }
    let digest = Sha256::digest(canon.as_bytes());
    hex::encode(&digest[..8])
}

/// Applies a sweep point to a base config.
pub fn apply_sweep(cfg: &RunConfig, var: SweepVariable, eta: f64) -> Result<RunConfig, ConfigError> {
    let mut out = cfg.clone();
    let eta_money = parse_money(&eta.to_string()).map_err(ConfigError::Invalid)?;
    let scale_caps = |v: &mut Vec<u32>| {
        for x in v.iter_mut() {
            *x = (f64::from(*x) * eta).floor() as u32;
        }
    };
    match var {
        SweepVariable::Episodes => out.rl.episodes = eta as usize,
        SweepVariable::LocalScale => scale_caps(&mut out.contract.local_capacity),
        SweepVariable::QuotaScale => scale_caps(&mut out.contract.quota),
        SweepVariable::ThresholdScale => {
            for t in out.contract.reject_thresholds.iter_mut() {
                *t = Amount(Money::from_integer(1) + eta_money);
            }
        }
        SweepVariable::OverchargeScale => {
            for s in out.services.iter_mut() {
                let scaled = s.overcharge_scale.0 * eta_money;
                // ω ≥ 1 is a contract invariant
                s.overcharge_scale = Amount(scaled.max(Money::from_integer(1)));
            }
        }
        SweepVariable::FeeScale => {
            for s in out.services.iter_mut() {
                s.delegation_fee = Amount(s.delegation_fee.0 * eta_money);
            }
        }
    }
    if eta_money.is_negative() {
        return Err(ConfigError::Invalid(format!("sweep value {eta} is negative")));
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn money_parsing() {
        assert_eq!(parse_money("95").unwrap(), Money::from_integer(95));
        assert_eq!(parse_money("0.75").unwrap(), Money::new(3, 4));
        assert_eq!(parse_money("-1.5").unwrap(), Money::new(-3, 2));
        assert_eq!(parse_money("1/300").unwrap(), Money::new(1, 300));
        assert!(parse_money("1/0").is_err());
        assert!(parse_money("abc").is_err());
        assert!(parse_money(".").is_err());
    }

    #[test]
    fn presets_load_and_round_trip() {
        for text in presets::ALL {
            let cfg: RunConfig = text.parse().unwrap();
            let again: RunConfig = cfg.to_toml().parse().unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn table1_desk_scale_halves_capacities() {
        let cfg: RunConfig = presets::TABLE1.parse().unwrap();
        let full = cfg.contract(true).unwrap();
        let desk = cfg.contract(false).unwrap();
        assert_eq!(full.local_capacity().as_slice(), &[30, 25, 30]);
        assert_eq!(full.extended_quota().as_slice(), &[20, 30, 50]);
        assert_eq!(desk.local_capacity().as_slice(), &[15, 12, 15]);
        assert_eq!(desk.quota().as_slice(), &[5, 7, 12]);
        assert_ne!(contract_hash(&full), contract_hash(&desk));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = presets::TINY.replace("[contract]", "bogus = 3\n[contract]");
        assert!(matches!(text.parse::<RunConfig>(), Err(ConfigError::Parse(_))));
        let text = presets::TINY.replace("quota =", "quotas =");
        assert!(text.parse::<RunConfig>().is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = presets::TINY.replace("local_capacity = [2]", "local_capacity = [2,");
        let err = text.parse::<RunConfig>().unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let text = presets::TINY.replace("reject_thresholds = [1]", "reject_thresholds = [\"1/2\"]");
        assert!(text.parse::<RunConfig>().is_err());
        let text = presets::TINY.replace("gamma = 0.99", "gamma = 1.0");
        assert!(text.parse::<RunConfig>().is_err());
    }

    #[test]
    fn sweep_application() {
        let cfg: RunConfig = presets::TABLE1.parse().unwrap();
        let c = apply_sweep(&cfg, SweepVariable::ThresholdScale, 0.5).unwrap();
        assert_eq!(c.contract.reject_thresholds[0].0, Money::new(3, 2));
        let c = apply_sweep(&cfg, SweepVariable::OverchargeScale, 1.5).unwrap();
        assert_eq!(c.services[0].overcharge_scale.0, Money::from_integer(3));
        let c = apply_sweep(&cfg, SweepVariable::LocalScale, 0.5).unwrap();
        assert_eq!(c.contract.local_capacity, vec![15, 12, 15]);
        let c = apply_sweep(&cfg, SweepVariable::Episodes, 300.0).unwrap();
        assert_eq!(c.rl.episodes, 300);
    }

    #[test]
    fn testbed_rates_parse_fractions() {
        let cfg: RunConfig = presets::TABLE2_TESTBED.parse().unwrap();
        let c = cfg.contract(false).unwrap();
        assert!((c.service(0).arrival_rate - 1.0 / 300.0).abs() < 1e-18);
        assert_eq!(c.extended_quota(), c.quota());
    }
}
