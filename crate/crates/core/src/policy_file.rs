//! Plain-text policy files.
//!
//! ```text
//! # nfvac policy
//! version  1
//! config_hash  3f9a0c2d51e7b804
//! algorithm  PI
//! source  pi
//! gamma  0.99
//! states  11
//! ---
//! 0  0  +1  accept
//! 1  0  -1  none
//! ```
//!
//! Fields are separated by tabs. Body lines hold the local counts,
//! delegated counts (comma separated per service type), the event and the
//! action, sorted by state.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::config::contract_hash;
use crate::domain::FederationContract;
use crate::error::PolicyFileError;
use crate::mdp::{Action, DelegationMdp, Event, State};
use crate::policy::{PolicySource, PolicyTable};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# nfvac policy";

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyFile {
    pub config_hash: String,
    pub table: PolicyTable,
    /// Discount factor for PI and Q-Learning policies.
    pub gamma: Option<f64>,
    /// Final average-reward estimate for R-Learning policies.
    pub rho: Option<f64>,
}

impl PolicyFile {
    pub fn new(contract: &FederationContract, table: PolicyTable) -> Self {
        PolicyFile { config_hash: contract_hash(contract), table, gamma: None, rho: None }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "version\t{FORMAT_VERSION}")?;
        writeln!(w, "config_hash\t{}", self.config_hash)?;
        writeln!(w, "algorithm\t{}", self.table.label)?;
        writeln!(w, "source\t{}", source_label(self.table.source))?;
        if let Some(g) = self.gamma {
            writeln!(w, "gamma\t{g}")?;
        }
        if let Some(r) = self.rho {
            writeln!(w, "rho\t{r}")?;
        }
        writeln!(w, "states\t{}", self.table.len())?;
        writeln!(w, "---")?;
        for (s, a) in &self.table.actions {
            writeln!(w, "{}\t{}\t{}\t{}", join(s.local()), join(s.delegated()), s.event, a)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyFileError> {
        let io = |source| PolicyFileError::Io { path: path.display().to_string(), source };
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(io)?;
        std::fs::write(path, buf).map_err(io)
    }

    /// Parses a policy file and checks it against `contract`. With `force`
    /// a config-hash mismatch is tolerated, and entries whose state or
    /// action does not fit the contract are dropped instead of rejected
    /// (the structural shape must still match).
    pub fn read_from(
        r: impl BufRead,
        contract: &FederationContract,
        force: bool,
    ) -> Result<PolicyFile, PolicyFileError> {
        let mdp = DelegationMdp::new(contract.clone());
        let malformed = |line: usize, reason: &str| PolicyFileError::Malformed { line, reason: reason.to_string() };
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = || -> Result<Option<(usize, String)>, PolicyFileError> {
            match lines.next() {
                None => Ok(None),
                Some((n, Ok(l))) => Ok(Some((n, l))),
                Some((n, Err(e))) => Err(PolicyFileError::Malformed { line: n, reason: e.to_string() }),
            }
        };

        match next()? {
            Some((_, l)) if l.trim_end() == MAGIC => {}
            Some((n, _)) => return Err(malformed(n, "missing policy file marker")),
            None => return Err(malformed(1, "empty file")),
        }

        let mut version = None;
        let mut hash = None;
        let mut label = None;
        let mut source = None;
        let mut gamma = None;
        let mut rho = None;
        let mut declared = None;
        loop {
            let Some((n, line)) = next()? else {
                return Err(malformed(0, "missing body separator"));
            };
            let line = line.trim_end();
            if line == "---" {
                break;
            }
            let (key, value) = line.split_once('\t').ok_or_else(|| malformed(n, "expected key<TAB>value"))?;
            match key {
                "version" => version = Some(value.parse::<u32>().map_err(|_| malformed(n, "bad version"))?),
                "config_hash" => hash = Some(value.to_string()),
                "algorithm" => label = Some(value.to_string()),
                "source" => source = Some(parse_source(value).ok_or_else(|| malformed(n, "unknown source"))?),
                "gamma" => gamma = Some(value.parse::<f64>().map_err(|_| malformed(n, "bad gamma"))?),
                "rho" => rho = Some(value.parse::<f64>().map_err(|_| malformed(n, "bad rho"))?),
                "states" => declared = Some(value.parse::<usize>().map_err(|_| malformed(n, "bad state count"))?),
                _ => return Err(malformed(n, &format!("unknown header key `{key}`"))),
            }
        }
        let version = version.ok_or_else(|| malformed(0, "missing version"))?;
        if version != FORMAT_VERSION {
            return Err(PolicyFileError::UnsupportedVersion(version));
        }
        let found = hash.ok_or_else(|| malformed(0, "missing config_hash"))?;
        let expected = contract_hash(contract);
        if found != expected && !force {
            return Err(PolicyFileError::ConfigMismatch { expected, found });
        }
        let label = label.ok_or_else(|| malformed(0, "missing algorithm"))?;
        let source = source.ok_or_else(|| malformed(0, "missing source"))?;

        let services = contract.num_services();
        let mut table = PolicyTable::new(label, source);
        let mut entries = 0;
        while let Some((n, line)) = next()? {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            entries += 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(malformed(n, "expected 4 tab-separated fields"));
            }
            let local = parse_counts(fields[0]).ok_or_else(|| malformed(n, "bad local counts"))?;
            let delegated = parse_counts(fields[1]).ok_or_else(|| malformed(n, "bad delegated counts"))?;
            let event: Event = fields[2].parse().map_err(|_| malformed(n, "bad event"))?;
            let action: Action = fields[3].parse().map_err(|_| malformed(n, "bad action"))?;
            if local.len() != services || delegated.len() != services || event.service() >= services {
                return Err(PolicyFileError::Incompatible {
                    line: n,
                    reason: format!("expected {services} service types"),
                });
            }
            let s = State::new(local, delegated, event);
            let fits = mdp.check_state(&s).is_ok() && mdp.valid_actions(&s).contains(action);
            if !fits {
                if force {
                    continue;
                }
                return Err(PolicyFileError::Incompatible { line: n, reason: format!("{action} is not valid here") });
            }
            if table.actions.insert(s, action).is_some() {
                return Err(malformed(n, "duplicate state"));
            }
        }
        if let Some(d) = declared {
            if d != entries {
                return Err(malformed(0, &format!("header declares {d} states, body has {entries}")));
            }
        }
        Ok(PolicyFile { config_hash: found, table, gamma, rho })
    }

    pub fn load(path: &Path, contract: &FederationContract, force: bool) -> Result<PolicyFile, PolicyFileError> {
        let file = std::fs::File::open(path)
            .map_err(|source| PolicyFileError::Io { path: path.display().to_string(), source })?;
        PolicyFile::read_from(std::io::BufReader::new(file), contract, force)
    }
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn parse_counts(s: &str) -> Option<Vec<u32>> {
    s.split(',').map(|x| x.parse().ok()).collect()
}

fn source_label(s: PolicySource) -> &'static str {
    match s {
        PolicySource::PolicyIteration => "pi",
        PolicySource::QLearning => "ql",
        PolicySource::RLearning => "rl",
    }
}

fn parse_source(s: &str) -> Option<PolicySource> {
    match s {
        "pi" => Some(PolicySource::PolicyIteration),
        "ql" => Some(PolicySource::QLearning),
        "rl" => Some(PolicySource::RLearning),
        _ => None,
    }
}
