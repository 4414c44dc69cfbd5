//! On-disk formats: MDP and instance JSON, policy JSON, episode traces and
//! the run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use entrap_core::defender::{DefenderAction, DefenderSolution, DefenderState, NodeKind, PolicyEntry, TripleSpace};
use entrap_core::domains::{DomainInstance, DomainKind, DomainMetadata};
use entrap_core::fingerprint::Fingerprint;
use entrap_core::mdp::{MdpBuilder, ModelError};
use entrap_core::sim::EpisodeRecord;
use entrap_core::{SolverConfig, TabularMdp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelError },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl FormatError {
    fn invalid(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Invalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let io = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDoc {
    pub state: usize,
    pub action: usize,
    pub successor: usize,
    pub prob: f64,
}

/// JSON document of a [`TabularMdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDoc {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub transitions: Vec<TransitionDoc>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<usize>,
    pub gamma: f64,
    pub initial: usize,
}

impl MdpDoc {
    pub fn from_mdp(m: &TabularMdp) -> Self {
        Self {
            states: m.state_labels().to_vec(),
            actions: m.action_labels().to_vec(),
            transitions: m
                .transitions()
                .map(|(state, action, successor, prob)| TransitionDoc {
                    state,
                    action,
                    successor,
                    prob,
                })
                .collect(),
            rewards: m.rewards().to_vec(),
            terminals: (0..m.n_states()).filter(|&s| m.is_terminal(s)).collect(),
            gamma: m.gamma(),
            initial: m.initial_state(),
        }
    }

    /// Validates and builds; the first violated invariant is reported.
    pub fn to_mdp(&self) -> Result<TabularMdp, ModelError> {
        if self.rewards.len() != self.states.len() {
            return Err(ModelError::LengthMismatch {
                what: "rewards",
                expected: self.states.len(),
                got: self.rewards.len(),
            });
        }
        let mut b = MdpBuilder::new(self.states.clone(), self.actions.clone());
        for t in &self.transitions {
            b.add_transition(t.state, t.action, t.successor, t.prob);
        }
        for (s, &r) in self.rewards.iter().enumerate() {
            b.set_reward(s, r);
        }
        for &s in &self.terminals {
            b.set_terminal(s, true);
        }
        b.gamma(self.gamma).initial(self.initial);
        b.build()
    }
}

pub fn read_mdp(path: &Path) -> Result<TabularMdp, FormatError> {
    let doc: MdpDoc = read_json(path)?;
    doc.to_mdp().map_err(|source| FormatError::Model {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_mdp(path: &Path, m: &TabularMdp) -> Result<(), FormatError> {
    write_json(path, &MdpDoc::from_mdp(m))
}

/// `instance.json` next to `believed.json` and `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub domain: String,
    pub size: usize,
    pub slip: f64,
    pub delta: Option<f64>,
    pub seed: u64,
    pub trap_seed: u64,
    pub goal_reachable: bool,
    pub traps: Vec<usize>,
    pub fingerprint: String,
}

pub const BELIEVED_FILE: &str = "believed.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const INSTANCE_FILE: &str = "instance.json";

pub fn write_instance(dir: &Path, inst: &DomainInstance) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(|source| FormatError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_mdp(&dir.join(BELIEVED_FILE), &inst.believed)?;
    write_mdp(&dir.join(TRUTH_FILE), &inst.truth)?;
    let md = &inst.metadata;
    let doc = InstanceDoc {
        domain: md.kind.name().into(),
        size: md.size,
        slip: md.slip,
        delta: md.delta,
        seed: md.seed,
        trap_seed: md.trap_seed,
        goal_reachable: md.goal_reachable,
        traps: inst.traps.clone(),
        fingerprint: inst.fingerprint().to_hex(),
    };
    write_json(&dir.join(INSTANCE_FILE), &doc)
}

/// Loads an instance directory, checking that the truth model is the
/// trap-derived twin of the believed one and that the recorded fingerprint
/// still matches.
pub fn read_instance(dir: &Path) -> Result<DomainInstance, FormatError> {
    let believed = read_mdp(&dir.join(BELIEVED_FILE))?;
    let truth = read_mdp(&dir.join(TRUTH_FILE))?;
    let path = dir.join(INSTANCE_FILE);
    let doc: InstanceDoc = read_json(&path)?;
    let kind = DomainKind::from_name(&doc.domain).ok_or_else(|| FormatError::invalid(&path, format!("unknown domain `{}`", doc.domain)))?;
    let metadata = DomainMetadata {
        kind,
        size: doc.size,
        slip: doc.slip,
        delta: doc.delta,
        seed: doc.seed,
        trap_seed: doc.trap_seed,
        goal_reachable: doc.goal_reachable,
    };
    let inst = DomainInstance::from_parts(believed, truth, &doc.traps, metadata).map_err(|e| FormatError::invalid(&path, e.to_string()))?;
    if inst.fingerprint().to_hex() != doc.fingerprint {
        return Err(FormatError::invalid(&path, "fingerprint does not match the model files"));
    }
    Ok(inst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntryDoc {
    pub state: usize,
    pub action: usize,
    pub budget: usize,
    pub kind: String,
    /// `"noop"`, `"select"` or absent for absorbing triples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDoc {
    pub action: usize,
    pub prob: f64,
}

/// `kappa` may be infinite, which JSON numbers cannot carry; it is written as
/// the string `"inf"` in that case.
mod kappa_text {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(k: &f64, s: S) -> Result<S::Ok, S::Error> {
        if k.is_finite() {
            Repr::Number(*k).serialize(s)
        } else {
            Repr::Text("inf".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(k) => Ok(k),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid kappa `{t}`"))),
        }
    }
}

/// Attacker settings a policy was planned against; needed to replay it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerDoc {
    #[serde(with = "kappa_text")]
    pub kappa: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl AttackerDoc {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDoc {
    pub attacker: AttackerDoc,
    pub fingerprint: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub budget: usize,
    pub gamma: f64,
    pub traps: Vec<usize>,
    pub initial_state: usize,
    pub initial: Vec<InitialDoc>,
    pub initial_value: f64,
    pub entries: Vec<PolicyEntryDoc>,
}

fn kind_name(k: NodeKind) -> &'static str {
    match k {
        NodeKind::Active => "active",
        NodeKind::Trap => "trap",
        NodeKind::Exhausted => "exhausted",
        NodeKind::Finished => "finished",
        NodeKind::Invalid => "invalid",
    }
}

fn kind_from_name(name: &str) -> Option<NodeKind> {
    [NodeKind::Active, NodeKind::Trap, NodeKind::Exhausted, NodeKind::Finished, NodeKind::Invalid]
        .into_iter()
        .find(|&k| kind_name(k) == name)
}

impl PolicyDoc {
    pub fn from_solution(sol: &DefenderSolution, attacker: AttackerDoc) -> Self {
        let space = sol.space();
        let initial_state = sol.initial().first().map_or(0, |(x, _)| x.attacker_state);
        Self {
            attacker,
            fingerprint: sol.fingerprint().to_hex(),
            n_states: space.n_states,
            n_actions: space.n_actions,
            budget: space.budget,
            gamma: sol.gamma(),
            traps: sol.traps().to_vec(),
            initial_state,
            initial: sol
                .initial()
                .iter()
                .map(|&(x, prob)| InitialDoc {
                    action: x.attacker_action,
                    prob,
                })
                .collect(),
            initial_value: sol.initial_value(),
            entries: sol
                .entries()
                .iter()
                .map(|e| {
                    let (decision, target) = match e.action {
                        None => (None, None),
                        Some(DefenderAction::Noop) => (Some("noop".into()), None),
                        Some(DefenderAction::SelectOutcome(t)) => (Some("select".into()), Some(t)),
                    };
                    PolicyEntryDoc {
                        state: e.state.attacker_state,
                        action: e.state.attacker_action,
                        budget: e.state.budget,
                        kind: kind_name(e.kind).into(),
                        decision,
                        target,
                        value: e.value,
                    }
                })
                .collect(),
        }
    }

    pub fn to_solution(&self) -> Result<DefenderSolution, String> {
        let fingerprint = Fingerprint::from_hex(&self.fingerprint).ok_or("malformed fingerprint")?;
        let space = TripleSpace {
            n_states: self.n_states,
            n_actions: self.n_actions,
            budget: self.budget,
        };
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let kind = kind_from_name(&e.kind).ok_or_else(|| format!("unknown triple kind `{}`", e.kind))?;
                let action = match (e.decision.as_deref(), e.target) {
                    (None, None) => None,
                    (Some("noop"), None) => Some(DefenderAction::Noop),
                    (Some("select"), Some(t)) => Some(DefenderAction::SelectOutcome(t)),
                    _ => return Err(format!("malformed decision at ({}, {}, {})", e.state, e.action, e.budget)),
                };
                Ok(PolicyEntry {
                    state: DefenderState::new(e.state, e.action, e.budget),
                    kind,
                    action,
                    value: e.value,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let initial = self
            .initial
            .iter()
            .map(|i| (DefenderState::new(self.initial_state, i.action, self.budget), i.prob))
            .collect();
        DefenderSolution::from_parts(space, self.gamma, fingerprint, self.traps.clone(), entries, initial)
            .ok_or_else(|| "policy entry outside the declared state space".into())
    }
}

pub fn write_policy(path: &Path, sol: &DefenderSolution, attacker: AttackerDoc) -> Result<(), FormatError> {
    write_json(path, &PolicyDoc::from_solution(sol, attacker))
}

pub fn read_policy(path: &Path) -> Result<(DefenderSolution, AttackerDoc), FormatError> {
    let doc: PolicyDoc = read_json(path)?;
    let sol = doc.to_solution().map_err(|m| FormatError::invalid(path, m))?;
    Ok((sol, doc.attacker))
}

/// One JSON line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceLine {
    pub episode: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// Per step: `null` (not consulted), `-1` (noop) or the selected successor.
    pub defender: Vec<Option<i64>>,
    pub attacker_return: f64,
    pub trapped: bool,
    pub steps_to_trap: Option<usize>,
    pub budget_exhausted_at: Option<usize>,
}

impl TraceLine {
    pub fn new(episode: usize, start: usize, rec: &EpisodeRecord) -> Self {
        let tau = rec.trajectory(start);
        Self {
            episode,
            states: tau.states().to_vec(),
            actions: tau.actions().to_vec(),
            defender: rec
                .steps
                .iter()
                .map(|s| match s.defender {
                    None => None,
                    Some(DefenderAction::Noop) => Some(-1),
                    Some(DefenderAction::SelectOutcome(t)) => Some(t as i64),
                })
                .collect(),
            attacker_return: rec.attacker_return,
            trapped: rec.trapped,
            steps_to_trap: rec.steps_to_trap,
            budget_exhausted_at: rec.budget_exhausted_at,
        }
    }
}

/// Writer for a JSON-lines trace file.
pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, FormatError> {
        let file = fs::File::create(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, line: &TraceLine) -> Result<(), FormatError> {
        let path = self.path.clone();
        serde_json::to_writer(&mut self.out, line).map_err(|source| FormatError::Json { path: path.clone(), source })?;
        self.out.write_all(b"\n").map_err(|source| FormatError::Io { path, source })
    }

    pub fn finish(mut self) -> Result<(), FormatError> {
        self.out.flush().map_err(|source| FormatError::Io { path: self.path, source })
    }
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceLine>, FormatError> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| FormatError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

pub fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<(), FormatError> {
    write_json(path, manifest)
}

pub fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    read_json(path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    write_json(path, value)
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use entrap_core::attacker::AttackerModel;
    use entrap_core::defender::{compile_defender_mdp, solve_defender, CompileOptions};
    use entrap_core::domains::{generate_gridworld, showroom_demo, GridworldParams};
    use entrap_core::SolverConfig;

    #[test]
    fn mdp_round_trip_is_exact() {
        let inst = generate_gridworld(&GridworldParams::default()).unwrap();
        let doc = MdpDoc::from_mdp(&inst.believed);
        let text = serde_json::to_string(&doc).unwrap();
        let back: MdpDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_mdp().unwrap(), inst.believed);
    }

    #[test]
    fn loader_reports_first_violation() {
        let mut doc = MdpDoc::from_mdp(&showroom_demo().believed);
        doc.transitions[0].prob = 0.7;
        assert!(matches!(doc.to_mdp(), Err(ModelError::RowSum { state: 0, action: 0, .. })));
        let mut doc = MdpDoc::from_mdp(&showroom_demo().believed);
        doc.rewards.pop();
        assert!(matches!(doc.to_mdp(), Err(ModelError::LengthMismatch { .. })));
        let mut doc = MdpDoc::from_mdp(&showroom_demo().believed);
        doc.transitions[0].successor = 99;
        assert!(matches!(doc.to_mdp(), Err(ModelError::StateOutOfRange { index: 99, .. })));
        let unknown = r#"{"states":["a"],"actions":["x"],"transitions":[],"rewards":[0],"terminals":[0],"gamma":0.9,"initial":0,"extra":1}"#;
        assert!(serde_json::from_str::<MdpDoc>(unknown).unwrap_err().to_string().contains("extra"));
    }

    #[test]
    fn instance_and_policy_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inst = showroom_demo();
        write_instance(dir.path(), &inst).unwrap();
        assert_eq!(read_instance(dir.path()).unwrap(), inst);

        let cfg = SolverConfig::default();
        let att = AttackerModel::build(inst.believed.clone(), 5.0, cfg).unwrap();
        let d = compile_defender_mdp(&att, &inst.traps, 4, CompileOptions::default()).unwrap();
        let sol = solve_defender(&d, cfg).unwrap();
        let path = dir.path().join("policy.json");
        let settings = AttackerDoc {
            kappa: f64::INFINITY,
            tolerance: cfg.tolerance,
            max_iterations: cfg.max_iterations,
        };
        write_policy(&path, &sol, settings).unwrap();
        let (back, back_settings) = read_policy(&path).unwrap();
        assert_eq!(back, sol);
        assert_eq!(back_settings, settings);
        let first = std::fs::read(&path).unwrap();
        write_policy(&path, &back, back_settings).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn tampered_instance_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let inst = showroom_demo();
        write_instance(dir.path(), &inst).unwrap();
        let mut believed = inst.believed.to_builder();
        believed.set_reward(6, 2.0);
        write_mdp(&dir.path().join(BELIEVED_FILE), &believed.build().unwrap()).unwrap();
        assert!(read_instance(dir.path()).is_err());
    }
}
