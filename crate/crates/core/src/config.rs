//! Scenario configuration.
//!
//! Configs are TOML documents; every field has a default, so an empty file
//! describes the no-attack vanilla baseline on the default four-node
//! topology:
//!
//! ```toml
//! mode = "csm"
//! rounds = 10
//! base_seed = 1
//!
//! [attack]
//! kind = "frag1-only"      # none | full-packet | frag1-only | all-but-last
//! timing = "before"        # before | simultaneous | after
//! knowledge = "external"   # external | internal | spoof-link-addr
//!
//! [[topology.nodes]]
//! name = "R"
//! role = "root"
//! ```

use crate::adversary::{AttackConfig, AttackKind};
use crate::netsim::EnergyModel;
use crate::rpl::Mode;
use crate::trust::TrustConfig;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Root,
    Router,
    Sender,
    Adversary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
    /// Seconds; falls back to the topology default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnifferConfig {
    pub node: String,
    /// The two endpoints of the overheard link.
    pub link: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub latency: f64,
    pub loss: f64,
    pub nodes: Vec<NodeConfig>,
    pub links: Vec<LinkConfig>,
    pub sniffers: Vec<SnifferConfig>,
}

impl Default for TopologyConfig {
    /// Root R and forwarder F; sender S and adversary A are both children
    /// of F, and A overhears the S-F link.
    fn default() -> Self {
        let node = |name: &str, role| NodeConfig {
            name: name.to_string(),
            role,
        };
        let link = |a: &str, b: &str| LinkConfig {
            a: a.to_string(),
            b: b.to_string(),
            latency: None,
            loss: None,
        };
        TopologyConfig {
            latency: crate::netsim::DEFAULT_LINK_LATENCY_S,
            loss: 0.0,
            nodes: vec![
                node("R", Role::Root),
                node("F", Role::Router),
                node("S", Role::Sender),
                node("A", Role::Adversary),
            ],
            links: vec![link("R", "F"), link("F", "S"), link("F", "A")],
            sniffers: vec![SnifferConfig {
                node: "A".to_string(),
                link: ["S".to_string(), "F".to_string()],
            }],
        }
    }
}

impl TopologyConfig {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    fn only(&self, role: Role) -> Result<Option<usize>, ConfigError> {
        let found: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].role == role)
            .collect();
        match found.len() {
            0 => Ok(None),
            1 => Ok(Some(found[0])),
            n => invalid(format!("expected at most one {role:?} node, found {n}")),
        }
    }

    pub fn root(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.role == Role::Root)
    }

    pub fn sender(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.role == Role::Sender)
    }

    pub fn adversary(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.role == Role::Adversary)
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .links
            .iter()
            .filter_map(|l| {
                let (a, b) = (self.index_of(&l.a)?, self.index_of(&l.b)?);
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// The node the adversary sends its fragments to: the lowest-indexed
    /// neighbor it shares with the sender.
    pub fn attack_target(&self) -> Option<usize> {
        let (s, a) = (self.sender()?, self.adversary()?);
        let sn = self.neighbors(s);
        self.neighbors(a).into_iter().find(|n| sn.contains(n))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nodes.is_empty() {
            return invalid("topology has no nodes");
        }
        if self.nodes.len() > u16::MAX as usize - 1 {
            return invalid("too many nodes");
        }
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return invalid(format!("duplicate node name `{}`", n.name));
            }
        }
        let root = self.only(Role::Root)?;
        let sender = self.only(Role::Sender)?;
        self.only(Role::Adversary)?;
        let (Some(root), Some(sender)) = (root, sender) else {
            return invalid("topology needs exactly one root and one sender");
        };
        if self.latency.is_nan() || self.latency < 0.0 || !(0.0..=1.0).contains(&self.loss) {
            return invalid("default latency must be >= 0 and loss within [0, 1]");
        }
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if self.index_of(end).is_none() {
                    return invalid(format!("link references unknown node `{end}`"));
                }
            }
            if l.a == l.b {
                return invalid(format!("self link on `{}`", l.a));
            }
            if l.latency.is_some_and(|x| x.is_nan() || x < 0.0) || l.loss.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
                return invalid(format!("link {}-{} has invalid latency or loss", l.a, l.b));
            }
        }
        for s in &self.sniffers {
            if self.index_of(&s.node).is_none() {
                return invalid(format!("sniffer `{}` is not a node", s.node));
            }
            let has_link = self.links.iter().any(|l| {
                (l.a == s.link[0] && l.b == s.link[1]) || (l.a == s.link[1] && l.b == s.link[0])
            });
            if !has_link {
                return invalid(format!("sniffer `{}` watches a missing link", s.node));
            }
        }
        // sender must reach the root
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([sender]);
        seen[sender] = true;
        while let Some(n) = queue.pop_front() {
            for m in self.neighbors(n) {
                if !seen[m] && self.nodes[m].role != Role::Adversary {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        if !seen[root] {
            return invalid("sender has no path to the root through legitimate nodes");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub base_seed: u64,
    pub rounds: u32,
    /// Seconds of simulated time per round.
    pub duration: f64,
    /// Legitimate data packet size in octets.
    pub data_size: usize,
    /// Seconds between legitimate sends.
    pub send_period: f64,
    pub max_frag_payload: usize,
    pub reassembly_timeout: f64,
    pub buffer_capacity: usize,
    pub dio_period: f64,
    /// Seconds between consecutive fragments of one datagram.
    pub frag_spacing: f64,
    pub attack: AttackConfig,
    pub trust: TrustConfig,
    pub energy: EnergyModel,
    pub topology: TopologyConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: Mode::Vanilla,
            base_seed: 1,
            rounds: 10,
            duration: 1200.0,
            data_size: 512,
            send_period: 60.0,
            max_frag_payload: 102,
            reassembly_timeout: crate::reassembly::DEFAULT_REASSEMBLY_TIMEOUT_S,
            buffer_capacity: crate::reassembly::DEFAULT_CAPACITY,
            dio_period: crate::rpl::DEFAULT_DIO_PERIOD_S,
            frag_spacing: 0.01,
            attack: AttackConfig::default(),
            trust: TrustConfig::default(),
            energy: EnergyModel::default(),
            topology: TopologyConfig::default(),
        }
    }
}

/// Bytes at the front of every data payload: marker, origin node, sequence.
pub const PAYLOAD_HEADER_LEN: usize = 7;

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// Scenario label such as `frag1-only/before`.
    pub fn label(&self) -> String {
        self.attack.label()
    }

    /// Nominal legitimate send times: every `send_period` strictly before `duration`.
    pub fn victim_schedule(&self) -> Vec<f64> {
        (1..)
            .map(|k| k as f64 * self.send_period)
            .take_while(|&t| t < self.duration)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rounds == 0 {
            return invalid("rounds must be at least 1");
        }
        for (name, v) in [
            ("duration", self.duration),
            ("send_period", self.send_period),
            ("reassembly_timeout", self.reassembly_timeout),
            ("dio_period", self.dio_period),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.frag_spacing.is_nan() || self.frag_spacing < 0.0 {
            return invalid("frag_spacing must be non-negative");
        }
        if self.data_size < PAYLOAD_HEADER_LEN || self.data_size > crate::frag::MAX_DATAGRAM_SIZE as usize {
            return invalid(format!(
                "data_size must be within [{PAYLOAD_HEADER_LEN}, {}], got {}",
                crate::frag::MAX_DATAGRAM_SIZE,
                self.data_size
            ));
        }
        if self.max_frag_payload < 8 {
            return invalid("max_frag_payload must be at least 8");
        }
        if self.buffer_capacity == 0 {
            return invalid("buffer_capacity must be at least 1");
        }
        self.trust.validate().map_err(ConfigError::Invalid)?;
        self.attack.validate().map_err(ConfigError::Invalid)?;
        self.topology.validate()?;
        if self.attack.kind != AttackKind::None {
            if self.topology.adversary().is_none() {
                return invalid("an attack needs an adversary node");
            }
            if self.topology.attack_target().is_none() {
                return invalid("adversary shares no neighbor with the sender");
            }
        }
        let start = self.attack.start;
        if !self
            .victim_schedule()
            .iter()
            .any(|&t| t - self.attack.jitter >= start)
        {
            return invalid("no legitimate packet is sent after the attack start");
        }
        Ok(())
    }
}
