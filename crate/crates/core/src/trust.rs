//! Per-neighbor trust, fed by control-message decode outcomes and read by
//! both the routing layer and the fragment admission gate.

use crate::addr::{LinkAddr, NodeIdentity};
use crate::reassembly::AdmissionGate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::net::Ipv6Addr;

pub type TrustVal = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    pub trust_val_min: TrustVal,
    pub trust_val_max: TrustVal,
    /// Control messages are dropped while trust is strictly below this.
    pub trust_trig: TrustVal,
    /// Fragments are admitted while trust is at or above this.
    pub frag_threshold: TrustVal,
    pub step: TrustVal,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            trust_val_min: 0,
            trust_val_max: 100,
            trust_trig: 50,
            frag_threshold: 60,
            step: 10,
        }
    }
}

impl TrustConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.trust_val_min > self.trust_val_max {
            return Err(format!(
                "trust_val_min {} above trust_val_max {}",
                self.trust_val_min, self.trust_val_max
            ));
        }
        let in_range = |v: TrustVal| self.trust_val_min <= v && v <= self.trust_val_max;
        if !in_range(self.trust_trig) {
            return Err(format!("trust_trig {} outside [min, max]", self.trust_trig));
        }
        if !in_range(self.frag_threshold) {
            return Err(format!("frag_threshold {} outside [min, max]", self.frag_threshold));
        }
        Ok(())
    }

    /// The update rule on a single value; `None` means no record yet.
    pub fn apply(&self, current: Option<TrustVal>, success: bool) -> TrustVal {
        match (current, success) {
            (None, true) => self.trust_val_max,
            (None, false) => self.trust_val_min,
            (Some(v), true) => v.saturating_add(self.step).min(self.trust_val_max),
            (Some(v), false) => v.saturating_sub(self.step).max(self.trust_val_min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrustRecord {
    pub neighbor: NodeIdentity,
    pub trust_val: TrustVal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrustTransition {
    pub neighbor: Ipv6Addr,
    pub old: Option<TrustVal>,
    pub new: TrustVal,
}

/// Trust records keyed by IPv6 address, plus the link-layer bindings the
/// fragment gate uses to find them.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    config: TrustConfig,
    records: BTreeMap<Ipv6Addr, TrustRecord>,
    neighbors: BTreeMap<LinkAddr, Ipv6Addr>,
}

impl TrustStore {
    pub fn new(config: TrustConfig) -> Self {
        TrustStore {
            config,
            ..Default::default()
        }
    }

    pub fn config(&self) -> &TrustConfig {
        &self.config
    }

    pub fn trust_of(&self, ipv6: &Ipv6Addr) -> Option<TrustVal> {
        self.records.get(ipv6).map(|r| r.trust_val)
    }

    pub fn records(&self) -> impl Iterator<Item = &TrustRecord> {
        self.records.values()
    }

    /// IPv6 address bound to a link-layer address, if any.
    pub fn resolve(&self, link: LinkAddr) -> Option<Ipv6Addr> {
        self.neighbors.get(&link).copied()
    }

    /// Sets a value directly, clamped to the configured bounds; the write
    /// half of the trust interface for external mechanisms.
    pub fn set(&mut self, neighbor: NodeIdentity, value: TrustVal) {
        let v = value.clamp(self.config.trust_val_min, self.config.trust_val_max);
        self.records
            .entry(neighbor.ipv6)
            .and_modify(|r| r.trust_val = v)
            .or_insert(TrustRecord {
                neighbor,
                trust_val: v,
            });
    }

    /// Applies one decode outcome for `neighbor`.
    ///
    /// A successful decode binds the neighbor's link-layer address to its
    /// IPv6 address if neither is bound yet. Later frames from a different
    /// link-layer address claiming the same IPv6 address are not detected.
    pub fn on_decode_result(&mut self, neighbor: NodeIdentity, success: bool) -> TrustTransition {
        let old = self.trust_of(&neighbor.ipv6);
        let new = self.config.apply(old, success);
        self.records
            .entry(neighbor.ipv6)
            .and_modify(|r| r.trust_val = new)
            .or_insert(TrustRecord {
                neighbor,
                trust_val: new,
            });
        if success && !self.neighbors.values().any(|ip| *ip == neighbor.ipv6) {
            self.neighbors.entry(neighbor.link).or_insert(neighbor.ipv6);
        }
        TrustTransition {
            neighbor: neighbor.ipv6,
            old,
            new,
        }
    }

    /// Whether routing content from this neighbor is accepted.
    pub fn control_gate(&self, ipv6: &Ipv6Addr) -> bool {
        self.trust_of(ipv6)
            .is_some_and(|v| v >= self.config.trust_trig)
    }

    /// Whether a fragment whose frame came from `sender` may enter the assembly buffer.
    pub fn fragment_gate(&self, sender: LinkAddr) -> bool {
        self.resolve(sender)
            .and_then(|ip| self.trust_of(&ip))
            .is_some_and(|v| v >= self.config.frag_threshold)
    }
}

impl AdmissionGate for TrustStore {
    fn admit(&self, sender: LinkAddr) -> bool {
        self.fragment_gate(sender)
    }
}
