//! Attack scheduling for the buffer-reservation scenarios.
//!
//! The adversary only knows *when* the victim sends (it sniffs FRAG1s), so a
//! plan is a list of timed actions phased against the victim's nominal send
//! times. Reservation attacks repeat once per cycle, which by default is the
//! receiver's reassembly timeout: reserve, wait for eviction, reserve again.

use crate::time::{SimDuration, SimTime};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    /// Normal DoS: complete packets.
    FullPacket,
    /// Basic reservation: a lone FRAG1 per cycle.
    Frag1Only,
    /// Sophisticated reservation: every fragment but the last, spread over the cycle.
    AllButLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    Before,
    Simultaneous,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knowledge {
    /// No network key.
    External,
    /// Holds the preinstalled key and keeps valid chains.
    Internal,
    /// No key, but writes the victim's link-layer address into its fragments.
    SpoofLinkAddr,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::None,
        AttackKind::FullPacket,
        AttackKind::Frag1Only,
        AttackKind::AllButLast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::FullPacket => "full-packet",
            AttackKind::Frag1Only => "frag1-only",
            AttackKind::AllButLast => "all-but-last",
        }
    }

    /// Whether the attack holds a reassembly slot without completing it.
    pub fn is_buffer_reservation(self) -> bool {
        matches!(self, AttackKind::Frag1Only | AttackKind::AllButLast)
    }
}

impl Timing {
    pub const ALL: [Timing; 3] = [Timing::Before, Timing::Simultaneous, Timing::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Timing::Before => "before",
            Timing::Simultaneous => "simultaneous",
            Timing::After => "after",
        }
    }
}

impl Knowledge {
    pub fn as_str(self) -> &'static str {
        match self {
            Knowledge::External => "external",
            Knowledge::Internal => "internal",
            Knowledge::SpoofLinkAddr => "spoof-link-addr",
        }
    }
}

macro_rules! parse_enum {
    ($ty:ty, $($variant:expr),+) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                let wanted = s.to_ascii_lowercase().replace('_', "-");
                [$($variant),+]
                    .into_iter()
                    .find(|v: &$ty| v.as_str() == wanted)
                    .ok_or_else(|| format!("unknown value `{s}`"))
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

parse_enum!(AttackKind, AttackKind::None, AttackKind::FullPacket, AttackKind::Frag1Only, AttackKind::AllButLast);
parse_enum!(Timing, Timing::Before, Timing::Simultaneous, Timing::After);
parse_enum!(Knowledge, Knowledge::External, Knowledge::Internal, Knowledge::SpoofLinkAddr);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub timing: Timing,
    /// Seconds; no adversary action happens earlier.
    pub start: f64,
    /// Seconds the adversary leads (Before) or trails (After) the victim.
    pub lead_lag: f64,
    /// Uniform send-time jitter of ± this many seconds, applied to both
    /// the adversary and the legitimate sender.
    pub jitter: f64,
    pub knowledge: Knowledge,
    /// Reservation cycle in seconds; defaults to the reassembly timeout.
    pub cycle: Option<f64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackKind::None,
            timing: Timing::Before,
            start: 50.0,
            lead_lag: 5.0,
            jitter: 2.0,
            knowledge: Knowledge::External,
            cycle: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.start.is_nan() || self.start <= 0.0 {
            return Err(format!("attack start must be positive, got {}", self.start));
        }
        if self.jitter < 0.0 {
            return Err(format!("jitter must be non-negative, got {}", self.jitter));
        }
        if self.lead_lag.is_nan() || self.lead_lag <= self.jitter {
            return Err(format!(
                "lead_lag ({}) must exceed jitter ({}) for timing classes to stay distinct",
                self.lead_lag, self.jitter
            ));
        }
        if let Some(c) = self.cycle {
            if c.is_nan() || c <= 0.0 {
                return Err(format!("cycle must be positive, got {c}"));
            }
        }
        Ok(())
    }

    fn phase(&self) -> f64 {
        match self.timing {
            Timing::Before => -self.lead_lag,
            Timing::Simultaneous => 0.0,
            Timing::After => self.lead_lag,
        }
    }

    /// Scenario label such as `frag1-only/before`.
    pub fn label(&self) -> String {
        match self.kind {
            AttackKind::None => "none".to_string(),
            k => format!("{}/{}", k.as_str(), self.timing.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackAction {
    /// Fragment `index` of a fake datagram that is never completed.
    Fragment { tag: u16, index: u8 },
    /// A complete datagram, every fragment sent back to back.
    Packet { tag: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedAction {
    pub at: SimTime,
    pub action: AttackAction,
}

/// What the adversary needs to know about the environment to plan.
#[derive(Debug, Clone)]
pub struct PlanContext<'a> {
    /// Nominal (unjittered) victim send times, ascending.
    pub victim_schedule: &'a [SimTime],
    /// Victim's send period, used by the full-packet attack.
    pub victim_period: SimDuration,
    pub reassembly_timeout: SimDuration,
    /// Fragments a fake datagram splits into.
    pub fragments_per_datagram: u8,
    pub until: SimTime,
}

fn jittered(nominal: f64, jitter: f64, start: f64, rng: &mut impl Rng) -> SimTime {
    let offset = if jitter > 0.0 {
        rng.random_range(-jitter..=jitter)
    } else {
        0.0
    };
    SimTime::from_secs_f64((nominal + offset).max(start))
}

/// Produces the adversary's timed actions for one round.
pub fn plan_attack(cfg: &AttackConfig, ctx: &PlanContext<'_>, rng: &mut impl Rng) -> Vec<TimedAction> {
    if cfg.kind == AttackKind::None {
        return Vec::new();
    }
    let phase = cfg.phase();
    let Some(anchor) = ctx
        .victim_schedule
        .iter()
        .map(|t| t.as_secs_f64() + phase)
        .find(|&t| t >= cfg.start)
    else {
        return Vec::new();
    };
    let until = ctx.until.as_secs_f64();
    let period = match cfg.kind {
        AttackKind::FullPacket => ctx.victim_period.as_secs_f64(),
        _ => cfg
            .cycle
            .unwrap_or_else(|| ctx.reassembly_timeout.as_secs_f64()),
    };

    let mut plan = Vec::new();
    let mut nominal = anchor;
    while nominal <= until {
        let at = jittered(nominal, cfg.jitter, cfg.start, rng);
        let tag: u16 = rng.random();
        match cfg.kind {
            AttackKind::Frag1Only => plan.push(TimedAction {
                at,
                action: AttackAction::Fragment { tag, index: 0 },
            }),
            AttackKind::AllButLast => {
                let sent = ctx.fragments_per_datagram.saturating_sub(1).max(1);
                let spacing = SimDuration::from_secs_f64(period / sent as f64);
                for index in 0..sent {
                    plan.push(TimedAction {
                        at: at + spacing.times(index as u64),
                        action: AttackAction::Fragment { tag, index },
                    });
                }
            }
            AttackKind::FullPacket => plan.push(TimedAction {
                at,
                action: AttackAction::Packet { tag },
            }),
            AttackKind::None => unreachable!(),
        }
        nominal += period;
    }
    plan.retain(|a| a.at <= ctx.until);
    plan
}
