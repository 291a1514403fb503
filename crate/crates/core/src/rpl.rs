//! Just enough RPL to build an upward DODAG: periodic DIOs, min-rank parent
//! selection and rank = parent rank + 1.

use crate::addr::NodeIdentity;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv6Addr;
use thiserror::Error;

pub const ROOT_RANK: u16 = 0;
/// Advertised by nodes that have not joined; never selected as parent.
pub const INFINITE_RANK: u16 = 0xFFFF;
pub const DIO_BODY_LEN: usize = 2 + 16;
pub const DEFAULT_DIO_PERIOD_S: f64 = 10.0;

/// RPL security mode of the control plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Unsecured mode: plaintext broadcast DIOs, no fragment gate.
    #[serde(alias = "um")]
    Vanilla,
    /// Chained secure mode: coded unicast DIOs and trust-gated fragments.
    Csm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Csm => "csm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" | "um" => Ok(Mode::Vanilla),
            "csm" => Ok(Mode::Csm),
            other => Err(format!("unknown mode `{other}` (expected vanilla|csm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DioMessage {
    pub rank: u16,
    pub dodag_id: Ipv6Addr,
    pub sender: NodeIdentity,
}

impl DioMessage {
    /// Rank and DODAG id; the sender travels in the frame/message header.
    pub fn body(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DIO_BODY_LEN);
        out.extend_from_slice(&self.rank.to_be_bytes());
        out.extend_from_slice(&self.dodag_id.octets());
        out
    }

    pub fn from_body(body: &[u8], sender: NodeIdentity) -> Option<DioMessage> {
        if body.len() != DIO_BODY_LEN {
            return None;
        }
        let rank = u16::from_be_bytes([body[0], body[1]]);
        let octets: [u8; 16] = body[2..].try_into().ok()?;
        Some(DioMessage {
            rank,
            dodag_id: Ipv6Addr::from(octets),
            sender,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("node has not joined the DODAG")]
pub struct NoRoute;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteChange {
    pub parent: NodeIdentity,
    pub rank: u16,
}

#[derive(Debug, Clone)]
pub struct RankState {
    pub mode: Mode,
    is_root: bool,
    rank: Option<u16>,
    parent: Option<NodeIdentity>,
    dodag_id: Option<Ipv6Addr>,
    candidates: BTreeMap<Ipv6Addr, (NodeIdentity, u16)>,
}

impl RankState {
    pub fn root(mode: Mode, dodag_id: Ipv6Addr) -> Self {
        RankState {
            mode,
            is_root: true,
            rank: Some(ROOT_RANK),
            parent: None,
            dodag_id: Some(dodag_id),
            candidates: BTreeMap::new(),
        }
    }

    pub fn node(mode: Mode) -> Self {
        RankState {
            mode,
            is_root: false,
            rank: None,
            parent: None,
            dodag_id: None,
            candidates: BTreeMap::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.is_root
    }

    pub fn is_joined(&self) -> bool {
        self.rank.is_some()
    }

    pub fn rank(&self) -> Option<u16> {
        self.rank
    }

    pub fn parent(&self) -> Option<NodeIdentity> {
        self.parent
    }

    /// The DIO this node would advertise, if it has joined.
    pub fn dio(&self, me: NodeIdentity) -> Option<DioMessage> {
        Some(DioMessage {
            rank: self.rank?,
            dodag_id: self.dodag_id?,
            sender: me,
        })
    }

    /// Records an accepted DIO and re-runs parent selection.
    ///
    /// Parent is the candidate with the lowest advertised rank, ties broken
    /// by lowest link-layer address. Returns the new route if it changed.
    pub fn on_dio(&mut self, msg: &DioMessage) -> Option<RouteChange> {
        if self.is_root {
            return None;
        }
        if msg.rank == INFINITE_RANK {
            self.candidates.remove(&msg.sender.ipv6);
        } else {
            self.candidates
                .insert(msg.sender.ipv6, (msg.sender, msg.rank));
            self.dodag_id.get_or_insert(msg.dodag_id);
        }
        let best = self
            .candidates
            .values()
            .min_by_key(|(id, rank)| (*rank, id.link))
            .copied();
        let (parent, rank) = match best {
            Some((p, r)) => (Some(p), Some(r.saturating_add(1))),
            None => (None, None),
        };
        let changed = parent != self.parent || rank != self.rank;
        self.parent = parent;
        self.rank = rank;
        match (changed, parent, rank) {
            (true, Some(parent), Some(rank)) => Some(RouteChange { parent, rank }),
            _ => None,
        }
    }

    pub fn next_hop_up(&self) -> Result<NodeIdentity, NoRoute> {
        self.parent.ok_or(NoRoute)
    }
}
