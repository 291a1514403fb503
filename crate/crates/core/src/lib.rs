//! Simulator for 6LoWPAN fragment buffer-reservation attacks and a
//! control-message-secured RPL variant with trust-gated reassembly.

pub mod addr;
pub mod adversary;
pub mod config;
pub mod csm;
pub mod experiments;
pub mod frag;
pub mod netsim;
pub mod reassembly;
pub mod rpl;
pub mod time;
pub mod trust;
pub mod world;

pub use addr::{LinkAddr, NodeId, NodeIdentity};
pub use adversary::{AttackConfig, AttackKind, Knowledge, Timing};
pub use config::{ConfigError, Role, ScenarioConfig};
pub use rpl::Mode;
pub use time::{SimDuration, SimTime};
