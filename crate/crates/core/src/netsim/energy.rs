use crate::addr::NodeId;
use serde::{Deserialize, Serialize};

pub const DEFAULT_E_TX_MJ_PER_BYTE: f64 = 0.001;
pub const DEFAULT_E_RX_MJ_PER_BYTE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    /// Millijoules per transmitted byte.
    pub e_tx: f64,
    /// Millijoules per received byte.
    pub e_rx: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            e_tx: DEFAULT_E_TX_MJ_PER_BYTE,
            e_rx: DEFAULT_E_RX_MJ_PER_BYTE,
        }
    }
}

/// Byte-proportional radio energy accounting.
#[derive(Debug, Clone)]
pub struct EnergyMeter {
    model: EnergyModel,
    tx_bytes: Vec<u64>,
    rx_bytes: Vec<u64>,
}

impl EnergyMeter {
    pub fn new(nodes: usize, model: EnergyModel) -> Self {
        EnergyMeter {
            model,
            tx_bytes: vec![0; nodes],
            rx_bytes: vec![0; nodes],
        }
    }

    pub fn charge_tx(&mut self, node: NodeId, bytes: usize) {
        self.tx_bytes[node.0 as usize] += bytes as u64;
    }

    pub fn charge_rx(&mut self, node: NodeId, bytes: usize) {
        self.rx_bytes[node.0 as usize] += bytes as u64;
    }

    pub fn tx_bytes(&self, node: NodeId) -> u64 {
        self.tx_bytes[node.0 as usize]
    }

    pub fn rx_bytes(&self, node: NodeId) -> u64 {
        self.rx_bytes[node.0 as usize]
    }

    pub fn total_tx_bytes(&self) -> u64 {
        self.tx_bytes.iter().sum()
    }

    pub fn energy_mj(&self, node: NodeId) -> f64 {
        self.tx_bytes(node) as f64 * self.model.e_tx + self.rx_bytes(node) as f64 * self.model.e_rx
    }

    /// Millijoules spent by `node` per delivered packet; infinite when
    /// nothing was delivered.
    pub fn energy_per_delivered(&self, node: NodeId, delivered: usize) -> f64 {
        energy_per_delivered(self.energy_mj(node), delivered)
    }
}

pub fn energy_per_delivered(energy_mj: f64, delivered: usize) -> f64 {
    if delivered == 0 {
        f64::INFINITY
    } else {
        energy_mj / delivered as f64
    }
}
