//! Discrete-event engine: clock, ordered event queue, radio links with
//! latency and loss, passive sniffers and energy accounting.
//!
//! Events run in `(time, sequence)` order, where `sequence` is a global
//! insertion counter, so equal-time events keep FIFO order and a run is a
//! pure function of its inputs and seed.

mod energy;
mod trace;

pub use energy::{energy_per_delivered, EnergyMeter, EnergyModel};
pub use trace::{Trace, TraceRow, TRACE_HEADER};

use crate::addr::{LinkAddr, NodeId};
use crate::adversary::AttackAction;
use crate::csm::EncodedControlMessage;
use crate::time::{SimDuration, SimTime};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::net::Ipv6Addr;
use thiserror::Error;

pub const DEFAULT_LINK_LATENCY_S: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event at {at} scheduled in the past (now {now})")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("no link between node {from} and node {to}")]
    NoLink { from: NodeId, to: NodeId },
    #[error("no node owns link-layer address {0}")]
    UnknownAddress(LinkAddr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Unicast(LinkAddr),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameBody {
    /// Encoded fragmentation header followed by the fragment payload.
    Fragment(Vec<u8>),
    /// IPv6 dispatch followed by a datagram small enough for one frame.
    Datagram(Vec<u8>),
    /// Plaintext DIO: sender address in clear plus the DIO body.
    Dio { sender: Ipv6Addr, body: Vec<u8> },
    CodedDio(EncodedControlMessage),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Link-layer source as written in the frame; not necessarily the transmitter.
    pub src: LinkAddr,
    pub dst: Destination,
    pub body: FrameBody,
}

impl Frame {
    /// Octets charged to the radio for this frame.
    pub fn wire_len(&self) -> usize {
        match &self.body {
            FrameBody::Fragment(b) | FrameBody::Datagram(b) => b.len(),
            FrameBody::Dio { body, .. } => 1 + 16 + body.len(),
            FrameBody::CodedDio(m) => m.wire_len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    Dio,
    ReassemblyDeadline,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    FrameDelivery {
        from: NodeId,
        frame: Frame,
        /// A read-only copy overheard by a sniffer.
        sniffed: bool,
    },
    TimerExpiry(Timer),
    AppSend { seq: u32 },
    AttackAction(AttackAction),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::FrameDelivery { .. } => "FrameDelivery",
            EventKind::TimerExpiry(_) => "TimerExpiry",
            EventKind::AppSend { .. } => "AppSend",
            EventKind::AttackAction(_) => "AttackAction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: SimTime,
    pub sequence: u64,
    pub target: NodeId,
    pub kind: EventKind,
}

struct Queued(Event);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.0.time, self.0.sequence) == (other.0.time, other.0.sequence)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.0.time, self.0.sequence).cmp(&(other.0.time, other.0.sequence))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub latency: SimDuration,
    pub loss_probability: f64,
}

impl Default for Link {
    fn default() -> Self {
        Link {
            latency: SimDuration::from_secs_f64(DEFAULT_LINK_LATENCY_S),
            loss_probability: 0.0,
        }
    }
}

fn link_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub label: String,
    pub link_addr: LinkAddr,
}

/// The static radio graph of a world.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    links: BTreeMap<(NodeId, NodeId), Link>,
    adjacency: Vec<Vec<NodeId>>,
    /// sniffer -> links it overhears
    sniffers: BTreeMap<NodeId, Vec<(NodeId, NodeId)>>,
}

impl Topology {
    pub fn new(nodes: Vec<NodeSpec>) -> Self {
        let n = nodes.len();
        Topology {
            nodes,
            links: BTreeMap::new(),
            adjacency: vec![Vec::new(); n],
            sniffers: BTreeMap::new(),
        }
    }

    pub fn connect(&mut self, a: NodeId, b: NodeId, link: Link) {
        if self.links.insert(link_key(a, b), link).is_none() {
            self.adjacency[a.0 as usize].push(b);
            self.adjacency[b.0 as usize].push(a);
            self.adjacency[a.0 as usize].sort();
            self.adjacency[b.0 as usize].sort();
        }
    }

    pub fn add_sniffer(&mut self, sniffer: NodeId, a: NodeId, b: NodeId) {
        self.sniffers
            .entry(sniffer)
            .or_default()
            .push(link_key(a, b));
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.links.get(&link_key(a, b))
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.0 as usize]
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node.0 as usize].label
    }

    pub fn link_addr(&self, node: NodeId) -> LinkAddr {
        self.nodes[node.0 as usize].link_addr
    }

    pub fn node_by_link(&self, addr: LinkAddr) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.link_addr == addr)
            .map(|i| NodeId(i as u16))
    }

    fn sniffers_of(&self, a: NodeId, b: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let key = link_key(a, b);
        self.sniffers
            .iter()
            .filter(move |(_, links)| links.contains(&key))
            .map(|(s, _)| *s)
    }
}

pub struct Engine {
    now: SimTime,
    sequence: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    topology: Topology,
    energy: EnergyMeter,
    trace: Trace,
    loss_rng: ChaCha8Rng,
    offered_bytes: u64,
    processed: u64,
}

impl Engine {
    pub fn new(topology: Topology, energy: EnergyModel, loss_rng: ChaCha8Rng, trace: bool) -> Self {
        let n = topology.len();
        Engine {
            now: SimTime::ZERO,
            sequence: 0,
            queue: BinaryHeap::new(),
            topology,
            energy: EnergyMeter::new(n, energy),
            trace: Trace::new(trace),
            loss_rng,
            offered_bytes: 0,
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn energy(&self) -> &EnergyMeter {
        &self.energy
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Bytes handed to the radio by all nodes, delivered or not.
    pub fn offered_bytes(&self) -> u64 {
        self.offered_bytes
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Logs a trace row attributed to `node` at the current time.
    pub fn log(
        &mut self,
        node: NodeId,
        event_kind: &'static str,
        detail: std::fmt::Arguments<'_>,
        result: impl std::fmt::Display,
    ) {
        if self.trace.enabled() {
            let label = self.topology.label(node).to_string();
            self.trace.record(self.now, &label, event_kind, detail, result);
        }
    }

    pub fn schedule(&mut self, at: SimTime, target: NodeId, kind: EventKind) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::PastEvent { at, now: self.now });
        }
        let sequence = self.sequence;
        self.sequence += 1;
        self.queue.push(Reverse(Queued(Event {
            time: at,
            sequence,
            target,
            kind,
        })));
        Ok(())
    }

    /// Pops the next event due at or before `until`, advancing the clock.
    pub fn next_event(&mut self, until: SimTime) -> Option<Event> {
        let due = matches!(self.queue.peek(), Some(Reverse(Queued(e))) if e.time <= until);
        if !due {
            return None;
        }
        let Reverse(Queued(event)) = self.queue.pop()?;
        self.now = event.time;
        self.processed += 1;
        Some(event)
    }

    /// Puts `frame` on the air from `from` at time `at`.
    ///
    /// The sender is charged immediately; each receiver (including passive
    /// sniffers of the link) is charged when its delivery event runs.
    pub fn transmit(&mut self, from: NodeId, frame: Frame, at: SimTime) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::PastEvent { at, now: self.now });
        }
        let receivers: Vec<NodeId> = match frame.dst {
            Destination::Unicast(addr) => {
                let to = self
                    .topology
                    .node_by_link(addr)
                    .ok_or(SimError::UnknownAddress(addr))?;
                if self.topology.link(from, to).is_none() {
                    return Err(SimError::NoLink { from, to });
                }
                vec![to]
            }
            Destination::Broadcast => self.topology.neighbors(from).to_vec(),
        };
        let len = frame.wire_len();
        self.energy.charge_tx(from, len);
        self.offered_bytes += len as u64;

        // (target, sniffed, link endpoint the copy travels over)
        let mut deliveries: Vec<(NodeId, bool, NodeId)> =
            receivers.iter().map(|&to| (to, false, to)).collect();
        for &to in &receivers {
            for s in self.topology.sniffers_of(from, to) {
                if s != from && deliveries.iter().all(|d| d.0 != s) {
                    deliveries.push((s, true, to));
                }
            }
        }
        for (target, sniffed, via) in deliveries {
            let link = *self.topology.link(from, via).expect("checked above");
            if link.loss_probability > 0.0
                && self.loss_rng.random_bool(link.loss_probability.min(1.0))
            {
                let label = self.topology.label(target).to_string();
                self.log(from, "loss", format_args!("to={label}"), "dropped");
                continue;
            }
            self.schedule(
                at + link.latency,
                target,
                EventKind::FrameDelivery {
                    from,
                    frame: frame.clone(),
                    sniffed,
                },
            )?;
        }
        Ok(())
    }

    /// Charges reception of a delivered frame.
    pub fn charge_rx(&mut self, node: NodeId, frame: &Frame) {
        self.energy.charge_rx(node, frame.wire_len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn line(loss: f64) -> Engine {
        let mut topo = Topology::new(
            (0..3)
                .map(|i| NodeSpec {
                    label: format!("n{i}"),
                    link_addr: LinkAddr(i),
                })
                .collect(),
        );
        let link = Link {
            loss_probability: loss,
            ..Link::default()
        };
        topo.connect(NodeId(0), NodeId(1), link);
        topo.connect(NodeId(1), NodeId(2), link);
        topo.add_sniffer(NodeId(2), NodeId(0), NodeId(1));
        Engine::new(topo, EnergyModel::default(), ChaCha8Rng::seed_from_u64(1), true)
    }

    fn frame(to: u16, len: usize) -> Frame {
        Frame {
            src: LinkAddr(0),
            dst: Destination::Unicast(LinkAddr(to)),
            body: FrameBody::Fragment(vec![0; len]),
        }
    }

    #[test]
    fn empty_world_runs_to_completion() {
        let mut e = line(0.0);
        assert!(e.next_event(SimTime::from_secs_f64(1200.0)).is_none());
        assert!(e.trace().is_empty());
    }

    #[test]
    fn lossless_delivery_and_sniffing() {
        let mut e = line(0.0);
        e.transmit(NodeId(0), frame(1, 102), SimTime::ZERO).unwrap();
        assert_eq!(e.energy().tx_bytes(NodeId(0)), 102);
        let first = e.next_event(SimTime::from_secs_f64(1.0)).unwrap();
        assert_eq!(first.time, SimTime::from_secs_f64(0.005));
        assert_eq!(first.target, NodeId(1));
        let second = e.next_event(SimTime::from_secs_f64(1.0)).unwrap();
        assert_eq!(second.target, NodeId(2));
        assert!(matches!(second.kind, EventKind::FrameDelivery { sniffed: true, .. }));
    }

    #[test]
    fn total_loss_still_charges_sender() {
        let mut e = line(1.0);
        e.transmit(NodeId(0), frame(1, 102), SimTime::ZERO).unwrap();
        assert_eq!(e.energy().tx_bytes(NodeId(0)), 102);
        assert!(e.next_event(SimTime::from_secs_f64(10.0)).is_none());
    }

    #[test]
    fn no_link_and_past_events_are_errors() {
        let mut e = line(0.0);
        assert_eq!(
            e.transmit(NodeId(0), frame(2, 10), SimTime::ZERO),
            Err(SimError::NoLink { from: NodeId(0), to: NodeId(2) })
        );
        e.schedule(SimTime::from_secs_f64(5.0), NodeId(0), EventKind::TimerExpiry(Timer::Dio))
            .unwrap();
        e.next_event(SimTime::from_secs_f64(10.0)).unwrap();
        assert!(matches!(
            e.schedule(SimTime::from_secs_f64(1.0), NodeId(0), EventKind::TimerExpiry(Timer::Dio)),
            Err(SimError::PastEvent { .. })
        ));
    }

    #[test]
    fn equal_times_run_fifo() {
        let mut e = line(0.0);
        let t = SimTime::from_secs_f64(1.0);
        for n in [2, 0, 1] {
            e.schedule(t, NodeId(n), EventKind::TimerExpiry(Timer::Dio)).unwrap();
        }
        let order: Vec<u16> = std::iter::from_fn(|| e.next_event(t)).map(|ev| ev.target.0).collect();
        assert_eq!(order, vec![2, 0, 1]);
    }

    #[test]
    fn broadcast_reaches_all_neighbors_once_charged() {
        let mut e = line(0.0);
        let f = Frame {
            src: LinkAddr(1),
            dst: Destination::Broadcast,
            body: FrameBody::Datagram(vec![0x41; 20]),
        };
        e.transmit(NodeId(1), f, SimTime::ZERO).unwrap();
        assert_eq!(e.energy().tx_bytes(NodeId(1)), 20);
        assert_eq!(e.pending(), 2);
        assert_eq!(e.offered_bytes(), e.energy().total_tx_bytes());
    }
}
