//! One simulated round: node programs on top of the event engine, plus the
//! packet ledger that attributes every legitimate packet to an outcome.

use crate::addr::{LinkAddr, NodeId, NodeIdentity};
use crate::adversary::{plan_attack, AttackAction, AttackKind, Knowledge, PlanContext};
use crate::config::{Role, ScenarioConfig, PAYLOAD_HEADER_LEN};
use crate::csm::{CsmEndpoint, SharedKey};
use crate::frag::{fragment_packet, FragKind, Fragment, Fragmentation, IPV6_DISPATCH};
use crate::netsim::{
    energy_per_delivered, Destination, Engine, EventKind, Frame, FrameBody, Link, NodeSpec,
    SimError, Timer, Topology, Trace,
};
use crate::reassembly::{Admission, AssemblyBuffer, OpenGate, RejectReason};
use crate::rpl::{DioMessage, Mode, RankState, INFINITE_RANK};
use crate::time::{SimDuration, SimTime};
use crate::trust::{TrustStore, TrustVal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv6Addr;

const PAYLOAD_MARKER: u8 = 0xD7;

// RNG stream ids derived from the round seed.
const STREAM_LOSS: u64 = 1;
const STREAM_APP: u64 = 2;
const STREAM_ATTACK: u64 = 3;
const STREAM_KEYS: u64 = 4;
const STREAM_DIO_PHASE: u64 = 5;
const STREAM_NODE_BASE: u64 = 1000;

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PacketId {
    pub origin: NodeId,
    pub seq: u32,
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.seq)
    }
}

/// Deterministic data payload: a small header naming the packet, then filler.
pub fn build_payload(id: PacketId, size: usize) -> Vec<u8> {
    let mut p = Vec::with_capacity(size);
    p.push(PAYLOAD_MARKER);
    p.extend_from_slice(&id.origin.0.to_be_bytes());
    p.extend_from_slice(&id.seq.to_be_bytes());
    for i in p.len()..size {
        p.push((i as u32).wrapping_mul(31).wrapping_add(id.seq.wrapping_mul(7)) as u8 ^ id.origin.0 as u8);
    }
    p.truncate(size);
    p
}

pub fn parse_packet_id(payload: &[u8]) -> Option<PacketId> {
    if payload.len() < PAYLOAD_HEADER_LEN || payload[0] != PAYLOAD_MARKER {
        return None;
    }
    Some(PacketId {
        origin: NodeId(u16::from_be_bytes([payload[1], payload[2]])),
        seq: u32::from_be_bytes([payload[3], payload[4], payload[5], payload[6]]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DropReason {
    BufferBusy,
    NoSlot,
    Untrusted,
    Duplicate,
    SizeMismatch,
    Malformed,
    /// A partially reassembled datagram was evicted at its deadline.
    Timeout,
    /// The holder had no parent to forward to.
    NoRoute,
    /// Never resolved by the end of the round, e.g. every fragment lost on air.
    Lost,
}

impl DropReason {
    pub const ALL: [DropReason; 9] = [
        DropReason::BufferBusy,
        DropReason::NoSlot,
        DropReason::Untrusted,
        DropReason::Duplicate,
        DropReason::SizeMismatch,
        DropReason::Malformed,
        DropReason::Timeout,
        DropReason::NoRoute,
        DropReason::Lost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::BufferBusy => "BufferBusy",
            DropReason::NoSlot => "NoSlot",
            DropReason::Untrusted => "Untrusted",
            DropReason::Duplicate => "Duplicate",
            DropReason::SizeMismatch => "SizeMismatch",
            DropReason::Malformed => "Malformed",
            DropReason::Timeout => "Timeout",
            DropReason::NoRoute => "NoRoute",
            DropReason::Lost => "Lost",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<RejectReason> for DropReason {
    fn from(r: RejectReason) -> Self {
        match r {
            RejectReason::Untrusted => DropReason::Untrusted,
            RejectReason::BufferBusy => DropReason::BufferBusy,
            RejectReason::NoSlot => DropReason::NoSlot,
            RejectReason::Duplicate => DropReason::Duplicate,
            RejectReason::SizeMismatch => DropReason::SizeMismatch,
            RejectReason::Malformed => DropReason::Malformed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fate {
    Pending,
    Delivered { at: SimTime },
    Dropped(DropReason),
}

#[derive(Debug, Clone)]
pub struct PacketRecord {
    pub id: PacketId,
    pub sent_at: SimTime,
    /// Sent at or after the attack start; only these count towards PDR.
    pub measured: bool,
    pub fate: Fate,
    payload: Vec<u8>,
}

/// Outcome bookkeeping for legitimate packets.
///
/// Each hop's fragments are tied back to their packet through the
/// `(frame source, datagram tag)` pair the hop used.
#[derive(Debug, Clone, Default)]
pub struct PacketLedger {
    packets: BTreeMap<PacketId, PacketRecord>,
    hops: BTreeMap<(LinkAddr, u16), PacketId>,
    completions: BTreeMap<(NodeId, PacketId), u32>,
    corrupted: u32,
}

impl PacketLedger {
    pub fn packets(&self) -> impl Iterator<Item = &PacketRecord> {
        self.packets.values()
    }

    pub fn get(&self, id: PacketId) -> Option<&PacketRecord> {
        self.packets.get(&id)
    }

    /// Deliveries whose payload differed from what was sent.
    pub fn corrupted(&self) -> u32 {
        self.corrupted
    }

    /// Reassembly completions of one packet at one node.
    pub fn completions(&self) -> &BTreeMap<(NodeId, PacketId), u32> {
        &self.completions
    }

    fn register(&mut self, id: PacketId, sent_at: SimTime, measured: bool, payload: Vec<u8>) {
        self.packets.insert(
            id,
            PacketRecord {
                id,
                sent_at,
                measured,
                fate: Fate::Pending,
                payload,
            },
        );
    }

    fn is_legit(&self, payload: &[u8]) -> Option<PacketId> {
        parse_packet_id(payload).filter(|id| self.packets.contains_key(id))
    }

    fn bind_hop(&mut self, src: LinkAddr, tag: u16, id: PacketId) {
        self.hops.insert((src, tag), id);
    }

    fn hop(&self, src: LinkAddr, tag: u16) -> Option<PacketId> {
        self.hops.get(&(src, tag)).copied()
    }

    fn drop_packet(&mut self, id: PacketId, reason: DropReason) {
        if let Some(r) = self.packets.get_mut(&id) {
            if r.fate == Fate::Pending {
                r.fate = Fate::Dropped(reason);
            }
        }
    }

    fn completed(&mut self, node: NodeId, id: PacketId) {
        *self.completions.entry((node, id)).or_default() += 1;
    }

    fn deliver(&mut self, id: PacketId, payload: &[u8], at: SimTime) {
        if let Some(r) = self.packets.get_mut(&id) {
            if r.payload != payload {
                self.corrupted += 1;
            }
            r.fate = Fate::Delivered { at };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrustEvent {
    pub time: SimTime,
    pub node: NodeId,
    pub neighbor: Ipv6Addr,
    pub old: Option<TrustVal>,
    pub new: TrustVal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RouteEvent {
    pub time: SimTime,
    pub node: NodeId,
    pub parent: LinkAddr,
    pub rank: u16,
}

#[derive(Debug, Clone, Default)]
pub struct WorldStats {
    /// Events after which some buffer held more slots than its capacity.
    pub occupancy_violations: u64,
    /// Longest time any slot stayed in a buffer.
    pub max_slot_hold: SimDuration,
    pub trust_log: Vec<TrustEvent>,
    pub route_log: Vec<RouteEvent>,
    /// FRAG1 headers the adversary overheard, by arrival time.
    pub sniffed_frag1: Vec<SimTime>,
}

struct Params {
    mode: Mode,
    until: SimTime,
    dio_period: SimDuration,
    frag_spacing: SimDuration,
    max_frag_payload: usize,
    data_size: usize,
    measure_from: SimTime,
    attack_target: Option<LinkAddr>,
    spoof_as: Option<LinkAddr>,
}

struct Ctx<'a> {
    engine: &'a mut Engine,
    ledger: &'a mut PacketLedger,
    stats: &'a mut WorldStats,
    params: &'a Params,
}

impl Ctx<'_> {
    fn log(&mut self, node: NodeId, kind: &'static str, detail: fmt::Arguments<'_>, result: impl fmt::Display) {
        self.engine.log(node, kind, detail, result);
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub identity: NodeIdentity,
    pub role: Role,
    pub rpl: RankState,
    pub buffer: AssemblyBuffer,
    pub trust: TrustStore,
    csm: Option<CsmEndpoint>,
    rng: ChaCha8Rng,
    next_tag: u16,
}

impl Node {
    fn emits_dio(&self) -> bool {
        self.rpl.is_joined() || self.role == Role::Adversary
    }

    fn dio_body(&self) -> Vec<u8> {
        match self.rpl.dio(self.identity) {
            Some(d) => d.body(),
            None => DioMessage {
                rank: INFINITE_RANK,
                dodag_id: Ipv6Addr::UNSPECIFIED,
                sender: self.identity,
            }
            .body(),
        }
    }

    fn on_dio_timer(&mut self, cx: &mut Ctx) -> Result<(), SimError> {
        let now = cx.engine.now();
        cx.engine
            .schedule(now + cx.params.dio_period, self.id, EventKind::TimerExpiry(Timer::Dio))?;
        if !self.emits_dio() {
            return Ok(());
        }
        let body = self.dio_body();
        let rank = u16::from_be_bytes([body[0], body[1]]);
        match cx.params.mode {
            Mode::Vanilla => {
                let frame = Frame {
                    src: self.identity.link,
                    dst: Destination::Broadcast,
                    body: FrameBody::Dio {
                        sender: self.identity.ipv6,
                        body,
                    },
                };
                cx.log(self.id, "dio_tx", format_args!("rank={rank} dst=broadcast"), "sent");
                cx.engine.transmit(self.id, frame, now)?;
            }
            Mode::Csm => {
                let neighbors = cx.engine.topology().neighbors(self.id).to_vec();
                let csm = self.csm.as_mut().expect("csm nodes carry an endpoint");
                for n in neighbors {
                    let peer = NodeIdentity::from_link(cx.engine.topology().link_addr(n));
                    let msg = csm.seal(peer.ipv6, &body, &mut self.rng);
                    let frame = Frame {
                        src: self.identity.link,
                        dst: Destination::Unicast(peer.link),
                        body: FrameBody::CodedDio(msg),
                    };
                    cx.engine.log(self.id, "dio_tx", format_args!("rank={rank} dst={}", peer.link), "sent");
                    cx.engine.transmit(self.id, frame, now)?;
                }
            }
        }
        Ok(())
    }

    fn accept_dio(&mut self, body: &[u8], sender: NodeIdentity, cx: &mut Ctx) {
        let Some(dio) = DioMessage::from_body(body, sender) else {
            cx.log(self.id, "dio_rx", format_args!("from={}", sender.link), "malformed");
            return;
        };
        cx.log(self.id, "dio_rx", format_args!("from={} rank={}", sender.link, dio.rank), "accepted");
        if let Some(change) = self.rpl.on_dio(&dio) {
            cx.log(
                self.id,
                "route",
                format_args!("parent={} rank={}", change.parent.link, change.rank),
                "changed",
            );
            cx.stats.route_log.push(RouteEvent {
                time: cx.engine.now(),
                node: self.id,
                parent: change.parent.link,
                rank: change.rank,
            });
        }
    }

    fn record_trust(&mut self, sender: NodeIdentity, success: bool, cx: &mut Ctx) {
        let t = self.trust.on_decode_result(sender, success);
        if t.old != Some(t.new) {
            cx.log(
                self.id,
                "trust",
                format_args!("neighbor={} old={}", sender.link, t.old.map_or("none".to_string(), |v| v.to_string())),
                t.new,
            );
            cx.stats.trust_log.push(TrustEvent {
                time: cx.engine.now(),
                node: self.id,
                neighbor: t.neighbor,
                old: t.old,
                new: t.new,
            });
        }
    }

    fn on_frame(&mut self, frame: Frame, sniffed: bool, cx: &mut Ctx) -> Result<(), SimError> {
        cx.engine.charge_rx(self.id, &frame);
        if sniffed {
            if let FrameBody::Fragment(bytes) = &frame.body {
                if let Ok(f) = Fragment::from_bytes(bytes) {
                    if f.header.kind == FragKind::Frag1 {
                        cx.stats.sniffed_frag1.push(cx.engine.now());
                        cx.log(self.id, "sniff", format_args!("src={} tag={}", frame.src, f.header.datagram_tag), "frag1");
                    }
                }
            }
            return Ok(());
        }
        match frame.body {
            FrameBody::Dio { sender, body } => {
                let who = NodeIdentity {
                    ipv6: sender,
                    link: frame.src,
                };
                match cx.params.mode {
                    Mode::Vanilla => self.accept_dio(&body, who, cx),
                    Mode::Csm => {
                        cx.log(self.id, "decode", format_args!("from={} plaintext", frame.src), "DecodeFailure");
                        self.record_trust(who, false, cx);
                    }
                }
            }
            FrameBody::CodedDio(msg) => {
                let who = NodeIdentity {
                    ipv6: msg.sender,
                    link: frame.src,
                };
                let Some(csm) = self.csm.as_mut() else {
                    cx.log(self.id, "decode", format_args!("from={}", frame.src), "ignored");
                    return Ok(());
                };
                match csm.open(&msg) {
                    Ok(body) => {
                        cx.log(self.id, "decode", format_args!("from={}", frame.src), "ok");
                        self.record_trust(who, true, cx);
                        if self.trust.control_gate(&who.ipv6) {
                            self.accept_dio(&body, who, cx);
                        } else {
                            cx.log(self.id, "dio_rx", format_args!("from={}", frame.src), "untrusted");
                        }
                    }
                    Err(_) => {
                        cx.log(self.id, "decode", format_args!("from={}", frame.src), "DecodeFailure");
                        self.record_trust(who, false, cx);
                    }
                }
            }
            FrameBody::Datagram(bytes) => {
                if self.role == Role::Adversary || bytes.first() != Some(&IPV6_DISPATCH) {
                    return Ok(());
                }
                self.on_datagram(bytes[1..].to_vec(), cx)?;
            }
            FrameBody::Fragment(bytes) => {
                if self.role == Role::Adversary {
                    return Ok(());
                }
                self.on_fragment(&bytes, frame.src, cx)?;
            }
        }
        Ok(())
    }

    fn expire(&mut self, cx: &mut Ctx) {
        let now = cx.engine.now();
        let timeout = self.buffer.reassembly_timeout();
        for (src, tag) in self.buffer.expire(now) {
            cx.stats.max_slot_hold = cx.stats.max_slot_hold.max(timeout);
            cx.log(self.id, "evict", format_args!("src={src} tag={tag}"), "Timeout");
            if let Some(id) = cx.ledger.hop(src, tag) {
                cx.ledger.drop_packet(id, DropReason::Timeout);
            }
        }
    }

    fn on_fragment(&mut self, bytes: &[u8], src: LinkAddr, cx: &mut Ctx) -> Result<(), SimError> {
        self.expire(cx);
        let frag = match Fragment::from_bytes(bytes) {
            Ok(f) => f,
            Err(e) => {
                cx.log(self.id, "reasm", format_args!("src={src} {e}"), "Malformed");
                return Ok(());
            }
        };
        let tag = frag.header.datagram_tag;
        let now = cx.engine.now();
        let before = self.buffer.slot(src, tag).map(|s| s.created);
        let outcome = match cx.params.mode {
            Mode::Vanilla => self.buffer.on_fragment(&frag, src, now, &OpenGate),
            Mode::Csm => self.buffer.on_fragment(&frag, src, now, &self.trust),
        };
        let detail = format_args!("src={src} tag={tag} offset={}", frag.header.byte_offset());
        match outcome {
            Admission::Accepted => {
                cx.log(self.id, "reasm", detail, "Accepted");
                if before.is_none() {
                    let deadline = self.buffer.slot(src, tag).expect("slot just created").deadline;
                    cx.engine
                        .schedule(deadline, self.id, EventKind::TimerExpiry(Timer::ReassemblyDeadline))?;
                }
            }
            Admission::Completed(payload) => {
                cx.log(self.id, "reasm", detail, "Completed");
                if let Some(created) = before {
                    cx.stats.max_slot_hold = cx.stats.max_slot_hold.max(now.since(created));
                }
                self.on_datagram(payload, cx)?;
            }
            Admission::Rejected(reason) => {
                cx.log(self.id, "reasm", detail, reason);
                if let Some(id) = cx.ledger.hop(src, tag) {
                    cx.ledger.drop_packet(id, reason.into());
                }
            }
        }
        Ok(())
    }

    fn on_datagram(&mut self, payload: Vec<u8>, cx: &mut Ctx) -> Result<(), SimError> {
        let id = cx.ledger.is_legit(&payload);
        if let Some(id) = id {
            cx.ledger.completed(self.id, id);
        }
        if self.role == Role::Root {
            let label = id.map_or("foreign".to_string(), |i| i.to_string());
            cx.log(self.id, "deliver", format_args!("packet={label}"), "ok");
            if let Some(id) = id {
                cx.ledger.deliver(id, &payload, cx.engine.now());
            }
            return Ok(());
        }
        match self.rpl.next_hop_up() {
            Ok(parent) => {
                let tag = self.take_tag();
                cx.log(self.id, "forward", format_args!("to={} tag={tag}", parent.link), "ok");
                self.send_datagram(&payload, tag, self.identity.link, parent.link, id, cx)
            }
            Err(_) => {
                cx.log(self.id, "forward", format_args!("len={}", payload.len()), "NoRoute");
                if let Some(id) = id {
                    cx.ledger.drop_packet(id, DropReason::NoRoute);
                }
                Ok(())
            }
        }
    }

    fn take_tag(&mut self) -> u16 {
        let t = self.next_tag;
        self.next_tag = self.next_tag.wrapping_add(1);
        t
    }

    /// Fragments (if needed) and transmits a datagram, fragments spaced by `frag_spacing`.
    fn send_datagram(
        &mut self,
        payload: &[u8],
        tag: u16,
        src: LinkAddr,
        dst: LinkAddr,
        id: Option<PacketId>,
        cx: &mut Ctx,
    ) -> Result<(), SimError> {
        let now = cx.engine.now();
        if let Some(id) = id {
            cx.ledger.bind_hop(src, tag, id);
        }
        let frames = match fragment_packet(payload, tag, cx.params.max_frag_payload) {
            Ok(Fragmentation::Unfragmented) => {
                let mut b = Vec::with_capacity(payload.len() + 1);
                b.push(IPV6_DISPATCH);
                b.extend_from_slice(payload);
                vec![FrameBody::Datagram(b)]
            }
            Ok(Fragmentation::Fragments(frags)) => frags
                .iter()
                .map(|f| FrameBody::Fragment(f.to_bytes().expect("fragmenter output encodes")))
                .collect(),
            Err(e) => {
                cx.log(self.id, "tx", format_args!("tag={tag} {e}"), "Malformed");
                if let Some(id) = id {
                    cx.ledger.drop_packet(id, DropReason::Malformed);
                }
                return Ok(());
            }
        };
        for (i, body) in frames.into_iter().enumerate() {
            let at = now + cx.params.frag_spacing.times(i as u64);
            cx.engine.transmit(
                self.id,
                Frame {
                    src,
                    dst: Destination::Unicast(dst),
                    body,
                },
                at,
            )?;
        }
        Ok(())
    }

    fn on_app_send(&mut self, seq: u32, cx: &mut Ctx) -> Result<(), SimError> {
        let id = PacketId { origin: self.id, seq };
        let now = cx.engine.now();
        let payload = build_payload(id, cx.params.data_size);
        cx.ledger
            .register(id, now, now >= cx.params.measure_from, payload.clone());
        match self.rpl.next_hop_up() {
            Ok(parent) => {
                let tag = self.take_tag();
                cx.log(self.id, "app_send", format_args!("packet={id} to={} tag={tag}", parent.link), "ok");
                self.send_datagram(&payload, tag, self.identity.link, parent.link, Some(id), cx)
            }
            Err(_) => {
                cx.log(self.id, "app_send", format_args!("packet={id}"), "NoRoute");
                cx.ledger.drop_packet(id, DropReason::NoRoute);
                Ok(())
            }
        }
    }

    fn on_attack(&mut self, action: AttackAction, cx: &mut Ctx) -> Result<(), SimError> {
        let Some(target) = cx.params.attack_target else {
            return Ok(());
        };
        let src = cx.params.spoof_as.unwrap_or(self.identity.link);
        let fake = build_payload(PacketId { origin: self.id, seq: u32::MAX }, cx.params.data_size);
        match action {
            AttackAction::Packet { tag } => {
                cx.log(self.id, "attack", format_args!("packet tag={tag} src={src} dst={target}"), "sent");
                self.send_datagram(&fake, tag, src, target, None, cx)
            }
            AttackAction::Fragment { tag, index } => {
                let Ok(Fragmentation::Fragments(frags)) = fragment_packet(&fake, tag, cx.params.max_frag_payload)
                else {
                    return Ok(());
                };
                let Some(f) = frags.get(index as usize) else {
                    return Ok(());
                };
                cx.log(self.id, "attack", format_args!("fragment={index} tag={tag} src={src} dst={target}"), "sent");
                let frame = Frame {
                    src,
                    dst: Destination::Unicast(target),
                    body: FrameBody::Fragment(f.to_bytes().expect("fragmenter output encodes")),
                };
                let now = cx.engine.now();
                cx.engine.transmit(self.id, frame, now)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundMetrics {
    /// Legitimate packets sent at or after the attack start.
    pub sends: u32,
    pub delivered: u32,
    pub drops: BTreeMap<DropReason, u32>,
    pub pdr: f64,
    /// Sender radio energy over the round per delivered packet (mJ); infinite when none arrived.
    pub energy_per_delivered: f64,
    pub sender_energy_mj: f64,
    pub corrupted: u32,
    pub occupancy_violations: u64,
    pub max_slot_hold_s: f64,
    pub offered_bytes: u64,
    pub events: u64,
}

pub struct RoundOutput {
    pub metrics: RoundMetrics,
    pub trace: Trace,
    pub stats: WorldStats,
    pub ledger: PacketLedger,
    pub nodes: Vec<Node>,
}

pub struct World {
    engine: Engine,
    nodes: Vec<Node>,
    ledger: PacketLedger,
    stats: WorldStats,
    params: Params,
    sender: NodeId,
}

impl World {
    /// Builds the network for one round. `cfg` must already be validated.
    pub fn build(cfg: &ScenarioConfig, seed: u64, trace: bool) -> Result<World, SimError> {
        let topo_cfg = &cfg.topology;
        let link_of = |i: usize| LinkAddr(i as u16 + 1);
        let mut topology = Topology::new(
            topo_cfg
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeSpec {
                    label: n.name.clone(),
                    link_addr: link_of(i),
                })
                .collect(),
        );
        let idx = |name: &str| NodeId(topo_cfg.index_of(name).expect("validated topology") as u16);
        for l in &topo_cfg.links {
            topology.connect(
                idx(&l.a),
                idx(&l.b),
                Link {
                    latency: SimDuration::from_secs_f64(l.latency.unwrap_or(topo_cfg.latency)),
                    loss_probability: l.loss.unwrap_or(topo_cfg.loss),
                },
            );
        }
        for s in &topo_cfg.sniffers {
            topology.add_sniffer(idx(&s.node), idx(&s.link[0]), idx(&s.link[1]));
        }

        let mut engine = Engine::new(topology, cfg.energy, rng_stream(seed, STREAM_LOSS), trace);
        let mut key_rng = rng_stream(seed, STREAM_KEYS);
        let network_key = SharedKey::random(&mut key_rng);
        let rogue_key = SharedKey::random(&mut key_rng);
        let timeout = SimDuration::from_secs_f64(cfg.reassembly_timeout);
        let root_idx = topo_cfg.root().expect("validated topology");
        let dodag_id = link_of(root_idx).link_local();

        let nodes: Vec<Node> = topo_cfg
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let identity = NodeIdentity::from_link(link_of(i));
                let rpl = match n.role {
                    Role::Root => RankState::root(cfg.mode, dodag_id),
                    _ => RankState::node(cfg.mode),
                };
                let key = match (n.role, cfg.attack.knowledge) {
                    (Role::Adversary, Knowledge::External | Knowledge::SpoofLinkAddr) => rogue_key,
                    _ => network_key,
                };
                let mut rng = rng_stream(seed, STREAM_NODE_BASE + i as u64);
                let next_tag = rng.random();
                Node {
                    id: NodeId(i as u16),
                    identity,
                    role: n.role,
                    rpl,
                    buffer: AssemblyBuffer::new(cfg.buffer_capacity, timeout),
                    trust: TrustStore::new(cfg.trust),
                    csm: (cfg.mode == Mode::Csm).then(|| CsmEndpoint::new(key, identity.ipv6)),
                    rng,
                    next_tag,
                }
            })
            .collect();

        let until = SimTime::from_secs_f64(cfg.duration);
        let dio_period = SimDuration::from_secs_f64(cfg.dio_period);
        let mut phase_rng = rng_stream(seed, STREAM_DIO_PHASE);
        for n in &nodes {
            let offset = if n.role == Role::Root {
                0.0
            } else {
                phase_rng.random_range(0.0..cfg.dio_period)
            };
            engine.schedule(SimTime::from_secs_f64(offset), n.id, EventKind::TimerExpiry(Timer::Dio))?;
        }

        let sender = NodeId(topo_cfg.sender().expect("validated topology") as u16);
        let schedule = cfg.victim_schedule();
        let mut app_rng = rng_stream(seed, STREAM_APP);
        for (seq, &t) in schedule.iter().enumerate() {
            let j = if cfg.attack.jitter > 0.0 {
                app_rng.random_range(-cfg.attack.jitter..=cfg.attack.jitter)
            } else {
                0.0
            };
            engine.schedule(
                SimTime::from_secs_f64((t + j).max(0.0)),
                sender,
                EventKind::AppSend { seq: seq as u32 },
            )?;
        }

        let adversary = topo_cfg.adversary().map(|i| NodeId(i as u16));
        let attack_target = topo_cfg.attack_target().map(link_of);
        if let (Some(adv), true) = (adversary, cfg.attack.kind != AttackKind::None) {
            let nominal: Vec<SimTime> = schedule.iter().map(|&t| SimTime::from_secs_f64(t)).collect();
            let frags = match fragment_packet(&vec![0; cfg.data_size], 0, cfg.max_frag_payload) {
                Ok(Fragmentation::Fragments(f)) => f.len() as u8,
                _ => 1,
            };
            let ctx = PlanContext {
                victim_schedule: &nominal,
                victim_period: SimDuration::from_secs_f64(cfg.send_period),
                reassembly_timeout: timeout,
                fragments_per_datagram: frags,
                until,
            };
            for a in plan_attack(&cfg.attack, &ctx, &mut rng_stream(seed, STREAM_ATTACK)) {
                engine.schedule(a.at, adv, EventKind::AttackAction(a.action))?;
            }
        }

        Ok(World {
            engine,
            nodes,
            ledger: PacketLedger::default(),
            stats: WorldStats::default(),
            params: Params {
                mode: cfg.mode,
                until,
                dio_period,
                frag_spacing: SimDuration::from_secs_f64(cfg.frag_spacing),
                max_frag_payload: cfg.max_frag_payload,
                data_size: cfg.data_size,
                measure_from: SimTime::from_secs_f64(cfg.attack.start),
                attack_target,
                spoof_as: (cfg.attack.knowledge == Knowledge::SpoofLinkAddr).then(|| link_of(sender.0 as usize)),
            },
            sender,
        })
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn ledger(&self) -> &PacketLedger {
        &self.ledger
    }

    pub fn stats(&self) -> &WorldStats {
        &self.stats
    }

    /// Runs one event; returns false once nothing is due before the end of the round.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(event) = self.engine.next_event(self.params.until) else {
            return Ok(false);
        };
        let node = &mut self.nodes[event.target.0 as usize];
        let mut cx = Ctx {
            engine: &mut self.engine,
            ledger: &mut self.ledger,
            stats: &mut self.stats,
            params: &self.params,
        };
        match event.kind {
            EventKind::FrameDelivery { frame, sniffed, .. } => node.on_frame(frame, sniffed, &mut cx)?,
            EventKind::TimerExpiry(Timer::Dio) => node.on_dio_timer(&mut cx)?,
            EventKind::TimerExpiry(Timer::ReassemblyDeadline) => node.expire(&mut cx),
            EventKind::AppSend { seq } => node.on_app_send(seq, &mut cx)?,
            EventKind::AttackAction(a) => node.on_attack(a, &mut cx)?,
        }
        if self.nodes.iter().any(|n| n.buffer.occupancy() > n.buffer.capacity()) {
            self.stats.occupancy_violations += 1;
        }
        Ok(true)
    }

    pub fn run(mut self) -> Result<RoundOutput, SimError> {
        while self.step()? {}
        Ok(self.finish())
    }

    fn finish(mut self) -> RoundOutput {
        let ids: Vec<PacketId> = self
            .ledger
            .packets()
            .filter(|r| r.fate == Fate::Pending)
            .map(|r| r.id)
            .collect();
        for id in ids {
            self.ledger.drop_packet(id, DropReason::Lost);
        }
        let mut drops: BTreeMap<DropReason, u32> = DropReason::ALL.iter().map(|&r| (r, 0)).collect();
        let (mut sends, mut delivered, mut delivered_all) = (0u32, 0u32, 0usize);
        for r in self.ledger.packets() {
            if matches!(r.fate, Fate::Delivered { .. }) {
                delivered_all += 1;
            }
            if !r.measured {
                continue;
            }
            sends += 1;
            match r.fate {
                Fate::Delivered { .. } => delivered += 1,
                Fate::Dropped(reason) => *drops.entry(reason).or_default() += 1,
                Fate::Pending => unreachable!("pending packets were resolved above"),
            }
        }
        let sender_energy_mj = self.engine.energy().energy_mj(self.sender);
        let metrics = RoundMetrics {
            sends,
            delivered,
            drops,
            pdr: if sends == 0 { 0.0 } else { delivered as f64 / sends as f64 },
            energy_per_delivered: energy_per_delivered(sender_energy_mj, delivered_all),
            sender_energy_mj,
            corrupted: self.ledger.corrupted(),
            occupancy_violations: self.stats.occupancy_violations,
            max_slot_hold_s: self.stats.max_slot_hold.as_secs_f64(),
            offered_bytes: self.engine.offered_bytes(),
            events: self.engine.events_processed(),
        };
        RoundOutput {
            metrics,
            trace: self.engine.into_trace(),
            stats: self.stats,
            ledger: self.ledger,
            nodes: self.nodes,
        }
    }
}

/// Builds and runs one round.
pub fn run_round(cfg: &ScenarioConfig, seed: u64, trace: bool) -> Result<RoundOutput, SimError> {
    World::build(cfg, seed, trace)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_header_round_trips() {
        let id = PacketId {
            origin: NodeId(2),
            seq: 17,
        };
        let p = build_payload(id, 512);
        assert_eq!(p.len(), 512);
        assert_eq!(parse_packet_id(&p), Some(id));
        assert_eq!(parse_packet_id(&p[..6]), None);
    }

    #[test]
    fn baseline_delivers_everything() {
        for mode in [Mode::Vanilla, Mode::Csm] {
            let cfg = ScenarioConfig {
                mode,
                ..Default::default()
            };
            let out = run_round(&cfg, 7, false).unwrap();
            assert_eq!(out.metrics.sends, 19, "{mode}");
            assert_eq!(out.metrics.delivered, 19, "{mode}");
            assert_eq!(out.metrics.corrupted, 0);
        }
    }
}
