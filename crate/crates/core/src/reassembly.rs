//! Per-node assembly buffer.
//!
//! A slot is claimed by the FRAG1 of a datagram and held until every byte of
//! the datagram has arrived or the reassembly deadline passes. With the
//! default single slot this buffer is exactly the resource a
//! buffer-reservation attacker tries to monopolise, so admission can be
//! filtered through an [`AdmissionGate`] before any state is touched.

use crate::addr::LinkAddr;
use crate::frag::{FragKind, Fragment};
use crate::time::{SimDuration, SimTime};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_CAPACITY: usize = 1;
pub const DEFAULT_REASSEMBLY_TIMEOUT_S: f64 = 20.0;

/// Decides whether a fragment from an immediate sender may touch the buffer.
pub trait AdmissionGate {
    fn admit(&self, sender: LinkAddr) -> bool;
}

/// Admits everything; vanilla 6LoWPAN behaviour.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenGate;

impl AdmissionGate for OpenGate {
    fn admit(&self, _sender: LinkAddr) -> bool {
        true
    }
}

impl<F: Fn(LinkAddr) -> bool> AdmissionGate for F {
    fn admit(&self, sender: LinkAddr) -> bool {
        self(sender)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    /// The immediate sender failed the admission gate.
    Untrusted,
    /// A FRAG1 for a new datagram found no free slot.
    BufferBusy,
    /// A FRAGN arrived for a datagram with no slot.
    NoSlot,
    /// The fragment overlaps bytes already received.
    Duplicate,
    /// The fragment's datagram_size disagrees with its slot.
    SizeMismatch,
    /// Empty payload or bytes beyond datagram_size.
    Malformed,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::Untrusted,
        RejectReason::BufferBusy,
        RejectReason::NoSlot,
        RejectReason::Duplicate,
        RejectReason::SizeMismatch,
        RejectReason::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Untrusted => "Untrusted",
            RejectReason::BufferBusy => "BufferBusy",
            RejectReason::NoSlot => "NoSlot",
            RejectReason::Duplicate => "Duplicate",
            RejectReason::SizeMismatch => "SizeMismatch",
            RejectReason::Malformed => "Malformed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    Completed(Vec<u8>),
    Rejected(RejectReason),
}

#[derive(Debug, Clone)]
pub struct ReassemblySlot {
    pub sender_link_addr: LinkAddr,
    pub tag: u16,
    pub datagram_size: usize,
    /// Sorted, disjoint, non-adjacent half-open byte ranges.
    received: Vec<(usize, usize)>,
    data: Vec<u8>,
    pub created: SimTime,
    pub deadline: SimTime,
}

impl ReassemblySlot {
    pub fn received(&self) -> &[(usize, usize)] {
        &self.received
    }

    fn overlaps(&self, start: usize, end: usize) -> bool {
        self.received.iter().any(|&(s, e)| start < e && s < end)
    }

    fn insert(&mut self, start: usize, bytes: &[u8]) {
        let end = start + bytes.len();
        self.data[start..end].copy_from_slice(bytes);
        let at = self.received.partition_point(|&(s, _)| s < start);
        self.received.insert(at, (start, end));
        // coalesce touching neighbours
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(self.received.len());
        for &(s, e) in &self.received {
            match merged.last_mut() {
                Some(last) if last.1 == s => last.1 = e,
                _ => merged.push((s, e)),
            }
        }
        self.received = merged;
    }

    fn is_complete(&self) -> bool {
        self.received == [(0, self.datagram_size)]
    }
}

#[derive(Debug, Clone)]
pub struct AssemblyBuffer {
    capacity: usize,
    reassembly_timeout: SimDuration,
    slots: Vec<ReassemblySlot>,
}

impl Default for AssemblyBuffer {
    fn default() -> Self {
        AssemblyBuffer::new(
            DEFAULT_CAPACITY,
            SimDuration::from_secs_f64(DEFAULT_REASSEMBLY_TIMEOUT_S),
        )
    }
}

impl AssemblyBuffer {
    pub fn new(capacity: usize, reassembly_timeout: SimDuration) -> Self {
        AssemblyBuffer {
            capacity,
            reassembly_timeout,
            slots: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.slots.len()
    }

    pub fn reassembly_timeout(&self) -> SimDuration {
        self.reassembly_timeout
    }

    pub fn slots(&self) -> &[ReassemblySlot] {
        &self.slots
    }

    pub fn slot(&self, sender: LinkAddr, tag: u16) -> Option<&ReassemblySlot> {
        self.slots
            .iter()
            .find(|s| s.sender_link_addr == sender && s.tag == tag)
    }

    /// Offers one received fragment to the buffer.
    ///
    /// Callers are expected to run [`AssemblyBuffer::expire`] for `now` first
    /// so that stale slots do not block new datagrams.
    pub fn on_fragment(
        &mut self,
        frag: &Fragment,
        sender: LinkAddr,
        now: SimTime,
        gate: &impl AdmissionGate,
    ) -> Admission {
        if !gate.admit(sender) {
            return Admission::Rejected(RejectReason::Untrusted);
        }
        let h = &frag.header;
        let start = h.byte_offset();
        let end = frag.byte_end();
        let size = h.datagram_size as usize;
        if frag.payload.is_empty() || end > size {
            return Admission::Rejected(RejectReason::Malformed);
        }

        let idx = match self
            .slots
            .iter()
            .position(|s| s.sender_link_addr == sender && s.tag == h.datagram_tag)
        {
            Some(i) => {
                let slot = &self.slots[i];
                if slot.datagram_size != size {
                    return Admission::Rejected(RejectReason::SizeMismatch);
                }
                if slot.overlaps(start, end) {
                    return Admission::Rejected(RejectReason::Duplicate);
                }
                i
            }
            None if h.kind == FragKind::FragN => {
                return Admission::Rejected(RejectReason::NoSlot);
            }
            None => {
                if self.slots.len() >= self.capacity {
                    return Admission::Rejected(RejectReason::BufferBusy);
                }
                self.slots.push(ReassemblySlot {
                    sender_link_addr: sender,
                    tag: h.datagram_tag,
                    datagram_size: size,
                    received: Vec::new(),
                    data: vec![0; size],
                    created: now,
                    deadline: now + self.reassembly_timeout,
                });
                self.slots.len() - 1
            }
        };

        self.slots[idx].insert(start, &frag.payload);
        if self.slots[idx].is_complete() {
            let slot = self.slots.remove(idx);
            Admission::Completed(slot.data)
        } else {
            Admission::Accepted
        }
    }

    /// Frees every slot whose deadline is at or before `now`.
    pub fn expire(&mut self, now: SimTime) -> Vec<(LinkAddr, u16)> {
        let mut evicted = Vec::new();
        self.slots.retain(|s| {
            if s.deadline <= now {
                evicted.push((s.sender_link_addr, s.tag));
                false
            } else {
                true
            }
        });
        evicted
    }

    pub fn next_deadline(&self) -> Option<SimTime> {
        self.slots.iter().map(|s| s.deadline).min()
    }
}
