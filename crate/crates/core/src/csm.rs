//! Chained control-message encoding.
//!
//! Every control message sent over a directed link is coded under the
//! link's current Secret Chaining (SC) value and carries the next SC value
//! inside it. A receiver only decodes the message if it holds both the
//! preinstalled key and the SC value the sender used, which authenticates
//! the immediate sender and makes any replayed message stale.
//!
//! The coding step combines the plaintext with a coefficient stream drawn
//! from HMAC-SHA256 keyed by the preinstalled key and indexed by the SC
//! value. This is a stand-in for the real construction: only the
//! decode-succeeds/decode-fails behaviour matters to the rest of the stack.

use hmac::{Hmac, Mac};
use rand::Rng;
use sha2::Sha256;
use std::collections::BTreeMap;
use std::net::Ipv6Addr;
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

pub const AUTH_TAG_LEN: usize = 8;
const SC_LEN: usize = 4;
/// Dispatch octet plus the sender's IPv6 address in clear.
const HEADER_LEN: usize = 1 + 16;

/// Consecutive decode failures from one neighbor before the link is re-bootstrapped.
pub const RESYNC_AFTER_FAILURES: u8 = 3;

const FLAG_RESYNC: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SharedKey(pub [u8; 16]);

impl SharedKey {
    pub fn random(rng: &mut impl Rng) -> Self {
        SharedKey(rng.random())
    }
}

/// A 32-bit Secret Chaining value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScValue(pub u32);

impl ScValue {
    pub fn random(rng: &mut impl Rng) -> Self {
        ScValue(rng.random())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedControlMessage {
    pub sender: Ipv6Addr,
    pub receiver: Ipv6Addr,
    pub ciphertext: Vec<u8>,
    pub auth_tag: [u8; AUTH_TAG_LEN],
}

impl EncodedControlMessage {
    /// Octets on the air; the receiver is implied by the link destination.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.ciphertext.len() + AUTH_TAG_LEN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("control message failed to decode")]
pub struct DecodeFailure;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub plaintext: Vec<u8>,
    pub next_sc: ScValue,
}

fn prf(key: &SharedKey) -> HmacSha256 {
    <HmacSha256 as Mac>::new_from_slice(&key.0).expect("HMAC accepts any key length")
}

fn coefficients(key: &SharedKey, sc: ScValue, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut block: u32 = 0;
    while out.len() < len {
        let mut mac = prf(key);
        mac.update(b"csm-coeff");
        mac.update(&sc.0.to_be_bytes());
        mac.update(&block.to_be_bytes());
        out.extend_from_slice(&mac.finalize().into_bytes());
        block += 1;
    }
    out.truncate(len);
    out
}

fn tag_mac(
    key: &SharedKey,
    sc: ScValue,
    sender: &Ipv6Addr,
    receiver: &Ipv6Addr,
    ciphertext: &[u8],
) -> HmacSha256 {
    let mut mac = prf(key);
    mac.update(b"csm-tag");
    mac.update(&sc.0.to_be_bytes());
    mac.update(&sender.octets());
    mac.update(&receiver.octets());
    mac.update(ciphertext);
    mac
}

/// Codes `plaintext || next_sc` under `(key, sc)`.
pub fn encode_control(
    plaintext: &[u8],
    key: &SharedKey,
    sender: Ipv6Addr,
    receiver: Ipv6Addr,
    sc: ScValue,
    next_sc: ScValue,
) -> EncodedControlMessage {
    let mut body = Vec::with_capacity(plaintext.len() + SC_LEN);
    body.extend_from_slice(plaintext);
    body.extend_from_slice(&next_sc.0.to_be_bytes());
    let coeff = coefficients(key, sc, body.len());
    let ciphertext: Vec<u8> = body.iter().zip(&coeff).map(|(b, c)| b ^ c).collect();
    let full = tag_mac(key, sc, &sender, &receiver, &ciphertext)
        .finalize()
        .into_bytes();
    let mut auth_tag = [0u8; AUTH_TAG_LEN];
    auth_tag.copy_from_slice(&full[..AUTH_TAG_LEN]);
    EncodedControlMessage {
        sender,
        receiver,
        ciphertext,
        auth_tag,
    }
}

/// Decodes `msg` assuming the sender coded it under `expected_sc`.
///
/// A wrong key, a stale SC value and corruption all look the same.
pub fn decode_control(
    msg: &EncodedControlMessage,
    key: &SharedKey,
    expected_sc: ScValue,
) -> Result<Decoded, DecodeFailure> {
    if msg.ciphertext.len() < SC_LEN {
        return Err(DecodeFailure);
    }
    tag_mac(key, expected_sc, &msg.sender, &msg.receiver, &msg.ciphertext)
        .verify_truncated_left(&msg.auth_tag)
        .map_err(|_| DecodeFailure)?;
    let coeff = coefficients(key, expected_sc, msg.ciphertext.len());
    let mut body: Vec<u8> = msg
        .ciphertext
        .iter()
        .zip(&coeff)
        .map(|(b, c)| b ^ c)
        .collect();
    let sc_bytes = body.split_off(body.len() - SC_LEN);
    Ok(Decoded {
        plaintext: body,
        next_sc: ScValue(u32::from_be_bytes(sc_bytes.try_into().unwrap())),
    })
}

/// Bootstrap SC value for the directed link `sender -> receiver`.
pub fn initial_sc(key: &SharedKey, sender: Ipv6Addr, receiver: Ipv6Addr) -> ScValue {
    let mut mac = prf(key);
    mac.update(b"csm-init");
    mac.update(&sender.octets());
    mac.update(&receiver.octets());
    let out = mac.finalize().into_bytes();
    ScValue(u32::from_be_bytes([out[0], out[1], out[2], out[3]]))
}

/// SC state for one neighbor, both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkChain {
    /// SC value the next outbound message will be coded under.
    pub next_sc_out: ScValue,
    /// SC value the neighbor's next message must be coded under.
    pub expected_sc_in: ScValue,
    pub consecutive_failures: u8,
    /// Set after re-bootstrapping; tells the neighbor to restart its chain.
    pub resync_pending: bool,
}

/// One node's view of all its chained links.
///
/// Loss recovery: after [`RESYNC_AFTER_FAILURES`] consecutive failures from
/// a neighbor both directions of the link fall back to their bootstrap
/// values and outbound messages carry a resync flag. A neighbor that
/// decodes a flagged message restarts its own outbound chain.
#[derive(Debug, Clone)]
pub struct CsmEndpoint {
    key: SharedKey,
    me: Ipv6Addr,
    chains: BTreeMap<Ipv6Addr, LinkChain>,
}

impl CsmEndpoint {
    pub fn new(key: SharedKey, me: Ipv6Addr) -> Self {
        CsmEndpoint {
            key,
            me,
            chains: BTreeMap::new(),
        }
    }

    pub fn address(&self) -> Ipv6Addr {
        self.me
    }

    pub fn chain(&self, peer: &Ipv6Addr) -> Option<&LinkChain> {
        self.chains.get(peer)
    }

    fn chain_mut(&mut self, peer: Ipv6Addr) -> &mut LinkChain {
        let (key, me) = (self.key, self.me);
        self.chains.entry(peer).or_insert_with(|| LinkChain {
            next_sc_out: initial_sc(&key, me, peer),
            expected_sc_in: initial_sc(&key, peer, me),
            consecutive_failures: 0,
            resync_pending: false,
        })
    }

    /// Codes `body` for `peer` and advances the outbound chain.
    pub fn seal(&mut self, peer: Ipv6Addr, body: &[u8], rng: &mut impl Rng) -> EncodedControlMessage {
        let next = ScValue::random(rng);
        let (key, me) = (self.key, self.me);
        let chain = self.chain_mut(peer);
        let mut plaintext = Vec::with_capacity(body.len() + 1);
        plaintext.push(if chain.resync_pending { FLAG_RESYNC } else { 0 });
        plaintext.extend_from_slice(body);
        let msg = encode_control(&plaintext, &key, me, peer, chain.next_sc_out, next);
        chain.next_sc_out = next;
        msg
    }

    /// Decodes a message addressed to this endpoint and advances the inbound chain.
    pub fn open(&mut self, msg: &EncodedControlMessage) -> Result<Vec<u8>, DecodeFailure> {
        if msg.receiver != self.me {
            return Err(DecodeFailure);
        }
        let (key, me, peer) = (self.key, self.me, msg.sender);
        let chain = self.chain_mut(peer);
        match decode_control(msg, &key, chain.expected_sc_in) {
            Ok(Decoded { mut plaintext, next_sc }) if !plaintext.is_empty() => {
                chain.expected_sc_in = next_sc;
                chain.consecutive_failures = 0;
                chain.resync_pending = false;
                let flags = plaintext.remove(0);
                if flags & FLAG_RESYNC != 0 {
                    chain.next_sc_out = initial_sc(&key, me, peer);
                }
                Ok(plaintext)
            }
            _ => {
                chain.consecutive_failures += 1;
                if chain.consecutive_failures >= RESYNC_AFTER_FAILURES {
                    chain.expected_sc_in = initial_sc(&key, peer, me);
                    chain.next_sc_out = initial_sc(&key, me, peer);
                    chain.consecutive_failures = 0;
                    chain.resync_pending = true;
                }
                Err(DecodeFailure)
            }
        }
    }
}
