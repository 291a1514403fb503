//! RFC 4944 fragmentation headers and packet splitting.
//!
//! ```txt
//! FRAG1                                 FRAGN
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |1 1 0 0 0|    datagram_size    |         datagram_tag          |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |1 1 1 0 0|    datagram_size    |         datagram_tag          |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |datagram_offset|
//! +-+-+-+-+-+-+-+-+
//! ```
//!
//! Offsets are counted in 8-octet units, so every fragment except the last
//! carries a multiple of 8 payload octets.

use thiserror::Error;

pub const FRAG1_DISPATCH: u8 = 0b1100_0000;
pub const FRAGN_DISPATCH: u8 = 0b1110_0000;
const DISPATCH_MASK: u8 = 0b1111_1000;

/// Uncompressed IPv6 dispatch, used for datagrams that fit in one frame.
pub const IPV6_DISPATCH: u8 = 0x41;

pub const FRAG1_HEADER_LEN: usize = 4;
pub const FRAGN_HEADER_LEN: usize = 5;

/// Largest value representable in the 11-bit datagram_size field.
pub const MAX_DATAGRAM_SIZE: u16 = 0x07FF;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("field out of range: {0}")]
    Range(String),
    #[error("dispatch 0x{0:02x} is not a fragmentation header")]
    NotAFragment(u8),
    #[error("truncated header: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FragKind {
    Frag1,
    FragN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FragmentHeader {
    pub kind: FragKind,
    /// Total datagram size in octets (11 bits).
    pub datagram_size: u16,
    pub datagram_tag: u16,
    /// Offset in 8-octet units; always zero for `Frag1`.
    pub datagram_offset: u8,
}

impl FragmentHeader {
    pub fn first(datagram_size: u16, datagram_tag: u16) -> Self {
        FragmentHeader {
            kind: FragKind::Frag1,
            datagram_size,
            datagram_tag,
            datagram_offset: 0,
        }
    }

    pub fn subsequent(datagram_size: u16, datagram_tag: u16, datagram_offset: u8) -> Self {
        FragmentHeader {
            kind: FragKind::FragN,
            datagram_size,
            datagram_tag,
            datagram_offset,
        }
    }

    /// Byte offset of this fragment's payload within the datagram.
    pub fn byte_offset(&self) -> usize {
        self.datagram_offset as usize * 8
    }

    pub fn encoded_len(&self) -> usize {
        match self.kind {
            FragKind::Frag1 => FRAG1_HEADER_LEN,
            FragKind::FragN => FRAGN_HEADER_LEN,
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.datagram_size > MAX_DATAGRAM_SIZE {
            return Err(CodecError::Range(format!(
                "datagram_size {} exceeds {}",
                self.datagram_size, MAX_DATAGRAM_SIZE
            )));
        }
        match self.kind {
            FragKind::Frag1 if self.datagram_offset != 0 => Err(CodecError::Range(
                "FRAG1 carries no offset".to_string(),
            )),
            FragKind::FragN if self.byte_offset() >= self.datagram_size as usize => {
                Err(CodecError::Range(format!(
                    "offset {}x8 not below datagram_size {}",
                    self.datagram_offset, self.datagram_size
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Encodes `h` into its 4-byte (FRAG1) or 5-byte (FRAGN) wire form.
pub fn encode_header(h: &FragmentHeader) -> Result<Vec<u8>, CodecError> {
    h.validate()?;
    let dispatch = match h.kind {
        FragKind::Frag1 => FRAG1_DISPATCH,
        FragKind::FragN => FRAGN_DISPATCH,
    };
    let mut out = Vec::with_capacity(h.encoded_len());
    out.push(dispatch | (h.datagram_size >> 8) as u8);
    out.push(h.datagram_size as u8);
    out.extend_from_slice(&h.datagram_tag.to_be_bytes());
    if h.kind == FragKind::FragN {
        out.push(h.datagram_offset);
    }
    Ok(out)
}

/// Decodes a fragmentation header, returning it with the number of bytes consumed.
pub fn decode_header(bytes: &[u8]) -> Result<(FragmentHeader, usize), CodecError> {
    let first = *bytes.first().ok_or(CodecError::Truncated {
        needed: FRAG1_HEADER_LEN,
        available: 0,
    })?;
    let kind = match first & DISPATCH_MASK {
        FRAG1_DISPATCH => FragKind::Frag1,
        FRAGN_DISPATCH => FragKind::FragN,
        _ => return Err(CodecError::NotAFragment(first)),
    };
    let needed = match kind {
        FragKind::Frag1 => FRAG1_HEADER_LEN,
        FragKind::FragN => FRAGN_HEADER_LEN,
    };
    if bytes.len() < needed {
        return Err(CodecError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let datagram_size = u16::from_be_bytes([first & !DISPATCH_MASK, bytes[1]]);
    let datagram_tag = u16::from_be_bytes([bytes[2], bytes[3]]);
    let datagram_offset = if kind == FragKind::FragN { bytes[4] } else { 0 };
    Ok((
        FragmentHeader {
            kind,
            datagram_size,
            datagram_tag,
            datagram_offset,
        },
        needed,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub header: FragmentHeader,
    pub payload: Vec<u8>,
}

impl Fragment {
    /// Header followed by payload, as carried in a frame.
    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let mut out = encode_header(&self.header)?;
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Fragment, CodecError> {
        let (header, used) = decode_header(bytes)?;
        Ok(Fragment {
            header,
            payload: bytes[used..].to_vec(),
        })
    }

    /// End of this fragment's byte range within the datagram (exclusive).
    pub fn byte_end(&self) -> usize {
        self.header.byte_offset() + self.payload.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fragmentation {
    /// The payload fits in one frame; no fragmentation header is needed.
    Unfragmented,
    Fragments(Vec<Fragment>),
}

/// Payload octets carried by each non-final fragment for a given frame budget.
pub fn aligned_chunk(max_frag_payload: usize) -> usize {
    max_frag_payload / 8 * 8
}

/// Splits `payload` into fragments of at most `max_frag_payload` octets.
///
/// Non-final fragments carry `floor(max_frag_payload / 8) * 8` octets so that
/// every offset is representable in 8-octet units.
pub fn fragment_packet(
    payload: &[u8],
    tag: u16,
    max_frag_payload: usize,
) -> Result<Fragmentation, CodecError> {
    if payload.len() > MAX_DATAGRAM_SIZE as usize {
        return Err(CodecError::Range(format!(
            "payload of {} octets exceeds {}",
            payload.len(),
            MAX_DATAGRAM_SIZE
        )));
    }
    if max_frag_payload < 8 {
        return Err(CodecError::Range(format!(
            "max_frag_payload {max_frag_payload} is below 8"
        )));
    }
    if payload.len() <= max_frag_payload {
        return Ok(Fragmentation::Unfragmented);
    }
    let chunk = aligned_chunk(max_frag_payload);
    let size = payload.len() as u16;
    let fragments = payload
        .chunks(chunk)
        .enumerate()
        .map(|(i, part)| {
            let offset = i * chunk / 8;
            // 2047 / 8 < 256, so the offset always fits the 8-bit field.
            let header = if i == 0 {
                FragmentHeader::first(size, tag)
            } else {
                FragmentHeader::subsequent(size, tag, offset as u8)
            };
            Fragment {
                header,
                payload: part.to_vec(),
            }
        })
        .collect();
    Ok(Fragmentation::Fragments(fragments))
}
