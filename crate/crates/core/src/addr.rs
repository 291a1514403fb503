use serde::{Deserialize, Serialize};
use std::fmt;
use std::net::Ipv6Addr;

/// Index of a node in a simulated world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

/// IEEE 802.15.4 short link-layer address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkAddr(pub u16);

impl LinkAddr {
    /// Link-local IPv6 address derived from a 16-bit short address
    /// (`fe80::ff:fe00:XXXX`).
    pub fn link_local(self) -> Ipv6Addr {
        Ipv6Addr::new(0xfe80, 0, 0, 0, 0, 0x00ff, 0xfe00, self.0)
    }
}

impl fmt::Display for LinkAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04x}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A neighbor as seen by the routing layer: network address plus the
/// link-layer address it was bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIdentity {
    pub ipv6: Ipv6Addr,
    pub link: LinkAddr,
}

impl NodeIdentity {
    pub fn from_link(link: LinkAddr) -> Self {
        NodeIdentity {
            ipv6: link.link_local(),
            link,
        }
    }
}

impl fmt::Display for NodeIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ipv6)
    }
}
