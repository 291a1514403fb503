use csm6lo_core::trust::{TrustConfig, TrustStore};
use csm6lo_core::{LinkAddr, NodeIdentity};

/// Plain-integer model of the update rule and both gates.
#[derive(Clone, Copy)]
struct Reference {
    value: Option<i32>,
    bound: bool,
}

impl Reference {
    fn step(&mut self, success: bool) {
        self.value = Some(match (self.value, success) {
            (None, true) => 100,
            (None, false) => 0,
            (Some(v), true) => (v + 10).min(100),
            (Some(v), false) => (v - 10).max(0),
        });
        self.bound |= success;
    }

    fn control_ok(&self) -> bool {
        self.value.is_some_and(|v| v >= 50)
    }

    fn fragment_ok(&self) -> bool {
        self.bound && self.value.is_some_and(|v| v >= 60)
    }
}

const LEN: usize = 12;

#[test]
fn matches_reference_on_every_short_history() {
    let peer = NodeIdentity::from_link(LinkAddr(7));
    let initials = std::iter::once(None).chain((0..=100u8).map(Some));
    let mut checked = 0u64;
    for init in initials {
        // every sequence of length <= LEN is a prefix of one of these
        for mask in 0u32..(1 << LEN) {
            let mut store = TrustStore::new(TrustConfig::default());
            let mut model = Reference {
                value: init.map(i32::from),
                bound: false,
            };
            if let Some(v) = init {
                store.set(peer, v);
            }
            assert_eq!(store.fragment_gate(peer.link), model.fragment_ok());
            for i in 0..LEN {
                let success = mask >> i & 1 == 1;
                let before = store.trust_of(&peer.ipv6);
                let t = store.on_decode_result(peer, success);
                model.step(success);
                assert_eq!(t.old, before);
                assert_eq!(Some(i32::from(t.new)), model.value, "init {init:?} mask {mask:b} step {i}");
                assert_eq!(store.control_gate(&peer.ipv6), model.control_ok());
                assert_eq!(store.fragment_gate(peer.link), model.fragment_ok());
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 102 * 4096 * LEN as u64);
}

fn trusted_then_failing(failures: usize) -> (TrustStore, NodeIdentity) {
    let peer = NodeIdentity::from_link(LinkAddr(3));
    let mut store = TrustStore::new(TrustConfig::default());
    store.on_decode_result(peer, true);
    for _ in 0..failures {
        store.on_decode_result(peer, false);
    }
    (store, peer)
}

#[test]
fn fragment_gate_closes_on_fifth_failure() {
    let (s, p) = trusted_then_failing(4);
    assert_eq!(s.trust_of(&p.ipv6), Some(60));
    assert!(s.fragment_gate(p.link));
    let (s, p) = trusted_then_failing(5);
    assert_eq!(s.trust_of(&p.ipv6), Some(50));
    assert!(!s.fragment_gate(p.link));
}

#[test]
fn control_gate_closes_on_sixth_failure() {
    let (s, p) = trusted_then_failing(5);
    assert!(s.control_gate(&p.ipv6));
    let (s, p) = trusted_then_failing(6);
    assert_eq!(s.trust_of(&p.ipv6), Some(40));
    assert!(!s.control_gate(&p.ipv6));
}

#[test]
fn unknown_link_is_rejected() {
    let s = TrustStore::new(TrustConfig::default());
    assert!(!s.fragment_gate(LinkAddr(9)));
}

#[test]
fn binding_is_first_come() {
    let real = NodeIdentity::from_link(LinkAddr(2));
    let mut s = TrustStore::new(TrustConfig::default());
    s.on_decode_result(real, true);
    // a second link claiming the same IPv6 address does not get bound
    let claim = NodeIdentity {
        ipv6: real.ipv6,
        link: LinkAddr(9),
    };
    s.on_decode_result(claim, true);
    assert_eq!(s.resolve(LinkAddr(2)), Some(real.ipv6));
    assert_eq!(s.resolve(LinkAddr(9)), None);
    assert!(!s.fragment_gate(LinkAddr(9)));
}

#[test]
fn invalid_configs() {
    let bad = TrustConfig {
        trust_val_min: 60,
        trust_val_max: 40,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    let bad = TrustConfig {
        frag_threshold: 101,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}
