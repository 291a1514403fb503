use csm6lo_core::frag::{fragment_packet, Fragment, Fragmentation};
use csm6lo_core::reassembly::{Admission, AssemblyBuffer, OpenGate, RejectReason};
use csm6lo_core::{LinkAddr, SimDuration, SimTime};
use proptest::prelude::*;

fn frags(len: usize, tag: u16) -> Vec<Fragment> {
    let payload: Vec<u8> = (0..len).map(|i| (i * 7) as u8).collect();
    match fragment_packet(&payload, tag, 102).unwrap() {
        Fragmentation::Fragments(f) => f,
        Fragmentation::Unfragmented => panic!("too small"),
    }
}

fn t(s: f64) -> SimTime {
    SimTime::from_secs_f64(s)
}

#[test]
fn hand_trace_of_one_reservation() {
    // FRAG1 from the adversary at 55 s holds the slot until 75 s; the victim's
    // FRAG1 at 60 s is refused and its FRAGNs find no slot.
    let mut buf = AssemblyBuffer::default();
    let adv = LinkAddr(4);
    let victim = LinkAddr(3);
    let fake = frags(512, 900);
    assert_eq!(buf.on_fragment(&fake[0], adv, t(55.005), &OpenGate), Admission::Accepted);
    let real = frags(512, 1);
    assert_eq!(
        buf.on_fragment(&real[0], victim, t(60.005), &OpenGate),
        Admission::Rejected(RejectReason::BufferBusy)
    );
    for f in &real[1..] {
        assert_eq!(
            buf.on_fragment(f, victim, t(60.05), &OpenGate),
            Admission::Rejected(RejectReason::NoSlot)
        );
    }
    assert_eq!(buf.expire(t(75.004)), vec![]);
    assert_eq!(buf.expire(t(75.005)), vec![(adv, 900)]);
    assert_eq!(buf.occupancy(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn any_order_with_duplicates_completes_on_last_piece(
        len in 103usize..=2047,
        order in proptest::collection::vec(any::<prop::sample::Index>(), 1..40),
    ) {
        let f = frags(len, 5);
        let mut seq: Vec<usize> = order.iter().map(|i| i.index(f.len())).collect();
        seq.extend(0..f.len());
        // a FRAGN before any FRAG1 has nowhere to go, so lead with FRAG1
        seq.insert(0, 0);
        let mut buf = AssemblyBuffer::new(1, SimDuration::from_secs_f64(20.0));
        let mut seen = vec![false; f.len()];
        for &i in &seq {
            let fresh = !seen[i];
            seen[i] = true;
            let outcome = buf.on_fragment(&f[i], LinkAddr(1), t(1.0), &OpenGate);
            prop_assert!(buf.occupancy() <= 1);
            if seen.iter().all(|&s| s) {
                let want: Vec<u8> = (0..len).map(|k| (k * 7) as u8).collect();
                prop_assert_eq!(outcome, Admission::Completed(want));
                prop_assert_eq!(buf.occupancy(), 0);
                break;
            }
            let expected = if fresh { Admission::Accepted } else { Admission::Rejected(RejectReason::Duplicate) };
            prop_assert_eq!(outcome, expected);
        }
    }

    #[test]
    fn occupancy_and_hold_time_bounded(
        cap in 1usize..4,
        events in proptest::collection::vec((0u16..6, 0u16..4, 0usize..6, 0u64..5_000_000), 1..200),
    ) {
        let timeout = SimDuration::from_secs_f64(20.0);
        let mut buf = AssemblyBuffer::new(cap, timeout);
        let mut now = SimTime::ZERO;
        for (sender, tag, idx, dt) in events {
            now = now + SimDuration::from_micros(dt);
            buf.expire(now);
            let f = frags(512, tag);
            let _ = buf.on_fragment(&f[idx], LinkAddr(sender), now, &OpenGate);
            prop_assert!(buf.occupancy() <= cap);
            for s in buf.slots() {
                prop_assert!(now.since(s.created) < timeout);
                prop_assert_eq!(s.deadline, s.created + timeout);
            }
        }
    }

    #[test]
    fn duplicates_do_not_extend_deadline(dt in 0u64..19_000_000) {
        let mut buf = AssemblyBuffer::default();
        let f = frags(512, 3);
        buf.on_fragment(&f[0], LinkAddr(1), t(10.0), &OpenGate);
        let later = t(10.0) + SimDuration::from_micros(dt);
        prop_assert_eq!(
            buf.on_fragment(&f[0], LinkAddr(1), later, &OpenGate),
            Admission::Rejected(RejectReason::Duplicate)
        );
        prop_assert_eq!(buf.slot(LinkAddr(1), 3).unwrap().deadline, t(30.0));
    }
}

#[test]
fn gate_is_consulted_before_anything_else() {
    let mut buf = AssemblyBuffer::default();
    let f = frags(512, 1);
    let deny = |_: LinkAddr| false;
    assert_eq!(
        buf.on_fragment(&f[0], LinkAddr(1), t(1.0), &deny),
        Admission::Rejected(RejectReason::Untrusted)
    );
    assert_eq!(
        buf.on_fragment(&f[2], LinkAddr(1), t(1.0), &deny),
        Admission::Rejected(RejectReason::Untrusted)
    );
    assert_eq!(buf.occupancy(), 0);
}
