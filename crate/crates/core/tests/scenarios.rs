use csm6lo_core::experiments::{self, output, CheckReport, MatrixFilter};
use csm6lo_core::world::{run_round, DropReason};
use csm6lo_core::*;

fn attacked(mode: Mode, kind: AttackKind, timing: Timing) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        mode,
        ..Default::default()
    };
    cfg.attack.kind = kind;
    cfg.attack.timing = timing;
    cfg
}

fn rows<'a>(trace: &'a netsim::Trace, node: &str, kind: &str) -> Vec<&'a netsim::TraceRow> {
    trace
        .rows()
        .iter()
        .filter(|r| r.node == node && r.event_kind == kind)
        .collect()
}

#[test]
fn zero_jitter_reservation_blocks_every_packet() {
    let mut cfg = attacked(Mode::Vanilla, AttackKind::Frag1Only, Timing::Before);
    cfg.attack.jitter = 0.0;
    let out = run_round(&cfg, 1, true).unwrap();
    assert_eq!(out.metrics.sends, 19);
    assert_eq!(out.metrics.delivered, 0);
    assert_eq!(out.metrics.pdr, 0.0);
    assert_eq!(out.metrics.drops[&DropReason::BufferBusy], 19);

    // hand timeline: a FRAG1 every 20 s from 55 s, each held for exactly 20 s
    let attack_times: Vec<String> = rows(&out.trace, "A", "attack").iter().map(|r| r.time.to_string()).collect();
    let expected: Vec<String> = (0..)
        .map(|k| SimTime::from_secs_f64(55.0 + 20.0 * k as f64))
        .take_while(|t| t.as_secs_f64() <= 1200.0)
        .map(|t| t.to_string())
        .collect();
    assert_eq!(attack_times, expected);
    let evictions: Vec<String> = rows(&out.trace, "F", "evict").iter().map(|r| r.time.to_string()).collect();
    let expected: Vec<String> = (1..)
        .map(|k| SimTime::from_secs_f64(55.005 + 20.0 * k as f64))
        .take_while(|t| t.as_secs_f64() <= 1200.0)
        .map(|t| t.to_string())
        .collect();
    assert_eq!(evictions, expected);

    let first_victim = rows(&out.trace, "F", "reasm")
        .into_iter()
        .find(|r| r.detail.starts_with("src=0003"))
        .unwrap();
    assert_eq!(first_victim.time.to_string(), "60.005000");
    assert_eq!(first_victim.result, "BufferBusy");
}

#[test]
fn external_adversary_is_distrusted_before_it_matters() {
    let cfg = attacked(Mode::Csm, AttackKind::Frag1Only, Timing::Before);
    let out = run_round(&cfg, 3, false).unwrap();
    assert_eq!(out.metrics.pdr, 1.0);
    let f = NodeId(1);
    let a_ip = LinkAddr(4).link_local();
    let events: Vec<_> = out
        .stats
        .trust_log
        .iter()
        .filter(|e| e.node == f && e.neighbor == a_ip)
        .collect();
    assert!(!events.is_empty());
    assert!(events[0].time.as_secs_f64() <= cfg.attack.start + cfg.dio_period);
    assert!(events.iter().all(|e| e.new == 0));
    assert_eq!(out.metrics.drops[&DropReason::Untrusted], 0);
}

#[test]
fn insider_and_spoofer_get_through() {
    for knowledge in [Knowledge::Internal, Knowledge::SpoofLinkAddr] {
        let mut cfg = attacked(Mode::Csm, AttackKind::Frag1Only, Timing::Before);
        cfg.attack.knowledge = knowledge;
        let res = experiments::run_scenario(&cfg, false).unwrap();
        assert!(res.summaries[0].pdr.mean <= 0.60, "{knowledge}: {}", res.summaries[0].pdr.mean);
        assert!(res.violations.is_empty());
    }
}

#[test]
fn forwarder_reassembles_each_packet_once() {
    let out = run_round(&ScenarioConfig::default(), 5, false).unwrap();
    let c = out.ledger.completions();
    assert_eq!(c.len(), 2 * 19);
    assert!(c.values().all(|&n| n == 1));
    assert!(c.keys().any(|(n, _)| *n == NodeId(1)));
}

#[test]
fn sender_energy_matches_byte_count() {
    let cfg = ScenarioConfig {
        duration: 300.0,
        ..Default::default()
    };
    let out = run_round(&cfg, 11, true).unwrap();
    // 4 + 96, four times 5 + 96, then 5 + 32
    let data_bytes = 100 + 4 * 101 + 37;
    let dio_bytes = 1 + 16 + 18;
    let dio_tx = rows(&out.trace, "S", "dio_tx").len();
    let dio_rx = rows(&out.trace, "S", "dio_rx").len();
    let sends = out.metrics.sends as usize;
    let bytes = sends * data_bytes + (dio_tx + dio_rx) * dio_bytes;
    let expected = bytes as f64 * 0.001 / out.metrics.delivered as f64;
    assert_eq!(out.metrics.delivered as usize, sends);
    assert!((out.metrics.energy_per_delivered - expected).abs() < 1e-9);
}

#[test]
fn lossy_links_keep_accounting_intact() {
    let mut cfg = attacked(Mode::Csm, AttackKind::AllButLast, Timing::After);
    cfg.topology.loss = 0.1;
    cfg.rounds = 3;
    let res = experiments::run_scenario(&cfg, false).unwrap();
    assert!(res.violations.is_empty(), "{:?}", res.violations);
    for r in &res.rounds {
        let dropped: u32 = r.drops.values().sum();
        assert_eq!(r.delivered + dropped, r.sends);
    }
}

#[test]
fn invalid_topology_fails_before_simulating() {
    let mut cfg = ScenarioConfig::default();
    cfg.topology.links.clear();
    assert!(matches!(
        experiments::run_scenario(&cfg, false),
        Err(experiments::ExperimentError::Config(_))
    ));
}

#[test]
fn same_seed_same_bytes() {
    let mut cfg = attacked(Mode::Vanilla, AttackKind::AllButLast, Timing::Simultaneous);
    cfg.topology.loss = 0.05;
    let a = run_round(&cfg, 9, true).unwrap();
    let b = run_round(&cfg, 9, true).unwrap();
    assert_eq!(a.trace.digest(), b.trace.digest());
    let c = run_round(&cfg, 10, true).unwrap();
    assert_ne!(a.trace.digest(), c.trace.digest());
}

#[test]
fn report_regenerates_from_rounds() {
    let base = ScenarioConfig {
        rounds: 3,
        duration: 400.0,
        ..Default::default()
    };
    let res = experiments::run_matrix(
        &base,
        MatrixFilter {
            timing: Some(Timing::After),
            ..Default::default()
        },
        false,
    )
    .unwrap();
    assert_eq!(res.summaries.len(), 8);
    let dir = tempfile::tempdir().unwrap();
    output::write_results(dir.path(), &base, &res, &CheckReport::default()).unwrap();
    let summary = std::fs::read(dir.path().join(output::SUMMARY_FILE)).unwrap();
    let report = std::fs::read(dir.path().join(output::REPORT_FILE)).unwrap();
    let again = output::regenerate(dir.path()).unwrap();
    assert_eq!(again, res.summaries);
    assert_eq!(std::fs::read(dir.path().join(output::SUMMARY_FILE)).unwrap(), summary);
    assert_eq!(std::fs::read(dir.path().join(output::REPORT_FILE)).unwrap(), report);
}
