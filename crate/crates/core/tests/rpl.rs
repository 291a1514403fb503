use csm6lo_core::rpl::{DioMessage, RankState, ROOT_RANK};
use csm6lo_core::{LinkAddr, Mode, NodeIdentity};
use proptest::prelude::*;
use std::collections::VecDeque;

fn id(i: usize) -> NodeIdentity {
    NodeIdentity::from_link(LinkAddr(i as u16 + 1))
}

/// Hop distance from node 0 by breadth-first search.
fn hops(n: usize, adj: &[Vec<usize>]) -> Vec<Option<u16>> {
    let mut d = vec![None; n];
    d[0] = Some(0);
    let mut q = VecDeque::from([0]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if d[v].is_none() {
                d[v] = Some(d[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Synchronous DIO rounds converge to BFS depth, with the parent being
    /// the lowest-addressed neighbor one hop closer to the root.
    #[test]
    fn ranks_converge_to_hop_count(n in 2usize..12, edges in proptest::collection::vec((0usize..12, 0usize..12), 0..40)) {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            let (a, b) = (a % n, b % n);
            if a != b && !adj[a].contains(&b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let root = id(0);
        let mut states: Vec<RankState> = (0..n)
            .map(|i| if i == 0 { RankState::root(Mode::Csm, root.ipv6) } else { RankState::node(Mode::Csm) })
            .collect();
        for _ in 0..n {
            let dios: Vec<Option<DioMessage>> = (0..n).map(|i| states[i].dio(id(i))).collect();
            for (i, dio) in dios.iter().enumerate() {
                if let Some(d) = dio {
                    for &j in &adj[i] {
                        states[j].on_dio(d);
                    }
                }
            }
        }
        let want = hops(n, &adj);
        for i in 0..n {
            prop_assert_eq!(states[i].rank(), want[i]);
            if i == 0 {
                prop_assert_eq!(states[i].rank(), Some(ROOT_RANK));
                continue;
            }
            let expected_parent = want[i].and_then(|r| {
                adj[i].iter().copied().filter(|&j| want[j] == Some(r - 1)).min()
            });
            prop_assert_eq!(states[i].parent(), expected_parent.map(id));
            prop_assert_eq!(states[i].next_hop_up().is_ok(), want[i].is_some());
        }
    }
}
