use std::collections::{BTreeSet, HashMap, VecDeque};

use dlmp_market::network::{build_topology, ieee37_modified, parse_feeder, RadialNetwork};
use dlmp_market::Error;
use proptest::prelude::*;

/// A random tree on `n + 1` nodes given as `(parent, child)` pairs over
/// external ids, with shuffled ids and line order.
fn random_tree() -> impl Strategy<Value = (Vec<(String, String)>, Vec<String>)> {
    (1usize..=50)
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..=n).map(|i| 0..i).collect();
            (
                parents,
                Just((0..=n).collect::<Vec<usize>>()).prop_shuffle(),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            )
        })
        .prop_map(|(parents, labels, order)| {
            // Label 0 stays the substation so the file can name it.
            let id = |v: usize| {
                if v == 0 {
                    "sub".to_string()
                } else {
                    format!("n{}", labels[v])
                }
            };
            let lines = order.iter().map(|&i| (id(parents[i]), id(i + 1))).collect();
            let nodes = (0..=parents.len()).map(id).collect();
            (lines, nodes)
        })
}

fn feeder_text(lines: &[(String, String)], nodes: &[String]) -> String {
    let mut s = String::from("[base]\nmva = 1\nkv = 4.16\nsubstation = sub\n[nodes]\n");
    for n in nodes {
        s += &format!("{n}\n");
    }
    s += "[lines]\n";
    for (i, (a, b)) in lines.iter().enumerate() {
        s += &format!(
            "{a} {b} {} {} 10 10\n",
            0.001 * (1 + i % 7) as f64,
            0.0007 * (1 + i % 5) as f64
        );
    }
    s += "[aggregators]\n[limits]\nepsilon_pu = 0.05\n";
    s
}

/// Descendants of every external id by breadth-first search over the raw
/// line list.
fn traversal_oracle(lines: &[(String, String)]) -> HashMap<String, BTreeSet<String>> {
    let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
    for (a, b) in lines {
        children.entry(a).or_default().push(b);
    }
    let mut out = HashMap::new();
    let all: BTreeSet<&str> = lines
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    for &start in &all {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = children.get(start).cloned().unwrap_or_default().into();
        while let Some(v) = queue.pop_front() {
            seen.insert(v.to_string());
            queue.extend(children.get(v).cloned().unwrap_or_default());
        }
        out.insert(start.to_string(), seen);
    }
    out
}

fn ids(net: &RadialNetwork, set: &[usize]) -> BTreeSet<String> {
    set.iter().map(|&k| net.node_id(k).to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn downstream_sets_match_traversal((lines, nodes) in random_tree()) {
        let net = parse_feeder(&feeder_text(&lines, &nodes)).unwrap();
        let topo = build_topology(&net);
        let oracle = traversal_oracle(&lines);
        let n = net.node_count();
        for k in 1..=n {
            prop_assert!(net.parent(k) < k);
            let below = ids(&net, topo.downstream(k));
            prop_assert_eq!(&below, &oracle[net.node_id(k)]);
            // l below k exactly when k above l.
            for l in 1..=n {
                prop_assert_eq!(topo.downstream(k).contains(&l), topo.upstream(l).contains(&k));
            }
        }
    }

    #[test]
    fn subtree_matrix_counts_subtrees((lines, nodes) in random_tree()) {
        let net = parse_feeder(&feeder_text(&lines, &nodes)).unwrap();
        let topo = build_topology(&net);
        let oracle = traversal_oracle(&lines);
        let s = topo.subtree();
        let n = net.node_count();
        for k in 1..=n {
            // Row k of I + T covers k and everything below it.
            let row: f64 = s.row(k - 1).sum();
            prop_assert_eq!(row, 1.0 + oracle[net.node_id(k)].len() as f64);
            // Column l of I + T covers l and its non-substation ancestors.
            let mut e = nalgebra::DVector::zeros(n);
            e[k - 1] = 1.0;
            let hit = &s * e;
            for l in 1..=n {
                let expect = l == k || topo.upstream(k).contains(&l);
                prop_assert_eq!(hit[l - 1], if expect { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn parent_difference_rows((lines, nodes) in random_tree()) {
        let net = parse_feeder(&feeder_text(&lines, &nodes)).unwrap();
        let topo = build_topology(&net);
        let d = topo.parent_difference();
        for k in 1..=net.node_count() {
            let sum: f64 = d.row(k - 1).sum();
            let expect = if net.parent(k) == 0 { -1.0 } else { 0.0 };
            prop_assert_eq!(sum, expect);
            prop_assert_eq!(topo.root_indicator()[k - 1], if net.parent(k) == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn serialization_round_trip((lines, nodes) in random_tree()) {
        let net = parse_feeder(&feeder_text(&lines, &nodes)).unwrap();
        let again = parse_feeder(&net.to_feeder_string()).unwrap();
        prop_assert_eq!(&again, &net);
    }
}

#[test]
fn bundled_feeder_shape() {
    let net = ieee37_modified();
    assert_eq!(net.node_count(), 36);
    assert_eq!(net.aggregator_count(), 17);
    let anchors = [
        ("A3", "12"),
        ("A8", "23"),
        ("A9", "25"),
        ("A10", "26"),
        ("A11", "27"),
        ("A14", "31"),
        ("A17", "36"),
    ];
    for (label, node) in anchors {
        let k = net.aggregator_index(label).unwrap();
        assert_eq!(net.node_id(net.aggregators()[k].node), node, "{label}");
    }
    assert_eq!(parse_feeder(&net.to_feeder_string()).unwrap(), net);
}

#[test]
fn bundled_feeder_deepest_root_path() {
    let net = ieee37_modified();
    let topo = build_topology(&net);
    let depth = |mut k: usize| {
        let mut d = 0;
        while k != 0 {
            k = net.parent(k);
            d += 1;
        }
        d
    };
    let deepest = (1..=net.node_count())
        .max_by_key(|&k| (depth(k), k))
        .unwrap();
    // Walk the line list from the substation to recover the path.
    let mut parent_of: HashMap<usize, usize> = HashMap::new();
    for l in net.lines() {
        parent_of.insert(l.to, l.from);
    }
    let mut path = BTreeSet::new();
    let mut v = parent_of[&deepest];
    while v != 0 {
        path.insert(v);
        v = parent_of[&v];
    }
    assert_eq!(
        topo.upstream(deepest)
            .iter()
            .copied()
            .collect::<BTreeSet<_>>(),
        path
    );
}

#[test]
fn two_node_feeder() {
    let net = parse_feeder(
        "[base]\nmva = 1\nkv = 1\nsubstation = 0\n[nodes]\n0\n1\n[lines]\n0 1 0.01 0.01 5 5\n\
         [aggregators]\nA1 1\n[limits]\nepsilon_pu = 0.05\n",
    )
    .unwrap();
    assert_eq!(net.node_count(), 1);
    assert_eq!(net.aggregator_count(), 1);
    assert_eq!(net.line(1).r, 0.01);
}

fn parse_lines(lines: &str, aggregators: &str) -> Result<RadialNetwork, Error> {
    parse_feeder(&format!(
        "[base]\nmva = 1\nkv = 1\nsubstation = 0\n[nodes]\n0\n1\n2\n3\n[lines]\n{lines}\
         [aggregators]\n{aggregators}[limits]\nepsilon_pu = 0.05\n"
    ))
}

#[test]
fn rejects_invalid_feeders() {
    assert!(matches!(
        parse_lines(
            "0 1 0.01 0.01 1 1\n1 2 0.01 0.01 1 1\n2 1 0.01 0.01 1 1\n2 3 0.01 0.01 1 1\n",
            ""
        ),
        Err(Error::Cycle(_))
    ));
    assert!(matches!(
        parse_lines("0 1 0.01 0.01 1 1\n1 2 0.01 0.01 1 1\n", ""),
        Err(Error::Disconnected(_))
    ));
    assert!(matches!(
        parse_lines(
            "0 1 0.01 0.01 1 1\n1 2 0.01 0.01 1 1\n1 2 0.01 0.01 1 1\n2 3 0.01 0.01 1 1\n",
            ""
        ),
        Err(Error::DuplicateLine(..))
    ));
    assert!(matches!(
        parse_lines("0 1 0 0 1 1\n1 2 0.01 0.01 1 1\n2 3 0.01 0.01 1 1\n", ""),
        Err(Error::BadImpedance(_))
    ));
    assert!(matches!(
        parse_lines(
            "0 1 0.01 0.01 1 1\n1 2 0.01 0.01 1 1\n2 3 0.01 0.01 1 1\n",
            "A1 9\n"
        ),
        Err(Error::UnknownAggregatorNode { .. })
    ));
}
