//! Loads the bundled 37-node feeder and prints its tree structure.
//!
//! Run with `cargo run --example feeder_topology`.

use dlmp_market::network::{build_topology, ieee37_modified};

fn main() {
    let net = ieee37_modified();
    let topo = build_topology(&net);
    println!(
        "{} nodes below the substation, {} aggregators",
        net.node_count(),
        net.aggregator_count()
    );

    for site in net.aggregators() {
        let k = site.node;
        let mut path = vec![net.node_id(0)];
        path.extend(topo.upstream(k).iter().map(|&u| net.node_id(u)));
        path.push(net.node_id(k));
        println!(
            "{:>4} at node {:>2}: {:>2} nodes downstream, path {}",
            site.label,
            net.node_id(k),
            topo.downstream(k).len(),
            path.join(" > ")
        );
    }

    // Row sums of I + T count each node's subtree.
    let subtree = topo.subtree();
    let biggest = (1..=net.node_count())
        .max_by_key(|&k| subtree.row(k - 1).sum() as usize)
        .unwrap();
    println!("largest subtree hangs below node {}", net.node_id(biggest));
}
