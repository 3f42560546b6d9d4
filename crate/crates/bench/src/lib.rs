//! Instance generators shared by the benchmarks.

use poalab::{CostSpec, Instance, Network, OdPair};

/// `n x n` grid with BPR arcs in both directions and two corner-to-corner
/// OD pairs of equal demand. Free-flow times and capacities vary with the
/// position so shortest paths are unique.
pub fn grid(n: usize, demand: f64) -> Instance {
    assert!(n >= 2);
    let id = |i: usize, j: usize| i * n + j;
    let mut arcs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let t0 = 1.0 + ((i * 7 + j * 3) % 5) as f64 * 0.25;
            let cap = 5.0 + ((i + 2 * j) % 4) as f64;
            if i + 1 < n {
                arcs.push((id(i, j), id(i + 1, j), CostSpec::bpr(t0, cap, 0.15, 4.0)));
                arcs.push((id(i + 1, j), id(i, j), CostSpec::bpr(t0 + 0.1, cap, 0.15, 4.0)));
            }
            if j + 1 < n {
                arcs.push((id(i, j), id(i, j + 1), CostSpec::bpr(t0 + 0.05, cap, 0.15, 4.0)));
                arcs.push((id(i, j + 1), id(i, j), CostSpec::bpr(t0 + 0.15, cap, 0.15, 4.0)));
            }
        }
    }
    let net = Network::with_node_count(n * n, arcs);
    let ods = vec![
        OdPair::new(id(0, 0), id(n - 1, n - 1), demand / 2.0),
        OdPair::new(id(n - 1, 0), id(0, n - 1), demand / 2.0),
    ];
    Instance::new(net, ods)
}

/// `k` parallel links with costs `a_i x^beta + b_i`.
pub fn parallel_links(k: usize, beta: f64, demand: f64) -> Instance {
    let arcs = (0..k).map(|i| {
        let a = 1.0 + i as f64 * 0.5;
        let b = i as f64;
        (0, 1, CostSpec::polynomial([(a, beta), (b, 0.0)]))
    });
    Instance::new(Network::with_node_count(2, arcs), vec![OdPair::new(0, 1, demand)])
}
