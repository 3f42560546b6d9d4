use poalab::io::{read_sweep_csv, write_sweep_csv, InstanceDocument};
use poalab::metrics::{epsilon_of_profile, epsilon_under, l_upper_bound, price_of_anarchy};
use poalab::oracle::{brute_force, enumerate_paths, two_link_analytic};
use poalab::scaling::{build_limit_game, SweepRow};
use poalab::solver::{line_search, shortest_path};
use poalab::{
    solve, CostSpec, Distribution, Instance, Network, Objective, OdPair, SolveOptions,
};
use proptest::prelude::*;

fn bpr() -> impl Strategy<Value = CostSpec> {
    (0.1f64..10.0, 0.5f64..100.0, 0.0f64..2.0, prop::sample::select(vec![1.0, 2.0, 4.0, 5.5]))
        .prop_map(|(t0, u, a, b)| CostSpec::bpr(t0, u, a, b))
}

fn polynomial() -> impl Strategy<Value = CostSpec> {
    prop::collection::vec((0.0f64..5.0, prop::sample::select(vec![0.0, 1.0, 1.5, 2.0, 3.0, 4.0])), 1..4)
        .prop_map(CostSpec::polynomial)
}

fn convex_cost() -> impl Strategy<Value = CostSpec> {
    prop_oneof![
        bpr(),
        polynomial(),
        (0.0f64..5.0, 0.0f64..5.0).prop_map(|(a, b)| CostSpec::affine(a, b)),
        (0.0f64..5.0).prop_map(CostSpec::constant),
    ]
}

/// Parallel arcs between two nodes.
fn parallel(costs: Vec<CostSpec>, demand: f64) -> Instance {
    let net = Network::with_node_count(2, costs.into_iter().map(|c| (0, 1, c)));
    Instance::new(net, vec![OdPair::new(0, 1, demand)])
}

/// Random DAG on `n` nodes with arcs only from lower to higher ids, plus a
/// guaranteed chain so that every OD pair `(i, j)`, `i < j`, is connected.
fn dag() -> impl Strategy<Value = Instance> {
    (3usize..6)
        .prop_flat_map(|n| {
            let extra = prop::collection::vec((0..n, 0..n, convex_cost()), 0..5);
            let chain = prop::collection::vec(convex_cost(), n - 1);
            let ods = prop::collection::vec((0..n, 0..n, 0.1f64..5.0), 1..3);
            (Just(n), chain, extra, ods)
        })
        .prop_map(|(n, chain, extra, ods)| {
            let mut arcs: Vec<_> = chain.into_iter().enumerate().map(|(i, c)| (i, i + 1, c)).collect();
            for (a, b, c) in extra {
                if a < b {
                    arcs.push((a, b, c));
                }
            }
            let mut od_pairs: Vec<_> = ods
                .into_iter()
                .filter(|(a, b, _)| a < b)
                .map(|(a, b, d)| OdPair::new(a, b, d))
                .collect();
            if od_pairs.is_empty() {
                od_pairs.push(OdPair::new(0, n - 1, 1.0));
            }
            Instance::new(Network::with_node_count(n, arcs), od_pairs)
        })
}

fn tight(objective: Objective) -> SolveOptions {
    SolveOptions::new(objective).with_gap(1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn derivative_matches_central_difference(c in convex_cost(), e in -6.0f64..9.0) {
        let x = 10f64.powf(e);
        // keep x - h inside the domain and away from the curvature of x^1.5 at 0
        let h = (1e-5 * x.max(1.0)).min(1e-3 * x);
        let d = c.derivative(x).unwrap();
        let fd = (c.eval(x + h).unwrap() - c.eval(x - h).unwrap()) / (2.0 * h);
        // rounding in the difference scales with the cost level
        let noise = 1e-15 * c.eval(x + h).unwrap().abs() / h;
        prop_assert!((d - fd).abs() <= (1e-6f64).max(1e-6 * d.abs()) + 4.0 * noise, "{d} vs {fd}");
    }

    #[test]
    fn integral_differentiates_back(c in convex_cost(), e in -3.0f64..6.0) {
        let x = 10f64.powf(e);
        let h = 1e-7 * x;
        let v = c.eval(x).unwrap();
        let fd = (c.integral(x + h).unwrap() - c.integral(x).unwrap()) / h;
        let noise = 1e-15 * c.integral(x + h).unwrap().abs() / h;
        prop_assert!((fd - v).abs() <= 1e-5 * v.abs().max(1e-12) + 4.0 * noise, "{fd} vs {v}");
    }

    #[test]
    fn eval_non_decreasing_and_marginal_dominates(c in convex_cost(), xs in prop::collection::vec(0.0f64..1e4, 2..20)) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            prop_assert!(c.eval(w[0]).unwrap() <= c.eval(w[1]).unwrap());
        }
        for &x in &xs {
            prop_assert!(c.marginal_cost(x).unwrap() >= c.eval(x).unwrap());
        }
    }

    #[test]
    fn piecewise_is_monotone(xs in prop::collection::vec(0.0f64..200.0, 2..30)) {
        let c = CostSpec::piecewise(vec![0.0, 1.0, 3.0, 10.0]);
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            prop_assert!(c.eval(w[0]).unwrap() <= c.eval(w[1]).unwrap());
        }
    }

    #[test]
    fn normalize_then_scale_round_trips(inst in dag()) {
        let (t, d) = inst.normalize_demands().unwrap();
        let back = inst.scale(&d, t).unwrap();
        for (a, b) in inst.od_pairs.iter().zip(&back.od_pairs) {
            prop_assert!((a.demand - b.demand).abs() <= 1e-12 * a.demand);
        }
    }

    #[test]
    fn validate_is_idempotent(inst in dag()) {
        let before = inst.clone();
        let first = inst.validate();
        prop_assert_eq!(&first, &inst.validate());
        prop_assert_eq!(before, inst);
        prop_assert!(first.is_empty());
    }

    #[test]
    fn json_round_trip(inst in dag()) {
        let doc = InstanceDocument::from_instance(&inst);
        let again = InstanceDocument::parse(&doc.to_json()).unwrap();
        prop_assert_eq!(&doc, &again);
        prop_assert_eq!(again.to_instance().unwrap(), inst);
    }

    #[test]
    fn csv_is_deterministic(vals in prop::collection::vec(prop::array::uniform9(-1e300f64..1e300), 1..8)) {
        let rows: Vec<SweepRow> = vals
            .iter()
            .map(|v| SweepRow {
                t: v[0], c_ne: v[1], c_so: v[2], poa: v[3], ratio_ne: v[4],
                ratio_so: v[5], eps_so: v[6], ne_gap: v[7], so_gap: v[8], flag: None,
            })
            .collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_sweep_csv(&rows, &mut a).unwrap();
        write_sweep_csv(&rows, &mut b).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(read_sweep_csv(a.as_slice()).unwrap(), rows);
    }

    #[test]
    fn dijkstra_matches_path_enumeration(inst in dag(), seed in prop::collection::vec(0.0f64..10.0, 16)) {
        let m = inst.network.arc_count();
        let costs: Vec<f64> = (0..m).map(|a| seed[a % seed.len()]).collect();
        let paths = enumerate_paths(&inst, 10_000).unwrap();
        for (od, ps) in inst.od_pairs.iter().zip(&paths.per_od) {
            let tree = shortest_path(&inst.network, &costs, od.origin).unwrap();
            let best = ps.iter().map(|p| p.iter().map(|&a| costs[a]).sum::<f64>()).fold(f64::INFINITY, f64::min);
            prop_assert!((tree.dist[od.destination] - best).abs() <= 1e-12 * best.max(1.0));
        }
    }

    #[test]
    fn line_search_finds_quadratic_minimum(a in 0.01f64..100.0, m in -1.0f64..2.0) {
        let s = line_search(|l| a * (l - m), 1e-12);
        prop_assert!((s - m.clamp(0.0, 1.0)).abs() <= 1e-9);
    }

    #[test]
    fn solutions_are_consistent_and_wardrop(inst in dag()) {
        for objective in [Objective::UserEquilibrium, Objective::SystemOptimum] {
            let r = solve(&inst, &tight(objective)).unwrap();
            prop_assert!(r.converged);
            r.profile.check_consistency(&inst).unwrap();
            for w in r.trace.windows(2) {
                prop_assert!(w[1].objective_value <= w[0].objective_value + 1e-12 * w[0].objective_value.abs().max(1.0));
            }
            let residual = epsilon_under(&inst, &r.profile, objective, None).unwrap();
            prop_assert!(residual <= 1e-5, "{objective:?} residual {residual}");
        }
        let ue = solve(&inst, &tight(Objective::UserEquilibrium)).unwrap();
        prop_assert!(epsilon_of_profile(&inst, &ue.profile, None).unwrap() <= 1e-5);
    }

    #[test]
    fn poa_at_least_one(inst in dag()) {
        let opts = tight(Objective::UserEquilibrium);
        let r = price_of_anarchy(&inst, &opts).unwrap();
        prop_assert!(r.poa >= 1.0 - 2.0 * opts.rel_gap_tol, "{r:?}");
    }

    #[test]
    fn frank_wolfe_matches_brute_force(costs in prop::collection::vec(convex_cost(), 2..4), t in 0.1f64..20.0) {
        let inst = parallel(costs, t);
        let paths = enumerate_paths(&inst, 6).unwrap();
        for objective in [Objective::UserEquilibrium, Objective::SystemOptimum] {
            let fw = solve(&inst, &tight(objective)).unwrap();
            let bf = brute_force(&inst, &paths, objective, 40).unwrap();
            prop_assert!((fw.objective_value - bf.value).abs() <= 1e-4 * bf.value.abs().max(1e-12));
            prop_assert!((fw.social_cost - bf.social_cost).abs() <= 1e-4 * bf.social_cost.abs().max(1e-9));
        }
    }

    #[test]
    fn analytic_two_link_matches_brute_force(a in convex_cost(), b in convex_cost(), t in 0.1f64..20.0) {
        let inst = parallel(vec![a.clone(), b.clone()], t);
        let paths = enumerate_paths(&inst, 6).unwrap();
        for objective in [Objective::UserEquilibrium, Objective::SystemOptimum] {
            let (_, _, cost) = two_link_analytic(&a, &b, t, objective).unwrap();
            let bf = brute_force(&inst, &paths, objective, 40).unwrap();
            prop_assert!((cost - bf.social_cost).abs() <= 1e-5 * bf.social_cost.abs().max(1e-9), "{cost} vs {}", bf.social_cost);
        }
    }

    #[test]
    fn enumeration_is_deterministic_and_unique(inst in dag()) {
        let a = enumerate_paths(&inst, 10_000).unwrap();
        let b = enumerate_paths(&inst, 10_000).unwrap();
        prop_assert_eq!(&a, &b);
        for ps in &a.per_od {
            let mut sorted = ps.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), ps.len());
        }
    }

    #[test]
    fn l_bound_dominates_limit_game(costs in prop::collection::vec(bpr(), 2..4), w in prop::collection::vec(0.0f64..1.0, 2..4)) {
        let beta = 4.0;
        let costs: Vec<CostSpec> = costs
            .into_iter()
            .map(|c| match c {
                CostSpec::Bpr { t0, capacity, alpha, .. } => CostSpec::bpr(t0, capacity, alpha, beta),
                other => other,
            })
            .collect();
        let inst = parallel(costs, 1.0);
        let bound = l_upper_bound(&inst, 100).unwrap();
        let game = build_limit_game(&inst, &Distribution::new(vec![1.0]).unwrap(), beta).unwrap();
        // any split of the unit demand
        let total: f64 = w.iter().sum::<f64>() + 1e-9;
        let m = game.instance.network.arc_count();
        let cost: f64 = (0..m)
            .map(|a| {
                let x = w.get(a).copied().unwrap_or(0.0) / total;
                x * game.instance.network.arcs[a].cost.eval(x).unwrap()
            })
            .sum();
        prop_assert!(bound >= cost);
    }

    #[test]
    fn equal_degree_monomials_have_unit_poa(g in prop::collection::vec(0.1f64..10.0, 2..4), beta in 0.5f64..5.0, t in 0.01f64..1e4) {
        let costs = g.into_iter().map(|g| CostSpec::monomial(g, beta)).collect();
        let r = price_of_anarchy(&parallel(costs, t), &tight(Objective::UserEquilibrium)).unwrap();
        prop_assert!((r.poa - 1.0).abs() <= 5e-4, "{r:?}");
    }
}

#[test]
fn solve_is_bitwise_deterministic() {
    let net = Network::with_node_count(
        3,
        [
            (0, 2, CostSpec::affine(2.0, 3.0)),
            (0, 1, CostSpec::affine(1.0, 0.0)),
            (0, 1, CostSpec::polynomial([(1.0, 2.0), (0.5, 0.0)])),
            (1, 2, CostSpec::affine(1.0, 1.0)),
        ],
    );
    let inst = Instance::new(net, vec![OdPair::new(0, 2, 4.0)]);
    for objective in [Objective::UserEquilibrium, Objective::SystemOptimum] {
        let a = solve(&inst, &tight(objective)).unwrap();
        let b = solve(&inst, &tight(objective)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
