use fdadmm_core::admm::{run_fdadmm_ftdt, AdmmConfig, Init, Problem};
use fdadmm_core::consensus::{ratio_step, FtercNode, InWeights, RatioMsg, RatioState};
use fdadmm_core::netsim::{Network, Phase};
use fdadmm_core::objectives::{boxed, least_squares_instance, ls_x_update, soft_threshold, LocalObjective};
use fdadmm_core::oracle::minimal_poly_exact;
use fdadmm_core::{Digraph, Exact, NodeId, Scalar, Tolerances, WeightMatrix};
use num_rational::Ratio;
use proptest::prelude::*;

fn graph() -> impl Strategy<Value = Digraph> {
    (1usize..=12, 0.0f64..0.5, any::<u64>()).prop_map(|(n, p, seed)| Digraph::random_strongly_connected(n, p, seed))
}

fn graph_with_inputs() -> impl Strategy<Value = (Digraph, Vec<Vec<f64>>)> {
    graph().prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), n))
    })
}

fn ftdt_network(g: &Digraph, seeds: &[Vec<f64>]) -> Network<FtercNode<Exact>> {
    let w = WeightMatrix::ratio_weights(g);
    let nodes = (0..g.node_count())
        .map(|j| {
            let mut node = FtercNode::new(g, &w, j, Tolerances::default());
            node.begin_ftdt(&seeds[j]);
            node
        })
        .collect();
    Network::new(g.clone(), nodes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weights_are_column_stochastic(g in graph()) {
        prop_assert!(g.is_strongly_connected());
        prop_assert!(g.diameter().unwrap() < g.node_count().max(1));
        let w = WeightMatrix::ratio_weights(&g);
        for j in 0..g.node_count() {
            prop_assert_eq!(w.column_sum_exact(j), Ratio::from_integer(1));
        }
    }

    #[test]
    fn ratio_iteration_conserves_mass((g, y0) in graph_with_inputs(), rounds in 1usize..15) {
        let w = WeightMatrix::ratio_weights(&g);
        let n = g.node_count();
        let ws: Vec<InWeights> = (0..n).map(|j| InWeights::new(&g, &w, j)).collect();
        let mut st: Vec<RatioState<Exact>> = y0.iter().map(|v| RatioState::from_f64(v)).collect();
        let total = |st: &[RatioState<Exact>], c: usize| st.iter().fold(Exact::zero(), |acc, s| acc.add(&s.y.last().unwrap()[c]));
        let before: Vec<Exact> = (0..2).map(|c| total(&st, c)).collect();
        for _ in 0..rounds {
            let msgs: Vec<RatioMsg<Exact>> = st.iter().map(RatioState::message).collect();
            for j in 0..n {
                let inbox: Vec<(NodeId, &RatioMsg<Exact>)> = g.in_neighbors(j).iter().map(|&i| (i, &msgs[i])).collect();
                ratio_step(&mut st[j], j, &ws[j], &inbox).unwrap();
            }
        }
        for (c, b) in before.iter().enumerate() {
            prop_assert_eq!(&total(&st, c), b);
        }
        let den = st.iter().fold(Exact::zero(), |acc, s| acc.add(s.x.last().unwrap()));
        prop_assert_eq!(den, Exact::from(n as i64));
    }

    #[test]
    fn ftdt_is_safe_and_agrees((g, seeds) in graph_with_inputs()) {
        let n = g.node_count();
        let w = WeightMatrix::ratio_weights(&g);
        let degrees: Vec<usize> = (0..n).map(|j| minimal_poly_exact(&w, j)).collect();
        let m_max = degrees.iter().max().unwrap() - 1;
        let mut net = ftdt_network(&g, &seeds);
        let rounds = net.run_until_done(1, Phase::Ftdt, 4 * n + 8).unwrap();
        prop_assert_eq!(rounds, Some(4 * (m_max + 1) - 1));
        let last_found = net.nodes().iter().map(|v| v.learned().unwrap().found_at).max().unwrap();
        for (j, node) in net.nodes().iter().enumerate() {
            let o = node.ftdt_outcome().unwrap();
            prop_assert!(o.defect < degrees[j]);
            prop_assert!(g.in_eccentricity(j).unwrap() <= 2 * (o.defect + 1));
            prop_assert_eq!(o.m_max, m_max);
            if let Some(t) = o.t_term {
                prop_assert!(t >= last_found);
            }
        }
    }

    #[test]
    fn soft_threshold_is_nonexpansive(
        a in prop::collection::vec(-5.0f64..5.0, 4),
        b in prop::collection::vec(-5.0f64..5.0, 4),
        kappa in 0.0f64..3.0,
    ) {
        let (sa, sb) = (soft_threshold(&a, kappa), soft_threshold(&b, kappa));
        for i in 0..4 {
            prop_assert!((sa[i] - sb[i]).abs() <= (a[i] - b[i]).abs() + 1e-15);
            prop_assert!(sa[i].abs() <= (a[i].abs() - kappa).max(0.0) + 1e-15);
        }
    }

    #[test]
    fn ls_x_update_solves_its_subproblem(seed in any::<u64>(), rho in 0.1f64..10.0) {
        let f = &least_squares_instance(1, 3, 3, seed)[0];
        let z = [0.3, -0.2, 0.5];
        let lambda = [0.1, 0.0, -0.4];
        let x = ls_x_update(f.a(), f.b(), &z, &lambda, rho).unwrap();
        let g = f.gradient(&x).unwrap();
        for i in 0..3 {
            prop_assert!((g[i] + lambda[i] + rho * (x[i] - z[i])).abs() <= 1e-9 * (1.0 + g[i].abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn z_copies_agree_after_every_step(n in 2usize..7, p in 0.0f64..0.5, seed in any::<u64>()) {
        let problem = Problem::new(boxed(least_squares_instance(n, 2, 2, seed)), None).unwrap();
        let g = Digraph::random_strongly_connected(n, p, seed);
        let cfg = AdmmConfig { k_max: 4, stop_on_criterion: false, init: Init::Random { seed }, ..Default::default() };
        let record = run_fdadmm_ftdt(&problem, &g, &cfg).unwrap();
        for step in &record.steps {
            let mean = step.iterate.z_mean();
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            for z in &step.iterate.z {
                for (a, b) in z.iter().zip(&mean) {
                    prop_assert!((a - b).abs() <= 1e-8 * (1.0 + norm));
                }
            }
        }
    }
}
