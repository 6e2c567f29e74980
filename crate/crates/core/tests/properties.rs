use proptest::prelude::*;

use spider_core::config::RunConfig;
use spider_core::dirichlet::solve_ball;
use spider_core::graph::{EdgeId, StarGraph};
use spider_core::measure::{CirParams, Density, EdgeMeasure, EdgeScale, Interval};
use spider_core::timechange::{build_a, right_inverse};
use spider_core::walsh::{flags, local_time_field, simulate_walsh, Bias, Seed};
use spider_core::{DiffusionSpec, GraphPoint};

fn mixed_measure(density: f64, atom: f64, mass: f64) -> EdgeMeasure {
    EdgeMeasure::with_density(Density::Constant { value: density }).with_atom(atom, mass).with_singular(
        spider_core::measure::SingularCdf::Cantor { lo: 0.5, hi: 1.5, mass: 0.7 },
    )
}

fn arb_scale() -> impl Strategy<Value = EdgeScale> {
    prop_oneof![
        Just(EdgeScale::Natural),
        (0.2f64..5.0).prop_map(|s| EdgeScale::linear(s).unwrap()),
        (0.5f64..2.0, 0.5f64..2.0, 0.5f64..1.5, 0.5f64..2.0).prop_map(|(kappa, theta, sigma, shift)| {
            EdgeScale::cir(CirParams { kappa, theta, sigma, shift }).unwrap()
        }),
        prop::collection::vec(0.1f64..1.0, 2..8).prop_map(|steps| {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (i, s) in steps.iter().enumerate() {
                x.push(x[i] + 0.5);
                y.push(y[i] + s);
            }
            EdgeScale::tabulated(x, y).unwrap()
        }),
    ]
}

fn arb_bias() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 2..5).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

fn walsh_spec(bias: &[f64], density: f64) -> DiffusionSpec {
    let n = bias.len();
    DiffusionSpec::new(
        StarGraph::unbounded(n).unwrap(),
        vec![EdgeScale::Natural; n],
        vec![EdgeMeasure::with_density(Density::Constant { value: density }); n],
        bias.to_vec(),
        0.0,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn measure_additive_over_adjacent_intervals(
        density in 0.1f64..3.0,
        atom in 0.1f64..2.9,
        mass in 0.1f64..2.0,
        cut in 0.05f64..2.95,
    ) {
        let m = mixed_measure(density, atom, mass);
        let whole = m.mass(Interval::left_open(0.0, 3.0)).unwrap();
        let left = m.mass(Interval::left_open(0.0, cut)).unwrap();
        let right = m.mass(Interval::left_open(cut, 3.0)).unwrap();
        prop_assert!((whole - left - right).abs() <= 1e-9 * whole.max(1.0));
        let g = |x: f64| 1.0 + x * x;
        let whole = m.integral(g, Interval::left_open(0.0, 3.0)).unwrap();
        let parts = m.integral(g, Interval::left_open(0.0, cut)).unwrap() + m.integral(g, Interval::left_open(cut, 3.0)).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-8 * whole.max(1.0));
    }

    #[test]
    fn scale_inverse_roundtrip(scale in arb_scale(), x in 0.0f64..3.0) {
        let y = scale.eval(x);
        let back = scale.inverse(y);
        prop_assert!((back - x).abs() <= 1e-8 * x.max(1.0), "{x} -> {y} -> {back}");
        prop_assert!(scale.eval(0.0).abs() < 1e-12);
        prop_assert!(scale.eval(x + 0.1) > y);
    }

    #[test]
    fn pushforward_bias_sums_to_one(bias in arb_bias(), scales in prop::collection::vec(arb_scale(), 5), rho in 0.0f64..3.0) {
        let n = bias.len();
        let spec = DiffusionSpec::new(
            StarGraph::unbounded(n).unwrap(),
            scales[..n].to_vec(),
            vec![EdgeMeasure::lebesgue(); n],
            bias,
            rho,
        )
        .unwrap();
        let y = spec.pushforward().unwrap();
        prop_assert!((y.bias().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(y.is_nse());
        prop_assert_eq!(y.rho() == 0.0, rho == 0.0);
    }

    #[test]
    fn pushforward_of_nse_is_identity(bias in arb_bias(), rho in 0.0f64..3.0) {
        let spec = DiffusionSpec::walsh(&bias, rho).unwrap();
        let y = spec.pushforward().unwrap();
        prop_assert_eq!(y.bias(), spec.bias());
        prop_assert_eq!(y.rho(), spec.rho());
    }

    #[test]
    fn dirichlet_is_linear_in_the_source(bias in arb_bias(), rho in 0.0f64..2.0, a in -2.0f64..2.0, c in -2.0f64..2.0) {
        let spec = DiffusionSpec::walsh(&bias, rho).unwrap();
        let f = |p: GraphPoint| 1.0 + p.radius();
        let g = |p: GraphPoint| (p.radius() * 3.0).cos();
        let uf = solve_ball(&spec, 0.8, f).unwrap();
        let ug = solve_ball(&spec, 0.8, g).unwrap();
        let uh = solve_ball(&spec, 0.8, |p| a * f(p) + c * g(p)).unwrap();
        for e in 0..bias.len() {
            for r in [0.0, 0.1, 0.45, 0.8] {
                let p = GraphPoint::on(EdgeId(e), r);
                let lin = a * uf.eval(p).unwrap() + c * ug.eval(p).unwrap();
                prop_assert!((uh.eval(p).unwrap() - lin).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn walsh_edge_labels_constant_within_excursions(bias in arb_bias(), seed in any::<u64>()) {
        let b = Bias::new(&bias).unwrap();
        let p = simulate_walsh(GraphPoint::Vertex, &b, 0.2, 1e-3, Seed::new(seed)).unwrap();
        prop_assert_eq!(p.radii[0], 0.0);
        for k in 1..p.len() {
            prop_assert!(p.radii[k] >= 0.0);
            let renewed = p.flags[k] & flags::RENEWAL != 0 || p.radii[k - 1] == 0.0;
            if !renewed {
                prop_assert_eq!(p.edges[k], p.edges[k - 1]);
            }
        }
    }

    #[test]
    fn walsh_paths_are_seed_deterministic(seed in any::<u64>()) {
        let b = Bias::new(&[0.5, 0.3, 0.2]).unwrap();
        let x0 = GraphPoint::on(EdgeId(1), 0.3);
        let p = simulate_walsh(x0, &b, 0.1, 1e-3, Seed::new(seed)).unwrap();
        let q = simulate_walsh(x0, &b, 0.1, 1e-3, Seed::new(seed)).unwrap();
        prop_assert_eq!(&p, &q);
        prop_assert_eq!(p.edges[0], 1);
        prop_assert_eq!(p.radii[0], 0.3);
    }

    #[test]
    fn local_time_field_monotone_and_split_exact(bias in arb_bias(), seed in any::<u64>()) {
        let b = Bias::new(&bias).unwrap();
        let p = simulate_walsh(GraphPoint::Vertex, &b, 0.3, 1e-3, Seed::new(seed)).unwrap();
        let times = [0.1, 0.2, 0.3];
        let f = local_time_field(&p, 0.05, &times).unwrap();
        for ti in 0..times.len() {
            let split: f64 = (0..bias.len()).map(|e| f.vertex_directional(ti, e)).sum();
            prop_assert_eq!(split, f.vertex(ti));
            if ti > 0 {
                for e in 0..bias.len() {
                    for (now, before) in f.edge_cells(ti, e).iter().zip(f.edge_cells(ti - 1, e)) {
                        prop_assert!(now >= before && *before >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn build_a_strictly_increasing_and_inverted(bias in arb_bias(), density in 0.2f64..3.0, seed in any::<u64>()) {
        let spec = walsh_spec(&bias, density);
        let b = Bias::new(&bias).unwrap();
        let p = simulate_walsh(GraphPoint::Vertex, &b, 0.2, 1e-3, Seed::new(seed)).unwrap();
        let a = build_a(&p, &spec, 0.03).unwrap();
        prop_assert_eq!(a.values[0], 0.0);
        prop_assert!(a.is_strictly_increasing());
        let g = right_inverse(&a);
        let n = a.times.len();
        for (t, v) in a.times[..n - 1].iter().zip(&a.values) {
            prop_assert!((g.eval(*v) - t).abs() <= 1e-9);
        }
        prop_assert!(g.eval(a.values[n - 1]).is_infinite());
    }

    #[test]
    fn config_roundtrip(dt in 1e-4f64..1e-2, seed in any::<u64>(), rho in 0.0f64..3.0, atoms in prop::collection::vec((0.1f64..5.0, 0.1f64..2.0), 0..4)) {
        let atoms: Vec<String> = atoms.iter().map(|(p, m)| format!("{{\"position\": {p}, \"mass\": {m}}}")).collect();
        let text = format!(
            r#"{{"schema": 1, "graph": {{"lengths": ["inf", 4.0]}},
                "edges": [{{"speed": [{{"part": "atoms", "atoms": [{}]}}, {{"part": "lebesgue"}}]}}, {{}}],
                "bias": [0.6, 0.4], "rho": {rho},
                "simulation": {{"dt": {dt}, "seed": {seed}}}}}"#,
            atoms.join(",")
        );
        let cfg = RunConfig::from_json(&text).unwrap().normalize();
        let again = RunConfig::from_json(&cfg.to_json()).unwrap().normalize();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.hash(), cfg.hash());
    }
}
