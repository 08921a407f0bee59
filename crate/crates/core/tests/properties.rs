use proptest::prelude::*;

use summachine::cdtl::{parse_local, Formula, LocalFormula, LocalModel};
use summachine::check::all_vectors;
use summachine::gen::{generate, GenParams};
use summachine::model::{validate_system, SystemSpec};
use summachine::oracle::{build_product, check_bisimulation, product_reachable, DEFAULT_BOUND};
use summachine::reach::{global_reachable, ReachOptions, ReachQuery};
use summachine::relations::Relations;
use summachine::unfold::{unfold, ExecMode, Limits, SumMachine};

fn small_system() -> impl Strategy<Value = SystemSpec> {
    (any::<u64>(), 1usize..=3, 1usize..=4, 0usize..=2, 1usize..=3).prop_map(
        |(seed, machines, states, coupling, width)| {
            let params =
                GenParams { seed, machines, states, coupling: coupling.min(machines - 1), conflict_width: width };
            generate(&params).unwrap()
        },
    )
}

fn build(spec: &SystemSpec) -> SumMachine {
    unfold(spec, Limits::default(), ExecMode::Sequential).unwrap()
}

fn formula(props: Vec<String>) -> impl Strategy<Value = LocalFormula> {
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        proptest::sample::select(props).prop_map(Formula::Atom),
    ];
    leaf.prop_recursive(3, 24, 2, |inner| {
        let b = |s: BoxedStrategy<LocalFormula>| s.prop_map(Box::new);
        prop_oneof![
            b(inner.clone()).prop_map(Formula::Not),
            (b(inner.clone()), b(inner.clone())).prop_map(|(x, y)| Formula::And(x, y)),
            (b(inner.clone()), b(inner.clone())).prop_map(|(x, y)| Formula::Or(x, y)),
            (b(inner.clone()), b(inner.clone())).prop_map(|(x, y)| Formula::Implies(x, y)),
            b(inner.clone()).prop_map(Formula::AX),
            b(inner.clone()).prop_map(Formula::EX),
            b(inner.clone()).prop_map(Formula::AF),
            b(inner.clone()).prop_map(Formula::EF),
            b(inner.clone()).prop_map(Formula::AG),
            b(inner.clone()).prop_map(Formula::EG),
            (b(inner.clone()), b(inner.clone())).prop_map(|(x, y)| Formula::AU(x, y)),
            (b(inner.clone()), b(inner)).prop_map(|(x, y)| Formula::EU(x, y)),
        ]
    })
}

/// A system, one of its machines and a formula over that machine's states.
fn local_case() -> impl Strategy<Value = (SystemSpec, usize, LocalFormula)> {
    small_system().prop_flat_map(|spec| {
        let n = spec.len();
        (Just(spec), 0..n).prop_flat_map(|(spec, i)| {
            let props = spec.machines[i].states.clone();
            (Just(spec), Just(i), formula(props))
        })
    })
}

fn quoted(f: &LocalFormula) -> String {
    f.clone().try_map::<String, ()>(&mut |a| Ok(format!("\"{a}\""))).unwrap().to_string()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn generated_systems_validate(spec in small_system()) {
        prop_assert!(validate_system(&spec).is_unfoldable());
    }

    #[test]
    fn full_queries_match_the_product(spec in small_system()) {
        let sum = build(&spec);
        let pm = build_product(&spec, DEFAULT_BOUND);
        for v in all_vectors(&spec) {
            let q = ReachQuery::full(&v);
            let got = global_reachable(&sum, &q, ReachOptions::default()).unwrap().reachable;
            prop_assert_eq!(got, product_reachable(&pm, &q).holds, "{}", spec.format_vector(&v));
        }
    }

    #[test]
    fn configurations_are_bisimilar_to_the_product(spec in small_system()) {
        let sum = build(&spec);
        let report = check_bisimulation(&build_product(&spec, DEFAULT_BOUND), &sum);
        prop_assert!(report.passed(), "{:?}", report.violations);
    }

    #[test]
    fn parallel_unfolding_is_deterministic(spec in small_system()) {
        let par = unfold(&spec, Limits::default(), ExecMode::Parallel).unwrap();
        prop_assert_eq!(build(&spec).to_json(Some(1)), par.to_json(Some(1)));
    }

    #[test]
    fn json_round_trip(spec in small_system()) {
        let sum = build(&spec);
        let (back, seed) = SumMachine::from_json(&sum.to_json(Some(9))).unwrap();
        prop_assert_eq!(seed, Some(9));
        prop_assert_eq!(back.to_json(Some(9)), sum.to_json(Some(9)));
    }

    #[test]
    fn concurrency_is_symmetric_and_cross_machine(spec in small_system()) {
        let sum = build(&spec);
        let rel = Relations::new(&sum);
        let nodes: Vec<_> = sum.all_nodes().collect();
        for &s in &nodes {
            for &t in &nodes {
                if s.machine != t.machine {
                    prop_assert_eq!(rel.co_definitional(s, t).unwrap(), rel.co_definitional(t, s).unwrap());
                }
            }
        }
    }

    #[test]
    fn local_dualities((spec, i, phi) in local_case()) {
        let sum = build(&spec);
        let model = LocalModel::new(&sum, i);
        let not_phi = !phi.clone();
        let boxed = |f: &LocalFormula| Box::new(f.clone());
        prop_assert_eq!(model.sat(&!Formula::EF(boxed(&phi))), model.sat(&Formula::AG(boxed(&not_phi))));
        prop_assert_eq!(model.sat(&!Formula::AF(boxed(&phi))), model.sat(&Formula::EG(boxed(&not_phi))));
        prop_assert_eq!(model.sat(&!Formula::EX(boxed(&phi))), model.sat(&Formula::AX(boxed(&not_phi))));
        prop_assert_eq!(model.sat(&Formula::EU(Box::new(Formula::True), boxed(&phi))), model.sat(&Formula::EF(boxed(&phi))));
        prop_assert_eq!(model.sat(&Formula::AU(Box::new(Formula::True), boxed(&phi))), model.sat(&Formula::AF(boxed(&phi))));
    }

    #[test]
    fn formulas_print_and_parse_back((spec, i, phi) in local_case()) {
        let sum = build(&spec);
        let text = quoted(&phi);
        prop_assert_eq!(parse_local(&sum, i, &text).unwrap(), phi, "{}", text);
    }
}
