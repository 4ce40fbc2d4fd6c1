mod common;

use common::*;
use heraklit::composition::{abstract_module, canonical_equal, canonical_form, compose, flatten};
use heraklit::dsl::{parse_model, print_model};
use heraklit::mining::{analyze, export_log, EventLog};
use heraklit::runs::{linearize, replay, simulate, verify_run};
use heraklit::schema::local_name;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn enabled_bindings_match_brute_force(seed in any::<u64>()) {
        let (net, m) = random_binding_instance(&mut rng(seed));
        let mut fast = net.enabled_bindings(&m, "t");
        fast.sort();
        prop_assert_eq!(fast, brute_force_bindings(&net, &m, "t"));
    }

    #[test]
    fn composition_is_associative_where_defined(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, c) = (random_module(&mut r, "a"), random_module(&mut r, "b"), random_module(&mut r, "c"));
        let left = compose(&a, &b).and_then(|ab| compose(&ab, &c));
        let right = compose(&b, &c).and_then(|bc| compose(&a, &bc));
        if let (Ok(l), Ok(r)) = (left, right) {
            prop_assert!(canonical_equal(&l, &r));
            prop_assert_eq!(flatten(&l).unwrap().normalized(), flatten(&r).unwrap().normalized());
        }
    }

    #[test]
    fn abstraction_keeps_the_composed_surface(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b) = (random_module(&mut r, "a"), random_module(&mut r, "b"));
        let concrete = compose(&a, &b);
        let abstracted = compose(&abstract_module(&a), &abstract_module(&b));
        prop_assert_eq!(concrete.is_ok(), abstracted.is_ok());
        if let (Ok(x), Ok(y)) = (concrete, abstracted) {
            let (fx, fy) = (canonical_form(&x), canonical_form(&y));
            prop_assert_eq!(fx.left, fy.left);
            prop_assert_eq!(fx.right, fy.right);
            prop_assert_eq!(fx.merged, fy.merged);
            prop_assert!(canonical_equal(&abstract_module(&x), &abstract_module(&abstract_module(&x))));
        }
    }

    #[test]
    fn seeded_linearizations_replay(seed in any::<u64>(), order_seed in any::<u64>()) {
        let net = case_net();
        let sim = simulate(&net, &scenario(&[("c1", "s1"), ("c2", "s1"), ("c3", "s2")], 200, seed)).unwrap();
        prop_assert!(verify_run(&net, &sim.run));
        let order = linearize(&sim.run, order_seed).unwrap();
        prop_assert_eq!(replay(&net, &sim.run, &order).unwrap(), sim.final_marking);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn mining_counts_agree_with_a_recount(seed in any::<u64>(), picks in proptest::collection::vec((0usize..3, 0usize..2), 0..4)) {
        let net = case_net();
        let clients = ["c1", "c2", "c3"];
        let requests: Vec<(&str, &str)> = picks.iter().map(|&(c, s)| (clients[c], ["s1", "s2"][s])).collect();
        let sim = simulate(&net, &scenario(&requests, 300, seed)).unwrap();
        let log = export_log(&sim.run, None);
        let reread = EventLog::read_jsonl(log.to_jsonl().as_bytes()).unwrap();
        prop_assert_eq!(&reread, &log);
        prop_assert_eq!(reread.replay(&net).unwrap(), sim.final_marking);

        let report = analyze(&log);
        let count = |t: &str| sim.run.events.iter().filter(|e| local_name(&e.transition) == t).count();
        prop_assert_eq!(report.turned_away_count, count("k"));
        prop_assert_eq!(report.turned_away_count, count("c"));
        prop_assert_eq!(report.served_count, count("d"));
        prop_assert_eq!(report.request_frequency.values().sum::<usize>(), requests.len());
        prop_assert_eq!(report.transition_counts.values().sum::<usize>(), sim.run.events.len());
        let waits: usize = report.waiting_times.values().map(Vec::len).sum();
        prop_assert_eq!(waits + report.open_requests.len(), count("b"));
        for u in report.expert_utilization.values() {
            prop_assert!((0.0..=1.0).contains(u));
        }
    }
}

#[test]
fn every_topological_order_of_small_runs_replays() {
    let net = case_net();
    let runs = small_runs(&net);
    assert!(runs.len() >= 20);
    for run in &runs {
        let want = run.final_marking();
        for order in all_orders(run) {
            assert_eq!(replay(&net, run, &order).unwrap(), want);
        }
    }
}

#[test]
fn model_print_parse_round_trip() {
    let src = std::fs::read_to_string(format!("{MODELS}/service_system.hkl")).unwrap();
    let m = parse_model(&src).unwrap();
    let printed = print_model(&m);
    let again = parse_model(&printed).unwrap();
    assert!(canonical_equal(&m.composed, &again.composed));
    assert_eq!(print_model(&again), printed);
    assert_eq!(again.invariants, m.invariants);
    assert_eq!(again.structures, m.structures);
}
