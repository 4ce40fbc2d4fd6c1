//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints one PASS/FAIL line; the process fails if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::*;
use heraklit::algebra::Value;
use heraklit::composition::{canonical_equal, compose, compose_all, flatten, local_name};
use heraklit::dsl::{parse_model, print_model};
use heraklit::explore::{explore, TYPING};
use heraklit::mining::{analyze, export_log};
use heraklit::runs::{replay, simulate, ConcurrentRun, Outcome, Scenario};
use heraklit::schema::{instantiate, Marking, Net};
use heraklit::service_system::{build_system, default_instantiation, invariants};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ASSOCIATIVITY_TRIPLES: usize = 500;
const ASSOCIATIVITY_BUDGET: Duration = Duration::from_secs(30);
const HAPPY_PATH_BUDGET: Duration = Duration::from_secs(1);
const EXPLORATION_BUDGET: Duration = Duration::from_secs(60);
const EXPLORATION_STATES: usize = 100_000;
const BINDING_INSTANCES: usize = 200;
const RUN_EVENTS: usize = 10;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn load_scenario(name: &str) -> Scenario {
    let text = std::fs::read_to_string(format!("{SCENARIOS}/{name}")).unwrap();
    heraklit::cli::parse_scenario(&text, &build_system().signature).unwrap()
}

fn local_counts(run: &ConcurrentRun) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for e in &run.events {
        *counts.entry(local_name(&e.transition).to_owned()).or_insert(0) += 1;
    }
    counts
}

fn associativity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut defined, mut attempts) = (0, 0);
    while defined < ASSOCIATIVITY_TRIPLES {
        attempts += 1;
        ensure(
            attempts <= 200_000,
            format!("only {defined} defined triples in {attempts} attempts"),
        )?;
        let (a, b, c) = (
            random_module(&mut rng, "a"),
            random_module(&mut rng, "b"),
            random_module(&mut rng, "c"),
        );
        let left = compose(&a, &b).and_then(|ab| compose(&ab, &c));
        let right = compose(&b, &c).and_then(|bc| compose(&a, &bc));
        let (Ok(l), Ok(r)) = (left, right) else { continue };
        defined += 1;
        ensure(
            canonical_equal(&l, &r),
            format!("triple {defined}: canonical forms differ"),
        )?;
        ensure(
            flatten(&l).unwrap().normalized() == flatten(&r).unwrap().normalized(),
            format!("triple {defined}: flattened nets differ"),
        )?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < ASSOCIATIVITY_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("{defined} triples ({attempts} sampled) in {elapsed:.2?}"))
}

fn happy_path() -> Verdict {
    let start = Instant::now();
    let net = case_net();
    let sim = simulate(&net, &load_scenario("one_client.json")).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(sim.outcome == Outcome::Complete, format!("outcome {:?}", sim.outcome))?;
    let want: BTreeMap<String, usize> = ["a", "b", "j", "d", "f", "h", "i", "g", "e"]
        .iter()
        .map(|t| (t.to_string(), 1))
        .collect();
    ensure(
        local_counts(&sim.run) == want,
        format!("occurrences {:?}", local_counts(&sim.run)),
    )?;
    let resources = Marking::new()
        .with("admin.P", [Value::atom("a1", "A")])
        .with("admin.R", [Value::atom("e1", "E"), Value::atom("e2", "E")])
        .with("experts.G", [Value::atom("e1", "E"), Value::atom("e2", "E")])
        .with("admin.S", [Value::atom("r1", "R")]);
    ensure(
        net.initial_marking == resources,
        "initial marking is not the resource marking",
    )?;
    let want_final = resources.clone().with("clients.Exited", [Value::atom("c1", "C")]);
    ensure(
        sim.final_marking == want_final,
        format!("final marking {}", sim.final_marking),
    )?;
    ensure(elapsed < HAPPY_PATH_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("9 events, resources restored, {elapsed:.2?}"))
}

fn rejection() -> Verdict {
    let net = case_net();
    let sim = simulate(&net, &load_scenario("rejection.json")).map_err(|e| e.to_string())?;
    let counts = local_counts(&sim.run);
    ensure(
        counts.get("k") == Some(&1),
        format!("k fired {:?} times", counts.get("k")),
    )?;
    let mut order: Vec<usize> = (0..sim.run.events.len()).collect();
    order.sort_by_key(|&e| sim.run.events[e].index);
    let k = order
        .iter()
        .position(|&e| local_name(&sim.run.events[e].transition) == "k")
        .expect("k occurs");
    let k_event = &sim.run.events[order[k]];
    // marking at decision time
    let before = replay_prefix(&net, &sim.run, &order[..k])?;
    let f_s = net
        .structure
        .eval(
            &heraklit::algebra::Term::apply("f", vec![heraklit::algebra::Term::var("s")]),
            &k_event.binding,
        )
        .map_err(|e| e.to_string())?;
    for e in f_s.as_set().expect("set") {
        ensure(
            before.get("admin.T").count(e) == 1,
            format!("{e} is not engaged when k fires"),
        )?;
    }
    let client = k_event.binding.get("c").expect("k binds c");
    let exited_via_c = sim
        .run
        .events
        .iter()
        .any(|e| local_name(&e.transition) == "c" && e.binding.get("c") == Some(client));
    ensure(exited_via_c, format!("{client} did not leave via c"))?;
    let report = analyze(&export_log(&sim.run, None));
    ensure(
        report.turned_away_count == counts["k"],
        format!("turnedAwayCount {} vs {} k", report.turned_away_count, counts["k"]),
    )?;
    Ok(format!(
        "k once for {client}, turnedAwayCount {}",
        report.turned_away_count
    ))
}

fn replay_prefix(net: &Net, run: &ConcurrentRun, prefix: &[usize]) -> Result<Marking, String> {
    let mut m = net.initial_marking.clone();
    for &e in prefix {
        let ev = &run.events[e];
        m = net.fire(&m, &ev.transition, &ev.binding).map_err(|e| e.to_string())?;
    }
    Ok(m)
}

fn exploration() -> Verdict {
    let start = Instant::now();
    let net = case_net();
    let sc = load_scenario("two_clients.json");
    ensure(sc.workload.len() == 2, "scenario should queue two requests")?;
    let invs = invariants();
    let report = explore(&net, &sc.workload, &invs, EXPLORATION_STATES);
    let elapsed = start.elapsed();
    ensure(report.exhaustive, format!("stopped at {} states", report.states))?;
    ensure(invs.len() + 1 == 5, "five invariants")?;
    for name in std::iter::once(TYPING).chain(invs.iter().map(|i| i.name())) {
        ensure(report.checks[name] > 0, format!("{name} never checked"))?;
        ensure(
            report.holds(name),
            format!("{name} violated: {:?}", report.violations.first()),
        )?;
    }
    ensure(elapsed < EXPLORATION_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} states, {} edges, 5 invariants hold, {elapsed:.2?}",
        report.states, report.edges
    ))
}

fn run_semantics() -> Verdict {
    let net = case_net();
    let runs = small_runs(&net);
    let mut orders = 0;
    for (i, run) in runs.iter().enumerate() {
        ensure(run.events.len() <= RUN_EVENTS, "run too long")?;
        let want = run.final_marking();
        for order in all_orders(run) {
            orders += 1;
            let m = replay(&net, run, &order).map_err(|e| format!("run {i}, order {order:?}: {e}"))?;
            ensure(m == want, format!("run {i}: order {order:?} ends elsewhere"))?;
        }
    }
    Ok(format!("{} runs, {orders} topological orders replayed", runs.len()))
}

fn binding_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1d);
    let mut nonempty = 0;
    for i in 0..BINDING_INSTANCES {
        let (net, m) = random_binding_instance(&mut rng);
        let mut fast = net.enabled_bindings(&m, "t");
        fast.sort();
        let slow = brute_force_bindings(&net, &m, "t");
        ensure(
            fast == slow,
            format!("instance {i}: {} vs {} bindings", fast.len(), slow.len()),
        )?;
        nonempty += usize::from(!slow.is_empty());
    }
    Ok(format!(
        "{BINDING_INSTANCES} instances agree ({nonempty} with enabled bindings)"
    ))
}

fn coherence() -> Verdict {
    let sys = build_system();
    let st = default_instantiation();
    let (c, a, r, e) = (&sys.clients, &sys.admin, &sys.rooms, &sys.experts);
    let stepwise = compose(c, &compose(a, &compose(r, e).unwrap()).unwrap()).unwrap();
    let nested = compose_all([c, a, r, e]).unwrap().unwrap();
    let src = std::fs::read_to_string(format!("{MODELS}/service_system.hkl")).unwrap();
    let parsed = parse_model(&src).map_err(|e| e.to_string())?.composed;
    let nets: Vec<Net> = [&nested, &stepwise, &parsed]
        .iter()
        .map(|m| instantiate(&flatten(m).unwrap(), &st).unwrap())
        .collect();
    for file in ["one_client.json", "rejection.json"] {
        let sc = load_scenario(file);
        let runs: Vec<ConcurrentRun> = nets.iter().map(|n| simulate(n, &sc).unwrap().run).collect();
        ensure(runs.iter().all(|r| *r == runs[0]), format!("{file}: runs differ"))?;
    }
    Ok("three bracketings give identical runs for both scenarios".into())
}

fn dsl_round_trip() -> Verdict {
    let src = std::fs::read_to_string(format!("{MODELS}/service_system.hkl")).unwrap();
    let m = parse_model(&src).map_err(|e| e.to_string())?;
    ensure(
        canonical_equal(&m.composed, &build_system().composed),
        "parsed system differs",
    )?;
    let again = parse_model(&print_model(&m)).map_err(|e| e.to_string())?;
    ensure(
        canonical_equal(&again.composed, &m.composed),
        "reprinted system differs",
    )?;
    Ok("parse and print-reparse are canonically equal".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("associativity", associativity),
        ("happy path", happy_path),
        ("rejection path", rejection),
        ("invariant exploration", exploration),
        ("run semantics", run_semantics),
        ("binding oracle", binding_oracle),
        ("flattening coherence", coherence),
        ("dsl round trip", dsl_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {} {name}: {detail}", i + 1),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {} {name}: panicked", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
