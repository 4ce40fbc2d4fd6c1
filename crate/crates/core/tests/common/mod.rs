#![allow(dead_code)]

use std::collections::BTreeSet;

use heraklit::algebra::{Binding, Signature, Sort, Structure, Term, Value};
use heraklit::composition::{flatten, Gate, Module};
use heraklit::runs::{simulate, ConcurrentRun, EventId, Scenario, WorkloadItem};
use heraklit::schema::{instantiate, InscriptionItem, Marking, Net, NetSchema, Transition};
use heraklit::service_system::{build_system, default_instantiation};
use rand::seq::SliceRandom;
use rand::Rng;

pub const MODELS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/models");
pub const SCENARIOS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");

/// Place labels and transition labels: an alphabet of eight symbols.
const PLACE_LABELS: [&str; 5] = ["p", "q", "r", "s", "u"];
const TRANSITION_LABELS: [&str; 3] = ["t", "v", "w"];

fn random_side(rng: &mut impl Rng, places: usize, transitions: usize) -> Vec<Gate> {
    let mut labels: Vec<&str> = PLACE_LABELS.iter().chain(&TRANSITION_LABELS).copied().collect();
    labels.shuffle(rng);
    let n = rng.gen_range(0..=6);
    labels
        .into_iter()
        .take(n)
        .map(|l| {
            if PLACE_LABELS.contains(&l) {
                Gate::place(l, format!("P{}", rng.gen_range(0..places)))
            } else {
                Gate::transition(l, format!("T{}", rng.gen_range(0..transitions)))
            }
        })
        .collect()
}

/// A net module with at most five places and five transitions and at most
/// six gates per side.
pub fn random_module(rng: &mut impl Rng, name: &str) -> Module {
    let sig = Signature::new().with_sort("X").with_variable("x", Sort::basic("X"));
    let places = rng.gen_range(1..=5);
    let transitions = rng.gen_range(1..=5);
    let mut schema = NetSchema::new(sig);
    for p in 0..places {
        schema = schema.with_place(format!("P{p}"), Sort::basic("X"));
    }
    for t in 0..transitions {
        let mut tr = Transition::new(format!("T{t}"));
        for p in 0..places {
            if rng.gen_bool(0.3) {
                tr = tr.input(&format!("P{p}"), Term::var("x"));
            }
            if rng.gen_bool(0.3) {
                tr = tr.output(&format!("P{p}"), Term::var("x"));
            }
        }
        schema = schema.with_transition(tr);
    }
    let left = random_side(rng, places, transitions);
    let right = random_side(rng, places, transitions);
    Module::net(name, schema, left, right).expect("generated module is consistent")
}

/// A net with one transition `t`, random arcs and guard, a random structure
/// and a random marking.
pub fn random_binding_instance(rng: &mut impl Rng) -> (Net, Marking) {
    let sig = Signature::new()
        .with_sort("A")
        .with_sort("B")
        .with_function("f", vec![Sort::basic("B")], Sort::set("A"))
        .with_function("g", vec![Sort::basic("A")], Sort::basic("B"))
        .with_variable("x", Sort::basic("A"))
        .with_variable("y", Sort::basic("A"))
        .with_variable("z", Sort::basic("B"))
        .with_variable("w", Sort::set("A"));
    let a_atoms: Vec<String> = (1..=rng.gen_range(1..=3)).map(|i| format!("a{i}")).collect();
    let b_atoms: Vec<String> = (1..=rng.gen_range(1..=2)).map(|i| format!("b{i}")).collect();
    let mut st = Structure::new()
        .with_carrier("A", a_atoms.iter().map(String::as_str))
        .with_carrier("B", b_atoms.iter().map(String::as_str));
    for b in &b_atoms {
        let subset: Vec<&str> = a_atoms
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .map(String::as_str)
            .collect();
        st = st.with_entry("f", vec![Value::atom(b, "B")], Value::atom_set("A", subset));
    }
    for a in &a_atoms {
        let b = b_atoms.choose(rng).expect("non-empty");
        st = st.with_entry("g", vec![Value::atom(a, "A")], Value::atom(b, "B"));
    }

    let v = Term::var;
    let f_z = || Term::apply("f", vec![v("z")]);
    let g = |t: Term| Term::apply("g", vec![t]);
    let inputs: Vec<(&str, InscriptionItem)> = vec![
        ("pA", InscriptionItem::Term(v("x"))),
        ("pA", InscriptionItem::Term(v("y"))),
        ("pB", InscriptionItem::Term(v("z"))),
        ("pB", InscriptionItem::Term(g(v("x")))),
        ("pAB", InscriptionItem::Term(Term::Tuple(vec![v("x"), v("z")]))),
        ("pAB", InscriptionItem::Term(Term::Tuple(vec![v("y"), g(v("y"))]))),
        ("pA", InscriptionItem::Term(f_z())),
        ("pA", InscriptionItem::Spread(f_z())),
        ("pS", InscriptionItem::Term(v("w"))),
        ("pS", InscriptionItem::Term(f_z())),
    ];
    let outputs: Vec<(&str, InscriptionItem)> = vec![
        ("pA", InscriptionItem::Term(v("x"))),
        ("pB", InscriptionItem::Term(v("z"))),
        ("pS", InscriptionItem::Term(v("w"))),
        ("pAB", InscriptionItem::Term(Term::Tuple(vec![v("y"), v("z")]))),
    ];
    let guards = [
        Term::truth(),
        Term::equal(v("x"), v("y")),
        Term::member(v("x"), f_z()),
        Term::equal(g(v("x")), v("z")),
        Term::subset(v("w"), f_z()),
        Term::And(vec![Term::member(v("x"), f_z()), Term::equal(g(v("y")), v("z"))]),
    ];
    let mut t = Transition::new("t").guard(guards.choose(rng).expect("non-empty").clone());
    for (p, item) in inputs {
        if rng.gen_bool(0.35) {
            t = t.input_item(p, item);
        }
    }
    for (p, item) in outputs {
        if rng.gen_bool(0.3) {
            t = t.output_item(p, item);
        }
    }
    let places = [
        ("pA", Sort::basic("A")),
        ("pB", Sort::basic("B")),
        ("pAB", Sort::tuple(["A", "B"])),
        ("pS", Sort::set("A")),
    ];
    let mut schema = NetSchema::new(sig);
    for (p, s) in &places {
        schema = schema.with_place(*p, s.clone());
    }
    let schema = schema.with_transition(t);
    let net = instantiate(&schema, &st).expect("generated net instantiates");

    let mut m = Marking::new();
    for (p, s) in &places {
        let values = net.structure.values_of(s);
        for _ in 0..rng.gen_range(0..=3) {
            m.add(p, values.choose(rng).expect("inhabited").clone(), 1);
        }
    }
    (net, m)
}

/// Every binding of the transition's variables over the full carrier
/// product that enables `t` at `m`.
pub fn brute_force_bindings(net: &Net, m: &Marking, t: &str) -> Vec<Binding> {
    let vars: Vec<String> = net.variables(t).expect("known transition").iter().cloned().collect();
    let mut bindings = vec![Binding::new()];
    for var in &vars {
        let sort = &net.schema.signature.variables[var];
        let values = net.structure.values_of(sort);
        bindings = bindings
            .into_iter()
            .flat_map(|b| values.iter().map(move |v| b.clone().with(var.clone(), v.clone())))
            .collect();
    }
    let mut out: Vec<Binding> = bindings
        .into_iter()
        .filter(|b| net.check_enabled(m, t, b).is_ok())
        .collect();
    out.sort();
    out
}

/// All linear extensions of the run's causal order.
pub fn all_orders(run: &ConcurrentRun) -> Vec<Vec<EventId>> {
    let preds = run.predecessors();
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    let mut done = BTreeSet::new();
    fn go(
        preds: &[BTreeSet<EventId>],
        prefix: &mut Vec<EventId>,
        done: &mut BTreeSet<EventId>,
        out: &mut Vec<Vec<EventId>>,
    ) {
        if prefix.len() == preds.len() {
            out.push(prefix.clone());
            return;
        }
        for e in 0..preds.len() {
            if !done.contains(&e) && preds[e].is_subset(done) {
                done.insert(e);
                prefix.push(e);
                go(preds, prefix, done, out);
                prefix.pop();
                done.remove(&e);
            }
        }
    }
    go(&preds, &mut prefix, &mut done, &mut out);
    out
}

pub fn case_net() -> Net {
    instantiate(&flatten(&build_system().composed).unwrap(), &default_instantiation()).unwrap()
}

pub fn request(c: &str, s: &str) -> WorkloadItem {
    WorkloadItem {
        transition: "clients.a".into(),
        binding: Binding::new()
            .with("c", Value::atom(c, "C"))
            .with("s", Value::atom(s, "S")),
    }
}

pub fn scenario(requests: &[(&str, &str)], max_steps: usize, seed: u64) -> Scenario {
    Scenario::new(requests.iter().map(|(c, s)| request(c, s)).collect(), max_steps, seed)
}

/// Runs of the case study with at most ten events.
pub fn small_runs(net: &Net) -> Vec<ConcurrentRun> {
    let mut runs = Vec::new();
    for c in ["c1", "c2", "c3"] {
        for s in ["s1", "s2"] {
            for seed in 0..3 {
                runs.push(simulate(net, &scenario(&[(c, s)], 100, seed)).unwrap().run);
            }
        }
    }
    for seed in 0..12 {
        for steps in [6, 8, 10] {
            let requests = [("c1", "s1"), ("c2", if seed % 2 == 0 { "s1" } else { "s2" })];
            runs.push(simulate(net, &scenario(&requests, steps, seed)).unwrap().run);
        }
    }
    runs.retain(|r| r.events.len() <= 10);
    runs
}
