//! The service-system case study: clients, admin, consulting rooms and
//! experts, glued as `clients • admin • rooms • experts`.
//!
//! Admins, experts and rooms are scarce resources. The admin keeps a digital
//! twin of each expert (on `R` when unengaged, on `T` otherwise) and of each
//! empty room (on `S`). A client whose service has no unengaged expert is
//! turned away by `k`; a client waiting for a room just waits.

use crate::algebra::{Signature, Sort, Structure, Term, Value};
use crate::composition::{compose_all, CompositionError, Gate, Module};
use crate::explore::{Invariant, PlaceCount};
use crate::schema::{InscriptionItem, NetSchema, Transition};

fn v(name: &str) -> Term {
    Term::var(name)
}

fn tup(names: &[&str]) -> Term {
    Term::tuple_of_vars(names.iter().copied())
}

fn f_of_s() -> Term {
    Term::apply("f", vec![v("s")])
}

pub fn signature() -> Signature {
    Signature::new()
        .with_sort("C")
        .with_sort("E")
        .with_sort("R")
        .with_sort("A")
        .with_sort("S")
        .with_constant("EX", Sort::set("E"))
        .with_constant("RO", Sort::set("R"))
        .with_constant("AD", Sort::set("A"))
        .with_function("f", vec![Sort::basic("S")], Sort::set("E"))
        .with_variable("c", Sort::basic("C"))
        .with_variable("e", Sort::basic("E"))
        .with_variable("r", Sort::basic("R"))
        .with_variable("a", Sort::basic("A"))
        .with_variable("s", Sort::basic("S"))
}

pub fn clients_schema() -> NetSchema {
    NetSchema::new(signature())
        .with_place("A", Sort::tuple(["C", "S"]))
        .with_place("B", Sort::tuple(["C", "S"]))
        .with_place("C", Sort::basic("C"))
        .with_place("D", Sort::tuple(["C", "R"]))
        .with_place("E", Sort::tuple(["C", "R"]))
        .with_place("F", Sort::tuple(["C", "R"]))
        .with_place("Exited", Sort::basic("C"))
        .with_transition(Transition::new("a").output("A", tup(&["c", "s"])))
        .with_transition(
            Transition::new("b")
                .input("A", tup(&["c", "s"]))
                .output("B", tup(&["c", "s"])),
        )
        .with_transition(
            Transition::new("c")
                .input("B", tup(&["c", "s"]))
                .input("C", v("c"))
                .output("Exited", v("c")),
        )
        .with_transition(
            Transition::new("d")
                .input("B", tup(&["c", "s"]))
                .input("D", tup(&["c", "r"]))
                .output("E", tup(&["c", "r"])),
        )
        .with_transition(
            Transition::new("e")
                .input("F", tup(&["c", "r"]))
                .output("Exited", v("c")),
        )
}

pub fn admin_schema() -> NetSchema {
    NetSchema::new(signature())
        .with_place("P", Sort::basic("A"))
        .with_place("Q", Sort::tuple(["A", "C", "S"]))
        .with_place("R", Sort::basic("E"))
        .with_place("S", Sort::basic("R"))
        .with_place("T", Sort::basic("E"))
        .with_place("C", Sort::basic("C"))
        .with_place("D", Sort::tuple(["C", "R"]))
        .with_place("H", Sort::tuple(["E", "R"]))
        .with_initial("P", InscriptionItem::Spread(Term::constant("AD")))
        .with_initial("R", InscriptionItem::Spread(Term::constant("EX")))
        .with_initial("S", InscriptionItem::Spread(Term::constant("RO")))
        .with_transition(
            Transition::new("b")
                .input("P", v("a"))
                .output("Q", tup(&["a", "c", "s"])),
        )
        .with_transition(
            Transition::new("j")
                .guard(Term::member(v("e"), f_of_s()))
                .input("Q", tup(&["a", "c", "s"]))
                .input("R", v("e"))
                .input("S", v("r"))
                .output("P", v("a"))
                .output("D", tup(&["c", "r"]))
                .output("H", tup(&["e", "r"]))
                .output("T", v("e")),
        )
        .with_transition(
            Transition::new("k")
                .input("Q", tup(&["a", "c", "s"]))
                .input("T", f_of_s())
                .output("P", v("a"))
                .output("C", v("c"))
                .output("T", f_of_s()),
        )
        .with_transition(
            Transition::new("g")
                .input("T", v("e"))
                .output("R", v("e"))
                .output("S", v("r")),
        )
}

pub fn rooms_schema() -> NetSchema {
    NetSchema::new(signature())
        .with_place("E", Sort::tuple(["C", "R"]))
        .with_place("F", Sort::tuple(["C", "R"]))
        .with_place("I", Sort::tuple(["E", "R"]))
        .with_place("J", Sort::tuple(["E", "R"]))
        .with_place("InConsult", Sort::tuple(["C", "E", "R"]))
        .with_transition(
            Transition::new("h")
                .input("E", tup(&["c", "r"]))
                .input("I", tup(&["e", "r"]))
                .output("InConsult", tup(&["c", "e", "r"])),
        )
        .with_transition(
            Transition::new("i")
                .input("InConsult", tup(&["c", "e", "r"]))
                .output("F", tup(&["c", "r"]))
                .output("J", tup(&["e", "r"])),
        )
}

pub fn experts_schema() -> NetSchema {
    NetSchema::new(signature())
        .with_place("G", Sort::basic("E"))
        .with_place("H", Sort::tuple(["E", "R"]))
        .with_place("I", Sort::tuple(["E", "R"]))
        .with_place("J", Sort::tuple(["E", "R"]))
        .with_initial("G", InscriptionItem::Spread(Term::constant("EX")))
        .with_transition(
            Transition::new("f")
                .input("G", v("e"))
                .input("H", tup(&["e", "r"]))
                .output("I", tup(&["e", "r"])),
        )
        .with_transition(Transition::new("g").input("J", tup(&["e", "r"])).output("G", v("e")))
}

fn must(m: Result<Module, CompositionError>) -> Module {
    m.expect("case-study module is consistent")
}

pub fn clients() -> Module {
    must(Module::net(
        "clients",
        clients_schema(),
        vec![],
        vec![
            Gate::place("C", "C"),
            Gate::place("D", "D"),
            Gate::place("E", "E"),
            Gate::place("F", "F"),
            Gate::transition("b", "b"),
        ],
    ))
}

pub fn admin() -> Module {
    must(Module::net(
        "admin",
        admin_schema(),
        vec![Gate::transition("b", "b"), Gate::place("C", "C"), Gate::place("D", "D")],
        vec![Gate::place("H", "H"), Gate::transition("g", "g")],
    ))
}

pub fn rooms() -> Module {
    must(Module::net(
        "rooms",
        rooms_schema(),
        vec![Gate::place("E", "E"), Gate::place("F", "F")],
        vec![Gate::place("I", "I"), Gate::place("J", "J")],
    ))
}

pub fn experts() -> Module {
    must(Module::net(
        "experts",
        experts_schema(),
        vec![
            Gate::place("H", "H"),
            Gate::place("I", "I"),
            Gate::place("J", "J"),
            Gate::transition("g", "g"),
        ],
        vec![],
    ))
}

/// C = {c1,c2,c3}, E = {e1,e2}, R = {r1}, A = {a1}, S = {s1,s2};
/// f(s1) = {e1}, f(s2) = {e1,e2}.
pub fn default_instantiation() -> Structure {
    Structure::new()
        .with_carrier("C", ["c1", "c2", "c3"])
        .with_carrier("E", ["e1", "e2"])
        .with_carrier("R", ["r1"])
        .with_carrier("A", ["a1"])
        .with_carrier("S", ["s1", "s2"])
        .with_constant("EX", Value::atom_set("E", ["e1", "e2"]))
        .with_constant("RO", Value::atom_set("R", ["r1"]))
        .with_constant("AD", Value::atom_set("A", ["a1"]))
        .with_entry("f", vec![Value::atom("s1", "S")], Value::atom_set("E", ["e1"]))
        .with_entry("f", vec![Value::atom("s2", "S")], Value::atom_set("E", ["e1", "e2"]))
}

fn count(place: &str, component: Option<usize>) -> PlaceCount {
    PlaceCount {
        place: place.to_owned(),
        component,
    }
}

/// Declared invariants of the composed system, over flattened place names.
/// Token typing is checked by exploration in any case.
pub fn invariants() -> Vec<Invariant> {
    vec![
        Invariant::AtomCount {
            name: "twin_discipline".into(),
            over: Term::constant("EX"),
            places: vec![count("admin.R", None), count("admin.T", None)],
            equals: 1,
        },
        // H carries the message to an expert who is still on G
        Invariant::AtomCount {
            name: "expert_conservation".into(),
            over: Term::constant("EX"),
            places: vec![
                count("experts.G", None),
                count("experts.I", Some(0)),
                count("rooms.InConsult", Some(1)),
                count("experts.J", Some(0)),
            ],
            equals: 1,
        },
        // the room travels with the expert from j to g; D, E, F carry the
        // client's copy of the room name
        Invariant::AtomCount {
            name: "room_discipline".into(),
            over: Term::constant("RO"),
            places: vec![
                count("admin.S", None),
                count("admin.H", Some(1)),
                count("experts.I", Some(1)),
                count("rooms.InConsult", Some(2)),
                count("experts.J", Some(1)),
            ],
            equals: 1,
        },
        Invariant::AbsentWhenFiring {
            name: "rejection_soundness".into(),
            transition: "admin.k".into(),
            set: f_of_s(),
            place: "admin.R".into(),
        },
    ]
}

/// The four modules, their composition and the default instantiation.
#[derive(Clone, Debug)]
pub struct ServiceSystem {
    pub signature: Signature,
    pub clients: Module,
    pub admin: Module,
    pub rooms: Module,
    pub experts: Module,
    pub composed: Module,
    pub default_structure: Structure,
    pub invariants: Vec<Invariant>,
}

pub fn build_system() -> ServiceSystem {
    let (c, a, r, e) = (clients(), admin(), rooms(), experts());
    let composed = compose_all([&c, &a, &r, &e])
        .expect("case-study surfaces glue")
        .expect("four modules");
    ServiceSystem {
        signature: signature(),
        clients: c,
        admin: a,
        rooms: r,
        experts: e,
        composed,
        default_structure: default_instantiation(),
        invariants: invariants(),
    }
}
