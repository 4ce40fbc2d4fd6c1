//! Modules with left and right interfaces, and their composition.
//!
//! Composing `l • r` glues every gate of `l`'s right interface to the equally
//! labelled gate of `r`'s left interface. Glued gates become inner elements.
//! The unmatched right gates of `l` join the right interface and the
//! unmatched left gates of `r` join the left interface.
//!
//! Elements are identified by the set of qualified leaf names (`leaf.element`)
//! they merge, so the identity of an element does not depend on how a
//! composite was bracketed. [`canonical_form`] and [`flatten`] are both built
//! on these identities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::json;
use thiserror::Error;

use crate::algebra::{AlgebraError, Sort, Term};
pub use crate::schema::local_name;
use crate::schema::{Inscription, NetSchema, Place, Transition};

/// Set of qualified leaf element names merged into one element.
pub type ElementId = BTreeSet<String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GateKind {
    Place,
    Transition,
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateKind::Place => write!(f, "place"),
            GateKind::Transition => write!(f, "transition"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// What a gate stands for inside its module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GateElement {
    /// A place or transition of the module's own net.
    Inner(String),
    /// Gate of an opaque module with no inner to point into.
    SelfStanding,
    /// An element of a composite (or of an abstracted module).
    Qualified(ElementId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub label: String,
    pub kind: GateKind,
    pub element: GateElement,
}

impl Gate {
    pub fn place(label: impl Into<String>, element: impl Into<String>) -> Self {
        Gate {
            label: label.into(),
            kind: GateKind::Place,
            element: GateElement::Inner(element.into()),
        }
    }

    pub fn transition(label: impl Into<String>, element: impl Into<String>) -> Self {
        Gate {
            label: label.into(),
            kind: GateKind::Transition,
            element: GateElement::Inner(element.into()),
        }
    }

    pub fn opaque(label: impl Into<String>, kind: GateKind) -> Self {
        Gate {
            label: label.into(),
            kind,
            element: GateElement::SelfStanding,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Surface {
    pub left: Vec<Gate>,
    pub right: Vec<Gate>,
}

impl Surface {
    pub fn side(&self, side: Side) -> &[Gate] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn labels(&self, side: Side) -> Vec<&str> {
        self.side(side).iter().map(|g| g.label.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusedPair {
    pub label: String,
    pub kind: GateKind,
    /// Identity of the left operand's right gate when it was glued.
    pub left: ElementId,
    /// Identity of the right operand's left gate when it was glued.
    pub right: ElementId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GlueRecord {
    pub pairs: Vec<FusedPair>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Composite {
    pub left: Module,
    pub right: Module,
    pub glue: GlueRecord,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Inner {
    Opaque,
    Net(NetSchema),
    Composite(Box<Composite>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Module {
    pub name: String,
    pub surface: Surface,
    pub inner: Inner,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompositionError {
    #[error("gate {label}: {left} gate on the left operand, {right} gate on the right operand")]
    KindMismatch {
        label: String,
        left: GateKind,
        right: GateKind,
    },
    #[error("gate {label}: fused places have sorts {left} and {right}")]
    SortConflict { label: String, left: String, right: String },
    #[error("module {module}: label {label} occurs twice in the {side} interface")]
    DuplicateLabel { module: String, side: Side, label: String },
    #[error("module {module}: gate {label} refers to unknown {kind} {element}")]
    UnknownElement {
        module: String,
        label: String,
        kind: GateKind,
        element: String,
    },
    #[error("module {module}: {element} names both a place and a transition")]
    AmbiguousElement { module: String, element: String },
    #[error("module {module}: gate {label} is used with kinds place and transition")]
    InconsistentGate { module: String, label: String },
    #[error("module name {0} occurs more than once in a composition")]
    DuplicateLeaf(String),
    #[error("module name {0:?} may not contain '.' or '+'")]
    InvalidName(String),
    #[error("signatures disagree: {0}")]
    Signature(#[from] AlgebraError),
    #[error("cannot flatten: module {0} is opaque")]
    OpaqueLeaf(String),
}

fn check_name(name: &str) -> Result<(), CompositionError> {
    if name.is_empty() || name.contains('.') || name.contains('+') {
        Err(CompositionError::InvalidName(name.to_owned()))
    } else {
        Ok(())
    }
}

fn check_unique_labels(module: &str, surface: &Surface) -> Result<(), CompositionError> {
    for side in [Side::Left, Side::Right] {
        let mut seen = BTreeSet::new();
        for g in surface.side(side) {
            if !seen.insert(&g.label) {
                return Err(CompositionError::DuplicateLabel {
                    module: module.to_owned(),
                    side,
                    label: g.label.clone(),
                });
            }
        }
    }
    Ok(())
}

impl Module {
    /// A module whose inner is a net; gates must name its places and transitions.
    pub fn net(
        name: impl Into<String>,
        schema: NetSchema,
        left: Vec<Gate>,
        right: Vec<Gate>,
    ) -> Result<Module, CompositionError> {
        let name = name.into();
        check_name(&name)?;
        for p in &schema.places {
            if schema.transition(&p.name).is_some() {
                return Err(CompositionError::AmbiguousElement {
                    module: name,
                    element: p.name.clone(),
                });
            }
        }
        let surface = Surface { left, right };
        check_unique_labels(&name, &surface)?;
        for g in surface.left.iter().chain(&surface.right) {
            let GateElement::Inner(element) = &g.element else {
                return Err(CompositionError::UnknownElement {
                    module: name,
                    label: g.label.clone(),
                    kind: g.kind,
                    element: String::new(),
                });
            };
            let exists = match g.kind {
                GateKind::Place => schema.place(element).is_some(),
                GateKind::Transition => schema.transition(element).is_some(),
            };
            if !exists {
                return Err(CompositionError::UnknownElement {
                    module: name,
                    label: g.label.clone(),
                    kind: g.kind,
                    element: element.clone(),
                });
            }
        }
        Ok(Module {
            name,
            surface,
            inner: Inner::Net(schema),
        })
    }

    /// A module that is only a name and a surface.
    pub fn opaque(name: impl Into<String>, left: Vec<Gate>, right: Vec<Gate>) -> Result<Module, CompositionError> {
        let name = name.into();
        check_name(&name)?;
        let surface = Surface { left, right };
        check_unique_labels(&name, &surface)?;
        // a label on both sides denotes one self-standing element
        for l in &surface.left {
            if surface.right.iter().any(|r| r.label == l.label && r.kind != l.kind) {
                return Err(CompositionError::InconsistentGate {
                    module: name,
                    label: l.label.clone(),
                });
            }
        }
        Ok(Module {
            name,
            surface,
            inner: Inner::Opaque,
        })
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self.inner, Inner::Composite(_))
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Module> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Module>) {
        match &self.inner {
            Inner::Composite(c) => {
                c.left.collect_leaves(out);
                c.right.collect_leaves(out);
            }
            _ => out.push(self),
        }
    }

    /// Identity of the element a gate of this module stands for.
    pub fn gate_identity(&self, gate: &Gate) -> ElementId {
        match &gate.element {
            GateElement::Inner(e) => BTreeSet::from([format!("{}.{}", self.name, e)]),
            GateElement::SelfStanding => BTreeSet::from([format!("{}.{}", self.name, gate.label)]),
            GateElement::Qualified(id) => id.clone(),
        }
    }

    /// `(label, kind, identity)` per side, in interface order.
    pub fn surface_identities(&self) -> (Vec<CanonicalGate>, Vec<CanonicalGate>) {
        let conv = |gates: &[Gate]| {
            gates
                .iter()
                .map(|g| (g.label.clone(), g.kind, self.gate_identity(g)))
                .collect()
        };
        (conv(&self.surface.left), conv(&self.surface.right))
    }

    /// Sort of a qualified place `leaf.place` of some net leaf.
    fn qualified_place_sort(&self, qualified: &str) -> Option<Sort> {
        let (leaf, element) = qualified.split_once('.')?;
        self.leaves().into_iter().find_map(|m| match &m.inner {
            Inner::Net(s) if m.name == leaf => s.place(element).map(|p| p.sort.clone()),
            _ => None,
        })
    }

    fn element_sort(&self, id: &ElementId) -> Option<Sort> {
        id.iter().find_map(|q| self.qualified_place_sort(q))
    }

    /// Every glue pair in the composition tree.
    pub fn glue_pairs(&self) -> Vec<&FusedPair> {
        let mut out = Vec::new();
        fn go<'a>(m: &'a Module, out: &mut Vec<&'a FusedPair>) {
            if let Inner::Composite(c) = &m.inner {
                go(&c.left, out);
                go(&c.right, out);
                out.extend(&c.glue.pairs);
            }
        }
        go(self, &mut out);
        out
    }
}

/// Merges overlapping identity sets.
#[derive(Default)]
struct Classes(Vec<ElementId>);

impl Classes {
    fn union(&mut self, a: &ElementId, b: &ElementId) {
        let mut merged: ElementId = a.union(b).cloned().collect();
        let mut rest = Vec::with_capacity(self.0.len());
        for c in self.0.drain(..) {
            if c.is_disjoint(&merged) {
                rest.push(c);
            } else {
                merged.extend(c);
            }
        }
        rest.push(merged);
        self.0 = rest;
    }

    fn resolve(&self, id: &ElementId) -> ElementId {
        let mut out = id.clone();
        for c in &self.0 {
            if !c.is_disjoint(id) {
                out.extend(c.iter().cloned());
            }
        }
        out
    }
}

fn composite_name(m: &Module) -> String {
    if m.is_leaf() {
        m.name.clone()
    } else {
        format!("({})", m.name)
    }
}

/// `l • r`.
pub fn compose(l: &Module, r: &Module) -> Result<Module, CompositionError> {
    let mut leaf_names = BTreeSet::new();
    for leaf in l.leaves().into_iter().chain(r.leaves()) {
        if !leaf_names.insert(leaf.name.as_str()) {
            return Err(CompositionError::DuplicateLeaf(leaf.name.clone()));
        }
    }
    let mut sig = crate::algebra::Signature::new();
    for leaf in l.leaves().into_iter().chain(r.leaves()) {
        if let Inner::Net(s) = &leaf.inner {
            sig.merge(&s.signature)?;
        }
    }

    let mut pairs = Vec::new();
    let mut matched_left = BTreeSet::new();
    let mut matched_right = BTreeSet::new();
    for (i, lg) in l.surface.right.iter().enumerate() {
        let Some((j, rg)) = r.surface.left.iter().enumerate().find(|(_, g)| g.label == lg.label) else {
            continue;
        };
        if lg.kind != rg.kind {
            return Err(CompositionError::KindMismatch {
                label: lg.label.clone(),
                left: lg.kind,
                right: rg.kind,
            });
        }
        let lid = l.gate_identity(lg);
        let rid = r.gate_identity(rg);
        if lg.kind == GateKind::Place {
            if let (Some(ls), Some(rs)) = (l.element_sort(&lid), r.element_sort(&rid)) {
                if ls != rs {
                    return Err(CompositionError::SortConflict {
                        label: lg.label.clone(),
                        left: ls.to_string(),
                        right: rs.to_string(),
                    });
                }
            }
        }
        matched_left.insert(i);
        matched_right.insert(j);
        pairs.push(FusedPair {
            label: lg.label.clone(),
            kind: lg.kind,
            left: lid,
            right: rid,
        });
    }

    let mut classes = Classes::default();
    for p in &pairs {
        classes.union(&p.left, &p.right);
    }
    let lift = |m: &Module, g: &Gate| Gate {
        label: g.label.clone(),
        kind: g.kind,
        element: GateElement::Qualified(classes.resolve(&m.gate_identity(g))),
    };

    let left: Vec<Gate> = l
        .surface
        .left
        .iter()
        .map(|g| lift(l, g))
        .chain(
            r.surface
                .left
                .iter()
                .enumerate()
                .filter(|(j, _)| !matched_right.contains(j))
                .map(|(_, g)| lift(r, g)),
        )
        .collect();
    let right: Vec<Gate> = l
        .surface
        .right
        .iter()
        .enumerate()
        .filter(|(i, _)| !matched_left.contains(i))
        .map(|(_, g)| lift(l, g))
        .chain(r.surface.right.iter().map(|g| lift(r, g)))
        .collect();

    let name = format!("{}•{}", composite_name(l), composite_name(r));
    let surface = Surface { left, right };
    check_unique_labels(&name, &surface)?;
    Ok(Module {
        name,
        surface,
        inner: Inner::Composite(Box::new(Composite {
            left: l.clone(),
            right: r.clone(),
            glue: GlueRecord { pairs },
        })),
    })
}

/// Left-nested composition of a non-empty sequence.
pub fn compose_all<'a>(modules: impl IntoIterator<Item = &'a Module>) -> Result<Option<Module>, CompositionError> {
    let mut acc: Option<Module> = None;
    for m in modules {
        acc = Some(match acc {
            None => m.clone(),
            Some(a) => compose(&a, m)?,
        });
    }
    Ok(acc)
}

/// `[m]`: keeps name and surface, deletes the inner.
pub fn abstract_module(m: &Module) -> Module {
    let lift = |g: &Gate| Gate {
        label: g.label.clone(),
        kind: g.kind,
        element: match &g.element {
            GateElement::SelfStanding if matches!(m.inner, Inner::Opaque) => GateElement::SelfStanding,
            _ => GateElement::Qualified(m.gate_identity(g)),
        },
    };
    Module {
        name: m.name.clone(),
        surface: Surface {
            left: m.surface.left.iter().map(lift).collect(),
            right: m.surface.right.iter().map(lift).collect(),
        },
        inner: Inner::Opaque,
    }
}

/// Gate as seen in a canonical form.
pub type CanonicalGate = (String, GateKind, ElementId);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CanonicalLeaf {
    Opaque {
        left: Vec<CanonicalGate>,
        right: Vec<CanonicalGate>,
    },
    Net {
        schema: NetSchema,
        left: Vec<CanonicalGate>,
        right: Vec<CanonicalGate>,
    },
}

/// Bracketing-independent description of a module: its leaves, the merged
/// element classes, and its outer surface sorted by label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalForm {
    pub leaves: BTreeMap<String, CanonicalLeaf>,
    pub merged: BTreeSet<ElementId>,
    pub left: Vec<CanonicalGate>,
    pub right: Vec<CanonicalGate>,
}

fn sorted_gates(mut gates: Vec<CanonicalGate>) -> Vec<CanonicalGate> {
    gates.sort();
    gates
}

fn merged_classes(m: &Module) -> Classes {
    let mut classes = Classes::default();
    for p in m.glue_pairs() {
        classes.union(&p.left, &p.right);
    }
    classes
}

pub fn canonical_form(m: &Module) -> CanonicalForm {
    let classes = merged_classes(m);
    let mut leaves = BTreeMap::new();
    for leaf in m.leaves() {
        let (left, right) = leaf.surface_identities();
        let (left, right) = (sorted_gates(left), sorted_gates(right));
        let canon = match &leaf.inner {
            Inner::Net(s) => CanonicalLeaf::Net {
                schema: s.normalized(),
                left,
                right,
            },
            _ => CanonicalLeaf::Opaque { left, right },
        };
        leaves.insert(leaf.name.clone(), canon);
    }
    let (left, right) = m.surface_identities();
    let resolve = |gates: Vec<CanonicalGate>| {
        sorted_gates(
            gates
                .into_iter()
                .map(|(l, k, id)| (l, k, classes.resolve(&id)))
                .collect(),
        )
    };
    CanonicalForm {
        leaves,
        merged: classes.0.iter().cloned().collect(),
        left: resolve(left),
        right: resolve(right),
    }
}

/// Equality up to bracketing of composites.
pub fn canonical_equal(a: &Module, b: &Module) -> bool {
    canonical_form(a) == canonical_form(b)
}

/// Name of a merged element in a flattened net.
pub fn element_name(id: &ElementId) -> String {
    id.iter().cloned().collect::<Vec<_>>().join("+")
}

/// The single net a composite denotes. Leaves are returned unchanged.
pub fn flatten(m: &Module) -> Result<NetSchema, CompositionError> {
    match &m.inner {
        Inner::Net(s) => return Ok(s.clone()),
        Inner::Opaque => return Err(CompositionError::OpaqueLeaf(m.name.clone())),
        Inner::Composite(_) => {}
    }
    let mut leaves: Vec<(&str, &NetSchema)> = Vec::new();
    for leaf in m.leaves() {
        match &leaf.inner {
            Inner::Net(s) => leaves.push((&leaf.name, s)),
            _ => return Err(CompositionError::OpaqueLeaf(leaf.name.clone())),
        }
    }
    leaves.sort_by(|a, b| a.0.cmp(b.0));

    let classes = merged_classes(m);
    let rename = |leaf: &str, element: &str| -> String {
        let q = BTreeSet::from([format!("{leaf}.{element}")]);
        element_name(&classes.resolve(&q))
    };

    let mut sig = crate::algebra::Signature::new();
    for (_, s) in &leaves {
        sig.merge(&s.signature)?;
    }

    let mut places: BTreeMap<String, Place> = BTreeMap::new();
    let mut initial: BTreeMap<String, Inscription> = BTreeMap::new();
    let mut transitions: BTreeMap<String, (Vec<Term>, Transition)> = BTreeMap::new();
    for (leaf, s) in &leaves {
        for p in &s.places {
            let name = rename(leaf, &p.name);
            if let Some(existing) = places.get(&name) {
                if existing.sort != p.sort {
                    return Err(CompositionError::SortConflict {
                        label: name,
                        left: existing.sort.to_string(),
                        right: p.sort.to_string(),
                    });
                }
            } else {
                places.insert(
                    name.clone(),
                    Place {
                        name,
                        sort: p.sort.clone(),
                    },
                );
            }
        }
        for (pname, items) in &s.initial {
            initial
                .entry(rename(leaf, pname))
                .or_default()
                .extend(items.iter().cloned());
        }
        for t in &s.transitions {
            let name = rename(leaf, &t.name);
            let (guards, merged) = transitions
                .entry(name.clone())
                .or_insert_with(|| (Vec::new(), Transition::new(name)));
            if !t.guard.is_truth() {
                guards.push(t.guard.clone());
            }
            for (pname, items) in &t.inputs {
                merged
                    .inputs
                    .entry(rename(leaf, pname))
                    .or_default()
                    .extend(items.iter().cloned());
            }
            for (pname, items) in &t.outputs {
                merged
                    .outputs
                    .entry(rename(leaf, pname))
                    .or_default()
                    .extend(items.iter().cloned());
            }
        }
    }

    let transitions = transitions
        .into_values()
        .map(|(mut guards, mut t)| {
            t.guard = match guards.len() {
                0 => Term::truth(),
                1 => guards.pop().expect("one guard"),
                _ => Term::And(guards),
            };
            t
        })
        .collect();
    Ok(NetSchema {
        signature: sig,
        places: places.into_values().collect(),
        transitions,
        initial,
    }
    .normalized())
}

/// A link an adapter module establishes from a left label to a right label.
#[derive(Clone, Debug)]
pub struct AdapterLink {
    pub from: String,
    pub to: String,
    /// `Some(sort)` for a place link, `None` for a transition link.
    pub sort: Option<Sort>,
}

/// A pure relabelling module: one element per link, exposed under `from` on
/// the left and under `to` on the right. Placed between two modules it glues
/// gates whose labels differ.
pub fn adapter(
    name: impl Into<String>,
    signature: crate::algebra::Signature,
    links: &[AdapterLink],
) -> Result<Module, CompositionError> {
    let mut schema = NetSchema::new(signature);
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, link) in links.iter().enumerate() {
        let element = format!("link{i}");
        match &link.sort {
            Some(sort) => {
                schema = schema.with_place(element.clone(), sort.clone());
                left.push(Gate::place(link.from.clone(), element.clone()));
                right.push(Gate::place(link.to.clone(), element));
            }
            None => {
                schema = schema.with_transition(Transition::new(element.clone()));
                left.push(Gate::transition(link.from.clone(), element.clone()));
                right.push(Gate::transition(link.to.clone(), element));
            }
        }
    }
    Module::net(name, schema, left, right)
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\\\""))
}

/// Graphviz rendering: one cluster per module, gates as border nodes, glued
/// gate pairs joined by dashed edges.
pub fn module_to_dot(m: &Module) -> String {
    let mut out = String::from("digraph module {\n  rankdir=LR;\n  compound=true;\n  node [fontsize=10];\n");
    let mut counter = 0usize;
    write_cluster(m, &mut out, &mut counter, 1);
    for p in m.glue_pairs() {
        out.push_str(&format!(
            "  {} -> {} [style=dashed, arrowhead=none, label={}];\n",
            dot_id(&format!("gate:R:{}", element_name(&p.left))),
            dot_id(&format!("gate:L:{}", element_name(&p.right))),
            dot_id(&p.label)
        ));
    }
    out.push_str("}\n");
    out
}

fn write_cluster(m: &Module, out: &mut String, counter: &mut usize, depth: usize) {
    let pad = "  ".repeat(depth);
    *counter += 1;
    out.push_str(&format!("{pad}subgraph cluster_{} {{\n", counter));
    out.push_str(&format!("{pad}  label={};\n{pad}  style=rounded;\n", dot_id(&m.name)));
    if let Inner::Composite(c) = &m.inner {
        write_cluster(&c.left, out, counter, depth + 1);
        write_cluster(&c.right, out, counter, depth + 1);
    } else {
        for (tag, side) in [("L", Side::Left), ("R", Side::Right)] {
            for g in m.surface.side(side) {
                let shape = match g.kind {
                    GateKind::Place => "circle",
                    GateKind::Transition => "box",
                };
                out.push_str(&format!(
                    "{pad}  {} [label={}, shape={shape}];\n",
                    dot_id(&format!("gate:{tag}:{}", element_name(&m.gate_identity(g)))),
                    dot_id(&g.label)
                ));
            }
        }
        if m.surface.left.is_empty() && m.surface.right.is_empty() {
            out.push_str(&format!(
                "{pad}  {} [label=\"\", shape=point];\n",
                dot_id(&format!("anchor:{}", m.name))
            ));
        }
    }
    out.push_str(&format!("{pad}}}\n"));
}

fn gate_json(m: &Module, g: &Gate) -> serde_json::Value {
    json!({
        "label": g.label,
        "kind": g.kind.to_string(),
        "element": element_name(&m.gate_identity(g)),
    })
}

/// Module tree with surfaces and glue records.
pub fn module_to_json(m: &Module) -> serde_json::Value {
    let inner = match &m.inner {
        Inner::Opaque => json!({"kind": "opaque"}),
        Inner::Net(s) => json!({
            "kind": "net",
            "places": s.places.iter().map(|p| json!({"name": p.name, "sort": p.sort.to_string()})).collect::<Vec<_>>(),
            "transitions": s.transitions.iter().map(|t| t.name.clone()).collect::<Vec<_>>(),
        }),
        Inner::Composite(c) => json!({
            "kind": "composite",
            "left": module_to_json(&c.left),
            "right": module_to_json(&c.right),
            "glue": c.glue.pairs.iter().map(|p| json!({
                "label": p.label,
                "kind": p.kind.to_string(),
                "left": element_name(&p.left),
                "right": element_name(&p.right),
            })).collect::<Vec<_>>(),
        }),
    };
    json!({
        "name": m.name,
        "left": m.surface.left.iter().map(|g| gate_json(m, g)).collect::<Vec<_>>(),
        "right": m.surface.right.iter().map(|g| gate_json(m, g)).collect::<Vec<_>>(),
        "inner": inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Signature;

    fn sig() -> Signature {
        Signature::new().with_sort("X").with_sort("Y")
    }

    /// A net leaf with one place per place label and one transition per
    /// transition label (labels in upper case are places).
    fn leaf(name: &str, left: &[&str], right: &[&str]) -> Module {
        let mut schema = NetSchema::new(sig());
        let mut elems = BTreeSet::new();
        elems.extend(left.iter().chain(right).copied());
        for e in &elems {
            if e.chars().next().unwrap().is_uppercase() {
                schema = schema.with_place(*e, Sort::basic("X"));
            } else {
                schema = schema.with_transition(Transition::new(*e));
            }
        }
        let gate = |l: &&str| {
            if l.chars().next().unwrap().is_uppercase() {
                Gate::place(*l, *l)
            } else {
                Gate::transition(*l, *l)
            }
        };
        Module::net(
            name,
            schema,
            left.iter().map(gate).collect(),
            right.iter().map(gate).collect(),
        )
        .unwrap()
    }

    #[test]
    fn clients_admin_shape() {
        let l = leaf("clients", &[], &["C", "D", "E", "F", "b"]);
        let r = leaf("admin", &["b", "C", "D"], &["H", "g"]);
        let m = compose(&l, &r).unwrap();
        let Inner::Composite(c) = &m.inner else { panic!() };
        let fused: BTreeSet<&str> = c.glue.pairs.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(fused, BTreeSet::from(["C", "D", "b"]));
        assert_eq!(m.surface.labels(Side::Right), ["E", "F", "H", "g"]);
        assert!(m.surface.left.is_empty());
    }

    #[test]
    fn disjoint_labels_concatenate() {
        let l = leaf("l", &["A"], &["B"]);
        let r = leaf("r", &["C"], &["D"]);
        let m = compose(&l, &r).unwrap();
        assert_eq!(m.surface.labels(Side::Left), ["A", "C"]);
        assert_eq!(m.surface.labels(Side::Right), ["B", "D"]);
        let flat = flatten(&m).unwrap();
        assert_eq!(flat.places.len(), 4);
        assert!(flat.place("l.A").is_some());
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let l = Module::opaque("l", vec![], vec![Gate::opaque("X", GateKind::Place)]).unwrap();
        let r = Module::opaque("r", vec![Gate::opaque("X", GateKind::Transition)], vec![]).unwrap();
        assert!(matches!(compose(&l, &r), Err(CompositionError::KindMismatch { .. })));
    }

    #[test]
    fn sort_conflict_is_an_error() {
        let l = Module::net(
            "l",
            NetSchema::new(sig()).with_place("P", Sort::basic("X")),
            vec![],
            vec![Gate::place("P", "P")],
        )
        .unwrap();
        let r = Module::net(
            "r",
            NetSchema::new(sig()).with_place("P", Sort::basic("Y")),
            vec![Gate::place("P", "P")],
            vec![],
        )
        .unwrap();
        assert!(matches!(compose(&l, &r), Err(CompositionError::SortConflict { .. })));
    }

    #[test]
    fn duplicate_label_in_result_is_an_error() {
        let l = leaf("l", &[], &["A"]);
        let r = leaf("r", &[], &["A"]);
        assert!(matches!(compose(&l, &r), Err(CompositionError::DuplicateLabel { .. })));
        assert!(matches!(
            Module::opaque(
                "m",
                vec![Gate::opaque("A", GateKind::Place), Gate::opaque("A", GateKind::Place)],
                vec![]
            ),
            Err(CompositionError::DuplicateLabel { .. })
        ));
    }

    #[test]
    fn gates_must_name_existing_elements() {
        let schema = NetSchema::new(sig()).with_place("P", Sort::basic("X"));
        assert!(Module::net("m", schema.clone(), vec![Gate::transition("P", "P")], vec![]).is_err());
        assert!(Module::net("m", schema.clone(), vec![Gate::place("Q", "Q")], vec![]).is_err());
        assert!(Module::net("m", schema, vec![Gate::place("Q", "P")], vec![]).is_ok());
        assert!(Module::opaque("a.b", vec![], vec![]).is_err());
    }

    #[test]
    fn reused_leaf_name_is_an_error() {
        let a = leaf("a", &[], &["X"]);
        assert!(matches!(compose(&a, &a), Err(CompositionError::DuplicateLeaf(_))));
    }

    #[test]
    fn abstraction() {
        let m = leaf("clients", &["A"], &["C", "b"]);
        let a = abstract_module(&m);
        assert_eq!(a.inner, Inner::Opaque);
        assert_eq!(a.name, m.name);
        assert_eq!(a.surface_identities(), m.surface_identities());
        assert_eq!(abstract_module(&a), a);
        assert!(matches!(flatten(&a), Err(CompositionError::OpaqueLeaf(_))));
    }

    #[test]
    fn associativity_small() {
        let a = leaf("a", &["P"], &["Q", "t"]);
        let b = leaf("b", &["Q", "R"], &["S"]);
        let c = leaf("c", &["S", "t"], &["P"]);
        let ab_c = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let a_bc = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        assert!(canonical_equal(&ab_c, &a_bc));
        assert_eq!(flatten(&ab_c).unwrap(), flatten(&a_bc).unwrap());
        assert!(canonical_equal(&a, &a));
        assert!(!canonical_equal(&a, &leaf("a", &["P"], &["Q", "u"])));
    }

    #[test]
    fn pass_through_element_keeps_merged_identity() {
        // b exposes the same place on both sides
        let a = leaf("a", &[], &["X"]);
        let b = leaf("b", &["X"], &["X"]);
        let m = compose(&a, &b).unwrap();
        let (_, right) = m.surface_identities();
        assert_eq!(right[0].2, BTreeSet::from(["a.X".to_string(), "b.X".to_string()]));
        let flat = flatten(&m).unwrap();
        assert_eq!(flat.places.len(), 1);
        assert_eq!(flat.places[0].name, "a.X+b.X");
    }

    #[test]
    fn transition_fusion_conjoins_guards_and_unions_arcs() {
        let s = Signature::new().with_sort("X").with_variable("x", Sort::basic("X"));
        let la = NetSchema::new(s.clone())
            .with_place("P", Sort::basic("X"))
            .with_transition(
                Transition::new("t")
                    .input("P", Term::var("x"))
                    .guard(Term::equal(Term::var("x"), Term::var("x"))),
            );
        let lb = NetSchema::new(s).with_place("Q", Sort::basic("X")).with_transition(
            Transition::new("t")
                .output("Q", Term::var("x"))
                .guard(Term::equal(Term::var("x"), Term::var("x"))),
        );
        let a = Module::net("a", la, vec![], vec![Gate::transition("t", "t")]).unwrap();
        let b = Module::net("b", lb, vec![Gate::transition("t", "t")], vec![]).unwrap();
        let flat = flatten(&compose(&a, &b).unwrap()).unwrap();
        let t = flat.transition("a.t+b.t").unwrap();
        assert!(matches!(&t.guard, Term::And(g) if g.len() == 2));
        assert!(t.inputs.contains_key("a.P"));
        assert!(t.outputs.contains_key("b.Q"));
        assert_eq!(local_name(&t.name), "t");
    }

    #[test]
    fn adapter_glues_differently_labelled_gates() {
        let r = leaf("r", &[], &["X", "go"]);
        let s = leaf("s", &["Y", "run"], &[]);
        let ad = adapter(
            "ad",
            sig(),
            &[
                AdapterLink {
                    from: "X".into(),
                    to: "Y".into(),
                    sort: Some(Sort::basic("X")),
                },
                AdapterLink {
                    from: "go".into(),
                    to: "run".into(),
                    sort: None,
                },
            ],
        )
        .unwrap();
        let m = compose(&compose(&r, &ad).unwrap(), &s).unwrap();
        assert!(m.surface.left.is_empty() && m.surface.right.is_empty());
        let flat = flatten(&m).unwrap();
        assert!(flat.place("ad.link0+r.X+s.Y").is_some());
        assert!(flat.transition("ad.link1+r.go+s.run").is_some());
    }

    #[test]
    fn dot_and_json_exports() {
        let m = compose(&leaf("l", &[], &["A"]), &leaf("r", &["A"], &[])).unwrap();
        let dot = module_to_dot(&m);
        assert!(dot.starts_with("digraph module"));
        assert!(dot.contains("cluster_"));
        assert!(dot.contains("style=dashed"));
        let js = module_to_json(&m);
        assert_eq!(js["inner"]["glue"][0]["label"], "A");
    }
}
