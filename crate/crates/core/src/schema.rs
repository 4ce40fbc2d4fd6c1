//! High-level Petri net schemata, their instantiation and the token game.
//!
//! Arcs carry multisets of inscription items. A term item contributes one
//! token, a spread item (`elm(t)`) one token per element of the evaluated set.
//! A term item whose value is a set while the place holds basic tokens is
//! spread implicitly; this is how a loop arc like `T: f(s)` demands the whole
//! set `f(s)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::json;
use thiserror::Error;

use crate::algebra::{
    check_binding, validate_structure, AlgebraError, Binding, Signature, Sort, Structure, Term, ValidationReport, Value,
};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InscriptionItem {
    Term(Term),
    /// `elm(t)`: every element of the set `t` as an individual token.
    Spread(Term),
}

impl InscriptionItem {
    pub fn term(&self) -> &Term {
        match self {
            InscriptionItem::Term(t) | InscriptionItem::Spread(t) => t,
        }
    }
}

impl fmt::Display for InscriptionItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InscriptionItem::Term(t) => write!(f, "{t}"),
            InscriptionItem::Spread(t) => write!(f, "elm({t})"),
        }
    }
}

pub type Inscription = Vec<InscriptionItem>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Place {
    pub name: String,
    pub sort: Sort,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub name: String,
    pub guard: Term,
    pub inputs: BTreeMap<String, Inscription>,
    pub outputs: BTreeMap<String, Inscription>,
}

impl Transition {
    pub fn new(name: impl Into<String>) -> Self {
        Transition {
            name: name.into(),
            guard: Term::truth(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn guard(mut self, guard: Term) -> Self {
        self.guard = guard;
        self
    }

    pub fn input(self, place: &str, t: Term) -> Self {
        self.input_item(place, InscriptionItem::Term(t))
    }

    pub fn input_item(mut self, place: &str, item: InscriptionItem) -> Self {
        self.inputs.entry(place.to_owned()).or_default().push(item);
        self
    }

    pub fn output(self, place: &str, t: Term) -> Self {
        self.output_item(place, InscriptionItem::Term(t))
    }

    pub fn output_item(mut self, place: &str, item: InscriptionItem) -> Self {
        self.outputs.entry(place.to_owned()).or_default().push(item);
        self
    }

    /// Transitions without input arcs can fire at any time.
    pub fn is_spontaneous(&self) -> bool {
        self.inputs.values().all(Vec::is_empty)
    }

    /// Variables occurring in the guard or any inscription.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.guard.collect_vars(&mut out);
        for items in self.inputs.values().chain(self.outputs.values()) {
            for item in items {
                item.term().collect_vars(&mut out);
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetSchema {
    pub signature: Signature,
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub initial: BTreeMap<String, Inscription>,
}

impl NetSchema {
    pub fn new(signature: Signature) -> Self {
        NetSchema {
            signature,
            ..Default::default()
        }
    }

    pub fn with_place(mut self, name: impl Into<String>, sort: Sort) -> Self {
        self.places.push(Place {
            name: name.into(),
            sort,
        });
        self
    }

    pub fn with_transition(mut self, t: Transition) -> Self {
        self.transitions.push(t);
        self
    }

    pub fn with_initial(mut self, place: &str, item: InscriptionItem) -> Self {
        self.initial.entry(place.to_owned()).or_default().push(item);
        self
    }

    pub fn place(&self, name: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.name == name)
    }

    pub fn transition(&self, name: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.name == name)
    }

    /// Same schema with places and transitions sorted by name and every
    /// inscription multiset sorted, so structural equality ignores order.
    pub fn normalized(&self) -> NetSchema {
        let mut out = self.clone();
        out.places.sort_by(|a, b| a.name.cmp(&b.name));
        out.transitions.sort_by(|a, b| a.name.cmp(&b.name));
        for t in &mut out.transitions {
            t.inputs.retain(|_, v| !v.is_empty());
            t.outputs.retain(|_, v| !v.is_empty());
            t.inputs.values_mut().for_each(|v| v.sort());
            t.outputs.values_mut().for_each(|v| v.sort());
        }
        out.initial.retain(|_, v| !v.is_empty());
        out.initial.values_mut().for_each(|v| v.sort());
        out
    }
}

/// Checks place/transition naming and the sorting of guards and inscriptions.
pub fn check_well_formed(schema: &NetSchema) -> ValidationReport {
    let sig = &schema.signature;
    let mut report = sig.validate();

    let mut names = BTreeSet::new();
    for p in &schema.places {
        if !names.insert(&p.name) {
            report.push(format!("place {}", p.name), "duplicate place name");
        }
        let mut refs = BTreeSet::new();
        p.sort.referenced(&mut refs);
        for r in refs.difference(&sig.sorts) {
            report.push(format!("place {}", p.name), format!("undeclared sort {r}"));
        }
    }
    let mut tnames = BTreeSet::new();
    for t in &schema.transitions {
        let subject = format!("transition {}", t.name);
        if !tnames.insert(&t.name) {
            report.push(subject.clone(), "duplicate transition name");
        }
        match t.guard.sort_of(sig) {
            Ok(Sort::Bool) => {}
            Ok(s) => report.push(format!("{subject} guard"), format!("guard has sort {s}, not bool")),
            Err(e) => report.push(format!("{subject} guard"), e.to_string()),
        }
        for (dir, arcs) in [("input", &t.inputs), ("output", &t.outputs)] {
            for (pname, items) in arcs {
                let subject = format!("{subject} {dir} arc {pname}");
                let Some(place) = schema.place(pname) else {
                    report.push(subject, format!("unknown place {pname}"));
                    continue;
                };
                for item in items {
                    if let Err(msg) = check_item(sig, &place.sort, item, true) {
                        report.push(format!("{subject} item {item}"), msg);
                    }
                }
            }
        }
    }
    for (pname, items) in &schema.initial {
        let subject = format!("initial marking of {pname}");
        let Some(place) = schema.place(pname) else {
            report.push(subject, format!("unknown place {pname}"));
            continue;
        };
        for item in items {
            if !item.term().free_vars().is_empty() {
                report.push(
                    format!("{subject} item {item}"),
                    "initial marking expressions must be variable-free",
                );
            }
            if let Err(msg) = check_item(sig, &place.sort, item, false) {
                report.push(format!("{subject} item {item}"), msg);
            }
        }
    }
    report
}

fn check_item(sig: &Signature, place_sort: &Sort, item: &InscriptionItem, implicit_spread: bool) -> Result<(), String> {
    let got = item.term().sort_of(sig).map_err(|e| e.to_string())?;
    let spreads_onto = |s: &Sort| matches!((s, place_sort), (Sort::Set(x), Sort::Basic(y)) if x == y);
    let ok = match item {
        InscriptionItem::Term(_) => &got == place_sort || (implicit_spread && spreads_onto(&got)),
        InscriptionItem::Spread(_) => spreads_onto(&got),
    };
    if ok {
        Ok(())
    } else {
        Err(format!(
            "sort mismatch: {got} does not fit a place of sort {place_sort}"
        ))
    }
}

/// A finite multiset of token values.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multiset(BTreeMap<Value, usize>);

impl Multiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: Value, n: usize) {
        if n > 0 {
            *self.0.entry(v).or_insert(0) += n;
        }
    }

    /// Removes `n` copies; returns false (and leaves `self` unchanged) if
    /// fewer are present.
    pub fn remove(&mut self, v: &Value, n: usize) -> bool {
        match self.0.get_mut(v) {
            Some(c) if *c >= n => {
                *c -= n;
                if *c == 0 {
                    self.0.remove(v);
                }
                true
            }
            None if n == 0 => true,
            _ => false,
        }
    }

    pub fn count(&self, v: &Value) -> usize {
        self.0.get(v).copied().unwrap_or(0)
    }

    pub fn contains_all(&self, other: &Multiset) -> bool {
        other.0.iter().all(|(v, n)| self.count(v) >= *n)
    }

    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Distinct values with their multiplicities, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (&Value, usize)> {
        self.0.iter().map(|(v, n)| (v, *n))
    }

    /// Every token, repeated by multiplicity, ascending.
    pub fn tokens(&self) -> impl Iterator<Item = &Value> {
        self.0.iter().flat_map(|(v, n)| std::iter::repeat_n(v, *n))
    }

    pub fn literals(&self) -> Vec<String> {
        self.tokens().map(ToString::to_string).collect()
    }
}

impl FromIterator<Value> for Multiset {
    fn from_iter<I: IntoIterator<Item = Value>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for v in iter {
            m.add(v, 1);
        }
        m
    }
}

impl fmt::Display for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.literals().join(", "))
    }
}

/// Tokens per place. Empty places are not stored, so equal markings compare
/// equal regardless of how they were reached.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Marking(BTreeMap<String, Multiset>);

static EMPTY: Multiset = Multiset(BTreeMap::new());

impl Marking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, place: &str) -> &Multiset {
        self.0.get(place).unwrap_or(&EMPTY)
    }

    pub fn add(&mut self, place: &str, v: Value, n: usize) {
        if n > 0 {
            self.0.entry(place.to_owned()).or_default().add(v, n);
        }
    }

    pub fn add_all(&mut self, place: &str, ms: &Multiset) {
        for (v, n) in ms.iter() {
            self.add(place, v.clone(), n);
        }
    }

    pub fn remove_all(&mut self, place: &str, ms: &Multiset) -> bool {
        if !self.get(place).contains_all(ms) {
            return false;
        }
        if let Some(cur) = self.0.get_mut(place) {
            for (v, n) in ms.iter() {
                cur.remove(v, n);
            }
            if cur.is_empty() {
                self.0.remove(place);
            }
        }
        true
    }

    pub fn with(mut self, place: &str, tokens: impl IntoIterator<Item = Value>) -> Self {
        for t in tokens {
            self.add(place, t, 1);
        }
        self
    }

    /// Non-empty places, ascending by name.
    pub fn places(&self) -> impl Iterator<Item = (&String, &Multiset)> {
        self.0.iter()
    }

    pub fn total(&self) -> usize {
        self.0.values().map(Multiset::len).sum()
    }

    /// `{place: [sorted token literals]}`, empty places omitted.
    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> =
            self.0.iter().map(|(p, ms)| (p.clone(), json!(ms.literals()))).collect();
        serde_json::Value::Object(map)
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(p, ms)| format!("{p}={ms}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("structure does not interpret the signature:\n{0}")]
    Structure(ValidationReport),
    #[error("schema is not well-formed:\n{0}")]
    Schema(ValidationReport),
    #[error("evaluating {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: AlgebraError,
    },
    #[error("token {token} on place {place} does not inhabit {sort}")]
    TokenSort { place: String, token: String, sort: String },
    #[error("unknown transition {0}")]
    UnknownTransition(String),
    #[error("transition {transition} is not enabled under {binding}: {reason}")]
    NotEnabled {
        transition: String,
        binding: String,
        reason: String,
    },
}

/// The unqualified name of a flattened element: `admin.b+clients.b` is `b`.
pub fn local_name(name: &str) -> &str {
    let first = name.split('+').next().unwrap_or(name);
    first.rsplit_once('.').map_or(first, |(_, local)| local)
}

/// Per-transition data derived once at instantiation.
#[derive(Clone, Debug)]
struct Compiled {
    vars: BTreeSet<String>,
    /// Input items built only from variables and tuples whose sort matches
    /// the place: each must equal some token, which binds its variables.
    patterns: Vec<(String, Term)>,
}

/// A schema together with an interpretation and the resulting initial marking.
#[derive(Clone, Debug)]
pub struct Net {
    pub schema: NetSchema,
    pub structure: Structure,
    pub initial_marking: Marking,
    compiled: Vec<Compiled>,
}

/// Evaluates a multiset inscription at a place, spreading set values onto
/// basic-sorted places.
pub fn eval_inscription(
    st: &Structure,
    place_sort: &Sort,
    items: &[InscriptionItem],
    b: &Binding,
) -> Result<Multiset, AlgebraError> {
    let mut out = Multiset::new();
    for item in items {
        let v = st.eval(item.term(), b)?;
        let spread = match item {
            InscriptionItem::Spread(_) => true,
            InscriptionItem::Term(_) => matches!(v, Value::Set(_)) && !matches!(place_sort, Sort::Set(_)),
        };
        if spread {
            match v {
                Value::Set(elems) => elems.into_iter().for_each(|e| out.add(e, 1)),
                other => {
                    return Err(AlgebraError::SortMismatch {
                        context: "elm".into(),
                        expected: "a set".into(),
                        found: other.to_string(),
                    })
                }
            }
        } else {
            out.add(v, 1);
        }
    }
    Ok(out)
}

/// Builds the concrete net for `st`, computing the initial marking.
pub fn instantiate(schema: &NetSchema, st: &Structure) -> Result<Net, NetError> {
    let report = validate_structure(&schema.signature, st);
    if !report.is_ok() {
        return Err(NetError::Structure(report));
    }
    let report = check_well_formed(schema);
    if !report.is_ok() {
        return Err(NetError::Schema(report));
    }
    let mut marking = Marking::new();
    for (pname, items) in &schema.initial {
        let place = schema.place(pname).expect("checked by check_well_formed");
        let ms = eval_inscription(st, &place.sort, items, &Binding::new()).map_err(|source| NetError::Eval {
            context: format!("initial marking of {pname}"),
            source,
        })?;
        for (tok, _) in ms.iter() {
            if !st.inhabits(tok, &place.sort) {
                return Err(NetError::TokenSort {
                    place: pname.clone(),
                    token: tok.to_string(),
                    sort: place.sort.to_string(),
                });
            }
        }
        marking.add_all(pname, &ms);
    }
    let compiled = schema.transitions.iter().map(|t| compile(schema, t)).collect();
    Ok(Net {
        schema: schema.clone(),
        structure: st.clone(),
        initial_marking: marking,
        compiled,
    })
}

fn is_pattern(t: &Term) -> bool {
    match t {
        Term::Var(_) => true,
        Term::Tuple(parts) => parts.iter().all(is_pattern),
        _ => false,
    }
}

fn compile(schema: &NetSchema, t: &Transition) -> Compiled {
    let mut patterns = Vec::new();
    for (pname, items) in &t.inputs {
        let place_sort = &schema.place(pname).expect("well-formed").sort;
        for item in items {
            if let InscriptionItem::Term(term) = item {
                if is_pattern(term) && term.sort_of(&schema.signature).as_ref() == Ok(place_sort) {
                    patterns.push((pname.clone(), term.clone()));
                }
            }
        }
    }
    Compiled {
        vars: t.variables(),
        patterns,
    }
}

/// The evaluated effect of one firing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Effect {
    pub consumed: BTreeMap<String, Multiset>,
    pub produced: BTreeMap<String, Multiset>,
}

impl Net {
    pub fn transition_index(&self, name: &str) -> Option<usize> {
        self.schema.transitions.iter().position(|t| t.name == name)
    }

    pub fn transition(&self, name: &str) -> Option<&Transition> {
        self.schema.transition(name)
    }

    /// Finds a transition by exact name, by a qualified name merged into it,
    /// or by an unambiguous local name.
    pub fn resolve_transition(&self, name: &str) -> Option<String> {
        let ts = &self.schema.transitions;
        if let Some(t) = ts.iter().find(|t| t.name == name) {
            return Some(t.name.clone());
        }
        if let Some(t) = ts.iter().find(|t| t.name.split('+').any(|m| m == name)) {
            return Some(t.name.clone());
        }
        let mut local = ts.iter().filter(|t| local_name(&t.name) == name);
        match (local.next(), local.next()) {
            (Some(t), None) => Some(t.name.clone()),
            _ => None,
        }
    }

    pub fn place_sort(&self, place: &str) -> Option<&Sort> {
        self.schema.place(place).map(|p| &p.sort)
    }

    /// Variables a binding for `t` must assign.
    pub fn variables(&self, t: &str) -> Option<&BTreeSet<String>> {
        self.transition_index(t).map(|i| &self.compiled[i].vars)
    }

    /// Evaluated input and output multisets of `t` under `b`.
    pub fn effect(&self, t: &Transition, b: &Binding) -> Result<Effect, AlgebraError> {
        let eval_side = |arcs: &BTreeMap<String, Inscription>| -> Result<BTreeMap<String, Multiset>, AlgebraError> {
            let mut out = BTreeMap::new();
            for (pname, items) in arcs {
                let sort = self.place_sort(pname).expect("well-formed");
                let ms = eval_inscription(&self.structure, sort, items, b)?;
                if !ms.is_empty() {
                    out.insert(pname.clone(), ms);
                }
            }
            Ok(out)
        };
        Ok(Effect {
            consumed: eval_side(&t.inputs)?,
            produced: eval_side(&t.outputs)?,
        })
    }

    /// Why `b` does not enable `t` at `m`, if it doesn't.
    pub fn check_enabled(&self, m: &Marking, t: &str, b: &Binding) -> Result<Effect, String> {
        let idx = self
            .transition_index(t)
            .ok_or_else(|| format!("unknown transition {t}"))?;
        check_binding(&self.schema.signature, &self.structure, &self.compiled[idx].vars, b)?;
        self.check_guard_and_tokens(m, &self.schema.transitions[idx], b)
    }

    fn check_guard_and_tokens(&self, m: &Marking, t: &Transition, b: &Binding) -> Result<Effect, String> {
        match self.structure.eval(&t.guard, b) {
            Ok(Value::Bool(true)) => {}
            Ok(_) => return Err("guard is false".into()),
            Err(e) => return Err(format!("guard: {e}")),
        }
        let effect = self.effect(t, b).map_err(|e| e.to_string())?;
        for (pname, ms) in &effect.consumed {
            if !m.get(pname).contains_all(ms) {
                return Err(format!("place {pname} lacks {ms}"));
            }
        }
        Ok(effect)
    }

    /// All bindings under which `t` is enabled at `m`, in ascending order.
    /// Unknown transitions have none.
    pub fn enabled_bindings(&self, m: &Marking, t: &str) -> Vec<Binding> {
        let Some(idx) = self.transition_index(t) else {
            return Vec::new();
        };
        let mut found = BTreeSet::new();
        self.search(m, idx, 0, Binding::new(), &mut found);
        found.into_iter().collect()
    }

    fn search(&self, m: &Marking, idx: usize, k: usize, b: Binding, found: &mut BTreeSet<Binding>) {
        let info = &self.compiled[idx];
        if let Some((pname, pat)) = info.patterns.get(k) {
            for (tok, _) in m.get(pname).iter() {
                let mut next = b.clone();
                if self.unify(pat, tok, &mut next) {
                    self.search(m, idx, k + 1, next, found);
                }
            }
            return;
        }
        let free: Vec<&String> = info.vars.iter().filter(|v| b.get(v).is_none()).collect();
        let domains: Vec<Vec<Value>> = free
            .iter()
            .map(|v| self.structure.values_of(&self.schema.signature.variables[*v]))
            .collect();
        let t = &self.schema.transitions[idx];
        for_each_product(&domains, &mut |choice| {
            let mut full = b.clone();
            for (v, val) in free.iter().zip(choice) {
                full.insert((*v).clone(), val.clone());
            }
            if self.check_guard_and_tokens(m, t, &full).is_ok() {
                found.insert(full);
            }
        });
    }

    fn unify(&self, pat: &Term, tok: &Value, b: &mut Binding) -> bool {
        match (pat, tok) {
            (Term::Var(v), _) => match b.get(v) {
                Some(bound) => bound == tok,
                None => {
                    let sort = &self.schema.signature.variables[v];
                    if self.structure.inhabits(tok, sort) {
                        b.insert(v.clone(), tok.clone());
                        true
                    } else {
                        false
                    }
                }
            },
            (Term::Tuple(ps), Value::Tuple(vs)) if ps.len() == vs.len() => {
                ps.iter().zip(vs).all(|(p, v)| self.unify(p, v, b))
            }
            _ => false,
        }
    }

    /// Every enabled (transition index, binding) pair, transitions in schema
    /// order. Spontaneous transitions are skipped unless `spontaneous`.
    pub fn enabled_steps(&self, m: &Marking, spontaneous: bool) -> Vec<(usize, Binding)> {
        let mut out = Vec::new();
        for (i, t) in self.schema.transitions.iter().enumerate() {
            if !spontaneous && t.is_spontaneous() {
                continue;
            }
            for b in self.enabled_bindings(m, &t.name) {
                out.push((i, b));
            }
        }
        out
    }

    /// Fires `t` under `b`, returning the successor marking.
    pub fn fire(&self, m: &Marking, t: &str, b: &Binding) -> Result<Marking, NetError> {
        self.fire_with_effect(m, t, b).map(|(next, _)| next)
    }

    pub fn fire_with_effect(&self, m: &Marking, t: &str, b: &Binding) -> Result<(Marking, Effect), NetError> {
        if self.transition_index(t).is_none() {
            return Err(NetError::UnknownTransition(t.to_owned()));
        }
        let effect = self.check_enabled(m, t, b).map_err(|reason| NetError::NotEnabled {
            transition: t.to_owned(),
            binding: b.to_string(),
            reason,
        })?;
        let mut next = m.clone();
        for (pname, ms) in &effect.consumed {
            let ok = next.remove_all(pname, ms);
            debug_assert!(ok);
        }
        for (pname, ms) in &effect.produced {
            let sort = self.place_sort(pname).expect("well-formed");
            for (tok, _) in ms.iter() {
                if !self.structure.inhabits(tok, sort) {
                    return Err(NetError::TokenSort {
                        place: pname.clone(),
                        token: tok.to_string(),
                        sort: sort.to_string(),
                    });
                }
            }
            next.add_all(pname, ms);
        }
        Ok((next, effect))
    }

    /// Places holding a token outside their sort.
    pub fn typing_violations(&self, m: &Marking) -> Vec<String> {
        let mut out = Vec::new();
        for (pname, ms) in m.places() {
            match self.place_sort(pname) {
                None => out.push(format!("unknown place {pname}")),
                Some(sort) => {
                    for (tok, _) in ms.iter() {
                        if !self.structure.inhabits(tok, sort) {
                            out.push(format!("{tok} on {pname} does not inhabit {sort}"));
                        }
                    }
                }
            }
        }
        out
    }

    /// Places with sorts, transitions with inscriptions, initial marking.
    pub fn to_json(&self) -> serde_json::Value {
        let arcs = |side: &BTreeMap<String, Inscription>| -> serde_json::Value {
            side.iter()
                .map(|(p, items)| {
                    (
                        p.clone(),
                        json!(items.iter().map(ToString::to_string).collect::<Vec<_>>()),
                    )
                })
                .collect::<serde_json::Map<_, _>>()
                .into()
        };
        json!({
            "places": self.schema.places.iter().map(|p| json!({"name": p.name, "sort": p.sort.to_string()})).collect::<Vec<_>>(),
            "transitions": self.schema.transitions.iter().map(|t| json!({
                "name": t.name,
                "guard": t.guard.to_string(),
                "inputs": arcs(&t.inputs),
                "outputs": arcs(&t.outputs),
            })).collect::<Vec<_>>(),
            "initial_marking": self.initial_marking.to_json(),
        })
    }
}

/// Graphviz rendering of a schema: places as circles, transitions as boxes.
pub fn schema_to_dot(schema: &NetSchema) -> String {
    let mut out = String::from("digraph net {\n  rankdir=LR;\n");
    for p in &schema.places {
        out.push_str(&format!(
            "  \"p:{}\" [shape=circle, label=\"{}\\n{}\"];\n",
            p.name, p.name, p.sort
        ));
    }
    for t in &schema.transitions {
        let label = if t.guard.is_truth() {
            t.name.clone()
        } else {
            format!("{}\\n[{}]", t.name, t.guard)
        };
        out.push_str(&format!("  \"t:{}\" [shape=box, label=\"{}\"];\n", t.name, label));
        for (p, items) in &t.inputs {
            out.push_str(&format!(
                "  \"p:{p}\" -> \"t:{}\" [label=\"{}\"];\n",
                t.name,
                join_items(items)
            ));
        }
        for (p, items) in &t.outputs {
            out.push_str(&format!(
                "  \"t:{}\" -> \"p:{p}\" [label=\"{}\"];\n",
                t.name,
                join_items(items)
            ));
        }
    }
    out.push_str("}\n");
    out
}

fn join_items(items: &[InscriptionItem]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(" + ")
}

fn for_each_product(domains: &[Vec<Value>], f: &mut dyn FnMut(&[Value])) {
    fn go(domains: &[Vec<Value>], acc: &mut Vec<Value>, f: &mut dyn FnMut(&[Value])) {
        match domains.split_first() {
            None => f(acc),
            Some((first, rest)) => {
                for v in first {
                    acc.push(v.clone());
                    go(rest, acc, f);
                    acc.pop();
                }
            }
        }
    }
    go(domains, &mut Vec::with_capacity(domains.len()), f);
}
