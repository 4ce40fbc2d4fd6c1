//! Many-sorted signatures, their finite instantiations, terms and evaluation.
//!
//! A [`Signature`] names basic sorts, sorted constants, function symbols and
//! variables. A [`Structure`] interprets it over finite, explicitly enumerated
//! carriers. Every net schema is inscribed with [`Term`]s over a signature, and
//! instantiating the schema means evaluating those terms in a structure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// A sort expression. Basic sorts are declared by name in a [`Signature`];
/// powersets range over basic sorts only.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Basic(String),
    Set(String),
    Tuple(Vec<Sort>),
    Bool,
}

impl Sort {
    pub fn basic(name: impl Into<String>) -> Self {
        Sort::Basic(name.into())
    }

    pub fn set(name: impl Into<String>) -> Self {
        Sort::Set(name.into())
    }

    pub fn tuple<I, S>(parts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Sort::Tuple(parts.into_iter().map(|p| Sort::Basic(p.into())).collect())
    }

    /// Basic sort names this sort refers to.
    pub fn referenced(&self, out: &mut BTreeSet<String>) {
        match self {
            Sort::Basic(n) | Sort::Set(n) => {
                out.insert(n.clone());
            }
            Sort::Tuple(parts) => parts.iter().for_each(|p| p.referenced(out)),
            Sort::Bool => {}
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Basic(n) => write!(f, "{n}"),
            Sort::Set(n) => write!(f, "P({n})"),
            Sort::Tuple(parts) => {
                write!(f, "(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            Sort::Bool => write!(f, "bool"),
        }
    }
}

/// An element of a basic carrier. Atoms of different sorts never compare equal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub name: String,
    pub sort: String,
}

/// The semantic universe of a [`Structure`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Atom(Atom),
    Tuple(Vec<Value>),
    Set(BTreeSet<Value>),
    Bool(bool),
}

impl Value {
    pub fn atom(name: impl Into<String>, sort: impl Into<String>) -> Self {
        Value::Atom(Atom {
            name: name.into(),
            sort: sort.into(),
        })
    }

    pub fn tuple(parts: impl IntoIterator<Item = Value>) -> Self {
        Value::Tuple(parts.into_iter().collect())
    }

    pub fn set(elems: impl IntoIterator<Item = Value>) -> Self {
        Value::Set(elems.into_iter().collect())
    }

    /// Set of atoms of one basic sort.
    pub fn atom_set<'a>(sort: &str, names: impl IntoIterator<Item = &'a str>) -> Self {
        Value::Set(names.into_iter().map(|n| Value::atom(n, sort)).collect())
    }

    pub fn as_set(&self) -> Option<&BTreeSet<Value>> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Parses a token literal (`e1`, `(c1,r1)`, `{e1,e2}`, `true`) against the
    /// sort it is expected to inhabit. Only the shape is checked here; carrier
    /// membership is [`Structure::inhabits`].
    pub fn parse_literal(text: &str, sort: &Sort) -> Result<Value, LiteralError> {
        let mut p = LiteralParser {
            src: text.as_bytes(),
            pos: 0,
        };
        let v = p.value(sort)?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Atom(a) => write!(f, "{}", a.name),
            Value::Tuple(parts) => {
                write!(f, "(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            Value::Set(elems) => {
                write!(f, "{{")?;
                for (i, e) in elems.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "}}")
            }
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad literal at offset {offset}: {message}")]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

struct LiteralParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl LiteralParser<'_> {
    fn err(&self, message: impl Into<String>) -> LiteralError {
        LiteralError {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), LiteralError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn ident(&mut self) -> Result<String, LiteralError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn value(&mut self, sort: &Sort) -> Result<Value, LiteralError> {
        match sort {
            Sort::Basic(s) => Ok(Value::atom(self.ident()?, s.clone())),
            Sort::Bool => match self.ident()?.as_str() {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                other => Err(self.err(format!("expected boolean, found '{other}'"))),
            },
            Sort::Tuple(parts) => {
                self.expect(b'(')?;
                let mut vals = Vec::with_capacity(parts.len());
                for (i, part) in parts.iter().enumerate() {
                    if i > 0 {
                        self.expect(b',')?;
                    }
                    vals.push(self.value(part)?);
                }
                self.expect(b')')?;
                Ok(Value::Tuple(vals))
            }
            Sort::Set(elem) => {
                self.expect(b'{')?;
                let mut vals = BTreeSet::new();
                if self.peek() != Some(b'}') {
                    loop {
                        let v = Value::atom(self.ident()?, elem.clone());
                        if !vals.insert(v) {
                            return Err(self.err("duplicate set element"));
                        }
                        if self.peek() == Some(b',') {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(b'}')?;
                Ok(Value::Set(vals))
            }
        }
    }
}

/// Assignment of values to variables. Ordered lexicographically by
/// (variable name, value), which fixes binding enumeration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binding(BTreeMap<String, Value>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: impl Into<String>, value: Value) -> Self {
        self.0.insert(var.into(), value);
        self
    }

    pub fn insert(&mut self, var: impl Into<String>, value: Value) -> Option<Value> {
        self.0.insert(var.into(), value)
    }

    pub fn get(&self, var: &str) -> Option<&Value> {
        self.0.get(var)
    }

    pub fn remove(&mut self, var: &str) -> Option<Value> {
        self.0.remove(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.0.keys().cloned().collect()
    }

    /// Variable name to token literal.
    pub fn to_literals(&self) -> BTreeMap<String, String> {
        self.0.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
    }
}

impl FromIterator<(String, Value)> for Binding {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Binding(iter.into_iter().collect())
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        write!(f, "}}")
    }
}

/// Terms over a signature.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(String),
    Apply(String, Vec<Term>),
    Tuple(Vec<Term>),
    Member(Box<Term>, Box<Term>),
    Equal(Box<Term>, Box<Term>),
    /// The empty conjunction is `true`.
    And(Vec<Term>),
    Subset(Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn apply(f: impl Into<String>, args: Vec<Term>) -> Self {
        Term::Apply(f.into(), args)
    }

    pub fn tuple_of_vars<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        Term::Tuple(names.into_iter().map(Term::var).collect())
    }

    pub fn member(elem: Term, set: Term) -> Self {
        Term::Member(Box::new(elem), Box::new(set))
    }

    pub fn equal(a: Term, b: Term) -> Self {
        Term::Equal(Box::new(a), Box::new(b))
    }

    pub fn subset(a: Term, b: Term) -> Self {
        Term::Subset(Box::new(a), Box::new(b))
    }

    pub fn truth() -> Self {
        Term::And(Vec::new())
    }

    pub fn is_truth(&self) -> bool {
        matches!(self, Term::And(v) if v.is_empty())
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Const(_) => {}
            Term::Apply(_, args) | Term::Tuple(args) | Term::And(args) => args.iter().for_each(|a| a.collect_vars(out)),
            Term::Member(a, b) | Term::Equal(a, b) | Term::Subset(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Infers the sort of a term, rejecting ill-sorted terms.
    pub fn sort_of(&self, sig: &Signature) -> Result<Sort, AlgebraError> {
        match self {
            Term::Var(v) => sig
                .variables
                .get(v)
                .cloned()
                .ok_or_else(|| AlgebraError::UnknownVariable(v.clone())),
            Term::Const(c) => sig
                .constants
                .get(c)
                .cloned()
                .ok_or_else(|| AlgebraError::UnknownConstant(c.clone())),
            Term::Apply(f, args) => {
                let fs = sig
                    .functions
                    .get(f)
                    .ok_or_else(|| AlgebraError::UnknownFunction(f.clone()))?;
                if fs.args.len() != args.len() {
                    return Err(AlgebraError::Arity {
                        function: f.clone(),
                        expected: fs.args.len(),
                        found: args.len(),
                    });
                }
                for (arg, want) in args.iter().zip(&fs.args) {
                    let got = arg.sort_of(sig)?;
                    if &got != want {
                        return Err(mismatch(format!("argument of {f}"), want, &got));
                    }
                }
                Ok(fs.result.clone())
            }
            Term::Tuple(parts) => {
                if parts.len() < 2 {
                    return Err(AlgebraError::SortMismatch {
                        context: "tuple".into(),
                        expected: "at least two components".into(),
                        found: parts.len().to_string(),
                    });
                }
                parts
                    .iter()
                    .map(|p| p.sort_of(sig))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Sort::Tuple)
            }
            Term::Member(elem, set) => {
                let es = elem.sort_of(sig)?;
                match set.sort_of(sig)? {
                    Sort::Set(base) if es == Sort::Basic(base.clone()) => Ok(Sort::Bool),
                    Sort::Set(base) => Err(mismatch("membership element", &Sort::Basic(base), &es)),
                    other => Err(AlgebraError::SortMismatch {
                        context: "membership".into(),
                        expected: "a powerset sort".into(),
                        found: other.to_string(),
                    }),
                }
            }
            Term::Equal(a, b) => {
                let sa = a.sort_of(sig)?;
                let sb = b.sort_of(sig)?;
                if sa != sb {
                    return Err(mismatch("equality", &sa, &sb));
                }
                Ok(Sort::Bool)
            }
            Term::And(parts) => {
                for p in parts {
                    let s = p.sort_of(sig)?;
                    if s != Sort::Bool {
                        return Err(mismatch("conjunction", &Sort::Bool, &s));
                    }
                }
                Ok(Sort::Bool)
            }
            Term::Subset(a, b) => {
                let sa = a.sort_of(sig)?;
                let sb = b.sort_of(sig)?;
                match (&sa, &sb) {
                    (Sort::Set(x), Sort::Set(y)) if x == y => Ok(Sort::Bool),
                    (Sort::Set(_), _) => Err(mismatch("subset", &sa, &sb)),
                    _ => Err(AlgebraError::SortMismatch {
                        context: "subset".into(),
                        expected: "a powerset sort".into(),
                        found: sa.to_string(),
                    }),
                }
            }
        }
    }

    fn is_primary(&self) -> bool {
        matches!(self, Term::Var(_) | Term::Const(_) | Term::Apply(..) | Term::Tuple(_)) || self.is_truth()
    }
}

fn mismatch(context: impl Into<String>, expected: &Sort, found: &Sort) -> AlgebraError {
    AlgebraError::SortMismatch {
        context: context.into(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

struct Operand<'a>(&'a Term);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_primary() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "({})", self.0)
        }
    }
}

/// Prints in the model-file syntax.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(n) | Term::Const(n) => write!(f, "{n}"),
            Term::Apply(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::Tuple(parts) => {
                write!(f, "(")?;
                for (i, a) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::Member(a, b) => write!(f, "{} in {}", Operand(a), Operand(b)),
            Term::Equal(a, b) => write!(f, "{} = {}", Operand(a), Operand(b)),
            Term::Subset(a, b) => write!(f, "{} subset {}", Operand(a), Operand(b)),
            Term::And(parts) if parts.is_empty() => write!(f, "true"),
            Term::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " and ")?;
                    }
                    // a nested conjunction must keep its grouping to round-trip
                    if matches!(p, Term::And(inner) if !inner.is_empty()) {
                        write!(f, "({p})")?;
                    } else {
                        write!(f, "{p}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionSig {
    pub args: Vec<Sort>,
    pub result: Sort,
}

/// A sorted vocabulary: basic sorts, constants, functions, variables and
/// requirements (boolean terms over constants).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    pub sorts: BTreeSet<String>,
    pub constants: BTreeMap<String, Sort>,
    pub functions: BTreeMap<String, FunctionSig>,
    pub variables: BTreeMap<String, Sort>,
    pub requirements: Vec<Term>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sort(mut self, name: impl Into<String>) -> Self {
        self.sorts.insert(name.into());
        self
    }

    pub fn with_constant(mut self, name: impl Into<String>, sort: Sort) -> Self {
        self.constants.insert(name.into(), sort);
        self
    }

    pub fn with_function(mut self, name: impl Into<String>, args: Vec<Sort>, result: Sort) -> Self {
        self.functions.insert(name.into(), FunctionSig { args, result });
        self
    }

    pub fn with_variable(mut self, name: impl Into<String>, sort: Sort) -> Self {
        self.variables.insert(name.into(), sort);
        self
    }

    pub fn with_requirement(mut self, t: Term) -> Self {
        self.requirements.push(t);
        self
    }

    fn check_sort(&self, subject: &str, sort: &Sort, report: &mut ValidationReport) {
        let mut refs = BTreeSet::new();
        sort.referenced(&mut refs);
        for r in refs.difference(&self.sorts) {
            report.push(subject, format!("undeclared sort {r}"));
        }
    }

    /// Namespace disjointness and declared-sort checks.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let namespaces: [(&str, Vec<&String>); 4] = [
            ("sort", self.sorts.iter().collect()),
            ("constant", self.constants.keys().collect()),
            ("function", self.functions.keys().collect()),
            ("variable", self.variables.keys().collect()),
        ];
        let mut seen: BTreeMap<&String, &str> = BTreeMap::new();
        for (kind, names) in &namespaces {
            for n in names {
                if let Some(prev) = seen.insert(n, kind) {
                    report.push(n.as_str(), format!("symbol declared both as {prev} and {kind}"));
                }
            }
        }
        for (c, s) in &self.constants {
            self.check_sort(c, s, &mut report);
        }
        for (f, fs) in &self.functions {
            for s in fs.args.iter().chain(std::iter::once(&fs.result)) {
                self.check_sort(f, s, &mut report);
            }
        }
        for (v, s) in &self.variables {
            self.check_sort(v, s, &mut report);
        }
        for (i, r) in self.requirements.iter().enumerate() {
            let subject = format!("requirement #{} ({r})", i + 1);
            match r.sort_of(self) {
                Ok(Sort::Bool) => {}
                Ok(s) => report.push(subject.clone(), format!("not boolean but {s}")),
                Err(e) => report.push(subject.clone(), e.to_string()),
            }
            if !r.free_vars().is_empty() {
                report.push(subject, "requirements may only mention constants");
            }
        }
        report
    }

    /// Merges `other` into `self`; shared symbols must agree.
    pub fn merge(&mut self, other: &Signature) -> Result<(), AlgebraError> {
        fn join<V: Clone + PartialEq + fmt::Debug>(
            dst: &mut BTreeMap<String, V>,
            src: &BTreeMap<String, V>,
        ) -> Result<(), AlgebraError> {
            for (k, v) in src {
                match dst.get(k) {
                    Some(existing) if existing != v => return Err(AlgebraError::SignatureConflict(k.clone())),
                    Some(_) => {}
                    None => {
                        dst.insert(k.clone(), v.clone());
                    }
                }
            }
            Ok(())
        }
        join(&mut self.constants, &other.constants)?;
        join(&mut self.functions, &other.functions)?;
        join(&mut self.variables, &other.variables)?;
        self.sorts.extend(other.sorts.iter().cloned());
        for r in &other.requirements {
            if !self.requirements.contains(r) {
                self.requirements.push(r.clone());
            }
        }
        Ok(())
    }

    /// Checks that two signatures agree wherever they share a symbol.
    pub fn compatible(&self, other: &Signature) -> Result<(), AlgebraError> {
        self.clone().merge(other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("unknown constant {0}")]
    UnknownConstant(String),
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("function {function} expects {expected} arguments, got {found}")]
    Arity {
        function: String,
        expected: usize,
        found: usize,
    },
    #[error("sort mismatch in {context}: expected {expected}, found {found}")]
    SortMismatch {
        context: String,
        expected: String,
        found: String,
    },
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("no table entry for {function}({args})")]
    MissingTableEntry { function: String, args: String },
    #[error("symbol {0} declared with conflicting sorts")]
    SignatureConflict(String),
}

/// A single broken invariant, named after the offending symbol or element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.into(),
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    /// True if some violation mentions `needle` in its subject or message.
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.subject.contains(needle) || v.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A finite interpretation of a signature.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Structure {
    pub carriers: BTreeMap<String, BTreeSet<String>>,
    pub constants: BTreeMap<String, Value>,
    pub functions: BTreeMap<String, BTreeMap<Vec<Value>, Value>>,
}

impl Structure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_carrier<'a>(mut self, sort: impl Into<String>, atoms: impl IntoIterator<Item = &'a str>) -> Self {
        self.carriers
            .insert(sort.into(), atoms.into_iter().map(str::to_owned).collect());
        self
    }

    pub fn with_constant(mut self, name: impl Into<String>, value: Value) -> Self {
        self.constants.insert(name.into(), value);
        self
    }

    pub fn with_entry(mut self, function: impl Into<String>, args: Vec<Value>, value: Value) -> Self {
        self.functions.entry(function.into()).or_default().insert(args, value);
        self
    }

    pub fn carrier(&self, sort: &str) -> impl Iterator<Item = Value> + '_ {
        let sort = sort.to_owned();
        self.carriers
            .get(&sort)
            .into_iter()
            .flatten()
            .map(move |a| Value::atom(a.clone(), sort.clone()))
    }

    /// Every value of `sort`, in ascending order. Powersets enumerate all
    /// subsets, so keep set-sorted variables to small carriers.
    pub fn values_of(&self, sort: &Sort) -> Vec<Value> {
        let mut out = match sort {
            Sort::Basic(s) => self.carrier(s).collect(),
            Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Sort::Set(s) => {
                let atoms: Vec<Value> = self.carrier(s).collect();
                let n = atoms.len().min(20);
                (0u32..(1u32 << n))
                    .map(|mask| {
                        Value::Set(
                            atoms
                                .iter()
                                .enumerate()
                                .filter(|(i, _)| mask & (1 << i) != 0)
                                .map(|(_, a)| a.clone())
                                .collect(),
                        )
                    })
                    .collect()
            }
            Sort::Tuple(parts) => {
                let mut acc: Vec<Vec<Value>> = vec![Vec::new()];
                for part in parts {
                    let vals = self.values_of(part);
                    acc = acc
                        .into_iter()
                        .flat_map(|prefix| {
                            vals.iter().map(move |v| {
                                let mut p = prefix.clone();
                                p.push(v.clone());
                                p
                            })
                        })
                        .collect();
                }
                acc.into_iter().map(Value::Tuple).collect()
            }
        };
        out.sort();
        out
    }

    /// Whether `v` is an element of the interpretation of `sort`.
    pub fn inhabits(&self, v: &Value, sort: &Sort) -> bool {
        match (v, sort) {
            (Value::Atom(a), Sort::Basic(s)) => {
                &a.sort == s && self.carriers.get(s).is_some_and(|c| c.contains(&a.name))
            }
            (Value::Bool(_), Sort::Bool) => true,
            (Value::Set(elems), Sort::Set(s)) => {
                let base = Sort::Basic(s.clone());
                elems.iter().all(|e| self.inhabits(e, &base))
            }
            (Value::Tuple(vals), Sort::Tuple(parts)) => {
                vals.len() == parts.len() && vals.iter().zip(parts).all(|(v, p)| self.inhabits(v, p))
            }
            _ => false,
        }
    }

    /// Evaluates a term under a binding.
    pub fn eval(&self, t: &Term, b: &Binding) -> Result<Value, AlgebraError> {
        match t {
            Term::Var(v) => b
                .get(v)
                .cloned()
                .ok_or_else(|| AlgebraError::UnboundVariable(v.clone())),
            Term::Const(c) => self
                .constants
                .get(c)
                .cloned()
                .ok_or_else(|| AlgebraError::UnknownConstant(c.clone())),
            Term::Apply(f, args) => {
                let table = self
                    .functions
                    .get(f)
                    .ok_or_else(|| AlgebraError::UnknownFunction(f.clone()))?;
                let vals = args.iter().map(|a| self.eval(a, b)).collect::<Result<Vec<_>, _>>()?;
                table
                    .get(&vals)
                    .cloned()
                    .ok_or_else(|| AlgebraError::MissingTableEntry {
                        function: f.clone(),
                        args: join_values(&vals),
                    })
            }
            Term::Tuple(parts) => parts
                .iter()
                .map(|p| self.eval(p, b))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Tuple),
            Term::Member(elem, set) => {
                let e = self.eval(elem, b)?;
                let s = self.eval(set, b)?;
                let s = expect_set(&s, "membership")?;
                Ok(Value::Bool(s.contains(&e)))
            }
            Term::Equal(x, y) => Ok(Value::Bool(self.eval(x, b)? == self.eval(y, b)?)),
            Term::And(parts) => {
                let mut all = true;
                for p in parts {
                    match self.eval(p, b)? {
                        Value::Bool(v) => all &= v,
                        other => {
                            return Err(AlgebraError::SortMismatch {
                                context: "conjunction".into(),
                                expected: "bool".into(),
                                found: other.to_string(),
                            })
                        }
                    }
                }
                Ok(Value::Bool(all))
            }
            Term::Subset(x, y) => {
                let xs = self.eval(x, b)?;
                let ys = self.eval(y, b)?;
                let xs = expect_set(&xs, "subset")?;
                let ys = expect_set(&ys, "subset")?;
                Ok(Value::Bool(xs.is_subset(ys)))
            }
        }
    }
}

fn expect_set<'a>(v: &'a Value, context: &str) -> Result<&'a BTreeSet<Value>, AlgebraError> {
    v.as_set().ok_or_else(|| AlgebraError::SortMismatch {
        context: context.into(),
        expected: "a set".into(),
        found: v.to_string(),
    })
}

fn join_values(vals: &[Value]) -> String {
    vals.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Evaluates `t` in `st` under `b`.
pub fn eval_term(t: &Term, st: &Structure, b: &Binding) -> Result<Value, AlgebraError> {
    st.eval(t, b)
}

/// Checks that `st` is a consistent interpretation of `sig`. Violations are
/// returned as data.
pub fn validate_structure(sig: &Signature, st: &Structure) -> ValidationReport {
    let mut report = sig.validate();

    for s in &sig.sorts {
        if !st.carriers.contains_key(s) {
            report.push(s.as_str(), format!("carrier for sort {s} unassigned"));
        }
    }
    for s in st.carriers.keys() {
        if !sig.sorts.contains(s) {
            report.push(s.as_str(), format!("carrier given for undeclared sort {s}"));
        }
    }

    for (c, sort) in &sig.constants {
        match st.constants.get(c) {
            None => report.push(c.as_str(), format!("constant {c} unassigned")),
            Some(v) if !st.inhabits(v, sort) => {
                report.push(c.as_str(), format!("value {v} of {c} does not inhabit {sort}"))
            }
            Some(_) => {}
        }
    }
    for c in st.constants.keys() {
        if !sig.constants.contains_key(c) {
            report.push(c.as_str(), format!("constant {c} not declared"));
        }
    }

    for (f, fs) in &sig.functions {
        let Some(table) = st.functions.get(f) else {
            report.push(f.as_str(), format!("function {f} unassigned"));
            continue;
        };
        for (args, val) in table {
            let in_domain = args.len() == fs.args.len() && args.iter().zip(&fs.args).all(|(a, s)| st.inhabits(a, s));
            if !in_domain {
                report.push(
                    f.as_str(),
                    format!("entry {f}({}) outside the domain", join_values(args)),
                );
            }
            if !st.inhabits(val, &fs.result) {
                report.push(
                    f.as_str(),
                    format!(
                        "value {val} of {f}({}) does not inhabit {}",
                        join_values(args),
                        fs.result
                    ),
                );
            }
        }
        let domain = st.values_of(&Sort::Tuple(fs.args.clone()));
        for point in domain {
            let Value::Tuple(args) = point else { unreachable!() };
            if !table.contains_key(&args) {
                report.push(
                    f.as_str(),
                    format!("function {f} not total: missing {f}({})", join_values(&args)),
                );
            }
        }
    }
    for f in st.functions.keys() {
        if !sig.functions.contains_key(f) {
            report.push(f.as_str(), format!("function {f} not declared"));
        }
    }

    for (i, r) in sig.requirements.iter().enumerate() {
        let subject = format!("requirement #{} ({r})", i + 1);
        match st.eval(r, &Binding::new()) {
            Ok(Value::Bool(true)) => {}
            Ok(_) => report.push(subject, "requirement violated"),
            Err(e) => report.push(subject, e.to_string()),
        }
    }
    report
}

/// Checks that a binding assigns exactly `vars`, each within its declared sort.
pub fn check_binding(sig: &Signature, st: &Structure, vars: &BTreeSet<String>, b: &Binding) -> Result<(), String> {
    if &b.vars() != vars {
        return Err(format!(
            "binding covers {:?} but the transition uses {:?}",
            b.vars(),
            vars
        ));
    }
    for (v, val) in b.iter() {
        let sort = sig.variables.get(v).ok_or_else(|| format!("unknown variable {v}"))?;
        if !st.inhabits(val, sort) {
            return Err(format!("{v}={val} does not inhabit {sort}"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service_system::{default_instantiation, signature};

    fn at(n: &str, s: &str) -> Value {
        Value::atom(n, s)
    }

    #[test]
    fn fixture_validates() {
        let r = validate_structure(&signature(), &default_instantiation());
        assert!(r.is_ok(), "{r}");
    }

    #[test]
    fn missing_function_is_reported() {
        let mut st = default_instantiation();
        st.functions.remove("f");
        let r = validate_structure(&signature(), &st);
        assert!(r.violations.iter().any(|v| v.message == "function f unassigned"), "{r}");
    }

    #[test]
    fn foreign_atom_in_constant_is_reported_on_that_constant() {
        let st = default_instantiation().with_constant("EX", Value::atom_set("E", ["e1", "x1"]));
        let r = validate_structure(&signature(), &st);
        assert_eq!(r.violations.len(), 1, "{r}");
        assert_eq!(r.violations[0].subject, "EX");
    }

    #[test]
    fn partial_function_table_is_a_violation() {
        let mut st = default_instantiation();
        st.functions.get_mut("f").unwrap().remove(&vec![at("s2", "S")]);
        let r = validate_structure(&signature(), &st);
        assert!(r.mentions("not total"), "{r}");
    }

    #[test]
    fn failing_requirement_is_reported() {
        let sig = signature().with_requirement(Term::member(Term::constant("AD"), Term::constant("EX")));
        // ill-sorted requirement
        assert!(!sig.validate().is_ok());

        let sig = signature().with_requirement(Term::subset(Term::constant("EX"), Term::apply("f", vec![])));
        assert!(!sig.validate().is_ok());

        let sig = signature()
            .with_constant("ONE", Sort::set("E"))
            .with_requirement(Term::subset(Term::constant("EX"), Term::constant("ONE")));
        let st = default_instantiation().with_constant("ONE", Value::atom_set("E", ["e1"]));
        let r = validate_structure(&sig, &st);
        assert_eq!(r.violations.len(), 1, "{r}");
        assert!(r.violations[0].message.contains("violated"));
    }

    #[test]
    fn namespace_clash_is_reported() {
        let sig = signature().with_variable("EX", Sort::basic("E"));
        assert!(sig.validate().mentions("EX"));
    }

    #[test]
    fn function_lookup() {
        let st = default_instantiation();
        let b = Binding::new().with("s", at("s2", "S"));
        let v = st.eval(&Term::apply("f", vec![Term::var("s")]), &b).unwrap();
        assert_eq!(v, Value::atom_set("E", ["e1", "e2"]));
    }

    #[test]
    fn membership_in_function_value() {
        let st = default_instantiation();
        let t = Term::member(Term::var("e"), Term::apply("f", vec![Term::var("s")]));
        let b = Binding::new().with("e", at("e2", "E")).with("s", at("s1", "S"));
        assert_eq!(st.eval(&t, &b).unwrap(), Value::Bool(false));
        let b = Binding::new().with("e", at("e1", "E")).with("s", at("s1", "S"));
        assert_eq!(st.eval(&t, &b).unwrap(), Value::Bool(true));
    }

    #[test]
    fn tuple_construction() {
        let st = default_instantiation();
        let b = Binding::new()
            .with("a", at("a1", "A"))
            .with("c", at("c1", "C"))
            .with("s", at("s1", "S"));
        let v = st.eval(&Term::tuple_of_vars(["a", "c", "s"]), &b).unwrap();
        assert_eq!(v, Value::tuple([at("a1", "A"), at("c1", "C"), at("s1", "S")]));
        assert_eq!(v.to_string(), "(a1,c1,s1)");
    }

    #[test]
    fn unbound_variable_and_sort_errors() {
        let st = default_instantiation();
        let err = st.eval(&Term::var("c"), &Binding::new()).unwrap_err();
        assert_eq!(err, AlgebraError::UnboundVariable("c".into()));
        let t = Term::member(Term::var("e"), Term::var("e"));
        let b = Binding::new().with("e", at("e1", "E"));
        assert!(matches!(st.eval(&t, &b), Err(AlgebraError::SortMismatch { .. })));
        assert!(t.sort_of(&signature()).is_err());
    }

    #[test]
    fn atoms_of_different_sorts_differ() {
        assert_ne!(at("x", "C"), at("x", "E"));
    }

    #[test]
    fn sorting_rules() {
        let sig = signature();
        let guard = Term::member(Term::var("e"), Term::apply("f", vec![Term::var("s")]));
        assert_eq!(guard.sort_of(&sig).unwrap(), Sort::Bool);
        let bad = Term::member(Term::var("c"), Term::apply("f", vec![Term::var("s")]));
        assert!(bad.sort_of(&sig).is_err());
        let sub = Term::subset(Term::apply("f", vec![Term::var("s")]), Term::constant("EX"));
        assert_eq!(sub.sort_of(&sig).unwrap(), Sort::Bool);
        let bad_sub = Term::subset(Term::constant("RO"), Term::constant("EX"));
        assert!(bad_sub.sort_of(&sig).is_err());
    }

    #[test]
    fn literal_round_trip() {
        let s = Sort::Tuple(vec![Sort::basic("C"), Sort::set("E")]);
        let v = Value::parse_literal("( c1 , {e2,e1} )", &s).unwrap();
        assert_eq!(v.to_string(), "(c1,{e1,e2})");
        assert_eq!(Value::parse_literal(&v.to_string(), &s).unwrap(), v);
        assert!(Value::parse_literal("{e1,e1}", &Sort::set("E")).is_err());
        assert!(Value::parse_literal("c1 c2", &Sort::basic("C")).is_err());
    }

    #[test]
    fn powerset_enumeration() {
        let st = default_instantiation();
        let sets = st.values_of(&Sort::set("E"));
        assert_eq!(sets.len(), 4);
        assert!(sets.iter().all(|v| st.inhabits(v, &Sort::set("E"))));
        assert_eq!(st.values_of(&Sort::tuple(["C", "S"])).len(), 6);
    }

    #[test]
    fn term_printing() {
        let t = Term::And(vec![
            Term::member(Term::var("e"), Term::apply("f", vec![Term::var("s")])),
            Term::equal(Term::var("a"), Term::var("a")),
        ]);
        assert_eq!(t.to_string(), "e in f(s) and a = a");
        assert_eq!(Term::truth().to_string(), "true");
    }
}
