//! The `.hkl` modelling language.
//!
//! ```text
//! signature {
//!   sort A, C;
//!   const AD: P(A);
//!   fn f: C -> P(A);
//!   var a: A;
//!   var c: C;
//!   require AD subset AD;
//! }
//! structure default {
//!   carrier A = {a1};
//!   carrier C = {c1};
//!   const AD = {a1};
//!   fn f(c1) = {a1};
//! }
//! module desk {
//!   place P: A;
//!   place Q: (A, C);
//!   transition take { guard a in f(c); in P: a; out Q: (a, c); }
//!   init P: elm(AD);
//!   left { P }
//!   right { out = Q }
//! }
//! opaque module world { right { place P } }
//! invariant one_desk: count AD in desk.P, desk.Q[0] = 1;
//! invariant only_free: absent f(c) in desk.P when desk.take;
//! system office = world . desk;
//! ```
//!
//! `•` may be written for `.`; `[m]` abstracts a module. Identifiers never
//! contain dots, so `desk.P` in an invariant and `world . desk` in a system
//! expression lex the same way and are told apart by context.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::algebra::{validate_structure, FunctionSig, Signature, Sort, Structure, Term, Value};
use crate::composition::{abstract_module, compose, CompositionError, Gate, GateElement, GateKind, Inner, Module};
use crate::explore::{Invariant, PlaceCount};
use crate::schema::{check_well_formed, Inscription, InscriptionItem, NetSchema, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    Unresolved,
    Sort,
    Composition,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Syntax => "syntax error",
            ErrorKind::Unresolved => "unresolved name",
            ErrorKind::Sort => "sort error",
            ErrorKind::Composition => "composition error",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}: {message}")]
pub struct DslError {
    pub line: usize,
    pub col: usize,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Sym(s) => write!(f, "'{s}'"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 14] = ["->", "{", "}", "(", ")", "[", "]", ",", ";", ":", "=", ".", "+", "•"];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let mut out = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let pos = Pos { line, col };
        let mut advance = |n: usize, chars: &mut std::iter::Peekable<std::str::CharIndices>| {
            for _ in 0..n {
                if let Some((_, c)) = chars.next() {
                    if c == '\n' {
                        line += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                }
            }
        };
        if c.is_whitespace() {
            advance(1, &mut chars);
        } else if src[i..].starts_with("//") {
            let len = src[i..].find('\n').map_or(src.len() - i, |n| n);
            advance(src[i..i + len].chars().count(), &mut chars);
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let len = src[i..]
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(src.len() - i);
            out.push((Tok::Ident(src[i..i + len].to_owned()), pos));
            advance(len, &mut chars);
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            out.push((Tok::Sym(sym), pos));
            advance(sym.chars().count(), &mut chars);
        } else {
            return Err(DslError {
                line,
                col,
                kind: ErrorKind::Syntax,
                message: format!("unexpected character {c:?}"),
            });
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// A composition expression over declared module names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompExpr {
    Module(String),
    Compose(Box<CompExpr>, Box<CompExpr>),
    Abstract(Box<CompExpr>),
}

impl fmt::Display for CompExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompExpr::Module(m) => write!(f, "{m}"),
            CompExpr::Abstract(e) => write!(f, "[{e}]"),
            // composition parses left-nested, so only a right composite needs parens
            CompExpr::Compose(l, r) => match **r {
                CompExpr::Compose(..) => write!(f, "{l} . ({r})"),
                _ => write!(f, "{l} . {r}"),
            },
        }
    }
}

/// A parsed model.
#[derive(Clone, Debug)]
pub struct Model {
    pub signature: Signature,
    pub structures: Vec<(String, Structure)>,
    /// Leaf modules in declaration order.
    pub modules: Vec<Module>,
    pub invariants: Vec<Invariant>,
    pub system_name: String,
    pub system: CompExpr,
    /// The system expression, evaluated.
    pub composed: Module,
}

impl Model {
    pub fn module(&self, name: &str) -> Option<&Module> {
        self.modules.iter().find(|m| m.name == name)
    }

    /// The named structure, or the first one declared.
    pub fn structure(&self, name: Option<&str>) -> Option<&Structure> {
        match name {
            Some(n) => self.structures.iter().find(|(s, _)| s == n).map(|(_, s)| s),
            None => self.structures.first().map(|(_, s)| s),
        }
    }

    pub fn eval(&self, e: &CompExpr) -> Result<Module, CompositionError> {
        match e {
            CompExpr::Module(name) => Ok(self
                .module(name)
                .cloned()
                .expect("expression names are resolved when parsed")),
            CompExpr::Abstract(inner) => Ok(abstract_module(&self.eval(inner)?)),
            CompExpr::Compose(l, r) => compose(&self.eval(l)?, &self.eval(r)?),
        }
    }

    /// Parses a standalone composition expression against this model's modules.
    pub fn parse_expr(&self, text: &str) -> Result<CompExpr, DslError> {
        let mut p = Parser::new(text)?;
        p.modules = self
            .modules
            .iter()
            .map(|m| (m.name.clone(), ModuleInfo::of(m)))
            .collect();
        let e = p.comp_expr()?;
        p.expect_eof()?;
        Ok(e)
    }
}

/// Names visible inside a module, used to resolve invariants.
#[derive(Clone, Debug, Default)]
struct ModuleInfo {
    places: BTreeSet<String>,
    transitions: BTreeSet<String>,
}

impl ModuleInfo {
    fn of(m: &Module) -> Self {
        match &m.inner {
            Inner::Net(s) => ModuleInfo {
                places: s.places.iter().map(|p| p.name.clone()).collect(),
                transitions: s.transitions.iter().map(|t| t.name.clone()).collect(),
            },
            _ => ModuleInfo::default(),
        }
    }
}

pub fn parse_model(src: &str) -> Result<Model, DslError> {
    let mut p = Parser::new(src)?;
    p.model()
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    sig: Option<Signature>,
    modules: BTreeMap<String, ModuleInfo>,
}

type PResult<T> = Result<T, DslError>;

const KEYWORDS: [&str; 5] = ["in", "and", "subset", "elm", "when"];

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src)?,
            at: 0,
            sig: None,
            modules: BTreeMap::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error_at(pos: Pos, kind: ErrorKind, message: impl Into<String>) -> DslError {
        DslError {
            line: pos.line,
            col: pos.col,
            kind,
            message: message.into(),
        }
    }

    fn unexpected(&self, wanted: &str) -> DslError {
        Self::error_at(
            self.pos(),
            ErrorKind::Syntax,
            format!("expected {wanted}, found {}", self.peek()),
        )
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        let yes = self.is_sym(s);
        if yes {
            self.bump();
        }
        yes
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        let yes = self.is_kw(k);
        if yes {
            self.bump();
        }
        yes
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{s}'")))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{k}'")))
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            Err(self.unexpected("end of input"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok((s, pos))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn number(&mut self) -> PResult<usize> {
        let (s, pos) = self.ident()?;
        s.parse()
            .map_err(|_| Self::error_at(pos, ErrorKind::Syntax, format!("expected a number, found '{s}'")))
    }

    fn sig(&self) -> &Signature {
        self.sig.as_ref().expect("signature parsed first")
    }

    fn model(&mut self) -> PResult<Model> {
        if !self.is_kw("signature") {
            return Err(self.unexpected("'signature' block"));
        }
        self.signature()?;
        let mut structures: Vec<(String, Structure)> = Vec::new();
        let mut modules: Vec<Module> = Vec::new();
        let mut invariants = Vec::new();
        let mut system: Option<(String, CompExpr, Pos)> = None;
        loop {
            let pos = self.pos();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(k) if k == "structure" => {
                    let (name, st) = self.structure()?;
                    if structures.iter().any(|(n, _)| *n == name) {
                        return Err(Self::error_at(
                            pos,
                            ErrorKind::Syntax,
                            format!("structure {name} declared twice"),
                        ));
                    }
                    structures.push((name, st));
                }
                Tok::Ident(k) if k == "module" || k == "opaque" => {
                    let m = self.module()?;
                    self.modules.insert(m.name.clone(), ModuleInfo::of(&m));
                    modules.push(m);
                }
                Tok::Ident(k) if k == "invariant" => invariants.push(self.invariant()?),
                Tok::Ident(k) if k == "system" => {
                    if system.is_some() {
                        return Err(Self::error_at(
                            pos,
                            ErrorKind::Syntax,
                            "more than one system declaration",
                        ));
                    }
                    self.bump();
                    let (name, _) = self.ident()?;
                    self.expect_sym("=")?;
                    let e = self.comp_expr()?;
                    self.expect_sym(";")?;
                    system = Some((name, e, pos));
                }
                _ => return Err(self.unexpected("'structure', 'module', 'invariant' or 'system'")),
            }
        }
        let Some((system_name, system, pos)) = system else {
            return Err(Self::error_at(
                self.pos(),
                ErrorKind::Syntax,
                "missing system declaration",
            ));
        };
        let mut model = Model {
            signature: self.sig().clone(),
            structures,
            modules,
            invariants,
            system_name,
            system,
            composed: Module::opaque("empty", vec![], vec![]).expect("valid name"),
        };
        model.composed = model
            .eval(&model.system)
            .map_err(|e| Self::error_at(pos, ErrorKind::Composition, e.to_string()))?;
        Ok(model)
    }

    fn signature(&mut self) -> PResult<()> {
        let pos = self.pos();
        self.expect_kw("signature")?;
        self.expect_sym("{")?;
        self.sig = Some(Signature::new());
        while !self.eat_sym("}") {
            let (kw, kpos) = self.ident()?;
            match kw.as_str() {
                "sort" => loop {
                    let (s, spos) = self.ident()?;
                    if KEYWORDS.contains(&s.as_str()) || ["bool", "true", "P"].contains(&s.as_str()) {
                        return Err(Self::error_at(spos, ErrorKind::Syntax, format!("'{s}' is reserved")));
                    }
                    self.sig.as_mut().expect("set").sorts.insert(s);
                    if !self.eat_sym(",") {
                        break;
                    }
                },
                "const" => {
                    let (name, _) = self.ident()?;
                    self.expect_sym(":")?;
                    let sort = self.sort()?;
                    self.sig.as_mut().expect("set").constants.insert(name, sort);
                }
                "fn" => {
                    let (name, _) = self.ident()?;
                    self.expect_sym(":")?;
                    let mut args = Vec::new();
                    if self.is_sym("(") && matches!(self.peek2(), Tok::Sym(")")) {
                        self.bump();
                        self.bump();
                    } else {
                        loop {
                            args.push(self.sort()?);
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym("->")?;
                    let result = self.sort()?;
                    self.sig
                        .as_mut()
                        .expect("set")
                        .functions
                        .insert(name, FunctionSig { args, result });
                }
                "var" => {
                    let (name, _) = self.ident()?;
                    self.expect_sym(":")?;
                    let sort = self.sort()?;
                    self.sig.as_mut().expect("set").variables.insert(name, sort);
                }
                "require" => {
                    let t = self.term()?;
                    self.sig.as_mut().expect("set").requirements.push(t);
                }
                _ => {
                    return Err(Self::error_at(
                        kpos,
                        ErrorKind::Syntax,
                        format!("expected 'sort', 'const', 'fn', 'var' or 'require', found '{kw}'"),
                    ))
                }
            }
            self.expect_sym(";")?;
        }
        let report = self.sig().validate();
        if !report.is_ok() {
            return Err(Self::error_at(pos, ErrorKind::Sort, report.to_string()));
        }
        Ok(())
    }

    fn sort(&mut self) -> PResult<Sort> {
        let pos = self.pos();
        if self.eat_sym("(") {
            let mut parts = vec![self.sort()?];
            while self.eat_sym(",") {
                parts.push(self.sort()?);
            }
            self.expect_sym(")")?;
            if parts.len() < 2 {
                return Err(Self::error_at(
                    pos,
                    ErrorKind::Syntax,
                    "a product sort needs at least two components",
                ));
            }
            return Ok(Sort::Tuple(parts));
        }
        let (name, npos) = self.ident()?;
        if name == "bool" {
            return Ok(Sort::Bool);
        }
        if name == "P" && self.is_sym("(") {
            self.bump();
            let (elem, epos) = self.ident()?;
            self.expect_sym(")")?;
            self.check_sort(&elem, epos)?;
            return Ok(Sort::Set(elem));
        }
        self.check_sort(&name, npos)?;
        Ok(Sort::Basic(name))
    }

    fn check_sort(&self, name: &str, pos: Pos) -> PResult<()> {
        if self.sig().sorts.contains(name) {
            Ok(())
        } else {
            Err(Self::error_at(
                pos,
                ErrorKind::Unresolved,
                format!("unknown sort {name}"),
            ))
        }
    }

    fn term(&mut self) -> PResult<Term> {
        let first = self.comparison()?;
        if !self.is_kw("and") {
            return Ok(first);
        }
        let mut parts = vec![first];
        while self.eat_kw("and") {
            parts.push(self.comparison()?);
        }
        Ok(Term::And(parts))
    }

    fn comparison(&mut self) -> PResult<Term> {
        let a = self.primary()?;
        if self.eat_kw("in") {
            Ok(Term::member(a, self.primary()?))
        } else if self.eat_sym("=") {
            Ok(Term::equal(a, self.primary()?))
        } else if self.eat_kw("subset") {
            Ok(Term::subset(a, self.primary()?))
        } else {
            Ok(a)
        }
    }

    fn primary(&mut self) -> PResult<Term> {
        let pos = self.pos();
        if self.eat_sym("(") {
            let mut parts = vec![self.term()?];
            while self.eat_sym(",") {
                parts.push(self.term()?);
            }
            self.expect_sym(")")?;
            return Ok(if parts.len() == 1 {
                parts.pop().expect("one")
            } else {
                Term::Tuple(parts)
            });
        }
        let (name, _) = self.ident()?;
        if name == "true" {
            return Ok(Term::truth());
        }
        if KEYWORDS.contains(&name.as_str()) {
            return Err(Self::error_at(pos, ErrorKind::Syntax, format!("unexpected '{name}'")));
        }
        let sig = self.sig();
        if self.is_sym("(") {
            if !sig.functions.contains_key(&name) {
                return Err(Self::error_at(
                    pos,
                    ErrorKind::Unresolved,
                    format!("unknown function {name}"),
                ));
            }
            self.bump();
            let mut args = Vec::new();
            if !self.eat_sym(")") {
                loop {
                    args.push(self.term()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(")")?;
            }
            return Ok(Term::apply(name, args));
        }
        if sig.variables.contains_key(&name) {
            Ok(Term::var(name))
        } else if sig.constants.contains_key(&name) {
            Ok(Term::constant(name))
        } else {
            Err(Self::error_at(
                pos,
                ErrorKind::Unresolved,
                format!("unknown variable or constant {name}"),
            ))
        }
    }

    /// Source text of one value literal: an atom or a balanced `( )`/`{ }` group.
    fn literal_text(&mut self) -> PResult<(String, Pos)> {
        let pos = self.pos();
        let mut text = String::new();
        let mut depth = 0usize;
        loop {
            match self.bump() {
                Tok::Ident(s) => text.push_str(&s),
                Tok::Sym(s @ ("(" | "{")) => {
                    depth += 1;
                    text.push_str(s);
                }
                Tok::Sym(s @ (")" | "}")) if depth > 0 => {
                    depth -= 1;
                    text.push_str(s);
                }
                Tok::Sym(",") if depth > 0 => text.push(','),
                other => {
                    return Err(Self::error_at(
                        pos,
                        ErrorKind::Syntax,
                        format!("bad literal near {other}"),
                    ));
                }
            }
            if depth == 0 {
                return Ok((text, pos));
            }
        }
    }

    fn value(&mut self, sort: &Sort) -> PResult<Value> {
        let (text, pos) = self.literal_text()?;
        Value::parse_literal(&text, sort).map_err(|e| {
            Self::error_at(
                pos,
                ErrorKind::Sort,
                format!("{text} is not a {sort} literal: {}", e.message),
            )
        })
    }

    fn structure(&mut self) -> PResult<(String, Structure)> {
        let pos = self.pos();
        self.expect_kw("structure")?;
        let (name, _) = self.ident()?;
        self.expect_sym("{")?;
        let mut st = Structure::new();
        while !self.eat_sym("}") {
            let (kw, kpos) = self.ident()?;
            match kw.as_str() {
                "carrier" => {
                    let (sort, spos) = self.ident()?;
                    self.check_sort(&sort, spos)?;
                    self.expect_sym("=")?;
                    let v = self.value(&Sort::set(sort.clone()))?;
                    let atoms = v.as_set().expect("set literal").iter().map(|a| a.to_string()).collect();
                    st.carriers.insert(sort, atoms);
                }
                "const" => {
                    let (c, cpos) = self.ident()?;
                    let sort =
                        self.sig().constants.get(&c).cloned().ok_or_else(|| {
                            Self::error_at(cpos, ErrorKind::Unresolved, format!("unknown constant {c}"))
                        })?;
                    self.expect_sym("=")?;
                    let v = self.value(&sort)?;
                    st.constants.insert(c, v);
                }
                "fn" => {
                    let (f, fpos) = self.ident()?;
                    let fsig =
                        self.sig().functions.get(&f).cloned().ok_or_else(|| {
                            Self::error_at(fpos, ErrorKind::Unresolved, format!("unknown function {f}"))
                        })?;
                    self.expect_sym("(")?;
                    let mut args = Vec::new();
                    for (i, s) in fsig.args.iter().enumerate() {
                        if i > 0 {
                            self.expect_sym(",")?;
                        }
                        args.push(self.value(s)?);
                    }
                    self.expect_sym(")")?;
                    self.expect_sym("=")?;
                    let v = self.value(&fsig.result)?;
                    st.functions.entry(f).or_default().insert(args, v);
                }
                _ => {
                    return Err(Self::error_at(
                        kpos,
                        ErrorKind::Syntax,
                        format!("expected 'carrier', 'const' or 'fn', found '{kw}'"),
                    ))
                }
            }
            self.expect_sym(";")?;
        }
        let report = validate_structure(self.sig(), &st);
        if !report.is_ok() {
            return Err(Self::error_at(
                pos,
                ErrorKind::Sort,
                format!("structure {name}: {report}"),
            ));
        }
        Ok((name, st))
    }

    fn inscription(&mut self) -> PResult<Inscription> {
        let mut items = Vec::new();
        loop {
            if self.is_kw("elm") && matches!(self.peek2(), Tok::Sym("(")) {
                self.bump();
                self.bump();
                items.push(InscriptionItem::Spread(self.term()?));
                self.expect_sym(")")?;
            } else {
                items.push(InscriptionItem::Term(self.term()?));
            }
            if !self.eat_sym("+") {
                return Ok(items);
            }
        }
    }

    /// `P: items, Q: items` up to the closing `;`.
    fn arcs(&mut self, places: &BTreeSet<String>) -> PResult<Vec<(String, Inscription)>> {
        let mut out = Vec::new();
        loop {
            let (p, ppos) = self.ident()?;
            if !places.contains(&p) {
                return Err(Self::error_at(
                    ppos,
                    ErrorKind::Unresolved,
                    format!("unknown place {p}"),
                ));
            }
            self.expect_sym(":")?;
            out.push((p, self.inscription()?));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(";")?;
        Ok(out)
    }

    fn gates(&mut self, opaque: bool) -> PResult<Vec<(Gate, Pos)>> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        if self.eat_sym("}") {
            return Ok(out);
        }
        loop {
            let pos = self.pos();
            let kind = if self.eat_kw("place") {
                Some(GateKind::Place)
            } else if self.eat_kw("transition") {
                Some(GateKind::Transition)
            } else {
                None
            };
            let (label, _) = self.ident()?;
            let element = if !opaque && self.eat_sym("=") {
                self.ident()?.0
            } else {
                label.clone()
            };
            let gate = match (opaque, kind) {
                (true, Some(kind)) => Gate::opaque(label, kind),
                (true, None) => {
                    return Err(Self::error_at(
                        pos,
                        ErrorKind::Syntax,
                        "opaque gates need 'place' or 'transition'",
                    ))
                }
                (false, kind) => Gate {
                    label,
                    kind: kind.unwrap_or(GateKind::Place),
                    element: GateElement::Inner(element),
                },
            };
            out.push((gate, pos));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym("}")?;
        Ok(out)
    }

    fn module(&mut self) -> PResult<Module> {
        let opaque = self.eat_kw("opaque");
        self.expect_kw("module")?;
        let (name, mpos) = self.ident()?;
        if self.modules.contains_key(&name) {
            return Err(Self::error_at(
                mpos,
                ErrorKind::Syntax,
                format!("module {name} declared twice"),
            ));
        }
        self.expect_sym("{")?;
        let mut schema = NetSchema::new(self.sig().clone());
        let mut places = BTreeSet::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        while !self.eat_sym("}") {
            let (kw, kpos) = self.ident()?;
            match kw.as_str() {
                "left" => left = self.gates(opaque)?,
                "right" => right = self.gates(opaque)?,
                "place" if !opaque => {
                    let (p, _) = self.ident()?;
                    self.expect_sym(":")?;
                    let sort = self.sort()?;
                    self.expect_sym(";")?;
                    places.insert(p.clone());
                    schema = schema.with_place(p, sort);
                }
                "transition" if !opaque => {
                    let (t, _) = self.ident()?;
                    let mut tr = Transition::new(t);
                    self.expect_sym("{")?;
                    while !self.eat_sym("}") {
                        let (part, ppos) = self.ident()?;
                        match part.as_str() {
                            "guard" => {
                                tr.guard = self.term()?;
                                self.expect_sym(";")?;
                            }
                            "in" => {
                                for (p, items) in self.arcs(&places)? {
                                    tr.inputs.entry(p).or_default().extend(items);
                                }
                            }
                            "out" => {
                                for (p, items) in self.arcs(&places)? {
                                    tr.outputs.entry(p).or_default().extend(items);
                                }
                            }
                            _ => {
                                return Err(Self::error_at(
                                    ppos,
                                    ErrorKind::Syntax,
                                    format!("expected 'guard', 'in' or 'out', found '{part}'"),
                                ))
                            }
                        }
                    }
                    schema = schema.with_transition(tr);
                }
                "init" if !opaque => {
                    for (p, items) in self.arcs(&places)? {
                        schema.initial.entry(p).or_default().extend(items);
                    }
                }
                _ => {
                    let wanted = if opaque {
                        "'left' or 'right'"
                    } else {
                        "'place', 'transition', 'init', 'left' or 'right'"
                    };
                    return Err(Self::error_at(
                        kpos,
                        ErrorKind::Syntax,
                        format!("expected {wanted}, found '{kw}'"),
                    ));
                }
            }
        }
        if opaque {
            let strip = |gs: Vec<(Gate, Pos)>| gs.into_iter().map(|(g, _)| g).collect();
            return Module::opaque(name, strip(left), strip(right))
                .map_err(|e| Self::error_at(mpos, ErrorKind::Composition, e.to_string()));
        }
        // gate kinds follow the element they name
        for (g, pos) in left.iter_mut().chain(right.iter_mut()) {
            let GateElement::Inner(el) = &g.element else {
                unreachable!()
            };
            let is_place = schema.place(el).is_some();
            let is_transition = schema.transition(el).is_some();
            if !is_place && !is_transition {
                return Err(Self::error_at(
                    *pos,
                    ErrorKind::Unresolved,
                    format!("module {name} has no element {el}"),
                ));
            }
            g.kind = if is_place {
                GateKind::Place
            } else {
                GateKind::Transition
            };
        }
        let report = check_well_formed(&schema);
        if !report.is_ok() {
            return Err(Self::error_at(
                mpos,
                ErrorKind::Sort,
                format!("module {name}: {report}"),
            ));
        }
        let strip = |gs: Vec<(Gate, Pos)>| gs.into_iter().map(|(g, _)| g).collect();
        Module::net(name, schema, strip(left), strip(right))
            .map_err(|e| Self::error_at(mpos, ErrorKind::Composition, e.to_string()))
    }

    /// `module.element`, checked against declared net modules.
    fn qualified(&mut self, transition: bool) -> PResult<String> {
        let (m, pos) = self.ident()?;
        self.expect_sym(".")?;
        let (el, _) = self.ident()?;
        let info = self
            .modules
            .get(&m)
            .ok_or_else(|| Self::error_at(pos, ErrorKind::Unresolved, format!("unknown module {m}")))?;
        let known = if transition {
            info.transitions.contains(&el)
        } else {
            info.places.contains(&el)
        };
        if !known {
            let what = if transition { "transition" } else { "place" };
            return Err(Self::error_at(
                pos,
                ErrorKind::Unresolved,
                format!("module {m} has no {what} {el}"),
            ));
        }
        Ok(format!("{m}.{el}"))
    }

    fn invariant(&mut self) -> PResult<Invariant> {
        self.expect_kw("invariant")?;
        let (name, _) = self.ident()?;
        self.expect_sym(":")?;
        let pos = self.pos();
        let inv = if self.eat_kw("count") {
            let over = self.primary()?;
            if !over.free_vars().is_empty() {
                return Err(Self::error_at(
                    pos,
                    ErrorKind::Sort,
                    "counted set must not contain variables",
                ));
            }
            self.expect_kw("in")?;
            let mut places = Vec::new();
            loop {
                let place = self.qualified(false)?;
                let component = if self.eat_sym("[") {
                    let n = self.number()?;
                    self.expect_sym("]")?;
                    Some(n)
                } else {
                    None
                };
                places.push(PlaceCount { place, component });
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym("=")?;
            Invariant::AtomCount {
                name,
                over,
                places,
                equals: self.number()?,
            }
        } else if self.eat_kw("absent") {
            let set = self.primary()?;
            self.expect_kw("in")?;
            let place = self.qualified(false)?;
            self.expect_kw("when")?;
            let transition = self.qualified(true)?;
            Invariant::AbsentWhenFiring {
                name,
                transition,
                set,
                place,
            }
        } else {
            return Err(self.unexpected("'count' or 'absent'"));
        };
        self.expect_sym(";")?;
        Ok(inv)
    }

    fn comp_expr(&mut self) -> PResult<CompExpr> {
        let mut acc = self.comp_unit()?;
        while self.eat_sym(".") || self.eat_sym("•") {
            let r = self.comp_unit()?;
            acc = CompExpr::Compose(Box::new(acc), Box::new(r));
        }
        Ok(acc)
    }

    fn comp_unit(&mut self) -> PResult<CompExpr> {
        if self.eat_sym("(") {
            let e = self.comp_expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if self.eat_sym("[") {
            let e = self.comp_expr()?;
            self.expect_sym("]")?;
            return Ok(CompExpr::Abstract(Box::new(e)));
        }
        let (m, pos) = self.ident()?;
        if !self.modules.contains_key(&m) {
            return Err(Self::error_at(
                pos,
                ErrorKind::Unresolved,
                format!("unknown module {m}"),
            ));
        }
        Ok(CompExpr::Module(m))
    }
}

fn join<T: fmt::Display>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(sep)
}

fn print_arcs(arcs: &BTreeMap<String, Inscription>) -> String {
    join(
        arcs.iter()
            .filter(|(_, items)| !items.is_empty())
            .map(|(p, items)| format!("{p}: {}", join(items, " + "))),
        ", ",
    )
}

fn print_gates(out: &mut String, side: &str, m: &Module, gates: &[Gate]) {
    let opaque = matches!(m.inner, Inner::Opaque);
    let shown = gates.iter().map(|g| match (&g.element, opaque) {
        (_, true) => {
            let kind = match g.kind {
                GateKind::Place => "place",
                GateKind::Transition => "transition",
            };
            format!("{kind} {}", g.label)
        }
        (GateElement::Inner(e), false) if *e != g.label => format!("{} = {e}", g.label),
        _ => g.label.clone(),
    });
    let _ = writeln!(out, "  {side} {{ {} }}", join(shown, ", "));
}

/// Prints a model in the syntax accepted by [`parse_model`].
pub fn print_model(model: &Model) -> String {
    let mut out = String::new();
    let sig = &model.signature;
    out.push_str("signature {\n");
    if !sig.sorts.is_empty() {
        let _ = writeln!(out, "  sort {};", join(&sig.sorts, ", "));
    }
    for (c, s) in &sig.constants {
        let _ = writeln!(out, "  const {c}: {s};");
    }
    for (f, fs) in &sig.functions {
        let args = if fs.args.is_empty() {
            "()".to_owned()
        } else {
            join(&fs.args, ", ")
        };
        let _ = writeln!(out, "  fn {f}: {args} -> {};", fs.result);
    }
    for (v, s) in &sig.variables {
        let _ = writeln!(out, "  var {v}: {s};");
    }
    for r in &sig.requirements {
        let _ = writeln!(out, "  require {r};");
    }
    out.push_str("}\n");

    for (name, st) in &model.structures {
        let _ = writeln!(out, "\nstructure {name} {{");
        for (sort, atoms) in &st.carriers {
            let _ = writeln!(out, "  carrier {sort} = {{{}}};", join(atoms, ", "));
        }
        for (c, v) in &st.constants {
            let _ = writeln!(out, "  const {c} = {v};");
        }
        for (f, table) in &st.functions {
            for (args, v) in table {
                let _ = writeln!(out, "  fn {f}({}) = {v};", join(args, ", "));
            }
        }
        out.push_str("}\n");
    }

    for m in &model.modules {
        match &m.inner {
            Inner::Net(s) => {
                let _ = writeln!(out, "\nmodule {} {{", m.name);
                for p in &s.places {
                    let _ = writeln!(out, "  place {}: {};", p.name, p.sort);
                }
                for t in &s.transitions {
                    let _ = write!(out, "  transition {} {{", t.name);
                    if !t.guard.is_truth() {
                        let _ = write!(out, " guard {};", t.guard);
                    }
                    let ins = print_arcs(&t.inputs);
                    if !ins.is_empty() {
                        let _ = write!(out, " in {ins};");
                    }
                    let outs = print_arcs(&t.outputs);
                    if !outs.is_empty() {
                        let _ = write!(out, " out {outs};");
                    }
                    out.push_str(" }\n");
                }
                let init = print_arcs(&s.initial);
                if !init.is_empty() {
                    let _ = writeln!(out, "  init {init};");
                }
            }
            _ => {
                let _ = writeln!(out, "\nopaque module {} {{", m.name);
            }
        }
        print_gates(&mut out, "left", m, &m.surface.left);
        print_gates(&mut out, "right", m, &m.surface.right);
        out.push_str("}\n");
    }

    if !model.invariants.is_empty() {
        out.push('\n');
    }
    for inv in &model.invariants {
        match inv {
            Invariant::AtomCount {
                name,
                over,
                places,
                equals,
            } => {
                let over = match over {
                    Term::Var(_) | Term::Const(_) | Term::Apply(..) | Term::Tuple(_) => over.to_string(),
                    _ => format!("({over})"),
                };
                let _ = writeln!(
                    out,
                    "invariant {name}: count {over} in {} = {equals};",
                    join(places, ", ")
                );
            }
            Invariant::AbsentWhenFiring {
                name,
                transition,
                set,
                place,
            } => {
                let set = match set {
                    Term::Var(_) | Term::Const(_) | Term::Apply(..) | Term::Tuple(_) => set.to_string(),
                    _ => format!("({set})"),
                };
                let _ = writeln!(out, "invariant {name}: absent {set} in {place} when {transition};");
            }
        }
    }
    let _ = writeln!(out, "\nsystem {} = {};", model.system_name, model.system);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::canonical_equal;

    const SMALL: &str = "
signature {
  sort A, C;
  const AD: P(A);
  fn f: C -> P(A);
  var a: A;
  var c: C;
}
structure default {
  carrier A = {a1};
  carrier C = {c1};
  const AD = {a1};
  fn f(c1) = {a1};
}
module desk {
  place P: A;
  place Q: (A, C);
  transition take { guard a in f(c); in P: a; out Q: (a, c); }
  init P: elm(AD);
  left { P }
  right { out = Q }
}
opaque module world { right { place P } }
invariant one_desk: count AD in desk.P, desk.Q[0] = 1;
invariant only_free: absent f(c) in desk.P when desk.take;
system office = world • [desk];
";

    #[test]
    fn small_model_parses_and_reprints() {
        let m = parse_model(SMALL).unwrap();
        assert_eq!(m.modules.len(), 2);
        assert_eq!(m.invariants.len(), 2);
        assert_eq!(m.system.to_string(), "world . [desk]");
        let printed = print_model(&m);
        let again = parse_model(&printed).unwrap();
        assert!(canonical_equal(&m.composed, &again.composed));
        assert_eq!(printed, print_model(&again));
        assert_eq!(again.invariants, m.invariants);
    }

    #[test]
    fn unknown_sort_is_located() {
        let src = "signature { sort A; }\nmodule m {\n  place X: B;\n}\nsystem s = m;";
        let e = parse_model(src).unwrap_err();
        assert_eq!((e.line, e.col, e.kind), (3, 12, ErrorKind::Unresolved));
        assert!(e.message.contains("B"));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse_model("signature { sort A }").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Syntax);
        assert_eq!((e.line, e.col), (1, 20));
        let e = parse_model("signature { sort A; } system s = nothing;").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Unresolved);
        assert!(parse_model("signature { sort A; } $").is_err());
    }

    #[test]
    fn ill_sorted_arc_is_a_sort_error() {
        let src =
            "signature { sort A, C; var a: A; }\nmodule m { place P: C; transition t { in P: a; } }\nsystem s = m;";
        let e = parse_model(src).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Sort);
        assert_eq!(e.line, 2);
    }

    #[test]
    fn kind_mismatch_is_a_composition_error() {
        let src = "signature { sort A; }
module l { place P: A; right { x = P } }
module r { transition t { } left { x = t } }
system s = l . r;";
        let e = parse_model(src).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Composition);
        assert_eq!(e.line, 4);
    }

    #[test]
    fn opaque_composition_expression() {
        let src = "signature { sort A; }
opaque module clients { right { place C, transition b } }
opaque module admin { left { transition b, place C } }
system s = [clients] . [admin];";
        let m = parse_model(src).unwrap();
        assert!(m.composed.surface.left.is_empty() && m.composed.surface.right.is_empty());
        assert_eq!(m.composed.glue_pairs().len(), 2);
        let e = m.parse_expr("(admin • clients)").unwrap();
        assert_eq!(e.to_string(), "admin . clients");
        assert!(m.parse_expr("admin . ").is_err());
    }

    #[test]
    fn shipped_model_matches_the_built_system() {
        let m = parse_model(include_str!("../models/service_system.hkl")).unwrap();
        let sys = crate::service_system::build_system();
        assert!(canonical_equal(&m.composed, &sys.composed));
        assert_eq!(m.invariants, sys.invariants);
        assert_eq!(m.structure(None), Some(&sys.default_structure));
        assert_eq!(m.signature, sys.signature);
        let again = parse_model(&print_model(&m)).unwrap();
        assert!(canonical_equal(&again.composed, &sys.composed));
    }
}
