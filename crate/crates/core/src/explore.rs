//! Bounded exhaustive exploration of reachable markings with declared
//! invariants checked at every state and every firing.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use crate::algebra::{Binding, Term, Value};
use crate::runs::WorkloadItem;
use crate::schema::{Marking, Net};

/// Occurrences counted on one place: whole tokens, or one tuple component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlaceCount {
    pub place: String,
    pub component: Option<usize>,
}

impl fmt::Display for PlaceCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.component {
            Some(i) => write!(f, "{}[{i}]", self.place),
            None => write!(f, "{}", self.place),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Invariant {
    /// For every atom `x` of the closed set term `over`, the occurrences of
    /// `x` summed over `places` equal `equals`.
    AtomCount {
        name: String,
        over: Term,
        places: Vec<PlaceCount>,
        equals: usize,
    },
    /// Whenever `transition` fires, no element of `set` (evaluated under the
    /// firing binding) lies on `place` just before.
    AbsentWhenFiring {
        name: String,
        transition: String,
        set: Term,
        place: String,
    },
}

impl Invariant {
    pub fn name(&self) -> &str {
        match self {
            Invariant::AtomCount { name, .. } | Invariant::AbsentWhenFiring { name, .. } => name,
        }
    }

    /// Checks a marking. Firing invariants hold trivially here.
    pub fn check_marking(&self, net: &Net, m: &Marking) -> Result<(), String> {
        let Invariant::AtomCount {
            over, places, equals, ..
        } = self
        else {
            return Ok(());
        };
        let atoms = net.structure.eval(over, &Binding::new()).map_err(|e| e.to_string())?;
        let atoms = atoms.as_set().ok_or("range of an atom count must be a set")?;
        let places = places
            .iter()
            .map(|pc| {
                resolve_place(net, &pc.place)
                    .map(|p| (p, pc.component))
                    .ok_or_else(|| format!("unknown place {}", pc.place))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for x in atoms {
            let n: usize = places.iter().map(|(p, comp)| occurrences(m, p, *comp, x)).sum();
            if n != *equals {
                return Err(format!("{x} occurs {n} times, expected {equals}"));
            }
        }
        Ok(())
    }

    /// Checks a firing of `transition` under `b` from `m`.
    pub fn check_firing(&self, net: &Net, m: &Marking, transition: &str, b: &Binding) -> Result<(), String> {
        let Invariant::AbsentWhenFiring {
            transition: watched,
            set,
            place,
            ..
        } = self
        else {
            return Ok(());
        };
        let watched = net
            .resolve_transition(watched)
            .ok_or_else(|| format!("unknown transition {watched}"))?;
        if watched != transition {
            return Ok(());
        }
        let place = resolve_place(net, place).ok_or_else(|| format!("unknown place {place}"))?;
        let v = net.structure.eval(set, b).map_err(|e| e.to_string())?;
        let elems: Vec<&Value> = match &v {
            Value::Set(s) => s.iter().collect(),
            other => vec![other],
        };
        for x in elems {
            if m.get(&place).count(x) > 0 {
                return Err(format!("{transition} fired under {b} while {x} is on {place}"));
            }
        }
        Ok(())
    }
}

fn occurrences(m: &Marking, place: &str, component: Option<usize>, x: &Value) -> usize {
    m.get(place)
        .iter()
        .filter(|(tok, _)| match component {
            None => *tok == x,
            Some(i) => matches!(tok, Value::Tuple(parts) if parts.get(i) == Some(x)),
        })
        .map(|(_, n)| n)
        .sum()
}

/// Finds a place by exact name or by one of the qualified names merged into it.
pub fn resolve_place(net: &Net, name: &str) -> Option<String> {
    let places = &net.schema.places;
    places
        .iter()
        .find(|p| p.name == name)
        .or_else(|| places.iter().find(|p| p.name.split('+').any(|m| m == name)))
        .map(|p| p.name.clone())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantViolation {
    pub invariant: String,
    pub marking: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExplorationReport {
    pub states: usize,
    pub edges: usize,
    /// False when `max_states` cut the search short.
    pub exhaustive: bool,
    /// States without successors, with the number of workload entries fired.
    pub terminal: Vec<(Marking, usize)>,
    /// Invariant name to number of checks performed.
    pub checks: BTreeMap<String, usize>,
    pub violations: Vec<InvariantViolation>,
}

impl ExplorationReport {
    pub fn holds(&self, invariant: &str) -> bool {
        !self.violations.iter().any(|v| v.invariant == invariant)
    }
}

pub const TYPING: &str = "typing";

/// Explores every marking reachable when the workload entries fire in order,
/// interleaved arbitrarily with all other transitions. Other spontaneous
/// transitions never fire. Token typing is always checked.
pub fn explore(net: &Net, workload: &[WorkloadItem], invariants: &[Invariant], max_states: usize) -> ExplorationReport {
    let mut report = ExplorationReport {
        exhaustive: true,
        ..Default::default()
    };
    report.checks.insert(TYPING.into(), 0);
    for inv in invariants {
        report.checks.insert(inv.name().to_owned(), 0);
    }

    let workload: Vec<WorkloadItem> = workload
        .iter()
        .map(|w| WorkloadItem {
            transition: net
                .resolve_transition(&w.transition)
                .unwrap_or_else(|| w.transition.clone()),
            binding: w.binding.clone(),
        })
        .collect();
    let mut seen: HashSet<(Marking, usize)> = HashSet::new();
    let mut queue = VecDeque::new();
    let start = (net.initial_marking.clone(), 0usize);
    seen.insert(start.clone());
    queue.push_back(start);

    let violate = |report: &mut ExplorationReport, inv: &str, m: &Marking, detail: String| {
        if report.violations.len() < 100 {
            report.violations.push(InvariantViolation {
                invariant: inv.to_owned(),
                marking: m.to_string(),
                detail,
            });
        }
    };

    while let Some((m, pos)) = queue.pop_front() {
        report.states += 1;
        *report.checks.get_mut(TYPING).expect("registered") += 1;
        for detail in net.typing_violations(&m) {
            violate(&mut report, TYPING, &m, detail);
        }
        for inv in invariants {
            if matches!(inv, Invariant::AtomCount { .. }) {
                *report.checks.get_mut(inv.name()).expect("registered") += 1;
                if let Err(detail) = inv.check_marking(net, &m) {
                    violate(&mut report, inv.name(), &m, detail);
                }
            }
        }

        let mut steps: Vec<(String, Binding, usize)> = net
            .enabled_steps(&m, false)
            .into_iter()
            .map(|(i, b)| (net.schema.transitions[i].name.clone(), b, pos))
            .collect();
        if let Some(w) = workload.get(pos) {
            if net.check_enabled(&m, &w.transition, &w.binding).is_ok() {
                steps.push((w.transition.clone(), w.binding.clone(), pos + 1));
            }
        }
        if steps.is_empty() {
            report.terminal.push((m.clone(), pos));
        }
        for (t, b, next_pos) in steps {
            for inv in invariants {
                if let Invariant::AbsentWhenFiring { .. } = inv {
                    *report.checks.get_mut(inv.name()).expect("registered") += 1;
                    if let Err(detail) = inv.check_firing(net, &m, &t, &b) {
                        violate(&mut report, inv.name(), &m, detail);
                    }
                }
            }
            report.edges += 1;
            let next = match net.fire(&m, &t, &b) {
                Ok(n) => n,
                Err(e) => {
                    violate(&mut report, TYPING, &m, e.to_string());
                    continue;
                }
            };
            let key = (next, next_pos);
            if seen.contains(&key) {
                continue;
            }
            if seen.len() >= max_states {
                report.exhaustive = false;
                continue;
            }
            seen.insert(key.clone());
            queue.push_back(key);
        }
    }
    report
}
