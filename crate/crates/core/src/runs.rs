//! Seeded simulation that records concurrent runs, replay verification and
//! linearization.
//!
//! A [`ConcurrentRun`] is occurrence-net shaped: every token instance is a
//! [`Condition`] with at most one producing and one consuming [`Event`]. The
//! causal order is the transitive closure of those links; the index of an
//! event in the recorder's firing order is only a logical clock for mining.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::algebra::{Binding, Value};
use crate::schema::{Effect, Marking, Multiset, Net};

pub type EventId = usize;
pub type ConditionId = usize;

/// One externally triggered firing of a spontaneous transition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadItem {
    pub transition: String,
    pub binding: Binding,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub workload: Vec<WorkloadItem>,
    pub max_steps: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(workload: Vec<WorkloadItem>, max_steps: usize, seed: u64) -> Self {
        Scenario {
            workload,
            max_steps,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub id: EventId,
    pub transition: String,
    pub binding: Binding,
    /// Position in the recorder's firing order.
    pub index: usize,
    pub consumed: Vec<ConditionId>,
    pub produced: Vec<ConditionId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Condition {
    pub id: ConditionId,
    pub place: String,
    pub token: Value,
    /// `None` for conditions of the initial marking.
    pub producer: Option<EventId>,
    pub consumer: Option<EventId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConcurrentRun {
    pub events: Vec<Event>,
    pub conditions: Vec<Condition>,
}

impl ConcurrentRun {
    /// Direct causal predecessors of each event.
    pub fn predecessors(&self) -> Vec<BTreeSet<EventId>> {
        self.events
            .iter()
            .map(|e| {
                e.consumed
                    .iter()
                    .filter_map(|c| self.conditions.get(*c).and_then(|c| c.producer))
                    .collect()
            })
            .collect()
    }

    /// Whether `a` causally precedes `b`.
    pub fn precedes(&self, a: EventId, b: EventId) -> bool {
        let preds = self.predecessors();
        let mut stack = vec![b];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            for &p in &preds[x] {
                if p == a {
                    return true;
                }
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        false
    }

    /// Tokens of conditions without producer.
    pub fn initial_marking(&self) -> Marking {
        let mut m = Marking::new();
        for c in self.conditions.iter().filter(|c| c.producer.is_none()) {
            m.add(&c.place, c.token.clone(), 1);
        }
        m
    }

    /// Tokens of conditions without consumer.
    pub fn final_marking(&self) -> Marking {
        let mut m = Marking::new();
        for c in self.conditions.iter().filter(|c| c.consumer.is_none()) {
            m.add(&c.place, c.token.clone(), 1);
        }
        m
    }

    /// Graphviz rendering: events as boxes, conditions as circles.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph run {\n  rankdir=LR;\n");
        for c in &self.conditions {
            out.push_str(&format!(
                "  c{} [shape=circle, label=\"{}\\n{}\"];\n",
                c.id, c.place, c.token
            ));
        }
        for e in &self.events {
            out.push_str(&format!(
                "  e{} [shape=box, label=\"{}\\n{}\"];\n",
                e.id,
                e.transition,
                e.binding.to_string().replace('"', "'")
            ));
            for c in &e.consumed {
                out.push_str(&format!("  c{c} -> e{};\n", e.id));
            }
            for c in &e.produced {
                out.push_str(&format!("  e{} -> c{c};\n", e.id));
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Workload exhausted and nothing else enabled.
    Complete,
    /// Some workload entries never became enabled.
    IncompleteWorkload { fired: usize, pending: usize },
    /// `max_steps` firings happened while more were possible.
    StepLimit,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub run: ConcurrentRun,
    pub final_marking: Marking,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("workload entry {index}: {reason}")]
    Workload { index: usize, reason: String },
    #[error("causal order of the run is cyclic")]
    Cyclic,
    #[error("run does not replay: {0}")]
    Replay(String),
}

/// Tracks which condition stands for each token currently on the net.
struct Recorder {
    run: ConcurrentRun,
    available: BTreeMap<(String, Value), VecDeque<ConditionId>>,
}

impl Recorder {
    fn new(initial: &Marking) -> Self {
        let mut rec = Recorder {
            run: ConcurrentRun::default(),
            available: BTreeMap::new(),
        };
        for (place, ms) in initial.places() {
            for tok in ms.tokens() {
                rec.produce(place, tok.clone(), None);
            }
        }
        rec
    }

    fn produce(&mut self, place: &str, token: Value, producer: Option<EventId>) -> ConditionId {
        let id = self.run.conditions.len();
        self.run.conditions.push(Condition {
            id,
            place: place.to_owned(),
            token: token.clone(),
            producer,
            consumer: None,
        });
        self.available
            .entry((place.to_owned(), token))
            .or_default()
            .push_back(id);
        id
    }

    fn record(&mut self, transition: &str, binding: Binding, effect: &Effect) {
        let id = self.run.events.len();
        let mut consumed = Vec::new();
        for (place, ms) in &effect.consumed {
            for tok in ms.tokens() {
                let cid = self
                    .available
                    .get_mut(&(place.clone(), tok.clone()))
                    .and_then(VecDeque::pop_front)
                    .expect("enabled firing consumes available tokens");
                self.run.conditions[cid].consumer = Some(id);
                consumed.push(cid);
            }
        }
        let mut produced = Vec::new();
        for (place, ms) in &effect.produced {
            for tok in ms.tokens() {
                produced.push(self.produce(place, tok.clone(), Some(id)));
            }
        }
        self.run.events.push(Event {
            id,
            transition: transition.to_owned(),
            binding,
            index: id,
            consumed,
            produced,
        });
    }
}

/// Runs the token game. Workload entries fire in order as soon as they are
/// enabled; every other choice is drawn uniformly from a stream seeded by
/// the scenario. Spontaneous transitions fire only through the workload.
pub fn simulate(net: &Net, sc: &Scenario) -> Result<Simulation, RunError> {
    let mut workload = Vec::with_capacity(sc.workload.len());
    for (index, w) in sc.workload.iter().enumerate() {
        let name = net
            .resolve_transition(&w.transition)
            .ok_or_else(|| RunError::Workload {
                index,
                reason: format!("unknown transition {}", w.transition),
            })?;
        let vars = net.variables(&name).expect("resolved");
        crate::algebra::check_binding(&net.schema.signature, &net.structure, vars, &w.binding)
            .map_err(|reason| RunError::Workload { index, reason })?;
        workload.push((name, w.binding.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut m = net.initial_marking.clone();
    let mut rec = Recorder::new(&m);
    let mut pos = 0;
    let mut steps = 0;

    let outcome = loop {
        let next_workload = workload.get(pos).filter(|(t, b)| net.check_enabled(&m, t, b).is_ok());
        let choices = if next_workload.is_some() {
            Vec::new()
        } else {
            net.enabled_steps(&m, false)
        };
        if next_workload.is_none() && choices.is_empty() {
            break if pos < workload.len() {
                Outcome::IncompleteWorkload {
                    fired: pos,
                    pending: workload.len() - pos,
                }
            } else {
                Outcome::Complete
            };
        }
        if steps >= sc.max_steps {
            break if pos < workload.len() {
                Outcome::IncompleteWorkload {
                    fired: pos,
                    pending: workload.len() - pos,
                }
            } else {
                Outcome::StepLimit
            };
        }
        let (t, b) = match next_workload {
            Some((t, b)) => {
                pos += 1;
                (t.clone(), b.clone())
            }
            None => {
                let (i, b) = choices[rng.gen_range(0..choices.len())].clone();
                (net.schema.transitions[i].name.clone(), b)
            }
        };
        let (next, effect) = net.fire_with_effect(&m, &t, &b).expect("chosen binding is enabled");
        rec.record(&t, b, &effect);
        m = next;
        steps += 1;
    };

    Ok(Simulation {
        run: rec.run,
        final_marking: m,
        outcome,
    })
}

fn tokens_of(run: &ConcurrentRun, ids: &[ConditionId]) -> BTreeMap<String, Multiset> {
    let mut out: BTreeMap<String, Multiset> = BTreeMap::new();
    for &id in ids {
        let c = &run.conditions[id];
        out.entry(c.place.clone()).or_default().add(c.token.clone(), 1);
    }
    out
}

/// Replays events in the given order from the net's initial marking and
/// returns the final marking. Each event must be enabled with its recorded
/// binding, and its conditions must match the evaluated arcs.
pub fn replay(net: &Net, run: &ConcurrentRun, order: &[EventId]) -> Result<Marking, RunError> {
    let fail = |msg: String| Err(RunError::Replay(msg));
    let mut available: BTreeSet<ConditionId> = run
        .conditions
        .iter()
        .filter(|c| c.producer.is_none())
        .map(|c| c.id)
        .collect();
    let mut m = net.initial_marking.clone();
    let mut done = BTreeSet::new();
    for &eid in order {
        let Some(e) = run.events.get(eid) else {
            return fail(format!("unknown event {eid}"));
        };
        if !done.insert(eid) {
            return fail(format!("event {eid} occurs twice"));
        }
        for c in &e.consumed {
            if !available.remove(c) {
                return fail(format!("event {eid} consumes unavailable condition {c}"));
            }
        }
        let effect = match net.check_enabled(&m, &e.transition, &e.binding) {
            Ok(eff) => eff,
            Err(reason) => return fail(format!("event {eid} ({}): {reason}", e.transition)),
        };
        if tokens_of(run, &e.consumed) != effect.consumed {
            return fail(format!("event {eid}: consumed conditions differ from the input arcs"));
        }
        if tokens_of(run, &e.produced) != effect.produced {
            return fail(format!("event {eid}: produced conditions differ from the output arcs"));
        }
        m = net
            .fire(&m, &e.transition, &e.binding)
            .map_err(|err| RunError::Replay(err.to_string()))?;
        available.extend(e.produced.iter().copied());
    }
    if done.len() != run.events.len() {
        return fail("order does not contain every event".into());
    }
    Ok(m)
}

/// Structural check of a recorded run plus replay of one topological order.
pub fn check_run(net: &Net, run: &ConcurrentRun) -> Result<(), RunError> {
    let fail = |msg: String| Err(RunError::Replay(msg));
    for (i, c) in run.conditions.iter().enumerate() {
        if c.id != i {
            return fail(format!("condition {i} carries id {}", c.id));
        }
        if net.place_sort(&c.place).is_none() {
            return fail(format!("condition {i} lies on unknown place {}", c.place));
        }
    }
    let mut consumer: BTreeMap<ConditionId, EventId> = BTreeMap::new();
    let mut producer: BTreeMap<ConditionId, EventId> = BTreeMap::new();
    for (i, e) in run.events.iter().enumerate() {
        if e.id != i {
            return fail(format!("event {i} carries id {}", e.id));
        }
        if net.transition(&e.transition).is_none() {
            return fail(format!("event {i} fires unknown transition {}", e.transition));
        }
        for &c in &e.consumed {
            if c >= run.conditions.len() || consumer.insert(c, i).is_some() {
                return fail(format!("condition {c} consumed twice or missing"));
            }
        }
        for &c in &e.produced {
            if c >= run.conditions.len() || producer.insert(c, i).is_some() {
                return fail(format!("condition {c} produced twice or missing"));
            }
        }
    }
    for c in &run.conditions {
        if consumer.get(&c.id).copied() != c.consumer || producer.get(&c.id).copied() != c.producer {
            return fail(format!("condition {} links disagree with the events", c.id));
        }
    }
    if run.initial_marking() != net.initial_marking {
        return fail("initial conditions differ from the initial marking".into());
    }
    let order = topological_order(run, None)?;
    replay(net, run, &order).map(|_| ())
}

/// Whether `run` is an occurrence net of `net` that replays.
pub fn verify_run(net: &Net, run: &ConcurrentRun) -> bool {
    check_run(net, run).is_ok()
}

fn topological_order(run: &ConcurrentRun, mut rng: Option<&mut ChaCha8Rng>) -> Result<Vec<EventId>, RunError> {
    let preds = run.predecessors();
    let n = run.events.len();
    let mut indegree: Vec<usize> = preds.iter().map(BTreeSet::len).collect();
    let mut succs: Vec<Vec<EventId>> = vec![Vec::new(); n];
    for (e, ps) in preds.iter().enumerate() {
        for &p in ps {
            if p >= n {
                return Err(RunError::Replay(format!("unknown producer event {p}")));
            }
            succs[p].push(e);
        }
    }
    let mut ready: BTreeSet<EventId> = (0..n).filter(|&e| indegree[e] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while !ready.is_empty() {
        let pick = match rng.as_deref_mut() {
            Some(r) => *ready.iter().nth(r.gen_range(0..ready.len())).expect("in range"),
            None => *ready.iter().next().expect("non-empty"),
        };
        ready.remove(&pick);
        order.push(pick);
        for &s in &succs[pick] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() != n {
        return Err(RunError::Cyclic);
    }
    Ok(order)
}

/// A seeded random topological order of the causal partial order.
pub fn linearize(run: &ConcurrentRun, seed: u64) -> Result<Vec<EventId>, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    topological_order(run, Some(&mut rng))
}
