//! Event logs and counting statistics over recorded runs: request
//! frequencies, waiting times, turned-away clients and expert utilization.
//!
//! Durations are measured in logical steps, the distance between event
//! indices in the recorder's firing order.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Binding, Value};
use crate::runs::ConcurrentRun;
use crate::schema::{local_name, Marking, Net};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub place: String,
    pub token: String,
}

/// One line of a JSON-lines event log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: usize,
    pub transition: String,
    pub binding: BTreeMap<String, String>,
    pub consumed: Vec<TokenRecord>,
    pub produced: Vec<TokenRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub net: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub provenance: Option<Provenance>,
    pub records: Vec<EventRecord>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Header {
    provenance: Provenance,
}

/// Events in recorder order, with literal bindings and tokens.
pub fn export_log(run: &ConcurrentRun, provenance: Option<Provenance>) -> EventLog {
    let tokens = |ids: &[usize]| {
        ids.iter()
            .map(|&c| {
                let c = &run.conditions[c];
                TokenRecord {
                    place: c.place.clone(),
                    token: c.token.to_string(),
                }
            })
            .collect()
    };
    let mut events: Vec<_> = run.events.iter().collect();
    events.sort_by_key(|e| e.index);
    EventLog {
        provenance,
        records: events
            .into_iter()
            .map(|e| EventRecord {
                index: e.index,
                transition: e.transition.clone(),
                binding: e.binding.to_literals(),
                consumed: tokens(&e.consumed),
                produced: tokens(&e.produced),
            })
            .collect(),
    }
}

impl EventLog {
    /// JSON lines: an optional `{"provenance": ...}` header, then one record
    /// per event.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        if let Some(p) = &self.provenance {
            serde_json::to_writer(&mut w, &Header { provenance: p.clone() })?;
            writeln!(w)?;
        }
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<EventLog, LogError> {
        let mut log = EventLog::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|source| LogError::Json { line: lineno, source })?;
            if value.get("provenance").is_some() {
                if !log.records.is_empty() || log.provenance.is_some() {
                    return Err(LogError::Invalid {
                        line: lineno,
                        message: "provenance header must come first".into(),
                    });
                }
                let h: Header =
                    serde_json::from_value(value).map_err(|source| LogError::Json { line: lineno, source })?;
                log.provenance = Some(h.provenance);
                continue;
            }
            let rec: EventRecord =
                serde_json::from_value(value).map_err(|source| LogError::Json { line: lineno, source })?;
            if let Some(prev) = log.records.last() {
                if rec.index <= prev.index {
                    return Err(LogError::Invalid {
                        line: lineno,
                        message: format!("index {} does not increase", rec.index),
                    });
                }
            }
            log.records.push(rec);
        }
        Ok(log)
    }

    /// Parses a record's binding against the variable sorts of `net`.
    pub fn binding(net: &Net, rec: &EventRecord) -> Result<Binding, String> {
        let mut b = Binding::new();
        for (var, lit) in &rec.binding {
            let sort = net
                .schema
                .signature
                .variables
                .get(var)
                .ok_or_else(|| format!("unknown variable {var}"))?;
            let v = Value::parse_literal(lit, sort).map_err(|e| format!("{var}={lit}: {e}"))?;
            b.insert(var.clone(), v);
        }
        Ok(b)
    }

    /// Fires the records in order from the initial marking.
    pub fn replay(&self, net: &Net) -> Result<Marking, String> {
        let mut m = net.initial_marking.clone();
        for rec in &self.records {
            let b = Self::binding(net, rec)?;
            m = net
                .fire(&m, &rec.transition, &b)
                .map_err(|e| format!("event {}: {e}", rec.index))?;
        }
        Ok(m)
    }
}

/// Which transitions and variables play which part in the analysis.
/// Transitions are matched by local name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Roles {
    pub request: String,
    pub accept: String,
    pub serve: String,
    pub reject: String,
    pub expert_start: String,
    pub expert_end: String,
    pub client_var: String,
    pub service_var: String,
    pub expert_var: String,
}

impl Default for Roles {
    fn default() -> Self {
        Roles {
            request: "a".into(),
            accept: "b".into(),
            serve: "d".into(),
            reject: "c".into(),
            expert_start: "f".into(),
            expert_end: "g".into(),
            client_var: "c".into(),
            service_var: "s".into(),
            expert_var: "e".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaitOutcome {
    Served,
    TurnedAway,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitEntry {
    pub service: String,
    /// Logical steps from acceptance to resolution.
    pub duration: usize,
    pub outcome: WaitOutcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenRequest {
    pub client: String,
    pub service: String,
    pub accepted_at: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub request_frequency: BTreeMap<String, usize>,
    pub waiting_times: BTreeMap<String, Vec<WaitEntry>>,
    pub turned_away_count: usize,
    pub served_count: usize,
    pub open_requests: Vec<OpenRequest>,
    pub expert_utilization: BTreeMap<String, f64>,
    pub transition_counts: BTreeMap<String, usize>,
    /// Number of logical steps covered by the log.
    pub span: usize,
}

pub fn analyze(log: &EventLog) -> MiningReport {
    analyze_with(log, &Roles::default())
}

/// Single pass over the log.
pub fn analyze_with(log: &EventLog, roles: &Roles) -> MiningReport {
    let mut report = MiningReport::default();
    let (Some(first), Some(last)) = (log.records.first(), log.records.last()) else {
        return report;
    };
    report.span = last.index - first.index + 1;
    let end = last.index + 1;

    let get = |rec: &EventRecord, var: &str| rec.binding.get(var).cloned().unwrap_or_default();
    let mut pending: BTreeMap<String, VecDeque<(String, usize)>> = BTreeMap::new();
    let mut busy_since: BTreeMap<String, VecDeque<usize>> = BTreeMap::new();
    let mut busy: BTreeMap<String, usize> = BTreeMap::new();

    for rec in &log.records {
        let t = local_name(&rec.transition);
        *report.transition_counts.entry(t.to_owned()).or_insert(0) += 1;
        if t == roles.request {
            *report
                .request_frequency
                .entry(get(rec, &roles.service_var))
                .or_insert(0) += 1;
        }
        if t == roles.accept {
            pending
                .entry(get(rec, &roles.client_var))
                .or_default()
                .push_back((get(rec, &roles.service_var), rec.index));
        }
        let outcome = if t == roles.serve {
            Some(WaitOutcome::Served)
        } else if t == roles.reject {
            Some(WaitOutcome::TurnedAway)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            let client = get(rec, &roles.client_var);
            if let Some((service, start)) = pending.get_mut(&client).and_then(VecDeque::pop_front) {
                match outcome {
                    WaitOutcome::Served => report.served_count += 1,
                    WaitOutcome::TurnedAway => report.turned_away_count += 1,
                }
                report.waiting_times.entry(client).or_default().push(WaitEntry {
                    service,
                    duration: rec.index - start,
                    outcome,
                });
            }
        }
        if t == roles.expert_start {
            let e = get(rec, &roles.expert_var);
            busy.entry(e.clone()).or_insert(0);
            busy_since.entry(e).or_default().push_back(rec.index);
        }
        if t == roles.expert_end {
            let e = get(rec, &roles.expert_var);
            if let Some(start) = busy_since.get_mut(&e).and_then(VecDeque::pop_front) {
                *busy.entry(e).or_insert(0) += rec.index - start;
            }
        }
    }
    for (client, queue) in pending {
        for (service, accepted_at) in queue {
            report.open_requests.push(OpenRequest {
                client: client.clone(),
                service,
                accepted_at,
            });
        }
    }
    for (e, starts) in busy_since {
        for s in starts {
            *busy.entry(e.clone()).or_insert(0) += end - s;
        }
    }
    report.expert_utilization = busy
        .into_iter()
        .map(|(e, b)| (e, b as f64 / report.span as f64))
        .collect();
    report
}

impl MiningReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let table = |out: &mut String, title: &str, header: &[&str], rows: Vec<Vec<String>>| {
            let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
            for r in &rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |cells: Vec<String>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_owned()
            };
            let _ = writeln!(out, "{title}");
            let _ = writeln!(out, "{}", line(header.iter().map(|h| h.to_string()).collect()));
            let _ = writeln!(out, "{}", line(widths.iter().map(|w| "-".repeat(*w)).collect()));
            for r in rows {
                let _ = writeln!(out, "{}", line(r));
            }
            let _ = writeln!(out);
        };
        table(
            &mut out,
            "requests per service",
            &["service", "requests"],
            self.request_frequency
                .iter()
                .map(|(s, n)| vec![s.clone(), n.to_string()])
                .collect(),
        );
        let mut waits = Vec::new();
        for (c, entries) in &self.waiting_times {
            for e in entries {
                let outcome = match e.outcome {
                    WaitOutcome::Served => "served",
                    WaitOutcome::TurnedAway => "turned-away",
                };
                waits.push(vec![
                    c.clone(),
                    e.service.clone(),
                    e.duration.to_string(),
                    outcome.to_owned(),
                ]);
            }
        }
        for o in &self.open_requests {
            waits.push(vec![o.client.clone(), o.service.clone(), "-".into(), "open".into()]);
        }
        table(
            &mut out,
            "waiting times (logical steps)",
            &["client", "service", "steps", "outcome"],
            waits,
        );
        table(
            &mut out,
            "expert utilization",
            &["expert", "busy fraction"],
            self.expert_utilization
                .iter()
                .map(|(e, f)| vec![e.clone(), format!("{f:.3}")])
                .collect(),
        );
        let _ = writeln!(
            out,
            "served {}  turned away {}  open {}  span {} steps",
            self.served_count,
            self.turned_away_count,
            self.open_requests.len(),
            self.span
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(index: usize, t: &str, binding: &[(&str, &str)]) -> EventRecord {
        EventRecord {
            index,
            transition: t.into(),
            binding: binding.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            consumed: vec![],
            produced: vec![],
        }
    }

    #[test]
    fn empty_log_gives_zero_report() {
        let r = analyze(&EventLog::default());
        assert_eq!(r, MiningReport::default());
        assert_eq!(export_log(&ConcurrentRun::default(), None), EventLog::default());
    }

    #[test]
    fn waiting_and_utilization() {
        let log = EventLog {
            provenance: None,
            records: vec![
                rec(0, "clients.a", &[("c", "c1"), ("s", "s1")]),
                rec(1, "admin.b+clients.b", &[("a", "a1"), ("c", "c1"), ("s", "s1")]),
                rec(
                    2,
                    "admin.j",
                    &[("a", "a1"), ("c", "c1"), ("s", "s1"), ("e", "e1"), ("r", "r1")],
                ),
                rec(3, "experts.f", &[("e", "e1"), ("r", "r1")]),
                rec(4, "clients.d", &[("c", "c1"), ("r", "r1"), ("s", "s1")]),
                rec(5, "admin.g+experts.g", &[("e", "e1"), ("r", "r1")]),
                rec(6, "clients.a", &[("c", "c2"), ("s", "s1")]),
                rec(7, "admin.b+clients.b", &[("a", "a1"), ("c", "c2"), ("s", "s1")]),
            ],
        };
        let r = analyze(&log);
        assert_eq!(r.request_frequency, BTreeMap::from([("s1".into(), 2)]));
        assert_eq!(
            r.waiting_times["c1"],
            vec![WaitEntry {
                service: "s1".into(),
                duration: 3,
                outcome: WaitOutcome::Served
            }]
        );
        assert_eq!(r.open_requests.len(), 1);
        assert_eq!(r.span, 8);
        assert!((r.expert_utilization["e1"] - 2.0 / 8.0).abs() < 1e-12);
        let table = r.to_table();
        assert!(table.contains("open"));
    }

    #[test]
    fn jsonl_round_trip_and_index_order() {
        let log = EventLog {
            provenance: Some(Provenance {
                net: "n".into(),
                seed: 3,
            }),
            records: vec![rec(0, "t", &[("x", "1")]), rec(1, "u", &[])],
        };
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(EventLog::read_jsonl(text.as_bytes()).unwrap(), log);
        let bad = "{\"index\":1,\"transition\":\"t\",\"binding\":{},\"consumed\":[],\"produced\":[]}\n{\"index\":1,\"transition\":\"t\",\"binding\":{},\"consumed\":[],\"produced\":[]}\n";
        assert!(EventLog::read_jsonl(bad.as_bytes()).is_err());
    }
}
