//! Schedulers, whole-program runs and exhaustive exploration.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{audit_resources, Event, Pool, Runtime, RuntimeError, Step, ThreadId};
use crate::dynamics::{decompose, ChannelId, Decomposed, DynTerm, Role};
use crate::syntax::print_term;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduler {
    Seeded(u64),
    RoundRobin,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub scheduler: Scheduler,
    pub max_steps: usize,
    /// Run `audit_resources` after every step.
    pub audit: bool,
    /// Retype the pool after every step.
    pub retype: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { scheduler: Scheduler::Seeded(1), max_steps: 100_000, audit: false, retype: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Terminated(String),
    /// Blocked threads, each with what it waits for.
    Deadlock(Vec<String>),
    DepthExceeded,
    Stuck(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub rule: super::Rule,
    pub threads: Vec<ThreadId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelId>,
    /// Role of the sending endpoint for message and tag steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<Role>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub trace: Vec<TraceRecord>,
    pub events: Vec<Event>,
    pub steps: usize,
    pub audit_failures: Vec<String>,
    pub type_failures: Vec<String>,
    pub final_pool: Pool,
}

impl RunReport {
    /// Printed lines in order.
    pub fn outputs(&self) -> Vec<String> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Output { text, .. } => Some(text.clone()),
                _ => None,
            })
            .collect()
    }

    /// Per-channel sequences of `(sender role, tag?, value)`, sorted so
    /// that runs allocating channel ids in another order compare equal.
    pub fn channel_observations(&self) -> Vec<Vec<(u8, bool, String)>> {
        let mut per: BTreeMap<ChannelId, Vec<(u8, bool, String)>> = BTreeMap::new();
        for e in &self.events {
            if let Event::Send { channel, from, tag, value } = e {
                per.entry(*channel).or_default().push((*from, *tag, value.clone()));
            }
        }
        let mut v: Vec<_> = per.into_values().collect();
        v.sort();
        v
    }

    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace record") + "\n")
            .collect()
    }
}

/// Describes what each non-finished thread waits for.
pub fn blocked_report(pool: &Pool) -> Vec<String> {
    pool.threads
        .iter()
        .filter_map(|(t, e)| match decompose(e) {
            Decomposed::Blocked(_, op, statics, args) => {
                let call = DynTerm::Const { op, statics, args };
                Some(format!("thread {t} blocked on {}", print_term(&call)))
            }
            Decomposed::Value if *t != 0 => Some(format!("thread {t} finished")),
            _ => None,
        })
        .collect()
}

fn payload(events: &[Event]) -> Option<String> {
    events.iter().find_map(|e| match e {
        Event::Send { value, .. } => Some(value.clone()),
        Event::Output { text, .. } => Some(text.clone()),
        Event::Close { .. } => None,
    })
}

/// Runs `pool` to completion under one scheduler.
pub fn run(rt: &Runtime, pool: Pool, opts: &RunOptions) -> RunReport {
    let mut rng = match opts.scheduler {
        Scheduler::Seeded(s) => Some(ChaCha8Rng::seed_from_u64(s)),
        Scheduler::RoundRobin => None,
    };
    let mut cursor: ThreadId = 0;
    let mut report = RunReport {
        outcome: Outcome::DepthExceeded,
        trace: Vec::new(),
        events: Vec::new(),
        steps: 0,
        audit_failures: Vec::new(),
        type_failures: Vec::new(),
        final_pool: pool,
    };
    loop {
        let pool = &report.final_pool;
        if pool.is_terminal() {
            report.outcome = Outcome::Terminated(print_term(&pool.threads[&0]));
            return report;
        }
        let steps = rt.enabled_steps(pool);
        if steps.is_empty() {
            report.outcome = Outcome::Deadlock(blocked_report(pool));
            return report;
        }
        if report.steps >= opts.max_steps {
            return report;
        }
        let pick = match rng.as_mut() {
            Some(r) => r.gen_range(0..steps.len()),
            None => {
                let k = steps.iter().position(|s| s.threads[0] >= cursor).unwrap_or(0);
                cursor = steps[k].threads[0] + 1;
                k
            }
        };
        let step = &steps[pick];
        let (next, events) = match rt.apply_step(pool, step) {
            Ok(x) => x,
            Err(e) => {
                report.outcome = Outcome::Stuck(e.to_string());
                return report;
            }
        };
        report.steps += 1;
        report.trace.push(TraceRecord {
            step: report.steps,
            rule: step.rule,
            threads: step.threads.clone(),
            channel: step.channel,
            from: events.iter().find_map(|e| match e {
                Event::Send { from, .. } => Some(*from),
                _ => None,
            }),
            payload: payload(&events),
        });
        report.events.extend(events);
        if opts.audit {
            if let Err(e) = audit_resources(&next) {
                report.audit_failures.push(format!("step {}: {e}", report.steps));
            }
        }
        if opts.retype {
            if let Err(e) = rt.retype(&next) {
                report.type_failures.push(format!("step {} ({}): {e}", report.steps, step.rule));
            }
        }
        report.final_pool = next;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    AllPathsProgress,
    DeadlockFound { trace: Vec<Step>, report: Vec<String> },
    Stuck(String),
    DepthExceeded,
}

#[derive(Clone, Debug)]
pub struct ExploreReport {
    pub verdict: Verdict,
    pub states: usize,
}

const LOCAL_LIMIT: usize = 1_000_000;

/// Takes local steps until every thread is finished or blocked on a
/// channel. Local steps commute with all others, so exploring only the
/// saturated pools loses no deadlock.
fn saturate(rt: &Runtime, mut pool: Pool) -> Result<Option<Pool>, RuntimeError> {
    for _ in 0..LOCAL_LIMIT {
        let Some(step) = rt.enabled_steps(&pool).into_iter().find(|s| s.rule.is_local()) else {
            return Ok(Some(pool));
        };
        pool = rt.apply_step(&pool, &step)?.0;
    }
    Ok(None)
}

/// Renames thread ids, channel ids and `#k` static names by order of
/// appearance.
pub fn canonical_key(pool: &Pool) -> String {
    let mut chans: BTreeMap<ChannelId, ChannelId> = BTreeMap::new();
    let mut out = String::new();
    let rename = |e: &DynTerm, chans: &mut BTreeMap<ChannelId, ChannelId>| {
        for (i, _) in e.endpoints() {
            let n = chans.len() as ChannelId;
            chans.entry(i).or_insert(n);
        }
        let m = chans.clone();
        print_term(&e.map_children(&|t| match t {
            DynTerm::Endpoint(i, r) => Some(DynTerm::Endpoint(m[i], *r)),
            _ => None,
        }))
    };
    for e in pool.threads.values() {
        out.push_str(&rename(e, &mut chans));
        out.push('\n');
    }
    for (i, ch) in &pool.channels.live {
        for q in &ch.queues {
            out.push_str(&format!("q{}:", chans.get(i).copied().unwrap_or(u64::MAX)));
            for item in q {
                match item {
                    super::Queued::Msg(v) => out.push_str(&rename(v, &mut chans)),
                    super::Queued::Tag(b) => out.push_str(&b.to_string()),
                }
                out.push(',');
            }
            out.push('\n');
        }
    }
    canonical_suffixes(&out)
}

fn canonical_suffixes(s: &str) -> String {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        out.push(c);
        if c == '#' {
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            let n = seen.len();
            out.push_str(&seen.entry(digits).or_insert(n).to_string());
        }
    }
    out
}

/// Explores every interleaving of channel steps from `pool`, visiting at
/// most `max_states` canonical states.
pub fn explore(rt: &Runtime, pool: Pool, max_states: usize) -> ExploreReport {
    let stuck = |e: RuntimeError, states| ExploreReport { verdict: Verdict::Stuck(e.to_string()), states };
    let start = match saturate(rt, pool) {
        Ok(Some(p)) => p,
        Ok(None) => return ExploreReport { verdict: Verdict::DepthExceeded, states: 0 },
        Err(e) => return stuck(e, 0),
    };
    // parent links for reporting the path to a deadlock
    let mut nodes: Vec<(Option<usize>, Option<Step>)> = vec![(None, None)];
    let mut visited: HashSet<String> = HashSet::from([canonical_key(&start)]);
    let mut stack = vec![(start, 0usize)];
    while let Some((pool, id)) = stack.pop() {
        if pool.is_terminal() {
            continue;
        }
        let steps = rt.enabled_steps(&pool);
        if steps.is_empty() {
            let mut trace = Vec::new();
            let mut cur = Some(id);
            while let Some(n) = cur {
                if let Some(s) = &nodes[n].1 {
                    trace.push(s.clone());
                }
                cur = nodes[n].0;
            }
            trace.reverse();
            return ExploreReport {
                verdict: Verdict::DeadlockFound { trace, report: blocked_report(&pool) },
                states: visited.len(),
            };
        }
        for s in steps {
            let next = match rt.apply_step(&pool, &s).and_then(|(p, _)| saturate(rt, p)) {
                Ok(Some(p)) => p,
                Ok(None) => return ExploreReport { verdict: Verdict::DepthExceeded, states: visited.len() },
                Err(e) => return stuck(e, visited.len()),
            };
            if visited.insert(canonical_key(&next)) {
                if visited.len() > max_states {
                    return ExploreReport { verdict: Verdict::DepthExceeded, states: visited.len() };
                }
                nodes.push((Some(id), Some(s)));
                stack.push((next, nodes.len() - 1));
            }
        }
    }
    ExploreReport { verdict: Verdict::AllPathsProgress, states: visited.len() }
}
