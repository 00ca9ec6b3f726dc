//! Thread pools, channel tables and the pool reduction rules.

mod sched;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{eval_prop, Assignment};
use crate::dynamics::{
    decompose, rho, ChannelId, DConst, Decomposed, DynTerm, EvalContext, FunDef, Machine, ProofMode, ResourceItem, Role,
};
use crate::statics::{unroll_fix, SConst, StaticTerm};
use crate::syntax::{print_term, Program};
use crate::typeck::{erase_proofs, typecheck_pool, DynSignature};

pub use sched::{
    blocked_report, canonical_key, explore, run, ExploreReport, Outcome, RunOptions, RunReport, Scheduler, TraceRecord, Verdict,
};

pub type ThreadId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    Pr0,
    Pr1,
    Pr2,
    PrCreate,
    PrEnd,
    PrMsg,
    PrBranch,
    PrCutEnd,
    PrCutMsg,
    PrCutBranch,
    /// Two cut threads linked through one channel fuse into one.
    PrCutCut,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Pr0 => "pr0",
            Rule::Pr1 => "pr1",
            Rule::Pr2 => "pr2",
            Rule::PrCreate => "pr-create",
            Rule::PrEnd => "pr-end",
            Rule::PrMsg => "pr-msg",
            Rule::PrBranch => "pr-branch",
            Rule::PrCutEnd => "pr-cut-end",
            Rule::PrCutMsg => "pr-cut-msg",
            Rule::PrCutBranch => "pr-cut-branch",
            Rule::PrCutCut => "pr-cut-cut",
        }
    }

    /// Steps that touch a single thread and no shared channel state.
    pub fn is_local(self) -> bool {
        matches!(self, Rule::Pr0 | Rule::Pr1 | Rule::Pr2 | Rule::PrCreate)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Rule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Step {
    pub rule: Rule,
    pub threads: Vec<ThreadId>,
    pub channel: Option<ChannelId>,
}

/// A buffered message: a value or a branch tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Queued {
    Msg(DynTerm),
    Tag(bool),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    /// Protocol still to run; `None` once it can no longer be tracked
    /// without the erased proof steps.
    pub stype: Option<StaticTerm>,
    pub holders: [Option<ThreadId>; 2],
    /// Buffered mode only; indexed by the sender's role.
    pub queues: [VecDeque<Queued>; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelTable {
    pub next: ChannelId,
    pub live: BTreeMap<ChannelId, Channel>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pool {
    pub threads: BTreeMap<ThreadId, DynTerm>,
    pub next_thread: ThreadId,
    pub channels: ChannelTable,
    /// Counter for renaming static names apart on unfolding.
    pub fresh: u64,
}

impl Pool {
    pub fn new(main: DynTerm) -> Self {
        Pool {
            threads: BTreeMap::from([(0, main)]),
            next_thread: 1,
            channels: ChannelTable::default(),
            fresh: 0,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.threads.len() == 1 && self.threads.get(&0).is_some_and(DynTerm::is_value)
    }

    fn refresh_holders(&mut self) {
        for ch in self.channels.live.values_mut() {
            ch.holders = [None, None];
        }
        for (&t, e) in &self.threads {
            for (i, r) in e.endpoints() {
                if let Some(ch) = self.channels.live.get_mut(&i) {
                    ch.holders[r as usize] = Some(t);
                }
            }
        }
    }

    pub fn channel_types(&self) -> BTreeMap<ChannelId, Option<StaticTerm>> {
        self.channels.live.iter().map(|(&i, c)| (i, c.stype.clone())).collect()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("illegal step {0:?}")]
    IllegalStep(Step),
    #[error("thread {0} is stuck: {1}")]
    Stuck(ThreadId, String),
}

/// Something observable that a step produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Event {
    /// A value or tag entering channel `channel` from role `from`.
    Send { channel: ChannelId, from: Role, tag: bool, value: String },
    Close { channel: ChannelId },
    Output { thread: ThreadId, text: String },
}

/// What a thread is blocked on.
#[derive(Clone, Debug)]
struct Blocked {
    ctx: EvalContext,
    op: DConst,
    statics: Vec<StaticTerm>,
    args: Vec<DynTerm>,
}

impl Blocked {
    fn endpoint(&self, k: usize) -> Option<(ChannelId, Role)> {
        match self.args.get(k) {
            Some(DynTerm::Endpoint(i, r)) => Some((*i, *r)),
            _ => None,
        }
    }
}

/// Renders a value for traces and observations; endpoints are shown
/// without their ids, which depend on the schedule.
pub fn show_value(v: &DynTerm) -> String {
    match v {
        DynTerm::Str(s) => s.to_string(),
        DynTerm::Loc(_, x) => show_value(x),
        _ => {
            let anon = v.map_children(&|t| match t {
                DynTerm::Endpoint(_, r) => Some(DynTerm::Resource(crate::statics::name(&format!("ch.{r}")))),
                _ => None,
            });
            print_term(&anon)
        }
    }
}

fn dual(op: &DConst) -> Option<DConst> {
    Some(match op {
        DConst::Send => DConst::Recv,
        DConst::Recv => DConst::Send,
        DConst::Close => DConst::Wait,
        DConst::Wait => DConst::Close,
        DConst::Choose => DConst::Offer,
        DConst::Offer => DConst::Choose,
        _ => return None,
    })
}

/// Head-normalizes a protocol: unrolls fixpoints and decides ground
/// conditionals. `None` when the head depends on erased proof steps.
fn protocol_head(st: &StaticTerm) -> Option<StaticTerm> {
    let mut cur = st.clone();
    for _ in 0..64 {
        if let Some(u) = unroll_fix(&cur) {
            cur = u;
            continue;
        }
        match cur.head() {
            Some((SConst::Ite, [c, a, b])) => {
                cur = if eval_prop(c, &Assignment::default())? { a.clone() } else { b.clone() };
            }
            Some((SConst::Msg | SConst::Branch | SConst::End, _)) => return Some(cur),
            _ => return None,
        }
    }
    None
}

fn advance_msg(st: &Option<StaticTerm>) -> Option<StaticTerm> {
    match protocol_head(st.as_ref()?)?.head() {
        Some((SConst::Msg, [_, _, p])) => Some(p.clone()),
        _ => None,
    }
}

fn advance_branch(st: &Option<StaticTerm>, b: bool) -> Option<StaticTerm> {
    match protocol_head(st.as_ref()?)?.head() {
        Some((SConst::Branch, [_, l, r])) => {
            Some(StaticTerm::ite(StaticTerm::c0(SConst::Bool(b)), l.clone(), r.clone()))
        }
        _ => None,
    }
}

/// Executes pools of one program.
pub struct Runtime {
    pub funs: BTreeMap<crate::statics::Name, FunDef>,
    pub mode: ProofMode,
    pub buffered: bool,
    pub prog: Program,
    pub dsig: DynSignature,
}

impl Runtime {
    pub fn new(prog: &Program, mode: ProofMode, buffered: bool) -> Self {
        let prep = |e: &DynTerm| match mode {
            ProofMode::Erased => erase_proofs(e),
            ProofMode::Materialized => e.clone(),
        };
        let funs = prog
            .funs
            .iter()
            .map(|f| {
                let def = FunDef {
                    name: f.name.clone(),
                    static_params: f.statics.iter().map(|s| (s.name.clone(), s.sort.clone())).collect(),
                    params: f.params.iter().map(|(x, _)| x.clone()).collect(),
                    body: prep(&f.body),
                };
                (f.name.clone(), def)
            })
            .collect();
        Runtime {
            funs,
            mode,
            buffered,
            prog: prog.clone(),
            dsig: DynSignature::for_program(prog),
        }
    }

    /// The initial pool `[0 -> main]`.
    pub fn initial(&self) -> Option<Pool> {
        let m = self.prog.main.as_ref()?;
        Some(Pool::new(match self.mode {
            ProofMode::Erased => erase_proofs(&m.body),
            ProofMode::Materialized => m.body.clone(),
        }))
    }

    fn blocked(pool: &Pool) -> BTreeMap<ThreadId, Blocked> {
        pool.threads
            .iter()
            .filter_map(|(&t, e)| match decompose(e) {
                Decomposed::Blocked(ctx, op, statics, args) => Some((t, Blocked { ctx, op, statics, args })),
                _ => None,
            })
            .collect()
    }

    /// Every step enabled in `pool`.
    pub fn enabled_steps(&self, pool: &Pool) -> Vec<Step> {
        let mut steps = Vec::new();
        for (&t, e) in &pool.threads {
            match decompose(e) {
                Decomposed::Value if t != 0 => steps.push(Step { rule: Rule::Pr2, threads: vec![t], channel: None }),
                Decomposed::Value => {}
                Decomposed::Redex(..) => steps.push(Step { rule: Rule::Pr0, threads: vec![t], channel: None }),
                Decomposed::Blocked(_, op, ..) => match op {
                    DConst::ThreadCreate => steps.push(Step { rule: Rule::Pr1, threads: vec![t], channel: None }),
                    DConst::Create => steps.push(Step { rule: Rule::PrCreate, threads: vec![t], channel: None }),
                    _ => {}
                },
            }
        }
        let blocked = Self::blocked(pool);
        // who is blocked on which endpoint, and how
        let mut on: BTreeMap<(ChannelId, Role), (ThreadId, DConst)> = BTreeMap::new();
        for (&t, b) in &blocked {
            if b.op == DConst::Cut {
                for k in 0..2 {
                    if let Some(ep) = b.endpoint(k) {
                        on.insert(ep, (t, DConst::Cut));
                    }
                }
            } else if let Some(ep) = b.endpoint(0) {
                on.insert(ep, (t, b.op.clone()));
            }
        }
        let queues = |i: ChannelId| pool.channels.live.get(&i).map(|c| &c.queues);
        let drained = |i: ChannelId| queues(i).is_some_and(|q| q.iter().all(VecDeque::is_empty));
        for (&(i, r), (t1, op)) in &on {
            let partner = on.get(&(i, 1 - r));
            match op {
                DConst::Send | DConst::Choose if self.buffered => {
                    let rule = if *op == DConst::Send { Rule::PrMsg } else { Rule::PrBranch };
                    steps.push(Step { rule, threads: vec![*t1], channel: Some(i) });
                }
                DConst::Recv | DConst::Offer if self.buffered => {
                    if queues(i).is_some_and(|q| !q[1 - r as usize].is_empty()) {
                        let rule = if *op == DConst::Recv { Rule::PrMsg } else { Rule::PrBranch };
                        steps.push(Step { rule, threads: vec![*t1], channel: Some(i) });
                    }
                }
                DConst::Send | DConst::Close | DConst::Choose => {
                    if let Some((t2, op2)) = partner {
                        if dual(op).as_ref() == Some(op2) && (!self.buffered || drained(i)) {
                            let rule = match op {
                                DConst::Send => Rule::PrMsg,
                                DConst::Close => Rule::PrEnd,
                                _ => Rule::PrBranch,
                            };
                            steps.push(Step { rule, threads: vec![*t1, *t2], channel: Some(i) });
                        }
                    }
                }
                _ => {}
            }
        }
        for (&t, b) in &blocked {
            if b.op != DConst::Cut {
                continue;
            }
            let (Some(x), Some(y)) = (b.endpoint(0), b.endpoint(1)) else { continue };
            if x.0 == y.0 || x.1 == y.1 {
                continue;
            }
            for (x, y) in [(x, y), (y, x)] {
                let near = on.get(&(x.0, 1 - x.1));
                let far = on.get(&(y.0, 1 - y.1));
                if let Some((t2, DConst::Cut)) = near {
                    if t < *t2 && (!self.buffered || drained(x.0)) {
                        steps.push(Step { rule: Rule::PrCutCut, threads: vec![t, *t2], channel: Some(x.0) });
                    }
                    if !self.buffered {
                        continue;
                    }
                }
                if self.buffered {
                    // forward whatever arrived at the cut's endpoint on x
                    if let Some(head) = queues(x.0).and_then(|q| q[1 - x.1 as usize].front()) {
                        let rule = if matches!(head, Queued::Tag(_)) { Rule::PrCutBranch } else { Rule::PrCutMsg };
                        steps.push(Step { rule, threads: vec![t], channel: Some(x.0) });
                    }
                    if let (Some((t1, DConst::Close)), Some((t2, DConst::Wait))) = (near, far) {
                        if drained(x.0) && drained(y.0) {
                            steps.push(Step { rule: Rule::PrCutEnd, threads: vec![*t1, t, *t2], channel: Some(x.0) });
                        }
                    }
                    continue;
                }
                if let (Some((t1, op1)), Some((t2, op2))) = (near, far) {
                    let rule = match (op1, op2) {
                        (DConst::Close, DConst::Wait) => Rule::PrCutEnd,
                        (DConst::Send, DConst::Recv) => Rule::PrCutMsg,
                        (DConst::Choose, DConst::Offer) => Rule::PrCutBranch,
                        _ => continue,
                    };
                    steps.push(Step { rule, threads: vec![*t1, t, *t2], channel: Some(x.0) });
                }
            }
        }
        steps
    }
}

fn strip(e: &DynTerm) -> &DynTerm {
    match e {
        DynTerm::Loc(_, x) => strip(x),
        _ => e,
    }
}

impl Runtime {
    fn blocked_at(pool: &Pool, t: ThreadId) -> Option<Blocked> {
        match decompose(pool.threads.get(&t)?) {
            Decomposed::Blocked(ctx, op, statics, args) => Some(Blocked { ctx, op, statics, args }),
            _ => None,
        }
    }

    /// Applies one enabled step, returning the successor pool and what
    /// the step made observable.
    pub fn apply_step(&self, pool: &Pool, step: &Step) -> Result<(Pool, Vec<Event>), RuntimeError> {
        let illegal = || RuntimeError::IllegalStep(step.clone());
        let blocked = |k: usize| step.threads.get(k).and_then(|&t| Self::blocked_at(pool, t)).ok_or_else(illegal);
        let mut next = pool.clone();
        let mut events = Vec::new();
        let t0 = *step.threads.first().ok_or_else(illegal)?;
        match step.rule {
            Rule::Pr0 => {
                let e = pool.threads.get(&t0).ok_or_else(illegal)?;
                let Decomposed::Redex(ctx, r) = decompose(e) else { return Err(illegal()) };
                if let DynTerm::Const { op: DConst::Print, args, .. } = strip(&r) {
                    events.push(Event::Output { thread: t0, text: args.first().map(show_value).unwrap_or_default() });
                }
                let mut m = Machine::new(&self.funs, self.mode);
                m.fresh = pool.fresh;
                let out = m.contract(&r).map_err(|e| RuntimeError::Stuck(t0, e.to_string()))?;
                next.fresh = m.fresh;
                next.threads.insert(t0, ctx.plug(out));
            }
            Rule::Pr1 => {
                let b = blocked(0)?;
                let f = b.args.first().cloned().ok_or_else(illegal)?;
                let t = next.next_thread;
                next.next_thread += 1;
                next.threads.insert(t0, b.ctx.plug(DynTerm::Unit));
                next.threads.insert(t, DynTerm::App(Box::new(f), Box::new(DynTerm::Unit)));
            }
            Rule::Pr2 => {
                if t0 == 0 || !pool.threads.get(&t0).is_some_and(DynTerm::is_value) {
                    return Err(illegal());
                }
                next.threads.remove(&t0);
            }
            Rule::PrCreate => {
                let b = blocked(0)?;
                let f = b.args.first().cloned().ok_or_else(illegal)?;
                let role = |k: usize, default: i64| b.statics.get(k).and_then(StaticTerm::as_int).unwrap_or(default);
                let (r1, r2) = (role(0, 1), role(1, 0));
                if !(0..2).contains(&r1) || !(0..2).contains(&r2) || r1 == r2 {
                    return Err(RuntimeError::Stuck(t0, format!("create with roles {r1} and {r2}")));
                }
                let i = next.channels.next;
                next.channels.next += 1;
                let stype = b.statics.get(2).filter(|s| s.is_ground()).cloned();
                next.channels.live.insert(i, Channel { stype, holders: [None, None], queues: Default::default() });
                let t = next.next_thread;
                next.next_thread += 1;
                next.threads.insert(t0, b.ctx.plug(DynTerm::Endpoint(i, r1 as Role)));
                next.threads.insert(t, DynTerm::App(Box::new(f), Box::new(DynTerm::Endpoint(i, r2 as Role))));
            }
            Rule::PrEnd => {
                let (b1, b2) = (blocked(0)?, blocked(1)?);
                let i = b1.endpoint(0).ok_or_else(illegal)?.0;
                next.threads.insert(step.threads[0], b1.ctx.plug(DynTerm::Unit));
                next.threads.insert(step.threads[1], b2.ctx.plug(DynTerm::Unit));
                next.channels.live.remove(&i);
                events.push(Event::Close { channel: i });
            }
            Rule::PrMsg | Rule::PrBranch if self.buffered => {
                let b = blocked(0)?;
                let (i, r) = b.endpoint(0).ok_or_else(illegal)?;
                let ch = next.channels.live.get_mut(&i).ok_or_else(illegal)?;
                ch.stype = None;
                let ep = DynTerm::Endpoint(i, r);
                let result = match (&b.op, b.args.get(1)) {
                    (DConst::Send, Some(v)) => {
                        ch.queues[r as usize].push_back(Queued::Msg(v.clone()));
                        events.push(Event::Send { channel: i, from: r, tag: false, value: show_value(v) });
                        ep
                    }
                    (DConst::Choose, Some(DynTerm::Bool(v))) => {
                        ch.queues[r as usize].push_back(Queued::Tag(*v));
                        events.push(Event::Send { channel: i, from: r, tag: true, value: v.to_string() });
                        ep
                    }
                    (DConst::Recv, _) => match ch.queues[1 - r as usize].pop_front() {
                        Some(Queued::Msg(v)) => DynTerm::pair(v, ep),
                        _ => return Err(illegal()),
                    },
                    (DConst::Offer, _) => match ch.queues[1 - r as usize].pop_front() {
                        Some(Queued::Tag(v)) => DynTerm::pair(DynTerm::Bool(v), ep),
                        _ => return Err(illegal()),
                    },
                    _ => return Err(illegal()),
                };
                next.threads.insert(t0, b.ctx.plug(result));
            }
            Rule::PrMsg | Rule::PrBranch => {
                let (b1, b2) = (blocked(0)?, blocked(1)?);
                let (e1, e2) = (b1.endpoint(0).ok_or_else(illegal)?, b2.endpoint(0).ok_or_else(illegal)?);
                let v = b1.args.get(1).cloned().ok_or_else(illegal)?;
                let ch = next.channels.live.get_mut(&e1.0).ok_or_else(illegal)?;
                ch.stype = match (step.rule, &v) {
                    (Rule::PrMsg, _) => advance_msg(&ch.stype),
                    (_, DynTerm::Bool(x)) => advance_branch(&ch.stype, *x),
                    _ => return Err(illegal()),
                };
                let tag = step.rule == Rule::PrBranch;
                events.push(Event::Send { channel: e1.0, from: e1.1, tag, value: show_value(&v) });
                next.threads.insert(step.threads[0], b1.ctx.plug(DynTerm::Endpoint(e1.0, e1.1)));
                next.threads.insert(step.threads[1], b2.ctx.plug(DynTerm::pair(v, DynTerm::Endpoint(e2.0, e2.1))));
            }
            Rule::PrCutMsg | Rule::PrCutBranch if self.buffered => {
                let b = blocked(0)?;
                let i = step.channel.ok_or_else(illegal)?;
                let (x, y) = match (b.endpoint(0), b.endpoint(1)) {
                    (Some(x), Some(y)) if x.0 == i => (x, y),
                    (Some(y), Some(x)) if x.0 == i => (x, y),
                    _ => return Err(illegal()),
                };
                let item = next
                    .channels
                    .live
                    .get_mut(&x.0)
                    .and_then(|c| c.queues[1 - x.1 as usize].pop_front())
                    .ok_or_else(illegal)?;
                let (tag, value) = match &item {
                    Queued::Msg(v) => (false, show_value(v)),
                    Queued::Tag(v) => (true, v.to_string()),
                };
                events.push(Event::Send { channel: y.0, from: y.1, tag, value });
                next.channels.live.get_mut(&y.0).ok_or_else(illegal)?.queues[y.1 as usize].push_back(item);
            }
            Rule::PrCutMsg | Rule::PrCutBranch => {
                let (b1, b2) = (blocked(0)?, blocked(2)?);
                let (e1, e2) = (b1.endpoint(0).ok_or_else(illegal)?, b2.endpoint(0).ok_or_else(illegal)?);
                let v = b1.args.get(1).cloned().ok_or_else(illegal)?;
                for (i, from) in [(e1.0, e1.1), (e2.0, 1 - e2.1)] {
                    let ch = next.channels.live.get_mut(&i).ok_or_else(illegal)?;
                    ch.stype = match (step.rule, &v) {
                        (Rule::PrCutMsg, _) => advance_msg(&ch.stype),
                        (_, DynTerm::Bool(x)) => advance_branch(&ch.stype, *x),
                        _ => return Err(illegal()),
                    };
                    let tag = step.rule == Rule::PrCutBranch;
                    events.push(Event::Send { channel: i, from, tag, value: show_value(&v) });
                }
                next.threads.insert(step.threads[0], b1.ctx.plug(DynTerm::Endpoint(e1.0, e1.1)));
                next.threads.insert(step.threads[2], b2.ctx.plug(DynTerm::pair(v, DynTerm::Endpoint(e2.0, e2.1))));
            }
            Rule::PrCutEnd => {
                let bs = [blocked(0)?, blocked(1)?, blocked(2)?];
                let (i, j) = (bs[0].endpoint(0).ok_or_else(illegal)?.0, bs[2].endpoint(0).ok_or_else(illegal)?.0);
                for (k, b) in bs.iter().enumerate() {
                    next.threads.insert(step.threads[k], b.ctx.plug(DynTerm::Unit));
                }
                for c in [i, j] {
                    next.channels.live.remove(&c);
                    events.push(Event::Close { channel: c });
                }
            }
            Rule::PrCutCut => {
                let (b1, b2) = (blocked(0)?, blocked(1)?);
                let k = step.channel.ok_or_else(illegal)?;
                let other = |b: &Blocked| {
                    (0..2).filter_map(|n| b.endpoint(n)).find(|e| e.0 != k).ok_or_else(illegal)
                };
                let (x, y) = (other(&b1)?, other(&b2)?);
                let fused = DynTerm::Const {
                    op: DConst::Cut,
                    statics: b1.statics.clone(),
                    args: vec![DynTerm::Endpoint(x.0, x.1), DynTerm::Endpoint(y.0, y.1)],
                };
                next.threads.insert(step.threads[0], b1.ctx.plug(fused));
                next.threads.insert(step.threads[1], b2.ctx.plug(DynTerm::Unit));
                next.channels.live.remove(&k);
            }
        }
        next.refresh_holders();
        Ok((next, events))
    }

    /// Retypes a pool; see [`typecheck_pool`].
    pub fn retype(&self, pool: &Pool) -> Result<(), crate::typeck::TypeError> {
        typecheck_pool(&self.prog, &self.dsig, &pool.threads, &pool.channel_types())
    }
}

/// Resource validity: every live endpoint occurs exactly once, counting
/// values buffered in channels, and no endpoint of a retired channel
/// occurs anywhere.
pub fn audit_resources(pool: &Pool) -> Result<(), String> {
    let mut count: BTreeMap<(ChannelId, Role), usize> = BTreeMap::new();
    let mut add = |e: &DynTerm| {
        for (item, n) in rho(e) {
            if let ResourceItem::Endpoint(i, r) = item {
                *count.entry((i, r)).or_insert(0) += n;
            }
        }
    };
    pool.threads.values().for_each(&mut add);
    for ch in pool.channels.live.values() {
        for q in &ch.queues {
            for item in q {
                if let Queued::Msg(v) = item {
                    add(v);
                }
            }
        }
    }
    for (&(i, r), &n) in &count {
        if !pool.channels.live.contains_key(&i) {
            return Err(format!("endpoint ({i},{r}) of a retired channel"));
        }
        if n != 1 {
            return Err(format!("endpoint ({i},{r}) occurs {n} times"));
        }
    }
    let live: BTreeSet<_> = pool.channels.live.keys().collect();
    for i in live {
        for r in 0..2 {
            if !count.contains_key(&(*i, r)) {
                return Err(format!("endpoint ({i},{r}) is missing"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
