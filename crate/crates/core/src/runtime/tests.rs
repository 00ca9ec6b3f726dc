use std::collections::{BTreeMap, VecDeque};

use super::*;
use crate::dynamics::ProofMode;
use crate::syntax::{parse_program, parse_term};

fn runtime(src: &str, buffered: bool) -> Runtime {
    Runtime::new(&parse_program(src).unwrap(), ProofMode::Erased, buffered)
}

fn empty() -> Runtime {
    runtime("(main unit ())", false)
}

fn pool(threads: &[&str], channels: &[ChannelId]) -> Pool {
    let threads: BTreeMap<ThreadId, DynTerm> =
        threads.iter().enumerate().map(|(t, s)| (t as ThreadId, parse_term(s).unwrap().strip_locs())).collect();
    let live = channels
        .iter()
        .map(|&i| (i, Channel { stype: None, holders: [None, None], queues: [VecDeque::new(), VecDeque::new()] }))
        .collect();
    let mut p = Pool {
        next_thread: threads.len() as ThreadId,
        threads,
        channels: ChannelTable { next: channels.iter().max().map_or(0, |m| m + 1), live },
        fresh: 0,
    };
    p.refresh_holders();
    p
}

fn rules(rt: &Runtime, p: &Pool) -> Vec<Rule> {
    rt.enabled_steps(p).into_iter().map(|s| s.rule).collect()
}

#[test]
fn finished_main_has_no_steps() {
    let p = pool(&["()"], &[]);
    assert!(p.is_terminal());
    assert!(empty().enabled_steps(&p).is_empty());
}

#[test]
fn send_and_recv_meet() {
    let rt = empty();
    let p = pool(&["(recv (endpoint 0 1))", "(send (endpoint 0 0) 5)"], &[0]);
    let steps = rt.enabled_steps(&p);
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0].rule, Rule::PrMsg);
    assert_eq!(steps[0].channel, Some(0));
    let (next, events) = rt.apply_step(&p, &steps[0]).unwrap();
    assert_eq!(print_term(&next.threads[&0]), "(pair 5 (endpoint 0 1))");
    assert_eq!(print_term(&next.threads[&1]), "(endpoint 0 0)");
    assert_eq!(events, vec![Event::Send { channel: 0, from: 0, tag: false, value: "5".into() }]);
    assert!(audit_resources(&next).is_ok());
}

#[test]
fn two_receivers_have_no_step() {
    let p = pool(&["(recv (endpoint 0 1))", "(recv (endpoint 0 0))"], &[0]);
    assert!(empty().enabled_steps(&p).is_empty());
}

#[test]
fn close_and_wait_retire_the_channel() {
    let rt = empty();
    let p = pool(&["(wait (endpoint 0 1))", "(close (endpoint 0 0))"], &[0]);
    assert_eq!(rules(&rt, &p), vec![Rule::PrEnd]);
    let (next, _) = rt.apply_step(&p, &rt.enabled_steps(&p)[0]).unwrap();
    assert!(next.channels.live.is_empty());
    assert!(audit_resources(&next).is_ok());
}

#[test]
fn finished_thread_is_removed() {
    let rt = empty();
    let p = pool(&["(print 1)", "()"], &[]);
    let steps = rt.enabled_steps(&p);
    let pr2 = steps.iter().find(|s| s.rule == Rule::Pr2).unwrap();
    assert_eq!(pr2.threads, vec![1]);
    let (next, _) = rt.apply_step(&p, pr2).unwrap();
    assert_eq!(next.threads.len(), 1);
}

#[test]
fn cut_forwards_a_close() {
    let rt = empty();
    let p = pool(&["(wait (endpoint 1 1))", "(cut (endpoint 0 1) (endpoint 1 0))", "(close (endpoint 0 0))"], &[0, 1]);
    let steps = rt.enabled_steps(&p);
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0].rule, Rule::PrCutEnd);
    let (next, _) = rt.apply_step(&p, &steps[0]).unwrap();
    assert!(next.channels.live.is_empty());
    assert!(audit_resources(&next).is_ok());
}

#[test]
fn audit_rejects_a_duplicated_endpoint() {
    let p = pool(&["(pair (endpoint 0 0) (endpoint 0 0))", "(wait (endpoint 0 1))"], &[0]);
    assert!(audit_resources(&p).unwrap_err().contains("occurs 2 times"));
}

#[test]
fn audit_rejects_a_missing_endpoint() {
    let p = pool(&["(wait (endpoint 0 1))"], &[0]);
    assert!(audit_resources(&p).unwrap_err().contains("missing"));
}

#[test]
fn explore_finished_pool_is_one_state() {
    let r = explore(&empty(), pool(&["()"], &[]), 10);
    assert_eq!(r.verdict, Verdict::AllPathsProgress);
    assert_eq!(r.states, 1);
}

#[test]
fn explore_finds_a_deadlock() {
    let p = pool(&["(recv (endpoint 0 1))", "(recv (endpoint 0 0))"], &[0]);
    match explore(&empty(), p, 10).verdict {
        Verdict::DeadlockFound { report, .. } => assert_eq!(report.len(), 2),
        v => panic!("unexpected verdict {v:?}"),
    }
}

#[test]
fn buffered_equal_observes_like_sync() {
    let src = crate::corpus::program("equal").unwrap();
    let opts = RunOptions::default();
    let sync = runtime(src, false);
    let buf = runtime(src, true);
    let a = run(&sync, sync.initial().unwrap(), &opts);
    let b = run(&buf, buf.initial().unwrap(), &opts);
    assert!(matches!(a.outcome, Outcome::Terminated(_)));
    assert_eq!(a.outcome, b.outcome);
    assert_eq!(a.channel_observations(), b.channel_observations());
}

#[test]
fn buffered_send_does_not_wait() {
    let rt = runtime("(main unit ())", true);
    let p = pool(&["(send (endpoint 0 1) 3)", "(recv (endpoint 0 0))"], &[0]);
    assert_eq!(rules(&rt, &p), vec![Rule::PrMsg]);
    let (next, _) = rt.apply_step(&p, &rt.enabled_steps(&p)[0]).unwrap();
    assert_eq!(next.channels.live[&0].queues[1].len(), 1);
    assert!(audit_resources(&next).is_ok());
    assert_eq!(rules(&rt, &next), vec![Rule::PrMsg]);
}

#[test]
fn canonical_key_ignores_channel_numbering() {
    let a = pool(&["(recv (endpoint 3 1))", "(send (endpoint 3 0) 5)"], &[3]);
    let b = pool(&["(recv (endpoint 7 1))", "(send (endpoint 7 0) 5)"], &[7]);
    assert_eq!(canonical_key(&a), canonical_key(&b));
}
