use dsession::corpus::{expected_rule, NEGATIVE, PROGRAMS};
use dsession::dynamics::ProofMode;
use dsession::runtime::{run, Outcome, RunOptions, Runtime, Scheduler};
use dsession::syntax::{parse_program, print_program};
use dsession::typeck::check_program;

fn outputs(name: &str, buffered: bool) -> Vec<String> {
    let src = PROGRAMS.iter().find(|(n, _)| *n == name).unwrap().1;
    let rt = Runtime::new(&parse_program(src).unwrap(), ProofMode::Erased, buffered);
    let r = run(&rt, rt.initial().unwrap(), &RunOptions { scheduler: Scheduler::RoundRobin, ..RunOptions::default() });
    assert_eq!(r.outcome, Outcome::Terminated("()".into()), "{name}");
    r.outputs()
}

#[test]
fn every_program_checks() {
    for (n, src) in PROGRAMS {
        let prog = parse_program(src).unwrap_or_else(|e| panic!("{n}: {e:?}"));
        assert_eq!(check_program(&prog), Ok(()), "{n}");
    }
}

#[test]
fn printing_round_trips() {
    for (n, src) in PROGRAMS {
        let prog = parse_program(src).unwrap().without_locs();
        let again = parse_program(&print_program(&prog)).unwrap().without_locs();
        assert_eq!(prog, again, "{n}");
    }
}

#[test]
fn every_mutant_fails_with_its_rule() {
    for (n, src) in NEGATIVE {
        let want = expected_rule(src).unwrap();
        let errs = check_program(&parse_program(src).unwrap()).expect_err(n);
        assert_eq!(errs[0].rule, want, "{n}: {}", errs[0]);
    }
}

#[test]
fn programs_print_what_they_compute() {
    assert_eq!(outputs("equal", false), ["true"]);
    assert_eq!(outputs("counter", false), ["7", "8", "9"]);
    assert_eq!(outputs("array", false), ["10", "20", "30", "40"]);
    assert_eq!(outputs("queue", true), ["10", "20"]);
    assert_eq!(outputs("queue_branch", false), ["10", "20"]);
    assert_eq!(outputs("cloud", false), ["hello world!", "hello world!"]);
}
