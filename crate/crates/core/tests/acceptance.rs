//! End-to-end acceptance criteria; prints one PASS/FAIL line each.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use dsession::constraints::{entails, oracle_entails, ConstraintStore, Verdict as Entailment};
use dsession::corpus::{expected_rule, program, NEGATIVE};
use dsession::dynamics::ProofMode;
use dsession::runtime::{explore, run, Outcome, RunOptions, RunReport, Runtime, Scheduler, Verdict};
use dsession::statics::{name, SConst, Sort, StaticTerm};
use dsession::syntax::{parse_program, parse_static, parse_term, Program};
use dsession::typeck::{check_program, typecheck, DynSignature, TypingEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIVE: [&str; 5] = ["equal", "counter", "array", "queue", "cloud"];

fn parsed(n: &str) -> Program {
    parse_program(program(n).expect("corpus program")).expect("corpus program parses")
}

fn exec(prog: &Program, mode: ProofMode, buffered: bool, seed: u64, check: bool) -> RunReport {
    let rt = Runtime::new(prog, mode, buffered);
    let opts = RunOptions {
        scheduler: Scheduler::Seeded(seed),
        audit: check,
        retype: check && !buffered,
        ..RunOptions::default()
    };
    run(&rt, rt.initial().expect("main"), &opts)
}

fn terminated(r: &RunReport) -> bool {
    matches!(r.outcome, Outcome::Terminated(_))
}

fn corpus_runs() -> Result<String, String> {
    let mut slowest = Duration::ZERO;
    for n in FIVE {
        let prog = parsed(n);
        check_program(&prog).map_err(|e| format!("{n}: {}", e[0]))?;
        for seed in 1..=100 {
            let start = Instant::now();
            let r = exec(&prog, ProofMode::Erased, false, seed, false);
            let took = start.elapsed();
            slowest = slowest.max(took);
            if !terminated(&r) {
                return Err(format!("{n} seed {seed}: {:?}", r.outcome));
            }
            if took > Duration::from_secs(5) {
                return Err(format!("{n} seed {seed} took {took:?}"));
            }
        }
    }
    Ok(format!("5 programs x 100 seeds terminated, slowest run {slowest:?}"))
}

fn per_step_retyping() -> Result<String, String> {
    let (mut steps, mut failures) = (0, Vec::new());
    let mut seed = 0;
    while steps < 10_000 {
        seed += 1;
        for n in FIVE {
            for mode in [ProofMode::Erased, ProofMode::Materialized] {
                let r = exec(&parsed(n), mode, false, seed, true);
                steps += r.steps;
                failures.extend(r.type_failures.iter().map(|f| format!("{n} seed {seed}: {f}")));
            }
        }
    }
    match failures.first() {
        None => Ok(format!("{steps} steps retyped, 0 failures")),
        Some(f) => Err(format!("{} failures over {steps} steps, first: {f}", failures.len())),
    }
}

fn exploration() -> Result<String, String> {
    let mut summary = Vec::new();
    for n in FIVE {
        let prog = parsed(n);
        let rt = Runtime::new(&prog, ProofMode::Erased, false);
        let start = Instant::now();
        let r = explore(&rt, rt.initial().expect("main"), 10_000);
        let took = start.elapsed();
        if r.verdict != Verdict::AllPathsProgress {
            return Err(format!("{n}: {:?}", r.verdict));
        }
        if took > Duration::from_secs(60) {
            return Err(format!("{n} took {took:?}"));
        }
        summary.push(format!("{n}={}", r.states));
    }
    Ok(format!("AllPathsProgress, states {}", summary.join(" ")))
}

fn audits() -> Result<String, String> {
    let mut runs = 0;
    for n in FIVE {
        let prog = parsed(n);
        for seed in 1..=10 {
            for buffered in [false, true] {
                let r = exec(&prog, ProofMode::Erased, buffered, seed, true);
                if let Some(f) = r.audit_failures.first() {
                    return Err(format!("{n} seed {seed}: {f}"));
                }
                if !terminated(&r) || !r.final_pool.channels.live.is_empty() {
                    return Err(format!("{n} seed {seed}: live channels at {:?}", r.outcome));
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs audited after every step, no live channels at the end"))
}

const DUALITY: [(&str, &str, &str, &str); 6] = [
    ("end", "(end 0)", "(close c)", "(wait c)"),
    ("msg", "(:: (msg 0 int) (end 0))", "(send c 1)", "(recv c)"),
    ("branch", "(branch 0 (end 0) (end 0))", "(choose c true)", "(offer c)"),
    ("quan", "(quan 0 (lam (n int) (end 0)))", "(unify c)", "(exify c)"),
    ("ite", "(ite true (:: (msg 0 int) (end 0)) (end 0))", "(send (itet c) 1)", "(recv (itet c))"),
    ("fix", "(fix (lam (p stype) (:: (msg 0 int) p)))", "(send (recurse c) 1)", "(recv (recurse c))"),
];

fn duality() -> Result<String, String> {
    let prog = parse_program("").expect("empty program");
    let dsig = DynSignature::for_program(&prog);
    let mut cells = 0;
    for (head, proto, own, dual) in DUALITY {
        for role in 0..2 {
            let mut env = TypingEnv::default();
            env.delta.insert(name("c"), parse_static(&format!("(chan {role} {proto})")).expect("stype"));
            let (accept, reject) = if role == 0 { (own, dual) } else { (dual, own) };
            let tc = |e: &str| typecheck(&prog, &dsig, &env, &parse_term(e).expect("term"));
            if let Err(e) = tc(accept) {
                return Err(format!("{head}/{role}: {accept} rejected: {e}"));
            }
            match tc(reject) {
                Err(e) if e.rule.starts_with("guard(") => cells += 1,
                Err(e) => return Err(format!("{head}/{role}: {reject} rejected by {}", e.rule)),
                Ok(_) => return Err(format!("{head}/{role}: {reject} accepted")),
            }
        }
    }
    Ok(format!("{cells}/12 cells, every rejection a failed guard"))
}

fn mutants() -> Result<String, String> {
    let mut rules = BTreeSet::new();
    for (n, src) in NEGATIVE {
        let want = expected_rule(src).ok_or(format!("{n}: no expect header"))?;
        let prog = parse_program(src).map_err(|e| format!("{n}: {e:?}"))?;
        match check_program(&prog) {
            Ok(()) => return Err(format!("{n}: accepted")),
            Err(errs) if errs[0].rule == want => {
                rules.insert(want);
            }
            Err(errs) => return Err(format!("{n}: {} instead of {want}", errs[0].rule)),
        }
    }
    if NEGATIVE.len() < 10 {
        return Err(format!("only {} mutants", NEGATIVE.len()));
    }
    Ok(format!("{} mutants rejected by their rule ({} distinct rules)", NEGATIVE.len(), rules.len()))
}

const BOUND: i64 = 8;

fn linear(rng: &mut ChaCha8Rng, vars: &[StaticTerm]) -> StaticTerm {
    let mut t = StaticTerm::int(rng.gen_range(-BOUND..=BOUND));
    for v in vars {
        let k = rng.gen_range(-4..=4);
        if k != 0 {
            let term = StaticTerm::app(SConst::Mul, vec![StaticTerm::int(k), v.clone()]);
            t = StaticTerm::app(SConst::Add, vec![t, term]);
        }
    }
    t
}

fn atom(rng: &mut ChaCha8Rng, vars: &[StaticTerm]) -> StaticTerm {
    let cmp = [SConst::Eq, SConst::Ne, SConst::Lt, SConst::Le, SConst::Gt, SConst::Ge][rng.gen_range(0..6)].clone();
    StaticTerm::app(cmp, vec![linear(rng, vars), StaticTerm::int(0)])
}

fn solver_vs_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut valid, mut invalid) = (0, 0);
    for case in 0..500 {
        let n = rng.gen_range(1..=3);
        let names: Vec<_> = ["x", "y", "z"][..n].iter().map(|s| name(s)).collect();
        let vars: Vec<StaticTerm> = names.iter().map(|x| StaticTerm::Free(x.clone())).collect();
        let mut store = ConstraintStore::new();
        for (x, v) in names.iter().zip(&vars) {
            store.declare(x.clone(), Sort::Int);
            store.assume(StaticTerm::app(SConst::Le, vec![StaticTerm::int(-BOUND), v.clone()]));
            store.assume(StaticTerm::app(SConst::Le, vec![v.clone(), StaticTerm::int(BOUND)]));
        }
        for _ in 0..rng.gen_range(0..=2) {
            store.assume(atom(&mut rng, &vars));
        }
        let goal = atom(&mut rng, &vars);
        let oracle = oracle_entails(&store, &goal, BOUND);
        let agree = match entails(&store, &goal) {
            Entailment::Valid => oracle,
            Entailment::Invalid(_) => !oracle,
            Entailment::Unsupported(r) => return Err(format!("case {case}: unsupported: {r}")),
        };
        if !agree {
            return Err(format!("case {case}: solver and oracle disagree on {goal}"));
        }
        if oracle {
            valid += 1;
        } else {
            invalid += 1;
        }
    }
    Ok(format!("500/500 agree ({valid} entailed, {invalid} not)"))
}

fn observations() -> Result<String, String> {
    let mut compared = 0;
    for n in FIVE {
        let prog = parsed(n);
        for seed in 1..=10 {
            let base = exec(&prog, ProofMode::Erased, false, seed, false);
            let others = [
                ("materialized", exec(&prog, ProofMode::Materialized, false, seed, false)),
                ("buffered", exec(&prog, ProofMode::Erased, true, seed, false)),
            ];
            for (what, r) in others {
                if r.channel_observations() != base.channel_observations() || r.outputs() != base.outputs() {
                    return Err(format!("{n} seed {seed}: {what} run observes differently"));
                }
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} runs observe the same per-channel sequences"))
}

/// Tags sent by the server role, which answers dequeues, and the total
/// number of branch steps.
fn tag_counts(n: &str) -> (usize, usize, usize) {
    let prog = parsed(n);
    let rt = Runtime::new(&prog, ProofMode::Erased, false);
    let opts = RunOptions { scheduler: Scheduler::RoundRobin, ..RunOptions::default() };
    let r = run(&rt, rt.initial().expect("main"), &opts);
    let branch: Vec<_> = r.trace.iter().filter(|t| matches!(t.rule.name(), "pr-branch" | "pr-cut-branch")).collect();
    let server: Vec<_> = branch.iter().filter(|t| t.from == Some(0)).collect();
    let nonempty = server.iter().filter(|t| t.payload.as_deref() == Some("true")).count();
    (branch.len(), server.len(), nonempty)
}

fn tagless_dequeue() -> Result<String, String> {
    // both clients dequeue twice from a non-empty queue
    let dequeues = 2;
    let (qb, qs, qn) = tag_counts("queue");
    let (bb, bs, bn) = tag_counts("queue_branch");
    let summary = format!(
        "extra tags per non-empty dequeue: queue {}, queue_branch {}; branch steps {qb} vs {bb}",
        qn / dequeues,
        bn / dequeues
    );
    if qs == 0 && qn == 0 && bn == dequeues && bb > qb && bs >= bn {
        Ok(summary)
    } else {
        Err(summary)
    }
}

type Criterion = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("corpus programs terminate", corpus_runs),
        ("per-step retyping", per_step_retyping),
        ("exhaustive exploration", exploration),
        ("resource audit", audits),
        ("duality matrix", duality),
        ("mutants rejected", mutants),
        ("solver agrees with oracle", solver_vs_oracle),
        ("observational equivalence", observations),
        ("tag-free dequeue", tagless_dequeue),
    ];
    let mut failed = 0;
    for (i, (what, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(m) => println!("PASS {} {what}: {m}", i + 1),
            Err(m) => {
                failed += 1;
                println!("FAIL {} {what}: {m}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
