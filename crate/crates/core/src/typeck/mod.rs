//! Linear dependent type checking of programs and pools.

mod check;
pub mod unify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::constraints::{Assignment, ConstraintStore};
use crate::dynamics::{b, rho, ChannelId, DConst, DynTerm, ResourceItem, Role, Span};
use crate::statics::{Name, SortContext, StaticTerm};
use crate::syntax::{self, Program, StaticParam};

pub use check::Checker;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeError {
    pub rule: String,
    pub span: Option<Span>,
    pub detail: String,
    pub countermodel: Option<Assignment>,
}

impl TypeError {
    pub fn new(rule: impl Into<String>, span: Option<Span>, detail: impl Into<String>) -> Self {
        TypeError {
            rule: rule.into(),
            span,
            detail: detail.into(),
            countermodel: None,
        }
    }
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (line, col) = self.span.map(|s| (s.line, s.col)).unwrap_or((0, 0));
        write!(f, "error[{}] at {line}:{col} \u{2014} {}", self.rule, self.detail)?;
        if let Some(m) = &self.countermodel {
            write!(f, " (countermodel: {m})")?;
        }
        Ok(())
    }
}

impl std::error::Error for TypeError {}

/// A c-type `forall statics. guards => (params) -> ret` over named
/// static parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scheme {
    pub name: Name,
    pub statics: Vec<StaticParam>,
    pub guards: Vec<StaticTerm>,
    pub params: Vec<StaticTerm>,
    pub ret: StaticTerm,
}

impl Scheme {
    fn from_decl(d: &syntax::FunDecl) -> Self {
        let mut guards: Vec<StaticTerm> = d.statics.iter().filter_map(StaticParam::implied_guard).collect();
        guards.extend(d.guards.iter().cloned());
        Scheme {
            name: d.name.clone(),
            statics: d.statics.clone(),
            guards,
            params: d.params.iter().map(|(_, t)| t.clone()).collect(),
            ret: d.ret.clone(),
        }
    }
}

const BUILTINS: &str = "
(fun thread_create ((f (-o unit unit))) unit ())
(fun create {(r1 role) (r2 role) (p stype) | (!= r1 r2)} ((f (-o (chan r2 p) unit))) (chan r1 p) ())
(fun send {(r role) (r0 role) (t vtype) (p stype) | (= r r0)} ((c (chan r (:: (msg r0 t) p))) (x t)) (chan r p) ())
(fun recv {(r role) (r0 role) (t vtype) (p stype) | (!= r r0)} ((c (chan r (:: (msg r0 t) p)))) (tensor t (chan r p)) ())
(fun close {(r role) (r0 role) | (= r r0)} ((c (chan r (end r0)))) unit ())
(fun wait {(r role) (r0 role) | (!= r r0)} ((c (chan r (end r0)))) unit ())
(fun offer {(r role) (r0 role) (p1 stype) (p2 stype) | (!= r r0)} ((c (chan r (branch r0 p1 p2))))
  (exists (b bool) (tensor (bool b) (chan r (ite b p1 p2)))) ())
(fun choose {(r role) (r0 role) (p1 stype) (p2 stype) (b bool) | (= r r0)}
  ((c (chan r (branch r0 p1 p2))) (x (bool b))) (chan r (ite b p1 p2)) ())
(fun itet {(r role) (p1 stype) (p2 stype)} ((c (chan r (ite true p1 p2)))) (chan r p1) ())
(fun itef {(r role) (p1 stype) (p2 stype)} ((c (chan r (ite false p1 p2)))) (chan r p2) ())
(fun cut {(r1 role) (r2 role) (p stype) | (!= r1 r2)} ((a (chan r1 p)) (b (chan r2 p))) unit ())
(fun + {(m int) (n int)} ((x (int m)) (y (int n))) (int (+ m n)) ())
(fun - {(m int) (n int)} ((x (int m)) (y (int n))) (int (- m n)) ())
(fun * {(m int) (n int)} ((x (int m)) (y (int n))) (int (* m n)) ())
(fun neg {(m int)} ((x (int m))) (int (neg m)) ())
(fun = {(m int) (n int)} ((x (int m)) (y (int n))) (bool (= m n)) ())
(fun != {(m int) (n int)} ((x (int m)) (y (int n))) (bool (!= m n)) ())
(fun < {(m int) (n int)} ((x (int m)) (y (int n))) (bool (< m n)) ())
(fun <= {(m int) (n int)} ((x (int m)) (y (int n))) (bool (<= m n)) ())
(fun > {(m int) (n int)} ((x (int m)) (y (int n))) (bool (> m n)) ())
(fun >= {(m int) (n int)} ((x (int m)) (y (int n))) (bool (>= m n)) ())
(fun and {(a bool) (b bool)} ((x (bool a)) (y (bool b))) (bool (and a b)) ())
(fun or {(a bool) (b bool)} ((x (bool a)) (y (bool b))) (bool (or a b)) ())
(fun not {(a bool)} ((x (bool a))) (bool (not a)) ())
(fun print {(t type)} ((x t)) unit ())
(fun array-get {(t type) (n int) (i int) | (<= 0 i) (< i n)} ((a (arrref t n)) (k (int i))) t ())
";

/// Type schemes of constants: the built-in ones plus the program's
/// top-level functions.
#[derive(Clone, Debug, Default)]
pub struct DynSignature {
    entries: BTreeMap<String, Scheme>,
}

impl DynSignature {
    pub fn builtin() -> Self {
        let decls = syntax::parse_builtin_decls(BUILTINS).expect("built-in signatures parse");
        DynSignature {
            entries: decls.iter().map(|d| (d.name.to_string(), Scheme::from_decl(d))).collect(),
        }
    }

    pub fn for_program(p: &Program) -> Self {
        let mut s = Self::builtin();
        for f in &p.funs {
            s.entries.insert(f.name.to_string(), Scheme::from_decl(f));
        }
        s
    }

    pub fn get(&self, op: &DConst) -> Option<&Scheme> {
        self.entries.get(&op.name())
    }
}

/// Typing environment for checking a single term.
#[derive(Clone, Debug, Default)]
pub struct TypingEnv {
    pub sigma: SortContext,
    pub props: ConstraintStore,
    pub gamma: BTreeMap<Name, StaticTerm>,
    pub delta: BTreeMap<Name, StaticTerm>,
}

/// Synthesizes a type for `e` and reports the linear variables of
/// `delta` it consumes.
pub fn typecheck(
    prog: &Program,
    dsig: &DynSignature,
    env: &TypingEnv,
    e: &DynTerm,
) -> Result<(StaticTerm, BTreeSet<Name>), TypeError> {
    let mut c = Checker::new(&prog.sig, dsig, false);
    c.sigma = env.sigma.clone();
    c.store = env.props.clone();
    for (x, t) in env.gamma.iter().chain(&env.delta) {
        c.push_var(x.clone(), t.clone());
    }
    let ty = c.synth(e)?;
    c.finish()?;
    let used = c.used_vars().into_iter().filter(|x| env.delta.contains_key(x)).collect();
    Ok((c.zonk(&ty), used))
}

/// Checks every function and `main`; returns all errors found, at most
/// one per definition.
pub fn check_program(prog: &Program) -> Result<(), Vec<TypeError>> {
    let dsig = DynSignature::for_program(prog);
    let mut errors = Vec::new();
    for f in &prog.funs {
        if let Err(e) = Checker::check_fun(prog, &dsig, f) {
            errors.push(e);
        }
    }
    if let Some(m) = &prog.main {
        let mut c = Checker::new(&prog.sig, &dsig, false);
        c.set_span(Some(m.span));
        if let Err(e) = c.check(&m.body, &m.ty).and_then(|_| c.finish()) {
            errors.push(e);
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Checks that each live endpoint occurs exactly once across `threads`
/// and that nothing else occurs.
pub fn endpoint_multiplicity(
    threads: &BTreeMap<u64, DynTerm>,
    live: &BTreeSet<ChannelId>,
) -> Result<(), TypeError> {
    let mut count: BTreeMap<(ChannelId, Role), usize> = BTreeMap::new();
    for t in threads.values() {
        for (item, n) in rho(t) {
            if let ResourceItem::Endpoint(i, r) = item {
                *count.entry((i, r)).or_insert(0) += n;
            }
        }
    }
    for (&(i, r), &n) in &count {
        if !live.contains(&i) {
            return Err(TypeError::new("endpoint-multiplicity", None, format!("endpoint ({i},{r}) of a closed channel")));
        }
        if n != 1 {
            return Err(TypeError::new("endpoint-multiplicity", None, format!("endpoint ({i},{r}) occurs {n} times")));
        }
    }
    for &i in live {
        for r in 0..2 {
            if !count.contains_key(&(i, r)) {
                return Err(TypeError::new("endpoint-multiplicity", None, format!("endpoint ({i},{r}) is missing")));
            }
        }
    }
    Ok(())
}

/// Types a pool: thread 0 at the declared main type, every other thread
/// at unit. Endpoints take their type from `channels`; `None` stands for
/// a protocol the checker has to reconstruct.
pub fn typecheck_pool(
    prog: &Program,
    dsig: &DynSignature,
    threads: &BTreeMap<u64, DynTerm>,
    channels: &BTreeMap<ChannelId, Option<StaticTerm>>,
) -> Result<(), TypeError> {
    endpoint_multiplicity(threads, &channels.keys().copied().collect())?;
    let mut c = Checker::new(&prog.sig, dsig, true);
    for (&i, st) in channels {
        c.set_channel(i, st.clone());
    }
    let unit = StaticTerm::unit();
    for (&t, e) in threads {
        let expected = match (t, &prog.main) {
            (0, Some(m)) => &m.ty,
            _ => &unit,
        };
        c.check_thread(e, expected)
            .map_err(|mut err| {
                err.detail = format!("thread {t}: {}", err.detail);
                err
            })?;
    }
    c.finish()
}

/// Removes proof functions and the introduction/elimination markers of
/// guards, assertions and quantifiers.
pub fn erase_proofs(e: &DynTerm) -> DynTerm {
    e.map_children(&|t| match t {
        DynTerm::Const { op, args, .. } if op.is_proof() && args.len() == 1 => Some(erase_proofs(&args[0])),
        DynTerm::GuardIntro(x)
        | DynTerm::GuardElim(x)
        | DynTerm::AssertIntro(x)
        | DynTerm::ForallIntro(x)
        | DynTerm::ForallElim { e: x, .. }
        | DynTerm::ExistsIntro { e: x, .. } => Some(erase_proofs(x)),
        DynTerm::LetAssert { x, head, body } | DynTerm::LetExists { x, head, body, .. } => Some(DynTerm::Let {
            x: x.clone(),
            head: b(erase_proofs(head)),
            body: b(erase_proofs(body)),
        }),
        _ => None,
    })
}

#[cfg(test)]
mod tests;
