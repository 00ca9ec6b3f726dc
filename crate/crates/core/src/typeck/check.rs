//! The bidirectional checker. Linear usage is threaded through `used`
//! flags on the variable stack rather than by splitting contexts.

use std::collections::{BTreeMap, BTreeSet};

use super::unify::{Metas, Obligation, Unifier, UnifyError};
use super::{DynSignature, TypeError};
use crate::constraints::{entails, ConstraintStore, Verdict};
use crate::dynamics::{collect_static_names, rho, ChannelId, DConst, DynTerm, Span};
use crate::statics::{
    beta_normalize, name, sort_check, unroll_fix, Name, SConst, Sort, SortContext, StaticSignature, StaticTerm,
};
use crate::syntax::{FunDecl, Program, StaticParam};

#[derive(Clone, Debug)]
struct Var {
    name: Name,
    ty: StaticTerm,
    used: bool,
}

pub struct Checker<'a> {
    pub sig: &'a StaticSignature,
    pub dsig: &'a DynSignature,
    pub sigma: SortContext,
    pub store: ConstraintStore,
    metas: Metas,
    obligations: Vec<Obligation>,
    fresh: u64,
    implicit: bool,
    vars: Vec<Var>,
    span: Option<Span>,
    channels: BTreeMap<ChannelId, StaticTerm>,
}

fn strip(e: &DynTerm) -> &DynTerm {
    match e {
        DynTerm::Loc(_, x) => strip(x),
        _ => e,
    }
}

fn is_unannotated_lam(e: &DynTerm) -> bool {
    matches!(strip(e), DynTerm::Lam { ann: None, .. })
}

/// Lambdas are checked against a known arrow so that `->` rejects
/// linear captures instead of failing subsumption.
fn check_as_lam(e: &DynTerm, expected: &StaticTerm) -> bool {
    is_unannotated_lam(e)
        || (matches!(strip(e), DynTerm::Lam { .. })
            && matches!(expected.head(), Some((SConst::Fun | SConst::Lolli, _))))
}

impl<'a> Checker<'a> {
    /// `implicit` enables the reconstruction used on erased pools: proof
    /// steps are inferred at channel heads and quantifiers are opened
    /// automatically.
    pub fn new(sig: &'a StaticSignature, dsig: &'a DynSignature, implicit: bool) -> Self {
        Checker {
            sig,
            dsig,
            sigma: SortContext::new(),
            store: ConstraintStore::new(),
            metas: Metas::default(),
            obligations: Vec::new(),
            fresh: 0,
            implicit,
            vars: Vec::new(),
            span: None,
            channels: BTreeMap::new(),
        }
    }

    pub fn set_span(&mut self, s: Option<Span>) {
        self.span = s;
    }

    pub fn set_channel(&mut self, i: ChannelId, st: Option<StaticTerm>) {
        let st = st.unwrap_or_else(|| self.metas.fresh(Sort::SType));
        self.channels.insert(i, st);
    }

    pub fn zonk(&self, t: &StaticTerm) -> StaticTerm {
        self.metas.zonk(t)
    }

    pub fn push_var(&mut self, x: Name, ty: StaticTerm) {
        self.vars.push(Var { name: x, ty, used: false });
    }

    pub fn used_vars(&self) -> BTreeSet<Name> {
        self.vars.iter().filter(|v| v.used).map(|v| v.name.clone()).collect()
    }

    fn pop_var(&mut self) -> Result<(), TypeError> {
        let v = self.vars.pop().expect("scope");
        if !v.used && self.is_linear(&v.ty) {
            return Err(self.err(
                "ty-drop",
                format!("linear variable `{}` of type `{}` is never consumed", v.name, self.zonk(&v.ty)),
            ));
        }
        Ok(())
    }

    fn err(&self, rule: &str, detail: impl Into<String>) -> TypeError {
        TypeError::new(rule, self.span, detail)
    }

    fn uerr(&self, rule: &str, context: &str, e: UnifyError) -> TypeError {
        match e {
            UnifyError::Mismatch(d, m) => {
                let mut err = self.err(rule, if context.is_empty() { d } else { format!("{context}: {d}") });
                err.countermodel = m;
                err
            }
            UnifyError::Unsupported(r) => self.err("constraint-nonlinear", r),
        }
    }

    fn unifier<'s>(&'s mut self, rule: &'s str) -> Unifier<'s> {
        Unifier {
            sig: self.sig,
            store: &mut self.store,
            metas: &mut self.metas,
            obligations: &mut self.obligations,
            fresh: &mut self.fresh,
            implicit: self.implicit,
            span: self.span,
            rule,
        }
    }

    fn sub(&mut self, actual: &StaticTerm, expected: &StaticTerm, rule: &str, context: &str) -> Result<(), TypeError> {
        let r = self.unifier(rule).sub(actual, expected);
        r.map_err(|e| self.uerr(rule, context, e))
    }

    fn require(&mut self, prop: &StaticTerm, rule: &str) -> Result<(), TypeError> {
        let r = self.unifier(rule).require(prop);
        r.map_err(|e| self.uerr(rule, "", e))
    }

    fn unify(&mut self, a: &StaticTerm, b: &StaticTerm, sort: &Sort, rule: &str) -> Result<(), TypeError> {
        let r = self.unifier(rule).unify(a, b, sort);
        r.map_err(|e| self.uerr(rule, "", e))
    }

    fn entailed(&self, p: &StaticTerm) -> bool {
        matches!(entails(&self.store, &self.zonk(p)), Verdict::Valid)
    }

    pub fn is_linear(&self, ty: &StaticTerm) -> bool {
        fn go(sig: &StaticSignature, t: &StaticTerm) -> bool {
            match t.head() {
                Some((SConst::Chan | SConst::Tensor | SConst::Lolli, _)) => true,
                Some((SConst::Base(n), _)) => sig.base_is_linear(n),
                Some((SConst::Forall(_) | SConst::Exists(_), [StaticTerm::Lam(_, body)])) => go(sig, body),
                Some((SConst::Guard | SConst::Assert, [_, t])) => go(sig, t),
                Some((SConst::Prod, [a, b])) => go(sig, a) || go(sig, b),
                _ => false,
            }
        }
        go(self.sig, &self.zonk(ty))
    }

    fn declare(&mut self, n: Name, s: Sort) {
        if s.is_index() {
            self.store.declare(n.clone(), s.clone());
        }
        self.sigma.push(n, s);
    }

    fn rigid(&mut self, base: &str, s: &Sort) -> Name {
        self.fresh += 1;
        let n = name(&format!("{base}#{}", self.fresh));
        self.declare(n.clone(), s.clone());
        n
    }

    fn check_sort(&self, t: &StaticTerm, want: &Sort) -> Result<(), TypeError> {
        if self.implicit || t.has_metas() {
            return Ok(());
        }
        let found = sort_check(&self.sigma, self.sig, t).map_err(|e| self.err("sort", format!("`{t}`: {e}")))?;
        if !found.is_subsort_of(want) {
            return Err(self.err("sort", format!("`{t}` has sort {found}, expected {want}")));
        }
        Ok(())
    }

    fn flags(&self) -> Vec<bool> {
        self.vars.iter().map(|v| v.used).collect()
    }

    fn set_flags(&mut self, f: &[bool]) {
        for (v, u) in self.vars.iter_mut().zip(f) {
            v.used = *u;
        }
    }

    /// Decides outstanding obligations. In implicit mode obligations that
    /// still mention unsolved metavariables are dropped.
    pub fn finish(&mut self) -> Result<(), TypeError> {
        let obs = std::mem::take(&mut self.obligations);
        for ob in obs {
            let prop = self.zonk(&ob.prop);
            let mut store = ob.store.clone();
            store.assumptions = store.assumptions.iter().map(|a| self.zonk(a)).collect();
            if prop.has_metas() {
                if self.implicit {
                    continue;
                }
                return Err(TypeError::new(
                    "cannot-infer",
                    ob.span,
                    format!("static arguments for `{prop}` cannot be inferred; give them explicitly"),
                ));
            }
            match entails(&store, &prop) {
                Verdict::Valid => {}
                Verdict::Invalid(m) => {
                    let mut e = TypeError::new(ob.rule.clone(), ob.span, format!("`{prop}` is not entailed"));
                    e.countermodel = Some(m);
                    return Err(e);
                }
                Verdict::Unsupported(r) => return Err(TypeError::new("constraint-nonlinear", ob.span, r)),
            }
        }
        Ok(())
    }

    // -- entry points -----------------------------------------------------

    pub fn synth(&mut self, e: &DynTerm) -> Result<StaticTerm, TypeError> {
        self.go(e, None)
    }

    pub fn check(&mut self, e: &DynTerm, expected: &StaticTerm) -> Result<(), TypeError> {
        self.go(e, Some(expected)).map(|_| ())
    }

    pub(super) fn check_fun(prog: &Program, dsig: &DynSignature, f: &FunDecl) -> Result<(), TypeError> {
        let mut c = Checker::new(&prog.sig, dsig, false);
        c.span = Some(f.span);
        for p in &f.statics {
            c.declare(p.name.clone(), p.sort.clone());
        }
        let guards: Vec<StaticTerm> = f
            .statics
            .iter()
            .filter_map(StaticParam::implied_guard)
            .chain(f.guards.iter().cloned())
            .collect();
        for g in guards {
            c.check_sort(&g, &Sort::Bool)?;
            c.store.assume(g);
        }
        for (x, t) in &f.params {
            c.check_sort(t, &Sort::VType)?;
            c.push_var(x.clone(), t.clone());
        }
        c.check_sort(&f.ret, &Sort::VType)?;
        c.check(&f.body, &f.ret)?;
        c.span = Some(f.span);
        for _ in &f.params {
            c.pop_var()?;
        }
        c.finish()
    }

    /// Checks one pool thread. Static names the checker does not know
    /// (left behind by unfolding) become metavariables.
    fn expects_marker(&self, e: &DynTerm, expected: Option<&StaticTerm>) -> bool {
        let Some(ez) = expected.map(|t| self.zonk(t)) else { return false };
        matches!(
            (e, ez.head()),
            (DynTerm::GuardIntro(_), Some((SConst::Guard, _)))
                | (DynTerm::AssertIntro(_), Some((SConst::Assert, _)))
                | (DynTerm::ForallIntro(_), Some((SConst::Forall(_), _)))
                | (DynTerm::ExistsIntro { .. }, Some((SConst::Exists(_), _)))
        )
    }

    pub fn check_thread(&mut self, e: &DynTerm, expected: &StaticTerm) -> Result<(), TypeError> {
        self.vars.clear();
        let mut names = BTreeSet::new();
        collect_static_names(e, &mut names);
        let mut map = BTreeMap::new();
        for n in names {
            if self.sigma.lookup(&n).is_none() {
                map.insert(n, self.metas.fresh(Sort::Int));
            }
        }
        let e = if map.is_empty() { e.clone() } else { e.map_statics(&|s| s.subst_frees(&map)) };
        self.check(&e, expected)
    }

    // -- the judgment -----------------------------------------------------

    fn go(&mut self, e: &DynTerm, expected: Option<&StaticTerm>) -> Result<StaticTerm, TypeError> {
        match e {
            DynTerm::Loc(sp, x) => {
                let old = self.span;
                self.span = Some(*sp);
                let r = self.go(x, expected);
                self.span = old;
                r
            }
            DynTerm::If(c, t, f) => self.if_(c, t, f, expected),
            DynTerm::Lam { param, ann, body } => self.lam(param, ann.as_ref(), body, expected),
            DynTerm::Let { x, head, body } => {
                let th = self.synth(head)?;
                let th = self.open(th)?;
                self.push_var(x.clone(), th);
                let r = self.go(body, expected)?;
                self.pop_var()?;
                Ok(r)
            }
            DynTerm::App(f, a) if is_unannotated_lam(f) => {
                let DynTerm::Lam { param, body, .. } = strip(f) else { unreachable!() };
                let ta = self.synth(a)?;
                let ta = self.open(ta)?;
                self.push_var(param.clone(), ta);
                let r = self.go(body, expected)?;
                self.pop_var()?;
                Ok(r)
            }
            DynTerm::LetPair { a, b, head, body } => {
                let th = self.synth(head)?;
                let th = self.open(th)?;
                let (l, r) = self.split_pair(&th)?;
                self.push_var(a.clone(), l);
                self.push_var(b.clone(), r);
                let res = self.go(body, expected)?;
                self.pop_var()?;
                self.pop_var()?;
                Ok(res)
            }
            DynTerm::LetAssert { x, head, body } => {
                let th = { let t0 = self.synth(head)?; self.zonk(&t0) };
                let (p, t) = match th.head() {
                    Some((SConst::Assert, [p, t])) => (p.clone(), t.clone()),
                    _ if self.implicit => (StaticTerm::bool(true), th.clone()),
                    _ => return Err(self.err("ty-assert-elim", format!("expected an asserting type, found `{th}`"))),
                };
                let n = self.store.assumptions.len();
                self.store.assume(p);
                self.push_var(x.clone(), t);
                let r = self.go(body, expected);
                self.store.assumptions.truncate(n);
                let r = r?;
                self.pop_var()?;
                Ok(r)
            }
            DynTerm::LetExists { svar, x, head, body } => {
                let th = { let t0 = self.synth(head)?; self.zonk(&t0) };
                let (sort, inner) = match th.head() {
                    Some((SConst::Exists(s), [StaticTerm::Lam(_, inner)])) => (s.clone(), (**inner).clone()),
                    _ if self.implicit => {
                        self.push_var(x.clone(), th);
                        let r = self.go(body, expected)?;
                        self.pop_var()?;
                        return Ok(r);
                    }
                    _ => return Err(self.err("ty-exists-elim", format!("expected an existential type, found `{th}`"))),
                };
                let endpoint = matches!(inner.head(), Some((SConst::Chan, _)));
                if self.implicit && endpoint {
                    let m = self.metas.fresh(sort.clone());
                    let body = body.map_statics(&|s| s.subst_free(svar, &m));
                    self.push_var(x.clone(), beta_normalize(&StaticTerm::instantiate(&inner, &m)));
                    let r = self.go(&body, expected)?;
                    self.pop_var()?;
                    return Ok(r);
                }
                let fresh_needed = self.implicit || self.sigma.lookup(svar).is_some() || self.store.var_sorts.contains_key(svar);
                let a = if fresh_needed { self.rigid(svar, &sort) } else {
                    self.declare(svar.clone(), sort.clone());
                    svar.clone()
                };
                let body = if a != *svar {
                    let to = StaticTerm::Free(a.clone());
                    body.map_statics(&|s| s.subst_free(svar, &to))
                } else {
                    (**body).clone()
                };
                let bound = beta_normalize(&StaticTerm::instantiate(&inner, &StaticTerm::Free(a.clone())));
                self.push_var(x.clone(), bound);
                let r = self.go(&body, expected)?;
                self.pop_var()?;
                let rz = self.zonk(&r);
                if rz.free_names().contains(&a) {
                    return Err(self.err("ty-exists-elim", format!("static variable `{svar}` escapes in `{rz}`")));
                }
                Ok(r)
            }
            DynTerm::Pair(x, y) => {
                if let Some(exp) = expected {
                    let ez = self.zonk(exp);
                    if let Some((SConst::Prod | SConst::Tensor, [l, r])) = ez.head() {
                        let (l, r) = (l.clone(), r.clone());
                        self.check(x, &l)?;
                        self.check(y, &r)?;
                        return Ok(ez);
                    }
                }
                let tx = self.synth(x)?;
                let ty = self.synth(y)?;
                let c = if self.is_linear(&tx) || self.is_linear(&ty) { SConst::Tensor } else { SConst::Prod };
                self.finish_with(StaticTerm::c2(c, tx, ty), expected)
            }
            // runtime markers around values are transparent when retyping
            // a pool unless the expected type asks for their form
            DynTerm::GuardIntro(x)
            | DynTerm::AssertIntro(x)
            | DynTerm::ForallIntro(x)
            | DynTerm::ExistsIntro { e: x, .. }
                if self.implicit && !self.expects_marker(e, expected) =>
            {
                // a quantifier marker around an endpoint is what unify or
                // exify left behind
                match (e, strip(x)) {
                    (DynTerm::ForallIntro(_), DynTerm::Endpoint(..)) => {
                        self.go(&DynTerm::call(DConst::Unify, vec![(**x).clone()]), expected)
                    }
                    (DynTerm::ExistsIntro { .. }, DynTerm::Endpoint(..)) => {
                        self.go(&DynTerm::call(DConst::Exify, vec![(**x).clone()]), expected)
                    }
                    _ => self.go(x, expected),
                }
            }
            DynTerm::GuardIntro(x) => {
                let ez = self.expect_form(expected, "ty-guard-intr", "a guarded type")?;
                match ez.head() {
                    Some((SConst::Guard, [p, t])) => {
                        let (p, t) = (p.clone(), t.clone());
                        let n = self.store.assumptions.len();
                        self.store.assume(p);
                        let r = self.check(x, &t);
                        self.store.assumptions.truncate(n);
                        r?;
                        Ok(ez)
                    }
                    _ => Err(self.err("ty-guard-intr", format!("expected a guarded type, found `{ez}`"))),
                }
            }
            DynTerm::AssertIntro(x) => {
                let ez = self.expect_form(expected, "ty-assert-intr", "an asserting type")?;
                match ez.head() {
                    Some((SConst::Assert, [p, t])) => {
                        let (p, t) = (p.clone(), t.clone());
                        self.require(&p, "ty-assert-intr")?;
                        self.check(x, &t)?;
                        Ok(ez)
                    }
                    _ => Err(self.err("ty-assert-intr", format!("expected an asserting type, found `{ez}`"))),
                }
            }
            DynTerm::ForallIntro(x) => {
                let ez = self.expect_form(expected, "ty-forall-intr", "a universal type")?;
                match ez.head() {
                    Some((SConst::Forall(s), [StaticTerm::Lam(_, body)])) => {
                        let (s, body) = (s.clone(), (**body).clone());
                        let a = self.rigid("a", &s);
                        let t = beta_normalize(&StaticTerm::instantiate(&body, &StaticTerm::Free(a)));
                        self.check(x, &t)?;
                        Ok(ez)
                    }
                    _ => Err(self.err("ty-forall-intr", format!("expected a universal type, found `{ez}`"))),
                }
            }
            DynTerm::ExistsIntro { witness, e: x } => {
                let ez = self.expect_form(expected, "ty-exists-intr", "an existential type")?;
                match ez.head() {
                    Some((SConst::Exists(s), [StaticTerm::Lam(_, body)])) => {
                        let (s, body) = (s.clone(), (**body).clone());
                        let w = match witness {
                            Some(w) => {
                                self.check_sort(w, &s)?;
                                w.clone()
                            }
                            None => self.metas.fresh(s),
                        };
                        let t = beta_normalize(&StaticTerm::instantiate(&body, &w));
                        self.check(x, &t)?;
                        Ok(ez)
                    }
                    _ => Err(self.err("ty-exists-intr", format!("expected an existential type, found `{ez}`"))),
                }
            }
            _ => {
                let t = self.synth_simple(e)?;
                self.finish_with(t, expected)
            }
        }
    }

    fn finish_with(&mut self, t: StaticTerm, expected: Option<&StaticTerm>) -> Result<StaticTerm, TypeError> {
        match expected {
            Some(exp) => {
                let t = self.open(t)?;
                self.sub(&t, exp, "ty-sub", "")?;
                Ok(exp.clone())
            }
            None => Ok(t),
        }
    }

    fn expect_form(&self, expected: Option<&StaticTerm>, rule: &str, what: &str) -> Result<StaticTerm, TypeError> {
        match expected {
            Some(e) => Ok(self.zonk(e)),
            None => Err(self.err(rule, format!("cannot synthesize {what}; an annotation is needed"))),
        }
    }

    /// Forms that only synthesize.
    fn synth_simple(&mut self, e: &DynTerm) -> Result<StaticTerm, TypeError> {
        Ok(match e {
            DynTerm::Var(x) => self.use_var(x)?,
            DynTerm::Unit => StaticTerm::unit(),
            DynTerm::Int(i) => StaticTerm::int_s(StaticTerm::int(*i)),
            DynTerm::Bool(v) => StaticTerm::bool_s(StaticTerm::bool(*v)),
            DynTerm::Str(_) => StaticTerm::c0(SConst::StrTy),
            DynTerm::Resource(r) => {
                if self.sig.base(r).is_none() {
                    return Err(self.err("ty-res", format!("unknown resource type `{r}`")));
                }
                StaticTerm::c0(SConst::Base(r.clone()))
            }
            DynTerm::Endpoint(i, r) => match self.channels.get(i) {
                Some(st) => StaticTerm::chan(StaticTerm::int(*r as i64), st.clone()),
                None => return Err(self.err("ty-pool", format!("endpoint of unknown channel {i}"))),
            },
            DynTerm::Fst(x) | DynTerm::Snd(x) => {
                let t = self.synth(x)?;
                let t = { let t0 = self.open(t)?; self.zonk(&t0) };
                match t.head() {
                    Some((SConst::Prod, [l, r])) if !self.is_linear(l) && !self.is_linear(r) => {
                        if matches!(e, DynTerm::Fst(_)) {
                            l.clone()
                        } else {
                            r.clone()
                        }
                    }
                    _ => return Err(self.err("ty-fst", format!("projection needs a non-linear pair, found `{t}`"))),
                }
            }
            DynTerm::App(f, a) => {
                let tf = self.synth(f)?;
                let tf = { let t0 = self.open(tf)?; self.zonk(&t0) };
                match tf.head() {
                    Some((SConst::Fun | SConst::Lolli, [d, c])) => {
                        let (d, c) = (d.clone(), c.clone());
                        if check_as_lam(a, &d) {
                            self.check(a, &d)?;
                        } else {
                            let ta = self.synth(a)?;
                            let ta = self.open(ta)?;
                            self.sub(&ta, &d, "ty-app", "argument")?;
                        }
                        c
                    }
                    _ => return Err(self.err("ty-app", format!("applying a non-function of type `{tf}`"))),
                }
            }
            DynTerm::GuardElim(x) => {
                let t = { let t0 = self.synth(x)?; self.zonk(&t0) };
                match t.head() {
                    Some((SConst::Guard, [p, t])) => {
                        let (p, t) = (p.clone(), t.clone());
                        self.require(&p, "ty-guard-elim")?;
                        t
                    }
                    _ => return Err(self.err("ty-guard-elim", format!("expected a guarded type, found `{t}`"))),
                }
            }
            DynTerm::ForallElim { e: x, inst } => {
                let t = { let t0 = self.synth(x)?; self.zonk(&t0) };
                match t.head() {
                    Some((SConst::Forall(s), [StaticTerm::Lam(_, body)])) => {
                        let (s, body) = (s.clone(), (**body).clone());
                        let w = match inst {
                            Some(w) => {
                                self.check_sort(w, &s)?;
                                w.clone()
                            }
                            None => self.metas.fresh(s),
                        };
                        beta_normalize(&StaticTerm::instantiate(&body, &w))
                    }
                    _ => return Err(self.err("ty-forall-elim", format!("expected a universal type, found `{t}`"))),
                }
            }
            DynTerm::Const { op, statics, args } => self.constant(op, statics, args)?,
            DynTerm::Array { elem_ty, items } => {
                self.check_sort(elem_ty, &Sort::Type)?;
                for it in items {
                    self.check(it, elem_ty)?;
                }
                StaticTerm::c2(SConst::ArrRef, elem_ty.clone(), StaticTerm::int(items.len() as i64))
            }
            other => return Err(self.err("ty-annot", format!("cannot synthesize a type for `{}`", crate::syntax::print_term(other)))),
        })
    }

    fn use_var(&mut self, x: &Name) -> Result<StaticTerm, TypeError> {
        let Some(i) = self.vars.iter().rposition(|v| v.name == *x) else {
            return Err(self.err("ty-var", format!("unbound variable `{x}`")));
        };
        let ty = self.vars[i].ty.clone();
        if self.vars[i].used && self.is_linear(&ty) {
            return Err(self.err("ty-var-l", format!("linear variable `{x}` is used more than once")));
        }
        self.vars[i].used = true;
        Ok(ty)
    }

    fn split_pair(&mut self, t: &StaticTerm) -> Result<(StaticTerm, StaticTerm), TypeError> {
        let tz = self.zonk(t);
        match tz.head() {
            Some((SConst::Tensor | SConst::Prod, [l, r])) => Ok((l.clone(), r.clone())),
            _ if matches!(tz, StaticTerm::Meta(_)) => {
                let l = self.metas.fresh(Sort::VType);
                let r = self.metas.fresh(Sort::VType);
                self.unify(&tz, &StaticTerm::tensor(l.clone(), r.clone()), &Sort::VType, "ty-tup")?;
                Ok((l, r))
            }
            _ => Err(self.err("ty-tup", format!("expected a pair, found `{tz}`"))),
        }
    }

    /// Implicit mode: opens existentials, instantiates universals and
    /// discharges guards and assertions at the head of `t`.
    fn open(&mut self, t: StaticTerm) -> Result<StaticTerm, TypeError> {
        if !self.implicit {
            return Ok(t);
        }
        let mut t = self.zonk(&t);
        loop {
            let next = match t.head() {
                Some((SConst::Exists(s), [StaticTerm::Lam(_, body)])) => {
                    let (s, body) = (s.clone(), (**body).clone());
                    let w = self.rigid("w", &s);
                    StaticTerm::instantiate(&body, &StaticTerm::Free(w))
                }
                Some((SConst::Forall(s), [StaticTerm::Lam(_, body)])) => {
                    let (s, body) = (s.clone(), (**body).clone());
                    let m = self.metas.fresh(s);
                    StaticTerm::instantiate(&body, &m)
                }
                Some((SConst::Guard, [p, body])) => {
                    let (p, body) = (p.clone(), body.clone());
                    self.require(&p, "ty-guard-elim")?;
                    body
                }
                Some((SConst::Assert, [p, body])) => {
                    let (p, body) = (p.clone(), body.clone());
                    self.store.assume(p);
                    body
                }
                _ => return Ok(t),
            };
            t = self.zonk(&next);
        }
    }

    fn lam(
        &mut self,
        param: &Name,
        ann: Option<&StaticTerm>,
        body: &DynTerm,
        expected: Option<&StaticTerm>,
    ) -> Result<StaticTerm, TypeError> {
        let ez = expected.map(|e| self.zonk(e));
        let (dom, cod, want) = match ez.as_ref().and_then(|e| e.head()) {
            Some((c @ (SConst::Fun | SConst::Lolli), [d, r])) => (Some(d.clone()), Some(r.clone()), Some(c.clone())),
            _ => (None, None, None),
        };
        let pty = match (ann, &dom) {
            (Some(a), Some(d)) => {
                self.check_sort(a, &Sort::VType)?;
                self.sub(d, a, "ty-lam", "parameter annotation")?;
                a.clone()
            }
            (Some(a), None) => {
                self.check_sort(a, &Sort::VType)?;
                a.clone()
            }
            (None, Some(d)) => d.clone(),
            (None, None) => {
                return Err(self.err("ty-lam", format!("cannot infer the type of parameter `{param}`; annotate it")))
            }
        };
        let before = self.flags();
        self.push_var(param.clone(), pty.clone());
        let bt = self.go(body, cod.as_ref())?;
        self.pop_var()?;
        let captured: Vec<Name> = self
            .vars
            .iter()
            .zip(&before)
            .filter(|(v, was)| v.used && !**was && self.is_linear(&v.ty))
            .map(|(v, _)| v.name.clone())
            .collect();
        let holds_resources = !rho(body).is_empty();
        let linear = !captured.is_empty() || holds_resources;
        if want == Some(SConst::Fun) && linear {
            let what = match captured.first() {
                Some(x) => format!("linear variable `{x}`"),
                None => "a resource".to_string(),
            };
            return Err(self.err("ty-lam-i", format!("a `->` function may not capture {what}")));
        }
        let c = match want {
            Some(c) => c,
            None if linear => SConst::Lolli,
            None => SConst::Fun,
        };
        let t = StaticTerm::c2(c, pty, bt);
        match (expected, &dom) {
            (Some(exp), None) => {
                self.sub(&t, exp, "ty-sub", "")?;
                Ok(exp.clone())
            }
            _ => Ok(t),
        }
    }

    fn if_(
        &mut self,
        c: &DynTerm,
        t: &DynTerm,
        f: &DynTerm,
        expected: Option<&StaticTerm>,
    ) -> Result<StaticTerm, TypeError> {
        let ct = self.synth(c)?;
        let ct = { let t0 = self.open(ct)?; self.zonk(&t0) };
        let p = match ct.head() {
            Some((SConst::BoolS, [p])) => p.clone(),
            Some((SConst::BoolTy, _)) => StaticTerm::bool(true),
            _ => return Err(self.err("ty-if", format!("condition has type `{ct}`, expected a boolean"))),
        };
        let not_p = StaticTerm::not(p.clone());
        let dead = |s: &Self, q: &StaticTerm| !q.has_metas() && *q != StaticTerm::bool(true) && s.store.with(q.clone()).is_inconsistent();
        let then_dead = !matches!(ct.head(), Some((SConst::BoolTy, _))) && dead(self, &p);
        let else_dead = !matches!(ct.head(), Some((SConst::BoolTy, _))) && dead(self, &not_p);
        let n = self.store.assumptions.len();
        let before = self.flags();

        let mut res_t = None;
        if !then_dead {
            self.store.assume(p.clone());
            let r = self.go(t, expected);
            self.store.assumptions.truncate(n);
            res_t = Some(r?);
        }
        let flags_t = self.flags();
        self.set_flags(&before);

        let mut res_e = None;
        if !else_dead {
            if matches!(ct.head(), Some((SConst::BoolS, _))) {
                self.store.assume(not_p);
            }
            let exp2 = expected.cloned().or_else(|| res_t.clone());
            let r = self.go(f, exp2.as_ref());
            self.store.assumptions.truncate(n);
            res_e = Some(r?);
        }
        let flags_e = self.flags();

        if !then_dead && !else_dead {
            let differ: Vec<Name> = self
                .vars
                .iter()
                .zip(flags_t.iter().zip(&flags_e))
                .filter(|(v, (a, b))| a != b && self.is_linear(&v.ty))
                .map(|(v, _)| v.name.clone())
                .collect();
            if let Some(x) = differ.first() {
                return Err(self.err("ty-if", format!("only one branch consumes linear variable `{x}`")));
            }
            if rho(t) != rho(f) {
                return Err(self.err("ty-if", "branches hold different resources"));
            }
        }
        self.set_flags(if then_dead { &flags_e } else { &flags_t });
        Ok(match (expected, res_t, res_e) {
            (Some(e), _, _) => e.clone(),
            (None, Some(r), _) | (None, None, Some(r)) => r,
            (None, None, None) => self.metas.fresh(Sort::VType),
        })
    }

    // -- constants --------------------------------------------------------

    fn constant(&mut self, op: &DConst, statics: &[StaticTerm], args: &[DynTerm]) -> Result<StaticTerm, TypeError> {
        if matches!(op, DConst::Unify | DConst::Exify | DConst::Recurse) {
            return self.proof_op(op, args);
        }
        let Some(scheme) = self.dsig.get(op).cloned() else {
            return Err(self.err("ty-cst", format!("unknown function `{}`", op.name())));
        };
        let opname = op.name();
        if args.len() != scheme.params.len() {
            return Err(self.err(
                "ty-cst",
                format!("`{opname}` expects {} arguments, found {}", scheme.params.len(), args.len()),
            ));
        }
        let mut inst = BTreeMap::new();
        if statics.is_empty() {
            for p in &scheme.statics {
                let m = self.metas.fresh(p.sort.clone());
                inst.insert(p.name.clone(), m);
            }
        } else {
            if statics.len() != scheme.statics.len() {
                return Err(self.err(
                    "ty-cst",
                    format!("`{opname}` expects {} static arguments, found {}", scheme.statics.len(), statics.len()),
                ));
            }
            for (p, s) in scheme.statics.iter().zip(statics) {
                self.check_sort(s, &p.sort)?;
                inst.insert(p.name.clone(), s.clone());
            }
        }
        let session_op = matches!(
            op,
            DConst::Send | DConst::Recv | DConst::Close | DConst::Wait | DConst::Offer | DConst::Choose | DConst::Itet | DConst::Itef
        );
        for (i, (a, pty)) in args.iter().zip(&scheme.params).enumerate() {
            let pty = pty.subst_frees(&inst);
            let pz = self.zonk(&pty);
            if check_as_lam(a, &pz) {
                self.check(a, &pz)?;
                continue;
            }
            let at = self.synth(a)?;
            let mut at = self.open(at)?;
            if self.implicit && session_op && i == 0 {
                at = self.normalize_chan(&at, op)?;
            }
            self.sub(&at, &pty, "ty-cst", &format!("argument {} of `{opname}`", i + 1))?;
        }
        let rule = format!("guard({opname})");
        for g in &scheme.guards {
            self.require(&g.subst_frees(&inst), &rule)?;
        }
        Ok(self.zonk(&scheme.ret.subst_frees(&inst)))
    }

    fn proof_op(&mut self, op: &DConst, args: &[DynTerm]) -> Result<StaticTerm, TypeError> {
        let opname = op.name();
        if args.len() != 1 {
            return Err(self.err("ty-cst", format!("`{opname}` expects one argument")));
        }
        let at = self.synth(&args[0])?;
        let at = { let t0 = self.open(at)?; self.zonk(&t0) };
        let (r, pi) = match at.head() {
            Some((SConst::Chan, [r, pi])) => (r.clone(), pi.clone()),
            _ => return Err(self.err("ty-cst", format!("`{opname}` expects an endpoint, found `{at}`"))),
        };
        if *op == DConst::Recurse {
            return match unroll_fix(&pi) {
                Some(u) => Ok(StaticTerm::chan(r, u)),
                None if self.implicit => Ok(StaticTerm::chan(r, pi)),
                None => Err(self.err("ty-cst", format!("`recurse` expects a recursive session, found `{pi}`"))),
            };
        }
        let (sort, r0, f) = match pi.head() {
            Some((SConst::Quan(s), [r0, f])) => (s.clone(), r0.clone(), f.clone()),
            _ => return Err(self.err("ty-cst", format!("`{opname}` expects a quantified session, found `{pi}`"))),
        };
        let (guard, q) = if *op == DConst::Unify {
            (StaticTerm::eq(r.clone(), r0), SConst::Forall(sort.clone()))
        } else {
            (StaticTerm::ne(r.clone(), r0), SConst::Exists(sort.clone()))
        };
        self.require(&guard, &format!("guard({opname})"))?;
        let body = StaticTerm::chan(r, StaticTerm::apply(f, StaticTerm::Bound(0)));
        Ok(StaticTerm::c1(q, beta_normalize(&StaticTerm::lam(sort, body))))
    }

    /// Implicit mode: performs the proof steps an erased program left out
    /// so that the endpoint's session has the shape `op` needs.
    fn normalize_chan(&mut self, at: &StaticTerm, op: &DConst) -> Result<StaticTerm, TypeError> {
        let t = self.zonk(at);
        let (r, mut pi) = match t.head() {
            Some((SConst::Chan, [r, pi])) => (r.clone(), pi.clone()),
            _ => return Ok(t),
        };
        for _ in 0..64 {
            pi = self.zonk(&pi);
            let next = match pi.head() {
                Some((SConst::Fix | SConst::HoFix(_), _)) => unroll_fix(&pi),
                Some((SConst::Ite, [c, _, b])) if *op == DConst::Itet && self.entailed(&StaticTerm::not(c.clone())) => {
                    Some(b.clone())
                }
                Some((SConst::Ite, [c, a, _])) if *op == DConst::Itef && self.entailed(c) => Some(a.clone()),
                Some((SConst::Ite, [c, a, b])) if !matches!(op, DConst::Itet | DConst::Itef) => {
                    if self.entailed(c) {
                        Some(a.clone())
                    } else if self.entailed(&StaticTerm::not(c.clone())) {
                        Some(b.clone())
                    } else {
                        None
                    }
                }
                Some((SConst::Quan(s), [r0, f])) => {
                    let (s, r0, f) = (s.clone(), r0.clone(), f.clone());
                    if self.entailed(&StaticTerm::eq(r.clone(), r0.clone())) {
                        let m = self.metas.fresh(s);
                        Some(beta_normalize(&StaticTerm::apply(f, m)))
                    } else if self.entailed(&StaticTerm::ne(r.clone(), r0)) {
                        let w = self.rigid("w", &s);
                        Some(beta_normalize(&StaticTerm::apply(f, StaticTerm::Free(w))))
                    } else {
                        None
                    }
                }
                None if matches!(pi, StaticTerm::Meta(_)) => {
                    let mut m = || self.metas.fresh(Sort::SType);
                    let pattern = match op {
                        DConst::Send | DConst::Recv => {
                            let (a, b, c) = (m(), m(), m());
                            StaticTerm::msg(a, b, c)
                        }
                        DConst::Close | DConst::Wait => StaticTerm::end(m()),
                        DConst::Offer | DConst::Choose => {
                            let (a, b, c) = (m(), m(), m());
                            StaticTerm::branch(a, b, c)
                        }
                        _ => break,
                    };
                    self.unify(&pi, &pattern, &Sort::SType, "ty-cst")?;
                    None
                }
                _ => None,
            };
            match next {
                Some(n) => pi = n,
                None => break,
            }
        }
        Ok(StaticTerm::chan(r, self.zonk(&pi)))
    }
}
