//! Metavariables, unification and subsumption of types.

use crate::constraints::{entails, Assignment, ConstraintStore, Verdict};
use crate::dynamics::Span;
use crate::statics::{beta_normalize, name, unroll_fix, SConst, Sort, StaticSignature, StaticTerm};

#[derive(Clone, Debug, Default)]
pub struct Metas {
    sols: Vec<Option<StaticTerm>>,
    sorts: Vec<Sort>,
}

impl Metas {
    pub fn fresh(&mut self, s: Sort) -> StaticTerm {
        self.sols.push(None);
        self.sorts.push(s);
        StaticTerm::Meta((self.sols.len() - 1) as u32)
    }

    pub fn sort(&self, m: u32) -> Option<&Sort> {
        self.sorts.get(m as usize)
    }

    pub fn solution(&self, m: u32) -> Option<&StaticTerm> {
        self.sols.get(m as usize).and_then(|s| s.as_ref())
    }

    /// Replaces solved metavariables and β-normalizes.
    pub fn zonk(&self, t: &StaticTerm) -> StaticTerm {
        if !t.has_metas() {
            return beta_normalize(t);
        }
        let z = t.map_leaves(&mut |leaf, depth| match leaf {
            StaticTerm::Meta(m) => self.solution(*m).map(|s| self.zonk(s).shift(depth as isize, 0)),
            _ => None,
        });
        beta_normalize(&z)
    }

    /// Resolves a solved metavariable at the head only.
    pub fn head(&self, t: &StaticTerm) -> StaticTerm {
        let mut t = t.clone();
        while let StaticTerm::Meta(m) = t {
            match self.solution(m) {
                Some(s) => t = s.clone(),
                None => break,
            }
        }
        beta_normalize(&t)
    }

    fn assign(&mut self, m: u32, t: &StaticTerm) -> bool {
        let t = self.zonk(t);
        if t == StaticTerm::Meta(m) {
            return true;
        }
        if t.metas().contains(&m) {
            return false;
        }
        self.sols[m as usize] = Some(t);
        true
    }
}

/// An index equation or guard that still mentions metavariables; it is
/// decided after the enclosing definition has been checked.
#[derive(Clone, Debug)]
pub struct Obligation {
    pub store: ConstraintStore,
    pub prop: StaticTerm,
    pub span: Option<Span>,
    pub rule: String,
}

#[derive(Clone, Debug)]
pub enum UnifyError {
    Mismatch(String, Option<Assignment>),
    Unsupported(String),
}

pub struct Unifier<'a> {
    pub sig: &'a StaticSignature,
    pub store: &'a mut ConstraintStore,
    pub metas: &'a mut Metas,
    pub obligations: &'a mut Vec<Obligation>,
    pub fresh: &'a mut u64,
    pub implicit: bool,
    pub span: Option<Span>,
    pub rule: &'a str,
}

fn index_prop(a: &StaticTerm, b: &StaticTerm, sort: &Sort) -> StaticTerm {
    if *sort == Sort::Bool {
        StaticTerm::c2(SConst::Iff, a.clone(), b.clone())
    } else {
        StaticTerm::eq(a.clone(), b.clone())
    }
}

impl Unifier<'_> {
    fn mismatch<T>(&self, a: &StaticTerm, b: &StaticTerm) -> Result<T, UnifyError> {
        Err(UnifyError::Mismatch(
            format!("`{}` does not match `{}`", self.metas.zonk(a), self.metas.zonk(b)),
            None,
        ))
    }

    fn rigid(&mut self, s: Sort) -> StaticTerm {
        *self.fresh += 1;
        let n = name(&format!("%{}", self.fresh));
        self.store.declare(n.clone(), s);
        StaticTerm::Free(n)
    }

    /// Checks or defers `prop` under the current store.
    pub fn require(&mut self, prop: &StaticTerm) -> Result<(), UnifyError> {
        let prop = self.metas.zonk(prop);
        if prop.has_metas() {
            self.obligations.push(Obligation {
                store: self.store.clone(),
                prop,
                span: self.span,
                rule: self.rule.to_string(),
            });
            return Ok(());
        }
        match entails(self.store, &prop) {
            Verdict::Valid => Ok(()),
            Verdict::Invalid(m) => Err(UnifyError::Mismatch(format!("`{prop}` is not entailed"), Some(m))),
            Verdict::Unsupported(r) => Err(UnifyError::Unsupported(r)),
        }
    }

    fn decides(&self, prop: &StaticTerm) -> bool {
        let prop = self.metas.zonk(prop);
        !prop.has_metas() && entails(self.store, &prop) == Verdict::Valid
    }

    /// The arm of `ite(c, t, e)` to compare with `other` when reconstructing
    /// erased `itet`/`itef`: the one the store decides, else the only arm
    /// whose protocol constructor matches.
    fn ite_arm<'t>(&self, args: &'t [StaticTerm], other: &StaticTerm) -> Option<&'t StaticTerm> {
        let [c, t, e] = args else { return None };
        if self.decides(c) {
            return Some(t);
        }
        if self.decides(&StaticTerm::not(c.clone())) {
            return Some(e);
        }
        let ctor = |x: &StaticTerm| {
            let mut x = self.metas.head(x);
            for _ in 0..64 {
                match unroll_fix(&x) {
                    Some(u) => x = u,
                    None => break,
                }
            }
            x.head().map(|(c, _)| c.clone())
        };
        let want = ctor(other)?;
        match (ctor(t) == Some(want.clone()), ctor(e) == Some(want)) {
            (true, false) => Some(t),
            (false, true) => Some(e),
            _ => None,
        }
    }

    pub fn unify(&mut self, a: &StaticTerm, b: &StaticTerm, sort: &Sort) -> Result<(), UnifyError> {
        let a = self.metas.head(a);
        let b = self.metas.head(b);
        if a == b {
            return Ok(());
        }
        match (&a, &b) {
            (StaticTerm::Meta(m), t) | (t, StaticTerm::Meta(m)) => {
                if self.metas.assign(*m, t) {
                    return Ok(());
                }
                if !sort.is_index() {
                    return self.mismatch(&a, &b);
                }
            }
            _ => {}
        }
        if sort.is_index() {
            let goal = index_prop(&a, &b, sort);
            return self.require(&goal).map_err(|e| match e {
                UnifyError::Mismatch(_, m) => UnifyError::Mismatch(format!("`{a}` and `{b}` may differ"), m),
                other => other,
            });
        }
        match (&a, &b) {
            (StaticTerm::Lam(s1, b1), StaticTerm::Lam(s2, b2)) => {
                if s1 != s2 {
                    return self.mismatch(&a, &b);
                }
                let cod = match sort {
                    Sort::Arrow(_, c) => (**c).clone(),
                    _ => Sort::VType,
                };
                let v = self.rigid(s1.clone());
                let x = beta_normalize(&StaticTerm::instantiate(b1, &v));
                let y = beta_normalize(&StaticTerm::instantiate(b2, &v));
                self.unify(&x, &y, &cod)
            }
            (StaticTerm::App(c1, a1), StaticTerm::App(c2, a2)) if c1 == c2 && a1.len() == a2.len() => {
                let sorts = match self.sig.csort(c1) {
                    Some(cs) => cs.args,
                    None => return self.mismatch(&a, &b),
                };
                for ((x, y), s) in a1.iter().zip(a2).zip(&sorts) {
                    self.unify(x, y, s)?;
                }
                Ok(())
            }
            (StaticTerm::App(c, _), _) if self.implicit && matches!(c, SConst::Fix | SConst::HoFix(_)) => {
                let u = unroll_fix(&a).expect("fixpoint");
                self.unify(&u, &b, sort)
            }
            (_, StaticTerm::App(c, _)) if self.implicit && matches!(c, SConst::Fix | SConst::HoFix(_)) => {
                let u = unroll_fix(&b).expect("fixpoint");
                self.unify(&a, &u, sort)
            }
            (StaticTerm::App(SConst::Ite, args), other) | (other, StaticTerm::App(SConst::Ite, args))
                if self.implicit && !matches!(other, StaticTerm::App(SConst::Ite, _)) =>
            {
                let arm = self.ite_arm(args, other).ok_or(()).or_else(|_| self.mismatch(&a, &b))?;
                let (arm, other) = (arm.clone(), other.clone());
                self.unify(&arm, &other, sort)
            }
            (StaticTerm::Apply(f1, x1), StaticTerm::Apply(f2, x2)) => {
                self.unify(f1, f2, &Sort::SType)?;
                self.unify(x1, x2, &Sort::Int)
            }
            _ => self.mismatch(&a, &b),
        }
    }

    /// `actual <= expected`: indexed base types coerce to their plain
    /// versions and `->` coerces to `-o`; everything else is unified.
    pub fn sub(&mut self, actual: &StaticTerm, expected: &StaticTerm) -> Result<(), UnifyError> {
        let a = self.metas.head(actual);
        let e = self.metas.head(expected);
        match (a.head(), e.head()) {
            (Some((SConst::IntS, _)), Some((SConst::IntTy, _))) => Ok(()),
            (Some((SConst::BoolS, _)), Some((SConst::BoolTy, _))) => Ok(()),
            (Some((SConst::IntTy, _)), Some((SConst::IntS, [x]))) => {
                let v = self.rigid(Sort::Int);
                self.unify(&v, x, &Sort::Int)
            }
            (Some((SConst::BoolTy, _)), Some((SConst::BoolS, [x]))) => {
                let v = self.rigid(Sort::Bool);
                self.unify(&v, x, &Sort::Bool)
            }
            (Some((SConst::Fun, [a1, b1])), Some((SConst::Fun | SConst::Lolli, [a2, b2])))
            | (Some((SConst::Lolli, [a1, b1])), Some((SConst::Lolli, [a2, b2]))) => {
                let (a1, b1, a2, b2) = (a1.clone(), b1.clone(), a2.clone(), b2.clone());
                self.sub(&a2, &a1)?;
                self.sub(&b1, &b2)
            }
            (Some((SConst::Prod | SConst::Tensor, [x1, y1])), Some((SConst::Prod | SConst::Tensor, [x2, y2])))
                if !(a.head().map(|h| h.0) == Some(&SConst::Tensor) && e.head().map(|h| h.0) == Some(&SConst::Prod)) =>
            {
                let (x1, y1, x2, y2) = (x1.clone(), y1.clone(), x2.clone(), y2.clone());
                self.sub(&x1, &x2)?;
                self.sub(&y1, &y2)
            }
            _ => self.unify(&a, &e, &Sort::VType),
        }
    }
}
