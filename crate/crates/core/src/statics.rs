//! The index language: sorts, static terms, the static signature and
//! normalization.
//!
//! Static terms use a locally nameless representation. Variables bound by a
//! static `lam` are de Bruijn indices ([`StaticTerm::Bound`]); variables
//! bound by the typing context (function statics, unpacked existential
//! witnesses) are named ([`StaticTerm::Free`]). Unification variables created
//! by the checker are [`StaticTerm::Meta`]. Types, linear types and session
//! types are all static terms, distinguished by sort.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::constraints::{self, ConstraintStore, Verdict};

pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Int,
    Bool,
    Type,
    VType,
    SType,
    Arrow(Box<Sort>, Box<Sort>),
}

impl Sort {
    pub fn arrow(dom: Sort, cod: Sort) -> Sort {
        Sort::Arrow(Box::new(dom), Box::new(cod))
    }

    /// `a1 -> a2 -> ... -> result`
    pub fn arrows(doms: &[Sort], result: Sort) -> Sort {
        doms.iter()
            .rev()
            .fold(result, |acc, d| Sort::arrow(d.clone(), acc))
    }

    /// Sorts whose terms are handed to the constraint solver.
    pub fn is_index(&self) -> bool {
        matches!(self, Sort::Int | Sort::Bool)
    }

    /// `type` is a subsort of `vtype`: every type is also a (not truly
    /// linear) vtype.
    pub fn is_subsort_of(&self, other: &Sort) -> bool {
        match (self, other) {
            (Sort::Type, Sort::VType) => true,
            (Sort::Arrow(d1, c1), Sort::Arrow(d2, c2)) => d1 == d2 && c1.is_subsort_of(c2),
            _ => self == other,
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => write!(f, "int"),
            Sort::Bool => write!(f, "bool"),
            Sort::Type => write!(f, "type"),
            Sort::VType => write!(f, "vtype"),
            Sort::SType => write!(f, "stype"),
            Sort::Arrow(d, c) => write!(f, "(-> {d} {c})"),
        }
    }
}

/// Static constants. Integer and boolean literals are nullary constants.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SConst {
    Int(i64),
    Bool(bool),
    Add,
    Sub,
    Neg,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Implies,
    Iff,
    Unit,
    /// Unindexed `int`.
    IntTy,
    /// Singleton `int(i)`.
    IntS,
    BoolTy,
    BoolS,
    StrTy,
    Prod,
    Tensor,
    Fun,
    Lolli,
    Guard,
    Assert,
    Forall(Sort),
    Exists(Sort),
    Subtype,
    Chan,
    ArrRef,
    End,
    /// `msg(i, t) :: pi`, kept as one ternary constant.
    Msg,
    Branch,
    Ite,
    Quan(Sort),
    Fix,
    /// Higher-order fixpoint over the given argument sorts.
    HoFix(Vec<Sort>),
    /// User-declared base type constructor (`delta`, or linear `delta-hat`).
    Base(Name),
}

impl SConst {
    pub fn surface_name(&self) -> String {
        match self {
            SConst::Int(i) => i.to_string(),
            SConst::Bool(true) => "true".into(),
            SConst::Bool(false) => "false".into(),
            SConst::Add => "+".into(),
            SConst::Sub => "-".into(),
            SConst::Neg => "neg".into(),
            SConst::Mul => "*".into(),
            SConst::Eq => "=".into(),
            SConst::Ne => "!=".into(),
            SConst::Lt => "<".into(),
            SConst::Le => "<=".into(),
            SConst::Gt => ">".into(),
            SConst::Ge => ">=".into(),
            SConst::And => "and".into(),
            SConst::Or => "or".into(),
            SConst::Not => "not".into(),
            SConst::Implies => "==>".into(),
            SConst::Iff => "iff".into(),
            SConst::Unit => "unit".into(),
            SConst::IntTy | SConst::IntS => "int".into(),
            SConst::BoolTy | SConst::BoolS => "bool".into(),
            SConst::StrTy => "string".into(),
            SConst::Prod => "prod".into(),
            SConst::Tensor => "tensor".into(),
            SConst::Fun => "->".into(),
            SConst::Lolli => "-o".into(),
            SConst::Guard => "guard".into(),
            SConst::Assert => "assert".into(),
            SConst::Forall(_) => "forall".into(),
            SConst::Exists(_) => "exists".into(),
            SConst::Subtype => "<=ty".into(),
            SConst::Chan => "chan".into(),
            SConst::ArrRef => "arrref".into(),
            SConst::End => "end".into(),
            SConst::Msg => "msg".into(),
            SConst::Branch => "branch".into(),
            SConst::Ite => "ite".into(),
            SConst::Quan(_) => "quan".into(),
            SConst::Fix => "fix".into(),
            SConst::HoFix(_) => "hofix".into(),
            SConst::Base(n) => n.to_string(),
        }
    }
}

/// A c-sort `(s1, ..., sn) => s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CSort {
    pub args: Vec<Sort>,
    pub result: Sort,
}

impl CSort {
    fn new(args: Vec<Sort>, result: Sort) -> Self {
        CSort { args, result }
    }
}

/// User declared base type constructors. Built-in constants are not stored
/// here; their c-sorts come from [`StaticSignature::csort`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StaticSignature {
    bases: BTreeMap<Name, (CSort, bool)>,
}

pub const BUILTIN_NAMES: &[&str] = &[
    "+", "-", "neg", "*", "=", "!=", "<", "<=", ">", ">=", "and", "or", "not", "==>", "iff",
    "unit", "int", "bool", "string", "prod", "tensor", "->", "-o", "guard", "assert", "forall",
    "exists", "<=ty", "chan", "arrref", "end", "msg", "::", "branch", "ite", "quan", "fix",
    "hofix", "true", "false", "lam", "@", "role", "nat", "type", "vtype", "stype",
];

impl StaticSignature {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `name : (args) => result`, linear when `result` is vtype.
    pub fn declare_base(&mut self, name: &str, args: Vec<Sort>, result: Sort) -> Result<(), StaticsError> {
        if BUILTIN_NAMES.contains(&name) || self.bases.contains_key(name) {
            return Err(StaticsError::Shadowing(name.to_string()));
        }
        if !matches!(result, Sort::Type | Sort::VType) {
            return Err(StaticsError::SortMismatch {
                expected: Sort::VType,
                found: result,
            });
        }
        let linear = result == Sort::VType;
        self.bases
            .insert(self::name(name), (CSort::new(args, result), linear));
        Ok(())
    }

    pub fn base(&self, name: &str) -> Option<&CSort> {
        self.bases.get(name).map(|(c, _)| c)
    }

    pub fn base_is_linear(&self, name: &str) -> bool {
        self.bases.get(name).map(|(_, l)| *l).unwrap_or(true)
    }

    pub fn bases(&self) -> impl Iterator<Item = (&Name, &CSort)> {
        self.bases.iter().map(|(n, (c, _))| (n, c))
    }

    /// The c-sort of a constant. Sort-polymorphic constants (`=`, `forall`,
    /// `guard`, ...) report their most general instance; [`sort_check`]
    /// refines them.
    pub fn csort(&self, c: &SConst) -> Option<CSort> {
        use Sort::*;
        let cs = match c {
            SConst::Int(_) => CSort::new(vec![], Int),
            SConst::Bool(_) => CSort::new(vec![], Bool),
            SConst::Add | SConst::Sub | SConst::Mul => CSort::new(vec![Int, Int], Int),
            SConst::Neg => CSort::new(vec![Int], Int),
            SConst::Eq | SConst::Ne => CSort::new(vec![Int, Int], Bool),
            SConst::Lt | SConst::Le | SConst::Gt | SConst::Ge => CSort::new(vec![Int, Int], Bool),
            SConst::And | SConst::Or | SConst::Implies | SConst::Iff => {
                CSort::new(vec![Bool, Bool], Bool)
            }
            SConst::Not => CSort::new(vec![Bool], Bool),
            SConst::Unit | SConst::IntTy | SConst::BoolTy | SConst::StrTy => CSort::new(vec![], Type),
            SConst::IntS => CSort::new(vec![Int], Type),
            SConst::BoolS => CSort::new(vec![Bool], Type),
            SConst::Prod => CSort::new(vec![Type, Type], Type),
            SConst::Tensor => CSort::new(vec![VType, VType], VType),
            SConst::Fun => CSort::new(vec![VType, VType], Type),
            SConst::Lolli => CSort::new(vec![VType, VType], VType),
            SConst::Guard | SConst::Assert => CSort::new(vec![Bool, VType], VType),
            SConst::Forall(s) | SConst::Exists(s) => {
                CSort::new(vec![Sort::arrow(s.clone(), VType)], VType)
            }
            SConst::Subtype => CSort::new(vec![VType, VType], Bool),
            SConst::Chan => CSort::new(vec![Int, SType], VType),
            SConst::ArrRef => CSort::new(vec![Type, Int], Type),
            SConst::End => CSort::new(vec![Int], SType),
            SConst::Msg => CSort::new(vec![Int, VType, SType], SType),
            SConst::Branch => CSort::new(vec![Int, SType, SType], SType),
            SConst::Ite => CSort::new(vec![Bool, SType, SType], SType),
            SConst::Quan(s) => CSort::new(vec![Int, Sort::arrow(s.clone(), SType)], SType),
            SConst::Fix => CSort::new(vec![Sort::arrow(SType, SType)], SType),
            SConst::HoFix(sorts) => {
                let family = Sort::arrows(sorts, SType);
                let mut args = vec![Sort::arrow(family.clone(), family)];
                args.extend(sorts.iter().cloned());
                CSort::new(args, SType)
            }
            SConst::Base(n) => self.base(n)?.clone(),
        };
        Some(cs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StaticTerm {
    /// De Bruijn index of a static `lam` binder.
    Bound(usize),
    /// Variable of the static context.
    Free(Name),
    /// Unification variable owned by a checker run.
    Meta(u32),
    App(SConst, Vec<StaticTerm>),
    Lam(Sort, Box<StaticTerm>),
    Apply(Box<StaticTerm>, Box<StaticTerm>),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum StaticsError {
    #[error("unbound static variable `{0}`")]
    UnboundStaticVar(String),
    #[error("sort mismatch: expected {expected}, found {found}")]
    SortMismatch { expected: Sort, found: Sort },
    #[error("constant `{constant}` expects {expected} arguments, found {found}")]
    ArityMismatch {
        constant: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown static constant `{0}`")]
    UnknownConstant(String),
    #[error("not a session type: {0}")]
    NotAnStype(String),
    #[error("cannot sort unsolved unification variable ?{0}")]
    UnsortedMeta(u32),
    #[error("quantification over sort {0} is not supported")]
    UnsupportedQuantifier(Sort),
    #[error("`{0}` shadows an existing constant")]
    Shadowing(String),
    #[error("constraint not supported: {0}")]
    Unsupported(String),
}

/// Shorthand constructors.
impl StaticTerm {
    pub fn int(i: i64) -> Self {
        StaticTerm::App(SConst::Int(i), vec![])
    }
    pub fn bool(b: bool) -> Self {
        StaticTerm::App(SConst::Bool(b), vec![])
    }
    pub fn free(n: &str) -> Self {
        StaticTerm::Free(name(n))
    }
    pub fn app(c: SConst, args: Vec<StaticTerm>) -> Self {
        StaticTerm::App(c, args)
    }
    pub fn c0(c: SConst) -> Self {
        StaticTerm::App(c, vec![])
    }
    pub fn c1(c: SConst, a: StaticTerm) -> Self {
        StaticTerm::App(c, vec![a])
    }
    pub fn c2(c: SConst, a: StaticTerm, b: StaticTerm) -> Self {
        StaticTerm::App(c, vec![a, b])
    }
    pub fn c3(c: SConst, a: StaticTerm, b: StaticTerm, d: StaticTerm) -> Self {
        StaticTerm::App(c, vec![a, b, d])
    }
    pub fn lam(s: Sort, body: StaticTerm) -> Self {
        StaticTerm::Lam(s, Box::new(body))
    }
    pub fn apply(f: StaticTerm, a: StaticTerm) -> Self {
        StaticTerm::Apply(Box::new(f), Box::new(a))
    }
    pub fn unit() -> Self {
        Self::c0(SConst::Unit)
    }
    pub fn int_s(i: StaticTerm) -> Self {
        Self::c1(SConst::IntS, i)
    }
    pub fn bool_s(b: StaticTerm) -> Self {
        Self::c1(SConst::BoolS, b)
    }
    pub fn chan(role: StaticTerm, st: StaticTerm) -> Self {
        Self::c2(SConst::Chan, role, st)
    }
    pub fn tensor(a: StaticTerm, b: StaticTerm) -> Self {
        Self::c2(SConst::Tensor, a, b)
    }
    pub fn end(role: StaticTerm) -> Self {
        Self::c1(SConst::End, role)
    }
    pub fn msg(role: StaticTerm, payload: StaticTerm, cont: StaticTerm) -> Self {
        Self::c3(SConst::Msg, role, payload, cont)
    }
    pub fn branch(role: StaticTerm, l: StaticTerm, r: StaticTerm) -> Self {
        Self::c3(SConst::Branch, role, l, r)
    }
    pub fn ite(c: StaticTerm, t: StaticTerm, e: StaticTerm) -> Self {
        Self::c3(SConst::Ite, c, t, e)
    }
    pub fn quan(role: StaticTerm, sort: Sort, body: StaticTerm) -> Self {
        Self::c2(SConst::Quan(sort.clone()), role, Self::lam(sort, body))
    }
    pub fn eq(a: StaticTerm, b: StaticTerm) -> Self {
        Self::c2(SConst::Eq, a, b)
    }
    pub fn ne(a: StaticTerm, b: StaticTerm) -> Self {
        Self::c2(SConst::Ne, a, b)
    }
    pub fn and(a: StaticTerm, b: StaticTerm) -> Self {
        Self::c2(SConst::And, a, b)
    }
    pub fn or(a: StaticTerm, b: StaticTerm) -> Self {
        Self::c2(SConst::Or, a, b)
    }
    pub fn not(a: StaticTerm) -> Self {
        Self::c1(SConst::Not, a)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            StaticTerm::App(SConst::Int(i), _) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            StaticTerm::App(SConst::Bool(b), _) => Some(*b),
            _ => None,
        }
    }

    /// Head constant and arguments, if this is a constant application.
    pub fn head(&self) -> Option<(&SConst, &[StaticTerm])> {
        match self {
            StaticTerm::App(c, args) => Some((c, args)),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// De Bruijn plumbing

impl StaticTerm {
    /// Adds `d` to every bound index `>= cutoff`.
    pub fn shift(&self, d: isize, cutoff: usize) -> StaticTerm {
        match self {
            StaticTerm::Bound(i) => {
                if *i >= cutoff {
                    StaticTerm::Bound((*i as isize + d) as usize)
                } else {
                    StaticTerm::Bound(*i)
                }
            }
            StaticTerm::Free(_) | StaticTerm::Meta(_) => self.clone(),
            StaticTerm::App(c, args) => {
                StaticTerm::App(c.clone(), args.iter().map(|a| a.shift(d, cutoff)).collect())
            }
            StaticTerm::Lam(s, b) => StaticTerm::Lam(s.clone(), Box::new(b.shift(d, cutoff + 1))),
            StaticTerm::Apply(f, a) => {
                StaticTerm::apply(f.shift(d, cutoff), a.shift(d, cutoff))
            }
        }
    }

    /// Replaces index `idx` by `with` (which is shifted under binders).
    fn subst_index(&self, idx: usize, with: &StaticTerm) -> StaticTerm {
        match self {
            StaticTerm::Bound(i) if *i == idx => with.clone(),
            StaticTerm::Bound(_) | StaticTerm::Free(_) | StaticTerm::Meta(_) => self.clone(),
            StaticTerm::App(c, args) => StaticTerm::App(
                c.clone(),
                args.iter().map(|a| a.subst_index(idx, with)).collect(),
            ),
            StaticTerm::Lam(s, b) => {
                StaticTerm::Lam(s.clone(), Box::new(b.subst_index(idx + 1, &with.shift(1, 0))))
            }
            StaticTerm::Apply(f, a) => {
                StaticTerm::apply(f.subst_index(idx, with), a.subst_index(idx, with))
            }
        }
    }

    /// Body of a binder instantiated with `arg` (the β-contraction of
    /// `(lam body)(arg)`).
    pub fn instantiate(body: &StaticTerm, arg: &StaticTerm) -> StaticTerm {
        body.subst_index(0, &arg.shift(1, 0)).shift(-1, 0)
    }

    /// Replaces the free variable `n` by `with`.
    pub fn subst_free(&self, n: &str, with: &StaticTerm) -> StaticTerm {
        self.map_leaves(&mut |t, depth| match t {
            StaticTerm::Free(m) if &**m == n => Some(with.shift(depth as isize, 0)),
            _ => None,
        })
    }

    /// Simultaneous substitution of free variables.
    pub fn subst_frees(&self, map: &BTreeMap<Name, StaticTerm>) -> StaticTerm {
        if map.is_empty() {
            return self.clone();
        }
        self.map_leaves(&mut |t, depth| match t {
            StaticTerm::Free(m) => map.get(m).map(|w| w.shift(depth as isize, 0)),
            _ => None,
        })
    }

    /// Turns free variable `n` into the bound variable of a new enclosing
    /// binder. The result is meant to be wrapped in `Lam`.
    pub fn abstract_free(&self, n: &str) -> StaticTerm {
        self.shift(1, 0).map_leaves(&mut |t, depth| match t {
            StaticTerm::Free(m) if &**m == n => Some(StaticTerm::Bound(depth)),
            _ => None,
        })
    }

    /// Same as [`abstract_free`](Self::abstract_free) for a metavariable.
    pub fn abstract_meta(&self, id: u32) -> StaticTerm {
        self.shift(1, 0).map_leaves(&mut |t, depth| match t {
            StaticTerm::Meta(m) if *m == id => Some(StaticTerm::Bound(depth)),
            _ => None,
        })
    }

    /// Rebuilds the term, letting `f` replace leaves (`Bound`, `Free`,
    /// `Meta`). `f` receives the number of binders crossed.
    pub fn map_leaves(
        &self,
        f: &mut dyn FnMut(&StaticTerm, usize) -> Option<StaticTerm>,
    ) -> StaticTerm {
        fn go(
            t: &StaticTerm,
            depth: usize,
            f: &mut dyn FnMut(&StaticTerm, usize) -> Option<StaticTerm>,
        ) -> StaticTerm {
            match t {
                StaticTerm::Bound(_) | StaticTerm::Free(_) | StaticTerm::Meta(_) => {
                    f(t, depth).unwrap_or_else(|| t.clone())
                }
                StaticTerm::App(c, args) => {
                    StaticTerm::App(c.clone(), args.iter().map(|a| go(a, depth, f)).collect())
                }
                StaticTerm::Lam(s, b) => StaticTerm::Lam(s.clone(), Box::new(go(b, depth + 1, f))),
                StaticTerm::Apply(x, y) => StaticTerm::apply(go(x, depth, f), go(y, depth, f)),
            }
        }
        go(self, 0, f)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&StaticTerm)) {
        f(self);
        match self {
            StaticTerm::App(_, args) => args.iter().for_each(|a| a.visit(f)),
            StaticTerm::Lam(_, b) => b.visit(f),
            StaticTerm::Apply(x, y) => {
                x.visit(f);
                y.visit(f);
            }
            _ => {}
        }
    }

    pub fn free_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let StaticTerm::Free(n) = t {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn metas(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let StaticTerm::Meta(m) = t {
                out.insert(*m);
            }
        });
        out
    }

    pub fn has_metas(&self) -> bool {
        let mut found = false;
        self.visit(&mut |t| found |= matches!(t, StaticTerm::Meta(_)));
        found
    }

    /// True when no bound index escapes the term.
    pub fn is_locally_closed(&self) -> bool {
        fn go(t: &StaticTerm, depth: usize) -> bool {
            match t {
                StaticTerm::Bound(i) => *i < depth,
                StaticTerm::Free(_) | StaticTerm::Meta(_) => true,
                StaticTerm::App(_, args) => args.iter().all(|a| go(a, depth)),
                StaticTerm::Lam(_, b) => go(b, depth + 1),
                StaticTerm::Apply(x, y) => go(x, depth) && go(y, depth),
            }
        }
        go(self, 0)
    }

    /// Ground: no free variables and no metavariables.
    pub fn is_ground(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |t| ok &= !matches!(t, StaticTerm::Free(_) | StaticTerm::Meta(_)));
        ok
    }
}

// ---------------------------------------------------------------------------
// Normalization

/// β-normal form. `fix`/`hofix` are left folded; they unroll only through
/// [`unroll_fix`].
pub fn beta_normalize(s: &StaticTerm) -> StaticTerm {
    match s {
        StaticTerm::Bound(_) | StaticTerm::Free(_) | StaticTerm::Meta(_) => s.clone(),
        StaticTerm::App(c, args) => StaticTerm::App(c.clone(), args.iter().map(beta_normalize).collect()),
        StaticTerm::Lam(sort, b) => StaticTerm::Lam(sort.clone(), Box::new(beta_normalize(b))),
        StaticTerm::Apply(f, a) => {
            let f = beta_normalize(f);
            let a = beta_normalize(a);
            match f {
                StaticTerm::Lam(_, body) => beta_normalize(&StaticTerm::instantiate(&body, &a)),
                f => StaticTerm::apply(f, a),
            }
        }
    }
}

/// One unrolling of a (higher-order) fixpoint: `fix(f) ~> f(fix(f))` and
/// `hofix(f, s..) ~> f(lam a... hofix(f, a...))(s...)`. Returns `None` when
/// the head is not a fixpoint.
pub fn unroll_fix(s: &StaticTerm) -> Option<StaticTerm> {
    match s {
        StaticTerm::App(SConst::Fix, args) if args.len() == 1 => {
            let f = &args[0];
            Some(beta_normalize(&StaticTerm::apply(f.clone(), s.clone())))
        }
        StaticTerm::App(SConst::HoFix(sorts), args) if args.len() == sorts.len() + 1 => {
            let k = sorts.len();
            let f = &args[0];
            let mut inner_args = vec![f.shift(k as isize, 0)];
            inner_args.extend((0..k).map(|i| StaticTerm::Bound(k - 1 - i)));
            let mut family = StaticTerm::App(SConst::HoFix(sorts.clone()), inner_args);
            for sort in sorts.iter().rev() {
                family = StaticTerm::lam(sort.clone(), family);
            }
            let mut applied = StaticTerm::apply(f.clone(), family);
            for a in &args[1..] {
                applied = StaticTerm::apply(applied, a.clone());
            }
            Some(beta_normalize(&applied))
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Sorting

/// Named static context `Sigma`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SortContext {
    vars: Vec<(Name, Sort)>,
}

impl SortContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, n: Name, s: Sort) {
        self.vars.push((n, s));
    }

    pub fn pop(&mut self) {
        self.vars.pop();
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.vars.truncate(n);
    }

    pub fn lookup(&self, n: &str) -> Option<&Sort> {
        self.vars.iter().rev().find(|(m, _)| &**m == n).map(|(_, s)| s)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Name, Sort)> {
        self.vars.iter()
    }
}

impl FromIterator<(Name, Sort)> for SortContext {
    fn from_iter<I: IntoIterator<Item = (Name, Sort)>>(iter: I) -> Self {
        SortContext {
            vars: iter.into_iter().collect(),
        }
    }
}

/// Infers the sort of `s`. Arguments are checked against the constant's
/// c-sort up to the `type <= vtype` subsort.
pub fn sort_check(ctx: &SortContext, sig: &StaticSignature, s: &StaticTerm) -> Result<Sort, StaticsError> {
    let mut locals = Vec::new();
    sort_of(ctx, sig, &mut locals, s)
}

fn expect_sort(found: Sort, expected: &Sort) -> Result<(), StaticsError> {
    if found.is_subsort_of(expected) {
        Ok(())
    } else {
        Err(StaticsError::SortMismatch {
            expected: expected.clone(),
            found,
        })
    }
}

fn sort_of(
    ctx: &SortContext,
    sig: &StaticSignature,
    locals: &mut Vec<Sort>,
    s: &StaticTerm,
) -> Result<Sort, StaticsError> {
    match s {
        StaticTerm::Bound(i) => locals
            .len()
            .checked_sub(i + 1)
            .map(|k| locals[k].clone())
            .ok_or_else(|| StaticsError::UnboundStaticVar(format!("#{i}"))),
        StaticTerm::Free(n) => ctx
            .lookup(n)
            .cloned()
            .ok_or_else(|| StaticsError::UnboundStaticVar(n.to_string())),
        StaticTerm::Meta(m) => Err(StaticsError::UnsortedMeta(*m)),
        StaticTerm::Lam(sort, body) => {
            locals.push(sort.clone());
            let cod = sort_of(ctx, sig, locals, body);
            locals.pop();
            Ok(Sort::arrow(sort.clone(), cod?))
        }
        StaticTerm::Apply(f, a) => {
            let fs = sort_of(ctx, sig, locals, f)?;
            let asort = sort_of(ctx, sig, locals, a)?;
            match fs {
                Sort::Arrow(d, c) => {
                    expect_sort(asort, &d)?;
                    Ok(*c)
                }
                other => Err(StaticsError::SortMismatch {
                    expected: Sort::arrow(asort, Sort::SType),
                    found: other,
                }),
            }
        }
        StaticTerm::App(c, args) => {
            if let SConst::Quan(q) | SConst::Forall(q) | SConst::Exists(q) = c {
                if !matches!(q, Sort::Int | Sort::Bool | Sort::SType | Sort::Type | Sort::VType) {
                    return Err(StaticsError::UnsupportedQuantifier(q.clone()));
                }
            }
            let cs = sig
                .csort(c)
                .ok_or_else(|| StaticsError::UnknownConstant(c.surface_name()))?;
            if cs.args.len() != args.len() {
                return Err(StaticsError::ArityMismatch {
                    constant: c.surface_name(),
                    expected: cs.args.len(),
                    found: args.len(),
                });
            }
            let mut found = Vec::with_capacity(args.len());
            for a in args {
                found.push(sort_of(ctx, sig, locals, a)?);
            }
            match c {
                // equality is overloaded on the two index sorts
                SConst::Eq | SConst::Ne => {
                    if found[0] == Sort::Bool {
                        expect_sort(found[1].clone(), &Sort::Bool)?;
                    } else {
                        expect_sort(found[0].clone(), &Sort::Int)?;
                        expect_sort(found[1].clone(), &Sort::Int)?;
                    }
                    Ok(Sort::Bool)
                }
                // type formers whose result sort follows their body
                SConst::Guard | SConst::Assert => {
                    expect_sort(found[0].clone(), &Sort::Bool)?;
                    expect_sort(found[1].clone(), &Sort::VType)?;
                    Ok(found[1].clone())
                }
                SConst::Forall(q) | SConst::Exists(q) => match &found[0] {
                    Sort::Arrow(d, cod) if **d == *q && cod.is_subsort_of(&Sort::VType) => {
                        Ok((**cod).clone())
                    }
                    other => Err(StaticsError::SortMismatch {
                        expected: Sort::arrow(q.clone(), Sort::VType),
                        found: other.clone(),
                    }),
                },
                SConst::Subtype => {
                    expect_sort(found[0].clone(), &Sort::VType)?;
                    expect_sort(found[1].clone(), &Sort::VType)?;
                    Ok(Sort::Bool)
                }
                _ => {
                    for (f, e) in found.into_iter().zip(cs.args.iter()) {
                        expect_sort(f, e)?;
                    }
                    Ok(cs.result)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Session heads

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SessionHead {
    End { role: StaticTerm },
    Msg { role: StaticTerm, payload: StaticTerm, cont: StaticTerm },
    Branch { role: StaticTerm, left: StaticTerm, right: StaticTerm },
    Ite { cond: StaticTerm, then_s: StaticTerm, else_s: StaticTerm },
    Quan { role: StaticTerm, sort: Sort, body: StaticTerm },
    Fix { body: StaticTerm },
    HoFix { body: StaticTerm, args: Vec<StaticTerm> },
    /// Variables, metavariables and stuck applications.
    Neutral { term: StaticTerm },
}

impl SessionHead {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionHead::End { .. } => "end",
            SessionHead::Msg { .. } => "msg",
            SessionHead::Branch { .. } => "branch",
            SessionHead::Ite { .. } => "ite",
            SessionHead::Quan { .. } => "quan",
            SessionHead::Fix { .. } => "fix",
            SessionHead::HoFix { .. } => "hofix",
            SessionHead::Neutral { .. } => "neutral",
        }
    }
}

/// Decomposes the β-normal form of a session type.
pub fn session_head(s: &StaticTerm) -> Result<SessionHead, StaticsError> {
    let n = beta_normalize(s);
    let not_stype = || StaticsError::NotAnStype(n.to_string());
    Ok(match &n {
        StaticTerm::App(c, a) => match c {
            SConst::End if a.len() == 1 => SessionHead::End { role: a[0].clone() },
            SConst::Msg if a.len() == 3 => SessionHead::Msg {
                role: a[0].clone(),
                payload: a[1].clone(),
                cont: a[2].clone(),
            },
            SConst::Branch if a.len() == 3 => SessionHead::Branch {
                role: a[0].clone(),
                left: a[1].clone(),
                right: a[2].clone(),
            },
            SConst::Ite if a.len() == 3 => SessionHead::Ite {
                cond: a[0].clone(),
                then_s: a[1].clone(),
                else_s: a[2].clone(),
            },
            SConst::Quan(sort) if a.len() == 2 => SessionHead::Quan {
                role: a[0].clone(),
                sort: sort.clone(),
                body: a[1].clone(),
            },
            SConst::Fix if a.len() == 1 => SessionHead::Fix { body: a[0].clone() },
            SConst::HoFix(_) if !a.is_empty() => SessionHead::HoFix {
                body: a[0].clone(),
                args: a[1..].to_vec(),
            },
            _ => return Err(not_stype()),
        },
        StaticTerm::Bound(_) | StaticTerm::Free(_) | StaticTerm::Meta(_) | StaticTerm::Apply(..) => {
            SessionHead::Neutral { term: n.clone() }
        }
        StaticTerm::Lam(..) => return Err(not_stype()),
    })
}

// ---------------------------------------------------------------------------
// Equality modulo constraints

/// Decides `s1 = s2` at sort `sort` under `store`. Index sorts go to the
/// constraint solver; type-level sorts are compared structurally on
/// β-normal forms with index positions compared by entailment. Fixpoints
/// are compared nominally and `ite` is never discharged here.
pub fn static_equal(
    ctx: &SortContext,
    sig: &StaticSignature,
    store: &ConstraintStore,
    s1: &StaticTerm,
    s2: &StaticTerm,
    sort: &Sort,
) -> Result<bool, StaticsError> {
    let f1 = sort_check(ctx, sig, s1)?;
    let f2 = sort_check(ctx, sig, s2)?;
    expect_sort(f1, sort).or_else(|e| if sort == &Sort::VType { Ok(()) } else { Err(e) })?;
    expect_sort(f2, sort).or_else(|e| if sort == &Sort::VType { Ok(()) } else { Err(e) })?;
    let mut store = store.clone();
    let mut fresh = 0usize;
    eq_at(sig, &mut store, &mut fresh, &beta_normalize(s1), &beta_normalize(s2), sort)
}

fn index_equal(store: &ConstraintStore, a: &StaticTerm, b: &StaticTerm, sort: &Sort) -> Result<bool, StaticsError> {
    if a == b {
        return Ok(true);
    }
    let goal = if *sort == Sort::Bool {
        StaticTerm::c2(SConst::Iff, a.clone(), b.clone())
    } else {
        StaticTerm::eq(a.clone(), b.clone())
    };
    match constraints::entails(store, &goal) {
        Verdict::Valid => Ok(true),
        Verdict::Invalid(_) => Ok(false),
        Verdict::Unsupported(r) => Err(StaticsError::Unsupported(r)),
    }
}

fn eq_at(
    sig: &StaticSignature,
    store: &mut ConstraintStore,
    fresh: &mut usize,
    a: &StaticTerm,
    b: &StaticTerm,
    sort: &Sort,
) -> Result<bool, StaticsError> {
    if sort.is_index() {
        return index_equal(store, a, b, sort);
    }
    match (a, b) {
        (StaticTerm::Lam(s1, b1), StaticTerm::Lam(s2, b2)) => {
            if s1 != s2 {
                return Ok(false);
            }
            let cod = match sort {
                Sort::Arrow(_, c) => (**c).clone(),
                _ => Sort::VType,
            };
            *fresh += 1;
            let v = name(&format!("%eq{fresh}"));
            if s1.is_index() {
                store.declare(v.clone(), s1.clone());
            }
            let fv = StaticTerm::Free(v);
            eq_at(
                sig,
                store,
                fresh,
                &beta_normalize(&StaticTerm::instantiate(b1, &fv)),
                &beta_normalize(&StaticTerm::instantiate(b2, &fv)),
                &cod,
            )
        }
        (StaticTerm::App(c1, a1), StaticTerm::App(c2, a2)) => {
            if c1 != c2 || a1.len() != a2.len() {
                return Ok(false);
            }
            if matches!(c1, SConst::Fix | SConst::HoFix(_)) {
                // nominal: alpha-equivalent bodies, arguments up to entailment
                if a1[0] != a2[0] {
                    return Ok(false);
                }
                if let SConst::HoFix(sorts) = c1 {
                    for ((x, y), s) in a1[1..].iter().zip(&a2[1..]).zip(sorts) {
                        if !eq_at(sig, store, fresh, x, y, s)? {
                            return Ok(false);
                        }
                    }
                }
                return Ok(true);
            }
            let cs = sig
                .csort(c1)
                .ok_or_else(|| StaticsError::UnknownConstant(c1.surface_name()))?;
            for ((x, y), s) in a1.iter().zip(a2).zip(&cs.args) {
                if !eq_at(sig, store, fresh, x, y, s)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        (StaticTerm::Apply(f1, x1), StaticTerm::Apply(f2, x2)) => {
            // neutral applications: heads must coincide syntactically
            Ok(f1 == f2 && x1 == x2 || (f1 == f2 && index_equal(store, x1, x2, &Sort::Int).unwrap_or(false)))
        }
        _ => Ok(a == b),
    }
}

// ---------------------------------------------------------------------------
// Printing

/// Prints `s` in the surface syntax. Bound variables are named from `env`
/// (innermost last) or generated.
pub fn print_static(s: &StaticTerm, env: &mut Vec<String>) -> String {
    let mut out = String::new();
    write_static(&mut out, s, env);
    out
}

fn fresh_binder(env: &[String]) -> String {
    format!("_{}", env.len())
}

fn write_static(out: &mut String, s: &StaticTerm, env: &mut Vec<String>) {
    use std::fmt::Write;
    match s {
        StaticTerm::Bound(i) => match env.len().checked_sub(i + 1) {
            Some(k) => out.push_str(&env[k]),
            None => {
                let _ = write!(out, "#{i}");
            }
        },
        StaticTerm::Free(n) => out.push_str(n),
        StaticTerm::Meta(m) => {
            let _ = write!(out, "?{m}");
        }
        StaticTerm::Lam(sort, body) => {
            let v = fresh_binder(env);
            let _ = write!(out, "(lam ({v} {sort}) ");
            env.push(v);
            write_static(out, body, env);
            env.pop();
            out.push(')');
        }
        StaticTerm::Apply(..) => {
            let mut spine = Vec::new();
            let mut head = s;
            while let StaticTerm::Apply(f, a) = head {
                spine.push(&**a);
                head = f;
            }
            spine.reverse();
            out.push_str("(@ ");
            write_static(out, head, env);
            for a in spine {
                out.push(' ');
                write_static(out, a, env);
            }
            out.push(')');
        }
        StaticTerm::App(c, args) => write_app(out, c, args, env),
    }
}

fn write_app(out: &mut String, c: &SConst, args: &[StaticTerm], env: &mut Vec<String>) {
    use std::fmt::Write;
    let binder = |out: &mut String, kw: &str, prefix: &[StaticTerm], body: &StaticTerm, env: &mut Vec<String>| {
        let _ = write!(out, "({kw}");
        for p in prefix {
            out.push(' ');
            write_static(out, p, env);
        }
        match body {
            StaticTerm::Lam(sort, b) => {
                let v = fresh_binder(env);
                let _ = write!(out, " ({v} {sort}) ");
                env.push(v);
                write_static(out, b, env);
                env.pop();
            }
            other => {
                out.push_str(" (@eta ");
                write_static(out, other, env);
                out.push(')');
            }
        }
        out.push(')');
    };
    match c {
        SConst::Int(i) => {
            let _ = write!(out, "{i}");
        }
        SConst::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        SConst::Msg => {
            out.push_str("(:: (msg ");
            write_static(out, &args[0], env);
            out.push(' ');
            write_static(out, &args[1], env);
            out.push_str(") ");
            write_static(out, &args[2], env);
            out.push(')');
        }
        SConst::Forall(_) => binder(out, "forall", &[], &args[0], env),
        SConst::Exists(_) => binder(out, "exists", &[], &args[0], env),
        SConst::HoFix(sorts) => {
            out.push_str("(hofix (");
            let names: Vec<String> = sorts.iter().map(|s| s.to_string()).collect();
            out.push_str(&names.join(" "));
            out.push(')');
            for a in args {
                out.push(' ');
                write_static(out, a, env);
            }
            out.push(')');
        }
        SConst::Quan(_) => {
            out.push_str("(quan ");
            write_static(out, &args[0], env);
            out.push(' ');
            write_static(out, &args[1], env);
            out.push(')');
        }
        _ if args.is_empty() => out.push_str(&c.surface_name()),
        _ => {
            out.push('(');
            out.push_str(&c.surface_name());
            for a in args {
                out.push(' ');
                write_static(out, a, env);
            }
            out.push(')');
        }
    }
}

impl fmt::Display for StaticTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_static(self, &mut Vec::new()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> StaticSignature {
        StaticSignature::new()
    }

    fn equal_stype() -> StaticTerm {
        // quan(C, lam m. quan(C, lam n. msg(C,int(m)) :: msg(C,int(n)) :: msg(S,bool(m=n)) :: end(S)))
        let inner = StaticTerm::msg(
            StaticTerm::int(1),
            StaticTerm::int_s(StaticTerm::Bound(1)),
            StaticTerm::msg(
                StaticTerm::int(1),
                StaticTerm::int_s(StaticTerm::Bound(0)),
                StaticTerm::msg(
                    StaticTerm::int(0),
                    StaticTerm::bool_s(StaticTerm::eq(StaticTerm::Bound(1), StaticTerm::Bound(0))),
                    StaticTerm::end(StaticTerm::int(0)),
                ),
            ),
        );
        StaticTerm::quan(
            StaticTerm::int(1),
            Sort::Int,
            StaticTerm::quan(StaticTerm::int(1), Sort::Int, inner),
        )
    }

    #[test]
    fn equal_protocol_sorts_as_stype() {
        assert_eq!(sort_check(&SortContext::new(), &sig(), &equal_stype()), Ok(Sort::SType));
    }

    #[test]
    fn unit_and_singleton_sorts() {
        assert_eq!(sort_check(&SortContext::new(), &sig(), &StaticTerm::unit()), Ok(Sort::Type));
        let ctx: SortContext = [(name("a"), Sort::Int)].into_iter().collect();
        let t = StaticTerm::bool_s(StaticTerm::eq(StaticTerm::free("a"), StaticTerm::int(0)));
        assert_eq!(sort_check(&ctx, &sig(), &t), Ok(Sort::Type));
    }

    #[test]
    fn sort_errors() {
        let bad = StaticTerm::end(StaticTerm::bool(true));
        assert!(matches!(
            sort_check(&SortContext::new(), &sig(), &bad),
            Err(StaticsError::SortMismatch { .. })
        ));
        let arity = StaticTerm::app(SConst::End, vec![]);
        assert!(matches!(
            sort_check(&SortContext::new(), &sig(), &arity),
            Err(StaticsError::ArityMismatch { .. })
        ));
        assert!(matches!(
            sort_check(&SortContext::new(), &sig(), &StaticTerm::free("q")),
            Err(StaticsError::UnboundStaticVar(_))
        ));
    }

    #[test]
    fn beta_step() {
        let f = StaticTerm::lam(
            Sort::Int,
            StaticTerm::msg(StaticTerm::int(0), StaticTerm::int_s(StaticTerm::Bound(0)), StaticTerm::end(StaticTerm::int(0))),
        );
        let r = beta_normalize(&StaticTerm::apply(f, StaticTerm::int(3)));
        assert_eq!(
            r,
            StaticTerm::msg(StaticTerm::int(0), StaticTerm::int_s(StaticTerm::int(3)), StaticTerm::end(StaticTerm::int(0)))
        );
    }

    #[test]
    fn fix_is_not_unrolled_by_normalization() {
        let body = StaticTerm::lam(
            Sort::SType,
            StaticTerm::msg(StaticTerm::int(0), StaticTerm::c0(SConst::IntTy), StaticTerm::Bound(0)),
        );
        let fx = StaticTerm::c1(SConst::Fix, body);
        assert_eq!(beta_normalize(&fx), fx);
        let unrolled = unroll_fix(&fx).unwrap();
        match session_head(&unrolled).unwrap() {
            SessionHead::Msg { cont, .. } => assert_eq!(cont, fx),
            h => panic!("{h:?}"),
        }
    }

    /// repeat(t, n) = hofix(lam p. lam t. lam n. ite(n>0, msg(S,t)::p(t)(n-1), end(S)), t, n)
    fn repeat(t: StaticTerm, n: StaticTerm) -> StaticTerm {
        let body = StaticTerm::ite(
            StaticTerm::c2(SConst::Gt, StaticTerm::Bound(0), StaticTerm::int(0)),
            StaticTerm::msg(
                StaticTerm::int(0),
                StaticTerm::Bound(1),
                StaticTerm::apply(
                    StaticTerm::apply(StaticTerm::Bound(2), StaticTerm::Bound(1)),
                    StaticTerm::c2(SConst::Sub, StaticTerm::Bound(0), StaticTerm::int(1)),
                ),
            ),
            StaticTerm::end(StaticTerm::int(0)),
        );
        let sorts = vec![Sort::Type, Sort::Int];
        let f = StaticTerm::lam(
            Sort::arrows(&sorts, Sort::SType),
            StaticTerm::lam(Sort::Type, StaticTerm::lam(Sort::Int, body)),
        );
        StaticTerm::app(SConst::HoFix(sorts), vec![f, t, n])
    }

    #[test]
    fn repeat_unrolls_to_ite() {
        let r4 = repeat(StaticTerm::c0(SConst::IntTy), StaticTerm::int(4));
        assert_eq!(sort_check(&SortContext::new(), &sig(), &r4), Ok(Sort::SType));
        assert!(matches!(session_head(&r4).unwrap(), SessionHead::HoFix { .. }));
        let un = unroll_fix(&r4).unwrap();
        match session_head(&un).unwrap() {
            SessionHead::Ite { then_s, .. } => match session_head(&then_s).unwrap() {
                SessionHead::Msg { cont, .. } => assert_eq!(
                    cont,
                    repeat(
                        StaticTerm::c0(SConst::IntTy),
                        StaticTerm::c2(SConst::Sub, StaticTerm::int(4), StaticTerm::int(1))
                    )
                ),
                h => panic!("{h:?}"),
            },
            h => panic!("{h:?}"),
        }
    }

    #[test]
    fn heads() {
        assert_eq!(
            session_head(&StaticTerm::end(StaticTerm::int(0))).unwrap(),
            SessionHead::End { role: StaticTerm::int(0) }
        );
        let m = StaticTerm::msg(StaticTerm::int(1), StaticTerm::int_s(StaticTerm::int(5)), StaticTerm::end(StaticTerm::int(0)));
        assert!(matches!(session_head(&m).unwrap(), SessionHead::Msg { payload, .. } if payload == StaticTerm::int_s(StaticTerm::int(5))));
        assert!(session_head(&StaticTerm::int(3)).is_err());
    }

    #[test]
    fn equality_modulo_constraints() {
        let ctx: SortContext = [(name("m"), Sort::Int), (name("n"), Sort::Int)].into_iter().collect();
        let mut store = ConstraintStore::new();
        store.declare(name("m"), Sort::Int);
        store.declare(name("n"), Sort::Int);
        let im = StaticTerm::int_s(StaticTerm::free("m"));
        let inn = StaticTerm::int_s(StaticTerm::free("n"));
        assert!(static_equal(&ctx, &sig(), &store, &im, &im, &Sort::Type).unwrap());
        assert!(!static_equal(&ctx, &sig(), &store, &im, &inn, &Sort::Type).unwrap());
        store.assume(StaticTerm::eq(StaticTerm::free("m"), StaticTerm::free("n")));
        assert!(static_equal(&ctx, &sig(), &store, &im, &inn, &Sort::Type).unwrap());
    }

    #[test]
    fn ite_not_discharged_by_equality() {
        let p1 = StaticTerm::end(StaticTerm::int(0));
        let p2 = StaticTerm::end(StaticTerm::int(1));
        let ite = StaticTerm::ite(StaticTerm::bool(true), p1.clone(), p2);
        let ctx = SortContext::new();
        assert!(!static_equal(&ctx, &sig(), &ConstraintStore::new(), &ite, &p1, &Sort::SType).unwrap());
    }

    #[test]
    fn equality_under_binders_uses_entailment() {
        let a = StaticTerm::quan(
            StaticTerm::int(1),
            Sort::Int,
            StaticTerm::end(StaticTerm::c2(SConst::Add, StaticTerm::Bound(0), StaticTerm::int(0))),
        );
        let b = StaticTerm::quan(StaticTerm::int(1), Sort::Int, StaticTerm::end(StaticTerm::Bound(0)));
        assert!(static_equal(&SortContext::new(), &sig(), &ConstraintStore::new(), &a, &b, &Sort::SType).unwrap());
    }

    #[test]
    fn abstract_and_instantiate_roundtrip() {
        let t = StaticTerm::msg(StaticTerm::int(1), StaticTerm::int_s(StaticTerm::free("x")), StaticTerm::end(StaticTerm::int(0)));
        let body = t.abstract_free("x");
        assert_eq!(StaticTerm::instantiate(&body, &StaticTerm::free("x")), t);
    }

    #[test]
    fn printing() {
        let s = equal_stype();
        assert_eq!(
            s.to_string(),
            "(quan 1 (lam (_0 int) (quan 1 (lam (_1 int) (:: (msg 1 (int _0)) (:: (msg 1 (int _1)) (:: (msg 0 (bool (= _0 _1))) (end 0))))))))"
        );
    }
}
