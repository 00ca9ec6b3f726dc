//! Dynamic terms, resource accounting, substitution and local reduction.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::statics::{name, Name, Sort, StaticTerm};

pub type ChannelId = u64;
pub type Role = u8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub len: u32,
}

/// Dynamic constants.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DConst {
    ThreadCreate,
    Create,
    Send,
    Recv,
    Close,
    Wait,
    Offer,
    Choose,
    Cut,
    Unify,
    Exify,
    Itet,
    Itef,
    Recurse,
    Add,
    Sub,
    Mul,
    Neg,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Print,
    ArrayGet,
    /// A top-level function.
    User(Name),
}

const NAMED: &[(&str, DConst)] = &[
    ("thread_create", DConst::ThreadCreate),
    ("create", DConst::Create),
    ("send", DConst::Send),
    ("recv", DConst::Recv),
    ("close", DConst::Close),
    ("wait", DConst::Wait),
    ("offer", DConst::Offer),
    ("choose", DConst::Choose),
    ("cut", DConst::Cut),
    ("unify", DConst::Unify),
    ("exify", DConst::Exify),
    ("itet", DConst::Itet),
    ("itef", DConst::Itef),
    ("recurse", DConst::Recurse),
    ("+", DConst::Add),
    ("-", DConst::Sub),
    ("*", DConst::Mul),
    ("neg", DConst::Neg),
    ("=", DConst::Eq),
    ("!=", DConst::Ne),
    ("<", DConst::Lt),
    ("<=", DConst::Le),
    (">", DConst::Gt),
    (">=", DConst::Ge),
    ("and", DConst::And),
    ("or", DConst::Or),
    ("not", DConst::Not),
    ("print", DConst::Print),
    ("array-get", DConst::ArrayGet),
];

impl DConst {
    pub fn from_name(s: &str) -> Option<DConst> {
        NAMED.iter().find(|(n, _)| *n == s).map(|(_, c)| c.clone())
    }

    pub fn name(&self) -> String {
        match self {
            DConst::User(n) => n.to_string(),
            c => NAMED
                .iter()
                .find(|(_, d)| d == c)
                .map(|(n, _)| n.to_string())
                .expect("every builtin is named"),
        }
    }

    /// Proof functions: they only retype an endpoint.
    pub fn is_proof(&self) -> bool {
        matches!(
            self,
            DConst::Unify | DConst::Exify | DConst::Itet | DConst::Itef | DConst::Recurse
        )
    }

    /// Constants that reduce only through pool rules.
    pub fn is_pool_op(&self) -> bool {
        matches!(
            self,
            DConst::ThreadCreate
                | DConst::Create
                | DConst::Send
                | DConst::Recv
                | DConst::Close
                | DConst::Wait
                | DConst::Offer
                | DConst::Choose
                | DConst::Cut
        )
    }

    pub fn is_primitive(&self) -> bool {
        !self.is_proof() && !self.is_pool_op() && !matches!(self, DConst::User(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DynTerm {
    Var(Name),
    Const {
        op: DConst,
        /// Explicit (or, after checking, inferred) static arguments.
        statics: Vec<StaticTerm>,
        args: Vec<DynTerm>,
    },
    Resource(Name),
    Unit,
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Pair(Box<DynTerm>, Box<DynTerm>),
    LetPair {
        a: Name,
        b: Name,
        head: Box<DynTerm>,
        body: Box<DynTerm>,
    },
    If(Box<DynTerm>, Box<DynTerm>, Box<DynTerm>),
    Fst(Box<DynTerm>),
    Snd(Box<DynTerm>),
    Lam {
        param: Name,
        ann: Option<StaticTerm>,
        body: Box<DynTerm>,
    },
    App(Box<DynTerm>, Box<DynTerm>),
    Let {
        x: Name,
        head: Box<DynTerm>,
        body: Box<DynTerm>,
    },
    GuardIntro(Box<DynTerm>),
    GuardElim(Box<DynTerm>),
    AssertIntro(Box<DynTerm>),
    LetAssert {
        x: Name,
        head: Box<DynTerm>,
        body: Box<DynTerm>,
    },
    ForallIntro(Box<DynTerm>),
    ForallElim {
        e: Box<DynTerm>,
        inst: Option<StaticTerm>,
    },
    ExistsIntro {
        witness: Option<StaticTerm>,
        e: Box<DynTerm>,
    },
    LetExists {
        svar: Name,
        x: Name,
        head: Box<DynTerm>,
        body: Box<DynTerm>,
    },
    /// Runtime endpoint `ch_{i,r}`.
    Endpoint(ChannelId, Role),
    Array {
        elem_ty: StaticTerm,
        items: Vec<DynTerm>,
    },
    Loc(Span, Box<DynTerm>),
}

pub fn b(e: DynTerm) -> Box<DynTerm> {
    Box::new(e)
}

impl DynTerm {
    pub fn var(x: &str) -> DynTerm {
        DynTerm::Var(name(x))
    }

    pub fn call(op: DConst, args: Vec<DynTerm>) -> DynTerm {
        DynTerm::Const {
            op,
            statics: vec![],
            args,
        }
    }

    pub fn lam(x: &str, body: DynTerm) -> DynTerm {
        DynTerm::Lam {
            param: name(x),
            ann: None,
            body: b(body),
        }
    }

    pub fn let_(x: &str, head: DynTerm, body: DynTerm) -> DynTerm {
        DynTerm::Let {
            x: name(x),
            head: b(head),
            body: b(body),
        }
    }

    pub fn pair(l: DynTerm, r: DynTerm) -> DynTerm {
        DynTerm::Pair(b(l), b(r))
    }

    pub fn is_value(&self) -> bool {
        match self {
            DynTerm::Unit
            | DynTerm::Int(_)
            | DynTerm::Bool(_)
            | DynTerm::Str(_)
            | DynTerm::Lam { .. }
            | DynTerm::Resource(_)
            | DynTerm::Endpoint(..) => true,
            DynTerm::Pair(l, r) => l.is_value() && r.is_value(),
            DynTerm::GuardIntro(v)
            | DynTerm::AssertIntro(v)
            | DynTerm::ForallIntro(v)
            | DynTerm::ExistsIntro { e: v, .. } => v.is_value(),
            DynTerm::Array { items, .. } => items.iter().all(DynTerm::is_value),
            _ => false,
        }
    }

    /// Removes source locations.
    pub fn strip_locs(&self) -> DynTerm {
        self.map_children(&|e| match e {
            DynTerm::Loc(_, inner) => Some(inner.strip_locs()),
            _ => None,
        })
    }

    /// Outermost location, if any.
    pub fn span(&self) -> Option<Span> {
        match self {
            DynTerm::Loc(s, _) => Some(*s),
            _ => None,
        }
    }

    /// Rebuilds the tree bottom-up, letting `f` override any node.
    pub fn map_children(&self, f: &dyn Fn(&DynTerm) -> Option<DynTerm>) -> DynTerm {
        if let Some(r) = f(self) {
            return r;
        }
        let m = |e: &DynTerm| b(e.map_children(f));
        match self {
            DynTerm::Var(_)
            | DynTerm::Resource(_)
            | DynTerm::Unit
            | DynTerm::Int(_)
            | DynTerm::Bool(_)
            | DynTerm::Str(_)
            | DynTerm::Endpoint(..) => self.clone(),
            DynTerm::Const { op, statics, args } => DynTerm::Const {
                op: op.clone(),
                statics: statics.clone(),
                args: args.iter().map(|a| a.map_children(f)).collect(),
            },
            DynTerm::Pair(l, r) => DynTerm::Pair(m(l), m(r)),
            DynTerm::LetPair { a, b: bb, head, body } => DynTerm::LetPair {
                a: a.clone(),
                b: bb.clone(),
                head: m(head),
                body: m(body),
            },
            DynTerm::If(c, t, e) => DynTerm::If(m(c), m(t), m(e)),
            DynTerm::Fst(e) => DynTerm::Fst(m(e)),
            DynTerm::Snd(e) => DynTerm::Snd(m(e)),
            DynTerm::Lam { param, ann, body } => DynTerm::Lam {
                param: param.clone(),
                ann: ann.clone(),
                body: m(body),
            },
            DynTerm::App(x, y) => DynTerm::App(m(x), m(y)),
            DynTerm::Let { x, head, body } => DynTerm::Let {
                x: x.clone(),
                head: m(head),
                body: m(body),
            },
            DynTerm::GuardIntro(e) => DynTerm::GuardIntro(m(e)),
            DynTerm::GuardElim(e) => DynTerm::GuardElim(m(e)),
            DynTerm::AssertIntro(e) => DynTerm::AssertIntro(m(e)),
            DynTerm::LetAssert { x, head, body } => DynTerm::LetAssert {
                x: x.clone(),
                head: m(head),
                body: m(body),
            },
            DynTerm::ForallIntro(e) => DynTerm::ForallIntro(m(e)),
            DynTerm::ForallElim { e, inst } => DynTerm::ForallElim {
                e: m(e),
                inst: inst.clone(),
            },
            DynTerm::ExistsIntro { witness, e } => DynTerm::ExistsIntro {
                witness: witness.clone(),
                e: m(e),
            },
            DynTerm::LetExists { svar, x, head, body } => DynTerm::LetExists {
                svar: svar.clone(),
                x: x.clone(),
                head: m(head),
                body: m(body),
            },
            DynTerm::Array { elem_ty, items } => DynTerm::Array {
                elem_ty: elem_ty.clone(),
                items: items.iter().map(|a| a.map_children(f)).collect(),
            },
            DynTerm::Loc(s, e) => DynTerm::Loc(*s, m(e)),
        }
    }

    /// Applies `f` to every static term embedded in the term.
    pub fn map_statics(&self, f: &dyn Fn(&StaticTerm) -> StaticTerm) -> DynTerm {
        self.map_children(&|e| match e {
            DynTerm::Const { op, statics, args } => Some(DynTerm::Const {
                op: op.clone(),
                statics: statics.iter().map(f).collect(),
                args: args.iter().map(|a| a.map_statics(f)).collect(),
            }),
            DynTerm::Lam { param, ann, body } => Some(DynTerm::Lam {
                param: param.clone(),
                ann: ann.as_ref().map(f),
                body: b(body.map_statics(f)),
            }),
            DynTerm::ForallElim { e, inst } => Some(DynTerm::ForallElim {
                e: b(e.map_statics(f)),
                inst: inst.as_ref().map(f),
            }),
            DynTerm::ExistsIntro { witness, e } => Some(DynTerm::ExistsIntro {
                witness: witness.as_ref().map(f),
                e: b(e.map_statics(f)),
            }),
            DynTerm::Array { elem_ty, items } => Some(DynTerm::Array {
                elem_ty: f(elem_ty),
                items: items.iter().map(|a| a.map_statics(f)).collect(),
            }),
            _ => None,
        })
    }

    pub fn visit(&self, f: &mut dyn FnMut(&DynTerm)) {
        f(self);
        match self {
            DynTerm::Const { args, .. } => args.iter().for_each(|a| a.visit(f)),
            DynTerm::Array { items, .. } => items.iter().for_each(|a| a.visit(f)),
            DynTerm::Pair(x, y) | DynTerm::App(x, y) => {
                x.visit(f);
                y.visit(f);
            }
            DynTerm::LetPair { head, body, .. }
            | DynTerm::Let { head, body, .. }
            | DynTerm::LetAssert { head, body, .. }
            | DynTerm::LetExists { head, body, .. } => {
                head.visit(f);
                body.visit(f);
            }
            DynTerm::If(c, t, e) => {
                c.visit(f);
                t.visit(f);
                e.visit(f);
            }
            DynTerm::Fst(e)
            | DynTerm::Snd(e)
            | DynTerm::GuardIntro(e)
            | DynTerm::GuardElim(e)
            | DynTerm::AssertIntro(e)
            | DynTerm::ForallIntro(e)
            | DynTerm::ForallElim { e, .. }
            | DynTerm::ExistsIntro { e, .. }
            | DynTerm::Loc(_, e) => e.visit(f),
            DynTerm::Lam { body, .. } => body.visit(f),
            _ => {}
        }
    }

    pub fn endpoints(&self) -> Vec<(ChannelId, Role)> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let DynTerm::Endpoint(i, r) = e {
                out.push((*i, *r));
            }
        });
        out
    }

    pub fn free_vars(&self) -> std::collections::BTreeSet<Name> {
        fn go(e: &DynTerm, bound: &mut Vec<Name>, out: &mut std::collections::BTreeSet<Name>) {
            let under = |names: &[&Name], e: &DynTerm, bound: &mut Vec<Name>, out: &mut _| {
                let n = bound.len();
                bound.extend(names.iter().map(|x| (*x).clone()));
                go(e, bound, out);
                bound.truncate(n);
            };
            match e {
                DynTerm::Var(x) => {
                    if !bound.contains(x) {
                        out.insert(x.clone());
                    }
                }
                DynTerm::Lam { param, body, .. } => under(&[param], body, bound, out),
                DynTerm::Let { x, head, body } | DynTerm::LetAssert { x, head, body } | DynTerm::LetExists { x, head, body, .. } => {
                    go(head, bound, out);
                    under(&[x], body, bound, out);
                }
                DynTerm::LetPair { a, b, head, body } => {
                    go(head, bound, out);
                    under(&[a, b], body, bound, out);
                }
                DynTerm::Const { args, .. } => args.iter().for_each(|a| go(a, bound, out)),
                DynTerm::Array { items, .. } => items.iter().for_each(|a| go(a, bound, out)),
                DynTerm::Pair(x, y) | DynTerm::App(x, y) => {
                    go(x, bound, out);
                    go(y, bound, out);
                }
                DynTerm::If(c, t, f) => {
                    go(c, bound, out);
                    go(t, bound, out);
                    go(f, bound, out);
                }
                DynTerm::Fst(x)
                | DynTerm::Snd(x)
                | DynTerm::GuardIntro(x)
                | DynTerm::GuardElim(x)
                | DynTerm::AssertIntro(x)
                | DynTerm::ForallIntro(x)
                | DynTerm::ForallElim { e: x, .. }
                | DynTerm::ExistsIntro { e: x, .. }
                | DynTerm::Loc(_, x) => go(x, bound, out),
                _ => {}
            }
        }
        let mut out = std::collections::BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Resources

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceItem {
    Resource(Name),
    Endpoint(ChannelId, Role),
}

/// A multiset of resources.
pub type ResourceBag = BTreeMap<ResourceItem, usize>;

fn bag_add(bag: &mut ResourceBag, other: ResourceBag) {
    for (k, n) in other {
        *bag.entry(k).or_insert(0) += n;
    }
}

/// `rho(e)`. For `if` only the condition and the then-branch count; the
/// typing rule makes both branches agree.
pub fn rho(e: &DynTerm) -> ResourceBag {
    let mut bag = ResourceBag::new();
    match e {
        DynTerm::Resource(r) => {
            bag.insert(ResourceItem::Resource(r.clone()), 1);
        }
        DynTerm::Endpoint(i, r) => {
            bag.insert(ResourceItem::Endpoint(*i, *r), 1);
        }
        DynTerm::If(c, t, _) => {
            bag = rho(c);
            bag_add(&mut bag, rho(t));
        }
        DynTerm::Const { args, .. } => args.iter().for_each(|a| bag_add(&mut bag, rho(a))),
        DynTerm::Array { items, .. } => items.iter().for_each(|a| bag_add(&mut bag, rho(a))),
        DynTerm::Pair(x, y) | DynTerm::App(x, y) => {
            bag = rho(x);
            bag_add(&mut bag, rho(y));
        }
        DynTerm::LetPair { head, body, .. }
        | DynTerm::Let { head, body, .. }
        | DynTerm::LetAssert { head, body, .. }
        | DynTerm::LetExists { head, body, .. } => {
            bag = rho(head);
            bag_add(&mut bag, rho(body));
        }
        DynTerm::Fst(x)
        | DynTerm::Snd(x)
        | DynTerm::GuardIntro(x)
        | DynTerm::GuardElim(x)
        | DynTerm::AssertIntro(x)
        | DynTerm::ForallIntro(x)
        | DynTerm::ForallElim { e: x, .. }
        | DynTerm::ExistsIntro { e: x, .. }
        | DynTerm::Loc(_, x)
        | DynTerm::Lam { body: x, .. } => bag = rho(x),
        DynTerm::Var(_) | DynTerm::Unit | DynTerm::Int(_) | DynTerm::Bool(_) | DynTerm::Str(_) => {}
    }
    bag
}

// ---------------------------------------------------------------------------
// Substitution

/// Simultaneous substitution of closed values for variables.
pub fn subst(e: &DynTerm, theta: &BTreeMap<Name, DynTerm>) -> DynTerm {
    if theta.is_empty() {
        return e.clone();
    }
    let without = |names: &[&Name]| {
        if names.iter().any(|n| theta.contains_key(*n)) {
            let mut t = theta.clone();
            for n in names {
                t.remove(*n);
            }
            std::borrow::Cow::Owned(t)
        } else {
            std::borrow::Cow::Borrowed(theta)
        }
    };
    match e {
        DynTerm::Var(x) => theta.get(x).cloned().unwrap_or_else(|| e.clone()),
        DynTerm::Lam { param, ann, body } => DynTerm::Lam {
            param: param.clone(),
            ann: ann.clone(),
            body: b(subst(body, &without(&[param]))),
        },
        DynTerm::Let { x, head, body } => DynTerm::Let {
            x: x.clone(),
            head: b(subst(head, theta)),
            body: b(subst(body, &without(&[x]))),
        },
        DynTerm::LetAssert { x, head, body } => DynTerm::LetAssert {
            x: x.clone(),
            head: b(subst(head, theta)),
            body: b(subst(body, &without(&[x]))),
        },
        DynTerm::LetExists { svar, x, head, body } => DynTerm::LetExists {
            svar: svar.clone(),
            x: x.clone(),
            head: b(subst(head, theta)),
            body: b(subst(body, &without(&[x]))),
        },
        DynTerm::LetPair { a, b: bb, head, body } => DynTerm::LetPair {
            a: a.clone(),
            b: bb.clone(),
            head: b(subst(head, theta)),
            body: b(subst(body, &without(&[a, bb]))),
        },
        _ => e.map_children(&|c| {
            if std::ptr::eq(c, e) {
                None
            } else {
                Some(subst(c, theta))
            }
        }),
    }
}

pub fn subst1(e: &DynTerm, x: &Name, v: &DynTerm) -> DynTerm {
    subst(e, &BTreeMap::from([(x.clone(), v.clone())]))
}

// ---------------------------------------------------------------------------
// Evaluation contexts

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Frame {
    ConstArg {
        op: DConst,
        statics: Vec<StaticTerm>,
        done: Vec<DynTerm>,
        rest: Vec<DynTerm>,
    },
    ArrayItem {
        elem_ty: StaticTerm,
        done: Vec<DynTerm>,
        rest: Vec<DynTerm>,
    },
    PairL(DynTerm),
    PairR(DynTerm),
    LetPairHead { a: Name, b: Name, body: DynTerm },
    IfHead(DynTerm, DynTerm),
    Fst,
    Snd,
    AppFn(DynTerm),
    AppArg(DynTerm),
    LetHead { x: Name, body: DynTerm },
    GuardIntro,
    GuardElim,
    AssertIntro,
    LetAssertHead { x: Name, body: DynTerm },
    ForallIntro,
    ForallElim(Option<StaticTerm>),
    ExistsIntro(Option<StaticTerm>),
    LetExistsHead { svar: Name, x: Name, body: DynTerm },
    Loc(Span),
}

/// Evaluation context, outermost frame first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EvalContext(pub Vec<Frame>);

impl EvalContext {
    pub fn plug(&self, hole: DynTerm) -> DynTerm {
        let mut e = hole;
        for f in self.0.iter().rev() {
            e = match f.clone() {
                Frame::ConstArg { op, statics, mut done, rest } => {
                    done.push(e);
                    done.extend(rest);
                    DynTerm::Const { op, statics, args: done }
                }
                Frame::ArrayItem { elem_ty, mut done, rest } => {
                    done.push(e);
                    done.extend(rest);
                    DynTerm::Array { elem_ty, items: done }
                }
                Frame::PairL(r) => DynTerm::Pair(b(e), b(r)),
                Frame::PairR(l) => DynTerm::Pair(b(l), b(e)),
                Frame::LetPairHead { a, b: bb, body } => DynTerm::LetPair {
                    a,
                    b: bb,
                    head: b(e),
                    body: b(body),
                },
                Frame::IfHead(t, f) => DynTerm::If(b(e), b(t), b(f)),
                Frame::Fst => DynTerm::Fst(b(e)),
                Frame::Snd => DynTerm::Snd(b(e)),
                Frame::AppFn(a) => DynTerm::App(b(e), b(a)),
                Frame::AppArg(f) => DynTerm::App(b(f), b(e)),
                Frame::LetHead { x, body } => DynTerm::Let { x, head: b(e), body: b(body) },
                Frame::GuardIntro => DynTerm::GuardIntro(b(e)),
                Frame::GuardElim => DynTerm::GuardElim(b(e)),
                Frame::AssertIntro => DynTerm::AssertIntro(b(e)),
                Frame::LetAssertHead { x, body } => DynTerm::LetAssert { x, head: b(e), body: b(body) },
                Frame::ForallIntro => DynTerm::ForallIntro(b(e)),
                Frame::ForallElim(inst) => DynTerm::ForallElim { e: b(e), inst },
                Frame::ExistsIntro(witness) => DynTerm::ExistsIntro { witness, e: b(e) },
                Frame::LetExistsHead { svar, x, body } => DynTerm::LetExists {
                    svar,
                    x,
                    head: b(e),
                    body: b(body),
                },
                Frame::Loc(s) => DynTerm::Loc(s, b(e)),
            };
        }
        e
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decomposed {
    Value,
    /// A local redex in the hole.
    Redex(EvalContext, DynTerm),
    /// A pool-level operation with value arguments.
    Blocked(EvalContext, DConst, Vec<StaticTerm>, Vec<DynTerm>),
}

/// Finds the unique leftmost-innermost position to reduce.
pub fn decompose(e: &DynTerm) -> Decomposed {
    let mut frames = Vec::new();
    let mut cur = e.clone();
    loop {
        if cur.is_value() {
            if frames.is_empty() {
                return Decomposed::Value;
            }
            // the enclosing frame is the redex
            let last: Frame = frames.pop().expect("nonempty");
            let ctx = EvalContext(frames);
            let redex = EvalContext(vec![last]).plug(cur);
            return match redex {
                DynTerm::Const { op, statics, args } if op.is_pool_op() => {
                    Decomposed::Blocked(ctx, op, statics, args)
                }
                r => Decomposed::Redex(ctx, r),
            };
        }
        // descend into the first non-value evaluation position
        let (frame, next) = match cur {
            DynTerm::Const { op, statics, args } => {
                let k = args.iter().position(|a| !a.is_value());
                match k {
                    Some(k) => {
                        let mut done = args;
                        let rest = done.split_off(k + 1);
                        let hole = done.pop().expect("k-th argument");
                        (Frame::ConstArg { op, statics, done, rest }, hole)
                    }
                    None => {
                        let t = DynTerm::Const { op: op.clone(), statics: statics.clone(), args: args.clone() };
                        let ctx = EvalContext(frames);
                        return if op.is_pool_op() {
                            Decomposed::Blocked(ctx, op, statics, args)
                        } else {
                            Decomposed::Redex(ctx, t)
                        };
                    }
                }
            }
            DynTerm::Array { elem_ty, items } => {
                let k = items.iter().position(|a| !a.is_value()).expect("non-value array");
                let mut done = items;
                let rest = done.split_off(k + 1);
                let hole = done.pop().expect("k-th item");
                (Frame::ArrayItem { elem_ty, done, rest }, hole)
            }
            DynTerm::Pair(l, r) => {
                if l.is_value() {
                    (Frame::PairR(*l), *r)
                } else {
                    (Frame::PairL(*r), *l)
                }
            }
            DynTerm::LetPair { a, b: bb, head, body } if !head.is_value() => {
                (Frame::LetPairHead { a, b: bb, body: *body }, *head)
            }
            DynTerm::If(c, t, f) if !c.is_value() => (Frame::IfHead(*t, *f), *c),
            DynTerm::Fst(x) if !x.is_value() => (Frame::Fst, *x),
            DynTerm::Snd(x) if !x.is_value() => (Frame::Snd, *x),
            DynTerm::App(f, a) if !f.is_value() => (Frame::AppFn(*a), *f),
            DynTerm::App(f, a) if !a.is_value() => (Frame::AppArg(*f), *a),
            DynTerm::Let { x, head, body } if !head.is_value() => (Frame::LetHead { x, body: *body }, *head),
            DynTerm::GuardIntro(x) => (Frame::GuardIntro, *x),
            DynTerm::GuardElim(x) if !x.is_value() => (Frame::GuardElim, *x),
            DynTerm::AssertIntro(x) => (Frame::AssertIntro, *x),
            DynTerm::LetAssert { x, head, body } if !head.is_value() => {
                (Frame::LetAssertHead { x, body: *body }, *head)
            }
            DynTerm::ForallIntro(x) => (Frame::ForallIntro, *x),
            DynTerm::ForallElim { e, inst } if !e.is_value() => (Frame::ForallElim(inst), *e),
            DynTerm::ExistsIntro { witness, e } => (Frame::ExistsIntro(witness), *e),
            DynTerm::LetExists { svar, x, head, body } if !head.is_value() => {
                (Frame::LetExistsHead { svar, x, body: *body }, *head)
            }
            DynTerm::Loc(s, x) if !x.is_value() => (Frame::Loc(s), *x),
            // every remaining shape is itself a redex with value operands
            other => return Decomposed::Redex(EvalContext(frames), other),
        };
        frames.push(frame);
        cur = next;
    }
}

// ---------------------------------------------------------------------------
// Local reduction

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum StepError {
    #[error("stuck term: {0}")]
    StuckTerm(String),
}

/// A top-level function available to the evaluator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunDef {
    pub name: Name,
    pub static_params: Vec<(Name, Sort)>,
    pub params: Vec<Name>,
    pub body: DynTerm,
}

/// Whether proof functions reduce to their marker forms or have already
/// been erased.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProofMode {
    Erased,
    Materialized,
}

/// Evaluation environment for local steps.
pub struct Machine<'a> {
    pub funs: &'a BTreeMap<Name, FunDef>,
    pub mode: ProofMode,
    pub fresh: u64,
}

impl<'a> Machine<'a> {
    pub fn new(funs: &'a BTreeMap<Name, FunDef>, mode: ProofMode) -> Self {
        Machine { funs, mode, fresh: 0 }
    }

    /// One call-by-value step. `Ok(None)` for values and blocked terms.
    pub fn step_local(&mut self, e: &DynTerm) -> Result<Option<DynTerm>, StepError> {
        match decompose(e) {
            Decomposed::Value | Decomposed::Blocked(..) => Ok(None),
            Decomposed::Redex(ctx, r) => Ok(Some(ctx.plug(self.contract(&r)?))),
        }
    }

    fn stuck(r: &DynTerm) -> StepError {
        StepError::StuckTerm(crate::syntax::print_term(r))
    }

    /// Contracts a redex whose operands are values.
    pub fn contract(&mut self, r: &DynTerm) -> Result<DynTerm, StepError> {
        Ok(match r {
            DynTerm::App(f, a) => match &**f {
                DynTerm::Lam { param, body, .. } => subst1(body, param, a),
                _ => return Err(Self::stuck(r)),
            },
            DynTerm::Let { x, head, body } => subst1(body, x, head),
            DynTerm::LetPair { a, b, head, body } => match &**head {
                DynTerm::Pair(v1, v2) => subst(
                    body,
                    &BTreeMap::from([(a.clone(), (**v1).clone()), (b.clone(), (**v2).clone())]),
                ),
                _ => return Err(Self::stuck(r)),
            },
            DynTerm::If(c, t, f) => match &**c {
                DynTerm::Bool(true) => (**t).clone(),
                DynTerm::Bool(false) => (**f).clone(),
                _ => return Err(Self::stuck(r)),
            },
            DynTerm::Fst(p) | DynTerm::Snd(p) => match &**p {
                DynTerm::Pair(v1, v2) => {
                    if matches!(r, DynTerm::Fst(_)) {
                        (**v1).clone()
                    } else {
                        (**v2).clone()
                    }
                }
                _ => return Err(Self::stuck(r)),
            },
            // markers are eliminated against any value so that erased and
            // materialized values interoperate
            DynTerm::GuardElim(v) => strip_marker(v, |e| matches!(e, DynTerm::GuardIntro(_))),
            DynTerm::ForallElim { e, .. } => strip_marker(e, |e| matches!(e, DynTerm::ForallIntro(_))),
            DynTerm::LetAssert { x, head, body } => {
                subst1(body, x, &strip_marker(head, |e| matches!(e, DynTerm::AssertIntro(_))))
            }
            DynTerm::LetExists { x, head, body, .. } => {
                subst1(body, x, &strip_marker(head, |e| matches!(e, DynTerm::ExistsIntro { .. })))
            }
            DynTerm::Loc(_, v) => (**v).clone(),
            DynTerm::Const { op, statics, args } => self.delta(op, statics, args, r)?,
            _ => return Err(Self::stuck(r)),
        })
    }

    fn delta(&mut self, op: &DConst, statics: &[StaticTerm], args: &[DynTerm], r: &DynTerm) -> Result<DynTerm, StepError> {
        let int = |k: usize| match args.get(k) {
            Some(DynTerm::Int(i)) => Ok(*i),
            _ => Err(Self::stuck(r)),
        };
        let boolean = |k: usize| match args.get(k) {
            Some(DynTerm::Bool(b)) => Ok(*b),
            _ => Err(Self::stuck(r)),
        };
        let overflow = || Self::stuck(r);
        Ok(match op {
            DConst::Add => DynTerm::Int(int(0)?.checked_add(int(1)?).ok_or_else(overflow)?),
            DConst::Sub => DynTerm::Int(int(0)?.checked_sub(int(1)?).ok_or_else(overflow)?),
            DConst::Mul => DynTerm::Int(int(0)?.checked_mul(int(1)?).ok_or_else(overflow)?),
            DConst::Neg => DynTerm::Int(int(0)?.checked_neg().ok_or_else(overflow)?),
            DConst::Eq | DConst::Ne => {
                let same = match (&args[0], &args[1]) {
                    (DynTerm::Int(x), DynTerm::Int(y)) => x == y,
                    (DynTerm::Bool(x), DynTerm::Bool(y)) => x == y,
                    _ => return Err(Self::stuck(r)),
                };
                DynTerm::Bool(same == (*op == DConst::Eq))
            }
            DConst::Lt => DynTerm::Bool(int(0)? < int(1)?),
            DConst::Le => DynTerm::Bool(int(0)? <= int(1)?),
            DConst::Gt => DynTerm::Bool(int(0)? > int(1)?),
            DConst::Ge => DynTerm::Bool(int(0)? >= int(1)?),
            DConst::And => DynTerm::Bool(boolean(0)? && boolean(1)?),
            DConst::Or => DynTerm::Bool(boolean(0)? || boolean(1)?),
            DConst::Not => DynTerm::Bool(!boolean(0)?),
            // output is observed by the runtime before the step is taken
            DConst::Print => DynTerm::Unit,
            DConst::ArrayGet => match &args[0] {
                DynTerm::Array { items, .. } => {
                    let i = int(1)?;
                    usize::try_from(i)
                        .ok()
                        .and_then(|i| items.get(i))
                        .cloned()
                        .ok_or_else(|| Self::stuck(r))?
                }
                _ => return Err(Self::stuck(r)),
            },
            DConst::Unify | DConst::Exify | DConst::Itet | DConst::Itef | DConst::Recurse => {
                let v = args.first().cloned().ok_or_else(|| Self::stuck(r))?;
                match (self.mode, op) {
                    (ProofMode::Materialized, DConst::Unify) => DynTerm::ForallIntro(b(v)),
                    (ProofMode::Materialized, DConst::Exify) => DynTerm::ExistsIntro { witness: None, e: b(v) },
                    _ => v,
                }
            }
            DConst::User(f) => self.unfold(f, statics, args).ok_or_else(|| Self::stuck(r))?,
            _ => return Err(Self::stuck(r)),
        })
    }

    /// Instantiates the body of `f`. Static parameters are replaced by the
    /// call's static arguments; any other static name bound inside the
    /// body is renamed apart.
    pub fn unfold(&mut self, f: &Name, statics: &[StaticTerm], args: &[DynTerm]) -> Option<DynTerm> {
        let def = self.funs.get(f)?;
        if def.params.len() != args.len() {
            return None;
        }
        let mut smap: BTreeMap<Name, StaticTerm> = BTreeMap::new();
        for (i, (p, _)) in def.static_params.iter().enumerate() {
            if let Some(s) = statics.get(i) {
                smap.insert(p.clone(), s.clone());
            }
        }
        self.fresh += 1;
        let k = self.fresh;
        let mut locals = std::collections::BTreeSet::new();
        collect_static_names(&def.body, &mut locals);
        for n in locals {
            if !smap.contains_key(&n) {
                smap.insert(n.clone(), StaticTerm::Free(name(&format!("{}#{k}", base_name(&n)))));
            }
        }
        let body = def.body.map_statics(&|s| s.subst_frees(&smap));
        let body = rename_let_exists(&body, &smap);
        let theta: BTreeMap<Name, DynTerm> = def.params.iter().cloned().zip(args.iter().cloned()).collect();
        Some(subst(&body, &theta))
    }
}

fn strip_marker(v: &DynTerm, is: impl Fn(&DynTerm) -> bool) -> DynTerm {
    if is(v) {
        match v {
            DynTerm::GuardIntro(x) | DynTerm::ForallIntro(x) | DynTerm::AssertIntro(x) | DynTerm::ExistsIntro { e: x, .. } => {
                (**x).clone()
            }
            _ => v.clone(),
        }
    } else {
        v.clone()
    }
}

/// Strips a `#k` freshness suffix.
pub fn base_name(n: &str) -> &str {
    n.split('#').next().unwrap_or(n)
}

/// Free static names occurring in the term's static annotations, and
/// static names bound by `let ex`.
pub fn collect_static_names(e: &DynTerm, out: &mut std::collections::BTreeSet<Name>) {
    e.visit(&mut |t| {
        let mut add = |s: &StaticTerm| out.extend(s.free_names());
        match t {
            DynTerm::Const { statics, .. } => statics.iter().for_each(&mut add),
            DynTerm::Lam { ann: Some(a), .. } => add(a),
            DynTerm::ForallElim { inst: Some(s), .. } => add(s),
            DynTerm::ExistsIntro { witness: Some(s), .. } => add(s),
            DynTerm::Array { elem_ty, .. } => add(elem_ty),
            DynTerm::LetExists { svar, .. } => {
                out.insert(svar.clone());
            }
            _ => {}
        }
    });
}

fn rename_let_exists(e: &DynTerm, map: &BTreeMap<Name, StaticTerm>) -> DynTerm {
    e.map_children(&|t| match t {
        DynTerm::LetExists { svar, x, head, body } => {
            let svar = match map.get(svar) {
                Some(StaticTerm::Free(n)) => n.clone(),
                _ => svar.clone(),
            };
            Some(DynTerm::LetExists {
                svar,
                x: x.clone(),
                head: b(rename_let_exists(head, map)),
                body: b(rename_let_exists(body, map)),
            })
        }
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_funs() -> BTreeMap<Name, FunDef> {
        BTreeMap::new()
    }

    fn step(e: &DynTerm) -> Option<DynTerm> {
        let funs = no_funs();
        Machine::new(&funs, ProofMode::Erased).step_local(e).unwrap()
    }

    #[test]
    fn rho_of_pair_and_lambda() {
        let p = DynTerm::pair(DynTerm::Resource(name("r1")), DynTerm::Resource(name("r2")));
        let bag = rho(&p);
        assert_eq!(bag.len(), 2);
        assert!(rho(&DynTerm::lam("x", DynTerm::var("x"))).is_empty());
    }

    #[test]
    fn rho_of_if_counts_then_branch() {
        // if b then close(c) else wait(c): the endpoint counts once
        let c = DynTerm::Endpoint(3, 0);
        let e = DynTerm::If(
            b(DynTerm::var("b")),
            b(DynTerm::call(DConst::Close, vec![c.clone()])),
            b(DynTerm::call(DConst::Wait, vec![c])),
        );
        assert_eq!(rho(&e), BTreeMap::from([(ResourceItem::Endpoint(3, 0), 1)]));
    }

    #[test]
    fn substitution() {
        let x = name("x");
        assert_eq!(subst1(&DynTerm::var("x"), &x, &DynTerm::Unit), DynTerm::Unit);
        assert_eq!(
            subst1(&DynTerm::lam("y", DynTerm::var("x")), &x, &DynTerm::Int(1)),
            DynTerm::lam("y", DynTerm::Int(1))
        );
        // shadowing binder stops substitution
        let shadow = DynTerm::lam("x", DynTerm::var("x"));
        assert_eq!(subst1(&shadow, &x, &DynTerm::Int(1)), shadow);
    }

    #[test]
    fn decompose_shapes() {
        let beta = DynTerm::App(b(DynTerm::lam("x", DynTerm::var("x"))), b(DynTerm::Unit));
        assert!(matches!(decompose(&beta), Decomposed::Redex(ctx, _) if ctx.0.is_empty()));
        let send = DynTerm::call(DConst::Send, vec![DynTerm::Endpoint(3, 1), DynTerm::Int(5)]);
        assert!(matches!(decompose(&send), Decomposed::Blocked(_, DConst::Send, _, _)));
        assert_eq!(decompose(&DynTerm::Unit), Decomposed::Value);
    }

    #[test]
    fn local_steps() {
        let e = DynTerm::If(b(DynTerm::Bool(true)), b(DynTerm::Int(1)), b(DynTerm::Int(2)));
        assert_eq!(step(&e), Some(DynTerm::Int(1)));
        let id = DynTerm::lam("x", DynTerm::var("x"));
        let m = DynTerm::ForallElim { e: b(DynTerm::ForallIntro(b(id.clone()))), inst: None };
        assert_eq!(step(&m), Some(id));
        let eq = DynTerm::call(DConst::Eq, vec![DynTerm::Int(5), DynTerm::Int(5)]);
        assert_eq!(step(&eq), Some(DynTerm::Bool(true)));
        assert_eq!(step(&DynTerm::Unit), None);
    }

    #[test]
    fn left_to_right() {
        let add = |a, c| DynTerm::call(DConst::Add, vec![a, c]);
        let e = add(add(DynTerm::Int(1), DynTerm::Int(2)), add(DynTerm::Int(3), DynTerm::Int(4)));
        assert_eq!(step(&e), Some(add(DynTerm::Int(3), add(DynTerm::Int(3), DynTerm::Int(4)))));
    }

    #[test]
    fn stuck_is_reported() {
        let funs = no_funs();
        let bad = DynTerm::App(b(DynTerm::Int(1)), b(DynTerm::Unit));
        assert!(Machine::new(&funs, ProofMode::Erased).step_local(&bad).is_err());
    }

    #[test]
    fn unfolding_renames_local_statics() {
        let body = DynTerm::LetExists {
            svar: name("m"),
            x: name("c"),
            head: b(DynTerm::var("ch")),
            body: b(DynTerm::var("c")),
        };
        let funs = BTreeMap::from([(
            name("f"),
            FunDef { name: name("f"), static_params: vec![], params: vec![name("ch")], body },
        )]);
        let mut m = Machine::new(&funs, ProofMode::Erased);
        let out = m.unfold(&name("f"), &[], &[DynTerm::Endpoint(0, 1)]).unwrap();
        match out {
            DynTerm::LetExists { svar, head, .. } => {
                assert_eq!(&*svar, "m#1");
                assert_eq!(*head, DynTerm::Endpoint(0, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    fn arb_value() -> impl Strategy<Value = DynTerm> {
        let leaf = prop_oneof![
            Just(DynTerm::Unit),
            (-5i64..5).prop_map(DynTerm::Int),
            any::<bool>().prop_map(DynTerm::Bool),
            (0u64..3, 0u8..2).prop_map(|(i, r)| DynTerm::Endpoint(i, r)),
        ];
        leaf.prop_recursive(2, 6, 2, |inner| (inner.clone(), inner).prop_map(|(x, y)| DynTerm::pair(x, y)))
    }

    fn arb_term() -> impl Strategy<Value = DynTerm> {
        let leaf = prop_oneof![
            arb_value(),
            (-5i64..5, -5i64..5).prop_map(|(x, y)| DynTerm::call(DConst::Add, vec![DynTerm::Int(x), DynTerm::Int(y)])),
            arb_value().prop_map(|v| DynTerm::call(DConst::Send, vec![DynTerm::Endpoint(0, 0), v])),
        ];
        leaf.prop_recursive(3, 12, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(x, y)| DynTerm::pair(x, y)),
                (inner.clone(), inner.clone()).prop_map(|(x, y)| DynTerm::let_("z", x, y)),
                (inner.clone(), inner.clone(), inner.clone())
                    .prop_map(|(c, t, f)| DynTerm::If(b(c), b(t), b(f))),
                inner.clone().prop_map(|x| DynTerm::Fst(b(x))),
                inner.prop_map(|x| DynTerm::GuardElim(b(x))),
            ]
        })
    }

    proptest! {
        #[test]
        fn plug_inverts_decompose(e in arb_term()) {
            match decompose(&e) {
                Decomposed::Value => prop_assert!(e.is_value()),
                Decomposed::Redex(ctx, r) => prop_assert_eq!(ctx.plug(r), e),
                Decomposed::Blocked(ctx, op, statics, args) => {
                    prop_assert_eq!(ctx.plug(DynTerm::Const { op, statics, args }), e)
                }
            }
        }

        #[test]
        fn pure_steps_preserve_resources(x in arb_value(), y in arb_value()) {
            // let-bound and projected values keep their endpoints
            let e = DynTerm::let_("z", DynTerm::pair(x, y), DynTerm::var("z"));
            let before = rho(&e);
            let after = step(&e).unwrap();
            prop_assert_eq!(rho(&after), before);
        }
    }
}
