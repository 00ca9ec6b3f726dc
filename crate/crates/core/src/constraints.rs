//! Entailment of linear integer / boolean constraints.
//!
//! `entails(store, goal)` asks whether `assumptions /\ not goal` has an
//! integer model. The formula is put in negation normal form and explored
//! one disjunct at a time; each disjunct's integer part is decided with the
//! Omega test (exact elimination, real and dark shadows, splinters). When a
//! model exists it is reconstructed variable by variable and reported as a
//! countermodel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::statics::{Name, SConst, Sort, StaticTerm};

/// Assumptions `Phi` together with the sorts of their variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintStore {
    pub assumptions: Vec<StaticTerm>,
    pub var_sorts: BTreeMap<Name, Sort>,
}

impl ConstraintStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, n: Name, s: Sort) {
        self.var_sorts.insert(n, s);
    }

    pub fn assume(&mut self, p: StaticTerm) {
        self.assumptions.push(p);
    }

    pub fn with(&self, p: StaticTerm) -> Self {
        let mut s = self.clone();
        s.assume(p);
        s
    }

    /// True when the assumptions have no model. Unsupported stores count
    /// as consistent.
    pub fn is_inconsistent(&self) -> bool {
        matches!(entails(self, &StaticTerm::bool(false)), Verdict::Valid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SValue {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for SValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SValue::Int(i) => write!(f, "{i}"),
            SValue::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment(pub BTreeMap<Name, SValue>);

impl Assignment {
    pub fn get(&self, n: &str) -> Option<SValue> {
        self.0.get(n).copied()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{k} = {v}")?;
        }
        if first {
            f.write_str("(no variables)")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    /// Not entailed; the assignment satisfies every assumption and
    /// falsifies the goal.
    Invalid(Assignment),
    /// Outside the decidable fragment (nonlinear terms, unknown
    /// constructs) or over the search budget.
    Unsupported(String),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

// ---------------------------------------------------------------------------
// Evaluation

fn var_key(t: &StaticTerm) -> Option<Name> {
    match t {
        StaticTerm::Free(n) => Some(n.clone()),
        StaticTerm::Meta(m) => Some(crate::statics::name(&format!("?{m}"))),
        _ => None,
    }
}

/// Integer value of `t` under `asg`. `None` on unknown variables,
/// non-integer terms or overflow.
pub fn eval_int(t: &StaticTerm, asg: &Assignment) -> Option<i64> {
    match t {
        StaticTerm::Free(_) | StaticTerm::Meta(_) => match asg.get(&var_key(t)?)? {
            SValue::Int(i) => Some(i),
            SValue::Bool(_) => None,
        },
        StaticTerm::App(c, a) => match (c, a.as_slice()) {
            (SConst::Int(i), []) => Some(*i),
            (SConst::Add, [x, y]) => eval_int(x, asg)?.checked_add(eval_int(y, asg)?),
            (SConst::Sub, [x, y]) => eval_int(x, asg)?.checked_sub(eval_int(y, asg)?),
            (SConst::Mul, [x, y]) => eval_int(x, asg)?.checked_mul(eval_int(y, asg)?),
            (SConst::Neg, [x]) => eval_int(x, asg)?.checked_neg(),
            _ => None,
        },
        _ => None,
    }
}

/// Truth value of the proposition `t` under `asg`.
pub fn eval_prop(t: &StaticTerm, asg: &Assignment) -> Option<bool> {
    match t {
        StaticTerm::Free(_) | StaticTerm::Meta(_) => match asg.get(&var_key(t)?)? {
            SValue::Bool(b) => Some(b),
            SValue::Int(_) => None,
        },
        StaticTerm::App(c, a) => match (c, a.as_slice()) {
            (SConst::Bool(b), []) => Some(*b),
            (SConst::Not, [x]) => Some(!eval_prop(x, asg)?),
            (SConst::And, [x, y]) => Some(eval_prop(x, asg)? & eval_prop(y, asg)?),
            (SConst::Or, [x, y]) => Some(eval_prop(x, asg)? | eval_prop(y, asg)?),
            (SConst::Implies, [x, y]) => Some(!eval_prop(x, asg)? | eval_prop(y, asg)?),
            (SConst::Iff, [x, y]) => Some(eval_prop(x, asg)? == eval_prop(y, asg)?),
            (SConst::Eq | SConst::Ne, [x, y]) => {
                let same = match (eval_int(x, asg), eval_int(y, asg)) {
                    (Some(i), Some(j)) => i == j,
                    _ => eval_prop(x, asg)? == eval_prop(y, asg)?,
                };
                Some(if *c == SConst::Eq { same } else { !same })
            }
            (SConst::Lt, [x, y]) => Some(eval_int(x, asg)? < eval_int(y, asg)?),
            (SConst::Le, [x, y]) => Some(eval_int(x, asg)? <= eval_int(y, asg)?),
            (SConst::Gt, [x, y]) => Some(eval_int(x, asg)? > eval_int(y, asg)?),
            (SConst::Ge, [x, y]) => Some(eval_int(x, asg)? >= eval_int(y, asg)?),
            _ => None,
        },
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Translation to linear literals

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Lin {
    coeffs: BTreeMap<usize, i128>,
    c: i128,
}

impl Lin {
    fn constant(c: i128) -> Self {
        Lin { coeffs: BTreeMap::new(), c }
    }

    fn var(v: usize) -> Self {
        Lin {
            coeffs: BTreeMap::from([(v, 1)]),
            c: 0,
        }
    }

    fn add(&self, o: &Lin, k: i128) -> Lin {
        let mut r = self.clone();
        for (v, a) in &o.coeffs {
            let e = r.coeffs.entry(*v).or_insert(0);
            *e += a * k;
            if *e == 0 {
                r.coeffs.remove(v);
            }
        }
        r.c += o.c * k;
        r
    }

    fn scale(&self, k: i128) -> Lin {
        if k == 0 {
            return Lin::constant(0);
        }
        Lin {
            coeffs: self.coeffs.iter().map(|(v, a)| (*v, a * k)).collect(),
            c: self.c * k,
        }
    }

    fn coeff(&self, v: usize) -> i128 {
        self.coeffs.get(&v).copied().unwrap_or(0)
    }

    fn is_const(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Replaces `v` by `def`.
    fn subst(&self, v: usize, def: &Lin) -> Lin {
        let a = self.coeff(v);
        if a == 0 {
            return self.clone();
        }
        let mut r = self.clone();
        r.coeffs.remove(&v);
        r.add(def, a)
    }

    fn magnitude(&self) -> i128 {
        self.coeffs
            .values()
            .map(|a| a.abs())
            .chain(std::iter::once(self.c.abs()))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
enum Formula {
    Const(bool),
    /// `lin >= 0`
    Geq(Lin),
    /// `lin = 0`
    Eq(Lin),
    BoolVar(usize, bool),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

#[derive(Default)]
struct Vars {
    ints: Vec<Name>,
    bools: Vec<Name>,
}

impl Vars {
    fn int(&mut self, n: Name) -> usize {
        if let Some(i) = self.ints.iter().position(|m| *m == n) {
            return i;
        }
        self.ints.push(n);
        self.ints.len() - 1
    }

    fn boolean(&mut self, n: Name) -> usize {
        if let Some(i) = self.bools.iter().position(|m| *m == n) {
            return i;
        }
        self.bools.push(n);
        self.bools.len() - 1
    }
}

struct Translator<'a> {
    sorts: &'a BTreeMap<Name, Sort>,
    vars: Vars,
}

impl Translator<'_> {
    fn is_boolish(&self, t: &StaticTerm) -> bool {
        match t {
            StaticTerm::Free(n) => self.sorts.get(n) == Some(&Sort::Bool),
            StaticTerm::App(c, _) => matches!(
                c,
                SConst::Bool(_)
                    | SConst::Not
                    | SConst::And
                    | SConst::Or
                    | SConst::Implies
                    | SConst::Iff
                    | SConst::Eq
                    | SConst::Ne
                    | SConst::Lt
                    | SConst::Le
                    | SConst::Gt
                    | SConst::Ge
            ),
            _ => false,
        }
    }

    fn lin(&mut self, t: &StaticTerm) -> Result<Lin, String> {
        match t {
            StaticTerm::Free(_) | StaticTerm::Meta(_) => {
                let n = var_key(t).expect("variable");
                if self.sorts.get(&n) == Some(&Sort::Bool) {
                    return Err(format!("boolean `{n}` used as an integer"));
                }
                Ok(Lin::var(self.vars.int(n)))
            }
            StaticTerm::App(c, a) => match (c, a.as_slice()) {
                (SConst::Int(i), []) => Ok(Lin::constant(*i as i128)),
                (SConst::Add, [x, y]) => Ok(self.lin(x)?.add(&self.lin(y)?, 1)),
                (SConst::Sub, [x, y]) => Ok(self.lin(x)?.add(&self.lin(y)?, -1)),
                (SConst::Neg, [x]) => Ok(self.lin(x)?.scale(-1)),
                (SConst::Mul, [x, y]) => {
                    let (lx, ly) = (self.lin(x)?, self.lin(y)?);
                    if lx.is_const() {
                        Ok(ly.scale(lx.c))
                    } else if ly.is_const() {
                        Ok(lx.scale(ly.c))
                    } else {
                        Err(format!("nonlinear term {t}"))
                    }
                }
                _ => Err(format!("not an integer term: {t}")),
            },
            _ => Err(format!("not an integer term: {t}")),
        }
    }

    /// NNF of `t` (negated when `pos` is false).
    fn prop(&mut self, t: &StaticTerm, pos: bool) -> Result<Formula, String> {
        let junction = |pos: bool, a: Formula, b: Formula| {
            if pos {
                Formula::And(vec![a, b])
            } else {
                Formula::Or(vec![a, b])
            }
        };
        match t {
            StaticTerm::Free(_) | StaticTerm::Meta(_) => {
                let n = var_key(t).expect("variable");
                if self.sorts.get(&n).is_some_and(|s| *s != Sort::Bool) {
                    return Err(format!("`{n}` used as a proposition"));
                }
                Ok(Formula::BoolVar(self.vars.boolean(n), pos))
            }
            StaticTerm::App(c, a) => match (c, a.as_slice()) {
                (SConst::Bool(b), []) => Ok(Formula::Const(*b == pos)),
                (SConst::Not, [x]) => self.prop(x, !pos),
                (SConst::And, [x, y]) => Ok(junction(pos, self.prop(x, pos)?, self.prop(y, pos)?)),
                (SConst::Or, [x, y]) => Ok(junction(!pos, self.prop(x, pos)?, self.prop(y, pos)?)),
                (SConst::Implies, [x, y]) => {
                    Ok(junction(!pos, self.prop(x, !pos)?, self.prop(y, pos)?))
                }
                (SConst::Iff, [x, y]) => self.iff(x, y, pos),
                (SConst::Eq | SConst::Ne, [x, y]) if self.is_boolish(x) || self.is_boolish(y) => {
                    self.iff(x, y, pos == (*c == SConst::Eq))
                }
                (SConst::Eq | SConst::Ne, [x, y]) => {
                    let d = self.lin(x)?.add(&self.lin(y)?, -1);
                    if pos == (*c == SConst::Eq) {
                        Ok(Formula::Eq(d))
                    } else {
                        // d < 0 \/ d > 0
                        Ok(Formula::Or(vec![
                            Formula::Geq(d.scale(-1).add(&Lin::constant(-1), 1)),
                            Formula::Geq(d.add(&Lin::constant(-1), 1)),
                        ]))
                    }
                }
                (SConst::Lt | SConst::Le | SConst::Gt | SConst::Ge, [x, y]) => {
                    let (lx, ly) = (self.lin(x)?, self.lin(y)?);
                    // every comparison becomes `lin >= 0`
                    let strict = matches!(c, SConst::Lt | SConst::Gt);
                    let greater_side = matches!(c, SConst::Gt | SConst::Ge);
                    let (hi, lo, strict) = match (greater_side, pos) {
                        (true, true) => (lx, ly, strict),
                        (false, true) => (ly, lx, strict),
                        // not (x > y) is x <= y, not (x >= y) is x < y
                        (true, false) => (ly, lx, !strict),
                        (false, false) => (lx, ly, !strict),
                    };
                    let d = hi.add(&lo, -1);
                    Ok(Formula::Geq(if strict { d.add(&Lin::constant(-1), 1) } else { d }))
                }
                _ => Err(format!("not a proposition: {t}")),
            },
            _ => Err(format!("not a proposition: {t}")),
        }
    }

    fn iff(&mut self, x: &StaticTerm, y: &StaticTerm, pos: bool) -> Result<Formula, String> {
        let (xp, xn, yp, yn) = (
            self.prop(x, true)?,
            self.prop(x, false)?,
            self.prop(y, true)?,
            self.prop(y, false)?,
        );
        Ok(if pos {
            Formula::Or(vec![Formula::And(vec![xp, yp]), Formula::And(vec![xn, yn])])
        } else {
            Formula::Or(vec![Formula::And(vec![xp, yn]), Formula::And(vec![xn, yp])])
        })
    }
}

// ---------------------------------------------------------------------------
// Omega test

#[derive(Debug)]
struct Budget(u64);

impl Budget {
    fn spend(&mut self) -> Result<(), String> {
        if self.0 == 0 {
            return Err("constraint search budget exhausted".into());
        }
        self.0 -= 1;
        Ok(())
    }
}

const COEFF_LIMIT: i128 = 1 << 100;

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn floor_div(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

/// `a mod^ m`, the symmetric residue in `(-m/2, m/2]`.
fn mod_hat(a: i128, m: i128) -> i128 {
    a - m * floor_div(2 * a + m, 2 * m)
}

enum Norm {
    Trivial(bool),
    Keep(Lin),
}

fn normalize(l: Lin, is_eq: bool) -> Result<Norm, String> {
    if l.magnitude() > COEFF_LIMIT {
        return Err("coefficient overflow in constraint solving".into());
    }
    if l.is_const() {
        return Ok(Norm::Trivial(if is_eq { l.c == 0 } else { l.c >= 0 }));
    }
    let g = l.coeffs.values().fold(0, |g, a| gcd(g, *a));
    if g == 1 {
        return Ok(Norm::Keep(l));
    }
    if is_eq && l.c % g != 0 {
        return Ok(Norm::Trivial(false));
    }
    Ok(Norm::Keep(Lin {
        coeffs: l.coeffs.iter().map(|(v, a)| (*v, a / g)).collect(),
        c: floor_div(l.c, g),
    }))
}

/// Satisfiability over the integers of `eqs = 0 /\ geqs >= 0`. `next` is
/// the first unused variable index.
fn omega(mut eqs: Vec<Lin>, mut geqs: Vec<Lin>, mut next: usize, budget: &mut Budget) -> Result<bool, String> {
    loop {
        budget.spend()?;
        let mut kept = Vec::with_capacity(eqs.len());
        for e in eqs {
            match normalize(e, true)? {
                Norm::Trivial(true) => {}
                Norm::Trivial(false) => return Ok(false),
                Norm::Keep(e) => kept.push(e),
            }
        }
        eqs = kept;
        let Some(e) = eqs.pop() else { break };
        if let Some((&k, &a)) = e.coeffs.iter().find(|(_, a)| a.abs() == 1) {
            // a x_k + rest = 0, so x_k = -a * rest
            let mut rest = e.clone();
            rest.coeffs.remove(&k);
            let def = rest.scale(-a);
            eqs = eqs.iter().map(|l| l.subst(k, &def)).collect();
            geqs = geqs.iter().map(|l| l.subst(k, &def)).collect();
        } else {
            let (&k, &ak) = e
                .coeffs
                .iter()
                .min_by_key(|(_, a)| a.abs())
                .expect("nonconstant equation");
            let m = ak.abs() + 1;
            let sigma = next;
            next += 1;
            let sign = ak.signum();
            let mut def = Lin::var(sigma).scale(-m);
            for (&v, &a) in &e.coeffs {
                if v != k {
                    def = def.add(&Lin::var(v), mod_hat(a, m));
                }
            }
            def.c += mod_hat(e.c, m);
            let def = def.scale(sign);
            eqs.push(e.subst(k, &def));
            eqs = eqs.iter().map(|l| l.subst(k, &def)).collect();
            geqs = geqs.iter().map(|l| l.subst(k, &def)).collect();
        }
    }
    inequalities(geqs, next, budget)
}

fn inequalities(geqs: Vec<Lin>, next: usize, budget: &mut Budget) -> Result<bool, String> {
    budget.spend()?;
    // normalize, keep the tightest constant per coefficient vector
    let mut tight: BTreeMap<BTreeMap<usize, i128>, i128> = BTreeMap::new();
    for g in geqs {
        match normalize(g, false)? {
            Norm::Trivial(true) => {}
            Norm::Trivial(false) => return Ok(false),
            Norm::Keep(l) => {
                let e = tight.entry(l.coeffs).or_insert(l.c);
                *e = (*e).min(l.c);
            }
        }
    }
    // opposite pairs: a.x + c >= 0 and -a.x + d >= 0
    let mut found_eq = None;
    for (co, c) in &tight {
        let neg: BTreeMap<usize, i128> = co.iter().map(|(v, a)| (*v, -a)).collect();
        if let Some(d) = tight.get(&neg) {
            if c + d < 0 {
                return Ok(false);
            }
            if c + d == 0 && found_eq.is_none() {
                found_eq = Some(Lin { coeffs: co.clone(), c: *c });
            }
        }
    }
    let geqs: Vec<Lin> = tight.into_iter().map(|(coeffs, c)| Lin { coeffs, c }).collect();
    if let Some(e) = found_eq {
        return omega(vec![e], geqs, next, budget);
    }
    if geqs.is_empty() {
        return Ok(true);
    }
    let vars: BTreeSet<usize> = geqs.iter().flat_map(|g| g.coeffs.keys().copied()).collect();
    // a variable bounded on one side only can absorb its constraints
    for &v in &vars {
        let lower = geqs.iter().any(|g| g.coeff(v) > 0);
        let upper = geqs.iter().any(|g| g.coeff(v) < 0);
        if !(lower && upper) {
            let rest = geqs.into_iter().filter(|g| g.coeff(v) == 0).collect();
            return inequalities(rest, next, budget);
        }
    }
    let exact_for = |v: usize| {
        geqs.iter().filter(|g| g.coeff(v) > 0).all(|g| g.coeff(v) == 1)
            || geqs.iter().filter(|g| g.coeff(v) < 0).all(|g| g.coeff(v) == -1)
    };
    let cost = |v: usize| {
        let lo = geqs.iter().filter(|g| g.coeff(v) > 0).count();
        let up = geqs.iter().filter(|g| g.coeff(v) < 0).count();
        lo * up
    };
    let v = vars
        .iter()
        .copied()
        .min_by_key(|&v| (!exact_for(v), cost(v)))
        .expect("nonempty");
    let exact = exact_for(v);
    let lowers: Vec<&Lin> = geqs.iter().filter(|g| g.coeff(v) > 0).collect();
    let uppers: Vec<&Lin> = geqs.iter().filter(|g| g.coeff(v) < 0).collect();
    let others: Vec<Lin> = geqs.iter().filter(|g| g.coeff(v) == 0).cloned().collect();
    let shadow = |dark: bool| {
        let mut out = others.clone();
        for l in &lowers {
            let a = l.coeff(v);
            for u in &uppers {
                let b = -u.coeff(v);
                // b*(a x + l) + a*(-b x + u) = b*l + a*u
                let mut comb = l.scale(b).add(u, a);
                comb.coeffs.remove(&v);
                if dark {
                    comb.c -= (a - 1) * (b - 1);
                }
                out.push(comb);
            }
        }
        out
    };
    if exact {
        return inequalities(shadow(false), next, budget);
    }
    if !inequalities(shadow(false), next, budget)? {
        return Ok(false);
    }
    if inequalities(shadow(true), next, budget)? {
        return Ok(true);
    }
    let bmax = uppers.iter().map(|u| -u.coeff(v)).max().expect("upper bound");
    for l in &lowers {
        let a = l.coeff(v);
        let limit = floor_div(a * bmax - a - bmax, bmax);
        for j in 0..=limit {
            let eq = l.add(&Lin::constant(-j), 1);
            if omega(vec![eq], geqs.clone(), next, budget)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Disjunct search and model construction

struct Literals {
    eqs: Vec<Lin>,
    geqs: Vec<Lin>,
    bools: BTreeMap<usize, bool>,
}

/// Searches the disjuncts of `stack` for one whose literals are
/// satisfiable; returns its literals.
fn search(
    lits: &mut Literals,
    stack: &mut Vec<Formula>,
    nvars: usize,
    budget: &mut Budget,
) -> Result<bool, String> {
    let Some(f) = stack.pop() else {
        return omega(lits.eqs.clone(), lits.geqs.clone(), nvars, budget);
    };
    let result = match &f {
        Formula::Const(true) => search(lits, stack, nvars, budget),
        Formula::Const(false) => Ok(false),
        Formula::Geq(l) | Formula::Eq(l) => {
            let is_eq = matches!(f, Formula::Eq(_));
            if is_eq {
                lits.eqs.push(l.clone());
            } else {
                lits.geqs.push(l.clone());
            }
            // prune early on inconsistent conjunctions
            let r = if omega(lits.eqs.clone(), lits.geqs.clone(), nvars, budget)? {
                search(lits, stack, nvars, budget)
            } else {
                Ok(false)
            };
            if matches!(r, Ok(true)) {
                return Ok(true);
            }
            if is_eq {
                lits.eqs.pop();
            } else {
                lits.geqs.pop();
            }
            r
        }
        Formula::BoolVar(v, b) => match lits.bools.get(v) {
            Some(x) if x != b => Ok(false),
            Some(_) => search(lits, stack, nvars, budget),
            None => {
                lits.bools.insert(*v, *b);
                let r = search(lits, stack, nvars, budget);
                if matches!(r, Ok(true)) {
                    return Ok(true);
                }
                lits.bools.remove(v);
                r
            }
        },
        Formula::And(fs) => {
            let n = stack.len();
            stack.extend(fs.iter().rev().cloned());
            let r = search(lits, stack, nvars, budget);
            if matches!(r, Ok(true)) {
                return Ok(true);
            }
            stack.truncate(n);
            r
        }
        Formula::Or(fs) => {
            for g in fs {
                stack.push(g.clone());
                match search(lits, stack, nvars, budget) {
                    Ok(true) => return Ok(true),
                    Ok(false) => {
                        stack.pop();
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(false)
        }
    };
    if !matches!(result, Ok(true)) {
        stack.push(f);
    }
    result
}

/// Finds an integer value for each of the first `nvars` variables.
fn build_model(eqs: &[Lin], geqs: &[Lin], nvars: usize, budget: &mut Budget) -> Result<Vec<i64>, String> {
    let mut eqs = eqs.to_vec();
    let geqs = geqs.to_vec();
    let mut values = Vec::with_capacity(nvars);
    for v in 0..nvars {
        let within = |lo: i128, hi: i128, eqs: &Vec<Lin>, budget: &mut Budget| {
            let mut g = geqs.clone();
            g.push(Lin::var(v).add(&Lin::constant(-lo), 1));
            g.push(Lin::var(v).scale(-1).add(&Lin::constant(hi), 1));
            omega(eqs.clone(), g, nvars, budget)
        };
        let mut range = None;
        for k in 0..63u32 {
            let r = if k == 0 { 0 } else { 1i128 << (k - 1) };
            if within(-r, r, &eqs, budget)? {
                range = Some((-r, r));
                break;
            }
        }
        let (mut lo, mut hi) = range.ok_or_else(|| "no model within 64-bit range".to_string())?;
        while lo < hi {
            let mid = floor_div(lo + hi, 2);
            if within(lo, mid, &eqs, budget)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        eqs.push(Lin::var(v).add(&Lin::constant(-lo), 1));
        values.push(lo as i64);
    }
    Ok(values)
}

/// Searches for a model of `assumptions /\ extra`.
fn find_model(store: &ConstraintStore, extra: &[(StaticTerm, bool)]) -> Result<Option<Assignment>, String> {
    let mut tr = Translator {
        sorts: &store.var_sorts,
        vars: Vars::default(),
    };
    let mut conj = Vec::new();
    for a in &store.assumptions {
        conj.push(tr.prop(a, true)?);
    }
    for (g, pos) in extra {
        conj.push(tr.prop(g, *pos)?);
    }
    for (n, s) in &store.var_sorts {
        match s {
            Sort::Bool => {
                tr.vars.boolean(n.clone());
            }
            _ => {
                tr.vars.int(n.clone());
            }
        }
    }
    let nvars = tr.vars.ints.len();
    let mut budget = Budget(200_000);
    let mut lits = Literals {
        eqs: vec![],
        geqs: vec![],
        bools: BTreeMap::new(),
    };
    let mut stack = vec![Formula::And(conj)];
    if !search(&mut lits, &mut stack, nvars, &mut budget)? {
        return Ok(None);
    }
    let ints = build_model(&lits.eqs, &lits.geqs, nvars, &mut budget)?;
    let mut asg = BTreeMap::new();
    for (i, n) in tr.vars.ints.iter().enumerate() {
        asg.insert(n.clone(), SValue::Int(ints[i]));
    }
    for (i, n) in tr.vars.bools.iter().enumerate() {
        asg.insert(n.clone(), SValue::Bool(lits.bools.get(&i).copied().unwrap_or(false)));
    }
    Ok(Some(Assignment(asg)))
}

/// Decides `Phi |= goal`.
pub fn entails(store: &ConstraintStore, goal: &StaticTerm) -> Verdict {
    if goal.is_ground() {
        if let Some(true) = eval_prop(goal, &Assignment::default()) {
            return Verdict::Valid;
        }
    }
    match find_model(store, &[(goal.clone(), false)]) {
        Ok(None) => Verdict::Valid,
        Ok(Some(m)) => Verdict::Invalid(m),
        Err(e) => Verdict::Unsupported(e),
    }
}

/// Some model of the assumptions, if any.
pub fn model(store: &ConstraintStore) -> Result<Option<Assignment>, String> {
    find_model(store, &[])
}

// ---------------------------------------------------------------------------
// Brute-force oracle

fn classify(t: &StaticTerm, want_bool: bool, sorts: &BTreeMap<Name, Sort>, out: &mut BTreeMap<Name, Sort>) {
    match t {
        StaticTerm::Free(_) | StaticTerm::Meta(_) => {
            let n = var_key(t).expect("variable");
            let s = sorts
                .get(&n)
                .cloned()
                .unwrap_or(if want_bool { Sort::Bool } else { Sort::Int });
            out.insert(n, s);
        }
        StaticTerm::App(c, a) => {
            let tr = Translator {
                sorts,
                vars: Vars::default(),
            };
            let args_bool = match c {
                SConst::Not | SConst::And | SConst::Or | SConst::Implies | SConst::Iff => true,
                SConst::Eq | SConst::Ne => a.iter().any(|x| tr.is_boolish(x)),
                _ => false,
            };
            for x in a {
                classify(x, args_bool, sorts, out);
            }
        }
        _ => {}
    }
}

/// Exhaustive check of `Phi |= goal` over integer assignments in
/// `[-bound, bound]`. Independent of the Omega test; used as a test oracle.
pub fn oracle_entails(store: &ConstraintStore, goal: &StaticTerm, bound: i64) -> bool {
    let mut vars = BTreeMap::new();
    for a in &store.assumptions {
        classify(a, true, &store.var_sorts, &mut vars);
    }
    classify(goal, true, &store.var_sorts, &mut vars);
    let vars: Vec<(Name, Sort)> = vars.into_iter().collect();
    let mut asg = Assignment::default();
    fn go(i: usize, vars: &[(Name, Sort)], bound: i64, asg: &mut Assignment, store: &ConstraintStore, goal: &StaticTerm) -> bool {
        if i == vars.len() {
            let holds = store
                .assumptions
                .iter()
                .all(|a| eval_prop(a, asg) == Some(true));
            return !holds || eval_prop(goal, asg) == Some(true);
        }
        let (n, s) = &vars[i];
        let values: Vec<SValue> = if *s == Sort::Bool {
            vec![SValue::Bool(false), SValue::Bool(true)]
        } else {
            (-bound..=bound).map(SValue::Int).collect()
        };
        for v in values {
            asg.0.insert(n.clone(), v);
            if !go(i + 1, vars, bound, asg, store, goal) {
                return false;
            }
        }
        asg.0.remove(n);
        true
    }
    go(0, &vars, bound, &mut asg, store, goal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statics::name;
    use proptest::prelude::*;

    fn v(n: &str) -> StaticTerm {
        StaticTerm::free(n)
    }
    fn i(k: i64) -> StaticTerm {
        StaticTerm::int(k)
    }
    fn op(c: SConst, a: StaticTerm, b: StaticTerm) -> StaticTerm {
        StaticTerm::c2(c, a, b)
    }

    fn store(vars: &[&str], assumptions: Vec<StaticTerm>) -> ConstraintStore {
        let mut s = ConstraintStore::new();
        for x in vars {
            s.declare(name(x), Sort::Int);
        }
        for a in assumptions {
            s.assume(a);
        }
        s
    }

    #[test]
    fn reflexive_equality() {
        let s = store(&["m"], vec![]);
        assert_eq!(entails(&s, &StaticTerm::eq(v("m"), v("m"))), Verdict::Valid);
    }

    #[test]
    fn role_disjunction_excludes_two() {
        let role = StaticTerm::or(StaticTerm::eq(v("r"), i(0)), StaticTerm::eq(v("r"), i(1)));
        let s = store(&["r"], vec![role]);
        assert_eq!(entails(&s, &StaticTerm::ne(v("r"), i(2))), Verdict::Valid);
    }

    #[test]
    fn positive_nat_minus_one() {
        let s = store(&["n"], vec![op(SConst::Gt, v("n"), i(0))]);
        assert_eq!(entails(&s, &op(SConst::Ge, op(SConst::Sub, v("n"), i(1)), i(0))), Verdict::Valid);
    }

    #[test]
    fn countermodel_is_reported() {
        let s = store(&["m", "n"], vec![]);
        let goal = StaticTerm::eq(v("m"), v("n"));
        match entails(&s, &goal) {
            Verdict::Invalid(a) => assert_eq!(eval_prop(&goal, &a), Some(false)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nonlinear_is_unsupported() {
        let s = store(&["m", "n"], vec![]);
        let goal = op(SConst::Ge, op(SConst::Mul, v("m"), v("n")), i(0));
        assert!(matches!(entails(&s, &goal), Verdict::Unsupported(_)));
        let lin = op(SConst::Ge, op(SConst::Mul, i(2), v("m")), v("m"));
        assert!(matches!(entails(&s, &lin), Verdict::Invalid(_)));
    }

    #[test]
    fn parity_needs_integer_reasoning() {
        // 2x = 2y + 1 has no integer solutions
        let s = store(
            &["x", "y"],
            vec![StaticTerm::eq(op(SConst::Mul, i(2), v("x")), op(SConst::Add, op(SConst::Mul, i(2), v("y")), i(1)))],
        );
        assert!(s.is_inconsistent());
        // 3 <= 2x <= 3 over integers is empty but has a real solution
        let s = store(
            &["x"],
            vec![
                op(SConst::Le, i(3), op(SConst::Mul, i(2), v("x"))),
                op(SConst::Le, op(SConst::Mul, i(2), v("x")), i(3)),
            ],
        );
        assert!(s.is_inconsistent());
    }

    #[test]
    fn dark_shadow_and_splinters() {
        // 27 <= 11x + 13y <= 45, -10 <= 7x - 9y <= 4 has no integer solution
        let e1 = op(SConst::Add, op(SConst::Mul, i(11), v("x")), op(SConst::Mul, i(13), v("y")));
        let e2 = op(SConst::Sub, op(SConst::Mul, i(7), v("x")), op(SConst::Mul, i(9), v("y")));
        let s = store(
            &["x", "y"],
            vec![
                op(SConst::Le, i(27), e1.clone()),
                op(SConst::Le, e1, i(45)),
                op(SConst::Le, i(-10), e2.clone()),
                op(SConst::Le, e2, i(4)),
            ],
        );
        assert!(s.is_inconsistent());
    }

    #[test]
    fn equalities_without_unit_coefficients() {
        // 3x + 5y = 7 is solvable (x = 4, y = -1)
        let e = StaticTerm::eq(op(SConst::Add, op(SConst::Mul, i(3), v("x")), op(SConst::Mul, i(5), v("y"))), i(7));
        let s = store(&["x", "y"], vec![e.clone()]);
        let m = model(&s).unwrap().expect("model");
        assert_eq!(eval_prop(&e, &m), Some(true));
        // 6x + 10y = 7 is not
        let e = StaticTerm::eq(op(SConst::Add, op(SConst::Mul, i(6), v("x")), op(SConst::Mul, i(10), v("y"))), i(7));
        assert!(store(&["x", "y"], vec![e]).is_inconsistent());
    }

    #[test]
    fn booleans() {
        let mut s = ConstraintStore::new();
        s.declare(name("b"), Sort::Bool);
        s.declare(name("m"), Sort::Int);
        s.declare(name("n"), Sort::Int);
        s.assume(StaticTerm::eq(v("b"), StaticTerm::eq(v("m"), v("n"))));
        s.assume(v("b"));
        assert_eq!(entails(&s, &StaticTerm::eq(v("m"), v("n"))), Verdict::Valid);
        assert!(matches!(entails(&s, &op(SConst::Lt, v("m"), v("n"))), Verdict::Invalid(_)));
    }

    // random linear formulas over x, y, z with small coefficients

    fn arb_lin() -> impl Strategy<Value = StaticTerm> {
        let atom = prop_oneof![
            (-3i64..=3).prop_map(i),
            Just(v("x")),
            Just(v("y")),
            Just(v("z")),
        ];
        atom.prop_recursive(2, 6, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| op(SConst::Add, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| op(SConst::Sub, a, b)),
                (-3i64..=3, inner).prop_map(|(k, a)| op(SConst::Mul, i(k), a)),
            ]
        })
    }

    fn arb_prop() -> impl Strategy<Value = StaticTerm> {
        let cmp = prop_oneof![
            Just(SConst::Eq),
            Just(SConst::Ne),
            Just(SConst::Lt),
            Just(SConst::Le),
            Just(SConst::Gt),
            Just(SConst::Ge)
        ];
        let atom = (cmp, arb_lin(), arb_lin()).prop_map(|(c, a, b)| op(c, a, b));
        atom.prop_recursive(2, 6, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| StaticTerm::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| StaticTerm::or(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| op(SConst::Implies, a, b)),
                inner.prop_map(StaticTerm::not),
            ]
        })
    }

    const BOX: i64 = 4;

    /// Store with the random assumptions plus box bounds, so the solver
    /// and the exhaustive oracle range over the same assignments.
    fn boxed(assumptions: Vec<StaticTerm>) -> ConstraintStore {
        let mut s = store(&["x", "y", "z"], assumptions);
        for n in ["x", "y", "z"] {
            s.assume(op(SConst::Le, i(-BOX), v(n)));
            s.assume(op(SConst::Le, v(n), i(BOX)));
        }
        s
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn agrees_with_oracle(hyps in proptest::collection::vec(arb_prop(), 0..3), goal in arb_prop()) {
            let s = boxed(hyps);
            let verdict = entails(&s, &goal);
            let oracle = oracle_entails(&s, &goal, BOX);
            match verdict {
                Verdict::Valid => prop_assert!(oracle),
                Verdict::Invalid(m) => {
                    prop_assert!(!oracle);
                    for a in &s.assumptions {
                        prop_assert_eq!(eval_prop(a, &m), Some(true));
                    }
                    prop_assert_eq!(eval_prop(&goal, &m), Some(false));
                }
                Verdict::Unsupported(r) => prop_assert!(false, "unsupported: {}", r),
            }
        }

        #[test]
        fn monotone_in_assumptions(hyps in proptest::collection::vec(arb_prop(), 0..3), extra in arb_prop(), goal in arb_prop()) {
            let s = boxed(hyps);
            if entails(&s, &goal).is_valid() {
                prop_assert!(entails(&s.with(extra), &goal).is_valid());
            }
        }
    }
}
