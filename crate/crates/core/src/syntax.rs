//! Concrete syntax: an s-expression reader, the program parser and a
//! printer whose output parses back to the same program.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::dynamics::{b, DConst, DynTerm, Span};
use crate::statics::{self, name, print_static, Name, SConst, Sort, StaticSignature, StaticTerm};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("parse error at {}:{}: {msg}", span.line, span.col)]
pub struct ParseError {
    pub span: Span,
    pub msg: String,
}

fn perr<T>(span: Span, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { span, msg: msg.into() })
}

// ---------------------------------------------------------------------------
// Reader

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExp {
    Atom(String, Span),
    Str(String, Span),
    List(Vec<SExp>, Span),
    Brace(Vec<SExp>, Span),
    Bar(Span),
}

impl SExp {
    pub fn span(&self) -> Span {
        match self {
            SExp::Atom(_, s) | SExp::Str(_, s) | SExp::List(_, s) | SExp::Brace(_, s) | SExp::Bar(s) => *s,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            SExp::Atom(a, _) => Some(a),
            _ => None,
        }
    }

    fn list(&self) -> Option<&[SExp]> {
        match self {
            SExp::List(l, _) => Some(l),
            _ => None,
        }
    }

    /// `(head rest...)` with an atom head.
    fn form(&self) -> Option<(&str, &[SExp])> {
        match self {
            SExp::List(l, _) if !l.is_empty() => Some((l[0].atom()?, &l[1..])),
            _ => None,
        }
    }
}

pub fn read(text: &str) -> Result<Vec<SExp>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0usize;
    let (mut line, mut col) = (1u32, 1u32);
    // stack of (opening char, items, start span)
    let mut stack: Vec<(char, Vec<SExp>, Span)> = vec![('\0', Vec::new(), Span::default())];
    let at = |line, col, len| Span { line, col, len };
    while pos < chars.len() {
        let c = chars[pos];
        match c {
            '\n' => {
                pos += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                pos += 1;
                col += 1;
            }
            ';' => {
                while pos < chars.len() && chars[pos] != '\n' {
                    pos += 1;
                }
            }
            '(' | '{' => {
                stack.push((c, Vec::new(), at(line, col, 1)));
                pos += 1;
                col += 1;
            }
            ')' | '}' => {
                let want = if c == ')' { '(' } else { '{' };
                let (open, items, span) = stack.pop().expect("bottom of stack");
                if open != want {
                    return perr(at(line, col, 1), format!("unbalanced `{c}`"));
                }
                let node = if c == ')' { SExp::List(items, span) } else { SExp::Brace(items, span) };
                stack.last_mut().expect("outer").1.push(node);
                pos += 1;
                col += 1;
            }
            '|' => {
                stack.last_mut().expect("outer").1.push(SExp::Bar(at(line, col, 1)));
                pos += 1;
                col += 1;
            }
            '"' => {
                let start = pos;
                let span = at(line, col, 0);
                pos += 1;
                while pos < chars.len() && chars[pos] != '"' {
                    if chars[pos] == '\\' {
                        pos += 1;
                    }
                    if pos < chars.len() && chars[pos] == '\n' {
                        return perr(span, "newline in string literal");
                    }
                    pos += 1;
                }
                if pos >= chars.len() {
                    return perr(span, "unterminated string literal");
                }
                pos += 1;
                let raw: String = chars[start..pos].iter().collect();
                let value: String = serde_json::from_str(&raw)
                    .map_err(|e| ParseError { span, msg: format!("bad string literal: {e}") })?;
                let len = (pos - start) as u32;
                col += len;
                stack.last_mut().expect("outer").1.push(SExp::Str(value, Span { len, ..span }));
            }
            _ => {
                let start = pos;
                while pos < chars.len() && !chars[pos].is_whitespace() && !"(){}|;\"".contains(chars[pos]) {
                    pos += 1;
                }
                let tok: String = chars[start..pos].iter().collect();
                let len = (pos - start) as u32;
                stack.last_mut().expect("outer").1.push(SExp::Atom(tok, at(line, col, len)));
                col += len;
            }
        }
    }
    if stack.len() != 1 {
        let (_, _, span) = stack.pop().expect("unclosed");
        return perr(span, "unclosed delimiter");
    }
    Ok(stack.pop().expect("bottom").1)
}

// ---------------------------------------------------------------------------
// Program

/// How a static parameter's sort was written; `role` and `nat` add a
/// guard on top of `int`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortTag {
    Plain,
    Role,
    Nat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticParam {
    pub name: Name,
    pub sort: Sort,
    pub tag: SortTag,
}

impl StaticParam {
    /// The guard implied by the written sort.
    pub fn implied_guard(&self) -> Option<StaticTerm> {
        let v = StaticTerm::Free(self.name.clone());
        match self.tag {
            SortTag::Plain => None,
            SortTag::Role => Some(role_guard(v)),
            SortTag::Nat => Some(StaticTerm::c2(SConst::Ge, v, StaticTerm::int(0))),
        }
    }
}

pub fn role_guard(r: StaticTerm) -> StaticTerm {
    StaticTerm::or(StaticTerm::eq(r.clone(), StaticTerm::int(0)), StaticTerm::eq(r, StaticTerm::int(1)))
}

/// Session type definition; `body` is a closed `lam` chain over the
/// parameters, already desugared to `fix`/`hofix` when recursive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StypeDef {
    pub name: Name,
    pub params: Vec<(Name, Sort)>,
    pub body: StaticTerm,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunDecl {
    pub name: Name,
    pub statics: Vec<StaticParam>,
    pub guards: Vec<StaticTerm>,
    pub params: Vec<(Name, StaticTerm)>,
    pub ret: StaticTerm,
    pub body: DynTerm,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternType {
    pub name: Name,
    pub args: Vec<Sort>,
    pub result: Sort,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MainDecl {
    pub ty: StaticTerm,
    pub body: DynTerm,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub sig: StaticSignature,
    pub externs: Vec<ExternType>,
    pub stypes: Vec<StypeDef>,
    pub funs: Vec<FunDecl>,
    pub main: Option<MainDecl>,
}

impl Program {
    pub fn fun(&self, n: &str) -> Option<&FunDecl> {
        self.funs.iter().find(|f| &*f.name == n)
    }

    /// Same program with source locations removed.
    pub fn without_locs(&self) -> Program {
        let mut p = self.clone();
        for f in &mut p.funs {
            f.body = f.body.strip_locs();
            f.span = Span::default();
        }
        if let Some(m) = &mut p.main {
            m.body = m.body.strip_locs();
            m.span = Span::default();
        }
        p
    }
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    sig: StaticSignature,
    stypes: BTreeMap<Name, StypeDef>,
    /// Name of the stype being defined, and whether it was referenced.
    current: Option<(Name, usize, bool)>,
    allow_reserved: bool,
}

const DYN_KEYWORDS: &[&str] = &[
    "let", "begin", "if", "pair", "fst", "snd", "lam", "app", "inst", "forall+", "exists+", "guard+", "guard-",
    "assert+", "array", "endpoint", "resource",
];

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let items = read(text)?;
    let mut p = Parser {
        sig: StaticSignature::new(),
        stypes: BTreeMap::new(),
        current: None,
        allow_reserved: false,
    };
    let mut prog = Program::default();
    for item in &items {
        let Some((head, rest)) = item.form() else {
            return perr(item.span(), "expected a top-level form");
        };
        match head {
            "extern-type" => {
                let e = p.extern_type(item, rest)?;
                prog.externs.push(e);
            }
            "stype" => {
                let d = p.stype_def(item, rest)?;
                p.stypes.insert(d.name.clone(), d.clone());
                prog.stypes.push(d);
            }
            "fun" => prog.funs.push(p.fun_decl(item, rest)?),
            "main" => {
                if rest.len() != 2 {
                    return perr(item.span(), "expected (main TYPE EXPR)");
                }
                if prog.main.is_some() {
                    return perr(item.span(), "duplicate main");
                }
                prog.main = Some(MainDecl {
                    ty: p.static_term(&rest[0], &mut Vec::new())?,
                    body: p.term(&rest[1])?,
                    span: item.span(),
                });
            }
            other => return perr(item.span(), format!("unknown top-level form `{other}`")),
        }
    }
    prog.sig = p.sig;
    Ok(prog)
}

/// Parses a single static term with no definitions in scope.
pub fn parse_static(text: &str) -> Result<StaticTerm, ParseError> {
    let items = read(text)?;
    if items.len() != 1 {
        return perr(Span::default(), "expected one static term");
    }
    let mut p = Parser {
        sig: StaticSignature::new(),
        stypes: BTreeMap::new(),
        current: None,
        allow_reserved: false,
    };
    p.static_term(&items[0], &mut Vec::new())
}

/// Parses a single dynamic term with no definitions in scope.
pub fn parse_term(text: &str) -> Result<DynTerm, ParseError> {
    let items = read(text)?;
    if items.len() != 1 {
        return perr(Span::default(), "expected one term");
    }
    let mut p = Parser {
        sig: StaticSignature::new(),
        stypes: BTreeMap::new(),
        current: None,
        allow_reserved: false,
    };
    p.term(&items[0])
}

/// Parses `(fun ...)` headers for built-in constants; names of builtins
/// are allowed here.
pub(crate) fn parse_builtin_decls(text: &str) -> Result<Vec<FunDecl>, ParseError> {
    let mut p = Parser {
        sig: StaticSignature::new(),
        stypes: BTreeMap::new(),
        current: None,
        allow_reserved: true,
    };
    read(text)?
        .iter()
        .map(|item| match item.form() {
            Some(("fun", rest)) => p.fun_decl(item, rest),
            _ => perr(item.span(), "expected (fun ...)"),
        })
        .collect()
}

fn parse_sort(s: &SExp) -> Result<(Sort, SortTag), ParseError> {
    if let Some(a) = s.atom() {
        return Ok(match a {
            "int" => (Sort::Int, SortTag::Plain),
            "bool" => (Sort::Bool, SortTag::Plain),
            "type" => (Sort::Type, SortTag::Plain),
            "vtype" => (Sort::VType, SortTag::Plain),
            "stype" => (Sort::SType, SortTag::Plain),
            "role" => (Sort::Int, SortTag::Role),
            "nat" => (Sort::Int, SortTag::Nat),
            other => return perr(s.span(), format!("unknown sort `{other}`")),
        });
    }
    if let Some(("->", [d, c])) = s.form() {
        let (d, _) = parse_sort(d)?;
        let (c, _) = parse_sort(c)?;
        return Ok((Sort::arrow(d, c), SortTag::Plain));
    }
    perr(s.span(), "expected a sort")
}

/// `(x sort)`
fn binder(s: &SExp) -> Result<(Name, Sort, SortTag), ParseError> {
    match s.list() {
        Some([x, srt]) => {
            let x = x.atom().ok_or_else(|| ParseError { span: s.span(), msg: "expected a name".into() })?;
            let (srt, tag) = parse_sort(srt)?;
            Ok((name(x), srt, tag))
        }
        _ => perr(s.span(), "expected (NAME SORT)"),
    }
}

fn sym<'a>(s: &'a SExp, what: &str) -> Result<&'a str, ParseError> {
    s.atom().ok_or_else(|| ParseError { span: s.span(), msg: format!("expected {what}") })
}

impl Parser {
    fn extern_type(&mut self, item: &SExp, rest: &[SExp]) -> Result<ExternType, ParseError> {
        // (extern-type name kind) or (extern-type (name sort...) kind)
        if rest.len() != 2 {
            return perr(item.span(), "expected (extern-type NAME type|vtype)");
        }
        let (n, args) = match &rest[0] {
            SExp::Atom(a, _) => (a.clone(), vec![]),
            SExp::List(l, sp) if !l.is_empty() => {
                let n = sym(&l[0], "a type name")?.to_string();
                let args = l[1..].iter().map(|s| parse_sort(s).map(|x| x.0)).collect::<Result<_, _>>()?;
                let _ = sp;
                (n, args)
            }
            other => return perr(other.span(), "expected a type name"),
        };
        let (result, _) = parse_sort(&rest[1])?;
        self.sig
            .declare_base(&n, args.clone(), result.clone())
            .map_err(|e| ParseError { span: item.span(), msg: e.to_string() })?;
        Ok(ExternType { name: name(&n), args, result })
    }

    fn stype_def(&mut self, item: &SExp, rest: &[SExp]) -> Result<StypeDef, ParseError> {
        if rest.len() != 2 {
            return perr(item.span(), "expected (stype NAME BODY)");
        }
        let (n, params) = match &rest[0] {
            SExp::Atom(a, _) => (name(a), vec![]),
            SExp::List(l, _) if !l.is_empty() => {
                let n = name(sym(&l[0], "an stype name")?);
                let ps = l[1..].iter().map(|s| binder(s).map(|(x, s, _)| (x, s))).collect::<Result<Vec<_>, _>>()?;
                (n, ps)
            }
            other => return perr(other.span(), "expected an stype name"),
        };
        if statics::BUILTIN_NAMES.contains(&&*n) || self.stypes.contains_key(&n) || self.sig.base(&n).is_some() {
            return perr(item.span(), format!("`{n}` is already defined"));
        }
        // the body is parsed under [self, params...]
        let mut env: Vec<Name> = vec![n.clone()];
        env.extend(params.iter().map(|(x, _)| x.clone()));
        self.current = Some((n.clone(), 0, false));
        let body = self.static_term(&rest[1], &mut env);
        let (_, _, recursive) = self.current.take().expect("set above");
        let body = body?;
        let sorts: Vec<Sort> = params.iter().map(|(_, s)| s.clone()).collect();
        let k = sorts.len();
        let expanded = if !recursive {
            body
        } else {
            let mut f = body;
            for s in sorts.iter().rev() {
                f = StaticTerm::lam(s.clone(), f);
            }
            let f = StaticTerm::lam(Sort::arrows(&sorts, Sort::SType), f);
            if k == 0 {
                StaticTerm::c1(SConst::Fix, f)
            } else {
                let mut args = vec![f];
                args.extend((0..k).map(|i| StaticTerm::Bound(k - 1 - i)));
                StaticTerm::app(SConst::HoFix(sorts.clone()), args)
            }
        };
        let mut closed = expanded;
        for s in sorts.iter().rev() {
            closed = StaticTerm::lam(s.clone(), closed);
        }
        Ok(StypeDef { name: n, params, body: closed })
    }

    fn fun_decl(&mut self, item: &SExp, rest: &[SExp]) -> Result<FunDecl, ParseError> {
        // (fun name {binders | props} ((x T)...) RET body)
        let mut it = rest.iter();
        let n = name(sym(it.next().ok_or_else(|| ParseError { span: item.span(), msg: "missing name".into() })?, "a function name")?);
        if !self.allow_reserved && (DConst::from_name(&n).is_some() || DYN_KEYWORDS.contains(&&*n)) {
            return perr(item.span(), format!("`{n}` is reserved"));
        }
        let mut statics = Vec::new();
        let mut guards = Vec::new();
        let mut next = it.next();
        if let Some(SExp::Brace(items, _)) = next {
            let mut in_props = false;
            for s in items {
                match s {
                    SExp::Bar(_) => in_props = true,
                    _ if in_props => {
                        let mut env = Vec::new();
                        guards.push(self.static_term(s, &mut env)?);
                    }
                    _ => {
                        let (x, srt, tag) = binder(s)?;
                        statics.push(StaticParam { name: x, sort: srt, tag });
                    }
                }
            }
            next = it.next();
        }
        let params_s = next
            .and_then(|s| s.list())
            .ok_or_else(|| ParseError { span: item.span(), msg: "expected a parameter list".into() })?;
        let mut params = Vec::new();
        for ps in params_s {
            match ps.list() {
                Some([x, t]) => params.push((name(sym(x, "a parameter name")?), self.static_term(t, &mut Vec::new())?)),
                _ => return perr(ps.span(), "expected (NAME TYPE)"),
            }
        }
        let (ret, body) = match (it.next(), it.next(), it.next()) {
            (Some(r), Some(bd), None) => (self.static_term(r, &mut Vec::new())?, self.term(bd)?),
            _ => return perr(item.span(), "expected RETURN-TYPE BODY after the parameters"),
        };
        Ok(FunDecl { name: n, statics, guards, params, ret, body, span: item.span() })
    }

    // -- statics ----------------------------------------------------------

    fn static_term(&mut self, s: &SExp, env: &mut Vec<Name>) -> Result<StaticTerm, ParseError> {
        let span = s.span();
        match s {
            SExp::Atom(a, _) => self.static_atom(a, span, env),
            SExp::List(l, _) if l.is_empty() => perr(span, "empty static term"),
            SExp::List(l, _) => {
                let head = match l[0].atom() {
                    Some(h) => h,
                    None => return perr(span, "expected a constructor"),
                };
                let args = &l[1..];
                self.static_form(head, args, span, env)
            }
            _ => perr(span, "expected a static term"),
        }
    }

    fn static_atom(&mut self, a: &str, span: Span, env: &mut [Name]) -> Result<StaticTerm, ParseError> {
        if let Ok(i) = a.parse::<i64>() {
            return Ok(StaticTerm::int(i));
        }
        match a {
            "true" => return Ok(StaticTerm::bool(true)),
            "false" => return Ok(StaticTerm::bool(false)),
            "unit" => return Ok(StaticTerm::unit()),
            "int" => return Ok(StaticTerm::c0(SConst::IntTy)),
            "bool" => return Ok(StaticTerm::c0(SConst::BoolTy)),
            "string" => return Ok(StaticTerm::c0(SConst::StrTy)),
            _ => {}
        }
        if let Some(k) = env.iter().rposition(|n| &**n == a) {
            let idx = env.len() - 1 - k;
            if let Some((cur, pos, used)) = &mut self.current {
                if &**cur == a && k == *pos {
                    *used = true;
                }
            }
            return Ok(StaticTerm::Bound(idx));
        }
        if let Some(d) = self.stypes.get(a) {
            if !d.params.is_empty() {
                return perr(span, format!("`{a}` expects {} arguments", d.params.len()));
            }
            return Ok(d.body.clone());
        }
        if let Some(cs) = self.sig.base(a) {
            if !cs.args.is_empty() {
                return perr(span, format!("`{a}` expects arguments"));
            }
            return Ok(StaticTerm::c0(SConst::Base(name(a))));
        }
        if let Some(m) = a.strip_prefix('?') {
            if let Ok(m) = m.parse::<u32>() {
                return Ok(StaticTerm::Meta(m));
            }
        }
        Ok(StaticTerm::free(a))
    }

    fn static_form(&mut self, head: &str, args: &[SExp], span: Span, env: &mut Vec<Name>) -> Result<StaticTerm, ParseError> {
        let arity = |n: usize| -> Result<(), ParseError> {
            if args.len() != n {
                perr(span, format!("`{head}` expects {n} arguments, found {}", args.len()))
            } else {
                Ok(())
            }
        };
        let simple = |c: SConst| Some(c);
        let c = match head {
            "+" => simple(SConst::Add),
            "-" if args.len() == 1 => simple(SConst::Neg),
            "-" => simple(SConst::Sub),
            "neg" => simple(SConst::Neg),
            "*" => simple(SConst::Mul),
            "=" => simple(SConst::Eq),
            "!=" => simple(SConst::Ne),
            "<" => simple(SConst::Lt),
            "<=" => simple(SConst::Le),
            ">" => simple(SConst::Gt),
            ">=" => simple(SConst::Ge),
            "and" => simple(SConst::And),
            "or" => simple(SConst::Or),
            "not" => simple(SConst::Not),
            "==>" => simple(SConst::Implies),
            "iff" => simple(SConst::Iff),
            "int" => simple(SConst::IntS),
            "bool" => simple(SConst::BoolS),
            "prod" => simple(SConst::Prod),
            "tensor" => simple(SConst::Tensor),
            "->" => simple(SConst::Fun),
            "-o" => simple(SConst::Lolli),
            "guard" => simple(SConst::Guard),
            "assert" => simple(SConst::Assert),
            "<=ty" => simple(SConst::Subtype),
            "chan" => simple(SConst::Chan),
            "arrref" => simple(SConst::ArrRef),
            "end" => simple(SConst::End),
            "msg" => simple(SConst::Msg),
            "branch" => simple(SConst::Branch),
            "ite" => simple(SConst::Ite),
            "fix" => simple(SConst::Fix),
            _ => None,
        };
        if let Some(c) = c {
            let want = match &c {
                SConst::Neg | SConst::Not | SConst::IntS | SConst::BoolS | SConst::End | SConst::Fix => 1,
                SConst::Msg | SConst::Branch | SConst::Ite => 3,
                _ => 2,
            };
            arity(want)?;
            let parsed = args.iter().map(|a| self.static_term(a, env)).collect::<Result<Vec<_>, _>>()?;
            return Ok(StaticTerm::App(c, parsed));
        }
        match head {
            "::" => {
                arity(2)?;
                let m = match args[0].form() {
                    Some(("msg", [r, t])) => (self.static_term(r, env)?, self.static_term(t, env)?),
                    _ => return perr(args[0].span(), "expected (msg ROLE TYPE)"),
                };
                let cont = self.static_term(&args[1], env)?;
                Ok(StaticTerm::msg(m.0, m.1, cont))
            }
            "lam" => {
                arity(2)?;
                let (x, srt, _) = binder(&args[0])?;
                env.push(x);
                let body = self.static_term(&args[1], env);
                env.pop();
                Ok(StaticTerm::lam(srt, body?))
            }
            "forall" | "exists" => {
                arity(2)?;
                let (x, srt, tag) = binder(&args[0])?;
                env.push(x);
                let body = self.static_term(&args[1], env);
                env.pop();
                let mut body = body?;
                // role/nat binders guard the body
                if tag != SortTag::Plain {
                    let g = StaticParam { name: name("_"), sort: srt.clone(), tag }.implied_guard().expect("tagged");
                    let g = g.subst_free("_", &StaticTerm::Bound(0));
                    let c = if head == "forall" { SConst::Guard } else { SConst::Assert };
                    body = StaticTerm::c2(c, g, body);
                }
                let c = if head == "forall" { SConst::Forall(srt.clone()) } else { SConst::Exists(srt.clone()) };
                Ok(StaticTerm::c1(c, StaticTerm::lam(srt, body)))
            }
            "quan" => {
                arity(2)?;
                let r = self.static_term(&args[0], env)?;
                let f = self.static_term(&args[1], env)?;
                match &f {
                    StaticTerm::Lam(srt, _) => Ok(StaticTerm::c2(SConst::Quan(srt.clone()), r, f)),
                    _ => perr(args[1].span(), "quan expects (lam (x SORT) BODY)"),
                }
            }
            "hofix" => {
                if args.len() < 2 {
                    return perr(span, "expected (hofix (SORT...) F ARGS...)");
                }
                let sorts = args[0]
                    .list()
                    .ok_or_else(|| ParseError { span: args[0].span(), msg: "expected a sort list".into() })?
                    .iter()
                    .map(|s| parse_sort(s).map(|x| x.0))
                    .collect::<Result<Vec<_>, _>>()?;
                if args.len() != sorts.len() + 2 {
                    return perr(span, "hofix argument count does not match its sorts");
                }
                let parsed = args[1..].iter().map(|a| self.static_term(a, env)).collect::<Result<Vec<_>, _>>()?;
                Ok(StaticTerm::app(SConst::HoFix(sorts), parsed))
            }
            "@" => {
                if args.is_empty() {
                    return perr(span, "expected (@ F ARGS...)");
                }
                let mut t = self.static_term(&args[0], env)?;
                for a in &args[1..] {
                    t = StaticTerm::apply(t, self.static_term(a, env)?);
                }
                Ok(t)
            }
            _ => {
                let parsed = args.iter().map(|a| self.static_term(a, env)).collect::<Result<Vec<_>, _>>()?;
                // recursive reference to the stype being defined
                if let Some(k) = env.iter().rposition(|n| &**n == head) {
                    let is_self = matches!(&self.current, Some((cur, pos, _)) if &**cur == head && *pos == k);
                    if is_self {
                        if let Some(c) = &mut self.current {
                            c.2 = true;
                        }
                    }
                    let mut t = StaticTerm::Bound(env.len() - 1 - k);
                    for a in parsed {
                        t = StaticTerm::apply(t, a);
                    }
                    return Ok(t);
                }
                if let Some(d) = self.stypes.get(head) {
                    if d.params.len() != parsed.len() {
                        return perr(span, format!("`{head}` expects {} arguments", d.params.len()));
                    }
                    let mut t = d.body.clone();
                    for a in parsed {
                        t = StaticTerm::apply(t, a);
                    }
                    return Ok(statics::beta_normalize(&t));
                }
                if let Some(cs) = self.sig.base(head) {
                    if cs.args.len() != parsed.len() {
                        return perr(span, format!("`{head}` expects {} arguments", cs.args.len()));
                    }
                    return Ok(StaticTerm::app(SConst::Base(name(head)), parsed));
                }
                perr(span, format!("unknown static constructor `{head}`"))
            }
        }
    }

    // -- dynamics ---------------------------------------------------------

    fn term(&mut self, s: &SExp) -> Result<DynTerm, ParseError> {
        let span = s.span();
        let t = match s {
            SExp::Atom(a, _) => {
                if let Ok(i) = a.parse::<i64>() {
                    DynTerm::Int(i)
                } else {
                    match a.as_str() {
                        "true" => DynTerm::Bool(true),
                        "false" => DynTerm::Bool(false),
                        _ => DynTerm::Var(name(a)),
                    }
                }
            }
            SExp::Str(v, _) => DynTerm::Str(v.as_str().into()),
            SExp::List(l, _) if l.is_empty() => DynTerm::Unit,
            SExp::List(l, _) => {
                let head = sym(&l[0], "an operator")?;
                self.term_form(head, &l[1..], span)?
            }
            _ => return perr(span, "expected a term"),
        };
        Ok(DynTerm::Loc(span, b(t)))
    }

    fn term_form(&mut self, head: &str, args: &[SExp], span: Span) -> Result<DynTerm, ParseError> {
        let arity = |n: usize| -> Result<(), ParseError> {
            if args.len() != n {
                perr(span, format!("`{head}` expects {n} operands, found {}", args.len()))
            } else {
                Ok(())
            }
        };
        Ok(match head {
            "let" => {
                arity(2)?;
                let binds = args[0]
                    .list()
                    .ok_or_else(|| ParseError { span: args[0].span(), msg: "expected a binding list".into() })?;
                let mut body = self.term(&args[1])?;
                for bind in binds.iter().rev() {
                    body = self.binding(bind, body)?;
                }
                return Ok(body);
            }
            "begin" => {
                if args.is_empty() {
                    return perr(span, "empty begin");
                }
                let mut body = self.term(&args[args.len() - 1])?;
                for e in args[..args.len() - 1].iter().rev() {
                    body = DynTerm::Let { x: name("_"), head: b(self.term(e)?), body: b(body) };
                }
                return Ok(body);
            }
            "if" => {
                arity(3)?;
                DynTerm::If(b(self.term(&args[0])?), b(self.term(&args[1])?), b(self.term(&args[2])?))
            }
            "pair" => {
                arity(2)?;
                DynTerm::pair(self.term(&args[0])?, self.term(&args[1])?)
            }
            "fst" => {
                arity(1)?;
                DynTerm::Fst(b(self.term(&args[0])?))
            }
            "snd" => {
                arity(1)?;
                DynTerm::Snd(b(self.term(&args[0])?))
            }
            "lam" => {
                arity(2)?;
                let (param, ann) = match &args[0] {
                    SExp::Atom(x, _) => (name(x), None),
                    SExp::List(l, _) if l.len() == 2 => {
                        (name(sym(&l[0], "a parameter")?), Some(self.static_term(&l[1], &mut Vec::new())?))
                    }
                    other => return perr(other.span(), "expected NAME or (NAME TYPE)"),
                };
                DynTerm::Lam { param, ann, body: b(self.term(&args[1])?) }
            }
            "app" => {
                arity(2)?;
                DynTerm::App(b(self.term(&args[0])?), b(self.term(&args[1])?))
            }
            "inst" => match args.len() {
                1 => DynTerm::ForallElim { e: b(self.term(&args[0])?), inst: None },
                2 => DynTerm::ForallElim {
                    e: b(self.term(&args[0])?),
                    inst: Some(self.static_term(&args[1], &mut Vec::new())?),
                },
                _ => return perr(span, "expected (inst EXPR [STATIC])"),
            },
            "forall+" => {
                arity(1)?;
                DynTerm::ForallIntro(b(self.term(&args[0])?))
            }
            "exists+" => match args {
                [e] => DynTerm::ExistsIntro { witness: None, e: b(self.term(e)?) },
                [SExp::Brace(w, _), e] if w.len() == 1 => DynTerm::ExistsIntro {
                    witness: Some(self.static_term(&w[0], &mut Vec::new())?),
                    e: b(self.term(e)?),
                },
                _ => return perr(span, "expected (exists+ [{WITNESS}] EXPR)"),
            },
            "guard+" => {
                arity(1)?;
                DynTerm::GuardIntro(b(self.term(&args[0])?))
            }
            "guard-" => {
                arity(1)?;
                DynTerm::GuardElim(b(self.term(&args[0])?))
            }
            "assert+" => {
                arity(1)?;
                DynTerm::AssertIntro(b(self.term(&args[0])?))
            }
            "array" => {
                if args.is_empty() {
                    return perr(span, "expected (array TYPE ITEMS...)");
                }
                let elem_ty = self.static_term(&args[0], &mut Vec::new())?;
                let items = args[1..].iter().map(|a| self.term(a)).collect::<Result<_, _>>()?;
                DynTerm::Array { elem_ty, items }
            }
            "endpoint" => {
                arity(2)?;
                let i = sym(&args[0], "a channel id")?
                    .parse()
                    .map_err(|_| ParseError { span, msg: "bad channel id".into() })?;
                let r = sym(&args[1], "a role")?
                    .parse()
                    .map_err(|_| ParseError { span, msg: "bad role".into() })?;
                DynTerm::Endpoint(i, r)
            }
            "resource" => {
                arity(1)?;
                DynTerm::Resource(name(sym(&args[0], "a resource name")?))
            }
            _ => {
                let op = DConst::from_name(head).unwrap_or_else(|| DConst::User(name(head)));
                let (statics, rest) = match args.first() {
                    Some(SExp::Brace(items, _)) => (
                        items.iter().map(|s| self.static_term(s, &mut Vec::new())).collect::<Result<Vec<_>, _>>()?,
                        &args[1..],
                    ),
                    _ => (vec![], args),
                };
                let args = rest.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>()?;
                DynTerm::Const { op, statics, args }
            }
        })
    }

    fn binding(&mut self, bind: &SExp, body: DynTerm) -> Result<DynTerm, ParseError> {
        let (pat, e) = match bind.list() {
            Some([p, e]) => (p, e),
            _ => return perr(bind.span(), "expected (PATTERN EXPR)"),
        };
        let head = b(self.term(e)?);
        let body = b(body);
        Ok(match pat {
            SExp::Atom(x, _) => DynTerm::Let { x: name(x), head, body },
            _ => match pat.form() {
                Some(("pair", [x, y])) => DynTerm::LetPair {
                    a: name(sym(x, "a name")?),
                    b: name(sym(y, "a name")?),
                    head,
                    body,
                },
                Some(("ex", [a, x])) => DynTerm::LetExists {
                    svar: name(sym(a, "a static name")?),
                    x: name(sym(x, "a name")?),
                    head,
                    body,
                },
                Some(("assert", [x])) => DynTerm::LetAssert { x: name(sym(x, "a name")?), head, body },
                _ => return perr(pat.span(), "unknown pattern"),
            },
        })
    }
}

// ---------------------------------------------------------------------------
// Printer

pub fn print_term(e: &DynTerm) -> String {
    let mut out = String::new();
    write_term(&mut out, e);
    out
}

fn st(s: &StaticTerm) -> String {
    print_static(s, &mut Vec::new())
}

fn write_term(out: &mut String, e: &DynTerm) {
    let w = |out: &mut String, parts: &[&DynTerm], head: &str| {
        out.push('(');
        out.push_str(head);
        for p in parts {
            out.push(' ');
            write_term(out, p);
        }
        out.push(')');
    };
    match e {
        DynTerm::Var(x) => out.push_str(x),
        DynTerm::Unit => out.push_str("()"),
        DynTerm::Int(i) => {
            let _ = write!(out, "{i}");
        }
        DynTerm::Bool(v) => {
            let _ = write!(out, "{v}");
        }
        DynTerm::Str(s) => out.push_str(&serde_json::to_string(&**s).expect("string")),
        DynTerm::Resource(r) => {
            let _ = write!(out, "(resource {r})");
        }
        DynTerm::Endpoint(i, r) => {
            let _ = write!(out, "(endpoint {i} {r})");
        }
        DynTerm::Const { op, statics, args } => {
            out.push('(');
            out.push_str(&op.name());
            if !statics.is_empty() {
                out.push_str(" {");
                let parts: Vec<String> = statics.iter().map(st).collect();
                out.push_str(&parts.join(" "));
                out.push('}');
            }
            for a in args {
                out.push(' ');
                write_term(out, a);
            }
            out.push(')');
        }
        DynTerm::Pair(x, y) => w(out, &[x, y], "pair"),
        DynTerm::If(c, t, f) => w(out, &[c, t, f], "if"),
        DynTerm::Fst(x) => w(out, &[x], "fst"),
        DynTerm::Snd(x) => w(out, &[x], "snd"),
        DynTerm::App(f, a) => w(out, &[f, a], "app"),
        DynTerm::GuardIntro(x) => w(out, &[x], "guard+"),
        DynTerm::GuardElim(x) => w(out, &[x], "guard-"),
        DynTerm::AssertIntro(x) => w(out, &[x], "assert+"),
        DynTerm::ForallIntro(x) => w(out, &[x], "forall+"),
        DynTerm::ForallElim { e, inst } => {
            out.push_str("(inst ");
            write_term(out, e);
            if let Some(s) = inst {
                out.push(' ');
                out.push_str(&st(s));
            }
            out.push(')');
        }
        DynTerm::ExistsIntro { witness, e } => {
            out.push_str("(exists+ ");
            if let Some(s) = witness {
                let _ = write!(out, "{{{}}} ", st(s));
            }
            write_term(out, e);
            out.push(')');
        }
        DynTerm::Lam { param, ann, body } => {
            match ann {
                Some(t) => {
                    let _ = write!(out, "(lam ({param} {}) ", st(t));
                }
                None => {
                    let _ = write!(out, "(lam {param} ");
                }
            }
            write_term(out, body);
            out.push(')');
        }
        DynTerm::Let { x, head, body } => write_let(out, x, head, body),
        DynTerm::LetPair { a, b, head, body } => write_let(out, &format!("(pair {a} {b})"), head, body),
        DynTerm::LetAssert { x, head, body } => write_let(out, &format!("(assert {x})"), head, body),
        DynTerm::LetExists { svar, x, head, body } => write_let(out, &format!("(ex {svar} {x})"), head, body),
        DynTerm::Array { elem_ty, items } => {
            let _ = write!(out, "(array {}", st(elem_ty));
            for i in items {
                out.push(' ');
                write_term(out, i);
            }
            out.push(')');
        }
        DynTerm::Loc(_, x) => write_term(out, x),
    }
}

fn write_let(out: &mut String, pat: &str, head: &DynTerm, body: &DynTerm) {
    let _ = write!(out, "(let (({pat} ");
    write_term(out, head);
    out.push_str(")) ");
    write_term(out, body);
    out.push(')');
}

fn write_sort_tagged(p: &StaticParam) -> String {
    let s = match p.tag {
        SortTag::Plain => p.sort.to_string(),
        SortTag::Role => "role".into(),
        SortTag::Nat => "nat".into(),
    };
    format!("({} {s})", p.name)
}

/// Prints a program; parsing the output yields the same program up to
/// source locations.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for e in &p.externs {
        if e.args.is_empty() {
            let _ = writeln!(out, "(extern-type {} {})", e.name, e.result);
        } else {
            let args: Vec<String> = e.args.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "(extern-type ({} {}) {})", e.name, args.join(" "), e.result);
        }
    }
    for d in &p.stypes {
        // strip the parameter lambdas and print the body under their names
        let mut body = &d.body;
        let mut env = Vec::new();
        for (x, _) in &d.params {
            if let StaticTerm::Lam(_, inner) = body {
                body = inner;
                env.push(x.to_string());
            }
        }
        let head = if d.params.is_empty() {
            d.name.to_string()
        } else {
            let ps: Vec<String> = d.params.iter().map(|(x, s)| format!("({x} {s})")).collect();
            format!("({} {})", d.name, ps.join(" "))
        };
        let _ = writeln!(out, "(stype {head} {})", print_static(body, &mut env));
    }
    for f in &p.funs {
        let _ = write!(out, "(fun {}", f.name);
        if !f.statics.is_empty() || !f.guards.is_empty() {
            let mut parts: Vec<String> = f.statics.iter().map(write_sort_tagged).collect();
            if !f.guards.is_empty() {
                parts.push("|".into());
                parts.extend(f.guards.iter().map(st));
            }
            let _ = write!(out, " {{{}}}", parts.join(" "));
        }
        let ps: Vec<String> = f.params.iter().map(|(x, t)| format!("({x} {})", st(t))).collect();
        let _ = write!(out, " ({}) {} ", ps.join(" "), st(&f.ret));
        write_term(&mut out, &f.body);
        out.push_str(")\n");
    }
    if let Some(m) = &p.main {
        let _ = write!(out, "(main {} ", st(&m.ty));
        write_term(&mut out, &m.body);
        out.push_str(")\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EQUAL: &str = "(stype equal (quan 1 (lam (m int) (quan 1 (lam (n int)
        (:: (msg 1 (int m)) (:: (msg 1 (int n)) (:: (msg 0 (bool (= m n))) (end 0)))))))))";

    #[test]
    fn end_parses() {
        assert_eq!(parse_static("(end 0)").unwrap(), StaticTerm::end(StaticTerm::int(0)));
    }

    #[test]
    fn equal_definition() {
        let p = parse_program(EQUAL).unwrap();
        let body = &p.stypes[0].body;
        let expect = StaticTerm::quan(
            StaticTerm::int(1),
            Sort::Int,
            StaticTerm::quan(
                StaticTerm::int(1),
                Sort::Int,
                StaticTerm::msg(
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
                ),
            ),
        );
        assert_eq!(body, &expect);
    }

    #[test]
    fn direct_style_recursion_desugars_to_hofix() {
        let src = "(stype (repeat (t type) (n int))
                     (ite (> n 0) (:: (msg 0 t) (repeat t (- n 1))) (end 0)))
                   (main (chan 0 (repeat int 4)) ())";
        let p = parse_program(src).unwrap();
        let ty = &p.main.as_ref().unwrap().ty;
        match ty.head() {
            Some((SConst::Chan, [_, st])) => match st.head() {
                Some((SConst::HoFix(sorts), args)) => {
                    assert_eq!(sorts, &vec![Sort::Type, Sort::Int]);
                    assert_eq!(args[1], StaticTerm::c0(SConst::IntTy));
                    assert_eq!(args[2], StaticTerm::int(4));
                }
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn terms_and_patterns() {
        let t = parse_term("(let (((ex m c) (exify ch)) ((pair x c) (recv c))) (begin (print x) (close c)))")
            .unwrap()
            .strip_locs();
        match t {
            DynTerm::LetExists { svar, head, body, .. } => {
                assert_eq!(&*svar, "m");
                assert!(matches!(*head, DynTerm::Const { op: DConst::Exify, .. }));
                assert!(matches!(*body, DynTerm::LetPair { .. }));
            }
            other => panic!("{other:?}"),
        }
        let c = parse_term("(create {1 0 (end 0)} (lam (c (chan 0 (end 0))) (close c)))").unwrap().strip_locs();
        assert!(matches!(c, DynTerm::Const { op: DConst::Create, ref statics, .. } if statics.len() == 3));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("(fun f () unit\n  (let ((x 1) y) x))").unwrap_err();
        assert_eq!(e.span.line, 2);
        assert!(read("(a b").is_err());
        assert!(read("a)").is_err());
    }

    #[test]
    fn strings_roundtrip() {
        let t = parse_term(r#"(print "hello \"world\"\n")"#).unwrap().strip_locs();
        let printed = print_term(&t);
        assert_eq!(parse_term(&printed).unwrap().strip_locs(), t);
    }

    #[test]
    fn program_roundtrip() {
        let src = format!(
            "{EQUAL}
             (extern-type (box int) vtype)
             (fun f {{(r role) (n nat) | (> n 0)}} ((c (chan r equal)) (x (int n))) unit
               (let (((ex m c) (exify c))) (begin (inst (unify c) 3) (if true () ()))))
             (main unit (f {{0 1}} (endpoint 0 0) 1))"
        );
        let p = parse_program(&src).unwrap().without_locs();
        let printed = print_program(&p);
        let q = parse_program(&printed).unwrap().without_locs();
        assert_eq!(p, q, "{printed}");
    }
}
