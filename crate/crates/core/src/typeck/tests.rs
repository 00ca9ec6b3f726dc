use super::*;
use crate::dynamics::{DConst, DynTerm};
use crate::statics::name;
use crate::syntax::{parse_program, parse_static, parse_term, print_term};
use proptest::prelude::*;

fn empty() -> Program {
    parse_program("").unwrap()
}

fn tc(delta: &[(&str, &str)], e: &str) -> Result<(StaticTerm, BTreeSet<Name>), TypeError> {
    let prog = empty();
    let dsig = DynSignature::for_program(&prog);
    let mut env = TypingEnv::default();
    for (x, t) in delta {
        env.delta.insert(name(x), parse_static(t).unwrap());
    }
    typecheck(&prog, &dsig, &env, &parse_term(e).unwrap())
}

fn rule_of(r: Result<(StaticTerm, BTreeSet<Name>), TypeError>) -> String {
    r.expect_err("expected a type error").rule
}

const EQUAL: &str = include_str!("../../corpus/equal.sess");

#[test]
fn eq_test_accepted() {
    let prog = parse_program(EQUAL).unwrap();
    assert_eq!(check_program(&prog), Ok(()));
}

#[test]
fn eq_test_consumes_its_endpoint() {
    let prog = parse_program(EQUAL).unwrap();
    let f = prog.fun("eq_test").unwrap();
    let dsig = DynSignature::for_program(&prog);
    let mut env = TypingEnv::default();
    env.delta.insert(name("ch"), f.params[0].1.clone());
    let (ty, used) = typecheck(&prog, &dsig, &env, &f.body).unwrap();
    assert_eq!(ty, StaticTerm::unit());
    assert_eq!(used, BTreeSet::from([name("ch")]));
}

#[test]
fn send_with_wrong_role_reports_witness() {
    let prog = empty();
    let dsig = DynSignature::for_program(&prog);
    let mut env = TypingEnv::default();
    env.sigma.push(name("r"), crate::statics::Sort::Int);
    env.sigma.push(name("r0"), crate::statics::Sort::Int);
    for p in ["(or (= r 0) (= r 1))", "(or (= r0 0) (= r0 1))", "(!= r r0)"] {
        env.props.assumptions.push(parse_static(p).unwrap());
    }
    env.delta.insert(name("c"), parse_static("(chan r (:: (msg r0 int) (end 0)))").unwrap());
    let err = typecheck(&prog, &dsig, &env, &parse_term("(send c 1)").unwrap()).unwrap_err();
    assert_eq!(err.rule, "guard(send)");
    let m = err.countermodel.expect("witness");
    let (r, r0) = (m.get("r"), m.get("r0"));
    assert!(r.is_some() && r0.is_some() && r != r0, "{m}");
}

#[test]
fn identity_at_lolli() {
    let prog = empty();
    let dsig = DynSignature::for_program(&prog);
    let mut c = Checker::new(&prog.sig, &dsig, false);
    let ty = parse_static("(-o (chan 0 (end 0)) (chan 0 (end 0)))").unwrap();
    c.check(&parse_term("(lam x x)").unwrap(), &ty).unwrap();
    c.finish().unwrap();
}

#[test]
fn recv_instantiates_scheme() {
    let (ty, used) = tc(&[("c", "(chan 0 (:: (msg 1 (int 5)) (end 0)))")], "(recv c)").unwrap();
    assert_eq!(ty, parse_static("(tensor (int 5) (chan 0 (end 0)))").unwrap());
    assert_eq!(used, BTreeSet::from([name("c")]));
}

#[test]
fn unify_gives_forall() {
    let (ty, _) = tc(&[("c", "(chan 1 (quan 1 (lam (n int) (end 1))))")], "(unify c)").unwrap();
    assert_eq!(ty, parse_static("(forall (n int) (chan 1 (end 1)))").unwrap());
}

#[test]
fn close_needs_matching_role() {
    assert_eq!(rule_of(tc(&[("c", "(chan 0 (end 1))")], "(close c)")), "guard(close)");
    assert!(tc(&[("c", "(chan 0 (end 1))")], "(wait c)").is_ok());
}

#[test]
fn linear_reuse() {
    let e = "(let ((u (close c))) (close c))";
    assert_eq!(rule_of(tc(&[("c", "(chan 0 (end 0))")], e)), "ty-var-l");
}

#[test]
fn linear_drop() {
    assert_eq!(rule_of(tc(&[], "(let ((c (create {1 0 (end 0)} (lam d (close d))))) ())")), "ty-drop");
}

#[test]
fn branches_must_agree() {
    let e = "(if b (close c) ())";
    let prog = empty();
    let dsig = DynSignature::for_program(&prog);
    let mut env = TypingEnv::default();
    env.gamma.insert(name("b"), StaticTerm::c0(crate::statics::SConst::BoolTy));
    env.delta.insert(name("c"), parse_static("(chan 0 (end 0))").unwrap());
    let err = typecheck(&prog, &dsig, &env, &parse_term(e).unwrap()).unwrap_err();
    assert_eq!(err.rule, "ty-if");
}

#[test]
fn nonlinear_lambda_rejects_linear_capture() {
    let prog = empty();
    let dsig = DynSignature::for_program(&prog);
    let mut c = Checker::new(&prog.sig, &dsig, false);
    c.push_var(name("c"), parse_static("(chan 0 (end 0))").unwrap());
    let err = c.check(&parse_term("(lam u (close c))").unwrap(), &parse_static("(-> unit unit)").unwrap());
    assert_eq!(err.unwrap_err().rule, "ty-lam-i");
}

#[test]
fn erase_drops_proof_functions() {
    let e = parse_term("(recv (exify ch))").unwrap();
    assert_eq!(print_term(&erase_proofs(&e)), "(recv ch)");
    let e = parse_term("(inst (forall+ 5) 3)").unwrap();
    assert_eq!(print_term(&erase_proofs(&e)), "5");
}

#[test]
fn erased_eq_test_is_the_skeleton() {
    let prog = parse_program(EQUAL).unwrap();
    let body = &prog.fun("eq_test").unwrap().body;
    let skeleton = parse_term(
        "(let ((ch ch) (ch ch) ((pair x ch) (recv ch)) ((pair y ch) (recv ch)) (ch (send ch (= x y)))) (close ch))",
    )
    .unwrap();
    assert_eq!(print_term(&erase_proofs(body)), print_term(&skeleton));
}

#[test]
fn pool_of_unit_main() {
    let prog = empty();
    let dsig = DynSignature::for_program(&prog);
    let threads = BTreeMap::from([(0, DynTerm::Unit)]);
    assert_eq!(typecheck_pool(&prog, &dsig, &threads, &BTreeMap::new()), Ok(()));
}

#[test]
fn pool_with_duplicated_endpoint() {
    let prog = empty();
    let dsig = DynSignature::for_program(&prog);
    let close = |r| DynTerm::call(DConst::Close, vec![DynTerm::Endpoint(3, r)]);
    let threads = BTreeMap::from([(0, DynTerm::Unit), (1, close(0)), (2, close(0))]);
    let channels = BTreeMap::from([(3, Some(parse_static("(end 0)").unwrap()))]);
    let err = typecheck_pool(&prog, &dsig, &threads, &channels).unwrap_err();
    assert_eq!(err.rule, "endpoint-multiplicity");
}

/// One row per session head: the protocol seen by both roles, the
/// operation for the side whose role matches the head, and its dual.
/// ite and fix heads are first discharged with their proof function.
const DUALITY: [(&str, &str, &str, &str); 6] = [
    ("end", "(end 0)", "(close c)", "(wait c)"),
    ("msg", "(:: (msg 0 int) (end 0))", "(send c 1)", "(recv c)"),
    ("branch", "(branch 0 (end 0) (end 0))", "(choose c true)", "(offer c)"),
    ("quan", "(quan 0 (lam (n int) (end 0)))", "(unify c)", "(exify c)"),
    ("ite", "(ite true (:: (msg 0 int) (end 0)) (end 0))", "(send (itet c) 1)", "(recv (itet c))"),
    ("fix", "(fix (lam (p stype) (:: (msg 0 int) p)))", "(send (recurse c) 1)", "(recv (recurse c))"),
];

#[test]
fn duality_matrix() {
    let mut ok = 0;
    for (head, proto, own, dual) in DUALITY {
        for role in 0..2 {
            let ty = format!("(chan {role} {proto})");
            let (accept, reject) = if role == 0 { (own, dual) } else { (dual, own) };
            assert!(tc(&[("c", &ty)], accept).is_ok(), "{head}/{role}: {accept}");
            let rule = rule_of(tc(&[("c", &ty)], reject));
            assert!(rule.starts_with("guard("), "{head}/{role}: {reject} gave {rule}");
            ok += 1;
        }
    }
    assert_eq!(ok, 12);
}

fn wrapped() -> impl Strategy<Value = DynTerm> {
    let leaf = prop_oneof![
        (0u64..4, 0u8..2).prop_map(|(i, r)| DynTerm::Endpoint(i, r)),
        (-3i64..3).prop_map(DynTerm::Int),
        Just(DynTerm::Unit),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec![DConst::Unify, DConst::Exify, DConst::Itet, DConst::Itef, DConst::Recurse]))
                .prop_map(|(e, op)| DynTerm::call(op, vec![e])),
            inner.clone().prop_map(|e| DynTerm::ForallIntro(b(e))),
            inner.clone().prop_map(|e| DynTerm::GuardIntro(b(e))),
            inner.clone().prop_map(|e| DynTerm::AssertIntro(b(e))),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| DynTerm::pair(l, r)),
            (inner.clone(), inner).prop_map(|(h, e)| DynTerm::LetExists {
                svar: name("s"),
                x: name("x"),
                head: b(h),
                body: b(e),
            }),
        ]
    })
}

proptest! {
    #[test]
    fn erasure_preserves_resources(e in wrapped()) {
        prop_assert_eq!(rho(&erase_proofs(&e)), rho(&e));
    }

    #[test]
    fn erasure_is_idempotent(e in wrapped()) {
        let once = erase_proofs(&e);
        prop_assert_eq!(erase_proofs(&once), once);
    }
}
