//! The example programs and the ill-typed mutants, embedded.

/// Well-typed programs: `(name, source)`.
pub const PROGRAMS: [(&str, &str); 6] = [
    ("equal", include_str!("../corpus/equal.sess")),
    ("counter", include_str!("../corpus/counter.sess")),
    ("array", include_str!("../corpus/array.sess")),
    ("queue", include_str!("../corpus/queue.sess")),
    ("queue_branch", include_str!("../corpus/queue_branch.sess")),
    ("cloud", include_str!("../corpus/cloud.sess")),
];

/// Ill-typed mutants: `(name, source)`. Each starts with a
/// `; expect: RULE` line.
pub const NEGATIVE: [(&str, &str); 13] = [
    ("branch_divergence", include_str!("../corpus/negative/branch_divergence.sess")),
    ("double_close", include_str!("../corpus/negative/double_close.sess")),
    ("dropped_endpoint", include_str!("../corpus/negative/dropped_endpoint.sess")),
    ("itet_undecided", include_str!("../corpus/negative/itet_undecided.sess")),
    ("linear_capture", include_str!("../corpus/negative/linear_capture.sess")),
    ("missing_wait", include_str!("../corpus/negative/missing_wait.sess")),
    ("nonlinear_index", include_str!("../corpus/negative/nonlinear_index.sess")),
    ("recv_at_end", include_str!("../corpus/negative/recv_at_end.sess")),
    ("skip_exify", include_str!("../corpus/negative/skip_exify.sess")),
    ("unify_server_side", include_str!("../corpus/negative/unify_server_side.sess")),
    ("wait_not_close", include_str!("../corpus/negative/wait_not_close.sess")),
    ("wrong_payload", include_str!("../corpus/negative/wrong_payload.sess")),
    ("wrong_role_send", include_str!("../corpus/negative/wrong_role_send.sess")),
];

pub fn program(name: &str) -> Option<&'static str> {
    PROGRAMS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// The rule a mutant is expected to be rejected with.
pub fn expected_rule(src: &str) -> Option<&str> {
    src.lines().next()?.strip_prefix("; expect:").map(str::trim)
}
