//! Acceptance suite: one test per criterion, each printing its pass/fail
//! line (run with `--nocapture` to see the lines for passing tests).

use rnpe::verification as v;

fn check(result: v::CriterionResult) {
    println!("{result}");
    assert!(result.passed, "{result}");
}

#[test]
fn criterion_1_batch_equivalence() {
    check(v::criterion_1_batch_equivalence());
}

#[test]
fn criterion_2_cost_recursion() {
    check(v::criterion_2_cost_recursion());
}

#[test]
fn criterion_3_exact_q_agreement() {
    check(v::criterion_3_exact_q_agreement());
}

#[test]
fn criterion_4_common_limit() {
    check(v::criterion_4_common_limit());
}

#[test]
fn criterion_5_supervised_economy() {
    check(v::criterion_5_supervised_economy());
}

#[test]
fn criterion_6_policy_improvement() {
    check(v::criterion_6_policy_improvement());
}

#[test]
fn criterion_7_per_step_cost() {
    check(v::criterion_7_per_step_cost());
}

#[test]
fn criterion_8_sr_identity() {
    check(v::criterion_8_sr_identity());
}

#[test]
fn criterion_9_determinism() {
    check(v::criterion_9_determinism());
}
