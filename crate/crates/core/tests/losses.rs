#[allow(dead_code)]
mod checks;
#[allow(dead_code)]
mod common;

#[test]
fn matching_attention_gives_zero_explanation_loss() {
    checks::losses::matching_attention_gives_zero_explanation_loss();
}

#[test]
fn half_probability_gives_ln2() {
    checks::losses::half_probability_gives_ln2();
}

#[test]
fn total_is_weighted_sum_exactly() {
    checks::losses::total_is_weighted_sum_exactly();
}
