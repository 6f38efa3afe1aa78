mod common;

use common::gradsuite;

#[test]
fn every_gradient_matches_central_differences() {
    let cases = gradsuite::run();
    assert!(cases.len() >= 20);
    for c in &cases {
        assert!(c.rel_error < 1e-4, "{}: relative error {:e}", c.name, c.rel_error);
    }
}
