mod common;

use common::gradcheck::GradReport;
use common::suites::{op_gradient_reports, unet_gradient_report};

fn assert_passes(name: &str, r: &GradReport) {
    assert!(
        r.passed(),
        "{name}: {} of {} elements failed, worst {:?}",
        r.failures,
        r.checked,
        r.worst
    );
}

#[test]
fn every_op_matches_finite_differences() {
    let reports = op_gradient_reports();
    assert_eq!(reports.len(), 15);
    for (name, r) in &reports {
        assert_passes(name, r);
    }
}

#[test]
fn miniature_unet_matches_finite_differences() {
    let r = unet_gradient_report();
    assert!(r.checked > 300, "{}", r.checked);
    assert_passes("unet", &r);
}
