use mrforge_validation::gradient;

#[test]
fn analytic_gradients_match_central_differences() {
    let reports = gradient::check(7).unwrap();
    assert_eq!(reports.len(), gradient::LAYERS.len());
    for r in &reports {
        assert_eq!(r.checked, gradient::PER_LAYER);
        assert!(r.worst < gradient::MAX_REL_ERR);
        eprintln!(
            "{}: worst rel {:e}, {} redrawn at kinks",
            r.name, r.worst, r.kinked
        );
    }
}
