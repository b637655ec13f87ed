use ipm_pacbayes_demo::{bound_curves, compare_gaussians, compare_histograms};

#[test]
fn histogram_example() {
    let r = compare_histograms("0,1,2,3,4", "1,1,1,0,0", "0,1,1,1,1").unwrap();
    assert!((r.tv - 0.5).abs() < 1e-12);
    assert!((r.w1 - 1.5).abs() < 1e-12);
    assert!(r.kl.is_none());
    assert!(compare_histograms("0,1", "1,x", "1,1").is_err());
}

#[test]
fn curves_are_decreasing() {
    let pts = bound_curves(10, 0.05, 0.021, 0.1, 1e-3, 1e-2, 2000).unwrap();
    assert!(pts.len() > 10);
    for w in pts.windows(2) {
        assert!(w[0].m < w[1].m);
        assert!(w[1].uc <= w[0].uc && w[1].wpb <= w[0].wpb);
        assert!(w[1].klpb.unwrap() <= w[0].klpb.unwrap());
    }
    let dirac = bound_curves(10, 0.05, 0.021, 0.1, 0.0, 0.0, 500).unwrap();
    assert!(dirac.iter().all(|p| p.klpb.is_none()));
}

#[test]
fn gaussian_terms_add_up() {
    let r = compare_gaussians(10, 1.0, 0.1, 1e-3, 1e-2).unwrap();
    let t = r.terms;
    assert!((t.gaussian_w2 + t.posterior_tail + t.prior_tail - r.w_bound).abs() < 1e-15);
    assert!(r.kl.unwrap() > 0.0);
    assert!(compare_gaussians(0, 1.0, 0.1, 1e-3, 1e-2).is_err());
}
