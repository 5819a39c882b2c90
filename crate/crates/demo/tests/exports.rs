use splinecl_demo::{anneal_curve, basis_curves_native, fisher_disjointness_native};

#[test]
fn basis_curves_sum_to_one() {
    let samples = 41;
    let v = basis_curves_native(5, 3, samples).unwrap();
    assert_eq!(v.len(), samples * 9);
    for i in 0..samples {
        let s: f64 = (1..9).map(|b| v[b * samples + i]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn disjoint_tasks_share_no_knot() {
    let v = fisher_disjointness_native(-1.0, -0.6, 0.6, 1.0, 3).unwrap();
    let (fa, fb, prod) = (&v[..8], &v[8..16], &v[16..]);
    // [-1, -0.6] touches bases 0..=3, [0.6, 1] bases 4..=7.
    assert!(fa[..4].iter().all(|&x| x > 0.0));
    assert!(fa[4..].iter().all(|&x| x == 0.0));
    assert!(fb[..4].iter().all(|&x| x == 0.0));
    assert!(prod.iter().all(|&x| x == 0.0));
}

#[test]
fn anneal_endpoints() {
    let c = anneal_curve(0.1, 1.0, 11);
    assert_eq!(c[0], 0.1);
    assert_eq!(c[10], 0.0);
    assert!((c[5] - 0.05).abs() < 1e-15);
}
