use csm6lo_core::experiments::stats::{confidence_interval, t_quantile_975};

#[test]
fn t_table_values() {
    // two-sided 95% critical values from a printed t-table
    for (dof, table) in [(1, 12.706), (4, 2.776), (9, 2.262), (29, 2.045)] {
        assert!((t_quantile_975(dof) - table).abs() < 5e-4, "dof {dof}");
    }
}

#[test]
fn ten_sample_interval() {
    let xs = [0.3, 0.35, 0.4, 0.25, 0.45, 0.3, 0.35, 0.4, 0.3, 0.2];
    let mean = 3.3 / 10.0;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / 9.0).sqrt();
    let e = confidence_interval(&xs);
    assert!((e.mean - mean).abs() < 1e-12);
    assert!((e.half_width - 2.2622 * sd / 10f64.sqrt()).abs() < 1e-4);
    assert!(e.half_width >= 0.0);
}
