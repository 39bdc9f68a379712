use pyqvar::{diagonal_record, eigenform_records, mass_records};

#[test]
fn weight_twelve_record_matches_ramanujan_tau() {
    let dir = tempfile::tempdir().unwrap();
    let forms = eigenform_records(12, 30, dir.path().to_str()).unwrap();
    let forms = forms.as_array().unwrap();
    assert_eq!(forms.len(), 1);
    let lambda = forms[0]["lambda"].as_array().unwrap();
    assert_eq!(lambda.len(), 30);
    // tau(2) = -24
    let l2 = lambda[1].as_f64().unwrap();
    assert!((l2 * 2f64.powf(5.5) + 24.0).abs() < 1e-9, "{l2}");
}

#[test]
fn mass_rows_decompose() {
    let rows = mass_records(16, 2.0, 200, None).unwrap();
    let row = &rows.as_array().unwrap()[0];
    let get = |k: &str| row[k].as_f64().unwrap();
    assert!((get("mu") - get("s_direct") - get("e_residual") - get("expected")).abs() < 1e-9);
}

#[test]
fn diagonal_record_has_both_asymptotic_forms() {
    let d = diagonal_record(100.0, 0.9, 2.0).unwrap();
    let numeric = d["numeric"].as_f64().unwrap();
    let residue = d["residue_form"]["total"].as_f64().unwrap();
    assert!(numeric > 0.0 && residue > 0.0);
    assert!(d["displayed"]["log_term"].is_number());
    assert!(diagonal_record(100.0, 1.5, 2.0).is_err());
}
