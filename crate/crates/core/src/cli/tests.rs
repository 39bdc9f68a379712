use super::*;

fn flags() -> Flags {
    Flags::default()
}

#[test]
fn weight_ranges_keep_even_members() {
    assert_eq!(parse_weights("12..20").unwrap(), vec![12, 14, 16, 18, 20]);
    assert_eq!(parse_weights("13..17").unwrap(), vec![14, 16]);
    assert_eq!(parse_weights("12-16").unwrap(), vec![12, 14, 16]);
    assert_eq!(parse_weights("20, 12,12..14").unwrap(), vec![12, 14, 20]);
    assert!(parse_weights("").unwrap().is_empty());
}

#[test]
fn bad_weights_are_usage_errors() {
    for spec in ["13", "10", "12..x", "20..12", "-4"] {
        let e = parse_weights(spec).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{spec}");
    }
}

#[test]
fn config_file_sits_under_flags() {
    let map = parse_config_file("# run\nK = 60\ntheta=0.8\nweights = 12..14\nod = true\n").unwrap();
    let mut f = flags();
    f.big_k = Some(80.0);
    merge_config(&mut f, &map).unwrap();
    assert_eq!(f.big_k, Some(80.0));
    assert_eq!(f.theta, Some(0.8));
    assert_eq!(f.weights.as_deref(), Some("12..14"));
    assert!(f.od);
}

#[test]
fn unknown_config_key_is_rejected() {
    let map = parse_config_file("bogus = 1").unwrap();
    assert_eq!(merge_config(&mut flags(), &map).unwrap_err().exit_code(), 2);
    assert!(parse_config_file("no equals sign").is_err());
}

#[test]
fn defaults_resolve() {
    let cfg = RunConfig::resolve(flags()).unwrap();
    assert_eq!(cfg.big_k, DEFAULT_K);
    assert!((cfg.big_g - 40f64.powf(0.9)).abs() < 1e-12);
    assert_eq!(cfg.psi2_alpha, cfg.alpha);
    assert_eq!(cfg.truncation, DEFAULT_TRUNCATION);
    assert_eq!(cfg.window().unwrap().weights().first(), Some(&70));
}

#[test]
fn explicit_g_overrides_theta() {
    let mut f = flags();
    f.big_g = Some(10.0);
    f.theta = Some(0.5);
    assert_eq!(RunConfig::resolve(f).unwrap().big_g, 10.0);
}

#[test]
fn out_of_range_parameters_are_usage_errors() {
    let cases: Vec<fn(&mut Flags)> = vec![
        |f| f.big_k = Some(-1.0),
        |f| f.theta = Some(1.0),
        |f| f.big_g = Some(100.0),
        |f| f.alpha = Some(1.0),
        |f| f.tolerance_scale = Some(0.0),
        |f| f.threads = Some(0),
        |f| f.truncation = Some(2),
    ];
    for set in cases {
        let mut f = flags();
        set(&mut f);
        assert_eq!(RunConfig::resolve(f).unwrap_err().exit_code(), 2);
    }
}

#[test]
fn unknown_suite_exits_with_usage_code() {
    assert_eq!(run(["qvar", "verify", "nonsense"]), 2);
    assert_eq!(run(["qvar"]), 2);
}

#[test]
fn missing_cache_lists_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = flags();
    f.cache_dir = Some(dir.path().to_path_buf());
    let cfg = RunConfig::resolve(f).unwrap();
    let e = load_store(&cfg, &[12, 16]).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    let msg = e.to_string();
    assert!(msg.contains("[12, 16]") && msg.contains("--weights 12,16"), "{msg}");
}
