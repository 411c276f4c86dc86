use triplet_core::config::{load_config, parse_experiment_file, read_config_source, resolve, BUNDLED_PAPER_TABLE1};
use triplet_core::Error;

fn bundled_text() -> String {
    read_config_source(BUNDLED_PAPER_TABLE1).unwrap()
}

#[test]
fn unknown_key_names_its_path() {
    let text = bundled_text().replace("eta_lp =", "eta_lpp =");
    match parse_experiment_file(&text).unwrap_err() {
        Error::Config { path, .. } => assert!(path.contains("budget"), "{path}"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn out_of_range_efficiency_rejected() {
    let text = bundled_text().replace("eta_d2 = { mean = 0.20", "eta_d2 = { mean = 1.20");
    let err = resolve(parse_experiment_file(&text).unwrap()).unwrap_err();
    assert!(err.to_string().contains("eta_d2"), "{err}");
}

#[test]
fn derived_p_spdc_sources_resolve() {
    let base = bundled_text();
    for (src, lo, hi) in [
        ("\"from_coinc\"", 9.8e-6, 9.95e-6),
        ("\"from_power\"", 6.5e-6, 6.6e-6),
        ("3e-6", 3e-6, 3e-6),
    ] {
        let text = base.replace("p_spdc = \"from_triplets\"", &format!("p_spdc = {src}"));
        let cfg = resolve(parse_experiment_file(&text).unwrap()).unwrap();
        assert!(
            (lo..=hi).contains(&cfg.p_spdc_resolved),
            "{src}: {}",
            cfg.p_spdc_resolved
        );
    }
}

#[test]
fn file_and_bundled_sources_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, bundled_text()).unwrap();
    let from_file = load_config(path.to_str().unwrap()).unwrap();
    assert_eq!(from_file, load_config(BUNDLED_PAPER_TABLE1).unwrap());
    assert!((from_file.poling_period_um_resolved - 18.92).abs() < 0.01);
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        load_config("/nonexistent/exp.toml"),
        Err(Error::Io { .. }) | Err(Error::Config { .. })
    ));
}
