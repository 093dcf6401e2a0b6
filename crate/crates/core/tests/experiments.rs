use pmaxevt_core::experiments::{
    parse_csv_report, rate_experiment, report_emit, BaseSpec, ExperimentConfig, ReportFormat,
};
use pmaxevt_core::{DistanceKind, Normalization, Perturbation};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        3,
        None,
        BaseSpec {
            perturbation: Perturbation::Envelope,
            l: 0.5,
            delta: 0.5,
            normalization: Normalization::Truncate,
        },
    );
    cfg.name = "golden".into();
    cfg.n_grid = vec![10, 100, 1000];
    cfg.k_list = vec![1, 2];
    cfg.distances = vec![DistanceKind::Hellinger, DistanceKind::TotalVariation];
    cfg.bound.mc_samples = 2000;
    cfg.seed = 7;
    cfg
}

fn emit(format: ReportFormat) -> String {
    let res = rate_experiment(&small_config()).unwrap();
    let mut buf = Vec::new();
    report_emit(&res, format, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn json_report_matches_schema() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/rate_results.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&emit(ReportFormat::Json)).unwrap();
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
    // a broken document must be rejected
    let mut bad = doc.clone();
    bad["rows"][0]["kind"] = serde_json::json!("chi2");
    assert!(!validator.is_valid(&bad));
}

#[test]
fn reports_are_deterministic() {
    for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::GnuplotText] {
        assert_eq!(emit(format), emit(format));
    }
}

#[test]
fn gnuplot_report_matches_golden() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/rate_small.gnuplot");
    let text = emit(ReportFormat::GnuplotText);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(path).unwrap());
}

#[test]
fn csv_report_parses_back() {
    let text = emit(ReportFormat::Csv);
    let (rows, footer) = parse_csv_report(&text).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.bound_total.unwrap() >= r.value));
    assert_eq!(rows.iter().filter(|r| r.bound_joint.is_some()).count(), 9);
    assert_eq!(footer.iter().filter(|l| l.starts_with("# slope")).count(), 4);
}

#[test]
fn config_file_round_trip() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::from_path(&path).unwrap(), cfg);
}
