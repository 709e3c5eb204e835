use super::*;
use crate::mesh::RefineMode;
use crate::partition::BalancePolicy;

#[test]
fn defaults_round_trip_through_toml() {
    let cfg = ExperimentConfig::default();
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
}

#[test]
fn partial_toml_keeps_defaults() {
    let cfg = ExperimentConfig::from_toml("seed = 7\n[pollution]\ndim = 1\nlengths = [1, 2]\nframe = \"unit_length\"\n").unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.pollution.dim, 1);
    assert_eq!(cfg.pollution.lengths, vec![1, 2]);
    assert_eq!(cfg.pollution.frame, Frame::UnitLength);
    assert_eq!(cfg.pollution.orders, PollutionConfig::default().orders);
    assert_eq!(cfg.adapt, AdaptStudyConfig::default());
}

#[test]
fn bad_toml_is_a_config_error() {
    for text in ["[pollution]\nunknown = 1\n", "[pollution]\ndim = \"two\"\n", "seed = ["] {
        assert!(matches!(ExperimentConfig::from_toml(text), Err(crate::Error::Config(_))), "{text}");
    }
}

#[test]
fn invalid_sections_are_rejected() {
    let p = PollutionConfig { dim: 3, ..Default::default() };
    assert!(run_pollution_sweep(&p).is_err());
    let a = AdaptStudyConfig { kappa: 1.5, ..Default::default() };
    assert!(run_adapt_study(&a).is_err());
    let s = StabilityConfig { omegas: vec![-1.0], ..Default::default() };
    assert!(run_stability(&s).is_err());
    let a = AdaptStudyConfig { modes: vec![9], ..Default::default() };
    assert!(matches!(run_adapt_study(&a), Err(crate::Error::Config(_))));
}

#[test]
fn unit_length_frame_scales_the_guide() {
    let case = GuideCase { dim: 2, length: 4, p: 2, pz: None, epw: 4, layers: 2, enrichment: 1, alpha: 1.0, mode: 1, frame: Frame::UnitLength };
    let (mesh, mode, _) = guide_case(&case).unwrap();
    assert!((mesh.length() - 1.0).abs() < 1e-12);
    assert!((mode.kz.re - 2.0 * std::f64::consts::PI * 4.0).abs() < 1e-9);
    let (mesh, mode, _) = guide_case(&GuideCase { frame: Frame::Physical, ..case }).unwrap();
    assert!((mesh.length() - 4.0).abs() < 1e-12);
    assert!((mode.kz.re - 2.0 * std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn pollution_rows_follow_grid_order() {
    let cfg = PollutionConfig { dim: 1, lengths: vec![1, 2], orders: vec![1, 2], epw: 4, enrichment: 2, ..Default::default() };
    let rows = run_pollution_sweep(&cfg).unwrap();
    let keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.p, r.length)).collect();
    assert_eq!(keys, vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
    assert!(rows.iter().all(|r| !r.failed() && r.rel_error_pct.unwrap() < 10.0));
    let mut buf = Vec::new();
    write_rows(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "dim,length,p,epw,rel_error_pct,power_loss_pct,dofs,wall_time");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn failed_rows_write_nan() {
    let row = PollutionRow {
        dim: 2,
        length: 1,
        p: 2,
        epw: 4,
        rel_error_pct: None,
        power_loss_pct: Some(f64::NAN),
        dofs: None,
        wall_time: 0.0,
        error: Some("singular".into()),
    };
    assert!(row.failed());
    let v = row.values();
    assert_eq!(&v[4..7], &["nan", "nan", "nan"]);
}

#[test]
fn aniso_series_are_labelled() {
    let cfg = AnisoConfig { length: 1, pz: vec![2, 3], epw_z: vec![4, 8], iso_epw: vec![4, 8], ..Default::default() };
    let rows = run_aniso_sweep(&cfg).unwrap();
    let series: Vec<&str> = rows.iter().map(|r| r.series.as_str()).collect();
    assert_eq!(series, ["pz", "pz", "epw_z", "epw_z", "iso", "iso"]);
    assert_eq!(rows[5].layers, 4);
    assert_eq!(rows[3].layers, 2);
    assert!(rows.iter().all(|r| !r.failed()));
    // more resolution along the guide helps at fixed transverse resolution
    assert!(rows[1].rel_error_pct.unwrap() < rows[0].rel_error_pct.unwrap());
}

#[test]
fn convergence_error_decreases() {
    let cfg = ConvergenceConfig { length: 1, orders: vec![2], epw: vec![2, 4, 8], ..Default::default() };
    let rows = run_convergence(&cfg).unwrap();
    let e: Vec<f64> = rows.iter().map(|r| r.rel_error_pct.unwrap()).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    assert!(loglog_slope(&h, &e) > 1.5);
}

#[test]
fn stability_rows_are_positive() {
    let cfg = StabilityConfig { epw: vec![2, 4], ..Default::default() };
    let rows = run_stability(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let g = r.gamma_h.unwrap();
        assert!(g > 0.0 && g <= r.continuity.unwrap());
    }
    let too_big = StabilityConfig { epw: vec![2000], ..Default::default() };
    let rows = run_stability(&too_big).unwrap();
    assert!(rows[0].failed());
    assert_eq!(rows[0].values()[3], "nan");
}

#[test]
fn loglog_slope_recovers_power() {
    let x = [1.0, 2.0, 4.0, 8.0];
    let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.5)).collect();
    assert!((loglog_slope(&x, &y) + 2.5).abs() < 1e-12);
}

fn small_slab() -> SlabConfig {
    SlabConfig { length: 1, epw: 2, p: 2, enrichment: 2, ..Default::default() }
}

#[test]
fn adapt_study_writes_traces_and_histogram() {
    let cfg = AdaptStudyConfig { slab: small_slab(), modes: vec![0], strategies: vec![RefineMode::Iso, RefineMode::AnisoX], steps: 1, ..Default::default() };
    let study = run_adapt_study(&cfg).unwrap();
    assert_eq!(study.failures(), 0);
    assert_eq!(study.run(0, RefineMode::Iso).unwrap().steps.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    let files = study.write(dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let hist = std::fs::read_to_string(dir.path().join("adapt_histogram.csv")).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "mode,strategy,step,domain,count");
    // one row per fiber domain and strategy for the single marking step
    assert_eq!(hist.lines().count(), 1 + 2 * 4);
}

#[test]
fn partition_study_writes_policy_tables() {
    let cfg = PartitionStudyConfig { slab: small_slab(), steps: 1, ranks: 2, ..Default::default() };
    let study = run_partition_study(&cfg).unwrap();
    assert_eq!(study.traces.len(), 3);
    let orth = study.trace(BalancePolicy::Orthogonal).unwrap();
    assert!(orth.verified.iter().all(|v| *v == Some(true)));
    let dir = tempfile::tempdir().unwrap();
    study.write(dir.path()).unwrap();
    let none = std::fs::read_to_string(dir.path().join("partition_none.csv")).unwrap();
    assert_eq!(none.lines().next().unwrap(), "step,rank,workload,imbalance,migration,interface_dofs");
    assert_eq!(none.lines().count(), 1 + 2 * 2);
    let summary = std::fs::read_to_string(dir.path().join("partition_summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "policy,step,imbalance,max_workload,total_dofs,migration,interface_total,verified");
    assert_eq!(summary.lines().count(), 1 + 3 * 2);
}

#[test]
fn manifest_lists_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::new("pollution", &ExperimentConfig::default());
    m.add_files(&[dir.path().join("pollution.csv")]);
    m.write(dir.path()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(v["experiment"], "pollution");
    assert_eq!(v["files"][0], "pollution.csv");
}
