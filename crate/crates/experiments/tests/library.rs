use htmdp::geometry::{GeometryConfig, PathGeometry, TubeOrder};
use htmdp::path::ring_path;
use htmdp::scheduler::SchedulerConfig;
use htmdp_experiments::commands::{
    audit, proxy_bound, rm_constant, variation_allowance, PairRow, TubeRow,
};
use htmdp_experiments::output::{write_csv, write_table, Row};
use htmdp_experiments::stats::{median, quantile, Spread};
use htmdp_experiments::{ExperimentConfig, Format};
use proptest::prelude::*;

const MINIMAL: &str = r#"
[path]
family = "length"
n = 8
gamma = 0.9
epsilon_mix = 0.1
c0 = 2.0
c1 = 2.0
sigma = 1.5
weights0 = [0.8, 1.0, 0.4]
weights1 = [1.6, 2.0, 0.8]
"#;

#[test]
fn quantiles_interpolate_linearly() {
    let v = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(quantile(&v, 0.0), 1.0);
    assert_eq!(quantile(&v, 1.0), 4.0);
    assert_eq!(median(&v), 2.5);
    assert_eq!(quantile(&v, 0.25), 1.75);
    assert!(median(&[]).is_nan());
    let s = Spread::of(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!((s.median, s.q1, s.q3, s.iqr), (3.0, 2.0, 4.0, 2.0));
}

proptest! {
    #[test]
    fn quantiles_are_monotone_and_bounded(v in proptest::collection::vec(-1e3f64..1e3, 1..40), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(quantile(&v, lo) <= quantile(&v, hi));
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(quantile(&v, lo) >= min && quantile(&v, hi) <= max);
    }
}

#[test]
fn empty_tables_still_carry_headers() {
    let dir = tempfile::tempdir().unwrap();
    let files =
        write_table::<PairRow>(dir.path(), "pairs", &[], &[Format::Csv, Format::Json]).unwrap();
    assert_eq!(files.len(), 2);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("pairs.csv")).unwrap(),
        format!("{}\n", PairRow::HEADER.join(","))
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("pairs.json")).unwrap(),
        "[]\n"
    );
}

#[test]
fn optional_fields_serialize_empty() {
    let dir = tempfile::tempdir().unwrap();
    let row = TubeRow {
        tau0: 0.5,
        eps: 0.1,
        order: TubeOrder::Second,
        status: "not regular".into(),
        lo: None,
        hi: None,
        component_lo: None,
        component_hi: None,
        checked: None,
        violations: None,
        max_deviation: None,
        gap_tau0: None,
        safe_lo: None,
        safe_hi: None,
        warning: None,
    };
    let p = dir.path().join("t.csv");
    write_csv(&p, &[row]).unwrap();
    let text = std::fs::read_to_string(p).unwrap();
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "0.5,0.1,second,not regular,,,,,,,,,,,"
    );
}

#[test]
fn config_defaults_and_overrides() {
    let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
    assert_eq!(cfg.output.formats, vec![Format::Csv, Format::Json]);
    assert_eq!(cfg.certify.stride, 1);
    assert!(cfg.tubes.is_none() && cfg.stability.is_none());
    let cfg = ExperimentConfig::from_toml(&format!(
        "{MINIMAL}\n[output]\nformats = [\"json\"]\n[stability]\nH = [10]\ndelta_hys = [0.1]\n"
    ))
    .unwrap();
    assert_eq!(cfg.output.formats, vec![Format::Json]);
    assert_eq!(cfg.stability.unwrap().eps, 0.01);
}

#[test]
fn config_rejects_bad_input() {
    for (extra, needle) in [
        ("\n[certify]\nslack = -1.0\n", "[certify]"),
        ("\n[stability]\nH = [0]\ndelta_hys = [0.1]\n", "[stability]"),
        ("\n[tubes]\ntau0 = [1.5]\neps = [0.1]\n", "[tubes]"),
        ("\n[output]\nformats = []\n", "[output]"),
        ("\n[snapshot]\npoints = 1\n", "[snapshot]"),
        ("\n[geometry]\nunknown = 1\n", "unknown"),
    ] {
        let err = format!(
            "{:#}",
            ExperimentConfig::from_toml(&format!("{MINIMAL}{extra}")).unwrap_err()
        );
        assert!(err.contains(needle), "{extra}: {err}");
    }
    assert!(ExperimentConfig::from_toml("[agent]\nT = 10\n").is_err());
}

fn small_geometry() -> PathGeometry {
    let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
    let path = ring_path(cfg.path).unwrap();
    PathGeometry::analyze(
        &path,
        &GeometryConfig {
            grid: 11,
            ..GeometryConfig::default()
        },
    )
    .unwrap()
}

#[test]
fn audit_counts_pairs_and_violations() {
    let geo = small_geometry();
    let (rows, regular, violations) = audit(&geo, 1, 1e-9).unwrap();
    assert_eq!(rows.len(), 55);
    assert_eq!(violations, 0);
    assert!(regular.iter().all(|r| *r));
    for r in &rows {
        assert!(r.tau0 < r.tau1);
        assert!(
            (r.bound - (r.pl_term + r.curv_term + r.phi_term)).abs() <= 1e-12 * r.bound.max(1.0)
        );
        assert_eq!(
            r.ratio,
            (r.true_drift > 0.0).then(|| r.bound / r.true_drift)
        );
    }
    let (rows, _, _) = audit(&geo, 5, 1e-9).unwrap();
    assert_eq!(rows.len(), 3);
    // A slack of −1 zeroes every bound, so each drifting pair counts.
    let (rows, _, violations) = audit(&geo, 1, -1.0).unwrap();
    assert_eq!(
        violations,
        rows.iter().filter(|r| r.true_drift > 0.0).count()
    );
    assert!(violations > 0);
}

#[test]
fn stability_constants() {
    let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
    let path = ring_path(cfg.path).unwrap();
    let sched = SchedulerConfig {
        l_s: Some(2.0),
        alpha1: 0.5,
        alpha2: 0.25,
        eta_decay: None,
        ..SchedulerConfig::default()
    };
    let p_bar = proxy_bound(&path, &sched, 11).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..11 {
        for &r in path.evaluate(i as f64 / 10.0).unwrap().rewards() {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    assert!((p_bar - (hi - lo + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    assert!((rm_constant(&sched, p_bar) - 1.0 / (1.0 + 0.75 * p_bar)).abs() < 1e-15);

    let s = SchedulerConfig {
        h: 10,
        eta_decay: None,
        ..SchedulerConfig::default()
    };
    let allow = variation_allowance(&s, 95, p_bar);
    let r = s.ranges();
    assert_eq!(allow[0], 10.0 * r[0]);
    assert_eq!(allow[1], 10.0 * r[1]);
    assert_eq!(allow[2], 10.0 * s.lambda_range(p_bar));
    assert_eq!(allow[3], 10.0 * r[3]);
    let decaying = SchedulerConfig {
        h: 10,
        eta_decay: Some(50.0),
        ..SchedulerConfig::default()
    };
    let drop = decaying
        .base_eta(0)
        .clamp(decaying.eta_min, decaying.eta_max)
        - decaying
            .base_eta(94)
            .clamp(decaying.eta_min, decaying.eta_max);
    assert!((variation_allowance(&decaying, 95, p_bar)[0] - (10.0 * r[0] + drop)).abs() < 1e-15);
}
