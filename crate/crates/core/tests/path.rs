use std::sync::Arc;

use htmdp::mdp::FiniteMdp;
use htmdp::metric::GroundMetric;
use htmdp::path::*;

fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn ring_mdp_limits() {
    let m = ring_mdp(6, 0.0, 0.9, 2.0, 1.0, &[1.0, 1.0, 1.0]).unwrap();
    for s in 0..6 {
        for a in 0..3 {
            let row = m.row(s, a);
            assert_eq!(row.iter().filter(|p| **p == 1.0).count(), 1);
            assert_eq!(row[ring_successor(s, a, 6)], 1.0);
        }
    }
    let m = ring_mdp(6, 1.0, 0.9, 2.0, 1.0, &[1.0, 1.0, 1.0]).unwrap();
    assert!(m
        .transitions()
        .iter()
        .all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
    assert!(ring_mdp(2, 0.1, 0.9, 0.0, 1.0, &[1.0; 3]).is_err());
    assert!(ring_mdp(5, 0.1, 0.9, 0.0, 0.0, &[1.0; 3]).is_err());
}

#[test]
fn ring_reward_peaks_at_center() {
    let m = ring_mdp(20, 0.05, 0.95, 7.0, 2.0, &[0.5, 1.0, 0.25]).unwrap();
    for s in 0..20 {
        for a in 0..3 {
            assert!((m.row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let col: Vec<f64> = (0..20).map(|s| m.reward(s, ACTION_NONE)).collect();
    let argmax = (0..20).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
    assert_eq!(argmax, 7);
    assert_eq!(col[7], 1.0);
    // wrap-around: state 19 sits 2 steps from a center at 1
    let m = ring_mdp(20, 0.05, 0.95, 1.0, 2.0, &[1.0; 3]).unwrap();
    let expect = (-4.0f64 / 8.0).exp();
    assert!((m.reward(19, 0) - expect).abs() < 1e-15);
}

#[test]
fn displacement_wraps() {
    assert_eq!(ring_displacement(19.0, 1.0, 20), -2.0);
    assert_eq!(ring_displacement(1.0, 19.0, 20), 2.0);
    assert_eq!(ring_displacement(10.0, 0.0, 20), 10.0);
    assert!((ring_displacement(3.0, 2.5, 20) - 0.5).abs() < 1e-15);
}

#[test]
fn endpoints_are_configured_mdps() {
    let cfg = RingPathConfig {
        c0: 3.0,
        c1: 6.5,
        ..RingPathConfig::length_default()
    };
    let path = ring_path(cfg.clone()).unwrap();
    let m0 = ring_mdp(
        cfg.n,
        cfg.epsilon_mix,
        cfg.gamma,
        cfg.c0,
        cfg.sigma,
        &cfg.weights0,
    );
    let m1 = ring_mdp(
        cfg.n,
        cfg.epsilon_mix,
        cfg.gamma,
        cfg.c1,
        cfg.sigma,
        &cfg.weights1,
    );
    assert_eq!(path.evaluate(0.0).unwrap(), m0.unwrap());
    assert_eq!(path.evaluate(1.0).unwrap(), m1.unwrap());
    let curved = curvature_dominated_path(cfg.clone()).unwrap();
    assert_eq!(curved.evaluate(1.0).unwrap(), path.evaluate(1.0).unwrap());
}

#[test]
fn s_curve_schedule() {
    assert_eq!(Schedule::SCurve.eval(0.0), (0.0, 0.0, 6.0));
    assert_eq!(Schedule::SCurve.eval(1.0), (1.0, 0.0, -6.0));
    assert_eq!(Schedule::SCurve.eval(0.5).2, 0.0);
    assert_eq!(Schedule::SCurve.eval(0.25).2, 3.0);
}

#[test]
fn config_validation() {
    let bad = RingPathConfig {
        alpha_profile: Some([0.2, 0.8]),
        ..RingPathConfig::length_default()
    };
    assert!(RingPath::new(bad).is_err());
    let bad = RingPathConfig {
        alpha_profile: None,
        ..RingPathConfig::kink_default()
    };
    assert!(RingPath::new(bad).is_err());
    let bad = RingPathConfig {
        epsilon_mix1: Some(0.2),
        ..RingPathConfig::length_default()
    };
    assert!(RingPath::new(bad).is_err());
    let bad = RingPathConfig {
        gamma: 1.0,
        ..RingPathConfig::length_default()
    };
    assert!(RingPath::new(bad).is_err());
}

#[test]
fn stationary_path_has_zero_derivatives() {
    let m = ring_mdp(8, 0.1, 0.9, 2.0, 1.5, &[0.3, 1.0, 0.6]).unwrap();
    let family = Arc::new(InterpolatedPath::stationary(m));
    let metric = GroundMetric::unit_ring(8).unwrap();
    for mode in [DerivativeMode::Analytic, DerivativeMode::central_fd()] {
        let path = MdpPath::new(family.clone(), metric.clone(), mode).unwrap();
        let d = path_derivatives(&path, 0.4).unwrap();
        assert!(d
            .dr
            .iter()
            .chain(&d.dp)
            .chain(&d.ddr)
            .chain(&d.ddp)
            .all(|x| *x == 0.0));
        assert_eq!(path_speed_terms(&path, 0.4).unwrap(), SpeedTerms::ZERO);
    }
}

#[test]
fn linear_reward_path_derivatives() {
    let m0 = ring_mdp(6, 0.1, 0.9, 2.0, 1.5, &[0.3, 1.0, 0.6]).unwrap();
    let delta: Vec<f64> = (0..18).map(|i| (i as f64 * 0.37).sin()).collect();
    let r1: Vec<f64> = m0
        .rewards()
        .iter()
        .zip(&delta)
        .map(|(r, d)| r + d)
        .collect();
    let m1 = FiniteMdp::new(6, 3, m0.transitions().to_vec(), r1, 0.9).unwrap();
    let family = Arc::new(InterpolatedPath::new(m0, m1).unwrap());
    let path = MdpPath::new(
        family,
        GroundMetric::unit_ring(6).unwrap(),
        DerivativeMode::Analytic,
    )
    .unwrap();
    let d = path_derivatives(&path, 0.3).unwrap();
    assert!(approx(&d.dr, &delta, 1e-15));
    assert!(d.ddr.iter().all(|x| *x == 0.0));
    let terms = path_speed_terms(&path, 0.3).unwrap();
    let delta_inf = delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!((terms.dr_inf - delta_inf).abs() < 1e-15);
    assert_eq!((terms.dp_w1, terms.ddr_inf, terms.ddp_w1), (0.0, 0.0, 0.0));
}

#[test]
fn analytic_reward_derivative_matches_fd() {
    let cfg = RingPathConfig {
        c0: 3.0,
        c1: 8.0,
        ..RingPathConfig::length_default()
    };
    let path = ring_path(cfg).unwrap();
    let fd = path.with_mode(DerivativeMode::central_fd()).unwrap();
    let a = path_derivatives(&path, 0.5).unwrap();
    let f = path_derivatives(&fd, 0.5).unwrap();
    let scale = a.dr.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    assert!(approx(&a.dr, &f.dr, 1e-6 * scale));
    assert!(approx(&a.ddr, &f.ddr, 1e-4 * scale));
}

#[test]
fn richardson_order_on_s_curve() {
    // bump moves by 2 states; stencils stay away from antipode crossings
    let cfg = RingPathConfig {
        c0: 4.0,
        c1: 6.0,
        ..RingPathConfig::curvature_default()
    };
    let path = ring_path(cfg).unwrap();
    let tau = 0.3;
    let exact = path_derivatives(&path, tau).unwrap();
    let err = |h: f64| {
        let fd = path
            .with_mode(DerivativeMode::CentralFd { h1: h, h2: h })
            .unwrap();
        let d = path_derivatives(&fd, tau).unwrap();
        d.dr.iter()
            .zip(&exact.dr)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let ratio = err(0.02) / err(0.01);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn kernel_drift_rows_have_zero_mass() {
    let cfg = RingPathConfig {
        family: FamilyKind::Custom,
        epsilon_mix1: Some(0.3),
        ..RingPathConfig::length_default()
    };
    let path = ring_path(cfg).unwrap();
    let fd = path.with_mode(DerivativeMode::central_fd()).unwrap();
    for tau in [0.0, 0.1, 0.5, 0.9, 1.0] {
        for p in [&path, &fd] {
            let d = path_derivatives(p, tau).unwrap();
            assert!(d.max_row_mass() < 1e-8);
            let t = speed_terms_of(&d, p.metric()).unwrap();
            assert!(t.dp_w1 > 0.0);
            assert!(t.dp_w1 <= dp_l1_surrogate(&d, p.metric()) + 1e-12);
        }
    }
    let a = path_derivatives(&path, 0.4).unwrap();
    let f = path_derivatives(&fd, 0.4).unwrap();
    assert!(approx(&a.dp, &f.dp, 1e-9));
}

#[test]
fn kink_path_multipliers() {
    let path = kink_prone_path(RingPathConfig::kink_default()).unwrap();
    let m = path.evaluate(0.5).unwrap();
    for s in 0..20 {
        assert!((m.reward(s, ACTION_LEFT) - m.reward(s, ACTION_RIGHT)).abs() < 1e-15);
    }
    let m = path.evaluate(0.0).unwrap();
    assert!((m.reward(10, ACTION_LEFT) - 0.4).abs() < 1e-15);
    assert!((m.reward(10, ACTION_RIGHT) - 0.6).abs() < 1e-15);
}

#[test]
fn ring_certificate_kappa() {
    let path = ring_path(RingPathConfig::length_default()).unwrap();
    let cert = path.mixing_certificate().unwrap();
    assert!((cert.kappa - 0.95).abs() < 1e-12);
    assert!(cert.c_mix > 0.0);
    assert_eq!(path.l_s().unwrap(), cert.c_mix);
    assert_eq!(path.clone().with_l_s(3.0).unwrap().l_s().unwrap(), 3.0);
}
