use htmdp::mdp::{optimal_q, FiniteMdp, ValueFn};
use htmdp::metric::*;
use htmdp::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_zero_mass(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = w.iter().sum::<f64>() / n as f64;
    w.iter_mut().for_each(|x| *x -= mean);
    w
}

/// Brute force over the vertices of the 1-Lipschitz polytope on a line:
/// every optimal `f` has consecutive increments `±(x_{i+1} − x_i)`.
fn line_vertex_oracle(w: &[f64], positions: &[f64]) -> f64 {
    let n = w.len();
    let mut best = f64::NEG_INFINITY;
    for signs in 0u32..(1 << (n - 1)) {
        let mut f = 0.0;
        let mut val = 0.0;
        for i in 0..n {
            if i > 0 {
                let step = positions[i] - positions[i - 1];
                f += if signs >> (i - 1) & 1 == 1 {
                    step
                } else {
                    -step
                };
            }
            val += f * w[i];
        }
        best = best.max(val);
    }
    best
}

/// Dual LP by vertex enumeration: a vertex of `{f : |f_i − f_j| ≤ d_ij, f_0 = 0}`
/// is fixed by a spanning tree of tight edges `f_j = f_i ± d_ij`. Enumerating
/// trees via Prüfer sequences and all sign patterns covers every vertex.
fn dual_vertex_oracle(w: &[f64], metric: &GroundMetric) -> f64 {
    let n = w.len();
    if n == 1 {
        return 0.0;
    }
    if n == 2 {
        return (w[0] * 0.0 + w[1] * metric.dist(0, 1)).abs();
    }
    let mut best = 0.0f64;
    let n_seq = n.pow((n - 2) as u32);
    for code in 0..n_seq {
        let mut seq = Vec::with_capacity(n - 2);
        let mut c = code;
        for _ in 0..n - 2 {
            seq.push(c % n);
            c /= n;
        }
        let edges = prufer_edges(&seq, n);
        for signs in 0u32..(1 << (n - 1)) {
            let mut f = vec![f64::NAN; n];
            f[0] = 0.0;
            let mut assigned = 1;
            while assigned < n {
                for (k, &(a, b)) in edges.iter().enumerate() {
                    let s = if signs >> k & 1 == 1 { 1.0 } else { -1.0 };
                    if f[a].is_finite() && !f[b].is_finite() {
                        f[b] = f[a] + s * metric.dist(a, b);
                        assigned += 1;
                    } else if f[b].is_finite() && !f[a].is_finite() {
                        f[a] = f[b] - s * metric.dist(a, b);
                        assigned += 1;
                    }
                }
            }
            let feasible =
                (0..n).all(|i| (0..n).all(|j| (f[i] - f[j]).abs() <= metric.dist(i, j) + 1e-12));
            if feasible {
                let val: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
                best = best.max(val.abs());
            }
        }
    }
    best
}

fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &x in seq {
        let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
        edges.push((leaf, x));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

fn random_general_metric(rng: &mut ChaCha8Rng, n: usize) -> GroundMetric {
    // shortest-path closure of random edge weights is a metric
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let x = rng.gen_range(0.2..2.0);
            d[i * n + j] = x;
            d[j * n + i] = x;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    GroundMetric::general(n, d).unwrap()
}

#[test]
fn metric_validation() {
    assert!(GroundMetric::general(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
    assert!(GroundMetric::general(3, vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]).is_err());
    assert!(GroundMetric::line(vec![0.0, 0.0]).is_err());
    let ring = GroundMetric::unit_ring(6).unwrap();
    assert_eq!(ring.dist(0, 5), 1.0);
    assert_eq!(ring.dist(0, 3), 3.0);
    assert_eq!(ring.diameter(), 3.0);
}

#[test]
fn two_point_and_zero_measures() {
    let line = GroundMetric::line(vec![0.0, 0.5, 2.0, 3.5]).unwrap();
    let xi = SignedMeasure::new(vec![1.0, 0.0, 0.0, -1.0]);
    assert!((w1_dual_norm(&xi, &line).unwrap() - 3.5).abs() < 1e-12);
    let xi = SignedMeasure::new(vec![0.0, -1.0, 1.0, 0.0]);
    assert!((w1_dual_norm(&xi, &line).unwrap() - 1.5).abs() < 1e-12);
    assert_eq!(
        w1_dual_norm(&SignedMeasure::new(vec![0.0; 4]), &line).unwrap(),
        0.0
    );
    assert_eq!(
        l1_surrogate_norm(&SignedMeasure::new(vec![0.0; 4]), &line),
        0.0
    );

    let xi = SignedMeasure::new(vec![1.0, 0.0, 0.0, -1.0]);
    assert!(l1_surrogate_norm(&xi, &line) >= 3.5);
}

#[test]
fn nonzero_mass_is_rejected() {
    let line = GroundMetric::unit_line(3).unwrap();
    let err = w1_dual_norm(&SignedMeasure::new(vec![1.0, 0.0, 0.0]), &line).unwrap_err();
    assert!(matches!(err, Error::NonZeroMass(_)));
    assert!(SignedMeasure::with_zero_mass(vec![1.0, -0.5]).is_err());
    assert!(SignedMeasure::with_zero_mass(vec![1.0, -1.0])
        .unwrap()
        .is_zero_mass());
}

#[test]
fn line_matches_vertex_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let positions = vec![0.0, 0.7, 1.1, 2.6, 3.0];
    let line = GroundMetric::line(positions.clone()).unwrap();
    for _ in 0..50 {
        let w = random_zero_mass(&mut rng, 5);
        let exact = w1_dual_norm(&SignedMeasure::new(w.clone()), &line).unwrap();
        assert!((exact - line_vertex_oracle(&w, &positions)).abs() < 1e-12);
    }
}

#[test]
fn closed_forms_match_transport_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let metrics = [
        GroundMetric::line(vec![0.0, 0.4, 1.9, 2.0, 3.3, 4.0]).unwrap(),
        GroundMetric::ring(vec![1.0, 0.5, 2.0, 1.5, 0.7, 1.1]).unwrap(),
        GroundMetric::unit_ring(5).unwrap(),
    ];
    for m in &metrics {
        let general = m.as_general();
        for _ in 0..40 {
            let w = random_zero_mass(&mut rng, m.n_states());
            let xi = SignedMeasure::new(w);
            let closed = w1_dual_norm(&xi, m).unwrap();
            let lp = w1_dual_norm(&xi, &general).unwrap();
            assert!((closed - lp).abs() < 1e-9, "{closed} vs {lp}");
        }
    }
}

#[test]
fn transport_matches_dual_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 3..=5 {
        let metric = random_general_metric(&mut rng, n);
        for _ in 0..8 {
            let w = random_zero_mass(&mut rng, n);
            let primal = w1_dual_norm(&SignedMeasure::new(w.clone()), &metric).unwrap();
            let dual = dual_vertex_oracle(&w, &metric);
            assert!((primal - dual).abs() < 1e-9, "n={n}: {primal} vs {dual}");
        }
    }
}

#[test]
fn surrogate_dominates_on_random_measures() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let metrics = [
        GroundMetric::unit_ring(8).unwrap(),
        GroundMetric::unit_line(7).unwrap(),
        random_general_metric(&mut rng, 6),
    ];
    for m in &metrics {
        for _ in 0..100 {
            let xi = SignedMeasure::new(random_zero_mass(&mut rng, m.n_states()));
            assert!(l1_surrogate_norm(&xi, m) >= w1_dual_norm(&xi, m).unwrap() - 1e-12);
        }
    }
}

#[test]
fn lipschitz_seminorm_cases() {
    let line = GroundMetric::unit_line(5).unwrap();
    assert_eq!(
        lipschitz_seminorm(&ValueFn::new(vec![2.0; 5]), &line).unwrap(),
        0.0
    );
    let id = ValueFn::new((0..5).map(|i| i as f64).collect());
    assert!((lipschitz_seminorm(&id, &line).unwrap() - 1.0).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let metric = random_general_metric(&mut rng, 6);
    let f: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut brute = 0.0f64;
    for i in 0..6 {
        for j in 0..6 {
            if i != j {
                brute = brute.max((f[i] - f[j]).abs() / metric.dist(i, j));
            }
        }
    }
    let got = lipschitz_seminorm(&ValueFn::new(f), &metric).unwrap();
    assert!((got - brute).abs() < 1e-15);

    let degenerate = GroundMetric::general(2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(matches!(
        lipschitz_seminorm(&ValueFn::new(vec![0.0, 1.0]), &degenerate),
        Err(Error::InfiniteSeminorm(0, 1))
    ));
}

#[test]
fn mixing_certificate_closed_forms() {
    let c = MixingCertificate::from_constants(1.0, 0.0, 0.9).unwrap();
    assert!((c.c_mix - 1.0).abs() < 1e-15);
    let c = MixingCertificate::from_constants(1.0, 1.0, 0.9).unwrap();
    assert!((c.c_mix - 10.0).abs() < 1e-12);
    assert!(matches!(
        MixingCertificate::from_constants(1.0, 1.2, 0.9),
        Err(Error::NoCertificate(_))
    ));

    // state-independent kernel: κ = 0; reward f(s) = s on a unit line
    let n = 4;
    let t = vec![0.25; n * n];
    let r: Vec<f64> = (0..n).map(|s| s as f64).collect();
    let mdp = FiniteMdp::new(n, 1, t, r, 0.9).unwrap();
    let cert = mixing_certificate(&mdp, &GroundMetric::unit_line(n).unwrap()).unwrap();
    assert!(cert.kappa.abs() < 1e-15);
    assert!((cert.c_mix - 1.0).abs() < 1e-12);
}

#[test]
fn value_lipschitz_respects_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 8;
    let metric = GroundMetric::unit_ring(n).unwrap();
    for _ in 0..10 {
        // lazy random walk on the ring: shift-invariant kernels have κ ≤ 1
        let eps = rng.gen_range(0.05..0.5);
        let mut t = vec![0.0; n * 2 * n];
        for s in 0..n {
            for (a, step) in [1usize, n - 1].iter().enumerate() {
                let row = &mut t[(s * 2 + a) * n..(s * 2 + a + 1) * n];
                row[(s + step) % n] += 1.0 - eps;
                row.iter_mut().for_each(|p| *p += eps / n as f64);
            }
        }
        let mut r = vec![0.0; n * 2];
        let mut level = [0.0, 0.0];
        for s in 0..n {
            for (a, l) in level.iter_mut().enumerate() {
                *l += rng.gen_range(-0.3..0.3);
                r[s * 2 + a] = *l;
            }
        }
        let mdp = FiniteMdp::new(n, 2, t, r, 0.9).unwrap();
        let cert = mixing_certificate(&mdp, &metric).unwrap();
        let q = optimal_q(&mdp).unwrap();
        let v = q.state_values();
        assert!(lipschitz_seminorm(&v, &metric).unwrap() <= cert.c_mix + 1e-9);
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn dual_norm_scales(ws in proptest::collection::vec(-1.0f64..1.0, 7), c in -5.0f64..5.0) {
            let mean = ws.iter().sum::<f64>() / 7.0;
            let w: Vec<f64> = ws.iter().map(|x| x - mean).collect();
            let xi = SignedMeasure::new(w);
            for m in [GroundMetric::unit_ring(7).unwrap(), GroundMetric::unit_line(7).unwrap()] {
                let base = w1_dual_norm(&xi, &m).unwrap();
                let scaled = w1_dual_norm(&xi.scaled(c), &m).unwrap();
                prop_assert!((scaled - c.abs() * base).abs() < 1e-10 * (1.0 + base));
            }
        }
    }
}
