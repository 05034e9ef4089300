use htmdp::mdp::*;
use htmdp::Error;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mdp(rng: &mut ChaCha8Rng, ns: usize, na: usize, gamma: f64) -> FiniteMdp {
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let row: Vec<f64> = (0..ns).map(|_| rng.gen::<f64>()).collect();
        let sum: f64 = row.iter().sum();
        transition.extend(row.iter().map(|p| p / sum));
    }
    // renormalize the last entry so each row sums to 1 within round-off
    for chunk in transition.chunks_mut(ns) {
        let partial: f64 = chunk[..ns - 1].iter().sum();
        chunk[ns - 1] = 1.0 - partial;
    }
    let reward = (0..ns * na).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FiniteMdp::new(ns, na, transition, reward, gamma).unwrap()
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn sup_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn single(r: f64, gamma: f64) -> FiniteMdp {
    FiniteMdp::new(1, 1, vec![1.0], vec![r], gamma).unwrap()
}

fn ring3() -> FiniteMdp {
    // 3 states, 2 actions: move clockwise or stay.
    let ns = 3;
    let mut t = vec![0.0; ns * 2 * ns];
    for s in 0..ns {
        t[(s * 2) * ns + (s + 1) % ns] = 1.0;
        t[(s * 2 + 1) * ns + s] = 1.0;
    }
    let r = vec![0.0, 0.2, 0.0, 0.1, 1.0, 0.3];
    FiniteMdp::new(ns, 2, t, r, 0.9).unwrap()
}

#[test]
fn construction_rejects_bad_rows() {
    assert!(FiniteMdp::new(1, 1, vec![0.9], vec![0.0], 0.9).is_err());
    assert!(FiniteMdp::new(2, 1, vec![1.5, -0.5, 0.0, 1.0], vec![0.0, 0.0], 0.9).is_err());
    assert!(FiniteMdp::new(1, 1, vec![1.0], vec![f64::NAN], 0.9).is_err());
    assert!(FiniteMdp::new(1, 1, vec![1.0], vec![0.0], 1.0).is_err());
}

#[test]
fn bellman_zero_and_single_step() {
    let mdp = FiniteMdp::new(2, 2, vec![0.5; 8], vec![0.0; 4], 0.9).unwrap();
    let out = bellman_optimal_apply(&mdp, &QTable::zeros(2, 2)).unwrap();
    assert!(out.values().iter().all(|&v| v == 0.0));

    let out = bellman_optimal_apply(&single(1.0, 0.9), &QTable::zeros(1, 1)).unwrap();
    assert_eq!(out.get(0, 0), 1.0);
}

#[test]
fn bellman_shape_mismatch() {
    let err = bellman_optimal_apply(&single(1.0, 0.9), &QTable::zeros(2, 1)).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn bellman_contracts_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mdp = random_mdp(&mut rng, 4, 3, 0.8);
    for _ in 0..100 {
        let q1 =
            QTable::from_values(4, 3, (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
        let q2 =
            QTable::from_values(4, 3, (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
        let lhs = bellman_optimal_apply(&mdp, &q1)
            .unwrap()
            .sup_distance(&bellman_optimal_apply(&mdp, &q2).unwrap());
        assert!(lhs <= 0.8 * q1.sup_distance(&q2) + 1e-12);
    }
}

#[test]
fn value_iteration_geometric_series() {
    let out = value_iteration(&single(1.0, 0.9), 1e-10, 10_000).unwrap();
    assert!((out.q.get(0, 0) - 10.0).abs() <= out.error_bound + 1e-10);
    let zero = FiniteMdp::new(2, 2, vec![0.5; 8], vec![0.0; 4], 0.9).unwrap();
    let out = value_iteration(&zero, 1e-10, 10).unwrap();
    assert!(out.q.values().iter().all(|&v| v == 0.0));
}

#[test]
fn value_iteration_matches_long_sweeps() {
    let mdp = ring3();
    let out = value_iteration(&mdp, 1e-10, 100_000).unwrap();
    let mut q = QTable::zeros(3, 2);
    for _ in 0..10_000 {
        q = bellman_optimal_apply(&mdp, &q).unwrap();
    }
    assert!(out.q.sup_distance(&q) < 1e-8);
    let residual = bellman_optimal_apply(&mdp, &out.q)
        .unwrap()
        .sup_distance(&out.q);
    assert!(residual <= 1e-10);
}

#[test]
fn value_iteration_limit_reports_residual() {
    let err = value_iteration(&ring3(), 1e-12, 3).unwrap_err();
    match err {
        Error::IterationLimit {
            iterations,
            residual,
        } => {
            assert_eq!(iterations, 3);
            assert!(residual > 0.0);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(value_iteration(&ring3(), 0.0, 3).is_err());
}

#[test]
fn policy_evaluation_cases() {
    let mdp = ring3();
    let vi = value_iteration(&mdp, 1e-12, 100_000).unwrap();
    let pi = greedy_policy(&vi.q);
    let q = policy_evaluation(&mdp, &pi).unwrap();
    assert!(q.sup_distance(&vi.q) < 1e-8);

    let c = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random_mdp(&mut rng, 4, 2, 0.6);
    let flat = FiniteMdp::new(4, 2, base.transitions().to_vec(), vec![c; 8], 0.6).unwrap();
    let q = policy_evaluation(&flat, &Policy::new(vec![1, 0, 1, 0])).unwrap();
    assert!(q.values().iter().all(|v| (v - c / 0.4).abs() < 1e-12));

    // deterministic 2-cycle, r = (1, 0), γ = 0.5 → Q(s0) = 1/(1 − 0.25)
    let cyc = FiniteMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0], 0.5).unwrap();
    let q = policy_evaluation(&cyc, &Policy::new(vec![0, 0])).unwrap();
    assert!((q.get(0, 0) - 4.0 / 3.0).abs() < 1e-12);
    assert!((q.get(1, 0) - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn greedy_ties_and_shift_invariance() {
    let q = QTable::from_values(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
    assert_eq!(greedy_policy(&q).actions, vec![0, 0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vals: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q = QTable::from_values(5, 3, vals.clone()).unwrap();
    let shifted = QTable::from_values(5, 3, vals.iter().map(|v| v + 3.25).collect()).unwrap();
    assert_eq!(greedy_policy(&q), greedy_policy(&shifted));
}

#[test]
fn action_gap_cases() {
    let q = QTable::from_values(3, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(action_gap(&q).unwrap().global, 1.0);
    let q = QTable::from_values(2, 2, vec![0.3, 0.3, 2.0, 2.0]).unwrap();
    assert_eq!(action_gap(&q).unwrap().global, 0.0);
    assert!(matches!(
        action_gap(&QTable::zeros(2, 1)),
        Err(Error::GapUndefined(1))
    ));

    let q = QTable::from_values(2, 2, vec![1.0, 0.0, 0.1, 0.0]).unwrap();
    let masked = action_gap_masked(&q, Some(&[true, false])).unwrap();
    assert_eq!(masked.global, 1.0);
}

#[test]
fn gap_rises_by_exactly_epsilon_at_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let q =
            QTable::from_values(6, 3, (0..18).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let gap = action_gap(&q).unwrap();
        let s = gap.argmin_state;
        let best = greedy_policy(&q).action(s);
        let second_gap = gap
            .per_state
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != s)
            .map(|(_, g)| *g)
            .fold(f64::INFINITY, f64::min);
        let eps = 0.5 * (second_gap - gap.global);
        if eps <= 1e-9 {
            continue;
        }
        let mut q2 = q.clone();
        q2.set(s, best, q.get(s, best) + eps);
        let new_gap = action_gap(&q2).unwrap();
        assert_eq!(new_gap.argmin_state, s);
        assert!((new_gap.global - (gap.global + eps)).abs() < 1e-12);
    }
}

#[test]
fn policy_transition_is_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mdp = random_mdp(&mut rng, 4, 2, 0.9);
    let p = policy_transition(&mdp, &Policy::new(vec![0, 1, 1, 0])).unwrap();
    for i in 0..p.nrows() {
        assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
    }
    let ones = DVector::from_element(8, 1.0);
    assert!(((&p * ones).add_scalar(-1.0)).amax() < 1e-12);

    let det = ring3();
    let p = policy_transition(&det, &Policy::new(vec![0, 1, 0])).unwrap();
    for i in 0..p.nrows() {
        assert_eq!(p.row(i).iter().filter(|v| **v != 0.0).count(), 1);
    }
}

#[test]
fn resolvent_cases_and_neumann_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mdp = random_mdp(&mut rng, 4, 3, 0.85);
    let pi = Policy::new(vec![2, 0, 1, 1]);
    let y = resolvent_apply(&mdp, &pi, &[1.0; 12]).unwrap();
    assert!(y.iter().all(|v| (v - 1.0 / 0.15).abs() < 1e-10));
    let y = resolvent_apply(&mdp, &pi, &[0.0; 12]).unwrap();
    assert!(y.iter().all(|v| *v == 0.0));

    let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = resolvent_apply(&mdp, &pi, &x).unwrap();
    // truncated Neumann series Σ_{k≤K} γ^k (P^π)^k x
    let p = policy_transition(&mdp, &pi).unwrap();
    let k_max = ((1e-10f64).ln() / 0.85f64.ln()).ceil() as usize;
    let mut term = DVector::from_column_slice(&x);
    let mut sum = term.clone();
    for _ in 0..k_max {
        term = &p * term * 0.85;
        sum += &term;
    }
    assert!(sup_diff(&y, sum.as_slice()) < 1e-8);
    assert!(sup_norm(&y) <= sup_norm(&x) / 0.15 + 1e-12);
}

#[test]
fn optimal_q_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let mdp = random_mdp(&mut rng, 5, 3, 0.95);
        let q = optimal_q(&mdp).unwrap();
        let residual = bellman_optimal_apply(&mdp, &q).unwrap().sup_distance(&q);
        assert!(residual < 1e-11, "residual {residual}");
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #[test]
        fn resolvent_norm_bound(seed in 0u64..1000, xs in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = random_mdp(&mut rng, 4, 3, 0.9);
            let pi = Policy::new((0..4).map(|_| rng.gen_range(0..3)).collect());
            let y = resolvent_apply(&mdp, &pi, &xs).unwrap();
            prop_assert!(sup_norm(&y) <= sup_norm(&xs) / 0.1 * (1.0 + 1e-12));
        }

        #[test]
        fn gap_decays_at_most_twice_the_perturbation(
            base in proptest::collection::vec(-3.0f64..3.0, 15),
            noise in proptest::collection::vec(-1.0f64..1.0, 15),
            eps in 0.0f64..0.5,
        ) {
            let q = QTable::from_values(5, 3, base.clone()).unwrap();
            let q2 = QTable::from_values(
                5, 3, base.iter().zip(&noise).map(|(b, n)| b + eps * n).collect()).unwrap();
            let drift = q.sup_distance(&q2);
            let g1 = action_gap(&q).unwrap().global;
            let g2 = action_gap(&q2).unwrap().global;
            prop_assert!(g2 >= g1 - 2.0 * drift - 1e-12);
        }
    }
}
