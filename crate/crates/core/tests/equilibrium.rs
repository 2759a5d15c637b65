use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stackelberg_core::equilibrium::{
    approx_ne, best_response, best_response_iteration, certify_epsilon_nash, ne_oracle,
    ne_residual, Game, StepSchedule, StoppingRule,
};
use stackelberg_core::game::utility;
use stackelberg_core::{GameParams, JointAllocation, PriceVector, RideHailGame};

fn reference_game() -> RideHailGame {
    RideHailGame::new(GameParams::reference()).unwrap()
}

fn random_price(rng: &mut ChaCha8Rng) -> PriceVector {
    PriceVector::new(vec![rng.random_range(0.1..5.0), rng.random_range(0.1..5.0)])
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[test]
fn squared_error_decays_at_least_like_one_over_k() {
    let game = reference_game();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let pi = random_price(&mut rng);
        let star = ne_oracle(&game, &pi).unwrap().x_star;
        let ks = [10usize, 100, 1_000, 10_000];
        let (lk, le): (Vec<f64>, Vec<f64>) = ks
            .iter()
            .map(|&k| {
                let x = approx_ne(&game, &pi, StoppingRule::MaxIters(k), StepSchedule::default())
                    .unwrap()
                    .x_star;
                ((k as f64).ln(), x.distance(&star).powi(2).ln())
            })
            .unzip();
        let s = slope(&lk, &le);
        assert!(s <= -0.9, "slope {s} at {:?}", pi.as_slice());
    }
}

#[test]
fn gradient_and_best_response_equilibria_agree_on_20_prices() {
    let game = reference_game();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let pi = random_price(&mut rng);
        let a = ne_oracle(&game, &pi).unwrap();
        let b = best_response_iteration(&game, &pi, 1e-9, 10_000).unwrap();
        let gap = a.x_star.distance(&b.x_star);
        assert!(gap <= 1e-6, "gap {gap:e} at {:?}", pi.as_slice());
    }
}

#[test]
fn oracle_is_a_fixed_point_of_the_projected_map() {
    let game = reference_game();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let pi = random_price(&mut rng);
        let r = ne_oracle(&game, &pi).unwrap();
        assert!(r.converged);
        assert!(ne_residual(&game, &r.x_star, &pi) <= 1e-10);
    }
}

#[test]
fn residual_at_powers_of_two_does_not_grow() {
    let game = reference_game();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let pi = random_price(&mut rng);
        let residuals: Vec<f64> = (0..=14)
            .map(|j| {
                let x = approx_ne(&game, &pi, StoppingRule::MaxIters(1 << j), StepSchedule::default())
                    .unwrap()
                    .x_star;
                ne_residual(&game, &x, &pi)
            })
            .collect();
        for w in residuals.windows(2) {
            assert!(w[1] <= 1.05 * w[0], "{residuals:?}");
        }
    }
}

#[test]
fn relabelling_followers_relabels_equilibrium_blocks() {
    let params = GameParams::reference();
    let perm = [2usize, 0, 1];
    let mut permuted = params.clone();
    permuted.m = perm.iter().map(|&k| params.m[k]).collect();
    let a = RideHailGame::new(params).unwrap();
    let b = RideHailGame::new(permuted).unwrap();
    let pi = PriceVector::new(vec![1.3, 2.7]);
    let xa = ne_oracle(&a, &pi).unwrap().x_star;
    let xb = ne_oracle(&b, &pi).unwrap().x_star;
    for (slot, &k) in perm.iter().enumerate() {
        for (u, v) in xb.block(slot).iter().zip(xa.block(k)) {
            assert!((u - v).abs() <= 1e-8);
        }
    }
}

#[test]
fn best_response_matches_closed_form_with_opponents() {
    // one district: x_i = sqrt(W (S_-i + Delta) / pi) - (S_-i + Delta), clipped to [0, M_i]
    let params = GameParams {
        n: 2,
        d: 1,
        w: vec![30.0],
        delta: vec![0.1],
        m: vec![10.0, 10.0],
        x_max: None,
        pi_min: 0.1,
        pi_max: 5.0,
        xi_star: vec![1.0],
    };
    let game = RideHailGame::new(params).unwrap();
    let pi = PriceVector::new(vec![2.0]);
    for other in [0.0, 0.5, 1.5, 4.0] {
        let x = JointAllocation::from_stacked(2, 1, vec![1.0, other]).unwrap();
        let br = best_response(&game, 0, &x, &pi).unwrap();
        let c = other + 0.1;
        let expected = ((30.0 * c / 2.0f64).sqrt() - c).clamp(0.0, 10.0);
        assert!((br.0[0] - expected).abs() <= 1e-8, "{} vs {expected}", br.0[0]);
    }
}

#[test]
fn perturbing_a_block_opens_a_gap_that_closes_with_the_perturbation() {
    let game = reference_game();
    let pi = PriceVector::new(vec![1.0, 2.0]);
    let star = ne_oracle(&game, &pi).unwrap().x_star;
    let gap_at = |delta: f64| {
        let mut x = star.clone();
        let b = x.block_mut(2);
        b[0] -= delta;
        b[1] += delta;
        certify_epsilon_nash(&game, &x, &pi).unwrap()
    };
    assert!(certify_epsilon_nash(&game, &star, &pi).unwrap() <= 1e-6);
    let gaps: Vec<f64> = [0.4, 0.1, 1e-2, 1e-3].iter().map(|&d| gap_at(d)).collect();
    assert!(gaps.iter().all(|&g| g > 0.0), "{gaps:?}");
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] <= 1e-4);
}

/// Largest `|U_i(x) - U_i(y)| / ||x - y||` over random feasible pairs.
fn sampled_lipschitz(game: &RideHailGame, pi: &PriceVector, rng: &mut ChaCha8Rng) -> f64 {
    let p = game.params();
    let draw = |rng: &mut ChaCha8Rng| {
        let data = (0..p.n * p.d)
            .map(|k| rng.random::<f64>() * p.m[k / p.d] / p.d as f64)
            .collect();
        JointAllocation::from_stacked(p.n, p.d, data).unwrap()
    };
    let mut l = 0.0f64;
    for _ in 0..5_000 {
        let x = draw(rng);
        let y = draw(rng);
        let dist = x.distance(&y);
        if dist < 1e-9 {
            continue;
        }
        for i in 0..p.n {
            let du = (utility(i, &x, pi, p) - utility(i, &y, pi, p)).abs();
            l = l.max(du / dist);
        }
    }
    l
}

#[test]
fn loose_inner_iterate_gap_is_within_lipschitz_bound() {
    let game = reference_game();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let pi = random_price(&mut rng);
        let star = ne_oracle(&game, &pi).unwrap().x_star;
        let x = approx_ne(
            &game,
            &pi,
            StoppingRule::DistanceToOracle {
                eps: 0.5,
                oracle: &star,
                max_iters: 1_000_000,
            },
            StepSchedule::default(),
        )
        .unwrap()
        .x_star;
        let lu = sampled_lipschitz(&game, &pi, &mut rng);
        let eps = certify_epsilon_nash(&game, &x, &pi).unwrap();
        assert!(eps <= lu * 0.5, "eps {eps} vs bound {}", lu * 0.5);
    }
}

#[test]
fn identical_followers_share_an_equilibrium_block() {
    let mut params = GameParams::reference();
    params.m = vec![3.0, 3.0, 6.0];
    let game = RideHailGame::new(params).unwrap();
    let x = ne_oracle(&game, &PriceVector::new(vec![0.7, 3.1])).unwrap().x_star;
    let diff: f64 = x.block(0).iter().zip(x.block(1)).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff <= 1e-8);
    assert_eq!(game.followers(), 3);
}
