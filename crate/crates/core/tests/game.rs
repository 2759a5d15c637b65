use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use stackelberg_core::game::{
    leader_cost, project_box_budget, pseudogradient, utility, FleetCap,
};
use stackelberg_core::{GameParams, JointAllocation, PriceVector};

fn reference() -> GameParams {
    GameParams::reference()
}

/// Feasible profile for the reference game from unit-cube draws.
fn feasible(u: &[f64], params: &GameParams) -> JointAllocation {
    let d = params.d;
    let data = u
        .iter()
        .enumerate()
        .map(|(k, &v)| v * params.m[k / d] / d as f64)
        .collect();
    JointAllocation::from_stacked(params.n, d, data).unwrap()
}

fn unit_profile() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, 6)
}

fn price() -> impl Strategy<Value = PriceVector> {
    (0.1..=5.0f64, 0.1..=5.0f64).prop_map(|(a, b)| PriceVector::new(vec![a, b]))
}

// U_i = sum_m x_im (W_m / (S_m + Delta_m) - pi_m), written out independently
fn utility_oracle(i: usize, x: &[f64], pi: &[f64], p: &GameParams) -> f64 {
    let mut u = 0.0;
    for m in 0..p.d {
        let s: f64 = (0..p.n).map(|j| x[j * p.d + m]).sum();
        let xim = x[i * p.d + m];
        u += xim * (p.w[m] / (s + p.delta[m]) - pi[m]);
    }
    u
}

/// Exact projection onto `{0 <= z <= cap, sum z <= budget}` by enumerating
/// every active set of the KKT system and keeping the closest feasible point.
fn projection_oracle(y: &[f64], caps: &[f64], budget: f64) -> Vec<f64> {
    let d = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let patterns = 3usize.pow(d as u32);
    for pat in 0..patterns {
        // 0: at zero, 1: free, 2: at cap
        let states: Vec<usize> = (0..d).map(|m| (pat / 3usize.pow(m as u32)) % 3).collect();
        for budget_active in [false, true] {
            let free: Vec<usize> = (0..d).filter(|&m| states[m] == 1).collect();
            let fixed: f64 = (0..d).filter(|&m| states[m] == 2).map(|m| caps[m]).sum();
            let lambda = if budget_active {
                if free.is_empty() {
                    continue;
                }
                (free.iter().map(|&m| y[m]).sum::<f64>() + fixed - budget) / free.len() as f64
            } else {
                0.0
            };
            if lambda < -1e-12 {
                continue;
            }
            let z: Vec<f64> = (0..d)
                .map(|m| match states[m] {
                    0 => 0.0,
                    1 => y[m] - lambda,
                    _ => caps[m],
                })
                .collect();
            let ok = z.iter().zip(caps).all(|(&v, &c)| v >= -1e-12 && v <= c + 1e-12)
                && z.iter().sum::<f64>() <= budget + 1e-12;
            if !ok {
                continue;
            }
            let dist: f64 = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                best = Some((dist, z));
            }
        }
    }
    best.unwrap().1
}

fn box_budget_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..=4).prop_flat_map(|d| {
        (
            prop::collection::vec(-3.0..6.0f64, d),
            prop::collection::vec(0.1..4.0f64, d),
            0.05..8.0f64,
        )
    })
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn pseudogradient_matches_central_differences_on_100_points() {
    let p = reference();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let u = unit_profile().new_tree(&mut runner).unwrap().current();
        let pi = price().new_tree(&mut runner).unwrap().current();
        let x = feasible(&u, &p);
        let v = pseudogradient(&x, &pi, &p);
        let h = 1e-6;
        for i in 0..p.n {
            for m in 0..p.d {
                let k = i * p.d + m;
                let mut plus = x.clone();
                plus.as_mut_slice()[k] += h;
                let mut minus = x.clone();
                minus.as_mut_slice()[k] -= h;
                let fd = -(utility(i, &plus, &pi, &p) - utility(i, &minus, &pi, &p)) / (2.0 * h);
                let rel = (v[k] - fd).abs() / v[k].abs().max(fd.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
        checked += 1;
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pseudogradient_is_strictly_monotone(u in unit_profile(), w in unit_profile(), pi in price()) {
        let p = reference();
        let x = feasible(&u, &p);
        let y = feasible(&w, &p);
        prop_assume!(x.distance(&y) > 1e-9);
        let vx = pseudogradient(&x, &pi, &p);
        let vy = pseudogradient(&y, &pi, &p);
        let inner: f64 = vx.iter().zip(&vy).zip(x.as_slice().iter().zip(y.as_slice()))
            .map(|((a, b), (c, d))| (a - b) * (c - d))
            .sum();
        prop_assert!(inner > 0.0, "<v(x)-v(y), x-y> = {inner:e}");
    }

    #[test]
    fn utility_matches_expanded_formula(u in unit_profile(), pi in price(), i in 0usize..3) {
        let p = reference();
        let x = feasible(&u, &p);
        let a = utility(i, &x, &pi, &p);
        let b = utility_oracle(i, x.as_slice(), pi.as_slice(), &p);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn utility_is_concave_in_own_block(u in unit_profile(), pi in price(), i in 0usize..3) {
        let p = reference();
        let x = feasible(&u, &p);
        let h = 1e-4;
        let f = |di: f64, dj: f64, a: usize, b: usize| {
            let mut z = x.clone();
            z.as_mut_slice()[i * p.d + a] += di;
            z.as_mut_slice()[i * p.d + b] += dj;
            utility(i, &z, &pi, &p)
        };
        let hess = DMatrix::from_fn(p.d, p.d, |a, b| {
            (f(h, h, a, b) - f(h, -h, a, b) - f(-h, h, a, b) + f(-h, -h, a, b)) / (4.0 * h * h)
        });
        let sym = (&hess + hess.transpose()) * 0.5;
        let top = SymmetricEigen::new(sym).eigenvalues.max();
        prop_assert!(top <= 1e-4, "largest Hessian eigenvalue {top:e}");
    }

    #[test]
    fn leader_cost_is_scale_invariant(u in unit_profile(), c in 0.01..100.0f64) {
        let p = reference();
        let x = feasible(&u, &p);
        prop_assume!(x.aggregate().iter().sum::<f64>() > 1e-6);
        let a = leader_cost(&x, &p).unwrap();
        let b = leader_cost(&x.scaled(c), &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn projection_matches_active_set_oracle((y, caps, budget) in box_budget_case()) {
        let z = project_box_budget(&y, &caps, budget);
        let oracle = projection_oracle(&y, &caps, budget);
        prop_assert!(norm(&z, &oracle) <= 1e-9, "{z:?} vs {oracle:?}");
    }

    #[test]
    fn projection_is_feasible_and_idempotent((y, caps, budget) in box_budget_case()) {
        let z = project_box_budget(&y, &caps, budget);
        for (&v, &c) in z.iter().zip(&caps) {
            prop_assert!((0.0..=c).contains(&v));
        }
        prop_assert!(z.iter().sum::<f64>() <= budget + 1e-12);
        let again = project_box_budget(&z, &caps, budget);
        prop_assert!(norm(&z, &again) <= 1e-12);
    }

    #[test]
    fn projection_is_non_expansive(
        (y, caps, budget) in box_budget_case(),
        shift in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        let y2: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let z1 = project_box_budget(&y, &caps, budget);
        let z2 = project_box_budget(&y2, &caps, budget);
        prop_assert!(norm(&z1, &z2) <= norm(&y, &y2) + 1e-12);
    }
}

#[test]
fn per_district_caps_bind_before_budget() {
    let mut p = reference();
    p.x_max = Some(FleetCap::PerDistrict(vec![0.5, 3.0]));
    p.validate().unwrap();
    let z = stackelberg_core::game::project_feasible(&[2.0, 0.2], 1, &p);
    assert_eq!(z.as_slice(), &[0.5, 0.2]);
}
