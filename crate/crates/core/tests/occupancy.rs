mod common;

use iddlab_core::gridworld::sample_next;
use iddlab_core::instances::{random_mdp, random_policy};
use iddlab_core::occupancy::solve_state_occupancy;
use iddlab_core::{derive_occupancies, inverse_dynamics};
use rand::Rng;

#[test]
fn solver_matches_power_series() {
    let mut rng = common::rng(11);
    for _ in 0..50 {
        let (ns, na) = (rng.random_range(1..=10), rng.random_range(1..=5));
        let mdp = random_mdp(&mut rng, ns, na, 0.9);
        let pi = random_policy(&mut rng, ns, na, 1.5);
        let rho = solve_state_occupancy(&mdp, &pi).unwrap();
        let series = common::power_series_visitation(&mdp, &pi);
        for (r, v) in rho.iter().zip(&series) {
            assert!((r - 0.1 * v).abs() < 1e-12, "{r} vs {}", 0.1 * v);
        }
    }
}

#[test]
fn solver_matches_monte_carlo_visits() {
    let mut rng = common::rng(12);
    let (ns, na, gamma) = (6, 3, 0.8);
    let mdp = random_mdp(&mut rng, ns, na, gamma);
    let pi = random_policy(&mut rng, ns, na, 1.0);
    let rho = solve_state_occupancy(&mdp, &pi).unwrap();

    // The state at a geometric stopping time with continuation gamma is
    // distributed as the normalised occupancy.
    let n = 200_000;
    let mut counts = vec![0usize; ns];
    for _ in 0..n {
        let mut s = iddlab_core::gridworld::sample_initial(&mdp, &mut rng);
        while rng.random::<f64>() < gamma {
            let a = pi.sample_with(s, rng.random());
            s = sample_next(&mdp, s, a, &mut rng);
        }
        counts[s] += 1;
    }
    for s in 0..ns {
        let p = counts[s] as f64 / n as f64;
        let se = (rho[s] * (1.0 - rho[s]) / n as f64).sqrt();
        assert!((p - rho[s]).abs() <= 5.0 * se + 1e-12, "state {s}: {p} vs {}", rho[s]);
    }
}

#[test]
fn derived_measures_are_consistent_marginals() {
    let mut rng = common::rng(13);
    for _ in 0..30 {
        let (ns, na) = (rng.random_range(2..=8), rng.random_range(1..=4));
        let mdp = random_mdp(&mut rng, ns, na, 0.9);
        let pi = random_policy(&mut rng, ns, na, 1.0);
        let occ = derive_occupancies(&mdp, &pi).unwrap();
        let rho = solve_state_occupancy(&mdp, &pi).unwrap();
        let mut total = 0.0;
        for s in 0..ns {
            let sa: f64 = (0..na).map(|a| occ.sa(s, a)).sum();
            let ss: f64 = (0..ns).map(|sn| occ.ss(s, sn)).sum();
            assert!((sa - rho[s]).abs() < 1e-14);
            assert!((ss - rho[s]).abs() < 1e-14);
            for a in 0..na {
                assert!((occ.sa(s, a) - rho[s] * pi.prob(s, a)).abs() < 1e-14);
                for sn in 0..ns {
                    let expect = rho[s] * pi.prob(s, a) * mdp.prob(s, a, sn);
                    assert!((occ.sas(s, a, sn) - expect).abs() < 1e-14);
                    total += occ.sas(s, a, sn);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);

        // Bayes inversion, computed from the raw tables.
        let inv = inverse_dynamics(&mdp, &pi, &occ).unwrap();
        for s in 0..ns {
            for sn in 0..ns {
                let den: f64 = (0..na).map(|b| pi.prob(s, b) * mdp.prob(s, b, sn)).sum();
                for a in 0..na {
                    let expect = pi.prob(s, a) * mdp.prob(s, a, sn) / den;
                    assert!((inv.get(s, sn, a).unwrap() - expect).abs() < 1e-12);
                }
            }
        }
    }
}
