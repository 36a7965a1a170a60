mod common;

use approx::assert_relative_eq;
use common::*;
use nalgebra::DVector;
use paretohil_core::gp::*;
use paretohil_core::moo::*;
use paretohil_core::pareto::*;
use paretohil_core::simuser::*;
use paretohil_core::sobol::sobol_points;
use paretohil_core::task::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rbf_closed_form() {
    assert_eq!(rbf_kernel(0.3, 0.3, 5.0).unwrap(), 1.0);
    assert_relative_eq!(rbf_kernel(0.0, 1.0, 5.0).unwrap(), 0.006_737_946_999_085_467, max_relative = 1e-14);
    assert!(rbf_kernel(f64::NAN, 0.0, 5.0).is_err());
    assert!(rbf_kernel(0.0, 1.0, 0.0).is_err());
}

#[test]
fn standardize_hand_example() {
    let y = standardize_scores(&[0.2, 0.8]).unwrap();
    assert_relative_eq!(y[0], -1.0, epsilon = 1e-12);
    assert_relative_eq!(y[1], 1.0, epsilon = 1e-12);
}

#[test]
fn two_point_posterior_matches_dense_solve() {
    let data = NumericDataset::from_pairs(vec![0.2, 0.8], vec![0.8, 0.2]).unwrap();
    assert_relative_eq!(data.y()[0], 1.0, epsilon = 1e-12);
    assert_relative_eq!(data.y()[1], -1.0, epsilon = 1e-12);
    for x_star in [0.2, 0.5, 0.9] {
        let p = num_posterior(&data, x_star, 0.1, KernelParams::default()).unwrap();
        let (m, v) = gp_oracle(&[0.2, 0.8], data.y(), x_star, 0.1 + 1e-8, 5.0);
        assert!((p.mean - m).abs() < 1e-10 && (p.variance - v).abs() < 1e-10);
    }
    let prior = num_posterior(&NumericDataset::new(), 0.4, 0.1, KernelParams::default()).unwrap();
    assert_eq!(prior, PosteriorGaussian::PRIOR);
}

#[test]
fn random_posteriors_match_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let data = NumericDataset::from_pairs(x.clone(), s).unwrap();
        let model = NumericModel::fit(&data, KernelParams::default(), 0.1).unwrap();
        let x_star: f64 = rng.random();
        let p = model.predict(x_star);
        let (m, v) = gp_oracle(&x, data.y(), x_star, 0.1 + 1e-8, 5.0);
        assert!((p.mean - m).abs() < 1e-8, "mean {} vs {}", p.mean, m);
        assert!((p.variance - v).abs() < 1e-8);
        assert!((0.0..=1.0).contains(&p.variance));
    }
}

#[test]
fn ordinal_and_pairwise_reference_values() {
    let lp = LikelihoodParams::default();
    let expect = phi(0.5) - phi(-0.5);
    assert!((ordinal_prob(0.0, OrdinalLabel::Moderate, &lp) - expect).abs() < 1e-15);
    assert!((ordinal_prob(0.0, OrdinalLabel::Moderate, &lp) - 0.382_924_922_548_026).abs() < 1e-12);
    assert!((pairwise_prob(0.7, 0.2, &lp) - 0.841_344_746_068_543).abs() < 1e-12);
    assert_eq!(pairwise_prob(0.3, 0.3, &lp), 0.5);
}

fn sample_dataset(rng: &mut ChaCha8Rng, n_items: usize) -> QualDataset {
    let mut dq = QualDataset::new();
    let mut prev: Option<f64> = None;
    for _ in 0..n_items {
        let x = (rng.random_range(0..=20) as f64) / 20.0;
        dq.push_ordinal(x, OrdinalLabel::from_index(rng.random_range(1..=3)).unwrap()).unwrap();
        if let Some(p) = prev {
            let pref = if rng.random_bool(0.5) { Preference::CurrentHarder } else { Preference::PreviousHarder };
            dq.push_pairwise(p, x, pref).unwrap();
        }
        prev = Some(x);
    }
    dq
}

#[test]
fn log_posterior_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lp = LikelihoodParams::default();
    for _ in 0..20 {
        let dq = sample_dataset(&mut rng, 5);
        let problem = QualProblem::from_dataset(&dq);
        let f: Vec<f64> = (0..problem.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = qual_log_posterior(&f, &dq, KernelParams::default(), lp).unwrap();
        let want = log_posterior_oracle(&f, &problem.inputs, &problem.ordinal, &problem.pairwise, 5.0, &lp);
        assert!((got - want).abs() < 1e-6 * (1.0 + want.abs()), "{got} vs {want}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let dq = sample_dataset(&mut rng, 6);
        let obj = QualObjective::new(&dq, KernelParams::default(), LikelihoodParams::default()).unwrap();
        let f = DVector::from_fn(obj.dim(), |_, _| rng.random_range(-1.5..1.5));
        let g = obj.gradient(&f);
        let h = 1e-5;
        for i in 0..obj.dim() {
            let mut up = f.clone();
            let mut dn = f.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-4, "coord {i}: analytic {} fd {fd}", g[i]);
        }
    }
}

#[test]
fn laplace_map_matches_grid_search() {
    let lp = LikelihoodParams::default();
    let mut dq = QualDataset::new();
    dq.push_ordinal(0.2, OrdinalLabel::Easy).unwrap();
    dq.push_ordinal(0.8, OrdinalLabel::Hard).unwrap();
    dq.push_pairwise(0.2, 0.8, Preference::CurrentHarder).unwrap();
    let fit = fit_laplace(&dq, KernelParams::default(), lp).unwrap();
    assert!(fit.converged);
    let problem = QualProblem::from_dataset(&dq);
    let oracle = grid_map(2, |f| log_posterior_oracle(f, &problem.inputs, &problem.ordinal, &problem.pairwise, 5.0, &lp));
    let a = fit.latent_at(0.2).unwrap();
    let b = fit.latent_at(0.8).unwrap();
    assert!(b > a);
    assert!((a - oracle[0]).abs() < 1e-2 && (b - oracle[1]).abs() < 1e-2, "{a},{b} vs {oracle:?}");
    assert!(qual_posterior(&fit, 0.8).unwrap().mean > 0.0);
    assert!(qual_posterior(&fit, 0.2).unwrap().mean < 0.0);
}

#[test]
fn empty_feedback_is_prior() {
    let fit = fit_laplace(&QualDataset::new(), KernelParams::default(), LikelihoodParams::default()).unwrap();
    assert_eq!(fit.f_hat.len(), 0);
    assert_eq!(qual_posterior(&fit, 0.3).unwrap(), PosteriorGaussian::PRIOR);
}

#[test]
fn sobol_prefix() {
    assert_eq!(sobol_points(1), vec![0.5]);
    assert_eq!(sobol_points(3), vec![0.5, 0.75, 0.25]);
    assert_eq!(sobol_points(5), sobol_points(5));
}

#[test]
fn dominance_filter_matches_quadratic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.random_range(1..100);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| ((rng.random_range(0..10) as f64) / 10.0, (rng.random_range(0..10) as f64) / 10.0))
            .collect();
        assert_eq!(non_dominated_indices(&pts), brute_non_dominated(&pts));
    }
}

#[test]
fn surrogate_set_matches_quadratic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = CandidateGrid::default();
    let cfg = CharacterizationConfig::default();
    for _ in 0..10 {
        let mut num = NumericDataset::new();
        let mut dq = QualDataset::new();
        for i in 0..5 {
            let x: f64 = rng.random();
            num.push(x, rng.random()).unwrap();
            dq.push_ordinal(x, OrdinalLabel::from_index(rng.random_range(1..=3)).unwrap()).unwrap();
            if i > 0 {
                dq.push_pairwise(num.x()[i - 1], x, Preference::CurrentHarder).unwrap();
            }
        }
        let m = FittedModels::fit(&num, &dq, &cfg).unwrap();
        let set = surrogate_pareto_set(&grid, &m.num, &m.qual, &cfg.acquisition);
        let objs: Vec<(f64, f64)> =
            grid.points().iter().map(|&x| (ucb(m.num.predict(x), 2.0), ucb(m.qual.predict(x), 1.0))).collect();
        let want: Vec<f64> = brute_non_dominated(&objs).into_iter().map(|i| grid.points()[i]).collect();
        assert_eq!(set, want);
        assert!(!set.is_empty());

        let front = extract_front(&m.num, &m.qual, &grid);
        let all: Vec<(f64, f64)> = front.all_points.iter().map(|p| (p.expected_score, p.expected_challenge)).collect();
        let want: Vec<f64> = brute_non_dominated(&all).into_iter().map(|i| grid.points()[i]).collect();
        assert_eq!(front.front_assistance(), want);
    }
}

#[test]
fn hausdorff_matches_quadratic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shared = FrontScaling::Shared { score: 1.0, challenge: 1.0 };
    for _ in 0..50 {
        let mk = |rng: &mut ChaCha8Rng| -> ParetoFront {
            let n = rng.random_range(1..20);
            let pts = (0..n)
                .map(|i| ObjectivePoint { assistance: i as f64 / 20.0, expected_score: rng.random(), expected_challenge: rng.random() })
                .collect();
            ParetoFront::from_points(pts, (-0.5, 0.5))
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let pa: Vec<(f64, f64)> = a.front.iter().map(|p| (p.expected_score, p.expected_challenge)).collect();
        let pb: Vec<(f64, f64)> = b.front.iter().map(|p| (p.expected_score, p.expected_challenge)).collect();
        let got = front_hausdorff(&a, &b, shared).unwrap();
        assert!((got - brute_hausdorff(&pa, &pb)).abs() < 1e-15);
    }
}

#[test]
fn aggregate_is_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
    let parts: Vec<ParticipantCurves> = (0..7)
        .map(|_| ParticipantCurves {
            score: grid.iter().map(|_| rng.random()).collect(),
            challenge: grid.iter().map(|_| rng.random_range(-2.0..2.0)).collect(),
        })
        .collect();
    let g = aggregate_curves(&grid, parts.clone()).unwrap();
    for j in 0..grid.len() {
        let m: f64 = parts.iter().map(|p| p.score[j]).sum::<f64>() / 7.0;
        assert!((g.mean_score[j] - m).abs() < 1e-15);
    }
    let one = aggregate_curves(&grid, parts[..1].to_vec()).unwrap();
    assert_eq!(one.mean_score, parts[0].score);
}

#[test]
fn care_matches_hamiltonian_eigenvectors() {
    for p in [PlantParams::default(), PlantParams { r: 10.0, ..Default::default() }, PlantParams { pole_mass: 0.5, ..Default::default() }] {
        let (a, b) = linearize(&p);
        let mut am = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                am[i][j] = a[(i, j)];
            }
        }
        let bv = [b[0], b[1], b[2], b[3]];
        let x = care_eigen_oracle(&am, &bv, &p.q_diag, p.r);
        let want: Vec<f64> = (0..4).map(|j| (0..4).map(|i| bv[i] * x[i][j]).sum::<f64>() / p.r).collect();
        let got = lqr_gains(&p).unwrap();
        for j in 0..4 {
            assert!((got.0[j] - want[j]).abs() < 1e-6 * (1.0 + want[j].abs()), "gain {j}: {} vs {}", got.0[j], want[j]);
        }
    }
}

#[test]
fn default_gains_are_pinned() {
    let g = lqr_gains(&PlantParams::default()).unwrap();
    let want = [-10.0, -12.71, -79.84, -18.96];
    for (a, b) in g.0.iter().zip(want) {
        assert!((a - b).abs() < 0.01, "{:?}", g.0);
    }
}

#[test]
fn rk4_step_matches_fine_reference() {
    let p = PlantParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let s = TaskState {
            x: rng.random_range(-0.8..0.8),
            x_dot: rng.random_range(-1.0..1.0),
            theta: rng.random_range(-0.8..0.8),
            theta_dot: rng.random_range(-2.0..2.0),
            t: 0.0,
        };
        let force = rng.random_range(-20.0..20.0);
        let got = step_with_force(&s, force, &p).unwrap();
        let want = reference_step(s.as_array(), force, &p, p.dt, 100);
        for (g, w) in got.as_array().iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "{g} vs {w}");
        }
    }
}

#[test]
fn energy_drift_without_damping() {
    let p = PlantParams { cart_damping: 0.0, ..Default::default() };
    let mut s = TaskState { theta: 0.3, ..TaskState::upright() };
    let e0 = mechanical_energy(&s, &p);
    for _ in 0..1000 {
        s = step_with_force(&s, 0.0, &p).unwrap();
    }
    let drift = ((mechanical_energy(&s, &p) - e0) / e0).abs();
    assert!(drift < 1e-3, "relative drift {drift}");
}

#[test]
fn ou_statistics() {
    let cfg = DisturbanceConfig { clamp: 1e9, ..Default::default() };
    let dt = 0.01;
    let mut ou = OuProcess::new(&cfg, dt, 17);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| ou.sample()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    assert!((sd / cfg.stationary_std() - 1.0).abs() < 0.1);
    // effective sample size for the standard error of an AR(1) mean
    let rho = (-cfg.rate * dt).exp();
    let se = sd * ((1.0 + rho) / (1.0 - rho) / n as f64).sqrt();
    assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    // lag at which the autocorrelation first drops below 1/e
    let acf = |lag: usize| {
        xs.iter().zip(&xs[lag..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / ((n - lag) as f64 * var)
    };
    let lag = (1..1000).find(|&l| acf(l) < (-1.0f64).exp()).unwrap();
    let tau = lag as f64 * dt;
    assert!((tau * cfg.rate - 1.0).abs() < 0.2, "tau {tau}");
}

#[test]
fn zero_input_assist_extremes() {
    let env = TaskEnv::default();
    for seed in 0..10 {
        let full = run_trial(&mut ZeroPolicy, 1.0, seed, env.gains, &env.plant, &env.disturbance, false).unwrap();
        assert_eq!(full.score, 1.0);
        let none = run_trial(&mut ZeroPolicy, 0.0, seed, env.gains, &env.plant, &env.disturbance, false).unwrap();
        assert_eq!(none.reason, FailureReason::PoleFell);
        assert!(none.survival_time < 5.0);
    }
}

#[test]
fn zero_input_mean_score_monotone_in_assist() {
    let env = TaskEnv::default();
    let mut prev = -1.0;
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mean: f64 = (0..50)
            .map(|s| run_trial(&mut ZeroPolicy, a, s, env.gains, &env.plant, &env.disturbance, false).unwrap().score)
            .sum::<f64>()
            / 50.0;
        assert!(mean >= prev, "assist {a}: {mean} < {prev}");
        prev = mean;
    }
}

#[test]
fn trials_replay_bit_for_bit() {
    let env = TaskEnv::default();
    let a = run_trial(&mut ZeroPolicy, 0.3, 77, env.gains, &env.plant, &env.disturbance, true).unwrap();
    let b = run_trial(&mut ZeroPolicy, 0.3, 77, env.gains, &env.plant, &env.disturbance, true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noiseless_full_skill_matches_lqr_player() {
    let env = TaskEnv::default();
    let profile = SimUserProfile { skill: 1.0, noise_std: 0.0, delay_steps: 0, ..Default::default() };
    for s in 0..5u64 {
        let seeds = [s * 3, s * 3 + 1, s * 3 + 2];
        let sim = sim_play(&profile, 0.0, seeds, &env).unwrap();
        let lqr = best_of_three(
            |_, _| {
                let g = env.gains;
                move |st: &TaskState| Ok::<f64, String>(g.control(st))
            },
            0.0,
            seeds,
            env.gains,
            &env.plant,
            &env.disturbance,
        )
        .unwrap();
        assert!((sim.best().score - lqr.best().score).abs() <= 0.05);
    }
}

#[test]
fn sim_score_mean_non_decreasing_in_assist() {
    let env = TaskEnv::default();
    let profile = SimUserProfile::default();
    let mut prev = -1.0;
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mean: f64 = (0..30u64)
            .map(|s| sim_play(&profile, a, [s, s + 100, s + 200], &env).unwrap().best().score)
            .sum::<f64>()
            / 30.0;
        assert!(mean >= prev - 1e-12, "assist {a}: {mean} < {prev}");
        prev = mean;
    }
}

#[test]
fn sim_label_frequencies_match_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for offset in [-1.0, 0.0, 0.7] {
        let profile = SimUserProfile { latent: LatentCurve { offset, slope: 0.0, clip: 3.0 }, ..Default::default() };
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sim_ordinal(&profile, 0.5, &mut rng).index() - 1] += 1;
        }
        for label in OrdinalLabel::ALL {
            let freq = counts[label.index() - 1] as f64 / 10_000.0;
            assert!((freq - ordinal_prob(offset, label, &profile.likelihood)).abs() < 0.02);
        }
    }
    let flat = SimUserProfile { latent: LatentCurve { offset: 0.0, slope: 0.0, clip: 3.0 }, ..Default::default() };
    let harder = (0..10_000).filter(|_| sim_pairwise(&flat, 0.2, 0.8, &mut rng) == Preference::CurrentHarder).count();
    assert!((harder as f64 / 10_000.0 - 0.5).abs() < 0.02);
}

#[test]
fn true_front_is_seed_deterministic() {
    let env = TaskEnv::default();
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let profile = SimUserProfile::default();
    let a = true_front(&profile, &grid, 30, 1, &env).unwrap();
    let b = true_front(&profile, &grid, 30, 1, &env).unwrap();
    assert_eq!(a, b);
    assert!(a.all_points.iter().all(|p| p.expected_challenge == profile.g(p.assistance)));
}

#[test]
fn bootstrap_is_deterministic_and_brackets_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let grid: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
    let pre: Vec<Vec<f64>> = (0..15).map(|_| grid.iter().map(|_| rng.random::<f64>()).collect()).collect();
    let post: Vec<Vec<f64>> = pre.iter().map(|c| c.iter().map(|v| v + rng.random_range(-0.1..0.3)).collect()).collect();
    let a = bootstrap_change_ci(&grid, &pre, &post, 1000, 0.95, 5).unwrap();
    let b = bootstrap_change_ci(&grid, &pre, &post, 1000, 0.95, 5).unwrap();
    assert_eq!(a, b);
    let inside = a.intervals.iter().filter(|iv| iv.lo <= iv.mean_change && iv.mean_change <= iv.hi).count();
    assert!(inside as f64 >= 0.99 * grid.len() as f64);
}
