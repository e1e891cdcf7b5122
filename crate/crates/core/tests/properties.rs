use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use specsense::completion::{
    decode_occupancy, decode_params, fpca_complete, CompletedMatrix, FpcaParams,
};
use specsense::harness::{
    compute_metrics, results_csv, run_experiment, Decoder, DecoderChoice, ExperimentConfig,
};
use specsense::jointsparse::{independence_recovery, joint_recover, noise_radius, SolverParams};
use specsense::linalg::{nuclear_norm, rank, shrink, svd, truncated_svd, Mat};
use specsense::scenario::{
    clean_reports, erase, gen_filters, gen_gain, gen_scenario, sense, FilterLaw, MeasurementSet,
    Noise, OccupancyVector, ScenarioConfig,
};

fn gaussian(p: usize, m: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(p, m, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    })
}

fn low_rank(p: usize, m: usize, r: usize, seed: u64) -> Mat<f64> {
    gaussian(p, r, seed).matmul(&gaussian(r, m, seed ^ 0x5555))
}

/// Scenario, shared filters and fully observed noiseless reports.
fn instance(
    n: usize,
    m: usize,
    s: usize,
    p: usize,
    seed: u64,
) -> (OccupancyVector, specsense::FilterBank, MeasurementSet<f64>) {
    let cfg = ScenarioConfig {
        n,
        m,
        s,
        ..ScenarioConfig::default()
    };
    let scen = gen_scenario(&cfg, seed).unwrap();
    let gains = gen_gain(&scen).unwrap();
    let f = gen_filters(p, n, m, true, FilterLaw::Gaussian, seed).unwrap();
    let ms = sense(&f, &scen.occupancy(), &gains, Noise::None, seed).unwrap();
    (scen.occupancy(), f, ms)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn shrink_is_nonexpansive(p in 1usize..8, m in 1usize..8, seed in any::<u64>(), alpha in 0.0f64..3.0) {
        let a = gaussian(p, m, seed);
        let b = gaussian(p, m, seed.wrapping_add(1));
        let lhs = shrink(&a, alpha).unwrap().sub(&shrink(&b, alpha).unwrap()).frobenius_norm();
        prop_assert!(lhs <= a.sub(&b).frobenius_norm() * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn shrink_annihilates_above_top_singular_value(p in 1usize..8, m in 1usize..8, seed in any::<u64>(), extra in 0.0f64..2.0) {
        let a = gaussian(p, m, seed);
        let s1 = svd(&a).unwrap().sigma[0];
        prop_assert_eq!(shrink(&a, s1 + extra).unwrap(), Mat::zeros(p, m));
    }

    #[test]
    fn shrink_rank_is_monotone_in_threshold(p in 2usize..9, m in 2usize..9, seed in any::<u64>()) {
        let a = gaussian(p, m, seed);
        let s1 = svd(&a).unwrap().sigma[0];
        let mut last = usize::MAX;
        for k in 0..=40 {
            let alpha = s1 * k as f64 / 40.0;
            let r = rank(&shrink(&a, alpha).unwrap()).unwrap();
            prop_assert!(r <= last, "rank rose from {last} to {r} at alpha {alpha}");
            last = r;
        }
    }

    #[test]
    fn full_budget_truncated_svd_matches_svd(p in 1usize..10, m in 1usize..10, seed in any::<u64>()) {
        let a = gaussian(p, m, seed);
        let full = svd(&a).unwrap();
        let trunc = truncated_svd(&a, p.min(m)).unwrap();
        for (x, y) in full.sigma.iter().zip(&trunc.sigma) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x), "{x} vs {y}");
        }
    }

    #[test]
    fn confusion_table_covers_every_channel(states in prop::collection::vec(any::<(bool, bool)>(), 1..60)) {
        let truth = OccupancyVector::from_states(states.iter().map(|s| s.0).collect());
        let est = OccupancyVector::from_states(states.iter().map(|s| s.1).collect());
        let o = compute_metrics(&truth, &est).unwrap();
        prop_assert_eq!(o.n_hit + o.n_miss + o.n_false + o.n_correct, states.len() as u64);
        for rate in [o.pod, o.far, o.mdr] {
            prop_assert!((0.0..=1.0).contains(&rate));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noiseless_reports_factor_exactly(s in 0usize..5, p in 2usize..12, seed in any::<u64>()) {
        let (occ, f, ms) = instance(35, 20, s, p, seed);
        let cfg = ScenarioConfig { n: 35, m: 20, s, ..ScenarioConfig::default() };
        let gains = gen_gain(&gen_scenario(&cfg, seed).unwrap()).unwrap();
        // F diag(R) G^T assembled independently of the per-radio path.
        let r = Mat::diag(&occ.states().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>());
        let direct = f.shared_bank().unwrap().matmul(&r).matmul(&gains.g.transpose());
        let m = ms.zero_filled();
        prop_assert!(m.sub(&direct).frobenius_norm() <= 1e-12 * (1e-300 + direct.frobenius_norm()));
        prop_assert!(rank(m).unwrap() <= s);
        if s <= p {
            prop_assert_eq!(rank(m).unwrap(), s);
        }
    }

    #[test]
    fn generation_is_a_function_of_the_seed(s in 0usize..5, seed in any::<u64>(), fading in 0usize..3) {
        let fading = [
            specsense::scenario::Fading::Awgn,
            specsense::scenario::Fading::Rayleigh,
            specsense::scenario::Fading::LogNormal { sigma_db: 8.0 },
        ][fading];
        let cfg = ScenarioConfig { n: 35, m: 20, s, fading, ..ScenarioConfig::default() };
        let once = || {
            let scen = gen_scenario(&cfg, seed).unwrap();
            let gains = gen_gain(&scen).unwrap();
            let f = gen_filters(6, 35, 20, false, FilterLaw::Bernoulli, seed).unwrap();
            let ms = sense(&f, &scen.occupancy(), &gains, Noise::SnrDb(20.0), seed).unwrap();
            erase(&ms, 0.7, seed).unwrap()
        };
        let (a, b) = (once(), once());
        prop_assert_eq!(a.mask(), b.mask());
        let bits = |ms: &MeasurementSet<f64>| ms.zero_filled().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn independence_recovery_meets_its_constraints(s in 1usize..4, p in 4usize..14, seed in any::<u64>(), noisy in any::<bool>()) {
        let (occ, f, ms) = instance(35, 6, s, p, seed);
        let fb = f.shared_bank().unwrap();
        let sigma = if noisy { 1e-3 * ms.zero_filled().max_abs() } else { 0.0 };
        let in_t: Vec<bool> = (0..35).map(|i| i % 3 != 0 || !occ.is_occupied(i)).collect();
        for j in 0..ms.m() {
            let b: Vec<f64> = ms.zero_filled().col(j).to_vec();
            let x = independence_recovery(fb, &b, &in_t, sigma).unwrap();
            prop_assert!(x.iter().all(|v| *v >= 0.0));
            let r: f64 = fb.mul_vec(&x).iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let allowed = if noisy { noise_radius(sigma, p) } else { 0.0 };
            prop_assert!(r <= allowed + 1e-8 * (1.0 + bn), "radio {j}: residual {r}");
        }
    }

    #[test]
    fn known_support_gives_exact_columns_and_zero_tail(s in 1usize..5, extra in 1usize..6, seed in any::<u64>()) {
        let p = s + extra;
        let (occ, f, ms) = instance(35, 8, s, p, seed);
        let fb = f.shared_bank().unwrap();
        let cfg = ScenarioConfig { n: 35, m: 8, s, ..ScenarioConfig::default() };
        let gains = gen_gain(&gen_scenario(&cfg, seed).unwrap()).unwrap();
        let in_t: Vec<bool> = (0..35).map(|i| !occ.is_occupied(i)).collect();
        for j in 0..8 {
            let x = independence_recovery(fb, ms.zero_filled().col(j), &in_t, 0.0).unwrap();
            for i in 0..35 {
                let want = if occ.is_occupied(i) { gains.g[(j, i)] } else { 0.0 };
                prop_assert!((x[i] - want).abs() <= 1e-6 * gains.g.max_abs(), "radio {j} channel {i}");
                if in_t[i] {
                    prop_assert_eq!(x[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn outer_loop_shrinks_the_working_set(s in 1usize..6, seed in any::<u64>(), rate in 0.2f64..0.6) {
        let n = 35;
        let p = ((rate * n as f64).ceil() as usize).clamp(2, n);
        let (_, f, ms) = instance(n, 20, s, p, seed);
        let ms = erase(&ms, 0.9, seed).unwrap();
        let out = joint_recover(&ms, &f, &SolverParams::default()).unwrap();
        prop_assert!(out.iterations() <= n);
        for w in out.trace.windows(2) {
            prop_assert!(w[1].t_size < w[0].t_size, "T did not shrink: {:?}", (w[0].t_size, w[1].t_size));
        }
    }

    #[test]
    fn joint_recovery_is_scale_covariant(s in 1usize..4, seed in any::<u64>(), c in 0.01f64..100.0) {
        let (_, f, ms) = instance(35, 20, s, 14, seed);
        let ms = erase(&ms, 0.9, seed).unwrap();
        let scaled = MeasurementSet::with_mask(ms.zero_filled().scaled(c), ms.mask().to_vec()).unwrap();
        let params = SolverParams::default();
        let a = joint_recover(&ms, &f, &params).unwrap();
        let b = joint_recover(&scaled, &f, &params).unwrap();
        prop_assert_eq!(&a.occupancy, &b.occupancy);
        let diff = a.x.x.scaled(c).sub(&b.x.x).frobenius_norm();
        prop_assert!(diff <= 1e-6 * (1e-300 + b.x.x.frobenius_norm()), "relative {}", diff / b.x.x.frobenius_norm());
    }

    #[test]
    fn fpca_objective_never_rises_within_a_stage(p in 3usize..9, m in 3usize..12, r in 1usize..3, seed in any::<u64>()) {
        let truth = low_rank(p, m, r, seed);
        let full = MeasurementSet::fully_observed(truth);
        let obs = erase(&full, 0.7, seed).unwrap();
        let params = FpcaParams { trace: true, ..FpcaParams::default() };
        let out = fpca_complete(&obs, &params).unwrap();
        for w in out.trace.windows(2) {
            if w[0].stage == w[1].stage {
                let slack = 1e-9 * (1.0 + w[0].objective.abs());
                prop_assert!(w[1].objective <= w[0].objective + slack,
                    "stage {} objective rose {} -> {}", w[0].stage, w[0].objective, w[1].objective);
            }
        }
    }
}

#[test]
fn fpca_fixed_point_is_stationary() {
    // The zero matrix is a fixed point for all-zero observations: P M = P M^E
    // and shrink(0) = 0, so no iteration moves it.
    let obs = MeasurementSet::with_mask(
        Mat::<f64>::zeros(5, 6),
        (0..30).map(|k| k % 4 != 0).collect(),
    )
    .unwrap();
    let out = fpca_complete(
        &obs,
        &FpcaParams {
            trace: true,
            ..FpcaParams::default()
        },
    )
    .unwrap();
    assert_eq!(out.m_hat, Mat::zeros(5, 6));
    assert!(out.trace.iter().all(|s| s.rel_change == 0.0));
}

#[test]
fn completion_fits_observations_with_no_more_nuclear_norm_than_truth() {
    // The completed matrix fits the observations at least as well as the
    // tolerance allows and has no larger nuclear norm than the truth (which is
    // itself a feasible completion).
    for seed in 0..10 {
        let truth = low_rank(6, 8, 1, 700 + seed);
        let obs = erase(&MeasurementSet::fully_observed(truth.clone()), 0.6, seed).unwrap();
        let out = fpca_complete(&obs, &FpcaParams::default()).unwrap();
        let fit = out.final_residual / truth.frobenius_norm();
        assert!(fit <= 1e-4, "seed {seed}: residual {fit}");
        let nn_hat = nuclear_norm(&out.m_hat).unwrap();
        let nn_truth = nuclear_norm(&truth).unwrap();
        assert!(
            nn_hat <= nn_truth * (1.0 + 1e-4),
            "seed {seed}: {nn_hat} > {nn_truth}"
        );
    }
}

#[test]
fn decode_recovers_occupancy_from_exact_reports() {
    // Noiseless exact report matrices with p = 2s + 1 filters.
    let params = decode_params::<f64>();
    let mut counts = Vec::new();
    for s in 1..=4usize {
        let p = 2 * s + 1;
        let mut exact = 0;
        for trial in 0..200u64 {
            let seed = 10_000 * s as u64 + trial;
            let (occ, f, ms) = instance(35, 20, s, p, seed);
            let completed = CompletedMatrix::from_matrix(ms.zero_filled().clone());
            let out = decode_occupancy(&completed, &f, &params).unwrap();
            if out.occupancy == occ {
                exact += 1;
            }
        }
        counts.push((s, p, exact));
    }
    // At least 99% of 200 trials per sparsity level.
    assert!(
        counts.iter().all(|&(_, _, k)| k >= 198),
        "(s, p, exact of 200): {counts:?}"
    );
}

#[test]
fn per_column_solves_do_not_depend_on_thread_count() {
    let (_, f, ms) = instance(35, 20, 3, 12, 42);
    let ms = erase(&ms, 0.85, 42).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| joint_recover(&ms, &f, &SolverParams::default()).unwrap())
    };
    let one = run(1);
    for threads in [2, 4] {
        let other = run(threads);
        assert_eq!(one.occupancy, other.occupancy);
        let bits = |x: &Mat<f64>| x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one.x.x), bits(&other.x.x));
    }
}

fn small_grid(decoder: DecoderChoice) -> ExperimentConfig {
    ExperimentConfig {
        s_list: vec![1, 3],
        rate_list: vec![0.3, 0.5],
        trials: 6,
        decoder,
        seed: 99,
        threads: 1,
        ..ExperimentConfig::default()
    }
}

#[test]
fn decoder_choice_does_not_change_generated_data() {
    let both = run_experiment(&small_grid(DecoderChoice::Both)).unwrap();
    for (choice, decoder) in [
        (DecoderChoice::JointSparse, Decoder::JointSparse),
        (DecoderChoice::Completion, Decoder::Completion),
    ] {
        let alone = run_experiment(&small_grid(choice)).unwrap();
        let from_both: Vec<_> = both
            .records
            .iter()
            .filter(|r| r.decoder == decoder)
            .cloned()
            .collect();
        assert_eq!(results_csv(&alone.records), results_csv(&from_both));
    }
}

#[test]
fn pod_rises_with_sampling_rate() {
    let cfg = ExperimentConfig {
        s_list: vec![3],
        rate_list: vec![0.2, 0.3, 0.4, 0.5],
        trials: 40,
        decoder: DecoderChoice::JointSparse,
        seed: 5,
        threads: 1,
        ..ExperimentConfig::default()
    };
    let res = run_experiment(&cfg).unwrap();
    let pods: Vec<_> = res.summaries.iter().map(|s| s.pod).collect();
    for w in pods.windows(2) {
        assert!(
            w[1].mean + w[1].std_err.max(w[0].std_err) >= w[0].mean,
            "POD fell from {:.3} to {:.3}",
            w[0].mean,
            w[1].mean
        );
    }
}

#[test]
fn clean_reports_agree_with_sense() {
    let (occ, f, ms) = instance(20, 5, 2, 6, 3);
    let cfg = ScenarioConfig {
        n: 20,
        m: 5,
        s: 2,
        ..ScenarioConfig::default()
    };
    let gains = gen_gain(&gen_scenario(&cfg, 3).unwrap()).unwrap();
    assert_eq!(&clean_reports(&f, &occ, &gains).unwrap(), ms.zero_filled());
}

#[test]
fn library_walkthrough_recovers_occupancy() -> specsense::Result<()> {
    use specsense::scenario::{gen_filters, gen_gain, gen_scenario, sense, FilterLaw, Noise};
    let cfg = ScenarioConfig {
        n: 40,
        m: 6,
        s: 2,
        ..ScenarioConfig::default()
    };
    let scenario = gen_scenario(&cfg, 42)?;
    let gains = gen_gain(&scenario)?;
    let filters = gen_filters(12, 40, 6, true, FilterLaw::Gaussian, 42)?;
    let reports = sense(&filters, &scenario.occupancy(), &gains, Noise::None, 42)?;
    let outcome = joint_recover(&reports, &filters, &SolverParams::default())?;
    assert_eq!(outcome.occupancy, scenario.occupancy());
    Ok(())
}
