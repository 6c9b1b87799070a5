//! Monte-Carlo verification of the reverse chain against the analytic
//! Gaussian score: moment recovery, Langevin stationarity, and the
//! Kolmogorov–Smirnov distance of sampled pixels to the target normal.

use rand::Rng;
use scorepaint_core::image::Image2D;
use scorepaint_core::rng::substream;
use scorepaint_core::sampler::{corrector_step, pc_sample_with_rng, SamplerConfig};
use scorepaint_core::score::{AnalyticGaussianScore, GaussianDataSpec, ScoreModel};
use scorepaint_core::sde::{reverse_step, DiffusionState, VeSchedule};

fn model(mean: f64, tau: f64, rows: usize, cols: usize, n: usize) -> AnalyticGaussianScore<f64> {
    let sched = VeSchedule::new(0.01, 128.0, n).unwrap();
    AnalyticGaussianScore {
        spec: GaussianDataSpec::new(Image2D::filled(rows, cols, mean), tau),
        sched,
    }
}

/// Full reverse chain with the Euler–Maruyama step only (no corrector):
/// ensemble mean of the reconstructed images lands within 3 standard errors
/// of the target mean.
#[test]
fn reverse_chain_recovers_gaussian_mean() {
    let n_steps = 500;
    let (mean, tau) = (0.8, 1.0);
    let m = model(mean, tau, 8, 8, n_steps);
    let sched = m.sched;
    let chains = 500;
    let mut rng = substream(17, "mc/reverse-chain");
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for _ in 0..chains {
        let init = scorepaint_core::rng::normal_image::<f64>(8, 8, &mut rng)
            .map(|z| sched.sigma_max() * z);
        let mut state = DiffusionState::at_step(&sched, init, n_steps);
        while state.step_index > 0 {
            let score = m.score(&state.x, state.t);
            let noise = scorepaint_core::rng::normal_image::<f64>(8, 8, &mut rng);
            state = reverse_step(&sched, &state, &score, &noise).unwrap();
        }
        for &v in state.x.iter() {
            acc += v;
            count += 1;
        }
    }
    let sample_mean = acc / count as f64;
    // final marginal is ~N(mean, tau²); pixels are independent
    let se = tau / (count as f64).sqrt();
    assert!(
        (sample_mean - mean).abs() < 3.0 * se,
        "mean {sample_mean} vs {mean} (3se = {})",
        3.0 * se
    );
}

fn pc_moments(snr: f64, n_steps: usize, mean: f64, tau: f64, chains: usize, seed: u64) -> (f64, f64) {
    let m = model(mean, tau, 8, 8, n_steps);
    let sched = m.sched;
    let mut values = Vec::with_capacity(chains * 64);
    let mut rng = substream(seed, "mc/pc");
    let cfg = SamplerConfig {
        n_steps,
        snr,
        corrector_iters: 1,
        seed: 0,
    };
    for _ in 0..chains {
        let x = pc_sample_with_rng(&sched, &m, &cfg, (8, 8), &mut rng).unwrap();
        values.extend(x.iter().copied());
    }
    let n = values.len() as f64;
    let sample_mean = values.iter().sum::<f64>() / n;
    let sample_var = values.iter().map(|v| (v - sample_mean).powi(2)).sum::<f64>() / (n - 1.0);
    (sample_mean, sample_var.sqrt())
}

/// PC sampler in the small-step-size regime: mean within 3 SE, std within
/// 5% over 500 chains.
#[test]
fn pc_sampler_recovers_gaussian_moments() {
    let (mean, tau) = (0.6, 0.9);
    let chains = 500;
    let (sample_mean, sample_std) = pc_moments(0.2, 500, mean, tau, chains, 23);
    let se = tau / ((chains * 64) as f64).sqrt();
    assert!(
        (sample_mean - mean).abs() < 3.0 * se,
        "mean {sample_mean} vs {mean} (3se = {})",
        3.0 * se
    );
    assert!(
        (sample_std - tau).abs() / tau < 0.05,
        "std {sample_std} vs {tau}"
    );
}

/// At η = 0.4 one Langevin iteration per level has stationary variance
/// (1+η²)·target, so the sampled std carries a known upward bias of
/// roughly 8–12%. The mean stays unbiased. This pins the behavior so a
/// regression (in either direction) is caught.
#[test]
fn pc_sampler_eta04_bias_is_the_known_langevin_overdispersion() {
    let (mean, tau) = (0.6, 0.9);
    let chains = 400;
    let (sample_mean, sample_std) = pc_moments(0.4, 500, mean, tau, chains, 29);
    let se = tau / ((chains * 64) as f64).sqrt();
    assert!(
        (sample_mean - mean).abs() < 4.0 * se,
        "mean {sample_mean} vs {mean}"
    );
    let ratio = sample_std / tau;
    assert!(
        (1.04..1.16).contains(&ratio),
        "std ratio {ratio} left the known overdispersion band"
    );
}

/// Langevin-only iterations at fixed t preserve the marginal variance
/// τ² + σ²(t) − σ²(0) within 10%.
#[test]
fn corrector_preserves_stationary_variance() {
    let n_steps = 100;
    let (mean, tau) = (0.0, 1.0);
    let m = model(mean, tau, 8, 8, n_steps);
    let sched = m.sched;
    let t_step = 50;
    let t = sched.grid_t(t_step);
    let target_var = tau * tau + sched.variance_gap(t);
    let mut rng = substream(31, "mc/stationary");
    let chains = 400;
    let iters = 30;
    // small step size: the discrete chain's stationary variance approaches
    // the target as ε → 0 (bias is (1+η²) in variance)
    let snr = 0.15;
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    let mut count = 0usize;
    for _ in 0..chains {
        // start in equilibrium and let Langevin run
        let x0 = Image2D::filled(8, 8, mean);
        let z = scorepaint_core::rng::normal_image::<f64>(8, 8, &mut rng);
        let x = x0.zip_map(&z, |m, zv| m + target_var.sqrt() * zv);
        let mut state = DiffusionState::at_step(&sched, x, t_step);
        for _ in 0..iters {
            let (next, flagged) = corrector_step(&m, &state, snr, &mut rng).unwrap();
            assert!(!flagged);
            state = next;
        }
        for &v in state.x.iter() {
            acc += v;
            acc2 += v * v;
            count += 1;
        }
    }
    let mean_hat = acc / count as f64;
    let var_hat = acc2 / count as f64 - mean_hat * mean_hat;
    assert!(
        (var_hat - target_var).abs() / target_var < 0.10,
        "var {var_hat} vs {target_var}"
    );
}

/// KS statistic of sampled pixels vs the target normal stays below 0.06
/// for N ∈ {500, 1000} (1×1 images, 1000 samples evolved as an ensemble,
/// matching the batch semantics of the corrector's step-size rule).
#[test]
fn ks_distance_to_target_normal_small() {
    for &n_steps in &[500usize, 1000] {
        let (mean, tau) = (0.3, 1.0);
        let m = model(mean, tau, 1, 1, n_steps);
        let sched = m.sched;
        let cfg = SamplerConfig {
            n_steps,
            snr: 0.15,
            corrector_iters: 1,
            seed: 1000 + n_steps as u64,
        };
        let mut samples: Vec<f64> =
            scorepaint_core::sampler::pc_sample_ensemble(&sched, &m, &cfg, (1, 1), 1000)
                .unwrap()
                .into_iter()
                .map(|x| x.get(0, 0))
                .collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let normal = statrs::distribution::Normal::new(mean, tau).unwrap();
        use statrs::distribution::ContinuousCDF;
        let n = samples.len() as f64;
        let mut ks = 0.0f64;
        for (i, &x) in samples.iter().enumerate() {
            let cdf = normal.cdf(x);
            let hi = (i as f64 + 1.0) / n - cdf;
            let lo = cdf - i as f64 / n;
            ks = ks.max(hi.max(lo));
        }
        assert!(ks < 0.06, "N={n_steps}: KS statistic {ks}");
    }
}

/// Perturb-then-reverse with the exact conditional score is
/// distribution-preserving: reconstructed ensemble matches the data moments.
#[test]
fn perturb_then_reverse_preserves_distribution() {
    let n_steps = 300;
    let (mean, tau) = (0.5, 0.7);
    let m = model(mean, tau, 4, 4, n_steps);
    let sched = m.sched;
    let mut rng = substream(47, "mc/roundtrip");
    let chains = 600;
    let mut values = Vec::with_capacity(chains * 16);
    for _ in 0..chains {
        // draw a data sample, push it to t=1 with the forward kernel, then
        // pull it back with the reverse chain
        let z0 = scorepaint_core::rng::normal_image::<f64>(4, 4, &mut rng);
        let x0 = z0.map(|z| mean + tau * z);
        let zf = scorepaint_core::rng::normal_image::<f64>(4, 4, &mut rng);
        let xt = scorepaint_core::sde::perturb(&sched, &x0, 1.0, &zf);
        let mut state = DiffusionState::at_step(&sched, xt, n_steps);
        while state.step_index > 0 {
            let score = m.score(&state.x, state.t);
            let noise = scorepaint_core::rng::normal_image::<f64>(4, 4, &mut rng);
            state = reverse_step(&sched, &state, &score, &noise).unwrap();
        }
        values.extend(state.x.iter().copied());
    }
    let n = values.len() as f64;
    let mean_hat = values.iter().sum::<f64>() / n;
    let var_hat = values.iter().map(|v| (v - mean_hat).powi(2)).sum::<f64>() / (n - 1.0);
    let se = tau / n.sqrt();
    assert!((mean_hat - mean).abs() < 4.0 * se, "mean {mean_hat} vs {mean}");
    assert!(
        (var_hat.sqrt() - tau).abs() / tau < 0.06,
        "std {} vs {tau}",
        var_hat.sqrt()
    );
}

/// Determinism contract of the full sampler entry point.
#[test]
fn pc_sample_bitwise_deterministic() {
    let m = model(0.2, 1.0, 4, 4, 50);
    let cfg = SamplerConfig {
        n_steps: 50,
        snr: 0.4,
        corrector_iters: 1,
        seed: 99,
    };
    let a = scorepaint_core::sampler::pc_sample(&m.sched, &m, &cfg, (4, 4)).unwrap();
    let b = scorepaint_core::sampler::pc_sample(&m.sched, &m, &cfg, (4, 4)).unwrap();
    assert_eq!(a, b);
}

/// Wall-clock scaling of the sampler is ~linear in N.
#[test]
fn sampler_time_scales_linearly_in_steps() {
    let m = model(0.0, 1.0, 64, 64, 500);
    let run = |n_steps: usize| {
        let cfg = SamplerConfig {
            n_steps,
            snr: 0.4,
            corrector_iters: 1,
            seed: 1,
        };
        let start = std::time::Instant::now();
        let mut rng = substream(3, "mc/time");
        for _ in 0..4 {
            pc_sample_with_rng(&m.sched, &m, &cfg, (64, 64), &mut rng).unwrap();
        }
        start.elapsed().as_secs_f64()
    };
    // warm up, then measure
    run(200);
    let t500 = run(500);
    let t2000 = run(2000);
    let ratio = t2000 / t500;
    assert!(
        (3.0..5.0).contains(&ratio),
        "timing ratio {ratio} outside [3, 5] (t500={t500}, t2000={t2000})"
    );
}
