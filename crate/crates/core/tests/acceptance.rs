//! Acceptance suite. Runs without the libtest harness so each criterion prints
//! exactly one PASS/FAIL line; the process fails if any criterion fails.
//!
//! Tolerances and runtime budgets are pinned below. Oracles are computed here
//! independently of the library where the value is not a published constant.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rand_distr::StandardNormal;

use innovguard::compression::{
    allocate_distortion, compress_pipeline, decompress_pipeline, interior_mse, train_subband_models,
    CompressedBlob, SubbandPlan,
};
use innovguard::harness::{run_experiment, ExperimentConfig, Method, MetricsReport};
use innovguard::innovation::model::ArInnovationModel;
use innovguard::innovation::neural::{train_autoencoder, NeuralHyper, NeuralInnovationModel};
use innovguard::isfd::{isfd_detect, IsfdConfig};
use innovguard::nst::{chi_square_quantile, ks_uniform, legendre_kernel, nst_test, Decision, NstConfig};
use innovguard::rng::{rng_from, split_seed};
use innovguard::sim::scenario::default_suite;
use innovguard::sim::sdg::{sample_sdg_trajectory, SdgProcess};
use innovguard::sim::simulate_scenario;
use innovguard::special::norm_ppf;
use innovguard::WaveformSeries;

const FS: f64 = 50_000.0;
const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// 1. Chi-square quantiles against tabulated values.
fn chi_square() -> Outcome {
    const TOL: f64 = 1e-3;
    let table = [(4, 9.4877), (2, 5.9915), (1, 3.8415)];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (dof, want) in table {
        let got = chi_square_quantile(dof, 0.95);
        worst = worst.max((got - want).abs());
        parts.push(format!("q({dof},0.95)={got:.4}"));
    }
    outcome(worst <= TOL, format!("{} max|err|={worst:.1e} tol={TOL:.0e}", parts.join(" ")))
}

// 2. Size of the smooth test on IID uniforms.
fn nst_level() -> Outcome {
    const REPS: usize = 10_000;
    const N: usize = 85;
    const TOL: f64 = 0.01;
    let cfg = NstConfig { k: 4, epsilon: 0.05 };
    let mut rng = rng_from(split_seed(SEED, 2));
    let mut v = vec![0.0; N];
    let mut rejects = 0;
    for _ in 0..REPS {
        for u in &mut v {
            *u = rng.random::<f64>();
        }
        if nst_test(&v, &cfg).unwrap().decision == Decision::H1 {
            rejects += 1;
        }
    }
    let rate = rejects as f64 / REPS as f64;
    outcome((rate - 0.05).abs() <= TOL, format!("rejection rate {rate:.4} over {REPS} reps, want 0.05+-{TOL}"))
}

/// Gauss-Legendre nodes and weights on [0, 1] by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

// 3. Orthonormality of the shifted Legendre kernels.
fn legendre_orthonormality() -> Outcome {
    const TOL: f64 = 1e-6;
    let nodes = gauss_legendre(256);
    let mut worst: f64 = 0.0;
    for i in 1..=8 {
        for j in 1..=8 {
            let s: f64 = nodes
                .iter()
                .map(|&(x, w)| w * legendre_kernel(i, x).unwrap() * legendre_kernel(j, x).unwrap())
                .sum();
            worst = worst.max((s - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    outcome(worst < TOL, format!("max|<pi_i,pi_j>-delta_ij|={worst:.1e} for i,j<=8, 256-point Gauss-Legendre"))
}

fn autocorrelation(z: &[f64], lag: usize) -> f64 {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var: f64 = z.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = z.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum();
    cov / var
}

// 4. Analytic whitening of model-law AR(2) data.
fn innovation_correctness() -> Outcome {
    const N: usize = 10_000;
    const KS_TOL: f64 = 0.02;
    const ROUND_TRIP_TOL: f64 = 1e-9;
    let coeffs = vec![0.75, -0.5];
    let p = SdgProcess::ar_gaussian(coeffs.clone(), 2.0, 0.0);
    let x = sample_sdg_trajectory(&p, N + 2, split_seed(SEED, 4)).unwrap();
    let model = ArInnovationModel {
        version: 1,
        order: 2,
        ar_coeffs: coeffs,
        innovation_std: 2.0,
        mean: 0.0,
        envelope_mode: false,
        demod: None,
    };
    let series = WaveformSeries::new(x.clone(), 1000.0, 0.0).unwrap();
    let v = model.encode(&series).unwrap();
    let ks = ks_uniform(&v.values);
    let z: Vec<f64> = v.values.iter().map(|&u| norm_ppf(u)).collect();
    let band = 3.0 / (v.values.len() as f64).sqrt();
    let acf: Vec<f64> = (1..=5).map(|l| autocorrelation(&z, l)).collect();
    let acf_max = acf.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let back = model.decode(&v, &x[..2]).unwrap();
    let rt = x
        .iter()
        .zip(back.samples())
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max);
    outcome(
        ks < KS_TOL && acf_max <= band && rt <= ROUND_TRIP_TOL,
        format!(
            "KS={ks:.4} (<{KS_TOL}), max|acf 1..5|={acf_max:.4} (<={band:.4}), decode rel err={rt:.1e} (<={ROUND_TRIP_TOL:.0e})"
        ),
    )
}

// 5. Every H1 delay is one of the scheduled look times.
fn delay_law() -> Outcome {
    const RUNS: usize = 1000;
    let allowed = [0.0017, 0.0034, 0.0068, 0.0136];
    let cfg = IsfdConfig { c: 42.5, lambda_sep: 20.0, ..Default::default() };
    let mut hits = [0usize; 4];
    let mut bad = 0;
    let mut h0 = 0;
    for r in 0..RUNS {
        let mut rng = rng_from(split_seed(SEED, 5_000 + r as u64));
        // Distortion exponent 0.55..1: anything from gross to barely visible.
        let a = 0.55 + 0.45 * (r as f64 / RUNS as f64);
        let v: Vec<f64> = (0..680).map(|_| rng.random::<f64>().powf(a)).collect();
        let out = isfd_detect(v, FS, &cfg).unwrap();
        match out.delay_seconds {
            Some(d) => match allowed.iter().position(|&x| x == d) {
                Some(i) if out.samples_consumed == [85, 170, 340, 680][i] => hits[i] += 1,
                _ => bad += 1,
            },
            None => h0 += 1,
        }
    }
    outcome(
        bad == 0 && hits.iter().all(|&h| h > 0),
        format!("{RUNS} runs: H1 at 85/170/340/680 samples = {hits:?}, H0 = {h0}, off-schedule = {bad}"),
    )
}

fn rate(report: &MetricsReport, case: &str, relay: &str, m: Method) -> f64 {
    report.row(case, relay, m).unwrap_or_else(|| panic!("no row {case}/{relay}/{m}")).tpr
}

// 6. Failure-mode pattern on the default feeder.
fn table_pattern(report: &MetricsReport) -> Outcome {
    use Method::*;
    let blinded = (rate(report, "F2", "R5", Isfd), rate(report, "F2", "R5", Conventional), rate(report, "F2", "R5", Aocr));
    let sympathetic = (rate(report, "F1", "R4", Isfd), rate(report, "F1", "R4", Conventional), rate(report, "F1", "R4", Aocr));
    let a = blinded.0 >= 0.95 && blinded.1 <= 0.7 && blinded.2 <= 0.8;
    let b = sympathetic.1 >= 0.9 && sympathetic.2 >= 0.9 && sympathetic.0 <= 0.15;
    let mut c = true;
    let mut primary = Vec::new();
    for (case, relay) in [("F1", "R3"), ("F3", "R2")] {
        let row = report.row(case, relay, Isfd).unwrap();
        let modal = row.delay_histogram.modal_upper_edge();
        c &= row.tpr >= 0.99 && modal == Some(85.0 / FS);
        primary.push(format!("{case}/{relay} tpr={:.3} modal<= {:?}s", row.tpr, modal));
    }
    let calibrated = report
        .rows
        .iter()
        .filter(|r| r.method != Isfd)
        .all(|r| r.fpr <= report.target_fpr);
    outcome(
        a && b && c && calibrated,
        format!(
            "(a) blinded R5 isfd/conv/aocr = {:.3}/{:.3}/{:.3}; (b) sympathetic R4 = {:.3}/{:.3}/{:.3}; (c) {}; baselines FPR<=0.05: {calibrated}",
            blinded.0, blinded.1, blinded.2, sympathetic.0, sympathetic.1, sympathetic.2, primary.join(", ")
        ),
    )
}

// 7. ISFD false-positive rate at every relay.
fn fpr_guarantee(report: &MetricsReport) -> Outcome {
    const LIMIT: f64 = 0.06;
    let suite = default_suite();
    let mut parts = Vec::new();
    let mut pass = true;
    for relay in &suite.feeder.relays {
        let fpr = report
            .rows
            .iter()
            .find(|r| r.relay == relay.name && r.method == Method::Isfd)
            .map(|r| r.fpr);
        match fpr {
            Some(f) => {
                pass &= f <= LIMIT;
                parts.push(format!("{}={f:.3}", relay.name));
            }
            None => {
                pass = false;
                parts.push(format!("{}=missing", relay.name));
            }
        }
    }
    outcome(pass, format!("ISFD FPR over {} no-fault runs: {} (limit {LIMIT})", report.completed_runs, parts.join(" ")))
}

// 8. Reverse water-filling on a hand-solved case and the shape of R(D).
fn water_filling() -> Outcome {
    const TOL: f64 = 1e-9;
    let vars = [4.0, 1.0];
    let a = allocate_distortion(&vars, 2.0).unwrap();
    let theta_ok = (a.water_level - 1.0).abs() <= TOL;
    let rate_ok = (a.total_rate - 0.5 * 4f64.ln()).abs() <= TOL;
    let sum_ok = (a.distortions.iter().sum::<f64>() - 2.0).abs() <= TOL;
    let grid: Vec<f64> = (1..=20).map(|i| 5.0 * i as f64 / 21.0).collect();
    let r: Vec<f64> = grid.iter().map(|&d| allocate_distortion(&vars, d).unwrap().total_rate).collect();
    let monotone = r.windows(2).all(|w| w[1] <= w[0] + TOL);
    let convex = r.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -TOL);
    outcome(
        theta_ok && rate_ok && sum_ok && monotone && convex,
        format!(
            "theta={} rate={:.12} (1/2 ln 4={:.12}) sumD={} R(D) non-increasing={monotone} convex={convex}",
            a.water_level,
            a.total_rate,
            0.5 * 4f64.ln(),
            a.distortions.iter().sum::<f64>()
        ),
    )
}

// 9. Codec round trip on a default feeder waveform.
fn compression_round_trip() -> Outcome {
    const RATIO: f64 = 1.15;
    let suite = default_suite();
    let relay = "R3";
    let train = simulate_scenario(&suite.no_fault(split_seed(SEED, 90))).unwrap().remove(relay).unwrap();
    let x = simulate_scenario(&suite.no_fault(split_seed(SEED, 91))).unwrap().remove(relay).unwrap();
    let plan = SubbandPlan::for_rate(suite.feeder.fundamental_freq, x.sample_rate(), 5);
    let models = train_subband_models(&train, &plan, 4).unwrap();
    let d = 0.01 * x.power();
    let blob = compress_pipeline(&x, &plan, d, &models).unwrap();
    let bytes = blob.to_bytes();
    let parsed = CompressedBlob::from_bytes(&bytes).unwrap();
    let header_exact = parsed.header == blob.header && parsed.header_json == blob.header_json && parsed.to_bytes() == bytes;
    let y = decompress_pipeline(&parsed).unwrap();
    let mse = interior_mse(x.samples(), y.samples(), &plan).unwrap();
    outcome(
        mse <= RATIO * d && header_exact,
        format!(
            "MSE={mse:.3} D={d:.3} ratio={:.3} (<= {RATIO}); {} bytes for {} samples; header round trip exact={header_exact}",
            mse / d,
            bytes.len(),
            x.len()
        ),
    )
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn ar_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let mut x = vec![0.0; n + 200];
    for t in 2..x.len() {
        let e: f64 = rng.sample(StandardNormal);
        x[t] = 0.6 * x[t - 1] - 0.3 * x[t - 2] + e;
    }
    x.split_off(200)
}

// 10. Neural path: backprop against central differences, then training progress.
fn neural_smoke() -> Outcome {
    const GRAD_TOL: f64 = 1e-4;
    const H: f64 = 1e-6;
    let x = ar_noise(96, split_seed(SEED, 100));
    let hyper = NeuralHyper { layers: 3, hidden: 4, width: 3, block: 8, lambda_scale: 0.7, seed: 11, ..Default::default() };
    let mut m = NeuralInnovationModel::init(&x, &hyper).unwrap();
    for (i, p) in m.critic.params.iter_mut().enumerate() {
        *p = 0.3 * (i as f64 * 0.77).sin();
    }
    let out = m.segment_loss(&x);
    let mut worst: f64 = 0.0;
    for i in 0..m.encoder.params.len() {
        let p = m.encoder.params[i];
        m.encoder.params[i] = p + H;
        let up = m.segment_loss(&x).total;
        m.encoder.params[i] = p - H;
        let down = m.segment_loss(&x).total;
        m.encoder.params[i] = p;
        worst = worst.max(rel_err((up - down) / (2.0 * H), out.grad_encoder[i]));
    }
    for i in 0..m.decoder.params.len() {
        let p = m.decoder.params[i];
        m.decoder.params[i] = p + H;
        let up = m.segment_loss(&x).total;
        m.decoder.params[i] = p - H;
        let down = m.segment_loss(&x).total;
        m.decoder.params[i] = p;
        worst = worst.max(rel_err((up - down) / (2.0 * H), out.grad_decoder[i]));
    }
    let reference: Vec<f64> = (0..x.len()).map(|i| ((i * 37) % 96) as f64 / 96.0).collect();
    let (_, grad) = m.critic_loss(&x, &reference);
    #[allow(clippy::needless_range_loop)]
    for i in 0..m.critic.params.len() {
        let p = m.critic.params[i];
        m.critic.params[i] = p + H;
        let up = m.critic_loss(&x, &reference).0;
        m.critic.params[i] = p - H;
        let down = m.critic_loss(&x, &reference).0;
        m.critic.params[i] = p;
        worst = worst.max(rel_err((up - down) / (2.0 * H), grad[i]));
    }

    let train = ar_noise(10_000, split_seed(SEED, 101));
    let hyper = NeuralHyper { epochs: 200, seed: 4, ..Default::default() };
    let init = NeuralInnovationModel::init(&train, &hyper).unwrap();
    let trained = train_autoencoder(&WaveformSeries::new(train.clone(), 1000.0, 0.0).unwrap(), &hyper).unwrap();
    let (mse0, mse1) = (init.reconstruction_mse(&train), trained.reconstruction_mse(&train));
    let (ks0, ks1) = (init.latent_ks(&train), trained.latent_ks(&train));
    outcome(
        worst < GRAD_TOL && mse1 < mse0 && ks1 < ks0,
        format!(
            "max grad rel err={worst:.1e} (<{GRAD_TOL:.0e}); 200 epochs: MSE {mse0:.4}->{mse1:.4}, latent KS {ks0:.4}->{ks1:.4}"
        ),
    )
}

fn run(id: usize, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f));
    let elapsed = t.elapsed();
    let (pass, detail) = match res {
        Ok(o) => (o.pass, o.detail),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    println!(
        "criterion {id:>2}: {} | {detail} | {:.2}s of {}s{}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { " (over budget)" }
    );
    ok
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }

    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, secs(1), chi_square);
    ok &= run(2, secs(30), nst_level);
    ok &= run(3, secs(1), legendre_orthonormality);
    ok &= run(4, secs(10), innovation_correctness);
    ok &= run(5, secs(10), delay_law);

    // Criteria 6 and 7 share one paired Monte-Carlo run.
    let t = Instant::now();
    let cfg = ExperimentConfig { n_runs: 1000, master_seed: SEED, ..Default::default() };
    let experiment = catch_unwind(|| run_experiment(&cfg));
    let shared = t.elapsed();
    match experiment {
        Ok(Ok(e)) => {
            let report = e.report;
            ok &= run(6, secs(600).saturating_sub(shared), || table_pattern(&report));
            ok &= run(7, secs(600).saturating_sub(shared), || fpr_guarantee(&report));
            println!("             (criteria 6-7 Monte-Carlo run: {:.1}s)", shared.as_secs_f64());
        }
        other => {
            let msg = match other {
                Ok(Err(e)) => e.to_string(),
                _ => "panicked".into(),
            };
            ok &= run(6, secs(600), || outcome(false, format!("experiment failed: {msg}")));
            ok &= run(7, secs(600), || outcome(false, format!("experiment failed: {msg}")));
        }
    }

    ok &= run(8, secs(1), water_filling);
    ok &= run(9, secs(30), compression_round_trip);
    ok &= run(10, secs(300), neural_smoke);

    println!("acceptance: {}", if ok { "all criteria passed" } else { "some criteria FAILED" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
