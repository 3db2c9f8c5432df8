//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion does.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use felb_cli::{cmd_run, generate_dataset, with_threads, DataSource, ExperimentConfig, GenerateSection, Method};
use felb_core::client::{local_round_in_place, mu_descend};
use felb_core::federation::{partition, run_centralized, run_federated_with, RunOptions};
use felb_core::metrics::Confusion;
use felb_core::oracle::{finite_difference, prox_oracle, squared_loss_naive};
use felb_core::privacy::{apply_noise, gaussian_sigma};
use felb_core::proximal::prox_elb_scalar;
use felb_core::rng::stream;
use felb_core::{
    boolean_product, frobenius_sq, generate_planted, grad_u, grad_v, integrality_gap, local_objective,
    mu_eta_v, real_product, run_aggregated_bmf, run_federated, Aggregation, BinaryMatrix, ClientState,
    FactorMatrix, FederationConfig, PlantedSpec, PrivacyConfig, ProximityParams, ReferenceFactorizer,
    RegularizationParams, StepRule,
};
use rand::Rng;

const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_binary(seed: u64, rows: usize, cols: usize, density: f64) -> BinaryMatrix {
    let mut r = stream(seed, &[0xA11CE]);
    let dense: Vec<u8> = (0..rows * cols).map(|_| u8::from(r.random::<f64>() < density)).collect();
    BinaryMatrix::from_dense(rows, cols, &dense).unwrap()
}

/// The planted-tile benchmark: 500 x 100, five tiles, ten clients, default
/// hyperparameters.
fn benchmark(noise: f64, method: Method) -> ExperimentConfig {
    ExperimentConfig {
        method,
        data: DataSource::Generate(GenerateSection {
            noise,
            ..GenerateSection::default()
        }),
        ..ExperimentConfig::default()
    }
}

/// Mean over seeds of `(F1 against data, F1 against the clean mask)`.
fn benchmark_scores(cfg: &ExperimentConfig, privacy: PrivacyConfig) -> (f64, f64) {
    let DataSource::Generate(g) = &cfg.data else { unreachable!() };
    let (mut f1, mut f1_star) = (0.0, 0.0);
    for seed in 0..SEEDS {
        let (data, mask) = generate_dataset(g, seed).unwrap();
        let fcfg = FederationConfig {
            privacy,
            ..cfg.federation_config(seed)
        };
        let split = partition(&data, fcfg.clients, seed).unwrap();
        let signal = split.split_like(&mask).unwrap();
        let h = run_federated_with(&split.parts, &fcfg, &RunOptions { signal: Some(&signal), serial: false }).unwrap();
        let last = h.rounds.last().unwrap();
        f1 += last.f1;
        f1_star += last.f1_star.unwrap();
    }
    (f1 / SEEDS as f64, f1_star / SEEDS as f64)
}

fn prox_oracle_equivalence() -> Outcome {
    let mut r = stream(1, &[]);
    let (mut worst, mut checked) = (0.0f64, 0);
    while checked < 10_000 {
        let x: f64 = r.random_range(-1.5..2.5);
        let kappa = r.random_range(0.0..1.0);
        let lambda = r.random_range(0.0..5.0);
        if (x - 0.5).abs() < 1e-3 {
            continue;
        }
        worst = worst.max((prox_elb_scalar(x, kappa, lambda) - prox_oracle(x, kappa, lambda)).abs());
        checked += 1;
    }
    check(worst <= 1e-4, format!("max |prox - oracle| = {worst:.2e} over {checked} triples (tol 1e-4)"))
}

fn gradient_correctness() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let s = ClientState::initialize(random_binary(seed, 8, 6, 0.4), 3, seed);
        let (a, u, v) = (&s.data, &s.u, &s.v);
        let pairs = [
            (grad_u(a, u, v).unwrap(), finite_difference(u, 1e-6, |x| squared_loss_naive(a, x, v))),
            (grad_v(a, u, v).unwrap(), finite_difference(v, 1e-6, |x| squared_loss_naive(a, u, x))),
        ];
        for (got, want) in pairs {
            let rel = frobenius_sq(&got.sub(&want).unwrap()).sqrt() / frobenius_sq(&want).sqrt().max(1e-300);
            worst = worst.max(rel);
        }
    }
    check(worst < 1e-6, format!("max relative error {worst:.2e} on 20 instances (tol 1e-6)"))
}

fn sufficient_decrease() -> Outcome {
    let reg = RegularizationParams { growth: 1.0, ..RegularizationParams::default() };
    let prox = ProximityParams { gamma: 0.0 };
    let rule = StepRule::lipschitz(0.0);
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..50 {
        let mut s = ClientState::initialize(random_binary(seed, 30, 20, 0.3), 4, seed);
        let mut prev = local_objective(&s, &reg, &prox, None).unwrap();
        for _ in 0..200 {
            local_round_in_place(&mut s, &reg, &prox, &rule, None).unwrap();
            let cur = local_objective(&s, &reg, &prox, None).unwrap();
            worst = worst.max(cur - prev);
            prev = cur;
        }
    }
    check(worst <= 1e-9, format!("largest increase {worst:.2e} over 50 x 200 rounds (slack 1e-9)"))
}

fn boolean_convergence() -> Outcome {
    let cfg = benchmark(0.0, Method::Felb);
    let DataSource::Generate(g) = &cfg.data else { unreachable!() };
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let (data, _) = generate_dataset(g, seed).unwrap();
        let fcfg = cfg.federation_config(seed);
        let h = run_federated(&partition(&data, fcfg.clients, seed).unwrap().parts, &fcfg).unwrap();
        worst = worst.max(integrality_gap(h.v_hat.as_ref().unwrap()));
        worst = h.v.iter().map(integrality_gap).fold(worst, f64::max);
    }
    check(worst < 1e-2, format!("max integrality gap of V-hat and all V_i {worst:.2e} over {SEEDS} seeds (tol 1e-2)"))
}

fn federation_collapse() -> Outcome {
    let mut identical = 0;
    for seed in 0..5 {
        let (a, _) = generate_planted(&PlantedSpec::with_defaults(120, 40, 3, seed)).unwrap();
        let cfg = FederationConfig {
            clients: 1,
            rank: 3,
            sync_interval: 1,
            prox: ProximityParams { gamma: 0.0 },
            global_seed: seed,
            ..FederationConfig::default()
        };
        let fed = run_federated(std::slice::from_ref(&a), &cfg).unwrap();
        if fed.same_outcome(&run_centralized(&a, &cfg).unwrap()) {
            identical += 1;
        }
    }
    check(identical == 5, format!("{identical}/5 single-client runs bit-identical to the centralized run"))
}

fn signal_recovery() -> Outcome {
    let (_, low) = benchmark_scores(&benchmark(0.1, Method::FelbMu), PrivacyConfig::none());
    let (_, high) = benchmark_scores(&benchmark(0.4, Method::FelbMu), PrivacyConfig::none());
    check(
        low >= 0.8 && low >= high,
        format!("mean F1* {low:.3} at 10% noise (need >= 0.8), {high:.3} at 40%"),
    )
}

fn aggregation_ordering() -> Outcome {
    let algo = ReferenceFactorizer::default();
    let (mut vote, mut or) = (0.0, 0.0);
    for seed in 0..SEEDS {
        let (data, _) = generate_planted(&PlantedSpec::abundance(10, 100, 5, seed)).unwrap();
        let parts = partition(&data, 10, seed).unwrap().parts;
        let score = |agg| {
            let run = run_aggregated_bmf(&parts, &algo, agg, 5, seed).unwrap();
            parts
                .iter()
                .zip(&run.u)
                .map(|(a, u)| Confusion::between(a, &boolean_product(u, &run.v_hat).unwrap()).unwrap())
                .sum::<Confusion>()
                .f1()
        };
        vote += score(Aggregation::MajorityVote);
        or += score(Aggregation::LogicalOr);
    }
    let (vote, or) = (vote / SEEDS as f64, or / SEEDS as f64);
    check(vote >= or, format!("mean F1 majority vote {vote:.3} vs logical or {or:.3}"))
}

fn dp_calibration() -> Outcome {
    let zeros = FactorMatrix::zeros(1, 100_000);
    let sigma = gaussian_sigma(1.0, 1.0, 0.05).unwrap();
    let gauss = PrivacyConfig::gaussian(1.0, 0.05);
    let g = apply_noise(&zeros, &gauss, &gauss.draw(8).unwrap()).unwrap();
    let n = g.len() as f64;
    let mean = g.as_slice().iter().sum::<f64>() / n;
    let sd = (g.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let lap = PrivacyConfig::laplace(1.0);
    let l = apply_noise(&zeros, &lap, &lap.draw(8).unwrap()).unwrap();
    // mean absolute deviation of a centered Laplace is its scale
    let b = l.as_slice().iter().map(|x| x.abs()).sum::<f64>() / n;
    let ok = (sigma - 2.5373).abs() < 1e-3 && (sd / sigma - 1.0).abs() < 0.02 && (b - 1.0).abs() < 0.02;
    check(ok, format!("gaussian sigma {sigma:.4}, empirical sd {sd:.4}; laplace scale 1, empirical {b:.4} (tol 2%)"))
}

type MechanismAt = fn(f64) -> PrivacyConfig;

fn privacy_monotonicity() -> Outcome {
    let cfg = benchmark(0.0, Method::FelbMu);
    let mechanisms: [(&str, MechanismAt); 3] = [
        ("gaussian", |e| PrivacyConfig::gaussian(e, 0.05)),
        ("laplace", PrivacyConfig::laplace),
        ("bernoulli", PrivacyConfig::bernoulli),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, make) in mechanisms {
        let (strong, _) = benchmark_scores(&cfg, make(0.1));
        let (weak, _) = benchmark_scores(&cfg, make(2.0));
        pass &= weak >= strong;
        parts.push(format!("{name} {strong:.3} -> {weak:.3}"));
    }
    check(pass, format!("mean F1 at eps 0.1 -> 2: {}", parts.join(", ")))
}

fn mu_identity() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let s = ClientState::initialize(random_binary(seed, 12, 9, 0.4), 3, seed);
        let (a, u, v) = (&s.data, &s.u, &s.v);
        let step = mu_descend(v, &mu_eta_v(u, v, 1e-12).unwrap(), &grad_v(a, u, v).unwrap()).unwrap();
        let numer = u.t_matmul(&a.to_factor()).unwrap();
        let denom = u.t_matmul(&real_product(u, v).unwrap()).unwrap();
        for i in 0..v.len() {
            let want = v.as_slice()[i] * numer.as_slice()[i] / denom.as_slice()[i];
            worst = worst.max((step.as_slice()[i] - want).abs() / want.abs().max(1.0));
        }
    }
    check(worst <= 1e-12, format!("max deviation {worst:.2e} on 50 instances (tol 1e-12)"))
}

fn run_binary(dir: &Path, threads: Option<&str>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_felb"));
    cmd.args(["run", "--seed", "5", "--out"]).arg(dir);
    match threads {
        Some(t) => cmd.env("FELB_THREADS", t),
        None => cmd.env_remove("FELB_THREADS"),
    };
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "felb run failed: {}", String::from_utf8_lossy(&out.stderr));
    std::fs::read(dir.join("history.csv")).unwrap()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let runs = [
        run_binary(&tmp.path().join("a"), Some("1")),
        run_binary(&tmp.path().join("b"), Some("1")),
        run_binary(&tmp.path().join("c"), Some("4")),
        run_binary(&tmp.path().join("d"), None),
    ];
    let cfg = ExperimentConfig {
        seed: 5,
        out: Some(tmp.path().join("lib")),
        ..ExperimentConfig::default()
    };
    with_threads(Some(3), || cmd_run(&cfg)).unwrap().unwrap();
    let in_process = std::fs::read(tmp.path().join("lib/history.csv")).unwrap();
    let same = runs.iter().all(|r| *r == runs[0]) && in_process == runs[0];
    check(same, format!("history.csv byte-identical across 2 reruns, FELB_THREADS 1/4/unset and in-process ({} bytes)", runs[0].len()))
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Criterion, u64); 11] = [
        ("prox oracle equivalence", prox_oracle_equivalence, 10),
        ("gradient correctness", gradient_correctness, 5),
        ("sufficient decrease", sufficient_decrease, 30),
        ("boolean convergence", boolean_convergence, 120),
        ("federation collapse", federation_collapse, 10),
        ("signal recovery trend", signal_recovery, 300),
        ("aggregation ordering", aggregation_ordering, 300),
        ("dp calibration", dp_calibration, 10),
        ("privacy-utility monotonicity", privacy_monotonicity, 600),
        ("mu identity", mu_identity, 5),
        ("determinism", determinism, 60),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            check(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*budget);
        let pass = outcome.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "{} {:>2}. {name}: {} [{:.1}s of {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
