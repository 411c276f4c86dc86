//! One line per acceptance criterion; exits non-zero if any fails.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use triplet_core::budget::UncertainValue;
use triplet_core::config::bundled_paper_table1;
use triplet_core::detection::{gate_acceptance, simulate, simulate_seeds, ExperimentConfig, SimMode};
use triplet_core::exec::Execution;
use triplet_core::fock::{apply_first_order_cascade, evolve_exact, triplet_probability, CascadeParams, FockBasisState};
use triplet_core::histogram::analyze_peak;
use triplet_core::phasematch::solve_pair_wavelengths;

const BIN: &str = env!("CARGO_BIN_EXE_triplet");
const SEEDS: u64 = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn triplet(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    cmd.output().expect("spawn triplet")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn uv(v: &Value) -> UncertainValue {
    UncertainValue::new(v["mean"].as_f64().unwrap(), v["sigma"].as_f64().unwrap())
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn rel_close(x: f64, want: f64, tol: f64) -> bool {
    ((x - want) / want).abs() <= tol
}

fn budget_report() -> (Value, Duration) {
    let t = Instant::now();
    let out = triplet(&["budget"], None);
    let elapsed = t.elapsed();
    (json_of(&out)["report"].clone(), elapsed)
}

fn criterion_1() -> Outcome {
    let (r, elapsed) = budget_report();
    let rate = uv(&r["r_triple_per_hour"]);
    let ok = within(rate.mean, 5.4, 5.8) && within(rate.sigma, 0.9, 1.3) && elapsed < Duration::from_secs(2);
    outcome(ok, format!("rate {rate} /hr, runtime {:.2} s", elapsed.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let (r, _) = budget_report();
    let dark = uv(&r["expected_dark_triples"]);
    let per_bin = uv(&r["background_per_bin"]);
    let exact = 8.70e5 * 1.8e-3 * 4.5e-6 * 0.5 * 72_000.0;
    let ok = (dark.mean - exact).abs() <= 1.0 && (dark.mean - 254.0).abs() <= 1.0 && (per_bin.mean - 10.2).abs() <= 0.1;
    outcome(
        ok,
        format!(
            "dark triples {:.2} (exact {exact:.2}), per bin {:.3}",
            dark.mean, per_bin.mean
        ),
    )
}

fn criterion_3() -> Outcome {
    let (r, _) = budget_report();
    let coinc = uv(&r["p_spdc_from_coinc"]).mean;
    let trip = uv(&r["p_spdc_from_triplets"]).mean;
    let power = uv(&r["p_spdc_from_power"]).mean;
    let verdict = r["p_spdc_consistency"]["verdict"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    let ok = rel_close(coinc, 9.9e-6, 0.05)
        && rel_close(trip, 8.2e-6, 0.05)
        && within(power, 6.5e-6 * 0.95, 6.6e-6 * 1.05)
        && verdict == "consistent within 1σ";
    outcome(
        ok,
        format!("coinc {coinc:.3e}, triplets {trip:.3e}, power {power:.3e}, {verdict}"),
    )
}

fn criterion_4() -> Outcome {
    let (r, _) = budget_report();
    let eta = uv(&r["eta_775_inferred"]);
    let ok = (eta.mean - 0.53).abs() < 0.005 && within(eta.sigma, 0.05, 0.08);
    outcome(ok, format!("eta_775 {eta}"))
}

fn reference_experiment() -> ExperimentConfig {
    let cfg = bundled_paper_table1();
    assert_eq!(cfg.experiment.mode, SimMode::Aggregated);
    cfg.experiment
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn criterion_5() -> Outcome {
    let c = reference_experiment();
    let t = Instant::now();
    let seeds: Vec<u64> = (0..SEEDS).map(|s| c.seed + s).collect();
    let runs = simulate_seeds(&c, &seeds, Execution::Parallel).unwrap();
    let reports: Vec<_> = runs.iter().map(|r| analyze_peak(&r.histogram, 3).unwrap()).collect();
    let elapsed = t.elapsed();
    let raw = mean(&reports.iter().map(|r| r.raw_peak_counts as f64).collect::<Vec<_>>());
    let bg = mean(&reports.iter().map(|r| r.background_mean_per_bin).collect::<Vec<_>>());
    let net = mean(&reports.iter().map(|r| r.net_rate_per_hour.mean).collect::<Vec<_>>());
    let strong = reports.iter().filter(|r| r.significance_sigma >= 6.0).count();
    let ok = within(raw, 110.0, 138.0)
        && within(bg, 9.3, 11.1)
        && within(net, 4.1, 5.3)
        && strong >= 95
        && elapsed < Duration::from_secs(10);
    outcome(
        ok,
        format!(
            "raw {raw:.1}, bg {bg:.2}/bin, net {net:.2}/hr, >=6 sigma on {strong}/{SEEDS}, runtime {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut c = reference_experiment();
    c.duration_s = 600.0;
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let agg = simulate_seeds(&c, &seeds, Execution::Parallel).unwrap();
    let mut ev_cfg = c.clone();
    ev_cfg.mode = SimMode::EventDriven;
    let t = Instant::now();
    simulate(&ev_cfg.with_seed(12345)).unwrap();
    let single = t.elapsed();
    let ev = simulate_seeds(
        &ev_cfg,
        &seeds.iter().map(|s| s + 1000).collect::<Vec<_>>(),
        Execution::Parallel,
    )
    .unwrap();
    type Field = fn(&triplet_core::detection::Counters) -> u64;
    let fields: [(&str, Field); 5] = [
        ("d2_fires", |c| c.d2_fires),
        ("d3_fires", |c| c.d3_fires),
        ("signal_triples", |c| c.signal_triples),
        ("dark_triples", |c| c.dark_triples),
        ("recorded", |c| c.recorded),
    ];
    let mut worst = (0.0f64, "");
    for (name, f) in fields {
        let a: Vec<f64> = agg.iter().map(|r| f(&r.counters) as f64).collect();
        let e: Vec<f64> = ev.iter().map(|r| f(&r.counters) as f64).collect();
        let se = ((sample_var(&a) + sample_var(&e)) / SEEDS as f64).sqrt();
        let z = if se == 0.0 {
            0.0
        } else {
            (mean(&a) - mean(&e)).abs() / se
        };
        if z > worst.0 {
            worst = (z, name);
        }
    }
    let ok = worst.0 <= 3.0 && single < Duration::from_secs(60);
    outcome(
        ok,
        format!(
            "largest deviation {:.2} SE ({}), event-driven 10 min run {:.2} s",
            worst.0,
            worst.1,
            single.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let c = reference_experiment();
    let sigma = 0.36f64.hypot(0.0);
    let closed = gate_acceptance(0.5, 1.5, sigma) / gate_acceptance(0.0, 1.5, sigma);
    let closed_neg = gate_acceptance(-0.5, 1.5, sigma) / gate_acceptance(0.0, 1.5, sigma);
    let net_sum = |delay: f64| {
        let seeds: Vec<u64> = (0..50).map(|s| 7000 + s).collect();
        let runs = simulate_seeds(&c.with_delay(delay), &seeds, Execution::Parallel).unwrap();
        runs.iter()
            .map(|r| analyze_peak(&r.histogram, 3).unwrap().net_counts)
            .fold(UncertainValue::exact(0.0), |acc, n| {
                UncertainValue::new(acc.mean + n.mean, acc.sigma.hypot(n.sigma))
            })
    };
    let (zero, plus, minus) = (net_sum(0.0), net_sum(0.5), net_sum(-0.5));
    let ratio = |x: UncertainValue| {
        let r = x.mean / zero.mean;
        UncertainValue::new(r, r * (x.relative().powi(2) + zero.relative().powi(2)).sqrt())
    };
    let (rp, rm) = (ratio(plus), ratio(minus));
    let ok = closed < 1.0
        && closed_neg < 1.0
        && (rp.mean - closed).abs() <= 3.0 * rp.sigma
        && (rm.mean - closed_neg).abs() <= 3.0 * rm.sigma;
    outcome(
        ok,
        format!(
            "peak ratio +0.5 ns {:.3} ± {:.3}, -0.5 ns {:.3} ± {:.3}, closed form {closed:.3}",
            rp.mean, rp.sigma, rm.mean, rm.sigma
        ),
    )
}

fn criterion_8() -> Outcome {
    let crystal = bundled_paper_table1().crystal;
    let at = |pump: f64, t: f64| solve_pair_wavelengths(&crystal.at_temperature(t), pump).unwrap();
    let a = at(776.0, 60.0);
    let b = at(776.0, 50.0);
    let c = at(775.4, 50.0);
    let mut energy_ok = true;
    for pump in [775.0, 775.4, 775.8, 776.0, 776.5] {
        for i in 0..60 {
            if let Some(p) = at(pump, 40.0 + i as f64) {
                let rel = (1.0 / pump - 1.0 / p.signal_wavelength_nm - 1.0 / p.idler_wavelength_nm).abs() * pump;
                energy_ok &= rel < 1e-6;
            }
        }
    }
    let ok = a.is_some_and(|p| {
        (p.signal_wavelength_nm - 1510.0).abs() <= 15.0 && (p.idler_wavelength_nm - 1590.0).abs() <= 15.0
    }) && b.is_none()
        && c.is_some()
        && energy_ok;
    let show = |p: Option<triplet_core::phasematch::TuningPoint>| {
        p.map_or("none".to_string(), |p| {
            format!("{:.1}/{:.1} nm", p.signal_wavelength_nm, p.idler_wavelength_nm)
        })
    };
    outcome(
        ok,
        format!(
            "A (776.0 nm, 60 C) {}, B (776.0 nm, 50 C) {}, C (775.4 nm, 50 C) {}, Λ {:.4} um",
            show(a),
            show(b),
            show(c),
            crystal.poling_period_um
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let i = Complex64::i();
    let mut symbolic = true;
    for _ in 0..10 {
        let l1 = rng.random_range(1e-5..1e-2);
        let l2 = rng.random_range(1e-5..1e-1);
        let alpha = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let s = apply_first_order_cascade(&CascadeParams::new(l1, l2, alpha).unwrap()).unwrap();
        symbolic &= s.amplitude(FockBasisState::VACUUM) == Complex64::new(1.0, 0.0)
            && (s.amplitude(FockBasisState::PAIR) - (-i * l1 * alpha)).norm() <= 1e-15
            && (s.amplitude(FockBasisState::TRIPLET) - (-(l1 * l2) * alpha)).norm() <= 1e-15
            && s.amplitudes().count() == 3;
    }
    let p = CascadeParams::new(1e-3, 1e-2, Complex64::new(1.0, 0.0)).unwrap();
    let exact = evolve_exact(&p, 3).unwrap();
    let approx = apply_first_order_cascade(&p).unwrap();
    let err = [FockBasisState::VACUUM, FockBasisState::PAIR, FockBasisState::TRIPLET]
        .into_iter()
        .map(|s| (exact.amplitude(s) - approx.amplitude(s)).norm())
        .fold(0.0, f64::max);
    let mut linear = true;
    for _ in 0..10 {
        let (l1, l2) = (rng.random_range(1e-5..1e-2), rng.random_range(1e-5..1e-1));
        let (i1, i2): (f64, f64) = (rng.random_range(0.01..100.0), rng.random_range(0.01..100.0));
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let p1 =
            triplet_probability(&CascadeParams::new(l1, l2, Complex64::from_polar(i1.sqrt(), phase)).unwrap()).unwrap();
        let p2 =
            triplet_probability(&CascadeParams::new(l1, l2, Complex64::from_polar(i2.sqrt(), phase)).unwrap()).unwrap();
        linear &= ((p2 / p1) / (i2 / i1) - 1.0).abs() < 1e-12;
    }
    let ok = symbolic && err < 1e-4 && linear;
    outcome(
        ok,
        format!("first-order form {symbolic}, exact vs perturbative {err:.2e}, intensity-linear {linear}"),
    )
}

fn file_bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut identical = Vec::new();
    let stdout_cases: [&[&str]; 4] = [
        &["budget", "--seed", "77"],
        &["phasematch", "--pump-nm", "776", "--temp-c", "60"],
        &["phasematch", "--pump-nm", "776"],
        &["fock", "--lambda1", "1e-3", "--lambda2", "1e-2", "--exact"],
    ];
    for args in stdout_cases {
        let runs: Vec<Vec<u8>> = [None, None, Some("1")]
            .into_iter()
            .map(|t| triplet(args, t).stdout)
            .collect();
        identical.push((args[0], !runs[0].is_empty() && runs.iter().all(|r| *r == runs[0])));
    }
    let mut sim = Vec::new();
    for (k, (mode, threads)) in [
        ("aggregated", None),
        ("aggregated", Some("1")),
        ("event_driven", None),
        ("event_driven", Some("1")),
        ("event_driven", None),
    ]
    .into_iter()
    .enumerate()
    {
        let out = d.join(format!("run{k}"));
        let o = triplet(
            &[
                "simulate",
                "--seed",
                "5",
                "--mode",
                mode,
                "--duration-s",
                "600",
                "--out",
                out.to_str().unwrap(),
            ],
            threads,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        sim.push((
            file_bytes(&out.join("histogram.csv")),
            file_bytes(&out.join("counters.json")),
        ));
    }
    identical.push((
        "simulate",
        sim[0] == sim[1] && sim[2] == sim[3] && sim[3] == sim[4] && !sim[0].0.is_empty(),
    ));
    let csv = d.join("run0/histogram.csv");
    let analyses: Vec<Vec<u8>> = (0..2)
        .map(|_| triplet(&["analyze", csv.to_str().unwrap(), "--duration-s", "600"], None).stdout)
        .collect();
    identical.push(("analyze", !analyses[0].is_empty() && analyses[0] == analyses[1]));
    let ok = identical.iter().all(|(_, same)| *same);
    let failing: Vec<&str> = identical.iter().filter(|(_, s)| !s).map(|(n, _)| *n).collect();
    outcome(
        ok,
        if ok {
            "all subcommands byte-identical across runs and thread counts".into()
        } else {
            format!("differs: {failing:?}")
        },
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 10] = [
        ("predicted triplet rate", criterion_1),
        ("dark-count budget", criterion_2),
        ("P_SPDC triangulation", criterion_3),
        ("eta_775 inference", criterion_4),
        ("simulated 20 h experiment", criterion_5),
        ("mode equivalence", criterion_6),
        ("delay scan", criterion_7),
        ("phase matching", criterion_8),
        ("quantum-model properties", criterion_9),
        ("reproducibility", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
