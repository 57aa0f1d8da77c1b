//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tapsim::ar::fit_ar;
use tapsim::engine::{Mode, Source, Strategy};
use tapsim::gru::{batch_loss, loss_and_gradient, GruNetwork, GruShape, TrainingSample};
use tapsim::sim::{ScenarioConfig, Simulation};

type Outcome = Result<String, String>;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Ridge solve with the intercept unpenalised, via nalgebra's Cholesky.
fn nalgebra_fit(series: &[f64], order: usize, ridge: f64) -> DVector<f64> {
    let rows = series.len() - order;
    let x = DMatrix::from_fn(rows, order + 1, |r, c| if c == 0 { 1.0 } else { series[r + order - c] });
    let y = DVector::from_iterator(rows, series[order..].iter().copied());
    let mut a = x.transpose() * &x;
    for i in 1..=order {
        a[(i, i)] += ridge;
    }
    let b = x.transpose() * y;
    a.cholesky().expect("normal matrix is positive definite").solve(&b)
}

fn ar_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (dim, order, n, ridge) = (5, 3, 50, 1e-6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let window: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let model = fit_ar(&window, order, ridge).map_err(err)?;
        for d in 0..dim {
            let column: Vec<f64> = window.iter().map(|v| v[d]).collect();
            let theta = nalgebra_fit(&column, order, ridge);
            worst = worst.max((theta[0] - model.intercepts()[d]).abs());
            for j in 0..order {
                worst = worst.max((theta[j + 1] - model.coefficients()[d][j]).abs());
            }
        }
    }
    check(worst <= 1e-9, format!("max coefficient gap {worst:.2e} > 1e-9"))?;

    // Lightly damped oscillation, so the series stays informative.
    let (a1, a2, c) = (1.8725, -0.9604, 0.05);
    let mut series = vec![0.4, 0.7];
    for t in 2..80 {
        series.push(c + a1 * series[t - 1] + a2 * series[t - 2]);
    }
    let window: Vec<Vec<f64>> = series.iter().map(|&v| vec![v]).collect();
    let model = fit_ar(&window, 2, 0.0).map_err(err)?;
    let k = &model.coefficients()[0];
    let recovery = (k[0] - a1).abs().max((k[1] - a2).abs()).max((model.intercepts()[0] - c).abs());
    check(recovery <= 1e-8, format!("AR(2) recovery error {recovery:.2e} > 1e-8"))?;
    Ok(format!("max gap {worst:.1e}, AR(2) recovery {recovery:.1e}"))
}

fn gradient_check() -> Outcome {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for layers in [1, 2] {
        for hidden in [1, 3, 4] {
            for dim in [1, 2] {
                let shape = GruShape::new(layers, dim, hidden, 3, 2);
                let net = GruNetwork::new(shape, rng.random()).map_err(err)?;
                let samples: Vec<TrainingSample> = (0..2)
                    .map(|_| TrainingSample {
                        input: (0..4).map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()).collect(),
                        label: (0..2).map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()).collect(),
                    })
                    .collect();
                let batch: Vec<&TrainingSample> = samples.iter().collect();
                let (_, grad) = loss_and_gradient(&net, &batch).map_err(err)?;
                let base = net.params().to_vec();
                for i in 0..base.len() {
                    let mut p = base.clone();
                    p[i] += h;
                    let up = batch_loss(&GruNetwork::from_params(shape, p.clone()).map_err(err)?, &batch).map_err(err)?;
                    p[i] -= 2.0 * h;
                    let down = batch_loss(&GruNetwork::from_params(shape, p).map_err(err)?, &batch).map_err(err)?;
                    let numeric = (up - down) / (2.0 * h);
                    let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
                    if rel >= 1e-4 {
                        return Err(format!(
                            "L={layers} H={hidden} D={dim} weight {i}: analytic {} numeric {numeric} rel {rel:.2e}",
                            grad[i]
                        ));
                    }
                    worst = worst.max(rel);
                }
            }
        }
    }
    Ok(format!("12 nets, max relative error {worst:.1e}"))
}

const PERFECT: &str = r#"{
    "data": {"synthetic": {"dof_count": 3, "duration_slots": 80, "signals_per_dof": 3, "kind": "minimum_jerk",
        "waypoints": [{"slot": 0, "position": [0.0]}, {"slot": 40, "position": [1.0]}, {"slot": 79, "position": [0.3]}],
        "jitter": 0.2}},
    "channel": {"mode": "stochastic", "slot_duration_ms": 10},
    "engine": {"window": 6, "horizon": 3},
    "strategies": ["non_predictive", "single_predictive", "tap"],
    "experiment": {"episodes": 5},
    "training": {"layers": 1, "hidden": 4}
}"#;

fn perfect_channel() -> Outcome {
    let mut sim = Simulation::new(ScenarioConfig::from_json(PERFECT).map_err(err)?).map_err(err)?;
    sim.set_network(GruNetwork::new(sim.gru_shape(), 5).map_err(err)?).map_err(err)?;
    let mut slots = 0;
    for strategy in [Strategy::NonPredictive, Strategy::SinglePredictive, Strategy::Tap] {
        for seed in 0..5 {
            let r = sim.run_episode(strategy, seed).map_err(err)?;
            for rec in &r.trace.records {
                check(
                    rec.tag == Source::Actual && rec.ae.iter().all(|&a| a == 0.0),
                    format!("{} seed {seed} slot {}: {:?} ae {:?}", strategy.name(), rec.slot, rec.tag, rec.ae),
                )?;
                slots += 1;
            }
        }
    }
    Ok(format!("{slots} slots, all AE exactly 0"))
}

fn periodic_ordering() -> Outcome {
    let config = ScenarioConfig::load(scenario("periodic-k6.json")).map_err(err)?;
    check(config.experiment.episodes >= 20, "fewer than 20 seeds")?;
    check(config.engine.horizon == 5 && config.channel.period_k == 6, "scenario is not k=6, gamma=5")?;
    let mut sim = Simulation::new(config).map_err(err)?;
    check(sim.data().dim() == 18, "trace is not 18-dimensional")?;
    sim.prepare_network(None).map_err(err)?;
    let report = sim.run_experiment().map_err(err)?;
    let ae = |s| report.strategy(s).map(|r| r.mean_average_ae).ok_or("strategy missing");
    let (tap, single, np) = (ae(Strategy::Tap)?, ae(Strategy::SinglePredictive)?, ae(Strategy::NonPredictive)?);
    let (g1, g2) = (1.0 - tap / single, 1.0 - single / np);
    check(
        g1 >= 0.05 && g2 >= 0.05,
        format!("TAP {tap:.5} single {single:.5} non-predictive {np:.5}; gaps {g1:.3} {g2:.3}"),
    )?;
    Ok(format!(
        "AE TAP {tap:.4} < single {single:.4} < non-predictive {np:.4} (gaps {:.0}%, {:.0}%)",
        100.0 * g1,
        100.0 * g2
    ))
}

fn latency_success() -> Outcome {
    let mut rates = Vec::new();
    for name in ["high-latency.json", "low-latency.json"] {
        let config = ScenarioConfig::load(scenario(name)).map_err(err)?;
        check(config.experiment.episodes == 100, format!("{name}: R is not 100"))?;
        let mut sim = Simulation::new(config).map_err(err)?;
        sim.prepare_network(None).map_err(err)?;
        let report = sim.run_experiment().map_err(err)?;
        let p = |s| report.strategy(s).map(|r| r.success_probability).ok_or("strategy missing");
        rates.push([
            p(Strategy::NonPredictive)?,
            p(Strategy::SinglePredictive)?,
            p(Strategy::Tap)?,
        ]);
    }
    let (high, low) = (rates[0], rates[1]);
    check(
        high[2] - high[0] >= 0.2,
        format!("high latency: TAP {} vs non-predictive {}", high[2], high[0]),
    )?;
    for k in 0..3 {
        check(
            low[k] >= high[k] - 0.02,
            format!("strategy {k}: low {} < high {} - 0.02", low[k], high[k]),
        )?;
    }
    Ok(format!(
        "high: NP {:.2} SP {:.2} TAP {:.2}; low: NP {:.2} SP {:.2} TAP {:.2}",
        high[0], high[1], high[2], low[0], low[1], low[2]
    ))
}

fn online_switch() -> Outcome {
    let config = ScenarioConfig::load(scenario("online-constant-velocity.json")).map_err(err)?;
    let mut sim = Simulation::new(config).map_err(err)?;
    sim.prepare_network(None).map_err(err)?;
    let report = sim.run_experiment().map_err(err)?;
    let tap = report.strategy(Strategy::Tap).ok_or("TAP missing")?;
    let trainer = tap.online.first().ok_or("no trainer summary")?;
    let first = trainer.reports.first().ok_or("no validation reports")?;
    check(first.mode == Mode::SinglePrediction, "did not start in single-prediction mode")?;
    let at = trainer.switched_at.ok_or("never switched")?;
    check(at <= 5000, format!("switched after {at} steps"))?;
    for r in trainer.reports.iter().filter(|r| r.steps >= at) {
        check(
            r.mode == Mode::Tap && r.generation_ae <= r.short_ae,
            format!("step {}: {:?}, GRU {:.4} vs AR {:.4}", r.steps, r.mode, r.generation_ae, r.short_ae),
        )?;
    }
    let last = trainer.reports.last().expect("checked above");
    Ok(format!(
        "switched at step {at}; final validation GRU {:.4} vs AR {:.4}",
        last.generation_ae, last.short_ae
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let run = |out: &str, threads: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_tapsim"))
            .args(["run", "--config"])
            .arg(scenario("high-latency.json"))
            .arg("--out")
            .arg(&out)
            .args(["--seed", "4242"])
            .env("TAPSIM_THREADS", threads)
            .output()
            .map_err(err)?;
        check(status.status.success(), String::from_utf8_lossy(&status.stderr).to_string())?;
        Ok((
            std::fs::read(out.join("report.json")).map_err(err)?,
            std::fs::read(out.join("per_slot.csv")).map_err(err)?,
        ))
    };
    let a = run("a", "1")?;
    let b = run("b", "2")?;
    check(a.0 == b.0, "report.json differs")?;
    check(a.1 == b.1, "per_slot.csv differs")?;
    Ok(format!("two runs byte-identical ({} + {} bytes)", a.0.len(), a.1.len()))
}

const BUNDLED: &str = r#"{
    "data": {"synthetic": {"dof_count": 2, "duration_slots": 101, "kind": "sinusoid_mixture",
        "components": [{"period_slots": 17, "amplitude": 0.4}]}},
    "channel": {"mode": "stochastic", "slot_duration_ms": 1},
    "engine": {"window": 6, "horizon": 3, "sample_rate_hz": 1000, "transmit_rate_hz": 200, "bundling": true},
    "strategies": ["non_predictive", "single_predictive", "tap"],
    "experiment": {"episodes": 1},
    "training": {"layers": 1, "hidden": 4}
}"#;

fn bundling_conservation() -> Outcome {
    let config = ScenarioConfig::from_json(BUNDLED).map_err(err)?;
    let mu = config.engine.mu();
    check(mu == 5, format!("mu is {mu}"))?;
    let mut sim = Simulation::new(config).map_err(err)?;
    sim.set_network(GruNetwork::new(sim.gru_shape(), 1).map_err(err)?).map_err(err)?;
    for strategy in [Strategy::NonPredictive, Strategy::SinglePredictive, Strategy::Tap] {
        let r = sim.run_episode(strategy, 3).map_err(err)?;
        let n = r.trace.records.len();
        let mut seen = vec![0usize; n];
        for &s in &r.trace.history_log {
            seen[s] += 1;
        }
        check(
            seen.iter().all(|&c| c == 1),
            format!("{}: history counts {seen:?}", strategy.name()),
        )?;
        for rec in &r.trace.records {
            check(
                rec.tag != Source::Actual || rec.slot % mu == 0,
                format!("{}: slot {} actuated from an inner bundle command", strategy.name(), rec.slot),
            )?;
        }
    }
    Ok("101 commands, each in history once; Actual only on slots divisible by 5".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("AR oracle equivalence", ar_oracle, Duration::from_secs(5)),
        ("GRU gradient check", gradient_check, Duration::from_secs(60)),
        ("perfect-channel identity", perfect_channel, Duration::from_secs(1)),
        ("periodic k=6 AE ordering", periodic_ordering, Duration::from_secs(300)),
        ("latency success ordering", latency_success, Duration::from_secs(300)),
        ("online mode switch", online_switch, Duration::from_secs(180)),
        ("determinism", determinism, Duration::from_secs(600)),
        ("bundling conservation", bundling_conservation, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if took <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {took:.1?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {took:.1?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why}; {took:.1?})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
