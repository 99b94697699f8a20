//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use marketverse::agents::portfolio::min_variance_weights;
use marketverse::agents::{
    build_batch, evaluate_policy, policy_gradient, rollout, surrogate_objective, train_reinforce, AgentState,
    BaselineKind, BuyAndHold, LinearPolicy, NoiseSchedule, Policy, RandomPolicy, ReinforceConfig, ZeroPolicy,
    SOLVER_ITERATIONS,
};
use marketverse::data::panel::BASE_FEATURES;
use marketverse::data::MarketPanel;
use marketverse::env::{self, CostModel, EnvConfig, EnvKind, EnvSpec};
use marketverse::evaluation::{compute_metrics, max_drawdown, period_returns};
use marketverse::features::{add_turbulence, turbulence, TurbulenceConfig};
use marketverse::parallel::{run_batch, WorkerPoolConfig};
use marketverse::pipeline::{self, backtest, load_bars, rerun_manifest, PipelineConfig, RunMode};
use marketverse::seed;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs, || {
        format!("took {:.2}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn panel(closes: &[Vec<f64>]) -> MarketPanel {
    let t_len = closes[0].len();
    let mut values = Vec::with_capacity(t_len * closes.len() * BASE_FEATURES.len());
    for t in 0..t_len {
        for series in closes {
            let c = series[t];
            values.extend_from_slice(&[c, c, c, c, 1.0]);
        }
    }
    MarketPanel::new(
        (0..t_len as i64).map(|t| t * 3600).collect(),
        (0..closes.len()).map(|n| format!("S{n}")).collect(),
        BASE_FEATURES.iter().map(|s| s.to_string()).collect(),
        values,
        3600,
        8760.0,
    )
    .unwrap()
}

fn random_walk(rng: &mut ChaCha8Rng, n: usize, t_len: usize, vol: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut p = rng.random_range(1.0..1000.0);
            (0..t_len)
                .map(|_| {
                    let v = p;
                    p *= 1.0 + rng.random_range(-vol..vol);
                    v
                })
                .collect()
        })
        .collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn accounting_identity() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut steps, mut configs) = (0usize, 0usize);
    while steps < 10_000 {
        configs += 1;
        let n = rng.random_range(1..=5);
        let t_len = rng.random_range(20..80);
        let mut p = panel(&random_walk(&mut rng, n, t_len, 0.05));
        let mut cfg = EnvConfig {
            initial_cash: rng.random_range(100.0..1e6),
            hmax: rng.random_range(1..300),
            cost_model: match rng.random_range(0..3) {
                0 => CostModel::ZERO,
                1 => CostModel::flat(rng.random_range(0.0..20.0)),
                _ => CostModel::percentage(rng.random_range(0.0..0.02)),
            },
            bid_ask_spread: rng.random_range(0.0..0.02),
            reward_scaling: rng.random_range(1e-4..1.0),
            ..EnvConfig::default()
        };
        if rng.random_bool(0.3) && t_len > n + 10 {
            p = add_turbulence(&p, &TurbulenceConfig { lookback: n + 4, ridge_epsilon: 1e-8 }).unwrap();
            cfg.turbulence_threshold = Some(rng.random_range(0.0..20.0));
        }
        let (mut state, _) = env::reset(&p, &cfg, 0).unwrap();
        while !state.done {
            let action: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(0.02) { f64::NAN } else { rng.random_range(-1.3..1.3) })
                .collect();
            let (next, reward, _, info) = env::step(&state, &action, &p, &cfg).unwrap();
            let t = state.step_index;
            ensure(next.cash >= 0.0, || format!("negative cash {} at step {steps}", next.cash))?;
            ensure(next.holdings.iter().all(|&h| h >= 0), || format!("negative holdings {:?}", next.holdings))?;
            ensure(info.costs >= 0.0 && info.slippage >= 0.0, || "negative cost".into())?;

            // value identity: trading only destroys costs + slippage
            let value_before: f64 =
                state.cash + (0..n).map(|i| state.holdings[i] as f64 * p.close(t, i)).sum::<f64>();
            ensure(rel_close(info.value_before, value_before, 1e-9), || "value_before mismatch".into())?;
            ensure(rel_close(info.value_after_trade, value_before - info.costs - info.slippage, 1e-9), || {
                format!("value identity broken at step {steps}: {info:?}")
            })?;
            // cash moves by executed notional at fill prices plus fees
            let spread = cfg.bid_ask_spread;
            let notional: f64 = (0..n)
                .map(|i| {
                    let e = info.executed[i];
                    let fill = if e > 0.0 { 1.0 + spread } else { 1.0 - spread };
                    e * p.close(t, i) * fill
                })
                .sum();
            ensure(rel_close(next.cash, state.cash - notional - info.costs, 1e-9), || "cash identity broken".into())?;
            let value: f64 = next.cash + (0..n).map(|i| next.holdings[i] as f64 * p.close(t + 1, i)).sum::<f64>();
            ensure(rel_close(info.value, value, 1e-9), || "mark-to-market mismatch".into())?;
            ensure(rel_close(reward, (value - value_before) * cfg.reward_scaling, 1e-9), || "reward mismatch".into())?;
            state = next;
            steps += 1;
        }
    }
    within_time(start.elapsed(), 10.0)?;
    Ok(format!("{steps} steps over {configs} configs, 0 violations"))
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_cum = 0.0f64;
    for case in 0..1000 {
        let len = rng.random_range(2..=50);
        let mut v = rng.random_range(1.0..1e6);
        let values: Vec<f64> = (0..len)
            .map(|_| {
                let out = v;
                v *= 1.0 + rng.random_range(-0.1..0.1);
                out
            })
            .collect();
        let mut brute = 0.0f64;
        for j in 0..len {
            for i in 0..=j {
                brute = brute.min(values[j] / values[i] - 1.0);
            }
        }
        let dd = max_drawdown(&values);
        ensure(dd == brute, || format!("case {case}: drawdown {dd} vs brute force {brute}"))?;
        let product = period_returns(&values).unwrap().iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0;
        let cum = compute_metrics(&values, 252.0).unwrap().cumulative_return;
        worst_cum = worst_cum.max((cum - product).abs());
        ensure((cum - product).abs() <= 1e-12, || format!("case {case}: cumulative {cum} vs {product}"))?;
    }
    Ok(format!("1000 series, drawdown exact, max cumulative error {worst_cum:.1e}"))
}

fn dense_turbulence(closes: &[Vec<f64>], lookback: usize, ridge_epsilon: f64) -> Vec<f64> {
    let n = closes.len();
    let t_len = closes[0].len();
    let ret = |s: usize| DVector::from_iterator(n, (0..n).map(|i| closes[i][s] / closes[i][s - 1] - 1.0));
    let mut out = vec![0.0; t_len];
    for t in lookback + 1..t_len {
        let hist: Vec<DVector<f64>> = (t - lookback..t).map(ret).collect();
        let mu = hist.iter().fold(DVector::zeros(n), |acc, r| acc + r) / lookback as f64;
        let mut cov = hist.iter().fold(DMatrix::zeros(n, n), |acc, r| {
            let d = r - &mu;
            acc + &d * d.transpose()
        }) / (lookback as f64 - 1.0);
        let tr = cov.trace();
        let eps = if tr > 0.0 { ridge_epsilon * tr / n as f64 } else { ridge_epsilon };
        for i in 0..n {
            cov[(i, i)] += eps;
        }
        let d = ret(t) - &mu;
        out[t] = (d.transpose() * cov.try_inverse().unwrap() * &d)[(0, 0)];
    }
    out
}

fn turbulence_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let lookback = rng.random_range(8..40);
        let closes = random_walk(&mut rng, 5, lookback + 40, 0.03);
        let p = panel(&closes);
        let cfg = TurbulenceConfig { lookback, ridge_epsilon: 1e-8 };
        let ours = turbulence(&p, &cfg).unwrap();
        let oracle = dense_turbulence(&closes, lookback, cfg.ridge_epsilon);
        for (a, b) in ours.iter().zip(&oracle) {
            let err = (a - b).abs() / b.abs().max(1.0);
            worst = worst.max(err);
            ensure(err <= 1e-8, || format!("case {case}: {a} vs dense {b}"))?;
        }

        let mut order: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted = turbulence(&p.permute_symbols(&order).unwrap(), &cfg).unwrap();
        ensure(permuted == ours, || format!("case {case}: permutation {order:?} changed the index"))?;

        // binary scales are exact in floating point
        let scaled: Vec<Vec<f64>> = closes
            .iter()
            .map(|s| {
                let k = 2f64.powi(rng.random_range(-20..20));
                s.iter().map(|c| c * k).collect()
            })
            .collect();
        let rescaled = turbulence(&panel(&scaled), &cfg).unwrap();
        ensure(rescaled == ours, || format!("case {case}: price scaling changed the index"))?;
    }
    Ok(format!("50 panels, max rel error vs dense {worst:.1e}, permutation and scale exact"))
}

fn parallel_determinism() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = EnvConfig { initial_cash: 50_000.0, hmax: 20, ..EnvConfig::default() };
    let specs: Vec<EnvSpec> = (0..4)
        .map(|_| EnvSpec::new(EnvKind::Stock, Arc::new(panel(&random_walk(&mut rng, 3, 60, 0.02))), cfg.clone()))
        .collect();
    let envs: Vec<EnvSpec> = (0..100).map(|i| specs[i % 4].clone()).collect();
    let mut linear = LinearPolicy::new(envs[0].observation_dim(), 3, 0.4);
    let params: Vec<f64> = (0..linear.n_params()).map(|_| rng.random_range(-0.5..0.5)).collect();
    linear.set_params(&params);
    linear.set_exploring(true);
    let mut transitions = 0;
    for run in 0..20u64 {
        let policy: &dyn Policy = if run % 2 == 0 { &linear } else { &RandomPolicy };
        let base_seed = seed::derive(99, run);
        let reference = run_batch(&envs, policy, None, &WorkerPoolConfig::new(1, base_seed)).map_err(|e| e.to_string())?;
        for workers in [2, 8] {
            let other = run_batch(&envs, policy, None, &WorkerPoolConfig::new(workers, base_seed))
                .map_err(|e| e.to_string())?;
            ensure(other.trajectories.len() == 100, || "lost trajectories".into())?;
            for (i, (a, b)) in reference.trajectories.iter().zip(&other.trajectories).enumerate() {
                ensure(a.bitwise_eq(b), || format!("seed run {run}: env {i} differs with {workers} workers"))?;
            }
        }
        transitions += reference.transition_count;
    }
    within_time(start.elapsed(), 30.0)?;
    Ok(format!("20 seeds x 100 envs x W in {{1,2,8}}, {transitions} transitions per W, bitwise equal"))
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = EnvSpec::new(
        EnvKind::Stock,
        Arc::new(panel(&random_walk(&mut rng, 3, 21, 0.03))),
        EnvConfig { initial_cash: 10_000.0, hmax: 10, reward_scaling: 1e-2, ..EnvConfig::default() },
    );
    let mut policy = LinearPolicy::new(spec.observation_dim(), 3, 0.3);
    let params: Vec<f64> = (0..policy.n_params()).map(|_| rng.random_range(-0.3..0.3)).collect();
    policy.set_params(&params);
    policy.set_exploring(true);
    let mut trajectories = Vec::new();
    for episode in 0..4 {
        let mut env = spec.build().map_err(|e| e.to_string())?;
        let traj = rollout(env.as_mut(), &mut policy.clone(), episode, None).map_err(|e| e.to_string())?;
        for tr in &traj.transitions {
            policy.normalizer.update(&tr.observation);
        }
        trajectories.push(traj);
    }
    ensure(trajectories.iter().all(|t| t.len() == 20), || "expected 20-step episodes".into())?;
    let samples = build_batch(&policy, &trajectories, 0.99, BaselineKind::MeanReturn);
    let analytic = policy_gradient(&policy, &samples, trajectories.len());
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let mut bumped = policy.clone();
        let mut p = params.clone();
        p[k] = params[k] + h;
        bumped.set_params(&p);
        let up = surrogate_objective(&bumped, &samples, trajectories.len());
        p[k] = params[k] - h;
        bumped.set_params(&p);
        let down = surrogate_objective(&bumped, &samples, trajectories.len());
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
        ensure(err <= 1e-4, || format!("param {k}: analytic {} vs numeric {numeric}", analytic[k]))?;
    }
    Ok(format!("{} parameters, max relative error {worst:.1e}", params.len()))
}

fn drift_panel(rng: &mut ChaCha8Rng, t_len: usize) -> MarketPanel {
    let mut p = 100.0;
    let drifting: Vec<f64> = (0..t_len)
        .map(|_| {
            let v = p;
            p *= 1.002 + rng.random_range(-0.002..0.002);
            v
        })
        .collect();
    panel(&[vec![50.0; t_len], drifting, vec![80.0; t_len]])
}

fn episode_return(traj: &marketverse::env::Trajectory) -> f64 {
    traj.values[traj.values.len() - 1] / traj.values[0] - 1.0
}

fn one_sided_p(diffs: &[f64]) -> f64 {
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = mean / (var.sqrt() / n.sqrt());
    1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t)
}

fn learning_sanity() -> Check {
    let start = Instant::now();
    let env_cfg = EnvConfig { initial_cash: 100_000.0, hmax: 100, reward_scaling: 1e-3, ..EnvConfig::default() };
    let (mut trained, mut random, mut zero) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(6, s));
        let full = drift_panel(&mut rng, 301);
        let train = EnvSpec::new(EnvKind::Stock, Arc::new(full.slice_rows(0..201).unwrap()), env_cfg.clone());
        let test = EnvSpec::new(EnvKind::Stock, Arc::new(full.slice_rows(200..301).unwrap()), env_cfg.clone());
        let cfg = ReinforceConfig {
            learning_rate: 0.05,
            episodes_per_update: 8,
            total_updates: 40,
            noise: NoiseSchedule { initial: 0.5, final_: 0.1 },
            seed: s,
            ..ReinforceConfig::default()
        };
        let outcome = train_reinforce(&train, LinearPolicy::new(train.observation_dim(), 3, 0.5), &cfg)
            .map_err(|e| e.to_string())?;
        trained.push(episode_return(&evaluate_policy(&outcome.policy, &test, s).map_err(|e| e.to_string())?));
        let mut r = 0.0;
        for e in 0..10 {
            r += episode_return(&evaluate_policy(&RandomPolicy, &test, seed::derive(s, e)).map_err(|e| e.to_string())?);
        }
        random.push(r / 10.0);
        zero.push(episode_return(&evaluate_policy(&ZeroPolicy, &test, s).map_err(|e| e.to_string())?));
    }
    let diff = |other: &[f64]| trained.iter().zip(other).map(|(a, b)| a - b).collect::<Vec<_>>();
    let p_random = one_sided_p(&diff(&random));
    let p_zero = one_sided_p(&diff(&zero));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let summary = format!(
        "mean test return trained {:.4}, random {:.4}, zero {:.4}; p vs random {p_random:.2e}, p vs zero {p_zero:.2e}",
        mean(&trained),
        mean(&random),
        mean(&zero)
    );
    ensure(p_random < 0.01 && p_zero < 0.01, || summary.clone())?;
    within_time(start.elapsed(), 300.0)?;
    Ok(summary)
}

fn min_variance_solver() -> Check {
    let sol = min_variance_weights(&[1.0, 0.0, 0.0, 4.0], 2, SOLVER_ITERATIONS);
    let w = &sol.weights;
    ensure((w[0] - 0.8).abs() <= 1e-4 && (w[1] - 0.2).abs() <= 1e-4, || format!("weights {w:?}"))?;
    ensure(sol.objective_trace.windows(2).all(|p| p[1] <= p[0]), || "objective increased".into())?;
    Ok(format!(
        "weights ({:.6}, {:.6}), objective {:.6} -> {:.6} over {} iterations",
        w[0],
        w[1],
        sol.objective_trace[0],
        sol.objective_trace.last().unwrap(),
        sol.objective_trace.len() - 1
    ))
}

fn sample_config() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/run.json");
    PipelineConfig::load(&path).unwrap()
}

fn leakage() -> Check {
    let cfg = sample_config();
    let bars = load_bars(&cfg).map_err(|e| e.to_string())?;
    let windows = cfg.windows.resolve_fixed().map_err(|e| e.to_string())?.unwrap();
    let truncated: Vec<_> = bars.iter().filter(|b| b.timestamp < windows.test.end).cloned().collect();
    ensure(truncated.len() < bars.len(), || "nothing after the test window".into())?;
    let fingerprint = |bars: &[marketverse::data::Bar]| -> Result<String, String> {
        let out = backtest(&cfg, bars, &windows, 0).map_err(|e| e.to_string())?;
        let states: Vec<&AgentState> = out.candidate_states.iter().chain([&out.selected_state]).collect();
        serde_json::to_string(&(&out.result, states)).map_err(|e| e.to_string())
    };
    let full = fingerprint(&bars)?;
    let cut = fingerprint(&truncated)?;
    ensure(full == cut, || "outputs differ after truncation".into())?;
    Ok(format!("dropped {} bars after the test window, {} output bytes identical", bars.len() - truncated.len(), full.len()))
}

fn buy_and_hold_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=6);
        let t_len = rng.random_range(2..200);
        let closes = random_walk(&mut rng, n, t_len, 0.05);
        let cash = rng.random_range(1_000.0..500_000.0);
        let hmax = rng.random_range(1..500);
        let cfg = EnvConfig {
            initial_cash: cash,
            hmax,
            cost_model: CostModel::ZERO,
            bid_ask_spread: 0.0,
            ..EnvConfig::default()
        };
        let spec = EnvSpec::new(EnvKind::Stock, Arc::new(panel(&closes)), cfg);
        let engine = *evaluate_policy(&BuyAndHold::new(), &spec, 0).map_err(|e| e.to_string())?.values.last().unwrap();

        let mut left = cash;
        let mut oracle = 0.0;
        for c in &closes {
            let shares = ((left / c[0]).floor() as i64).min(hmax) as f64;
            left -= shares * c[0];
            oracle += shares * c[0] * (c[c.len() - 1] / c[0]);
        }
        oracle += left;

        let err = (engine - oracle).abs() / oracle;
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("case {case}: engine {engine} vs oracle {oracle}"))?;
    }
    Ok(format!("200 panels, max relative error {worst:.1e}"))
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = sample_config();
    cfg.output_dir = dir.path().join("run");
    let start = Instant::now();
    pipeline::run(&cfg, RunMode::Full).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    within_time(elapsed, 120.0)?;
    let rerun_dir = dir.path().join("rerun");
    rerun_manifest(&cfg.output_dir.join("manifest.json"), Some(rerun_dir.clone())).map_err(|e| e.to_string())?;
    let files = collect_files(&cfg.output_dir);
    ensure(files.len() >= 10, || format!("only {} output files", files.len()))?;
    for rel in &files {
        if rel == Path::new("manifest.json") {
            continue;
        }
        let a = fs::read(cfg.output_dir.join(rel)).map_err(|e| e.to_string())?;
        let b = fs::read(rerun_dir.join(rel)).map_err(|e| format!("{}: {e}", rel.display()))?;
        ensure(a == b, || format!("{} differs on rerun", rel.display()))?;
    }
    Ok(format!(
        "pipeline finished in {:.2}s, {} output files reproduced bitwise from the manifest",
        elapsed.as_secs_f64(),
        files.len() - 1
    ))
}

fn collect_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("accounting identity", accounting_identity),
        ("metric oracle", metric_oracle),
        ("turbulence", turbulence_suite),
        ("parallel determinism", parallel_determinism),
        ("gradient check", gradient_check),
        ("learning sanity", learning_sanity),
        ("min-variance solver", min_variance_solver),
        ("leakage", leakage),
        ("buy-and-hold oracle", buy_and_hold_oracle),
        ("end-to-end", end_to_end),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<22} {secs:>7.2}s  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<22} {secs:>7.2}s  {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
