//! Acceptance gate. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits non-zero if any failed.

use std::time::{Duration, Instant};

use fracsoc::battery_model::{coulomb_count, expand_profile, simulate_cycle, BatteryModel, BatteryParams};
use fracsoc::data::{
    add_noise, partition, synth_cycle, CycleKind, Dataset, NoiseKind, NoiseSpec, Normalizer, PartitionPlan,
    SynthProfile, SynthSettings, TEMPERATURES,
};
use fracsoc::experiments::{run_paper_protocol, run_sweep, synthetic_corpus, Axis, CorpusConfig, RunSettings, SweepSpec};
use fracsoc::frac_calc::{gl_derivative, gl_weights, FracOrder, HistoryBuffer};
use fracsoc::metrics::MetricReport;
use fracsoc::nn::{init_params, Arch, NetworkConfig};
use fracsoc::pinn_loss::{total_loss, LossWeights, PhysicsConfig, SequenceSample};
use fracsoc::training::{
    evaluate, loss_and_gradient, make_windows, model_name, train, train_observed, TrainConfig, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn order(a: f64) -> FracOrder {
    FracOrder::new(a).expect("valid order")
}

fn gl_weight_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for k in 1..=9 {
        let a = k as f64 / 10.0;
        let w = gl_weights(order(a), 64).map_err(|e| e.to_string())?;
        for (j, got) in w.as_slice().iter().enumerate() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let want = sign * gamma(a + 1.0) / (gamma(j as f64 + 1.0) * gamma(a - j as f64 + 1.0));
            worst = worst.max(((got - want) / want).abs());
        }
    }
    check(worst <= 1e-10, format!("max relative error {worst:.2e}"))
}

fn integer_order_reduction() -> Outcome {
    let p = BatteryParams::default().with_alpha(FracOrder::ONE);
    let t_s = 1.0;
    let mut profile = Vec::new();
    for k in 0..20 {
        profile.push((if k % 4 == 3 { -3.0 } else { 5.0 }, 30.0));
        profile.push((0.0, 20.0));
    }
    let currents = expand_profile(&profile, t_s);
    let model = BatteryModel::new(p.clone(), 10, t_s).map_err(|e| e.to_string())?;
    let mut s = model.initial_state(0.95).map_err(|e| e.to_string())?;
    // Integer-order Thevenin: Euler SOC, semi-implicit RC branch.
    let (mut soc, mut up) = (0.95, 0.0);
    let (mut d_soc, mut d_up) = (0.0f64, 0.0f64);
    for &i in &currents {
        model.step(&mut s, i);
        soc -= t_s * p.eta * i / p.capacity_c_n;
        up = (up + t_s * i / p.cp) / (1.0 + t_s / (p.rp * p.cp));
        d_soc = d_soc.max((s.soc - soc).abs());
        d_up = d_up.max((s.u_p - up).abs());
    }
    check(
        currents.len() == 1000 && d_soc <= 1e-9 && d_up <= 1e-9,
        format!("{} steps, max |dsoc| {d_soc:.2e}, max |dUp| {d_up:.2e}", currents.len()),
    )
}

fn analytic_fractional_derivative() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for a in [0.25, 0.5, 0.75] {
        let exact = gamma(3.0) / gamma(3.0 - a);
        let err = |step: f64| -> Result<f64, String> {
            let n = (1.0 / step).round() as usize;
            let w = gl_weights(order(a), n).map_err(|e| e.to_string())?;
            let mut h = HistoryBuffer::new(n, step).map_err(|e| e.to_string())?;
            for k in 0..=n {
                let t = k as f64 * step;
                h.push(t * t);
            }
            Ok((gl_derivative(&h, &w).map_err(|e| e.to_string())? - exact).abs() / exact)
        };
        let (fine, coarse) = (err(1e-3)?, err(2e-3)?);
        ok &= fine < 0.01 && fine < coarse;
        parts.push(format!("alpha {a}: {fine:.2e} < {coarse:.2e}"));
    }
    check(ok, parts.join(", "))
}

fn short_cycle(name: &str, soc0: f64, seed: u64, seconds: f64) -> fracsoc::data::Cycle {
    let settings = SynthSettings {
        name: name.into(),
        duration_s: seconds,
        ..SynthSettings::default()
    };
    synth_cycle(&SynthProfile::random_walk(), &BatteryParams::default(), &settings, soc0, seed).expect("synthetic cycle")
}

/// Worst relative error between analytic and central-difference gradients
/// of the λ = 0.5 total loss, over 5 seeds and all three architectures.
fn fd_worst(cp: f64, eps: f64) -> Result<(f64, Vec<String>), String> {
    let battery = BatteryParams {
        cp,
        ..BatteryParams::default()
    };
    let physics = PhysicsConfig::new(battery, 5, 1.0).map_err(|e| e.to_string())?;
    let lw = LossWeights::new(0.5).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut sizes = Vec::new();
    for (arch, hidden) in [(Arch::Mlp, vec![3]), (Arch::Rnn, vec![8]), (Arch::Lstm, vec![4])] {
        let net = NetworkConfig::new(arch, hidden);
        for seed in 1..=5u64 {
            let ds = Dataset::from_cycles([
                short_cycle("a", 0.9, seed, 30.0),
                short_cycle("b", 0.6, seed + 100, 34.0),
            ])
            .map_err(|e| e.to_string())?;
            let norm = Normalizer::fit(&ds).map_err(|e| e.to_string())?;
            let cycles: Vec<_> = ds
                .cycles()
                .iter()
                .map(|c| make_windows(c, net.window_len, &norm))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let mut params = init_params(&net, seed, 0.5).map_err(|e| e.to_string())?;
            if params.len() > 200 {
                return Err(format!("{arch} has {} parameters", params.len()));
            }
            let (_, analytic) = loss_and_gradient(&params, &cycles, Variant::FdiffPinn, &physics, lw)
                .map_err(|e| e.to_string())?;
            let loss = |p: &fracsoc::nn::NetworkParams| {
                loss_and_gradient(p, &cycles, Variant::FdiffPinn, &physics, lw)
                    .map(|(l, _)| l.l_total)
                    .map_err(|e| e.to_string())
            };
            for k in 0..params.len() {
                let x = params.values()[k];
                params.values_mut()[k] = x + eps;
                let up = loss(&params)?;
                params.values_mut()[k] = x - eps;
                let down = loss(&params)?;
                params.values_mut()[k] = x;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic.values[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12));
            }
            if seed == 1 {
                sizes.push(format!("{arch} {}", params.len()));
            }
        }
    }
    Ok((worst, sizes))
}

fn gradient_correctness() -> Outcome {
    // With the default 2000 F polarization capacitance the residual is a
    // small difference of O(100) terms, and central differences at 1e-6
    // pick up ~1e-8 of rounding noise. A 20 F cell keeps every term O(1);
    // the default cell is still checked at a step where rounding is harmless.
    let (worst, sizes) = fd_worst(20.0, 1e-6)?;
    let (worst_default, _) = fd_worst(BatteryParams::default().cp, 1e-5)?;
    check(
        worst <= 1e-5 && worst_default <= 1e-5,
        format!(
            "max relative error {worst:.2e} at eps 1e-6 over 5 seeds ({}); default cell at eps 1e-5 {worst_default:.2e}",
            sizes.join(", ")
        ),
    )
}

fn physics_fixed_point() -> Outcome {
    let mut worst = 0.0f64;
    let profile = [(4.0, 120.0), (0.0, 60.0), (-2.0, 90.0), (6.0, 60.0)];
    for (a, m, t_s) in [(1.0, 10, 1.0), (0.5, 10, 1.0), (0.3, 25, 0.5), (0.75, 5, 2.0)] {
        let params = BatteryParams::default().with_alpha(order(a));
        let trace = simulate_cycle(&params, &profile, t_s, 0.85, m, 0.0).map_err(|e| e.to_string())?;
        let r = &trace.records;
        let sample = SequenceSample {
            soc_pred: r.iter().map(|x| x.soc_true.unwrap()).collect(),
            up_pred: r.iter().map(|x| x.up_true.unwrap()).collect(),
            currents: r.iter().map(|x| x.current).collect(),
            soc_true: r.iter().map(|x| x.soc_true.unwrap()).collect(),
            soc_origin: r[0].soc_true.unwrap(),
            up_origin: r[0].up_true.unwrap(),
        };
        let cfg = PhysicsConfig::new(params, m, t_s).map_err(|e| e.to_string())?;
        let (l, _) = total_loss(&[sample], &cfg, LossWeights::new(1.0).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max(l.l_dyn).max(l.l_pol);
    }
    check(worst <= 1e-18, format!("max(l_dyn, l_pol) {worst:.2e}"))
}

fn coulomb_identities() -> Outcome {
    let flat = coulomb_count(0.37, &[0.0; 1000], 1.0, 0.999, 3600.0).map_err(|e| e.to_string())?;
    let constant = flat.soc.iter().all(|&s| s.to_bits() == 0.37f64.to_bits());
    let full = coulomb_count(1.0, &[1.0; 3600], 1.0, 1.0, 3600.0).map_err(|e| e.to_string())?;
    let delta = full.soc.last().unwrap() - 1.0;
    let lossy = coulomb_count(1.0, &[1.0; 3600], 1.0, 0.999, 3600.0).map_err(|e| e.to_string())?;
    let last = *lossy.soc.last().unwrap();
    check(
        constant && (delta + 1.0).abs() <= 1e-12 && (last - 0.001).abs() <= 1e-12,
        format!("zero current constant: {constant}, dSOC {delta:.15}, eta 0.999 final {last:.15}"),
    )
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut ordered = true;
    for _ in 0..100 {
        let n = rng.random_range(1..200);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..1.5)).collect();
        let m = MetricReport::compute(&y, &p).map_err(|e| e.to_string())?;
        worst = worst.max((m.rmse * m.rmse - m.mse).abs());
        ordered &= m.mae <= m.rmse;
    }
    check(
        worst <= 1e-12 && ordered,
        format!("max |rmse^2 - mse| {worst:.2e}, mae <= rmse on all pairs: {ordered}"),
    )
}

fn lambda_zero_equivalence() -> Outcome {
    let train_set = Dataset::from_cycles([short_cycle("eq", 0.8, 5, 120.0)]).map_err(|e| e.to_string())?;
    let physics = PhysicsConfig::new(BatteryParams::default(), 10, 1.0).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (arch, hidden) in [(Arch::Mlp, vec![8]), (Arch::Rnn, vec![6]), (Arch::Lstm, vec![4])] {
        let net = NetworkConfig::new(arch, hidden);
        let trajectory = |variant| -> Result<Vec<Vec<u64>>, String> {
            let cfg = TrainConfig {
                variant,
                lambda: 0.0,
                epochs: 10,
                batch_size: 20,
                ..TrainConfig::default()
            };
            let mut steps = Vec::new();
            train_observed(&cfg, &net, &train_set, &Dataset::new(), &physics, |k, p| {
                if k <= 50 {
                    steps.push(p.values().iter().map(|v| v.to_bits()).collect());
                }
            })
            .map_err(|e| e.to_string())?;
            Ok(steps)
        };
        let plain = trajectory(Variant::Plain)?;
        let pinn = trajectory(Variant::FdiffPinn)?;
        let same = plain.len() == 50 && plain == pinn;
        let moved = plain.first() != plain.last();
        ok &= same && moved;
        parts.push(format!("{arch} {}", if same { "identical" } else { "differs" }));
    }
    check(ok, format!("50 steps: {}", parts.join(", ")))
}

/// The noisy random-walk corpus: four training and two test cycles.
fn regularization_corpus() -> Result<(Dataset, Dataset), String> {
    let params = BatteryParams::default();
    let starts = [0.95, 0.6, 0.8, 0.7, 0.85, 0.65];
    let temps = [-20.0, -10.0, 0.0, 10.0, 0.0, -10.0];
    let mut cycles = Vec::new();
    for i in 0..6 {
        let settings = SynthSettings {
            name: format!("rw{i}"),
            temperature_c: temps[i],
            ..SynthSettings::default()
        };
        cycles.push(
            synth_cycle(&SynthProfile::random_walk(), &params, &settings, starts[i], 100 + i as u64)
                .map_err(|e| e.to_string())?,
        );
    }
    let clean = Dataset::from_cycles(cycles).map_err(|e| e.to_string())?;
    let ds = add_noise(&clean, &NoiseSpec::inputs(NoiseKind::Gaussian, 0.1, 7)).map_err(|e| e.to_string())?;
    Ok((
        Dataset::from_cycles(ds.cycles()[..4].to_vec()).map_err(|e| e.to_string())?,
        Dataset::from_cycles(ds.cycles()[4..].to_vec()).map_err(|e| e.to_string())?,
    ))
}

fn regularization_config(lambda: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        variant: Variant::FdiffPinn,
        lambda,
        seed,
        epochs: 60,
        batch_size: 40,
        lr_final_fraction: 0.05,
        ..TrainConfig::default()
    }
}

fn regularization_effect() -> Outcome {
    let (train_set, test_set) = regularization_corpus()?;
    let net = NetworkConfig::new(Arch::Mlp, vec![64]);
    let mut mean = [(0.0, 0.0); 2];
    for (slot, lambda) in [0.0, 0.25].into_iter().enumerate() {
        for seed in [1, 2, 3] {
            let cfg = regularization_config(lambda, seed);
            let physics =
                PhysicsConfig::new(BatteryParams::default(), cfg.memory_len, 1.0).map_err(|e| e.to_string())?;
            let (model, _) = train(&cfg, &net, &train_set, &Dataset::new(), &physics).map_err(|e| e.to_string())?;
            let (m, l) = evaluate(&model, &test_set, &physics, cfg.loss_weights()).map_err(|e| e.to_string())?;
            mean[slot].0 += m.mae / 3.0;
            mean[slot].1 += l.l_phy / 3.0;
        }
    }
    let [(mae0, phy0), (mae1, phy1)] = mean;
    check(
        phy1 * 2.0 <= phy0 && mae1 <= 1.10 * mae0,
        format!(
            "l_phy {phy0:.3e} -> {phy1:.3e} ({:.0}x lower), MAE {mae0:.4} -> {mae1:.4} ({:+.1}%)",
            phy0 / phy1,
            100.0 * (mae1 / mae0 - 1.0)
        ),
    )
}

fn protocol_settings() -> RunSettings {
    RunSettings {
        train: TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
        hidden_dims: vec![12],
        ..RunSettings::default()
    }
}

fn drive_corpus(kinds: Vec<CycleKind>) -> Result<Dataset, String> {
    synthetic_corpus(&CorpusConfig {
        kinds,
        cycle_seconds: 240.0,
        ..CorpusConfig::default()
    })
    .map_err(|e| e.to_string())
}

fn protocol_shape() -> Outcome {
    let corpus = drive_corpus(CycleKind::DRIVE.to_vec())?;
    let table = run_paper_protocol(&corpus, 5, &protocol_settings(), &[1]).map_err(|e| e.to_string())?;
    let models: Vec<String> = Variant::ALL
        .into_iter()
        .flat_map(|v| Arch::ALL.into_iter().map(move |a| model_name(a, v)))
        .collect();
    let mut problems = Vec::new();
    if table.temperatures != TEMPERATURES.to_vec() {
        problems.push(format!("temperature rows {:?}", table.temperatures));
    }
    if table.models != models {
        problems.push(format!("model columns {:?}", table.models));
    }
    if table.cells.len() != 4 || table.cells.iter().any(|r| r.len() != 6 || r.iter().any(Option::is_none)) {
        problems.push("missing cells".into());
    }
    let md = table.to_markdown();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| -") || l.starts_with("| 0") || l.starts_with("| 1")).collect();
    if rows.len() != 4 || rows.iter().any(|r| r.matches('|').count() != 14) {
        problems.push(format!("markdown layout: {} temperature rows", rows.len()));
    }
    let csv = table.to_csv().map_err(|e| e.to_string())?;
    if csv.lines().count() != 1 + 24 || !csv.starts_with("experiment,test_kind,temp_c,model,mae,mse\n") {
        problems.push("CSV layout".into());
    }

    let mut full_kinds = CycleKind::DRIVE.to_vec();
    full_kinds.push(CycleKind::CcCv);
    let full = drive_corpus(full_kinds)?;
    for id in 1..=5 {
        let plan = PartitionPlan::experiment(id).map_err(|e| e.to_string())?;
        let (tr, te) = partition(&full, &plan).map_err(|e| e.to_string())?;
        let overlap = tr
            .cycles()
            .iter()
            .any(|a| te.cycles().iter().any(|b| a.name == b.name || a.kind == b.kind));
        if overlap || tr.is_empty() || te.len() != 4 {
            problems.push(format!("experiment {id} split"));
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "4 temperatures x 6 models x {MAE, MSE}; rotations 1-5 disjoint".into()
        } else {
            problems.join("; ")
        },
    )
}

fn determinism() -> Outcome {
    let mut same = Vec::new();

    let (train_set, test_set) = regularization_corpus()?;
    let net = NetworkConfig::new(Arch::Mlp, vec![64]);
    let physics = PhysicsConfig::new(BatteryParams::default(), 10, 1.0).map_err(|e| e.to_string())?;
    let report = || -> Result<String, String> {
        let cfg = TrainConfig {
            epochs: 5,
            ..regularization_config(0.25, 2)
        };
        let (_, r) = train(&cfg, &net, &train_set, &test_set, &physics).map_err(|e| e.to_string())?;
        r.to_csv().map_err(|e| e.to_string())
    };
    same.push(("training report", report()? == report()?));

    let corpus = drive_corpus(CycleKind::DRIVE.to_vec())?;
    let sweep = |workers| -> Result<(String, Vec<String>), String> {
        let mut spec = SweepSpec::new(Axis::Lambda, vec![0.0, 0.5]);
        spec.seeds = vec![1, 2];
        spec.settings = RunSettings {
            workers,
            ..protocol_settings()
        };
        spec.settings.train.epochs = 2;
        let t = run_sweep(&spec, &corpus).map_err(|e| e.to_string())?;
        let reports = t
            .runs
            .iter()
            .map(|r| r.report.as_ref().map(|x| x.to_csv().unwrap()).unwrap_or_default())
            .collect();
        Ok((t.to_csv().map_err(|e| e.to_string())?, reports))
    };
    same.push(("sweep", sweep(1)? == sweep(2)?));

    let protocol = || -> Result<String, String> {
        run_paper_protocol(&corpus, 3, &protocol_settings(), &[4])
            .and_then(|t| t.to_csv())
            .map_err(|e| e.to_string())
    };
    same.push(("protocol", protocol()? == protocol()?));

    let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    for d in [&dir_a, &dir_b] {
        fracsoc::data::save_dir(&drive_corpus(vec![CycleKind::Udds])?, d.path()).map_err(|e| e.to_string())?;
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("UDDS_0.csv")).map_err(|e| e.to_string());
    same.push(("corpus CSV", read(&dir_a)? == read(&dir_b)?));

    let ok = same.iter().all(|(_, s)| *s);
    let detail: Vec<String> = same
        .iter()
        .map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "differs" }))
        .collect();
    check(ok, detail.join(", "))
}

fn main() {
    type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        (1, "GL weight oracle", Duration::from_secs(1), gl_weight_oracle),
        (2, "integer-order reduction", Duration::from_secs(1), integer_order_reduction),
        (3, "analytic fractional derivative", Duration::from_secs(5), analytic_fractional_derivative),
        (4, "gradient correctness", Duration::from_secs(30), gradient_correctness),
        (5, "physics fixed point", Duration::from_secs(1), physics_fixed_point),
        (6, "Coulomb identities", Duration::from_secs(60), coulomb_identities),
        (7, "metric identities", Duration::from_secs(60), metric_identities),
        (8, "lambda = 0 equivalence", Duration::from_secs(120), lambda_zero_equivalence),
        (9, "regularization effect", Duration::from_secs(300), regularization_effect),
        (10, "protocol shape", Duration::from_secs(600), protocol_shape),
        (11, "determinism", Duration::from_secs(600), determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.1?}, budget {budget:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} criterion {n:>2} {name}: {detail} [{elapsed:.2?}]");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
