use fracsoc::battery_model::BatteryParams;
use fracsoc::data::{synth_cycle, CycleKind, Dataset, SynthProfile, SynthSettings};
use fracsoc::experiments::{
    emit_plot, run_paper_protocol, run_sweep, synthetic_corpus, Axis, CorpusConfig, RunSettings, SweepSpec,
};
use fracsoc::nn::{Arch, NetworkConfig};
use fracsoc::pinn_loss::{LossWeights, PhysicsConfig};
use fracsoc::training::{evaluate, train, TrainConfig, Variant};
use fracsoc::Error;

fn one_cycle() -> Dataset {
    let settings = SynthSettings {
        name: "smoke".into(),
        duration_s: 300.0,
        ..SynthSettings::default()
    };
    let c = synth_cycle(&SynthProfile::random_walk(), &BatteryParams::default(), &settings, 0.9, 21).unwrap();
    Dataset::from_cycles([c]).unwrap()
}

fn physics() -> PhysicsConfig {
    PhysicsConfig::new(BatteryParams::default(), 10, 1.0).unwrap()
}

fn cfg(lambda: f64, seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        lambda,
        seed,
        epochs,
        ..TrainConfig::default()
    }
}

/// Mean over seeds 1-3 of (l_data, l_phy) on the training cycle.
fn seed_mean(lambda: f64, epochs: usize) -> (f64, f64) {
    let ds = one_cycle();
    let net = NetworkConfig::default();
    let mut out = (0.0, 0.0);
    for seed in 1..=3 {
        let (model, _) = train(&cfg(lambda, seed, epochs), &net, &ds, &Dataset::new(), &physics()).unwrap();
        let (_, l) = evaluate(&model, &ds, &physics(), LossWeights::new(lambda).unwrap()).unwrap();
        out.0 += l.l_data / 3.0;
        out.1 += l.l_phy / 3.0;
    }
    out
}

#[test]
fn data_only_training_cuts_data_loss_tenfold() {
    let (initial, _) = seed_mean(0.0, 0);
    let (fin, _) = seed_mean(0.0, 200);
    assert!(fin < initial / 10.0, "l_data {initial:.3e} -> {fin:.3e}");
}

#[test]
fn physics_weight_halves_residuals() {
    let (_, plain) = seed_mean(0.0, 200);
    let (_, pinn) = seed_mean(0.25, 200);
    assert!(pinn * 2.0 <= plain, "l_phy {plain:.3e} vs {pinn:.3e}");
}

#[test]
fn training_loss_mostly_decreases() {
    // At the default rate the epoch-mean loss oscillates well past 5% once
    // it nears the noise floor of a single short cycle.
    let ds = one_cycle();
    for arch in Arch::ALL {
        let net = NetworkConfig::new(arch, vec![8]);
        for seed in 1..=3 {
            let config = TrainConfig {
                learning_rate: 5e-4,
                ..cfg(0.25, seed, 40)
            };
            let (_, report) = train(&config, &net, &ds, &Dataset::new(), &physics()).unwrap();
            let losses: Vec<f64> = report.epochs.iter().map(|e| e.train.l_total).collect();
            assert_eq!(losses.len(), 40);
            assert!(losses.last() < losses.first(), "{arch}: {losses:?}");
            for w in losses.windows(2) {
                assert!(w[1] <= w[0] * 1.05, "{arch} seed {seed}: rise {} -> {}", w[0], w[1]);
            }
        }
    }
}

fn small_settings(epochs: usize) -> RunSettings {
    RunSettings {
        train: TrainConfig {
            epochs,
            ..TrainConfig::default()
        },
        hidden_dims: vec![6],
        ..RunSettings::default()
    }
}

fn corpus(kinds: Vec<CycleKind>) -> Dataset {
    synthetic_corpus(&CorpusConfig {
        kinds,
        cycle_seconds: 90.0,
        ..CorpusConfig::default()
    })
    .unwrap()
}

#[test]
fn protocol_holds_out_us06_for_experiment_five() {
    let t = run_paper_protocol(&corpus(CycleKind::DRIVE.to_vec()), 5, &small_settings(1), &[1]).unwrap();
    assert_eq!(t.test_kind, CycleKind::Us06);
    assert_eq!(t.runs.len(), 6);
    assert!(t.runs.iter().all(|r| r.outcome.is_ok()));
}

#[test]
fn protocol_without_required_kind_is_a_plan_error() {
    let ds = corpus(vec![CycleKind::Udds, CycleKind::Hwfet]);
    let err = run_paper_protocol(&ds, 2, &small_settings(1), &[1]).unwrap_err();
    assert!(matches!(err, Error::Plan(_)), "{err}");
}

#[test]
fn sweep_table_is_complete_and_written() {
    let mut spec = SweepSpec::new(Axis::MemoryLen, vec![5.0, 10.0]);
    spec.settings = small_settings(1);
    spec.seeds = vec![1, 2];
    let table = run_sweep(&spec, &corpus(CycleKind::DRIVE.to_vec())).unwrap();
    // grid x arch x variant x seed
    assert_eq!(table.runs.len(), 2 * 3 * 2 * 2);
    assert_eq!(table.aggregates().len(), 2 * 3 * 2);
    let csv = table.to_csv().unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("run,")).count(), 24);
    assert_eq!(csv.lines().filter(|l| l.starts_with("mean,")).count(), 12);
    assert_eq!(csv.lines().filter(|l| l.starts_with("max,")).count(), 12);

    let dir = tempfile::tempdir().unwrap();
    table.write_dir(dir.path()).unwrap();
    for f in ["results.csv", "results.md", "plot_memory_len.svg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let report = dir.path().join("runs/FDIFF-PINN-LSTM/memory_len-5/seed-2/report.csv");
    assert_eq!(std::fs::read_to_string(report).unwrap().lines().count(), 2);
    assert_eq!(emit_plot(&table).unwrap(), emit_plot(&table.clone()).unwrap());
}

#[test]
fn frac_order_and_noise_axes_run() {
    let ds = corpus(CycleKind::DRIVE.to_vec());
    for (axis, values) in [(Axis::FracOrder, vec![0.5]), (Axis::Noise, vec![0.05]), (Axis::CycleRotation, vec![3.0])] {
        let mut spec = SweepSpec::new(axis, values);
        spec.archs = vec![Arch::Mlp];
        spec.variants = vec![Variant::FdiffPinn];
        spec.seeds = vec![1];
        spec.settings = small_settings(1);
        let t = run_sweep(&spec, &ds).unwrap();
        assert!(t.runs[0].outcome.is_ok(), "{axis}: {:?}", t.runs[0].outcome);
    }
}
