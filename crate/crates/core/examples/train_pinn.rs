//! Trains a plain MLP and its physics-informed twin on noisy synthetic
//! cycles and compares test error and physics residuals.

use fracsoc::battery_model::BatteryParams;
use fracsoc::data::{add_noise, synth_cycle, Dataset, NoiseKind, NoiseSpec, SynthProfile, SynthSettings};
use fracsoc::nn::{Arch, NetworkConfig};
use fracsoc::pinn_loss::PhysicsConfig;
use fracsoc::training::{evaluate, model_name, train, TrainConfig, Variant};

fn main() -> fracsoc::Result<()> {
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
        cycles.push(synth_cycle(&SynthProfile::random_walk(), &params, &settings, starts[i], 100 + i as u64)?);
    }
    let ds = add_noise(&Dataset::from_cycles(cycles)?, &NoiseSpec::inputs(NoiseKind::Gaussian, 0.1, 7))?;
    let train_set = Dataset::from_cycles(ds.cycles()[..4].to_vec())?;
    let test_set = Dataset::from_cycles(ds.cycles()[4..].to_vec())?;

    let net = NetworkConfig::new(Arch::Mlp, vec![64]);
    for variant in Variant::ALL {
        let cfg = TrainConfig {
            variant,
            epochs: 60,
            batch_size: 40,
            lr_final_fraction: 0.05,
            ..TrainConfig::default()
        };
        let physics = PhysicsConfig::new(params.clone().with_alpha(cfg.alpha), cfg.memory_len, 1.0)?;
        let (model, report) = train(&cfg, &net, &train_set, &Dataset::new(), &physics)?;
        let (metrics, losses) = evaluate(&model, &test_set, &physics, cfg.loss_weights())?;
        println!(
            "{:<16} test MAE {:.4}  RMSE {:.4}  L_phy {:.3e}  ({} epochs, {:.1?})",
            model_name(Arch::Mlp, variant),
            metrics.mae,
            metrics.rmse,
            losses.l_phy,
            report.epochs.len(),
            report.wall_time
        );
    }
    Ok(())
}
