//! Writes a synthetic cycle to CSV, reads it back, normalizes it and adds
//! input noise.

use fracsoc::battery_model::BatteryParams;
use fracsoc::data::{
    add_noise, load_csv, save_csv, synth_cycle, Dataset, NoiseKind, NoiseSpec, Normalizer, SynthProfile,
    SynthSettings,
};

fn main() -> fracsoc::Result<()> {
    let settings = SynthSettings {
        name: "demo".into(),
        duration_s: 120.0,
        ..SynthSettings::default()
    };
    let cycle = synth_cycle(&SynthProfile::random_walk(), &BatteryParams::default(), &settings, 0.8, 3)?;
    let path = std::env::temp_dir().join("fracsoc_demo.csv");
    save_csv(&cycle, &path)?;
    let back = load_csv(&path)?;
    println!("wrote and re-read {} records: identical = {}", cycle.len(), back.cycles()[0].records == cycle.records);

    let ds = Dataset::from_cycles([cycle])?;
    let norm = Normalizer::fit(&ds)?;
    let r = &ds.cycles()[0].records[10];
    println!(
        "raw (V, I, T) = ({:.4}, {:.4}, {:.1}) -> scaled {:.4?}",
        r.voltage,
        r.current,
        r.temperature,
        norm.features(r)
    );
    let noisy = add_noise(&ds, &NoiseSpec::inputs(NoiseKind::Gaussian, 0.05, 9))?;
    let (a, b) = (&ds.cycles()[0].records[10], &noisy.cycles()[0].records[10]);
    println!("voltage {:.4} -> noisy {:.4}, SOC label unchanged: {}", a.voltage, b.voltage, a.soc_true == b.soc_true);
    Ok(())
}
