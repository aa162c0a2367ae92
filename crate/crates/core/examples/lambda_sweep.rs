//! Sweeps the physics weight over a small grid and writes the result table,
//! Markdown summary and SVG plot to `out/lambda_sweep`.

use fracsoc::data::CycleKind;
use fracsoc::experiments::{run_sweep, synthetic_corpus, Axis, CorpusConfig, SweepSpec};
use fracsoc::nn::Arch;
use fracsoc::training::Variant;

fn main() -> fracsoc::Result<()> {
    let corpus = synthetic_corpus(&CorpusConfig {
        kinds: CycleKind::DRIVE.to_vec(),
        cycle_seconds: 300.0,
        ..CorpusConfig::default()
    })?;
    let mut spec = SweepSpec::new(Axis::Lambda, vec![0.0, 0.25, 1.0]);
    spec.archs = vec![Arch::Mlp, Arch::Rnn];
    spec.variants = vec![Variant::FdiffPinn];
    spec.seeds = vec![1, 2];
    spec.settings.train.epochs = 10;
    spec.settings.hidden_dims = vec![16];

    let table = run_sweep(&spec, &corpus)?;
    let out = std::path::Path::new("out/lambda_sweep");
    table.write_dir(out)?;
    print!("{}", table.to_markdown());
    println!("\nwritten to {}", out.display());
    Ok(())
}
