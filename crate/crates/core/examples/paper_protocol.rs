//! Leave-one-kind-out protocol on the synthetic drive-cycle analogues:
//! six models, four temperatures, MAE and MSE per cell.

use fracsoc::data::CycleKind;
use fracsoc::experiments::{run_paper_protocol, synthetic_corpus, CorpusConfig, RunSettings};
use fracsoc::training::TrainConfig;

fn main() -> fracsoc::Result<()> {
    let experiment: u8 = std::env::args().nth(1).map_or(Ok(5), |s| s.parse()).unwrap_or(5);
    let corpus = synthetic_corpus(&CorpusConfig {
        kinds: CycleKind::DRIVE.to_vec(),
        cycle_seconds: 300.0,
        ..CorpusConfig::default()
    })?;
    let settings = RunSettings {
        train: TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
        hidden_dims: vec![16],
        ..RunSettings::default()
    };
    let table = run_paper_protocol(&corpus, experiment, &settings, &[1])?;
    print!("{}", table.to_markdown());
    Ok(())
}
