//! Compares the hand-derived network gradients with central differences.

use fracsoc::nn::{backward, forward, init_params, Arch, NetworkConfig};

fn main() -> fracsoc::Result<()> {
    let eps = 1e-6;
    for (arch, hidden) in [(Arch::Mlp, vec![6]), (Arch::Rnn, vec![5]), (Arch::Lstm, vec![4])] {
        let config = NetworkConfig {
            window_len: 6,
            ..NetworkConfig::new(arch, hidden)
        };
        let mut params = init_params(&config, 11, 0.5)?;
        let window: Vec<f64> = (0..config.window_size()).map(|k| (k as f64 * 0.7).sin()).collect();
        // Scalar objective: soc + 0.5 up.
        let objective = |p: &fracsoc::nn::NetworkParams| -> fracsoc::Result<f64> {
            let (y, _) = forward(p, &window)?;
            Ok(y.soc + 0.5 * y.up)
        };
        let (_, cache) = forward(&params, &window)?;
        let analytic = backward(&params, &cache, [1.0, 0.5])?;
        let mut worst = 0.0f64;
        for k in 0..params.len() {
            let x = params.values()[k];
            params.values_mut()[k] = x + eps;
            let up = objective(&params)?;
            params.values_mut()[k] = x - eps;
            let down = objective(&params)?;
            params.values_mut()[k] = x;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.values[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        println!("{arch}: {} parameters, worst relative error {worst:.2e}", params.len());
    }
    Ok(())
}
