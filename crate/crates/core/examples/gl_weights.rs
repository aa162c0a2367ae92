//! Grünwald-Letnikov weights and a fractional derivative of t^2 against its
//! closed form, Γ(3)/Γ(3-α) t^(2-α).

use fracsoc::frac_calc::{gl_derivative, gl_weights, FracOrder, HistoryBuffer};
use statrs::function::gamma::gamma;

fn main() -> fracsoc::Result<()> {
    for a in [0.25, 0.5, 0.75, 1.0] {
        let w = gl_weights(FracOrder::new(a)?, 5)?;
        let ws: Vec<String> = w.as_slice().iter().map(|x| format!("{x:+.4}")).collect();
        println!("alpha {a:.2}: {}", ws.join(" "));
    }

    let (h, t_end) = (1e-3, 1.0);
    let n = (t_end / h) as usize;
    println!("\nD^alpha t^2 at t = {t_end}, full memory, h = {h}");
    for a in [0.3, 0.5, 0.8] {
        let alpha = FracOrder::new(a)?;
        let w = gl_weights(alpha, n)?;
        let mut hist = HistoryBuffer::new(n, h)?;
        for k in 0..=n {
            let t = k as f64 * h;
            hist.push(t * t);
        }
        let gl = gl_derivative(&hist, &w)?;
        let exact = gamma(3.0) / gamma(3.0 - a) * t_end.powf(2.0 - a);
        println!("alpha {a}: GL {gl:.6}  exact {exact:.6}  rel err {:.2e}", (gl - exact).abs() / exact);
    }
    Ok(())
}
