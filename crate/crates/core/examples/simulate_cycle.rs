//! Simulates the fractional-order cell under a pulse profile and compares
//! the SOC trace with plain Coulomb counting.

use fracsoc::battery_model::{coulomb_count, simulate_cycle, BatteryParams};
use fracsoc::frac_calc::FracOrder;

fn main() -> fracsoc::Result<()> {
    let profile = [(3.0, 300.0), (0.0, 120.0), (-1.5, 180.0), (6.0, 120.0)];
    for a in [1.0, 0.7] {
        let params = BatteryParams::default().with_alpha(FracOrder::new(a)?);
        let trace = simulate_cycle(&params, &profile, 1.0, 0.9, 10, 25.0)?;
        let currents: Vec<f64> = trace.records[1..].iter().map(|r| r.current).collect();
        let cc = coulomb_count(0.9, &currents, 1.0, params.eta, params.capacity_c_n)?;
        println!("alpha {a}");
        println!("{:>6} {:>8} {:>8} {:>9} {:>9} {:>9}", "t", "I", "V", "SOC", "CC SOC", "Up");
        for (k, r) in trace.records.iter().enumerate().step_by(60) {
            println!(
                "{:>6.0} {:>8.2} {:>8.4} {:>9.6} {:>9.6} {:>9.5}",
                r.t,
                r.current,
                r.voltage,
                r.soc_true.unwrap_or(f64::NAN),
                if k == 0 { 0.9 } else { cc.soc[k - 1] },
                r.up_true.unwrap_or(f64::NAN)
            );
        }
        println!();
    }
    Ok(())
}
