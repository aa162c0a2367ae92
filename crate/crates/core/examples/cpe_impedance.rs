//! Constant-phase element impedance Z = 1 / (Q (jω)^α) over a frequency sweep.

use fracsoc::frac_calc::{cpe_impedance, FracOrder};

fn main() -> fracsoc::Result<()> {
    let q = 2000.0;
    println!("{:>10} {:>6} {:>14} {:>14} {:>10}", "omega", "alpha", "Re Z", "Im Z", "phase deg");
    for a in [0.5, 0.8, 1.0] {
        for omega in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let z = cpe_impedance(q, FracOrder::new(a)?, omega)?;
            println!(
                "{omega:>10.0e} {a:>6.2} {:>14.6e} {:>14.6e} {:>10.2}",
                z.re,
                z.im,
                z.arg().to_degrees()
            );
        }
    }
    Ok(())
}
