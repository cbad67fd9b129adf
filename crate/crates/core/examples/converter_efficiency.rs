// Efficiency curves of the datasheet converters, fitted to their peak
// operating points.

use pdnx::converter::{calibrate, efficiency_unchecked};
use pdnx::dataset::Datasets;

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    for name in ["DSCH", "DPMIH", "3LHD"] {
        let t = data.converters.topology(name)?;
        let model = calibrate(t)?;
        println!(
            "{name}: {}V to {}V, peak {:.1}% at {} A, rating {} A, fixed loss {:.3} W",
            t.v_in_v,
            t.v_out_v,
            100.0 * t.eta_peak,
            t.i_at_peak_a,
            t.i_max_a,
            model.p_fixed_w
        );
        let points: Vec<String> = (1..=5)
            .map(|k| {
                let i = t.i_max_a * k as f64 / 5.0;
                format!("{i:.0} A {:.2}%", 100.0 * efficiency_unchecked(&model, t, i))
            })
            .collect();
        println!("  {}", points.join(", "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
