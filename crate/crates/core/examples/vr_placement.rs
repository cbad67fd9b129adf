// Periphery rings and an under-die grid for the DSCH bank, written as CSV.

use pdnx::converter::vr_footprint_area;
use pdnx::dataset::Datasets;
use pdnx::placement::{place_periphery, place_under_die, ring_count, write_sites_csv, DieFloorplan};

pub fn run_example() -> anyhow::Result<()> {
    let data = Datasets::builtin()?;
    let dsch = data.converters.topology("DSCH")?;
    let footprint = vr_footprint_area(dsch);
    let plan = DieFloorplan::new(500.0);

    let ring = place_periphery(&plan, 40, footprint)?;
    println!("40 periphery sites of {footprint:.2} mm2 use {} ring(s)", ring_count(&ring));

    let under = place_under_die(&plan, 48, footprint)?;
    println!(
        "48 under-die sites cover {:.1}% of the die{}",
        100.0 * under.occupancy,
        if under.warning { " (above the layout guideline)" } else { "" }
    );

    let mut csv = Vec::new();
    write_sites_csv(&ring, &mut csv)?;
    let text = String::from_utf8(csv)?;
    for line in text.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
