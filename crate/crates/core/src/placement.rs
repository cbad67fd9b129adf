//! Deterministic VR site placement around and under a square die.
//!
//! Coordinates are in mm with the die occupying `[0, side] x [0, side]`.
//! Periphery rings are bands of width `√footprint + spacing` stacked outward
//! from the die edge. Sites within a ring run clockwise from the
//! bottom-left corner: left edge upward, top edge rightward, right edge
//! downward, bottom edge leftward.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DieFloorplan {
    pub die_area_mm2: f64,
    /// Usable band around the die for periphery rings.
    pub interposer_margin_mm: f64,
    /// Gap added between neighbouring periphery sites.
    #[serde(default)]
    pub site_spacing_mm: f64,
}

impl DieFloorplan {
    pub const DEFAULT_MARGIN_MM: f64 = 10.0;

    pub fn new(die_area_mm2: f64) -> Self {
        DieFloorplan {
            die_area_mm2,
            interposer_margin_mm: Self::DEFAULT_MARGIN_MM,
            site_spacing_mm: 0.0,
        }
    }

    pub fn side(&self) -> f64 {
        self.die_area_mm2.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.die_area_mm2 > 0.0) {
            return Err(Error::invalid("die floorplan", "die_area_mm2 must be > 0"));
        }
        if !(self.interposer_margin_mm >= 0.0 && self.site_spacing_mm >= 0.0) {
            return Err(Error::invalid("die floorplan", "margin and spacing must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Periphery,
    UnderDie,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Periphery => "periphery",
            Zone::UnderDie => "under_die",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VrSite {
    pub x_mm: f64,
    pub y_mm: f64,
    pub footprint_mm2: f64,
    pub ring_index: usize,
    pub zone: Zone,
}

impl VrSite {
    pub fn width(&self) -> f64 {
        self.footprint_mm2.sqrt()
    }
}

fn validate_footprint(footprint_mm2: f64) -> Result<()> {
    if !(footprint_mm2 > 0.0) {
        return Err(Error::invalid("VR footprint", "must be > 0"));
    }
    Ok(())
}

/// Sites per ring k: floor(4·(side + 2k·w) / w).
pub fn ring_capacity(plan: &DieFloorplan, footprint_mm2: f64, ring: usize) -> usize {
    let w = footprint_mm2.sqrt() + plan.site_spacing_mm;
    let inner = plan.side() + 2.0 * ring as f64 * w;
    (4.0 * inner / w + 1e-9).floor() as usize
}

pub fn place_periphery(plan: &DieFloorplan, n: usize, footprint_mm2: f64) -> Result<Vec<VrSite>> {
    plan.validate()?;
    validate_footprint(footprint_mm2)?;
    let s = plan.side();
    let w = footprint_mm2.sqrt() + plan.site_spacing_mm;
    if w > s {
        return Err(Error::invalid(
            "periphery placement",
            format!("site width {w:.3} mm exceeds the die side {s:.3} mm"),
        ));
    }

    let mut sites = Vec::with_capacity(n);
    let mut remaining = n;
    let mut ring = 0;
    while remaining > 0 {
        let take = remaining.min(ring_capacity(plan, footprint_mm2, ring));
        place_ring(&mut sites, s, w, footprint_mm2, ring, take);
        remaining -= take;
        ring += 1;
    }

    let needed = ring as f64 * w;
    if needed > plan.interposer_margin_mm + 1e-9 {
        return Err(Error::MarginExceeded {
            needed_mm: needed,
            margin_mm: plan.interposer_margin_mm,
        });
    }
    Ok(sites)
}

fn place_ring(out: &mut Vec<VrSite>, s: f64, w: f64, footprint: f64, ring: usize, n: usize) {
    let k = ring as f64;
    let inner = s + 2.0 * k * w;
    let lo = -k * w;
    let hi = s + k * w;
    let offset = (k + 0.5) * w;
    let vertical_cap = (inner / w + 1e-9).floor() as usize;

    // left, top, right, bottom; corner cells belong to the horizontal edges
    let mut counts = [n / 4; 4];
    for c in counts.iter_mut().take(n % 4) {
        *c += 1;
    }
    for v in [0, 2] {
        if counts[v] > vertical_cap {
            let extra = counts[v] - vertical_cap;
            counts[v] = vertical_cap;
            counts[v + 1] += extra;
        }
    }

    for (edge, &m) in counts.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let fits = m as f64 * w <= inner + 1e-9;
        let (start, len) = if fits { (lo, inner) } else { (lo - w, inner + 2.0 * w) };
        for j in 0..m {
            let t = start + len * (j as f64 + 0.5) / m as f64;
            let mirrored = lo + hi - t;
            let (x, y) = match edge {
                0 => (-offset, t),
                1 => (t, s + offset),
                2 => (s + offset, mirrored),
                _ => (mirrored, -offset),
            };
            out.push(VrSite {
                x_mm: x,
                y_mm: y,
                footprint_mm2: footprint,
                ring_index: ring,
                zone: Zone::Periphery,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnderDiePlacement {
    pub sites: Vec<VrSite>,
    pub occupancy: f64,
    /// Occupancy above the ~50 % layout guideline.
    pub warning: bool,
}

pub const UNDER_DIE_OCCUPANCY_GUIDE: f64 = 0.5;

/// Sites on a centered g×g grid (g = ⌈√n⌉) over the die shadow, row-major
/// from the bottom row; trailing cells stay empty.
pub fn place_under_die(plan: &DieFloorplan, n: usize, footprint_mm2: f64) -> Result<UnderDiePlacement> {
    plan.validate()?;
    validate_footprint(footprint_mm2)?;
    let occupancy = n as f64 * footprint_mm2 / plan.die_area_mm2;
    if occupancy > 1.0 {
        return Err(Error::AreaExceeded { occupancy });
    }
    let g = ceil_sqrt(n);
    let pitch = if g == 0 { 0.0 } else { plan.side() / g as f64 };
    let sites = (0..n)
        .map(|i| VrSite {
            x_mm: ((i % g) as f64 + 0.5) * pitch,
            y_mm: ((i / g) as f64 + 0.5) * pitch,
            footprint_mm2,
            ring_index: 0,
            zone: Zone::UnderDie,
        })
        .collect();
    Ok(UnderDiePlacement {
        sites,
        occupancy,
        warning: occupancy > UNDER_DIE_OCCUPANCY_GUIDE,
    })
}

fn ceil_sqrt(n: usize) -> usize {
    let mut g = (n as f64).sqrt() as usize;
    while g * g < n {
        g += 1;
    }
    while g > 0 && (g - 1) * (g - 1) >= n {
        g -= 1;
    }
    g
}

/// Number of periphery rings used by a site list.
pub fn ring_count(sites: &[VrSite]) -> usize {
    sites
        .iter()
        .filter(|s| s.zone == Zone::Periphery)
        .map(|s| s.ring_index + 1)
        .max()
        .unwrap_or(0)
}

/// CSV with columns `x_mm,y_mm,ring,zone,footprint_mm2`.
pub fn write_sites_csv<W: Write>(sites: &[VrSite], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x_mm", "y_mm", "ring", "zone", "footprint_mm2"])?;
    for s in sites {
        w.write_record([
            s.x_mm.to_string(),
            s.y_mm.to_string(),
            s.ring_index.to_string(),
            s.zone.as_str().to_string(),
            s.footprint_mm2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
