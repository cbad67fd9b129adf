//! DC current sharing on the horizontal power plane.
//!
//! The plane is a uniform square mesh of sheet resistance R□: every edge
//! between neighbouring nodes is one square. VR outputs are ideal rails
//! behind an access resistance (the inductor and via path into the plane),
//! expressed in squares of the same sheet so that the whole network scales
//! with R□. Die demand enters as nonnegative current sinks. The ground plane
//! mirrors the power plane, which doubles the ohmic loss.

pub mod solver;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::{DieFloorplan, VrSite};
pub use solver::SolverKind;
use solver::{conjugate_gradient, BandedCholesky, CsrMatrix};

/// Relative residual every solve must reach.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistiveGrid {
    pub nx: usize,
    pub ny: usize,
    pub cell_pitch_mm: f64,
    /// Coordinates of node (0, 0).
    pub origin_mm: (f64, f64),
    pub sheet_resistance_ohm_sq: f64,
}

impl ResistiveGrid {
    pub fn new(nx: usize, ny: usize, cell_pitch_mm: f64, sheet_resistance_ohm_sq: f64) -> Result<Self> {
        let g = ResistiveGrid {
            nx,
            ny,
            cell_pitch_mm,
            origin_mm: (0.0, 0.0),
            sheet_resistance_ohm_sq,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nx * self.ny < 2 {
            return Err(Error::invalid("resistive grid", "needs at least two nodes"));
        }
        if !(self.sheet_resistance_ohm_sq > 0.0) {
            return Err(Error::invalid("resistive grid", "sheet resistance must be > 0"));
        }
        if !(self.cell_pitch_mm > 0.0) {
            return Err(Error::invalid("resistive grid", "cell pitch must be > 0"));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = (node % self.nx, node / self.nx);
        (
            self.origin_mm.0 + i as f64 * self.cell_pitch_mm,
            self.origin_mm.1 + j as f64 * self.cell_pitch_mm,
        )
    }

    pub fn edge_conductance(&self) -> f64 {
        1.0 / self.sheet_resistance_ohm_sq
    }

    /// Horizontal edges row by row, then vertical edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.node_count());
        for j in 0..self.ny {
            for i in 0..self.nx.saturating_sub(1) {
                out.push((self.node(i, j), self.node(i + 1, j)));
            }
        }
        for j in 0..self.ny.saturating_sub(1) {
            for i in 0..self.nx {
                out.push((self.node(i, j), self.node(i, j + 1)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceNode {
    pub node: usize,
    pub voltage_v: f64,
    /// Zero makes the node itself a fixed-voltage node.
    pub access_resistance_ohm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkNode {
    pub node: usize,
    pub current_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProblem {
    pub grid: ResistiveGrid,
    pub sources: Vec<SourceNode>,
    pub sinks: Vec<SinkNode>,
}

impl GridProblem {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.sources.is_empty() {
            return Err(Error::invalid("grid problem", "needs at least one source node"));
        }
        let n = self.grid.node_count();
        let mut is_source = vec![false; n];
        for s in &self.sources {
            if s.node >= n {
                return Err(Error::invalid("grid problem", "source node out of range"));
            }
            if is_source[s.node] {
                return Err(Error::DegenerateGrid {
                    reason: format!("two sources on node {}", s.node),
                });
            }
            if !(s.access_resistance_ohm >= 0.0) {
                return Err(Error::invalid("grid problem", "access resistance must be >= 0"));
            }
            is_source[s.node] = true;
        }
        for k in &self.sinks {
            if k.node >= n {
                return Err(Error::invalid("grid problem", "sink node out of range"));
            }
            if is_source[k.node] {
                return Err(Error::invalid("grid problem", "sinks and sources must be disjoint"));
            }
            if !(k.current_a >= 0.0) {
                return Err(Error::invalid("grid problem", "sink currents must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn total_sink_current(&self) -> f64 {
        self.sinks.iter().map(|s| s.current_a).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub node_voltages: Vec<f64>,
    /// In source order.
    pub vr_currents: Vec<f64>,
    /// Current from the first to the second node of each entry in
    /// [`ResistiveGrid::edges`].
    pub edge_currents: Vec<f64>,
    /// Power and ground planes together.
    pub horizontal_loss_w: f64,
    pub relative_residual: f64,
}

/// Factorized nodal system for a fixed grid and source set; sinks vary per
/// solve.
#[derive(Debug, Clone)]
pub struct DcSolver {
    grid: ResistiveGrid,
    sources: Vec<SourceNode>,
    /// Reduced index per node, `None` for fixed-voltage nodes.
    unknown: Vec<Option<usize>>,
    matrix: CsrMatrix,
    rhs_base: Vec<f64>,
    factor: Option<BandedCholesky>,
    kind: SolverKind,
}

impl DcSolver {
    pub fn new(problem: &GridProblem, kind: SolverKind) -> Result<Self> {
        problem.validate()?;
        let grid = problem.grid.clone();
        let n = grid.node_count();
        let edges = grid.edges();
        check_connected(n, &edges, &problem.sources)?;

        let mut fixed: Vec<Option<f64>> = vec![None; n];
        for s in &problem.sources {
            if s.access_resistance_ohm == 0.0 {
                fixed[s.node] = Some(s.voltage_v);
            }
        }
        let mut unknown = vec![None; n];
        let mut m = 0;
        for node in 0..n {
            if fixed[node].is_none() {
                unknown[node] = Some(m);
                m += 1;
            }
        }

        let g = grid.edge_conductance();
        let mut triplets = Vec::with_capacity(5 * m);
        let mut rhs_base = vec![0.0; m];
        for &(a, b) in &edges {
            match (unknown[a], unknown[b]) {
                (Some(ia), Some(ib)) => {
                    triplets.push((ia, ia, g));
                    triplets.push((ib, ib, g));
                    triplets.push((ia, ib, -g));
                    triplets.push((ib, ia, -g));
                }
                (Some(ia), None) => {
                    triplets.push((ia, ia, g));
                    rhs_base[ia] += g * fixed[b].unwrap();
                }
                (None, Some(ib)) => {
                    triplets.push((ib, ib, g));
                    rhs_base[ib] += g * fixed[a].unwrap();
                }
                (None, None) => {}
            }
        }
        for s in &problem.sources {
            if let Some(i) = unknown[s.node] {
                let ga = 1.0 / s.access_resistance_ohm;
                triplets.push((i, i, ga));
                rhs_base[i] += ga * s.voltage_v;
            }
        }
        let matrix = CsrMatrix::from_triplets(m, triplets);
        let factor = match kind {
            SolverKind::BandedCholesky if m > 0 => Some(BandedCholesky::factor(&matrix)?),
            _ => None,
        };
        Ok(DcSolver {
            grid,
            sources: problem.sources.clone(),
            unknown,
            matrix,
            rhs_base,
            factor,
            kind,
        })
    }

    pub fn grid(&self) -> &ResistiveGrid {
        &self.grid
    }

    pub fn solve(&self, sinks: &[SinkNode]) -> Result<GridSolution> {
        let n = self.grid.node_count();
        let mut rhs = self.rhs_base.clone();
        let mut fixed_sink = vec![0.0; n];
        for k in sinks {
            if k.node >= n || !(k.current_a >= 0.0) {
                return Err(Error::invalid("grid sink", "node out of range or negative current"));
            }
            match self.unknown[k.node] {
                Some(i) => rhs[i] -= k.current_a,
                None => fixed_sink[k.node] += k.current_a,
            }
        }

        let x = self.solve_reduced(&rhs)?;
        let residual = self.matrix.relative_residual(&x, &rhs);
        if !(residual <= RESIDUAL_TOLERANCE) {
            return Err(Error::SingularSystem {
                reason: format!("relative residual {residual:.3e} above tolerance"),
            });
        }

        let mut v = vec![0.0; n];
        for s in &self.sources {
            if self.unknown[s.node].is_none() {
                v[s.node] = s.voltage_v;
            }
        }
        for node in 0..n {
            if let Some(i) = self.unknown[node] {
                v[node] = x[i];
            }
        }

        let g = self.grid.edge_conductance();
        let edges = self.grid.edges();
        let mut loss = 0.0;
        let mut outflow = fixed_sink;
        let mut edge_currents = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            let i = g * (v[a] - v[b]);
            loss += i * (v[a] - v[b]);
            outflow[a] += i;
            outflow[b] -= i;
            edge_currents.push(i);
        }
        let vr_currents: Vec<f64> = self
            .sources
            .iter()
            .map(|s| {
                if s.access_resistance_ohm == 0.0 {
                    outflow[s.node]
                } else {
                    let i = (s.voltage_v - v[s.node]) / s.access_resistance_ohm;
                    loss += i * i * s.access_resistance_ohm;
                    i
                }
            })
            .collect();

        Ok(GridSolution {
            node_voltages: v,
            vr_currents,
            edge_currents,
            horizontal_loss_w: 2.0 * loss,
            relative_residual: residual,
        })
    }

    fn solve_reduced(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        match (&self.factor, self.kind) {
            (Some(f), _) => {
                let mut x = f.solve(rhs);
                // one step of iterative refinement
                let mut ax = vec![0.0; x.len()];
                self.matrix.mul(&x, &mut ax);
                let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                let dx = f.solve(&r);
                for (xi, di) in x.iter_mut().zip(dx) {
                    *xi += di;
                }
                Ok(x)
            }
            _ => conjugate_gradient(&self.matrix, rhs, 1e-13, 20 * rhs.len().max(100)),
        }
    }
}

fn check_connected(n: usize, edges: &[(usize, usize)], sources: &[SourceNode]) -> Result<()> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = sources.iter().map(|s| s.node).collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(node) => Err(Error::SingularSystem {
            reason: format!("node {node} is not connected to any source"),
        }),
        None => Ok(()),
    }
}

pub fn solve_dc(problem: &GridProblem) -> Result<GridSolution> {
    solve_dc_with(problem, SolverKind::default())
}

pub fn solve_dc_with(problem: &GridProblem, kind: SolverKind) -> Result<GridSolution> {
    DcSolver::new(problem, kind)?.solve(&problem.sinks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentSpread {
    pub min_a: f64,
    pub max_a: f64,
    pub mean_a: f64,
}

impl CurrentSpread {
    pub fn of(currents: &[f64]) -> Self {
        if currents.is_empty() {
            return CurrentSpread {
                min_a: 0.0,
                max_a: 0.0,
                mean_a: 0.0,
            };
        }
        CurrentSpread {
            min_a: currents.iter().copied().fold(f64::INFINITY, f64::min),
            max_a: currents.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_a: currents.iter().sum::<f64>() / currents.len() as f64,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_a - self.min_a
    }
}

pub fn current_spread(solution: &GridSolution) -> CurrentSpread {
    CurrentSpread::of(&solution.vr_currents)
}

/// Spatial weighting of the die's current demand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandProfile {
    #[default]
    Uniform,
    /// 1 + (peak_ratio - 1)·exp(-r²/2σ²), r and σ relative to the die side.
    CenterPeaked { peak_ratio: f64, sigma_frac: f64 },
}

impl DemandProfile {
    pub fn weight(&self, x: f64, y: f64, side: f64) -> f64 {
        match *self {
            DemandProfile::Uniform => 1.0,
            DemandProfile::CenterPeaked { peak_ratio, sigma_frac } => {
                let c = side / 2.0;
                let r2 = ((x - c).powi(2) + (y - c).powi(2)) / (side * side);
                1.0 + (peak_ratio - 1.0) * (-r2 / (2.0 * sigma_frac * sigma_frac)).exp()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DemandProfile::Uniform => Ok(()),
            DemandProfile::CenterPeaked { peak_ratio, sigma_frac } => {
                if peak_ratio >= 1.0 && sigma_frac > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("demand profile", "requires peak_ratio >= 1 and sigma_frac > 0"))
                }
            }
        }
    }
}

/// What the plane feeds.
#[derive(Debug, Clone, Copy)]
pub enum GridLoad<'a> {
    /// Die demand spread over the die shadow.
    Pol { demand_a: f64, profile: DemandProfile },
    /// Discrete loads, e.g. the inputs of a downstream VR bank.
    Points(&'a [PointLoad]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    pub x_mm: f64,
    pub y_mm: f64,
    pub current_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    /// Nodes across the die shadow.
    pub resolution: usize,
    pub sheet_resistance_ohm_sq: f64,
    /// VR access resistance in squares of the plane.
    pub access_squares: f64,
    #[serde(default)]
    pub solver: SolverKind,
}

impl GridSettings {
    pub const DEFAULT_RESOLUTION: usize = 32;
}

/// Discretize the plane under and around the die. Refines once (halving the
/// pitch) when two sites snap to the same node.
pub fn build_problem(
    plan: &DieFloorplan,
    sites: &[VrSite],
    rail_voltage_v: f64,
    load: GridLoad<'_>,
    settings: &GridSettings,
) -> Result<GridProblem> {
    plan.validate()?;
    if sites.is_empty() {
        return Err(Error::invalid("grid problem", "needs at least one VR site"));
    }
    if settings.resolution < 2 {
        return Err(Error::invalid("grid settings", "resolution must be >= 2"));
    }
    if let GridLoad::Pol { demand_a, profile } = load {
        if !(demand_a > 0.0) {
            return Err(Error::invalid("grid problem", "demand must be > 0"));
        }
        profile.validate()?;
    }
    match build_at(plan, sites, rail_voltage_v, load, settings, settings.resolution) {
        Err(Error::DegenerateGrid { .. }) => {
            build_at(plan, sites, rail_voltage_v, load, settings, 2 * settings.resolution - 1)
        }
        other => other,
    }
}

fn outside_distance(x: f64, y: f64, side: f64) -> f64 {
    (-x).max(x - side).max(-y).max(y - side).max(0.0)
}

fn build_at(
    plan: &DieFloorplan,
    sites: &[VrSite],
    rail_voltage_v: f64,
    load: GridLoad<'_>,
    settings: &GridSettings,
    resolution: usize,
) -> Result<GridProblem> {
    let side = plan.side();
    let h = side / (resolution - 1) as f64;
    let mut extent: f64 = sites
        .iter()
        .map(|s| {
            let d = outside_distance(s.x_mm, s.y_mm, side);
            if d > 0.0 {
                d + s.width() / 2.0
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    if let GridLoad::Points(points) = load {
        for p in points {
            extent = extent.max(outside_distance(p.x_mm, p.y_mm, side));
        }
    }
    let n_ext = (extent / h - 1e-9).ceil().max(0.0) as usize;
    let nx = resolution + 2 * n_ext;
    let origin = -(n_ext as f64) * h;
    let grid = ResistiveGrid {
        nx,
        ny: nx,
        cell_pitch_mm: h,
        origin_mm: (origin, origin),
        sheet_resistance_ohm_sq: settings.sheet_resistance_ohm_sq,
    };
    grid.validate()?;
    // nearest node, exact ties toward the lower index
    let snap = |c: f64| -> usize { (((c - origin) / h) - 0.5).ceil().clamp(0.0, (nx - 1) as f64) as usize };

    let access = settings.access_squares * settings.sheet_resistance_ohm_sq;
    let mut is_source = vec![false; grid.node_count()];
    let mut sources = Vec::with_capacity(sites.len());
    for s in sites {
        let node = grid.node(snap(s.x_mm), snap(s.y_mm));
        if is_source[node] {
            return Err(Error::DegenerateGrid {
                reason: format!("two VR sites snap to node {node} at resolution {resolution}"),
            });
        }
        is_source[node] = true;
        sources.push(SourceNode {
            node,
            voltage_v: rail_voltage_v,
            access_resistance_ohm: access,
        });
    }

    let sinks = match load {
        GridLoad::Pol { demand_a, profile } => {
            let lo = n_ext;
            let hi = n_ext + resolution - 1;
            let mut weighted = Vec::new();
            for j in lo..=hi {
                for i in lo..=hi {
                    let node = grid.node(i, j);
                    if is_source[node] {
                        continue;
                    }
                    let (x, y) = grid.coords(node);
                    weighted.push((node, profile.weight(x, y, side)));
                }
            }
            if weighted.is_empty() {
                return Err(Error::DegenerateGrid {
                    reason: "no die-shadow node is free for demand".into(),
                });
            }
            let total: f64 = weighted.iter().map(|(_, w)| w).sum();
            weighted
                .into_iter()
                .map(|(node, w)| SinkNode {
                    node,
                    current_a: demand_a * w / total,
                })
                .collect()
        }
        GridLoad::Points(points) => {
            let mut sinks: Vec<SinkNode> = Vec::with_capacity(points.len());
            for p in points {
                let node = grid.node(snap(p.x_mm), snap(p.y_mm));
                if is_source[node] {
                    return Err(Error::DegenerateGrid {
                        reason: format!("load and source share node {node} at resolution {resolution}"),
                    });
                }
                sinks.push(SinkNode {
                    node,
                    current_a: p.current_a,
                });
            }
            sinks
        }
    };

    Ok(GridProblem { grid, sources, sinks })
}

/// Node map CSV: `x_mm,y_mm,voltage_v`.
pub fn write_voltage_csv<W: Write>(grid: &ResistiveGrid, solution: &GridSolution, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x_mm", "y_mm", "voltage_v"])?;
    for (node, v) in solution.node_voltages.iter().enumerate() {
        let (x, y) = grid.coords(node);
        w.write_record([x.to_string(), y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Edge map CSV: `x1_mm,y1_mm,x2_mm,y2_mm,current_a`.
pub fn write_edge_csv<W: Write>(grid: &ResistiveGrid, solution: &GridSolution, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x1_mm", "y1_mm", "x2_mm", "y2_mm", "current_a"])?;
    for (&(a, b), i) in grid.edges().iter().zip(&solution.edge_currents) {
        let (x1, y1) = grid.coords(a);
        let (x2, y2) = grid.coords(b);
        w.write_record([x1.to_string(), y1.to_string(), x2.to_string(), y2.to_string(), i.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
