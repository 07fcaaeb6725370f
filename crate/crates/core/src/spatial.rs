//! Geometric instances on a square region and raster views of the minimum
//! distance cells and the equilibrium attraction regions.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{DemandModel, Matrix, ProblemInstance};

/// Square region `[0, side]²` discretized into `grid × grid` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub side: f64,
    pub grid: usize,
    /// Minutes to cross `side` horizontally.
    pub crossing_time: f64,
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        if !(self.side > 0.0 && self.side.is_finite()) {
            return Err(Error::InvalidParameter(format!("region side must be positive, got {}", self.side)));
        }
        if self.grid == 0 {
            return Err(Error::InvalidParameter("grid resolution must be at least 1".into()));
        }
        if !(self.crossing_time > 0.0 && self.crossing_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "crossing time must be positive, got {}",
                self.crossing_time
            )));
        }
        Ok(())
    }

    /// Distance units per minute.
    pub fn speed(&self) -> f64 {
        self.side / self.crossing_time
    }

    pub fn cell_size(&self) -> f64 {
        self.side / self.grid as f64
    }

    /// Travel time across one cell, minutes.
    pub fn cell_travel_time(&self) -> f64 {
        self.cell_size() / self.speed()
    }

    pub fn n_cells(&self) -> usize {
        self.grid * self.grid
    }

    /// Center of cell `(ix, iy)`.
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        let h = self.cell_size();
        [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h]
    }

    /// Cell `(ix, iy)` of site index `iy * grid + ix`.
    pub fn cell_of(&self, site: usize) -> (usize, usize) {
        (site % self.grid, site / self.grid)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..=self.side).contains(&p[0]) && (0.0..=self.side).contains(&p[1])
    }
}

/// Demand point with an explicit position and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub position: [f64; 2],
    /// EV/min.
    pub rate: f64,
}

/// A problem instance together with the geometry it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialInstance {
    pub instance: ProblemInstance,
    pub stations: Vec<[f64; 2]>,
    /// Position of every instance site (after zero-rate sites are dropped).
    pub site_positions: Vec<[f64; 2]>,
    /// Grid the sites came from, if any.
    pub region: Option<Region>,
    /// Distance units per minute.
    pub speed: f64,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn travel_matrix(sites: &[[f64; 2]], stations: &[[f64; 2]], speed: f64) -> Result<Matrix> {
    let n = stations.len();
    let mut data = Vec::with_capacity(sites.len() * n);
    for &s in sites {
        data.extend(stations.iter().map(|&p| distance(s, p) / speed));
    }
    Matrix::from_vec(sites.len(), n, data)
}

/// Uniform demand on the cell centers of `region`, each site carrying
/// `total_rate / g²`. Site `iy * g + ix` sits at the center of cell
/// `(ix, iy)`.
pub fn build_grid_instance(
    region: &Region,
    stations: &[[f64; 2]],
    capacities: &[f64],
    total_rate: f64,
    sojourn: f64,
    epsilon: f64,
) -> Result<SpatialInstance> {
    region.validate()?;
    if !(total_rate > 0.0 && total_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("total rate must be positive, got {total_rate}")));
    }
    check_stations(stations, Some(region))?;
    let g = region.grid;
    let positions: Vec<[f64; 2]> = (0..g * g)
        .map(|k| {
            let (ix, iy) = region.cell_of(k);
            region.cell_center(ix, iy)
        })
        .collect();
    let rates = vec![total_rate / (g * g) as f64; g * g];
    let kappa = travel_matrix(&positions, stations, region.speed())?;
    let instance = ProblemInstance::new(
        capacities.to_vec(),
        kappa,
        sojourn,
        epsilon,
        DemandModel::Inelastic { rates },
    )?;
    Ok(SpatialInstance {
        instance,
        stations: stations.to_vec(),
        site_positions: positions,
        region: Some(*region),
        speed: region.speed(),
    })
}

/// Instance from explicitly listed sites. Travel time is distance over
/// `speed`.
pub fn build_site_instance(
    sites: &[Site],
    stations: &[[f64; 2]],
    capacities: &[f64],
    speed: f64,
    sojourn: f64,
    epsilon: f64,
) -> Result<SpatialInstance> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::InvalidParameter(format!("speed must be positive, got {speed}")));
    }
    check_stations(stations, None)?;
    let positions: Vec<[f64; 2]> = sites.iter().map(|s| s.position).collect();
    if positions.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInstance("site coordinates must be finite".into()));
    }
    let kappa = travel_matrix(&positions, stations, speed)?;
    let rates = sites.iter().map(|s| s.rate).collect();
    let instance = ProblemInstance::new(
        capacities.to_vec(),
        kappa,
        sojourn,
        epsilon,
        DemandModel::Inelastic { rates },
    )?;
    let site_positions = instance.site_ids().iter().map(|&k| positions[k]).collect();
    Ok(SpatialInstance {
        instance,
        stations: stations.to_vec(),
        site_positions,
        region: None,
        speed,
    })
}

fn check_stations(stations: &[[f64; 2]], region: Option<&Region>) -> Result<()> {
    if stations.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (j, &p) in stations.iter().enumerate() {
        let inside = match region {
            Some(r) => r.contains(p),
            None => p[0].is_finite() && p[1].is_finite(),
        };
        if !inside {
            return Err(Error::InvalidInstance(format!(
                "station {j} at ({}, {}) lies outside the region",
                p[0], p[1]
            )));
        }
    }
    Ok(())
}

impl SpatialInstance {
    /// Same geometry with a different demand model (site order preserved).
    pub fn with_demand(&self, demand: DemandModel) -> Result<Self> {
        let instance = self.instance.with_demand(demand)?;
        let site_positions = instance
            .site_ids()
            .iter()
            .map(|&k| self.site_positions[k])
            .collect();
        Ok(SpatialInstance {
            instance,
            site_positions,
            ..self.clone()
        })
    }
}

/// Station assigned to every site.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub assignment: Vec<usize>,
    /// Delays used for the assignment (all zero for the Voronoi raster).
    pub mu: Vec<f64>,
}

impl Raster {
    /// Number of sites assigned to each station.
    pub fn counts(&self, n_stations: usize) -> Vec<usize> {
        let mut c = vec![0; n_stations];
        for &j in &self.assignment {
            c[j] += 1;
        }
        c
    }
}

fn argmin_row(row: &[f64], mu: &[f64]) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (j, (k, m)) in row.iter().zip(mu).enumerate() {
        let c = k + m;
        if c < best_cost {
            best_cost = c;
            best = j;
        }
    }
    best
}

/// Nearest station per site, ties to the lowest index.
pub fn voronoi_raster(sp: &SpatialInstance) -> Raster {
    let n = sp.instance.n_stations();
    raster(sp, &vec![0.0; n], Exec::default())
}

/// Station minimizing travel plus delay per site, ties to the lowest index.
pub fn attraction_raster(sp: &SpatialInstance, mu: &[f64]) -> Result<Raster> {
    sp.instance.check_stations("delay vector", mu.len())?;
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParameter("delays must be finite".into()));
    }
    Ok(raster(sp, mu, Exec::default()))
}

/// Raster with an explicit execution mode.
pub fn raster(sp: &SpatialInstance, mu: &[f64], exec: Exec) -> Raster {
    let kappa = sp.instance.travel_times();
    Raster {
        assignment: exec.map(kappa.rows(), |i| argmin_row(kappa.row(i), mu)),
        mu: mu.to_vec(),
    }
}

/// Fixed five-station layout on the unit square used for reproducible runs.
pub const FIVE_STATIONS: [[f64; 2]; 5] = [
    [0.82, 0.42],
    [0.45, 0.70],
    [0.50, 0.25],
    [0.20, 0.52],
    [0.10, 0.08],
];

/// The five-station layout on a 100 × 100 grid: unit side crossed in 50
/// minutes, capacity 50 per station, 3 EV/min in total, `T = 90`.
pub fn five_station_layout(epsilon: f64) -> Result<SpatialInstance> {
    let region = Region {
        side: 1.0,
        grid: 100,
        crossing_time: 50.0,
    };
    build_grid_instance(&region, &FIVE_STATIONS, &[50.0; 5], 3.0, 90.0, epsilon)
}
