//! JSON run configuration.

use std::fmt;
use std::path::Path;

use evcharge::model::DemandModel;
use evcharge::spatial::{build_grid_instance, build_site_instance, Region, Site, SpatialInstance};
use evcharge::{SolverConfig, SolverMethod};
use serde::Deserialize;

/// Problem with the configuration document itself.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub stations: Vec<StationSpec>,
    pub region: Option<RegionSpec>,
    pub sites: Option<Vec<SiteSpec>>,
    pub params: Params,
    pub demand: DemandSpec,
    pub solver: Option<SolverSpec>,
    pub ode: Option<OdeSpec>,
    pub sim: Option<SimSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub x: f64,
    pub y: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub side: f64,
    pub grid: usize,
    pub crossing_time_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub x: f64,
    pub y: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(rename = "T_min")]
    pub sojourn_min: f64,
    pub epsilon_min: f64,
    /// Travel speed for explicit sites, distance units per minute.
    pub speed_per_min: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandSpec {
    Inelastic {
        /// Total rate; required with a region, rescales explicit sites.
        rate_total: Option<f64>,
    },
    ElasticUniform {
        rbar_total: f64,
        /// Upper end of the uniform patience distribution; defaults to `T`.
        patience_max_min: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    ProjectedNewton,
    ProjectedGradient,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub grad_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub method: Option<MethodSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSpec {
    pub horizon_min: Option<f64>,
    pub step_min: Option<f64>,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub seed: Option<u64>,
    pub horizon_min: Option<f64>,
    pub warmup_min: Option<f64>,
    pub stride_min: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.stations.is_empty() {
            return Err(invalid("\"stations\" must not be empty"));
        }
        match (&self.region, &self.sites) {
            (Some(_), Some(_)) => return Err(invalid("give either \"region\" or \"sites\", not both")),
            (None, None) => return Err(invalid("one of \"region\" or \"sites\" is required")),
            (Some(_), None) => {
                if let DemandSpec::Inelastic { rate_total: None } = self.demand {
                    return Err(invalid("inelastic demand on a region needs \"rate_total\""));
                }
                if self.params.speed_per_min.is_some() {
                    return Err(invalid("\"speed_per_min\" applies to explicit sites only"));
                }
            }
            (None, Some(sites)) => {
                if sites.is_empty() {
                    return Err(invalid("\"sites\" must not be empty"));
                }
            }
        }
        if let Some(s) = &self.solver {
            if let Some(t) = s.grad_tol {
                if !(t > 0.0) {
                    return Err(invalid("solver.grad_tol must be positive"));
                }
            }
            if s.max_iters == Some(0) {
                return Err(invalid("solver.max_iters must be positive"));
            }
        }
        Ok(())
    }

    pub fn station_positions(&self) -> Vec<[f64; 2]> {
        self.stations.iter().map(|s| [s.x, s.y]).collect()
    }

    pub fn region(&self) -> Option<Region> {
        self.region.as_ref().map(|r| Region {
            side: r.side,
            grid: r.grid,
            crossing_time: r.crossing_time_min,
        })
    }

    /// Builds the spatial instance described by the document.
    pub fn instance(&self) -> anyhow::Result<SpatialInstance> {
        let stations = self.station_positions();
        let caps: Vec<f64> = self.stations.iter().map(|s| s.capacity).collect();
        let t = self.params.sojourn_min;
        let eps = self.params.epsilon_min;
        let base = match (&self.region(), &self.sites) {
            (Some(region), _) => {
                let total = match self.demand {
                    DemandSpec::Inelastic { rate_total } => rate_total.unwrap_or(0.0),
                    DemandSpec::ElasticUniform { rbar_total, .. } => rbar_total,
                };
                build_grid_instance(region, &stations, &caps, total, t, eps)
            }
            (None, Some(sites)) => {
                let mut sites: Vec<Site> = sites
                    .iter()
                    .map(|s| Site {
                        position: [s.x, s.y],
                        rate: s.rate,
                    })
                    .collect();
                let target = match self.demand {
                    DemandSpec::Inelastic { rate_total } => rate_total,
                    DemandSpec::ElasticUniform { rbar_total, .. } => Some(rbar_total),
                };
                if let Some(total) = target {
                    let sum: f64 = sites.iter().map(|s| s.rate).sum();
                    if !(sum > 0.0) {
                        return Err(invalid("site rates must have a positive sum"));
                    }
                    for s in &mut sites {
                        s.rate *= total / sum;
                    }
                }
                let speed = self.params.speed_per_min.unwrap_or(1.0);
                build_site_instance(&sites, &stations, &caps, speed, t, eps)
            }
            (None, None) => unreachable!("validated"),
        }
        .map_err(|e| invalid(e.to_string()))?;

        match self.demand {
            DemandSpec::Inelastic { .. } => Ok(base),
            DemandSpec::ElasticUniform {
                patience_max_min, ..
            } => {
                let rates = base.instance.nominal_rates().to_vec();
                let demand = DemandModel::elastic_uniform(rates, patience_max_min.unwrap_or(t));
                base.with_demand(demand).map_err(|e| invalid(e.to_string()))
            }
        }
    }

    pub fn solver(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(s) = &self.solver {
            if let Some(t) = s.grad_tol {
                cfg.grad_tol = t;
            }
            if let Some(k) = s.max_iters {
                cfg.max_iters = k;
            }
            if let Some(m) = s.method {
                cfg.method = match m {
                    MethodSpec::ProjectedNewton => SolverMethod::ProjectedNewton,
                    MethodSpec::ProjectedGradient => SolverMethod::ProjectedGradient,
                };
            }
        }
        cfg
    }

    pub fn is_elastic(&self) -> bool {
        matches!(self.demand, DemandSpec::ElasticUniform { .. })
    }
}
