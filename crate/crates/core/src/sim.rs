//! Discrete-event simulation of the stochastic system.
//!
//! EVs arrive as a Poisson process, each at a site drawn in proportion to the
//! site rates, and join the station minimizing travel time plus the current
//! queueing delay `T[1 - c_j/q_j]^+` evaluated on the integer occupancy before
//! the EV joins (ties go to the lowest station index). Each EV leaves after an
//! exponential sojourn of mean `T`, regardless of charging.
//!
//! # Randomness
//!
//! All draws come from ChaCha8 generators seeded with [`SimConfig::seed`],
//! one independent stream per purpose: [`STREAM_ARRIVALS`] for interarrival
//! gaps, [`STREAM_SITES`] for site choice and [`STREAM_SOJOURNS`] for sojourn
//! times. A run is a pure function of the instance and the configuration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{waiting_delay, ProblemInstance};
use crate::solver::EquilibriumSolution;

pub const STREAM_ARRIVALS: u64 = 1;
pub const STREAM_SITES: u64 = 2;
pub const STREAM_SOJOURNS: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated time, minutes.
    pub horizon: f64,
    /// Start of the averaging window, minutes.
    pub warmup: f64,
    /// Total arrival rate, EV/min.
    pub rate: f64,
    /// Spacing of occupancy snapshots, minutes.
    pub sample_stride: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.warmup >= 0.0 && self.horizon > self.warmup) {
            return Err(Error::InvalidParameter(format!(
                "need horizon > warmup >= 0, got horizon {} and warmup {}",
                self.horizon, self.warmup
            )));
        }
        if !(self.sample_stride > 0.0 && self.sample_stride.is_finite()) {
            return Err(Error::InvalidParameter("sample stride must be positive".into()));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidParameter("arrival rate must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival,
    Departure,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Sequence number of the EV, in arrival order.
    pub ev: u64,
    pub site: usize,
    pub station: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub occupancy: Vec<u32>,
    pub arrivals: u64,
    pub departures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
    pub config: SimConfig,
    pub n_stations: usize,
}

/// Calendar entry. Orders by time, then departures before arrivals, then
/// insertion sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    kind: EventKind,
    seq: u64,
    ev: u64,
    site: usize,
    station: usize,
}

impl Pending {
    fn key(&self) -> (f64, u8, u64) {
        let rank = match self.kind {
            EventKind::Departure => 0,
            EventKind::Arrival => 1,
        };
        (self.time, rank, self.seq)
    }
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ra, sa) = self.key();
        let (tb, rb, sb) = other.key();
        // reversed for a min-heap
        tb.total_cmp(&ta).then(rb.cmp(&ra)).then(sb.cmp(&sa))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Station chosen by an EV from `site` given the current occupancy.
pub fn choose_station(inst: &ProblemInstance, site: usize, occupancy: &[u32]) -> usize {
    let t = inst.sojourn();
    let kappa = inst.travel_times().row(site);
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (j, (&k, (&q, &c))) in kappa
        .iter()
        .zip(occupancy.iter().zip(inst.capacities()))
        .enumerate()
    {
        let cost = k + waiting_delay(f64::from(q), c, t);
        if cost < best_cost {
            best_cost = cost;
            best = j;
        }
    }
    best
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Runs one replication.
pub fn simulate(inst: &ProblemInstance, cfg: &SimConfig) -> Result<EventLog> {
    cfg.validate()?;
    if inst.demand().is_elastic() {
        return Err(Error::WrongDemandVariant {
            expected: "inelastic",
        });
    }
    let n = inst.n_stations();
    let mut log = EventLog {
        events: Vec::new(),
        snapshots: Vec::new(),
        config: cfg.clone(),
        n_stations: n,
    };
    let mut occupancy = vec![0u32; n];
    let mut arrivals = 0u64;
    let mut departures = 0u64;
    let mut next_snapshot = 0.0;
    let mut snapshot_index = 0u64;

    let mut take_snapshots = |log: &mut EventLog, upto: f64, occ: &[u32], a: u64, d: u64| {
        while next_snapshot <= cfg.horizon && next_snapshot < upto {
            log.snapshots.push(Snapshot {
                time: next_snapshot,
                occupancy: occ.to_vec(),
                arrivals: a,
                departures: d,
            });
            snapshot_index += 1;
            next_snapshot = snapshot_index as f64 * cfg.sample_stride;
        }
    };

    if cfg.rate > 0.0 {
        let mut arrival_rng = rng(cfg.seed, STREAM_ARRIVALS);
        let mut site_rng = rng(cfg.seed, STREAM_SITES);
        let mut sojourn_rng = rng(cfg.seed, STREAM_SOJOURNS);
        let gap = Exp::new(cfg.rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let sojourn = Exp::new(1.0 / inst.sojourn()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let sites = WeightedIndex::new(inst.nominal_rates())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;

        let mut calendar = BinaryHeap::new();
        let mut seq = 0u64;
        let mut next_ev = 0u64;
        calendar.push(Pending {
            time: gap.sample(&mut arrival_rng),
            kind: EventKind::Arrival,
            seq,
            ev: 0,
            site: 0,
            station: 0,
        });
        seq += 1;

        while let Some(p) = calendar.pop() {
            if p.time > cfg.horizon {
                break;
            }
            take_snapshots(&mut log, p.time, &occupancy, arrivals, departures);
            match p.kind {
                EventKind::Arrival => {
                    let site = sites.sample(&mut site_rng);
                    let station = choose_station(inst, site, &occupancy);
                    occupancy[station] += 1;
                    arrivals += 1;
                    let ev = next_ev;
                    next_ev += 1;
                    log.events.push(Event {
                        time: p.time,
                        kind: EventKind::Arrival,
                        ev,
                        site,
                        station,
                    });
                    calendar.push(Pending {
                        time: p.time + sojourn.sample(&mut sojourn_rng),
                        kind: EventKind::Departure,
                        seq,
                        ev,
                        site,
                        station,
                    });
                    seq += 1;
                    calendar.push(Pending {
                        time: p.time + gap.sample(&mut arrival_rng),
                        kind: EventKind::Arrival,
                        seq,
                        ev: 0,
                        site: 0,
                        station: 0,
                    });
                    seq += 1;
                }
                EventKind::Departure => {
                    occupancy[p.station] -= 1;
                    departures += 1;
                    log.events.push(Event {
                        time: p.time,
                        kind: EventKind::Departure,
                        ev: p.ev,
                        site: p.site,
                        station: p.station,
                    });
                }
            }
        }
    }
    take_snapshots(&mut log, f64::INFINITY, &occupancy, arrivals, departures);
    Ok(log)
}

/// Runs one replication per seed (`cfg.seed` is ignored).
pub fn simulate_replications(
    inst: &ProblemInstance,
    cfg: &SimConfig,
    seeds: &[u64],
    exec: Exec,
) -> Result<Vec<EventLog>> {
    exec.map(seeds.len(), |k| {
        let cfg = SimConfig {
            seed: seeds[k],
            ..cfg.clone()
        };
        simulate(inst, &cfg)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    /// Length of the averaging window `[warmup, horizon]`, minutes.
    pub window: f64,
    /// Time-average occupancy per station.
    pub mean_occupancy: Vec<f64>,
    /// Time-average queueing delay `T[1 - c/q]^+` per station, minutes.
    pub mean_delay: Vec<f64>,
    pub total_mean: f64,
    pub total_variance: f64,
    /// Arrivals per minute observed in the window.
    pub effective_rate: f64,
    /// `|mean(Σq) - r_eff T| / (r T)`.
    pub little_residual: f64,
    /// `|mean q_j - q*_j| / q*_j`, when a fluid equilibrium is supplied.
    pub fluid_relative_error: Option<Vec<f64>>,
}

/// Time averages over the post-warmup window, computed exactly from the
/// event log (occupancy is piecewise constant between events).
pub fn summarize(
    log: &EventLog,
    inst: &ProblemInstance,
    equilibrium: Option<&EquilibriumSolution>,
) -> Result<SimSummary> {
    let cfg = &log.config;
    let n = log.n_stations;
    inst.check_stations("event log", n)?;
    let window = cfg.horizon - cfg.warmup;
    if !(window > 0.0) {
        return Err(Error::EmptyWindow);
    }
    let t = inst.sojourn();
    let caps = inst.capacities();

    let mut occ = vec![0i64; n];
    let mut area = vec![0.0; n];
    let mut delay_area = vec![0.0; n];
    let mut total_area = 0.0;
    let mut total_sq_area = 0.0;
    let mut arrivals_in_window = 0u64;
    let mut last = cfg.warmup;

    let mut accumulate = |occ: &[i64], from: f64, to: f64| {
        let dt = to - from;
        if dt <= 0.0 {
            return;
        }
        let mut tot = 0.0;
        for j in 0..n {
            let q = occ[j] as f64;
            area[j] += q * dt;
            delay_area[j] += waiting_delay(q, caps[j], t) * dt;
            tot += q;
        }
        total_area += tot * dt;
        total_sq_area += tot * tot * dt;
    };

    for e in &log.events {
        if e.time > cfg.warmup {
            accumulate(&occ, last, e.time);
            last = e.time;
            if e.kind == EventKind::Arrival {
                arrivals_in_window += 1;
            }
        }
        match e.kind {
            EventKind::Arrival => occ[e.station] += 1,
            EventKind::Departure => occ[e.station] -= 1,
        }
    }
    accumulate(&occ, last, cfg.horizon);

    let mean_occupancy: Vec<f64> = area.iter().map(|a| a / window).collect();
    let mean_delay = delay_area.iter().map(|a| a / window).collect();
    let total_mean = total_area / window;
    let total_variance = (total_sq_area / window - total_mean * total_mean).max(0.0);
    let effective_rate = arrivals_in_window as f64 / window;
    let little_residual = if cfg.rate > 0.0 {
        (total_mean - effective_rate * t).abs() / (cfg.rate * t)
    } else {
        0.0
    };
    let fluid_relative_error = equilibrium.map(|eq| {
        mean_occupancy
            .iter()
            .zip(eq.queues.iter())
            .map(|(m, q)| (m - q).abs() / q)
            .collect()
    });
    Ok(SimSummary {
        window,
        mean_occupancy,
        mean_delay,
        total_mean,
        total_variance,
        effective_rate,
        little_residual,
        fluid_relative_error,
    })
}

/// Replays the log and recomputes every routing decision from the occupancy
/// seen by the arriving EV. Returns the index of the first arrival event whose
/// recorded station differs, if any.
pub fn replay_decisions(log: &EventLog, inst: &ProblemInstance) -> Option<usize> {
    let mut occ = vec![0u32; log.n_stations];
    for (k, e) in log.events.iter().enumerate() {
        match e.kind {
            EventKind::Arrival => {
                if choose_station(inst, e.site, &occ) != e.station {
                    return Some(k);
                }
                occ[e.station] += 1;
            }
            EventKind::Departure => occ[e.station] -= 1,
        }
    }
    None
}
