//! Social planner's assignment and price-of-anarchy sweeps.
//!
//! The planner minimizes `Cs = Σ κ_ij x_ij + Σ_j [q_j - c_j]^+` with
//! `q_j = T Σ_i x_ij`. That linear program is a min-cost flow on
//! `source → site → station → sink`, where each station reaches the sink by
//! two parallel arcs: capacity `c_j/T` at cost 0, and unbounded capacity at
//! cost `T` (one unit of rate above capacity keeps `T` EVs waiting).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{cost_c0, cost_cs, Matrix, ProblemInstance, QueueState, RoutingMatrix};
use crate::solver::{solve_equilibrium, SolverConfig};

/// Smoothing used for the selfish side of a sweep, minutes.
pub const SELFISH_EPSILON: f64 = 1e-3;

/// Remaining supply below which augmentation stops.
const SUPPLY_TOL: f64 = 1e-12;
/// Residual capacity treated as saturated.
const RESIDUAL_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Arc {
    to: usize,
    /// Remaining capacity in this direction.
    residual: f64,
    cost: f64,
}

/// Min-cost flow with real capacities, solved by successive shortest
/// augmenting paths with node potentials.
///
/// Arcs are stored in pairs: `2k` is the forward arc, `2k + 1` its reverse.
#[derive(Debug, Clone)]
pub struct MinCostFlow {
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
    potential: Vec<f64>,
    capacity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        MinCostFlow {
            arcs: Vec::new(),
            adjacency: vec![Vec::new(); nodes],
            potential: vec![0.0; nodes],
            capacity: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    /// Adds an arc and returns its id. Costs must be nonnegative.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64, cost: f64) -> usize {
        assert!(cost >= 0.0, "arc costs must be nonnegative");
        assert!(capacity >= 0.0, "arc capacities must be nonnegative");
        let id = self.arcs.len();
        self.arcs.push(Arc {
            to,
            residual: capacity,
            cost,
        });
        self.arcs.push(Arc {
            to: from,
            residual: 0.0,
            cost: -cost,
        });
        self.adjacency[from].push(id);
        self.adjacency[to].push(id + 1);
        self.capacity.push(capacity);
        id
    }

    /// Flow currently carried by arc `id`.
    pub fn flow(&self, id: usize) -> f64 {
        self.arcs[id + 1].residual
    }

    fn tail(&self, arc: usize) -> usize {
        self.arcs[arc ^ 1].to
    }

    /// Routes `supply` from `source` to `sink` at minimum cost; returns the
    /// total cost.
    pub fn solve(&mut self, source: usize, sink: usize, supply: f64) -> Result<f64> {
        let nodes = self.n_nodes();
        let mut remaining = supply;
        let mut total = 0.0;
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        let mut heap = BinaryHeap::new();

        while remaining > SUPPLY_TOL {
            dist.fill(f64::INFINITY);
            parent.fill(usize::MAX);
            done.fill(false);
            dist[source] = 0.0;
            heap.push(HeapItem {
                dist: 0.0,
                node: source,
            });
            while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                for &e in &self.adjacency[u] {
                    let arc = self.arcs[e];
                    if arc.residual <= RESIDUAL_TOL {
                        continue;
                    }
                    let reduced = (arc.cost + self.potential[u] - self.potential[arc.to]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[arc.to] {
                        dist[arc.to] = nd;
                        parent[arc.to] = e;
                        heap.push(HeapItem {
                            dist: nd,
                            node: arc.to,
                        });
                    }
                }
            }
            if !dist[sink].is_finite() {
                return Err(Error::Infeasible(format!(
                    "{remaining} units of supply cannot reach the sink"
                )));
            }
            for v in 0..nodes {
                if dist[v].is_finite() {
                    self.potential[v] += dist[v];
                }
            }

            let mut push = remaining;
            let mut v = sink;
            while v != source {
                let e = parent[v];
                push = push.min(self.arcs[e].residual);
                v = self.tail(e);
            }
            let mut v = sink;
            while v != source {
                let e = parent[v];
                self.arcs[e].residual -= push;
                self.arcs[e ^ 1].residual += push;
                total += push * self.arcs[e].cost;
                v = self.tail(e);
            }
            remaining -= push;
        }
        Ok(total)
    }

    /// Most negative reduced cost over residual arcs; nonnegative (up to
    /// roundoff) certifies optimality of the current flow.
    pub fn min_residual_reduced_cost(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for (e, arc) in self.arcs.iter().enumerate() {
            if arc.residual <= RESIDUAL_TOL {
                continue;
            }
            let u = self.tail(e);
            let rc = arc.cost + self.potential[u] - self.potential[arc.to];
            worst = worst.min(rc);
        }
        worst
    }

    /// Arc capacities in insertion order (forward arcs only).
    pub fn capacities(&self) -> &[f64] {
        &self.capacity
    }
}

/// The planner's network for an instance, with handles to its arcs.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub flow: MinCostFlow,
    pub source: usize,
    pub sink: usize,
    /// `site_arcs[i * n + j]` is the arc from site `i` to station `j`.
    pub site_arcs: Vec<usize>,
    pub supply: f64,
    n_sites: usize,
    n_stations: usize,
}

impl FlowNetwork {
    /// Builds the planner's network: source, site nodes, station nodes, sink.
    pub fn build(inst: &ProblemInstance) -> Result<Self> {
        if inst.demand().is_elastic() {
            return Err(Error::WrongDemandVariant {
                expected: "inelastic",
            });
        }
        let m = inst.n_sites();
        let n = inst.n_stations();
        let t = inst.sojourn();
        let source = 0;
        let site = |i: usize| 1 + i;
        let station = |j: usize| 1 + m + j;
        let sink = 1 + m + n;
        let mut flow = MinCostFlow::new(m + n + 2);
        let rates = inst.nominal_rates();
        for (i, &r) in rates.iter().enumerate() {
            flow.add_arc(source, site(i), r, 0.0);
        }
        let mut site_arcs = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let k = inst.travel_times().get(i, j);
                site_arcs.push(flow.add_arc(site(i), station(j), f64::INFINITY, k));
            }
        }
        for (j, &c) in inst.capacities().iter().enumerate() {
            flow.add_arc(station(j), sink, c / t, 0.0);
            flow.add_arc(station(j), sink, f64::INFINITY, t);
        }
        Ok(FlowNetwork {
            flow,
            source,
            sink,
            site_arcs,
            supply: rates.iter().sum(),
            n_sites: m,
            n_stations: n,
        })
    }

    pub fn routing(&self) -> RoutingMatrix {
        let mut x = Matrix::zeros(self.n_sites, self.n_stations);
        for i in 0..self.n_sites {
            for j in 0..self.n_stations {
                x.set(i, j, self.flow.flow(self.site_arcs[i * self.n_stations + j]));
            }
        }
        RoutingMatrix(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialOptimum {
    pub routing: RoutingMatrix,
    pub queues: QueueState,
    /// Optimal social cost `Cs`, EV count.
    pub cost: f64,
    /// Objective reported by the flow solver (equals `cost` up to roundoff).
    pub flow_cost: f64,
    /// Smallest residual reduced cost at termination.
    pub min_reduced_cost: f64,
}

/// Solves the planner's problem for an instance with fixed demand.
pub fn solve_social_optimum(inst: &ProblemInstance) -> Result<SocialOptimum> {
    let mut net = FlowNetwork::build(inst)?;
    let flow_cost = net.flow.solve(net.source, net.sink, net.supply)?;
    let routing = net.routing();
    let t = inst.sojourn();
    let queues = QueueState(routing.station_inflow().into_iter().map(|f| t * f).collect());
    let cost = cost_cs(&routing, &queues, inst);
    Ok(SocialOptimum {
        routing,
        queues,
        cost,
        flow_cost,
        min_reduced_cost: net.flow.min_residual_reduced_cost(),
    })
}

/// One row of a price-of-anarchy sweep; costs in EV-count units.
#[derive(Debug, Clone, PartialEq)]
pub struct PoaRow {
    /// Total demand rate, EV/min.
    pub r: f64,
    pub c0_selfish: f64,
    pub cs_selfish: f64,
    pub cs_opt: f64,
    /// `cs_selfish - cs_opt`.
    pub gap: f64,
    /// Per-station inflow at the selfish equilibrium.
    pub selfish_inflow: Vec<f64>,
    /// Per-station inflow at the social optimum.
    pub social_inflow: Vec<f64>,
}

/// Compares the selfish equilibrium (at [`SELFISH_EPSILON`]) with the social
/// optimum for each total demand in `r_values`.
///
/// Demand is scaled uniformly from the template, so the spatial profile of
/// the template is preserved.
pub fn poa_sweep(
    template: &ProblemInstance,
    r_values: &[f64],
    solver: &SolverConfig,
    exec: Exec,
) -> Result<Vec<PoaRow>> {
    if template.demand().is_elastic() {
        return Err(Error::WrongDemandVariant {
            expected: "inelastic",
        });
    }
    if let Some(r) = r_values.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!("sweep rates must be positive, got {r}")));
    }
    let base = template.with_epsilon(SELFISH_EPSILON)?;
    let total = base.total_rate();
    let rows = exec.map(r_values.len(), |k| {
        let r = r_values[k];
        poa_row(&base, r, total, solver).map_err(|e| Error::Sweep {
            rate: r,
            source: Box::new(e),
        })
    });
    rows.into_iter().collect()
}

fn poa_row(base: &ProblemInstance, r: f64, total: f64, solver: &SolverConfig) -> Result<PoaRow> {
    let inst = base.with_demand_scaled(r / total)?;
    let eq = solve_equilibrium(&inst, solver)?;
    let opt = solve_social_optimum(&inst)?;
    let c0_selfish = cost_c0(&eq.routing, &eq.queues, &inst);
    let cs_selfish = cost_cs(&eq.routing, &eq.queues, &inst);
    Ok(PoaRow {
        r,
        c0_selfish,
        cs_selfish,
        cs_opt: opt.cost,
        gap: cs_selfish - opt.cost,
        selfish_inflow: eq.routing.station_inflow(),
        social_inflow: opt.routing.station_inflow(),
    })
}
