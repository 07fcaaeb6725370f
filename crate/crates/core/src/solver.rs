//! Equilibrium computation by ascent on the concave dual.
//!
//! The unique maximizer `μ*` of the dual over `[0, T)^n` is the vector of
//! equilibrium queueing delays. Two box-constrained ascent schemes are
//! provided; both use an Armijo backtracking search along the projection arc
//! and stop on the projected-gradient ∞-norm, so they share one fixed point:
//!
//! * [`SolverMethod::ProjectedNewton`] (default): Newton steps on the free
//!   coordinates, gradient steps on coordinates held at the bound.
//! * [`SolverMethod::ProjectedGradient`]: plain projected gradient ascent.
//!   Adequate when `ε` is not small; with `ε = 1e-3` the softmin curvature
//!   `r/ε` makes it needlessly slow.

use nalgebra::{DMatrix, DVector};

use crate::dual::{evaluate, DualEval, Want};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{
    primal_cost, waiting_delay, DemandModel, Matrix, Multipliers, ProblemInstance, QueueState,
    RoutingMatrix,
};

/// Relative width of the excluded band below `μ = T`.
pub const UPPER_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    #[default]
    ProjectedNewton,
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop when the projected gradient ∞-norm falls to this value.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Starting multipliers; zero when absent.
    pub initial: Option<Vec<f64>>,
    /// Step shrink factor of the backtracking search.
    pub backtrack: f64,
    /// Armijo sufficient-increase constant.
    pub sufficient_increase: f64,
    pub method: SolverMethod,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-9,
            max_iters: 100_000,
            initial: None,
            backtrack: 0.5,
            sufficient_increase: 1e-4,
            method: SolverMethod::default(),
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParameter("grad_tol must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter("backtrack factor must lie in (0, 1)".into()));
        }
        if !(self.sufficient_increase > 0.0 && self.sufficient_increase < 1.0) {
            return Err(Error::InvalidParameter(
                "sufficient-increase constant must lie in (0, 1)".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Primal quantities induced by a multiplier vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    pub routing: RoutingMatrix,
    pub queues: QueueState,
    /// Site rates: the fixed rates, or thinned rates under elastic demand.
    pub rates: Vec<f64>,
    /// Smoothed delay to service `τ_i = φ_ε(κ_i + μ)` for every site.
    pub delays: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub mu: Multipliers,
    pub routing: RoutingMatrix,
    pub queues: QueueState,
    pub rates: Vec<f64>,
    pub delays: Vec<f64>,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub kkt_residual: f64,
    pub projected_gradient: f64,
    pub iterations: usize,
    /// Dual value after every accepted iterate, starting with the initial point.
    pub dual_trace: Vec<f64>,
}

impl EquilibriumSolution {
    pub fn inflow(&self) -> Vec<f64> {
        self.routing.station_inflow()
    }
}

/// Projected gradient: components pushing out of the box are zeroed.
fn projected_gradient(mu: &[f64], g: &[f64], upper: f64) -> Vec<f64> {
    mu.iter()
        .zip(g)
        .map(|(&m, &g)| {
            if m <= 0.0 {
                g.max(0.0)
            } else if m >= upper {
                g.min(0.0)
            } else {
                g
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

fn project(v: &mut [f64], upper: f64) {
    for x in v {
        *x = x.clamp(0.0, upper);
    }
}

/// Newton direction on the free set, gradient direction on the active set.
fn newton_direction(mu: &[f64], eval: &DualEval, upper: f64) -> Option<Vec<f64>> {
    let n = mu.len();
    let g = &eval.gradient;
    let mut trial = mu.iter().zip(g).map(|(m, g)| m + g).collect::<Vec<_>>();
    project(&mut trial, upper);
    let width = mu
        .iter()
        .zip(&trial)
        .fold(0.0f64, |a, (m, t)| a.max((m - t).abs()))
        .min(1e-3);
    let active: Vec<bool> = (0..n)
        .map(|j| (mu[j] <= width && g[j] < 0.0) || (mu[j] >= upper - width && g[j] > 0.0))
        .collect();
    let free: Vec<usize> = (0..n).filter(|&j| !active[j]).collect();

    let mut d = g.clone();
    if !free.is_empty() {
        let k = free.len();
        let neg_h = DMatrix::from_fn(k, k, |a, b| -eval.hessian[free[a] * n + free[b]]);
        let rhs = DVector::from_iterator(k, free.iter().map(|&j| g[j]));
        let step = neg_h.cholesky()?.solve(&rhs);
        for (a, &j) in free.iter().enumerate() {
            d[j] = step[a];
        }
    }
    if d.iter().all(|x| x.is_finite()) {
        Some(d)
    } else {
        None
    }
}

/// Gradient divided by the (negative) Hessian diagonal. The capacity term
/// keeps every diagonal entry below `-c_j/T²`.
fn scaled_gradient(eval: &DualEval, n: usize) -> Vec<f64> {
    let stride = if eval.hessian.len() == n * n { n + 1 } else { 1 };
    eval.gradient
        .iter()
        .enumerate()
        .map(|(j, g)| g / -eval.hessian[j * stride])
        .collect()
}

struct LineSearch<'a> {
    inst: &'a ProblemInstance,
    cfg: &'a SolverConfig,
    upper: f64,
    want: Want,
}

impl LineSearch<'_> {
    /// Backtracks along `P(μ + α d)` from `alpha0`; returns the accepted point,
    /// its evaluation and the accepted step.
    fn run(
        &self,
        mu: &[f64],
        eval: &DualEval,
        d: &[f64],
        alpha0: f64,
    ) -> Option<(Vec<f64>, DualEval, f64)> {
        let slack = 64.0 * f64::EPSILON * (1.0 + eval.value.abs());
        let mut alpha = alpha0;
        while alpha > 1e-20 {
            let mut cand: Vec<f64> = mu.iter().zip(d).map(|(m, d)| m + alpha * d).collect();
            project(&mut cand, self.upper);
            let ascent: f64 = cand
                .iter()
                .zip(mu)
                .zip(&eval.gradient)
                .map(|((c, m), g)| g * (c - m))
                .sum();
            if cand.as_slice() != mu && ascent > 0.0 {
                let next = evaluate(self.inst, &cand, self.want, self.cfg.exec);
                let target = eval.value + self.cfg.sufficient_increase * ascent;
                // Within roundoff of the target the values cannot rank the
                // points. By concavity, a nonnegative slope at the candidate
                // along the segment from `mu` certifies the increase; failing
                // that, the projected gradient has to shrink.
                let ok = next.value >= target + slack
                    || (next.value >= target - slack
                        && (cand.iter().zip(mu).zip(&next.gradient).map(|((c, m), g)| g * (c - m)).sum::<f64>() >= 0.0
                            || inf_norm(&projected_gradient(&cand, &next.gradient, self.upper))
                                < inf_norm(&projected_gradient(mu, &eval.gradient, self.upper))));
                if next.value.is_finite() && ok {
                    return Some((cand, next, alpha));
                }
            }
            alpha *= self.cfg.backtrack;
        }
        None
    }
}

/// Maximizes the applicable dual and returns the equilibrium with its
/// optimality certificates.
///
/// Iterates are a deterministic function of the instance and configuration.
pub fn solve_equilibrium(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<EquilibriumSolution> {
    cfg.validate()?;
    let n = inst.n_stations();
    let t = inst.sojourn();
    let upper = t * (1.0 - UPPER_GUARD);

    let mut mu = match &cfg.initial {
        Some(v) => {
            inst.check_stations("initial multipliers", v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("non-finite initial multiplier".into()));
            }
            v.clone()
        }
        None => vec![0.0; n],
    };
    project(&mut mu, upper);

    let want = match cfg.method {
        SolverMethod::ProjectedNewton => Want::WithHessian,
        SolverMethod::ProjectedGradient => Want::WithDiagonal,
    };
    let search = LineSearch {
        inst,
        cfg,
        upper,
        want,
    };
    let mut eval = evaluate(inst, &mu, want, cfg.exec);
    let mut trace = vec![eval.value];
    let mut gradient_step = 1.0;
    let mut iterations = 0;

    let residual = loop {
        let pg = inf_norm(&projected_gradient(&mu, &eval.gradient, upper));
        if pg <= cfg.grad_tol {
            break pg;
        }
        if iterations >= cfg.max_iters {
            return Err(Error::NotConverged {
                iterations,
                residual: pg,
                last_iterate: mu,
            });
        }
        iterations += 1;

        let mut accepted = None;
        if cfg.method == SolverMethod::ProjectedNewton {
            if let Some(d) = newton_direction(&mu, &eval, upper) {
                accepted = search.run(&mu, &eval, &d, 1.0);
            }
        }
        if accepted.is_none() {
            let d = scaled_gradient(&eval, n);
            accepted = search
                .run(&mu, &eval, &d, gradient_step)
                .map(|(m, e, a)| {
                    gradient_step = 2.0 * a;
                    (m, e, a)
                });
        }
        match accepted {
            Some((next_mu, next_eval, _)) => {
                mu = next_mu;
                eval = next_eval;
                trace.push(eval.value);
            }
            None => {
                return Err(Error::NotConverged {
                    iterations,
                    residual: pg,
                    last_iterate: mu,
                })
            }
        }
    };

    let mu = Multipliers(mu);
    let primal = recover_primal(&mu, inst)?;
    let mut sol = EquilibriumSolution {
        mu,
        routing: primal.routing,
        queues: primal.queues,
        rates: primal.rates,
        delays: primal.delays,
        dual_value: eval.value,
        duality_gap: 0.0,
        kkt_residual: 0.0,
        projected_gradient: residual,
        iterations,
        dual_trace: trace,
    };
    sol.duality_gap = duality_gap(&sol, inst)?;
    sol.kkt_residual = kkt_residuals(&sol, inst)?;
    Ok(sol)
}

/// Routing, occupancies and rates induced by multipliers `mu`.
///
/// `x_ij = r_i δ_ij(μ)` with `r_i` thinned by the site's patience under
/// elastic demand, and `q_j = T Σ_i x_ij`.
pub fn recover_primal(mu: &Multipliers, inst: &ProblemInstance) -> Result<PrimalPoint> {
    inst.check_stations("multipliers", mu.len())?;
    mu.check_domain(inst.sojourn())?;
    let m = inst.n_sites();
    let n = inst.n_stations();
    let kappa = inst.travel_times();
    let mut routing = Matrix::zeros(m, n);
    let mut rates = Vec::with_capacity(m);
    let mut delays = Vec::with_capacity(m);
    let mut y = vec![0.0; n];
    for i in 0..m {
        for ((y, k), mu) in y.iter_mut().zip(kappa.row(i)).zip(mu.iter()) {
            *y = k + mu;
        }
        let row = routing.row_mut(i);
        let tau = crate::model::softmin_into(&y, inst.epsilon(), row);
        let r = inst.demand().rate_at(i, tau);
        row.iter_mut().for_each(|x| *x *= r);
        rates.push(r);
        delays.push(tau);
    }
    let routing = RoutingMatrix(routing);
    let queues = QueueState(
        routing
            .station_inflow()
            .into_iter()
            .map(|f| inst.sojourn() * f)
            .collect(),
    );
    Ok(PrimalPoint {
        routing,
        queues,
        rates,
        delays,
    })
}

/// ∞-norm of the equilibrium conditions: flow balance `T Σ_i x_ij = q_j`,
/// delay consistency `μ_j = T[1 - c_j/q_j]^+`, and complementary slackness
/// `max(0, -∂_j D) μ_j`.
pub fn kkt_residuals(sol: &EquilibriumSolution, inst: &ProblemInstance) -> Result<f64> {
    inst.check_stations("solution", sol.mu.len())?;
    let t = inst.sojourn();
    let inflow = sol.routing.station_inflow();
    let grad = evaluate(inst, &sol.mu, Want::ValueAndFlow, Exec::default()).gradient;
    let mut worst = 0.0f64;
    for j in 0..inst.n_stations() {
        let q = sol.queues[j];
        let c = inst.capacities()[j];
        worst = worst
            .max((t * inflow[j] - q).abs())
            .max((sol.mu[j] - waiting_delay(q, c, t)).abs())
            .max((-grad[j]).max(0.0) * sol.mu[j]);
    }
    Ok(worst)
}

/// Primal objective at the recovered point minus the dual value.
///
/// Under elastic demand the primal objective is the regularized cost minus
/// the total utility of the thinned rates.
pub fn duality_gap(sol: &EquilibriumSolution, inst: &ProblemInstance) -> Result<f64> {
    inst.check_stations("solution", sol.mu.len())?;
    sol.mu.check_domain(inst.sojourn())?;
    let mut primal = primal_cost(&sol.routing, &sol.queues, inst);
    if let DemandModel::Elastic {
        max_rates,
        patience,
    } = inst.demand()
    {
        primal -= sol
            .rates
            .iter()
            .zip(max_rates)
            .zip(patience)
            .map(|((&r, &rbar), p)| p.utility(r, rbar))
            .sum::<f64>();
    }
    let dual = evaluate(inst, &sol.mu, Want::ValueAndFlow, Exec::default()).value;
    Ok(primal - dual)
}
