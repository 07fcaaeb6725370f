//! Lagrange dual of the equilibrium problem and its derivatives.
//!
//! For fixed demand the dual is
//! `D(μ) = Σ_i r_i φ_ε(κ_i + μ) + Σ_j c_j log(1 - μ_j/T)`;
//! for elastic demand the first sum becomes `Σ_i U*_i(φ_ε(κ_i + μ))`.
//! Both are strictly concave on `[0, T)^n`, and their gradient is the station
//! inflow minus `c_j / (T - μ_j)`.
//!
//! Per-site contributions are accumulated with [`Exec::fold_blocks`], so the
//! result does not depend on whether the sum ran in parallel.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{softmin_into, DemandModel, Multipliers, ProblemInstance};

/// Which pieces of the per-site aggregate to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Want {
    /// Inflow only; the value is left at zero under fixed demand.
    Flow,
    ValueAndFlow,
    /// Value, inflow and the Hessian diagonal.
    WithDiagonal,
    WithHessian,
}

/// Sum over sites of the demand part of the dual.
#[derive(Debug, Clone)]
pub(crate) struct SiteAggregate {
    /// `Σ_i r_i τ_i` or `Σ_i U*_i(τ_i)`.
    pub value: f64,
    /// Station inflow `Σ_i r_i(τ_i) δ_ij`.
    pub inflow: Vec<f64>,
    /// Row-major `n × n` Hessian of `value`, its diagonal, or empty,
    /// depending on [`Want`].
    pub hessian: Vec<f64>,
}

impl SiteAggregate {
    fn zeros(n: usize, want: Want) -> Self {
        SiteAggregate {
            value: 0.0,
            inflow: vec![0.0; n],
            hessian: match want {
                Want::WithHessian => vec![0.0; n * n],
                Want::WithDiagonal => vec![0.0; n],
                _ => Vec::new(),
            },
        }
    }

    fn absorb(&mut self, other: &SiteAggregate) {
        self.value += other.value;
        for (a, b) in self.inflow.iter_mut().zip(&other.inflow) {
            *a += b;
        }
        for (a, b) in self.hessian.iter_mut().zip(&other.hessian) {
            *a += b;
        }
    }
}

/// Below this the factored weights may have lost the dominant term to
/// underflow and the site is recomputed directly.
const FACTORED_FLOOR: f64 = 1e-150;

struct Scratch {
    agg: SiteAggregate,
    y: Vec<f64>,
    delta: Vec<f64>,
}

/// Evaluates the demand side of the dual at `mu` (no domain check).
pub(crate) fn aggregate(inst: &ProblemInstance, mu: &[f64], want: Want, exec: Exec) -> SiteAggregate {
    let n = inst.n_stations();
    let eps = inst.epsilon();
    let kappa = inst.travel_times();
    let demand = inst.demand();
    let kernel = inst.kernel();
    let mu_floor = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let station_weights: Vec<f64> = mu.iter().map(|m| (-(m - mu_floor) / eps).exp()).collect();
    let need_tau = want != Want::Flow || demand.is_elastic();

    let blocks = exec.fold_blocks(
        inst.n_sites(),
        || Scratch {
            agg: SiteAggregate::zeros(n, want),
            y: vec![0.0; n],
            delta: vec![0.0; n],
        },
        |s, i| {
            // exp(-(κ_ij + μ_j - lo)/ε) = w_ij e_j with lo = min κ_i + min μ
            let w = &kernel.weights[i * n..(i + 1) * n];
            let mut sum = 0.0;
            for ((d, w), e) in s.delta.iter_mut().zip(w).zip(&station_weights) {
                *d = w * e;
                sum += *d;
            }
            let tau = if sum >= FACTORED_FLOOR {
                let inv = 1.0 / sum;
                for d in s.delta.iter_mut() {
                    *d *= inv;
                }
                if need_tau {
                    kernel.floor[i] + mu_floor - eps * sum.ln()
                } else {
                    0.0
                }
            } else {
                for ((y, k), m) in s.y.iter_mut().zip(kappa.row(i)).zip(mu) {
                    *y = k + m;
                }
                softmin_into(&s.y, eps, &mut s.delta)
            };
            // site value, routed rate, and the δδᵀ coefficient of the Hessian
            let (value, rate, outer) = match demand {
                DemandModel::Inelastic { rates } => (rates[i] * tau, rates[i], 0.0),
                DemandModel::Elastic {
                    max_rates,
                    patience,
                } => {
                    let p = &patience[i];
                    let rbar = max_rates[i];
                    (
                        p.utility_conjugate(tau, rbar),
                        rbar * p.survivor(tau),
                        rbar * p.survivor_slope(tau),
                    )
                }
            };
            s.agg.value += value;
            for (f, d) in s.agg.inflow.iter_mut().zip(&s.delta) {
                *f += rate * d;
            }
            // rate · ∇²φ = -(rate/ε)(diag δ - δδᵀ), plus outer·δδᵀ for elastic demand
            let scale = rate / eps;
            if want == Want::WithDiagonal {
                for (h, &d) in s.agg.hessian.iter_mut().zip(&s.delta) {
                    *h += (scale + outer) * d * d - scale * d;
                }
            }
            if want == Want::WithHessian {
                let h = &mut s.agg.hessian;
                for a in 0..n {
                    let da = s.delta[a];
                    if da == 0.0 {
                        continue;
                    }
                    h[a * n + a] -= scale * da;
                    for b in 0..n {
                        h[a * n + b] += (scale + outer) * da * s.delta[b];
                    }
                }
            }
        },
    );

    let mut total = SiteAggregate::zeros(n, want);
    for b in &blocks {
        total.absorb(&b.agg);
    }
    total
}

fn check_domain(mu: &Multipliers, inst: &ProblemInstance) -> Result<()> {
    inst.check_stations("multipliers", mu.len())?;
    mu.check_domain(inst.sojourn())
}

pub(crate) fn capacity_term(mu: &[f64], inst: &ProblemInstance) -> f64 {
    let t = inst.sojourn();
    mu.iter()
        .zip(inst.capacities())
        .map(|(&m, &c)| c * (-m / t).ln_1p())
        .sum()
}

fn capacity_gradient<'a>(mu: &'a [f64], inst: &'a ProblemInstance) -> impl Iterator<Item = f64> + 'a {
    let t = inst.sojourn();
    mu.iter()
        .zip(inst.capacities())
        .map(move |(&m, &c)| c / (t - m))
}

fn require_inelastic(inst: &ProblemInstance) -> Result<()> {
    if inst.demand().is_elastic() {
        return Err(Error::WrongDemandVariant {
            expected: "inelastic",
        });
    }
    Ok(())
}

fn require_elastic(inst: &ProblemInstance) -> Result<()> {
    if !inst.demand().is_elastic() {
        return Err(Error::WrongDemandVariant { expected: "elastic" });
    }
    Ok(())
}

/// Dual value `D(μ)` for fixed demand.
pub fn dual_value(mu: &Multipliers, inst: &ProblemInstance) -> Result<f64> {
    require_inelastic(inst)?;
    objective_value(mu, inst, Exec::default())
}

/// Gradient of [`dual_value`]: `Σ_i r_i δ_ij(μ) - c_j / (T - μ_j)`.
pub fn dual_gradient(mu: &Multipliers, inst: &ProblemInstance) -> Result<Vec<f64>> {
    require_inelastic(inst)?;
    objective_gradient(mu, inst, Exec::default())
}

/// Elastic dual `𝒟(μ) = Σ_i U*_i(τ_i(μ)) + Σ_j c_j log(1 - μ_j/T)`.
pub fn elastic_dual_value(mu: &Multipliers, inst: &ProblemInstance) -> Result<f64> {
    require_elastic(inst)?;
    objective_value(mu, inst, Exec::default())
}

/// Gradient of [`elastic_dual_value`]:
/// `Σ_i r̄_i p_i(τ_i) δ_ij(μ) - c_j / (T - μ_j)`.
pub fn elastic_dual_gradient(mu: &Multipliers, inst: &ProblemInstance) -> Result<Vec<f64>> {
    require_elastic(inst)?;
    objective_gradient(mu, inst, Exec::default())
}

/// The dual that applies to the instance's demand model.
pub fn objective_value(mu: &Multipliers, inst: &ProblemInstance, exec: Exec) -> Result<f64> {
    check_domain(mu, inst)?;
    Ok(aggregate(inst, mu, Want::ValueAndFlow, exec).value + capacity_term(mu, inst))
}

/// Gradient of [`objective_value`].
pub fn objective_gradient(mu: &Multipliers, inst: &ProblemInstance, exec: Exec) -> Result<Vec<f64>> {
    check_domain(mu, inst)?;
    let agg = aggregate(inst, mu, Want::ValueAndFlow, exec);
    Ok(agg
        .inflow
        .iter()
        .zip(capacity_gradient(mu, inst))
        .map(|(f, c)| f - c)
        .collect())
}

/// Value, gradient and (optionally) Hessian in one pass over the sites.
#[derive(Debug, Clone)]
pub(crate) struct DualEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

pub(crate) fn evaluate(inst: &ProblemInstance, mu: &[f64], want: Want, exec: Exec) -> DualEval {
    let n = inst.n_stations();
    let t = inst.sojourn();
    let mut agg = aggregate(inst, mu, want, exec);
    let gradient = agg
        .inflow
        .iter()
        .zip(capacity_gradient(mu, inst))
        .map(|(f, c)| f - c)
        .collect();
    let diag_stride = match want {
        Want::WithHessian => n + 1,
        Want::WithDiagonal => 1,
        _ => 0,
    };
    if diag_stride > 0 {
        for (j, (&m, &c)) in mu.iter().zip(inst.capacities()).enumerate() {
            agg.hessian[j * diag_stride] -= c / ((t - m) * (t - m));
        }
    }
    DualEval {
        value: agg.value + capacity_term(mu, inst),
        gradient,
        hessian: agg.hessian,
    }
}
