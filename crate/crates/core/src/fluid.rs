//! Closed-loop fluid dynamics `q̇_j = Σ_i x_ij(μ(q)) - q_j/T` and the dual
//! value as a Lyapunov function along its trajectories.

use crate::dual::{aggregate, capacity_term, Want};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{waiting_time, ProblemInstance, QueueState};

/// Largest negative roundoff that is silently clamped back to zero.
pub const CLAMP_BUDGET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sample times, minutes.
    pub times: Vec<f64>,
    pub states: Vec<QueueState>,
    /// Delays `μ(q(t))` at each sample.
    pub multipliers: Vec<Vec<f64>>,
    /// Dual (Lyapunov) value at each sample.
    pub dual_values: Vec<f64>,
    /// Aggregate arrival rate per station at each sample, EV/min.
    pub rates: Vec<Vec<f64>>,
    /// Integration step, minutes.
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &QueueState {
        self.states.last().expect("trajectory has at least one sample")
    }
}

/// Options for [`integrate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    /// Record one sample every `stride` steps (the final state is always kept).
    pub stride: usize,
    pub exec: Exec,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            stride: 1,
            exec: Exec::default(),
        }
    }
}

/// Default RK4 step, `T/600`.
pub fn default_step(inst: &ProblemInstance) -> f64 {
    inst.sojourn() / 600.0
}

/// Vector field at `q`, with rates thinned by the smoothed delay under
/// elastic demand.
pub fn field(q: &QueueState, inst: &ProblemInstance) -> Result<Vec<f64>> {
    inst.check_stations("queue state", q.len())?;
    if let Some(j) = q.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "queue state must be nonnegative, q[{j}] = {}",
            q[j]
        )));
    }
    Ok(field_raw(q, inst, Exec::default()))
}

fn field_raw(q: &[f64], inst: &ProblemInstance, exec: Exec) -> Vec<f64> {
    let t = inst.sojourn();
    let mu = waiting_time(&QueueState(q.to_vec()), inst.capacities(), t);
    let agg = aggregate(inst, &mu, Want::Flow, exec);
    agg.inflow.iter().zip(q).map(|(f, q)| f - q / t).collect()
}

/// Fixed-step RK4 from `q0` over `[0, horizon]`, sampling every step.
pub fn integrate(q0: &QueueState, horizon: f64, step: f64, inst: &ProblemInstance) -> Result<Trajectory> {
    integrate_with(q0, horizon, step, inst, IntegrationOptions::default())
}

pub fn integrate_with(
    q0: &QueueState,
    horizon: f64,
    step: f64,
    inst: &ProblemInstance,
    opts: IntegrationOptions,
) -> Result<Trajectory> {
    inst.check_stations("initial state", q0.len())?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    if !(horizon >= step && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must be at least one step ({step})"
        )));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    if q0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("initial state must be finite and nonnegative".into()));
    }

    let n = inst.n_stations();
    let exec = opts.exec;
    let full_steps = (horizon / step * (1.0 + 1e-12)).floor() as usize;
    let remainder = horizon - full_steps as f64 * step;
    let total_steps = full_steps + usize::from(remainder > 1e-9 * step);

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        multipliers: Vec::new(),
        dual_values: Vec::new(),
        rates: Vec::new(),
        step,
    };
    let record = |traj: &mut Trajectory, t: f64, q: &[f64]| {
        let mu = waiting_time(&QueueState(q.to_vec()), inst.capacities(), inst.sojourn());
        let agg = aggregate(inst, &mu, Want::ValueAndFlow, exec);
        traj.times.push(t);
        traj.states.push(QueueState(q.to_vec()));
        traj.dual_values.push(agg.value + capacity_term(&mu, inst));
        traj.rates.push(agg.inflow);
        traj.multipliers.push(mu.0);
    };

    let mut q = q0.0.clone();
    record(&mut traj, 0.0, &q);
    let mut tmp = vec![0.0; n];
    for k in 0..total_steps {
        let h = if k < full_steps { step } else { remainder };
        let t = if k < full_steps {
            (k + 1) as f64 * step
        } else {
            horizon
        };

        let k1 = field_raw(&q, inst, exec);
        for j in 0..n {
            tmp[j] = q[j] + 0.5 * h * k1[j];
        }
        let k2 = field_raw(&tmp, inst, exec);
        for j in 0..n {
            tmp[j] = q[j] + 0.5 * h * k2[j];
        }
        let k3 = field_raw(&tmp, inst, exec);
        for j in 0..n {
            tmp[j] = q[j] + h * k3[j];
        }
        let k4 = field_raw(&tmp, inst, exec);
        for j in 0..n {
            q[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            if !q[j].is_finite() {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("non-finite occupancy at station {j}: {}", q[j]),
                });
            }
            if q[j] < 0.0 {
                if q[j] < -CLAMP_BUDGET {
                    return Err(Error::Integration {
                        time: t,
                        reason: format!(
                            "occupancy at station {j} went negative ({:e}) beyond the clamp budget",
                            q[j]
                        ),
                    });
                }
                q[j] = 0.0;
            }
        }
        if (k + 1) % opts.stride == 0 || k + 1 == total_steps {
            record(&mut traj, t, &q);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub values: Vec<f64>,
    /// Most negative increment between consecutive samples (0 if none).
    pub largest_decrease: f64,
    /// Index `k` of the sample ending the largest decrease.
    pub worst_index: Option<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks that the dual value is nondecreasing along the trajectory, up to
/// `1e-7 (1 + |D|) step / T`.
pub fn lyapunov_series(traj: &Trajectory, inst: &ProblemInstance) -> MonotonicityReport {
    let values = traj.dual_values.clone();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tolerance = 1e-7 * (1.0 + scale) * (traj.step / inst.sojourn());
    let mut largest_decrease = 0.0f64;
    let mut worst_index = None;
    for (k, w) in values.windows(2).enumerate() {
        let inc = w[1] - w[0];
        if inc < largest_decrease {
            largest_decrease = inc;
            worst_index = Some(k + 1);
        }
    }
    MonotonicityReport {
        pass: largest_decrease >= -tolerance,
        values,
        largest_decrease,
        worst_index,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DemandModel, Matrix};
    use crate::solver::{solve_equilibrium, SolverConfig};
    use approx::assert_abs_diff_eq;

    fn single(rate: f64) -> ProblemInstance {
        ProblemInstance::new(
            vec![100.0],
            Matrix::from_rows(&[vec![2.0]]).unwrap(),
            60.0,
            1.0,
            DemandModel::Inelastic { rates: vec![rate] },
        )
        .unwrap()
    }

    #[test]
    fn single_station_field_is_linear() {
        let inst = single(1.0);
        for q in [0.0, 30.0, 150.0] {
            let f = field(&QueueState(vec![q]), &inst).unwrap();
            assert_abs_diff_eq!(f[0], 1.0 - q / 60.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn empty_system_has_pure_inflow() {
        let inst = ProblemInstance::new(
            vec![10.0, 10.0],
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap(),
            60.0,
            1.0,
            DemandModel::Inelastic { rates: vec![0.4, 0.6] },
        )
        .unwrap();
        let f = field(&QueueState(vec![0.0, 0.0]), &inst).unwrap();
        assert!(f.iter().all(|&v| v > 0.0));
        assert_abs_diff_eq!(f.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert!(field(&QueueState(vec![-1.0, 0.0]), &inst).is_err());
    }

    #[test]
    fn linear_relaxation_matches_exact_solution() {
        let inst = single(1.0);
        let traj = integrate(&QueueState(vec![0.0]), 120.0, 0.1, &inst).unwrap();
        for &t in &[30.0, 60.0, 120.0] {
            let k = traj.times.iter().position(|&s| (s - t).abs() < 1e-9).unwrap();
            let exact = 60.0 * (1.0 - (-t / 60.0f64).exp());
            assert_abs_diff_eq!(traj.states[k][0], exact, epsilon = 1e-6);
        }
    }

    #[test]
    fn equilibrium_is_invariant() {
        let inst = ProblemInstance::new(
            vec![20.0, 40.0],
            Matrix::from_rows(&[vec![1.0, 10.0]]).unwrap(),
            60.0,
            0.5,
            DemandModel::Inelastic { rates: vec![0.9] },
        )
        .unwrap();
        let sol = solve_equilibrium(&inst, &SolverConfig::default()).unwrap();
        let f = field(&sol.queues, &inst).unwrap();
        assert!(f.iter().all(|v| v.abs() <= 1e-6));
        let traj = integrate(&sol.queues, 600.0, 0.1, &inst).unwrap();
        for s in &traj.states {
            for j in 0..2 {
                assert_abs_diff_eq!(s[j], sol.queues[j], epsilon = 1e-8);
            }
        }
        let rep = lyapunov_series(&traj, &inst);
        assert!(rep.largest_decrease.abs() <= 1e-10);
    }

    #[test]
    fn partial_final_step_lands_on_horizon() {
        let inst = single(1.0);
        let traj = integrate(&QueueState(vec![0.0]), 1.05, 0.1, &inst).unwrap();
        assert_abs_diff_eq!(*traj.times.last().unwrap(), 1.05, epsilon = 1e-12);
        assert_eq!(traj.len(), 12);
        let exact = 60.0 * (1.0 - (-1.05 / 60.0f64).exp());
        assert_abs_diff_eq!(traj.final_state()[0], exact, epsilon = 1e-10);
    }

    #[test]
    fn stride_thins_samples() {
        let inst = single(1.0);
        let opts = IntegrationOptions {
            stride: 10,
            ..IntegrationOptions::default()
        };
        let traj = integrate_with(&QueueState(vec![0.0]), 10.0, 0.1, &inst, opts).unwrap();
        assert_eq!(traj.len(), 11);
    }

    #[test]
    fn bad_arguments() {
        let inst = single(1.0);
        let q = QueueState(vec![0.0]);
        assert!(integrate(&q, 1.0, 0.0, &inst).is_err());
        assert!(integrate(&q, 0.05, 0.1, &inst).is_err());
        assert!(integrate(&QueueState(vec![f64::NAN]), 1.0, 0.1, &inst).is_err());
        assert!(integrate(&QueueState(vec![0.0, 1.0]), 1.0, 0.1, &inst).is_err());
    }
}
