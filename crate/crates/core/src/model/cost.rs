//! Primal objectives: the regularized equilibrium cost, its unregularized
//! counterpart `C0`, and the social-welfare cost `Cs`.
//!
//! All three are in EV-count units (rate × minutes).

use super::queue::barrier;
use super::{ProblemInstance, QueueState, RoutingMatrix};

/// `Σ κ_ij x_ij`: the number of EVs travelling towards a station.
pub fn transport_cost(x: &RoutingMatrix, inst: &ProblemInstance) -> f64 {
    x.0.as_slice()
        .iter()
        .zip(inst.travel_times().as_slice())
        .map(|(x, k)| x * k)
        .sum()
}

/// Regularized cost `Σ κx + Σ β(q) + ε Σ x log(x / r_i)`.
///
/// `r_i` is taken as the row sum of `x`, which equals the site rate for a
/// feasible routing; zero entries contribute nothing to the entropy term.
pub fn primal_cost(x: &RoutingMatrix, q: &QueueState, inst: &ProblemInstance) -> f64 {
    let m = &x.0;
    let mut entropy = 0.0;
    for i in 0..m.rows() {
        let row = m.row(i);
        let r: f64 = row.iter().sum();
        if r <= 0.0 {
            continue;
        }
        entropy += row
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * (v / r).ln())
            .sum::<f64>();
    }
    cost_c0(x, q, inst) + inst.epsilon() * entropy
}

/// `C0 = Σ κx + Σ β(q)`.
pub fn cost_c0(x: &RoutingMatrix, q: &QueueState, inst: &ProblemInstance) -> f64 {
    let barriers: f64 = q
        .iter()
        .zip(inst.capacities())
        .map(|(&q, &c)| barrier(q, c))
        .sum();
    transport_cost(x, inst) + barriers
}

/// `Cs = Σ κx + Σ [q - c]^+`, the transport plus the number of waiting EVs.
pub fn cost_cs(x: &RoutingMatrix, q: &QueueState, inst: &ProblemInstance) -> f64 {
    let waiting: f64 = q
        .iter()
        .zip(inst.capacities())
        .map(|(&q, &c)| (q - c).max(0.0))
        .sum();
    transport_cost(x, inst) + waiting
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DemandModel, Matrix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn instance(k: Vec<Vec<f64>>, c: Vec<f64>, rates: Vec<f64>, eps: f64) -> ProblemInstance {
        ProblemInstance::new(
            c,
            Matrix::from_rows(&k).unwrap(),
            60.0,
            eps,
            DemandModel::Inelastic { rates },
        )
        .unwrap()
    }

    fn routing(rows: &[Vec<f64>]) -> RoutingMatrix {
        RoutingMatrix(Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn point_mass_cost() {
        let inst = instance(vec![vec![1.0]], vec![60.0], vec![1.0], 0.7);
        let c = primal_cost(&routing(&[vec![1.0]]), &QueueState(vec![60.0]), &inst);
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pure_entropy_cost() {
        let eps = 0.3;
        let inst = instance(vec![vec![0.0, 0.0]], vec![1.0, 1.0], vec![1.0], eps);
        let c = primal_cost(&routing(&[vec![0.5, 0.5]]), &QueueState(vec![0.0, 0.0]), &inst);
        assert_abs_diff_eq!(c, -eps * 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn uncongested_costs_coincide() {
        let inst = instance(vec![vec![2.0, 5.0]], vec![50.0, 50.0], vec![1.0], 1.0);
        let x = routing(&[vec![0.25, 0.75]]);
        let q = QueueState(vec![15.0, 45.0]);
        assert_abs_diff_eq!(cost_c0(&x, &q, &inst), 0.5 + 3.75, epsilon = 1e-14);
        assert_abs_diff_eq!(cost_cs(&x, &q, &inst), 0.5 + 3.75, epsilon = 1e-14);
    }

    #[test]
    fn selfish_example_social_cost() {
        // hard-min selfish split at r = 0.5: station 1 holds 20/51 EV/min
        let inst = instance(vec![vec![1.0, 10.0]], vec![20.0, 40.0], vec![0.5], 1e-3);
        let x1 = 20.0 / 51.0;
        let x = routing(&[vec![x1, 0.5 - x1]]);
        let q = QueueState(vec![60.0 * x1, 60.0 * (0.5 - x1)]);
        assert_abs_diff_eq!(cost_cs(&x, &q, &inst), 5.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn social_cost_dominates_c0(
            split in 0.0f64..1.0,
            r in 0.01f64..3.0,
            q1 in 0.0f64..200.0,
            q2 in 0.0f64..200.0,
            c1 in 1.0f64..80.0,
            c2 in 1.0f64..80.0,
        ) {
            let inst = instance(vec![vec![1.0, 10.0]], vec![c1, c2], vec![r], 1e-3);
            let x = routing(&[vec![split * r, (1.0 - split) * r]]);
            let q = QueueState(vec![q1, q2]);
            let c0 = cost_c0(&x, &q, &inst);
            let cs = cost_cs(&x, &q, &inst);
            prop_assert!(c0 >= 0.0);
            prop_assert!(cs >= c0 - 1e-12);
            // Cs - C0 = Σ_{q_j > c_j} c_j log(q_j / c_j)
            let expected: f64 = [(q1, c1), (q2, c2)]
                .iter()
                .filter(|(q, c)| q > c)
                .map(|(q, c)| c * (q / c).ln())
                .sum();
            prop_assert!((cs - c0 - expected).abs() <= 1e-9 * (1.0 + expected));
        }
    }
}
