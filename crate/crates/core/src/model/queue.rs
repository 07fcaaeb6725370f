//! Station occupancy relations: waiting delay, departures and the capacity
//! barrier.

use super::{Multipliers, QueueState};

/// Queueing delay `T·[1 - c/q]^+` of a single station, in minutes.
///
/// An empty station (`q = 0`) has no delay.
#[inline]
pub fn waiting_delay(q: f64, capacity: f64, sojourn: f64) -> f64 {
    if q <= capacity {
        0.0
    } else {
        sojourn * (1.0 - capacity / q)
    }
}

/// Per-station delays for an occupancy vector.
pub fn waiting_time(q: &QueueState, capacities: &[f64], sojourn: f64) -> Multipliers {
    debug_assert_eq!(q.len(), capacities.len());
    Multipliers(
        q.iter()
            .zip(capacities)
            .map(|(&q, &c)| waiting_delay(q, c, sojourn))
            .collect(),
    )
}

/// Occupancy producing delay `mu`: `T c / (T - mu)`.
///
/// This inverts [`waiting_delay`] on `(0, T)`; at `mu = 0` it returns the
/// capacity, the largest uncongested occupancy.
#[inline]
pub fn occupancy_for_delay(mu: f64, capacity: f64, sojourn: f64) -> f64 {
    sojourn * capacity / (sojourn - mu)
}

/// Departure rates `q/T` (EV/min).
pub fn departure_rate(q: &QueueState, sojourn: f64) -> Vec<f64> {
    q.iter().map(|&q| q / sojourn).collect()
}

/// Soft capacity penalty `β(q) = [q - c - c log(q/c)]` for `q > c`, else 0.
#[inline]
pub fn barrier(q: f64, capacity: f64) -> f64 {
    if q <= capacity {
        0.0
    } else {
        q - capacity - capacity * (q / capacity).ln()
    }
}

/// Derivative of [`barrier`], equal to `waiting_delay / T`.
#[inline]
pub fn barrier_slope(q: f64, capacity: f64) -> f64 {
    if q <= capacity {
        0.0
    } else {
        1.0 - capacity / q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn delay_examples() {
        assert_eq!(waiting_delay(50.0, 50.0, 60.0), 0.0);
        assert_eq!(waiting_delay(0.0, 50.0, 60.0), 0.0);
        assert_abs_diff_eq!(waiting_delay(75.0, 50.0, 60.0), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(waiting_delay(1200.0 / 51.0, 20.0, 60.0), 9.0, epsilon = 1e-12);
        let mu = waiting_time(&QueueState(vec![0.0, 10.0, 75.0]), &[5.0, 10.0, 50.0], 60.0);
        assert_eq!(mu.0[..2], [0.0, 0.0]);
        assert_abs_diff_eq!(mu.0[2], 20.0, epsilon = 1e-12);
    }

    #[test]
    fn departure_examples() {
        assert_eq!(departure_rate(&QueueState(vec![0.0]), 60.0), vec![0.0]);
        assert_eq!(departure_rate(&QueueState(vec![270.0]), 90.0), vec![3.0]);
        assert_eq!(departure_rate(&QueueState(vec![60.0]), 60.0), vec![1.0]);
    }

    #[test]
    fn barrier_examples() {
        assert_eq!(barrier(3.0, 5.0), 0.0);
        assert_eq!(barrier(5.0, 5.0), 0.0);
        assert_abs_diff_eq!(barrier(std::f64::consts::E, 1.0), std::f64::consts::E - 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(barrier(75.0, 50.0), 25.0 - 50.0 * 1.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(barrier(75.0, 50.0), 4.726745, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn delay_inverse_round_trip(frac in 1e-6f64..0.999_999, c in 0.1f64..500.0, t in 1.0f64..200.0) {
            let mu = frac * t;
            let q = occupancy_for_delay(mu, c, t);
            let back = waiting_delay(q, c, t);
            prop_assert!((back - mu).abs() <= 1e-9 * mu.max(1e-300) + 1e-12);
            let q2 = occupancy_for_delay(back, c, t);
            prop_assert!(((q2 - q) / q).abs() <= 1e-9);
        }

        #[test]
        fn barrier_is_convex_and_nonneg(a in 0.0f64..300.0, b in 0.0f64..300.0, c in 0.5f64..100.0) {
            let mid = barrier(0.5 * (a + b), c);
            prop_assert!(barrier(a, c) >= 0.0);
            prop_assert!(mid <= 0.5 * (barrier(a, c) + barrier(b, c)) + 1e-9);
        }

        #[test]
        fn barrier_slope_is_delay_over_sojourn(q in 0.0f64..300.0, c in 0.5f64..100.0, t in 1.0f64..200.0) {
            prop_assume!((q - c).abs() > 1e-3);
            let h = 1e-6 * q.max(1.0);
            let fd = (barrier(q + h, c) - barrier(q - h, c)) / (2.0 * h);
            let exact = waiting_delay(q, c, t) / t;
            prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
            prop_assert!((barrier_slope(q, c) - exact).abs() <= 1e-14);
        }
    }
}
