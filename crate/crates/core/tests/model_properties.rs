use evcharge::model::{
    barrier, cost_c0, cost_cs, negative_entropy, occupancy_for_delay, softmin, softmin_fractions,
    waiting_delay, DemandModel, Matrix, PatienceDistribution, ProblemInstance, QueueState,
    RoutingMatrix,
};
use proptest::prelude::*;

fn vector(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, n)
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        if s == 0.0 {
            let mut d = vec![0.0; w.len()];
            d[0] = 1.0;
            d
        } else {
            w.iter().map(|x| x / s).collect()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmin_bounds(y in vector(1..10), eps in 1e-3..10.0f64) {
        let s = softmin(&y, eps).unwrap();
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let n = y.len() as f64;
        prop_assert!(s <= lo + 1e-10);
        prop_assert!(s >= lo - eps * n.ln() - 1e-10);
    }
}

proptest! {
    #[test]
    fn fenchel_inequality_and_equality(
        (y, delta) in (1usize..8).prop_flat_map(|n| (prop::collection::vec(-30.0..30.0f64, n), simplex(n))),
        eps in 0.01..5.0f64,
    ) {
        let s = softmin(&y, eps).unwrap();
        let dot: f64 = y.iter().zip(&delta).map(|(a, b)| a * b).sum();
        prop_assert!(dot + eps * negative_entropy(&delta).unwrap() >= s - 1e-10);

        let opt = softmin_fractions(&y, eps).unwrap();
        let at_opt: f64 = y.iter().zip(&opt).map(|(a, b)| a * b).sum::<f64>()
            + eps * negative_entropy(&opt).unwrap();
        prop_assert!((at_opt - s).abs() <= 1e-9 * (1.0 + s.abs()));
    }

    #[test]
    fn fractions_are_the_gradient(y in prop::collection::vec(-10.0..10.0f64, 1..6), eps in 0.2..5.0f64) {
        let g = softmin_fractions(&y, eps).unwrap();
        let h = 1e-5;
        for j in 0..y.len() {
            let mut up = y.clone();
            let mut dn = y.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (softmin(&up, eps).unwrap() - softmin(&dn, eps).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * g[j].max(1e-3), "j={} fd={} g={}", j, fd, g[j]);
        }
    }

    #[test]
    fn occupancy_delay_round_trip(c in 1.0..100.0f64, t in 10.0..120.0f64, frac in 1e-6..0.999f64) {
        let mu = frac * t;
        let q = occupancy_for_delay(mu, c, t);
        prop_assert!(q > c);
        prop_assert!((waiting_delay(q, c, t) - mu).abs() <= 1e-9 * mu.max(1.0));
        let back = occupancy_for_delay(waiting_delay(q, c, t), c, t);
        prop_assert!((back - q).abs() <= 1e-9 * q);
    }

    #[test]
    fn barrier_convex_with_delay_slope(c in 1.0..80.0f64, a in 0.0..300.0f64, b in 0.0..300.0f64, t in 10.0..120.0f64) {
        let mid = barrier(0.5 * (a + b), c);
        prop_assert!(mid <= 0.5 * (barrier(a, c) + barrier(b, c)) + 1e-9 * (1.0 + mid.abs()));
        // β is C¹ everywhere, including at q = c
        let h = 1e-6 * (1.0 + a);
        if a > h {
            let fd = (barrier(a + h, c) - barrier(a - h, c)) / (2.0 * h);
            prop_assert!((fd - waiting_delay(a, c, t) / t).abs() <= 1e-6);
        }
    }

    #[test]
    fn social_cost_dominates_c0(
        caps in prop::collection::vec(1.0..30.0f64, 2),
        kappa in prop::collection::vec(0.0..20.0f64, 4),
        x in prop::collection::vec(0.0..1.0f64, 4),
    ) {
        let inst = ProblemInstance::new(
            caps,
            Matrix::from_vec(2, 2, kappa).unwrap(),
            60.0,
            1.0,
            DemandModel::Inelastic { rates: vec![1.0, 1.0] },
        ).unwrap();
        let routing = RoutingMatrix(Matrix::from_vec(2, 2, x).unwrap());
        let q = QueueState(routing.station_inflow().iter().map(|f| 60.0 * f).collect());
        let c0 = cost_c0(&routing, &q, &inst);
        let cs = cost_cs(&routing, &q, &inst);
        prop_assert!(c0 >= -1e-12);
        prop_assert!(cs >= c0 - 1e-12);
    }

    #[test]
    fn conjugate_slope_is_the_elastic_rate(tmax in 5.0..120.0f64, rbar in 0.1..5.0f64, frac in 0.01..0.99f64) {
        let p = PatienceDistribution::uniform(tmax);
        let tau = frac * tmax;
        let h = 1e-6 * tmax;
        let fd = (p.utility_conjugate(tau + h, rbar) - p.utility_conjugate(tau - h, rbar)) / (2.0 * h);
        let rate = rbar * p.survivor(tau);
        prop_assert!((fd - rate).abs() <= 1e-5 * rate);
    }
}
