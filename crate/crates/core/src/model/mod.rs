//! Domain types and closed-form building blocks.

mod cost;
mod demand;
mod queue;
mod softmin;

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

pub use cost::{cost_c0, cost_cs, primal_cost, transport_cost};
pub use demand::{DemandModel, PatienceDistribution};
pub use queue::{
    barrier, barrier_slope, departure_rate, occupancy_for_delay, waiting_delay, waiting_time,
};
pub(crate) use softmin::softmin_into;
pub use softmin::{negative_entropy, softmin, softmin_fractions, xlogx, SIMPLEX_TOL};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column sums.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    fn retain_rows(&mut self, keep: &[bool]) {
        let cols = self.cols;
        let mut data = Vec::with_capacity(self.data.len());
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            data.extend_from_slice(&self.data[i * cols..(i + 1) * cols]);
        }
        self.rows = data.len() / cols.max(1);
        self.data = data;
    }
}

macro_rules! vector_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $name(pub Vec<f64>);

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                $name(v)
            }
        }
    };
}

vector_newtype!(
    /// Station occupancies (EV count, continuous in the fluid model).
    QueueState
);
vector_newtype!(
    /// Per-station queueing delays in minutes, each in `[0, T)`.
    Multipliers
);

impl Multipliers {
    pub fn zeros(n: usize) -> Self {
        Multipliers(vec![0.0; n])
    }

    /// Checks `0 <= mu_j < sojourn` for every station.
    pub fn check_domain(&self, sojourn: f64) -> Result<()> {
        for (index, &value) in self.iter().enumerate() {
            if !(value >= 0.0 && value < sojourn) {
                return Err(Error::Domain {
                    index,
                    value,
                    sojourn,
                });
            }
        }
        Ok(())
    }
}

/// Site-by-station rates `x_ij` (EV/min).
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix(pub Matrix);

impl RoutingMatrix {
    /// Per-station total inflow `Σ_i x_ij`.
    pub fn station_inflow(&self) -> Vec<f64> {
        self.0.col_sums()
    }

    /// Per-site total rate `Σ_j x_ij`.
    pub fn site_rates(&self) -> Vec<f64> {
        self.0.row_sums()
    }

    /// Row-normalized fractions `δ_ij = x_ij / r_i`; zero rows stay zero.
    pub fn fractions(&self) -> Matrix {
        let mut out = self.0.clone();
        for i in 0..out.rows() {
            let r: f64 = out.row(i).iter().sum();
            if r > 0.0 {
                out.row_mut(i).iter_mut().for_each(|x| *x /= r);
            }
        }
        out
    }

    /// Checks nonnegativity and that each row sums to `rates[i]` within `tol`.
    pub fn check_feasible(&self, rates: &[f64], tol: f64) -> Result<()> {
        if rates.len() != self.0.rows() {
            return Err(Error::DimensionMismatch {
                what: "routing rows",
                expected: rates.len(),
                got: self.0.rows(),
            });
        }
        for (i, &r) in rates.iter().enumerate() {
            let row = self.0.row(i);
            if row.iter().any(|&x| x < -tol) {
                return Err(Error::InvalidParameter(format!("negative rate in row {i}")));
            }
            let s: f64 = row.iter().sum();
            if (s - r).abs() > tol * (1.0 + r) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} carries {s}, expected {r}"
                )));
            }
        }
        Ok(())
    }
}

/// A station-choice problem: capacities, travel times, sojourn, smoothing and
/// demand.
///
/// Sites whose (maximal) rate is zero are dropped at construction;
/// [`ProblemInstance::site_ids`] maps the remaining rows back to the caller's
/// site indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    capacities: Vec<f64>,
    travel_times: Matrix,
    sojourn: f64,
    epsilon: f64,
    demand: DemandModel,
    site_ids: Vec<usize>,
    kernel: Kernel,
}

/// `w_ij = exp(-(κ_ij - min_j κ_ij)/ε)` and the row minima, cached so the
/// per-site loops multiply instead of exponentiating.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Kernel {
    pub weights: Vec<f64>,
    pub floor: Vec<f64>,
}

impl Kernel {
    fn build(travel_times: &Matrix, epsilon: f64) -> Self {
        let mut weights = Vec::with_capacity(travel_times.as_slice().len());
        let mut floor = Vec::with_capacity(travel_times.rows());
        for i in 0..travel_times.rows() {
            let row = travel_times.row(i);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            weights.extend(row.iter().map(|k| (-(k - lo) / epsilon).exp()));
            floor.push(lo);
        }
        Kernel { weights, floor }
    }
}

impl ProblemInstance {
    pub fn new(
        capacities: Vec<f64>,
        travel_times: Matrix,
        sojourn: f64,
        epsilon: f64,
        demand: DemandModel,
    ) -> Result<Self> {
        let n = capacities.len();
        let m = demand.n_sites();
        if n == 0 {
            return Err(Error::InvalidInstance("no stations".into()));
        }
        if travel_times.cols() != n {
            return Err(Error::DimensionMismatch {
                what: "travel-time columns",
                expected: n,
                got: travel_times.cols(),
            });
        }
        if travel_times.rows() != m {
            return Err(Error::DimensionMismatch {
                what: "travel-time rows",
                expected: m,
                got: travel_times.rows(),
            });
        }
        if let Some(c) = capacities.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidInstance(format!(
                "capacity must be positive, got {c}"
            )));
        }
        if travel_times.as_slice().iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::InvalidInstance(
                "travel times must be finite and nonnegative".into(),
            ));
        }
        if !(sojourn > 0.0 && sojourn.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "sojourn time must be positive, got {sojourn}"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "smoothing must be positive, got {epsilon}"
            )));
        }
        if let Some(r) = demand.nominal_rates().iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidInstance(format!(
                "rates must be nonnegative, got {r}"
            )));
        }
        if let DemandModel::Elastic { patience, .. } = &demand {
            if patience.iter().any(|p| !p.is_valid()) {
                return Err(Error::InvalidInstance("invalid patience distribution".into()));
            }
        }

        let keep: Vec<bool> = demand.nominal_rates().iter().map(|&r| r > 0.0).collect();
        let site_ids: Vec<usize> = (0..m).filter(|&i| keep[i]).collect();
        if site_ids.is_empty() {
            return Err(Error::InvalidInstance("no site with positive demand".into()));
        }
        let mut demand = demand;
        let mut travel_times = travel_times;
        if site_ids.len() != m {
            demand.retain_sites(&keep);
            travel_times.retain_rows(&keep);
        }
        let kernel = Kernel::build(&travel_times, epsilon);
        Ok(ProblemInstance {
            capacities,
            travel_times,
            sojourn,
            epsilon,
            demand,
            site_ids,
            kernel,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.capacities.len()
    }

    pub fn n_sites(&self) -> usize {
        self.travel_times.rows()
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn travel_times(&self) -> &Matrix {
        &self.travel_times
    }

    pub fn sojourn(&self) -> f64 {
        self.sojourn
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn demand(&self) -> &DemandModel {
        &self.demand
    }

    /// Original index of each retained site.
    pub fn site_ids(&self) -> &[usize] {
        &self.site_ids
    }

    /// Fixed rates, or maximal rates under elastic demand.
    pub fn nominal_rates(&self) -> &[f64] {
        self.demand.nominal_rates()
    }

    pub fn total_rate(&self) -> f64 {
        self.nominal_rates().iter().sum()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "smoothing must be positive, got {epsilon}"
            )));
        }
        let mut out = self.clone();
        out.epsilon = epsilon;
        out.kernel = Kernel::build(&out.travel_times, epsilon);
        Ok(out)
    }

    /// Same instance with every (maximal) rate multiplied by `factor > 0`.
    pub fn with_demand_scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "demand scale must be positive, got {factor}"
            )));
        }
        let mut out = self.clone();
        out.demand = self.demand.scaled(factor);
        Ok(out)
    }

    pub fn with_demand(&self, demand: DemandModel) -> Result<Self> {
        ProblemInstance::new(
            self.capacities.clone(),
            self.travel_times.clone(),
            self.sojourn,
            self.epsilon,
            demand,
        )
    }

    pub(crate) fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub(crate) fn check_stations(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.n_stations() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.n_stations(),
                got,
            });
        }
        Ok(())
    }
}

/// Softmin routing fractions for every site given station delays `mu`.
pub fn routing_fractions(travel_times: &Matrix, mu: &Multipliers, epsilon: f64) -> Result<Matrix> {
    if mu.len() != travel_times.cols() {
        return Err(Error::DimensionMismatch {
            what: "multipliers",
            expected: travel_times.cols(),
            got: mu.len(),
        });
    }
    if mu.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = Matrix::zeros(travel_times.rows(), travel_times.cols());
    let mut y = vec![0.0; mu.len()];
    for i in 0..travel_times.rows() {
        for ((y, k), m) in y.iter_mut().zip(travel_times.row(i)).zip(mu.iter()) {
            *y = k + m;
        }
        softmin_into(&y, epsilon, out.row_mut(i));
    }
    Ok(out)
}
