//! Demand models: fixed rates, or maximal rates thinned by a willingness-to-wait
//! survivor function.

/// Distribution of how long an arriving driver is willing to wait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatienceDistribution {
    /// Patience uniform on `[0, max_wait]` minutes.
    Uniform { max_wait: f64 },
}

impl PatienceDistribution {
    pub fn uniform(max_wait: f64) -> Self {
        PatienceDistribution::Uniform { max_wait }
    }

    /// Survivor function `p(τ) = P(patience > τ)`.
    pub fn survivor(&self, tau: f64) -> f64 {
        match *self {
            PatienceDistribution::Uniform { max_wait } => (1.0 - tau / max_wait).clamp(0.0, 1.0),
        }
    }

    /// Right derivative of the survivor function.
    pub fn survivor_slope(&self, tau: f64) -> f64 {
        match *self {
            PatienceDistribution::Uniform { max_wait } => {
                if (0.0..max_wait).contains(&tau) {
                    -1.0 / max_wait
                } else {
                    0.0
                }
            }
        }
    }

    /// Utility of consuming rate `r` when the maximal rate is `max_rate`.
    ///
    /// Its marginal utility inverts the thinned demand curve.
    pub fn utility(&self, r: f64, max_rate: f64) -> f64 {
        match *self {
            PatienceDistribution::Uniform { max_wait } => {
                let r = r.min(max_rate);
                max_wait * r * (1.0 - r / (2.0 * max_rate))
            }
        }
    }

    /// Concave conjugate `U*(τ) = min_r [τ r - U(r)]`.
    ///
    /// Its derivative is the thinned rate `max_rate · p(τ)`.
    pub fn utility_conjugate(&self, tau: f64, max_rate: f64) -> f64 {
        match *self {
            PatienceDistribution::Uniform { max_wait } => {
                let slack = (max_wait - tau).max(0.0);
                -max_rate * slack * slack / (2.0 * max_wait)
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            PatienceDistribution::Uniform { max_wait } => max_wait > 0.0 && max_wait.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel {
    /// Constant arrival rates per site, EV/min.
    Inelastic { rates: Vec<f64> },
    /// Maximal rates per site thinned by each site's patience distribution.
    Elastic {
        max_rates: Vec<f64>,
        patience: Vec<PatienceDistribution>,
    },
}

impl DemandModel {
    /// Elastic demand with the same patience distribution at every site.
    pub fn elastic_uniform(max_rates: Vec<f64>, max_wait: f64) -> Self {
        let patience = vec![PatienceDistribution::uniform(max_wait); max_rates.len()];
        DemandModel::Elastic {
            max_rates,
            patience,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.nominal_rates().len()
    }

    /// Fixed rates, or maximal rates for elastic demand.
    pub fn nominal_rates(&self) -> &[f64] {
        match self {
            DemandModel::Inelastic { rates } => rates,
            DemandModel::Elastic { max_rates, .. } => max_rates,
        }
    }

    pub fn is_elastic(&self) -> bool {
        matches!(self, DemandModel::Elastic { .. })
    }

    /// Arrival rate of site `i` when the delay to service is `tau`.
    pub fn rate_at(&self, i: usize, tau: f64) -> f64 {
        match self {
            DemandModel::Inelastic { rates } => rates[i],
            DemandModel::Elastic {
                max_rates,
                patience,
            } => max_rates[i] * patience[i].survivor(tau.max(0.0)),
        }
    }

    pub(crate) fn retain_sites(&mut self, keep: &[bool]) {
        fn retain<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        }
        match self {
            DemandModel::Inelastic { rates } => retain(rates, keep),
            DemandModel::Elastic {
                max_rates,
                patience,
            } => {
                retain(max_rates, keep);
                retain(patience, keep);
            }
        }
    }

    /// Multiplies every (maximal) rate by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            DemandModel::Inelastic { rates } => rates.iter_mut().for_each(|r| *r *= factor),
            DemandModel::Elastic { max_rates, .. } => {
                max_rates.iter_mut().for_each(|r| *r *= factor)
            }
        }
        out
    }
}
