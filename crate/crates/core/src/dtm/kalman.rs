//! Gaussian random-walk chain over slices: prior precision, Kalman
//! filter/smoother for the variational posterior, tridiagonal solves.

use std::f64::consts::PI;

/// Symmetric tridiagonal matrix with a constant off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: f64,
}

impl Tridiagonal {
    /// Precision of β_1 ~ N(0, init_variance), β_t - β_{t-1} ~ N(0, chain_variance).
    pub fn chain_precision(n_slices: usize, init_variance: f64, chain_variance: f64) -> Self {
        let step = 1.0 / chain_variance;
        let mut diag = vec![2.0 * step; n_slices];
        if n_slices == 1 {
            diag[0] = 1.0 / init_variance;
        } else {
            diag[0] = 1.0 / init_variance + step;
            diag[n_slices - 1] = step;
        }
        Self { diag, off: -step }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// (self) x
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|t| {
                let mut v = self.diag[t] * x[t];
                if t > 0 {
                    v += self.off * x[t - 1];
                }
                if t + 1 < n {
                    v += self.off * x[t + 1];
                }
                v
            })
            .collect()
    }

    /// Solves (self + diag(extra)) x = rhs by forward elimination and back
    /// substitution. The system must be diagonally dominant.
    pub fn solve_shifted(
        &self,
        extra: &[f64],
        rhs: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) {
        let n = self.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut denom = self.diag[0] + extra[0];
        scratch[0] = self.off / denom;
        out[0] = rhs[0] / denom;
        for t in 1..n {
            denom = self.diag[t] + extra[t] - self.off * scratch[t - 1];
            scratch[t] = self.off / denom;
            out[t] = (rhs[t] - self.off * out[t - 1]) / denom;
        }
        for t in (0..n.saturating_sub(1)).rev() {
            out[t] -= scratch[t] * out[t + 1];
        }
    }
}

/// Variational posterior shape of one chain: the state-space posterior given
/// pseudo-observations with variance `obs_variance`. Its covariance does not
/// depend on the observations, so it is shared by every (topic, word).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPosterior {
    /// Smoothed marginal variances.
    pub variance: Vec<f64>,
    /// Cov(β_{t-1}, β_t) for t >= 1; entry 0 unused.
    pub cross_cov: Vec<f64>,
    /// Filtered variances.
    pub filtered: Vec<f64>,
    pub init_variance: f64,
    pub chain_variance: f64,
    pub obs_variance: f64,
}

impl ChainPosterior {
    pub fn new(
        n_slices: usize,
        init_variance: f64,
        chain_variance: f64,
        obs_variance: f64,
    ) -> Self {
        let mut filtered = Vec::with_capacity(n_slices);
        let mut predicted = init_variance;
        for _ in 0..n_slices {
            let p = 1.0 / (1.0 / predicted + 1.0 / obs_variance);
            filtered.push(p);
            predicted = p + chain_variance;
        }
        let mut variance = filtered.clone();
        let mut cross_cov = vec![0.0; n_slices];
        for t in (0..n_slices.saturating_sub(1)).rev() {
            let pred = filtered[t] + chain_variance;
            let gain = filtered[t] / pred;
            variance[t] = filtered[t] + gain * gain * (variance[t + 1] - pred);
            cross_cov[t + 1] = gain * variance[t + 1];
        }
        Self {
            variance,
            cross_cov,
            filtered,
            init_variance,
            chain_variance,
            obs_variance,
        }
    }

    pub fn len(&self) -> usize {
        self.variance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variance.is_empty()
    }

    /// Smoothed means for a chain of pseudo-observations.
    pub fn smooth(&self, obs: &[f64]) -> Vec<f64> {
        let n = obs.len();
        let mut filt_mean = Vec::with_capacity(n);
        let mut pred_mean = 0.0;
        let mut pred_var = self.init_variance;
        for (t, &y) in obs.iter().enumerate() {
            let gain = pred_var / (pred_var + self.obs_variance);
            let m = pred_mean + gain * (y - pred_mean);
            filt_mean.push(m);
            pred_mean = m;
            pred_var = self.filtered[t] + self.chain_variance;
        }
        let mut mean = filt_mean.clone();
        for t in (0..n.saturating_sub(1)).rev() {
            let gain = self.filtered[t] / (self.filtered[t] + self.chain_variance);
            mean[t] = filt_mean[t] + gain * (mean[t + 1] - filt_mean[t]);
        }
        mean
    }

    /// Entropy of the chain posterior, from the last marginal and the
    /// backward conditionals q(β_t | β_{t+1}).
    pub fn entropy(&self) -> f64 {
        let n = self.len();
        let mut log_det = self.variance[n - 1].ln();
        for t in 0..n - 1 {
            let cond =
                self.filtered[t] * self.chain_variance / (self.filtered[t] + self.chain_variance);
            log_det += cond.ln();
        }
        0.5 * (n as f64 * (1.0 + (2.0 * PI).ln()) + log_det)
    }

    /// E_q[log p(β)] minus the mean-dependent quadratic -mᵀPm/2, i.e. the
    /// part that depends only on the covariance.
    pub fn expected_log_prior_const(&self) -> f64 {
        let n = self.len();
        let mut v = -0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * self.init_variance.ln();
        v -= 0.5 * self.variance[0] / self.init_variance;
        for t in 1..n {
            v -= 0.5 * self.chain_variance.ln();
            let spread = self.variance[t] + self.variance[t - 1] - 2.0 * self.cross_cov[t];
            v -= 0.5 * spread / self.chain_variance;
        }
        v
    }
}
