//! Topic update: maximize the bound over the chain means of one topic.
//!
//! For topic k with expected counts s[t][w] and totals N[t], the part of the
//! bound that depends on the means m (T x V) is
//!   f(m) = Σ_t (s_t·m_t - N_t logΣ_w exp m_tw) - ½ Σ_w m_wᵀ P m_w
//! with P the chain prior precision. f is concave; Newton steps use the
//! exact Hessian through a Woodbury correction of its tridiagonal part.

use nalgebra::{DMatrix, DVector};

use super::kalman::Tridiagonal;
use super::log_sum_exp;

const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 40;
const ARMIJO: f64 = 1e-4;
const REL_TOL: f64 = 1e-12;

pub(crate) struct TopicStats<'a> {
    /// Row-major T x V expected counts.
    pub counts: &'a [f64],
    pub totals: &'a [f64],
    pub n_terms: usize,
}

pub(crate) fn objective(m: &[f64], stats: &TopicStats, prior: &Tridiagonal) -> f64 {
    let v = stats.n_terms;
    let t_len = prior.len();
    let mut f = 0.0;
    for t in 0..t_len {
        let row = &m[t * v..(t + 1) * v];
        let s = &stats.counts[t * v..(t + 1) * v];
        f += s.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        if stats.totals[t] > 0.0 {
            f -= stats.totals[t] * log_sum_exp(row);
        }
    }
    f - 0.5 * quad_prior(m, v, prior)
}

/// Σ_w m_wᵀ P m_w
pub(crate) fn quad_prior(m: &[f64], v: usize, prior: &Tridiagonal) -> f64 {
    let t_len = prior.len();
    let mut q = 0.0;
    for t in 0..t_len {
        let row = &m[t * v..(t + 1) * v];
        q += prior.diag[t] * row.iter().map(|x| x * x).sum::<f64>();
        if t + 1 < t_len {
            let next = &m[(t + 1) * v..(t + 2) * v];
            q += 2.0 * prior.off * row.iter().zip(next).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    q
}

fn softmax_rows(m: &[f64], v: usize, t_len: usize) -> Vec<f64> {
    let mut p = vec![0.0; m.len()];
    for t in 0..t_len {
        let row = &m[t * v..(t + 1) * v];
        let norm = log_sum_exp(row);
        for w in 0..v {
            p[t * v + w] = (row[w] - norm).exp();
        }
    }
    p
}

/// Newton direction solving (-H) d = g. Falls back to the tridiagonal part
/// alone when the Woodbury system is not positive definite.
fn newton_direction(p: &[f64], g: &[f64], stats: &TopicStats, prior: &Tridiagonal) -> Vec<f64> {
    let v = stats.n_terms;
    let t_len = prior.len();
    let sqrt_n: Vec<f64> = stats.totals.iter().map(|n| n.max(0.0).sqrt()).collect();
    let mut extra = vec![0.0; t_len];
    let mut rhs = vec![0.0; t_len];
    let mut col = vec![0.0; t_len];
    let mut scratch = Vec::new();
    let mut y = vec![0.0; t_len * v];
    let mut s_mat = DMatrix::<f64>::identity(t_len, t_len);
    let mut uty = DVector::<f64>::zeros(t_len);
    let mut unit = vec![0.0; t_len];

    for w in 0..v {
        for t in 0..t_len {
            extra[t] = stats.totals[t] * p[t * v + w];
            rhs[t] = g[t * v + w];
        }
        prior.solve_shifted(&extra, &rhs, &mut scratch, &mut col);
        for t in 0..t_len {
            y[t * v + w] = col[t];
            uty[t] += sqrt_n[t] * p[t * v + w] * col[t];
        }
        // G_w = (P + D_w)^{-1}; S -= diag(u_w) G_w diag(u_w)
        for j in 0..t_len {
            let uj = sqrt_n[j] * p[j * v + w];
            if uj == 0.0 {
                continue;
            }
            unit.iter_mut().for_each(|x| *x = 0.0);
            unit[j] = 1.0;
            prior.solve_shifted(&extra, &unit, &mut scratch, &mut col);
            for i in 0..t_len {
                s_mat[(i, j)] -= sqrt_n[i] * p[i * v + w] * col[i] * uj;
            }
        }
    }
    let Some(chol) = s_mat.cholesky() else {
        return y;
    };
    let z = chol.solve(&uty);
    let mut d = y;
    for w in 0..v {
        for t in 0..t_len {
            extra[t] = stats.totals[t] * p[t * v + w];
            rhs[t] = sqrt_n[t] * p[t * v + w] * z[t];
        }
        prior.solve_shifted(&extra, &rhs, &mut scratch, &mut col);
        for t in 0..t_len {
            d[t * v + w] += col[t];
        }
    }
    d
}

/// Improves `m` in place; never returns a point with a lower objective.
pub(crate) fn optimize_topic(m: &mut [f64], stats: &TopicStats, prior: &Tridiagonal) -> f64 {
    let v = stats.n_terms;
    let t_len = prior.len();
    let mut f = objective(m, stats, prior);
    let mut trial = vec![0.0; m.len()];
    for _ in 0..MAX_NEWTON {
        let p = softmax_rows(m, v, t_len);
        let mut g = vec![0.0; m.len()];
        for w in 0..v {
            for t in 0..t_len {
                let mut pm = prior.diag[t] * m[t * v + w];
                if t > 0 {
                    pm += prior.off * m[(t - 1) * v + w];
                }
                if t + 1 < t_len {
                    pm += prior.off * m[(t + 1) * v + w];
                }
                g[t * v + w] = stats.counts[t * v + w] - stats.totals[t] * p[t * v + w] - pm;
            }
        }
        let mut d = newton_direction(&p, &g, stats, prior);
        let mut slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope > 0.0 && slope.is_finite()) {
            d = g.clone();
            slope = g.iter().map(|x| x * x).sum();
        }
        if slope <= 0.0 {
            break;
        }
        let mut step = 1.0;
        let mut improved = None;
        for _ in 0..MAX_HALVINGS {
            for i in 0..m.len() {
                trial[i] = m[i] + step * d[i];
            }
            let ft = objective(&trial, stats, prior);
            if ft.is_finite() && ft >= f + ARMIJO * step * slope {
                improved = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(ft) = improved else { break };
        let gain = ft - f;
        m.copy_from_slice(&trial);
        f = ft;
        if gain <= REL_TOL * f.abs().max(1.0) {
            break;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_check(t_len: usize, v: usize, s0: f64, s: f64) {
        let prior = Tridiagonal::chain_precision(t_len, s0, s);
        let counts: Vec<f64> = (0..t_len * v)
            .map(|i| ((i * 7) % 5) as f64 + 0.5 * (i % 3) as f64)
            .collect();
        let totals: Vec<f64> = (0..t_len)
            .map(|t| counts[t * v..(t + 1) * v].iter().sum())
            .collect();
        let stats = TopicStats {
            counts: &counts,
            totals: &totals,
            n_terms: v,
        };
        let mut m = vec![0.0; t_len * v];
        let f0 = objective(&m, &stats, &prior);
        let f = optimize_topic(&mut m, &stats, &prior);
        assert!(f >= f0);
        // stationary: gradient vanishes
        let p = softmax_rows(&m, v, t_len);
        for w in 0..v {
            let mw: Vec<f64> = (0..t_len).map(|t| m[t * v + w]).collect();
            let pm = prior.mul(&mw);
            for t in 0..t_len {
                let g = counts[t * v + w] - totals[t] * p[t * v + w] - pm[t];
                assert!(g.abs() < 1e-6, "gradient {g} at t={t} w={w}");
            }
        }
    }

    #[test]
    fn converges_to_stationary_point() {
        numeric_check(1, 6, 10.0, 0.005);
        numeric_check(4, 7, 10.0, 0.005);
        numeric_check(3, 5, 10.0, 1e-8);
        numeric_check(5, 8, 1.0, 0.5);
    }

    #[test]
    fn quadratic_form_matches_tridiagonal_product() {
        let prior = Tridiagonal::chain_precision(3, 2.0, 0.1);
        let v = 2;
        let m = [1.0, -1.0, 0.5, 2.0, 0.0, 0.3];
        let mut direct = 0.0;
        for w in 0..v {
            let mw: Vec<f64> = (0..3).map(|t| m[t * v + w]).collect();
            direct += mw
                .iter()
                .zip(prior.mul(&mw))
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        assert!((quad_prior(&m, v, &prior) - direct).abs() < 1e-12);
    }
}
