use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SPAN: f64 = 0.75;

#[derive(Debug, Error, PartialEq)]
pub enum LoessError {
    #[error("loess needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("span {span} is invalid for {n} points (need 0 < span <= 1 and span * n >= 2)")]
    Span { span: f64, n: usize },
    #[error("{xs} x values but {ys} y values")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("grid point {0} lies outside the data range")]
    OutsideRange(f64),
}

/// Input points and the local-linear fit evaluated at the input x values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub points: Vec<(f64, f64)>,
    pub smoothed: Vec<(f64, f64)>,
    pub span: f64,
}

impl TrendSeries {
    pub fn fit(points: Vec<(f64, f64)>, span: f64) -> Result<Self, LoessError> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let fitted = loess_smooth(&xs, &ys, span)?;
        let smoothed = xs.into_iter().zip(fitted).collect();
        Ok(TrendSeries {
            points,
            smoothed,
            span,
        })
    }
}

fn check(xs: &[f64], ys: &[f64], span: f64) -> Result<usize, LoessError> {
    if xs.len() != ys.len() {
        return Err(LoessError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(LoessError::TooFewPoints(n));
    }
    if !(span > 0.0 && span <= 1.0) || span * (n as f64) < 2.0 {
        return Err(LoessError::Span { span, n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(LoessError::NonFinite);
    }
    Ok((span * n as f64).ceil() as usize)
}

/// Degree-1 loess evaluated at every input x.
pub fn loess_smooth(xs: &[f64], ys: &[f64], span: f64) -> Result<Vec<f64>, LoessError> {
    loess_at(xs, ys, span, xs)
}

/// Degree-1 loess with tricube weights over the `ceil(span * n)` nearest
/// points, evaluated at each grid value. Grid values must lie inside the
/// x range of the data.
pub fn loess_at(xs: &[f64], ys: &[f64], span: f64, grid: &[f64]) -> Result<Vec<f64>, LoessError> {
    let q = check(xs, ys, span)?;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(xs.len());
    grid.iter()
        .map(|&x0| {
            if !x0.is_finite() || x0 < lo || x0 > hi {
                return Err(LoessError::OutsideRange(x0));
            }
            order.clear();
            order.extend(xs.iter().enumerate().map(|(i, &x)| ((x - x0).abs(), i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Ok(local_linear(&order[..q], xs, ys, x0))
        })
        .collect()
}

fn local_linear(near: &[(f64, usize)], xs: &[f64], ys: &[f64], x0: f64) -> f64 {
    let d_max = near.last().map_or(0.0, |p| p.0);
    let weight = |d: f64| {
        if d_max == 0.0 {
            1.0
        } else {
            let u = (d / d_max).min(1.0);
            (1.0 - u * u * u).powi(3)
        }
    };
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &(d, i) in near {
        let w = weight(d);
        sw += w;
        sx += w * (xs[i] - x0);
        sy += w * ys[i];
    }
    if sw == 0.0 {
        return near.iter().map(|&(_, i)| ys[i]).sum::<f64>() / near.len() as f64;
    }
    let (xbar, ybar) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(d, i) in near {
        let w = weight(d);
        let dx = xs[i] - x0 - xbar;
        sxx += w * dx * dx;
        sxy += w * dx * (ys[i] - ybar);
    }
    // all weight on a single x: the line is undetermined, fall back to the mean
    if sxx <= 1e-12 * sw * d_max * d_max {
        return ybar;
    }
    ybar - (sxy / sxx) * xbar
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_and_constant_reproduced() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.7).collect();
        let line: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        for (x, y) in xs.iter().zip(loess_smooth(&xs, &line, 0.3).unwrap()) {
            assert!((y - 2.0 * x).abs() < 1e-9);
        }
        let flat = vec![4.5; 20];
        assert!(loess_smooth(&xs, &flat, 0.75)
            .unwrap()
            .iter()
            .all(|y| (y - 4.5).abs() < 1e-12));
    }

    #[test]
    fn errors() {
        assert_eq!(
            loess_smooth(&[0.0, 1.0], &[0.0, 1.0], 1.0),
            Err(LoessError::TooFewPoints(2))
        );
        assert!(matches!(
            loess_smooth(&[0.0, 1.0, 2.0], &[0.0; 3], 0.5),
            Err(LoessError::Span { .. })
        ));
        assert!(matches!(
            loess_smooth(&[0.0, 1.0, 2.0], &[0.0; 2], 1.0),
            Err(LoessError::LengthMismatch { .. })
        ));
        assert_eq!(
            loess_smooth(&[0.0, 1.0, 2.0], &[0.0, f64::NAN, 1.0], 1.0),
            Err(LoessError::NonFinite)
        );
        assert_eq!(
            loess_at(&[0.0, 1.0, 2.0], &[0.0; 3], 1.0, &[3.0]),
            Err(LoessError::OutsideRange(3.0))
        );
    }

    #[test]
    fn repeated_x_falls_back_to_mean() {
        let xs = [1.0, 1.0, 1.0, 5.0];
        let ys = [1.0, 2.0, 3.0, 9.0];
        let fit = loess_at(&xs, &ys, 0.75, &[1.0]).unwrap();
        assert!((fit[0] - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn affine_equivariance(ys in prop::collection::vec(-10.0f64..10.0, 5..30), a in -3.0f64..3.0, b in -5.0f64..5.0) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let base = loess_smooth(&xs, &ys, 0.75).unwrap();
            let shifted: Vec<f64> = ys.iter().zip(&xs).map(|(y, x)| y + a * x + b).collect();
            let fit = loess_smooth(&xs, &shifted, 0.75).unwrap();
            for ((f, g), x) in fit.iter().zip(&base).zip(&xs) {
                prop_assert!((f - (g + a * x + b)).abs() < 1e-8);
            }
        }
    }
}
