use std::cmp::Ordering;

use super::ActiveError;

/// Shannon entropy in bits of a Bernoulli(p) outcome.
pub fn binary_entropy(p: f64) -> Result<f64, ActiveError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ActiveError::Probability(p));
    }
    let term = |x: f64| if x == 0.0 { 0.0 } else { -x * x.log2() };
    Ok(term(p) + term(1.0 - p))
}

/// Query order: higher entropy first, then closer to 0.5, then smaller id.
pub fn uncertainty_order(a: (&str, f64, f64), b: (&str, f64, f64)) -> Ordering {
    let (ida, pa, ha) = a;
    let (idb, pb, hb) = b;
    hb.total_cmp(&ha)
        .then_with(|| (pa - 0.5).abs().total_cmp(&(pb - 0.5).abs()))
        .then_with(|| ida.cmp(idb))
}

/// Indices of the `k` most uncertain entries of `scored` (id, probability),
/// most uncertain first.
pub fn select_uncertain<S: AsRef<str>>(
    scored: &[(S, f64)],
    k: usize,
) -> Result<Vec<usize>, ActiveError> {
    if scored.len() < k {
        return Err(ActiveError::PoolTooSmall {
            pool: scored.len(),
            k,
        });
    }
    let entropies = scored
        .iter()
        .map(|(_, p)| binary_entropy(*p))
        .collect::<Result<Vec<_>, _>>()?;
    let key = |i: usize| (scored[i].0.as_ref(), scored[i].1, entropies[i]);
    let mut order: Vec<usize> = (0..scored.len()).collect();
    if k < order.len() && k > 0 {
        order.select_nth_unstable_by(k - 1, |&a, &b| uncertainty_order(key(a), key(b)));
    }
    order.truncate(k);
    order.sort_by(|&a, &b| uncertainty_order(key(a), key(b)));
    Ok(order)
}
