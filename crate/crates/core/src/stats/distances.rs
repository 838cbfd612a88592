use super::StatsError;

fn sorted(a: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().any(|v| v.is_nan()) {
        return Err(StatsError::InvalidParameter("sample contains NaN".into()));
    }
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Walks the pooled sorted samples and calls `visit(x, next_x, Fa(x), Fb(x))`
/// at every distinct point, with `next_x` the following distinct point.
fn walk_ecdfs(a: &[f64], b: &[f64], mut visit: impl FnMut(f64, Option<f64>, f64, f64)) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => Some(u.min(v)),
            (Some(&u), None) => Some(u),
            (None, Some(&v)) => Some(v),
            (None, None) => None,
        };
        visit(x, next, i as f64 / na, j as f64 / nb);
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let mut d: f64 = 0.0;
    walk_ecdfs(&a, &b, |_, _, fa, fb| d = d.max((fa - fb).abs()));
    Ok(d)
}

/// 1-Wasserstein distance `∫ |F_a - F_b| dx` between empirical measures.
/// For equal sizes this is the mean absolute difference of sorted samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / a.len() as f64);
    }
    let mut w = 0.0;
    walk_ecdfs(&a, &b, |x, next, fa, fb| {
        if let Some(nx) = next {
            w += (fa - fb).abs() * (nx - x);
        }
    });
    Ok(w)
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}
