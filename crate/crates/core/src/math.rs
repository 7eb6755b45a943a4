//! Small numeric helpers shared across modules.

/// log(sum(exp(v))) with max shift, so inputs far outside exp range stay
/// finite. Empty input gives -inf.
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = v.iter().map(|&a| (a - m).exp()).sum();
    m + s.ln()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (divide by n-1); 0 for fewer than two values.
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (the common "type 7" rule) on unsorted data.
/// q must lie in [0, 1].
pub(crate) fn quantile_type7(v: &[f64], q: f64) -> f64 {
    debug_assert!(!v.is_empty() && (0.0..=1.0).contains(&q));
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q;
    let j = h.floor() as usize;
    let frac = h - j as f64;
    if frac == 0.0 || j + 1 == s.len() {
        s[j]
    } else {
        s[j] + frac * (s[j + 1] - s[j])
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    quantile_type7(v, 0.5)
}
