/// Σ_{k=0}^{upto} C(m, k) 2^{−m}, with log-terms built by a compensated
/// running sum of log-ratios.
fn lower_tail(m: u64, upto: u64) -> f64 {
    let mut logs = Vec::with_capacity(upto as usize + 1);
    let (mut acc, mut comp) = (-(m as f64) * std::f64::consts::LN_2, 0.0f64);
    logs.push(acc);
    for k in 0..upto {
        let inc = ((m - k) as f64 / (k + 1) as f64).ln() - comp;
        let next = acc + inc;
        comp = (next - acc) - inc;
        acc = next;
        logs.push(acc);
    }
    logs.iter().map(|l| l.exp()).sum()
}

/// Probability that `p` points in general position in R^`n` are linearly
/// separable under a uniformly random dichotomy:
/// 2^{1−P} Σ_{k<N} C(P−1, k).
pub fn cover_prob(n: u64, p: u64) -> f64 {
    assert!(n >= 1 && p >= 1, "cover_prob needs N, P >= 1");
    if p <= n {
        return 1.0;
    }
    let m = p - 1;
    // Sum the shorter tail; C(m, k) = C(m, m − k).
    if n - 1 <= m / 2 {
        lower_tail(m, n - 1).min(1.0)
    } else {
        1.0 - lower_tail(m, m - n)
    }
}
