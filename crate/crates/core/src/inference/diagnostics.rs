/// Effective sample size by Geyer's initial positive sequence estimator,
/// with the monotone adjustment on the paired autocorrelation sums.
///
/// A constant trace has effective size 0. The result never exceeds the
/// trace length.
pub fn ess(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = trace.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / nf;
    if c0 <= 0.0 || !c0.is_finite() {
        return 0.0;
    }
    let autocorr = |lag: usize| -> f64 {
        let s: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
        s / nf / c0
    };
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocorr(2 * k) + autocorr(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    if tau <= 0.0 {
        return nf;
    }
    (nf / tau).min(nf)
}
