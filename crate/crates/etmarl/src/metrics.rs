//! Run-level metric computation: Lyapunov values, trigger moving
//! averages, triggering reduction, and inter-event aggregates.

/// Standard quadratic Lyapunov value Σ xᵢ².
pub fn lyapunov(state: &[f64]) -> f64 {
    state.iter().map(|x| x * x).sum()
}

/// Trailing mean of a bit stream: element k averages bits over
/// [max(0, k−window+1), k].
pub fn moving_avg_trigger(bits: &[u8], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(bits.len());
    let mut sum = 0u64;
    for k in 0..bits.len() {
        sum += u64::from(bits[k]);
        if k >= window {
            sum -= u64::from(bits[k - window]);
        }
        let len = (k + 1).min(window);
        out.push(sum as f64 / len as f64);
    }
    out
}

/// Trailing mean of a real-valued series with the same window convention
/// as [`moving_avg_trigger`].
pub fn moving_avg(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for k in 0..series.len() {
        sum += series[k];
        if k >= window {
            sum -= series[k - window];
        }
        let len = (k + 1).min(window);
        out.push(sum / len as f64);
    }
    out
}

/// Fraction of time-triggered events avoided: 1 − (#triggers)/tt_steps.
pub fn trigger_reduction(bits: &[u8], tt_steps: usize) -> f64 {
    assert!(tt_steps > 0, "tt_steps must be positive");
    let ones = bits.iter().filter(|&&b| b != 0).count();
    1.0 - ones as f64 / tt_steps as f64
}

/// Min / mean / max of a list of inter-event gaps. `None` when empty.
pub fn inter_event_stats(gaps: &[usize]) -> Option<(usize, f64, usize)> {
    if gaps.is_empty() {
        return None;
    }
    let min = *gaps.iter().min().unwrap();
    let max = *gaps.iter().max().unwrap();
    let mean = gaps.iter().sum::<usize>() as f64 / gaps.len() as f64;
    Some((min, mean, max))
}
