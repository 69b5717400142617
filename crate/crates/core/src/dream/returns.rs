//! Continue-discounted lambda-returns and the PPO clipped surrogate.

/// `G_t = r_t + gamma c_t ((1 - lam) V_{t+1} + lam G_{t+1})`, with
/// `V_H = G_H = bootstrap`. `values[t]` is `V(s_t)`.
pub fn lambda_returns(rewards: &[f64], continues: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let h = rewards.len();
    assert!(continues.len() == h && values.len() == h, "sequences must align");
    let mut out = vec![0.0; h];
    let mut next_g = bootstrap;
    for t in (0..h).rev() {
        let next_v = if t + 1 < h { values[t + 1] } else { bootstrap };
        out[t] = rewards[t] + gamma * continues[t] * ((1.0 - lam) * next_v + lam * next_g);
        next_g = out[t];
    }
    out
}

/// `min(ratio A, clip(ratio, 1 - eps, 1 + eps) A)` for one sample.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Linear interpolation over `epochs` from `start` (epoch 0) to `end`
/// (last epoch).
pub fn linear_schedule(start: f64, end: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return start;
    }
    start + (end - start) * epoch as f64 / (epochs - 1) as f64
}

/// Imagination horizon at `epoch`, rounded to the nearest step.
pub fn horizon_at(h_start: usize, h_end: usize, epoch: usize, epochs: usize) -> usize {
    linear_schedule(h_start as f64, h_end as f64, epoch, epochs).round() as usize
}

/// Mean-zero, unit-variance copy (only centred when the spread is ~0).
pub fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let denom = if sd > 1e-8 { sd } else { 1.0 };
    x.iter().map(|v| (v - mean) / denom).collect()
}
