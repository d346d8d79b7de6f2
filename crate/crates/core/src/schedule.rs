//! Diffusion noise schedules and sampling-time index subsequences.

use crate::{Error, Result, Scalar};

/// Per-step noise schedule arrays for steps `i = 1..=n`.
///
/// `alpha_bar` is recomputed as the running product of `alpha` after beta
/// clipping, so the reconstruction identity
/// `alpha_bar[i] = alpha_bar[i-1] * alpha[i]` holds exactly.
#[derive(Debug, Clone)]
pub struct NoiseSchedule<S: Scalar> {
    n: usize,
    beta: Vec<S>,
    alpha: Vec<S>,
    alpha_bar: Vec<S>,
    beta_tilde: Vec<S>,
}

impl<S: Scalar> NoiseSchedule<S> {
    /// Cosine schedule: `alpha_bar(i) = g(i)/g(0)` with
    /// `g(i) = cos^2(((i/n + s)/(1 + s)) * pi/2)`, `s = 0.008`, and
    /// `beta_i = 1 - alpha_bar_i / alpha_bar_{i-1}` clipped to
    /// `[1e-5, 0.999]`.
    pub fn cosine(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("schedule needs n >= 2, got {n}")));
        }
        let s = 0.008f64;
        let g = |i: f64| {
            let x = ((i / n as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2;
            x.cos() * x.cos()
        };
        let g0 = g(0.0);
        let mut beta = Vec::with_capacity(n);
        let mut prev_bar = 1.0f64;
        for i in 1..=n {
            let bar = g(i as f64) / g0;
            let b = (1.0 - bar / prev_bar).clamp(1e-5, 0.999);
            beta.push(b);
            prev_bar = bar;
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(n);
        let mut acc = 1.0f64;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let mut beta_tilde = Vec::with_capacity(n);
        for i in 0..n {
            let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
            beta_tilde.push((1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]);
        }
        Ok(NoiseSchedule {
            n,
            beta: beta.into_iter().map(S::from_f64_lossy).collect(),
            alpha: alpha.into_iter().map(S::from_f64_lossy).collect(),
            alpha_bar: alpha_bar.into_iter().map(S::from_f64_lossy).collect(),
            beta_tilde: beta_tilde.into_iter().map(S::from_f64_lossy).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `beta_i` for `i` in `1..=n`.
    pub fn beta(&self, i: usize) -> S {
        self.beta[i - 1]
    }

    pub fn alpha(&self, i: usize) -> S {
        self.alpha[i - 1]
    }

    pub fn alpha_bar(&self, i: usize) -> S {
        self.alpha_bar[i - 1]
    }

    /// `alpha_bar_{i-1}`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar_prev(&self, i: usize) -> S {
        if i <= 1 {
            S::one()
        } else {
            self.alpha_bar[i - 2]
        }
    }

    pub fn beta_tilde(&self, i: usize) -> S {
        self.beta_tilde[i - 1]
    }
}

/// Strictly increasing DDIM sampling indices in `[0, n-1]`: quadratic
/// spacing `round((j/(s-1))^2 (n-1))`, deduplicated, then padded with the
/// smallest unused indices back to length `s`. Always contains `0` and
/// `n-1`; the quadratic law concentrates steps near index 0.
pub fn ddim_indices(n: usize, s: usize) -> Result<Vec<usize>> {
    if s < 1 || s > n {
        return Err(Error::invalid(format!(
            "ddim steps must satisfy 1 <= s <= n, got s = {s}, n = {n}"
        )));
    }
    if s == 1 {
        return Ok(vec![0]);
    }
    let mut picked = vec![false; n];
    for j in 0..s {
        let frac = j as f64 / (s - 1) as f64;
        let idx = (frac * frac * (n - 1) as f64).round() as usize;
        picked[idx.min(n - 1)] = true;
    }
    let mut count = picked.iter().filter(|&&p| p).count();
    for i in 0..n {
        if count == s {
            break;
        }
        if !picked[i] {
            picked[i] = true;
            count += 1;
        }
    }
    Ok((0..n).filter(|&i| picked[i]).collect())
}
