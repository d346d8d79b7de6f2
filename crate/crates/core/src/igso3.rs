//! The isotropic Gaussian distribution on SO(3).
//!
//! Parametrized by a mean rotation and a scalar scale `eps > 0`. The axis of
//! the deviation from the mean is uniform on the sphere; the rotation angle
//! `w` has density proportional to `f_eps(w) (1 - cos w) / pi` on `[0, pi]`,
//! with the heat-kernel angle factor
//!
//! ```text
//! f_eps(w) = sum_{l=0}^{L} (2l+1) exp(-l(l+1) eps^2 / 2) sin((l+1/2) w) / sin(w/2)
//! ```
//!
//! Scale convention: `eps` is the per-axis standard deviation of the
//! tangent-space Gaussian that approximates the distribution at small
//! scales (the heat-kernel time is `eps^2/2`). Under this convention scales
//! compose in quadrature, `eps_c^2 = eps_a^2 + eps_b^2`, which is what makes
//! one-shot forward noising at scale `sqrt(1 - alpha_bar)` agree with the
//! step-by-step chain at scales `sqrt(beta_i)` — the convolution-closure
//! property the sampler relies on.
//!
//! Sampling uses inverse-transform sampling of the angle from a cached CDF
//! table. Below `eps = 0.01` the truncated series is no longer usable and
//! the tangent Gaussian is sampled directly; at that scale the two laws
//! differ by O(eps^2/24) in distribution, far below every tolerance used
//! here.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::geometry::{exp_so3, log_so3, Rotation};
use crate::{Error, Result, Scalar, Vec3};

/// Scale below which sampling switches to the tangent-space Gaussian.
pub const TANGENT_SAMPLING_EPS: f64 = 0.01;
/// Default angle-grid resolution of CDF tables.
pub const DEFAULT_CDF_GRID: usize = 4096;

/// Mean rotation and scale of an isotropic Gaussian on SO(3).
#[derive(Debug, Clone, Copy)]
pub struct IgSo3Params<S: Scalar> {
    pub mean: Rotation<S>,
    pub eps: S,
}

impl<S: Scalar> IgSo3Params<S> {
    pub fn new(mean: Rotation<S>, eps: S) -> Result<Self> {
        if eps <= S::zero() || !eps.is_finite() {
            return Err(Error::invalid(format!("igso3 scale must be > 0, got {eps}")));
        }
        Ok(IgSo3Params { mean, eps })
    }
}

/// Series truncation order; term magnitude `exp(-l(l+1) eps^2/2)` dictates
/// how many terms matter.
fn truncation_order(eps: f64) -> usize {
    if eps < 0.1 {
        2000
    } else if eps < 1.0 {
        200
    } else {
        50
    }
}

/// Heat-kernel angle factor `f_eps(w)`; tends to 1 for large scales
/// (uniform rotations) and concentrates at 0 for small scales.
pub fn heat_kernel_f<S: Scalar>(omega: S, eps: S) -> Result<S> {
    let w = omega.to_f64_lossy();
    let e = eps.to_f64_lossy();
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::invalid(format!("heat_kernel_f: eps must be > 0, got {e}")));
    }
    if !(0.0..=std::f64::consts::PI + 1e-12).contains(&w) {
        return Err(Error::invalid(format!(
            "heat_kernel_f: omega must be in [0, pi], got {w}"
        )));
    }
    Ok(S::from_f64_lossy(heat_kernel_f64(w, e)))
}

fn heat_kernel_f64(omega: f64, eps: f64) -> f64 {
    let t = eps * eps / 2.0;
    let l_max = truncation_order(eps);
    let mut acc = 0.0f64;
    if omega < 1e-7 {
        // Limit of sin((l+1/2)w)/sin(w/2) as w -> 0 is (2l+1).
        for l in 0..=l_max {
            let n = (2 * l + 1) as f64;
            let decay = (-(l as f64) * (l as f64 + 1.0) * t).exp();
            acc += n * n * decay;
            if n * n * decay < 1e-18 {
                break;
            }
        }
    } else {
        let half = omega / 2.0;
        let sin_half = half.sin();
        for l in 0..=l_max {
            let n = (2 * l + 1) as f64;
            let decay = (-(l as f64) * (l as f64 + 1.0) * t).exp();
            acc += n * decay * ((l as f64 + 0.5) * omega).sin() / sin_half;
            // |sin((l+1/2)w)/sin(w/2)| <= 2l+1 bounds the tail.
            if n * n * decay < 1e-18 {
                break;
            }
        }
    }
    // Truncation can leave a tiny negative residue.
    acc.max(0.0)
}

/// Probability density of the rotation angle: `f_eps(w) (1 - cos w) / pi`.
pub fn angle_marginal<S: Scalar>(omega: S, eps: S) -> Result<S> {
    let f = heat_kernel_f(omega, eps)?;
    let w = omega.to_f64_lossy();
    Ok(f * S::from_f64_lossy((1.0 - w.cos()) / std::f64::consts::PI))
}

/// Cumulative distribution of the rotation angle on a uniform grid over
/// `[0, pi]`, renormalized so the endpoint is exactly 1.
#[derive(Debug, Clone)]
pub struct AngleCdfTable {
    pub eps: f64,
    pub omegas: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl AngleCdfTable {
    /// Builds the table by trapezoidal integration of the angle marginal.
    pub fn build(eps: f64, grid_size: usize) -> Result<Self> {
        if grid_size < 256 {
            return Err(Error::invalid(format!(
                "cdf grid size must be >= 256, got {grid_size}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("cdf table: eps must be > 0"));
        }
        let n = grid_size;
        let h = std::f64::consts::PI / (n - 1) as f64;
        let omegas: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let dens: Vec<f64> = omegas
            .iter()
            .map(|&w| heat_kernel_f64(w, eps) * (1.0 - w.cos()) / std::f64::consts::PI)
            .collect();
        let mut cdf = vec![0.0f64; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i - 1] + dens[i]) * h;
        }
        let total = cdf[n - 1];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numeric(format!(
                "cdf table degenerate at eps = {eps}: total mass {total}"
            )));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        cdf[n - 1] = 1.0;
        Ok(AngleCdfTable { eps, omegas, cdf })
    }

    /// CDF value at `omega` by linear interpolation.
    pub fn cdf_at(&self, omega: f64) -> f64 {
        let n = self.omegas.len();
        let h = std::f64::consts::PI / (n - 1) as f64;
        if omega <= 0.0 {
            return 0.0;
        }
        if omega >= std::f64::consts::PI {
            return 1.0;
        }
        let idx = ((omega / h) as usize).min(n - 2);
        let frac = (omega - self.omegas[idx]) / h;
        self.cdf[idx] + (self.cdf[idx + 1] - self.cdf[idx]) * frac
    }

    /// Inverse CDF by binary search plus linear interpolation.
    pub fn inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let idx = self.cdf.partition_point(|&c| c < u);
        if idx == 0 {
            return 0.0;
        }
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let (w0, w1) = (self.omegas[idx - 1], self.omegas[idx]);
        if c1 - c0 <= f64::EPSILON {
            return w1;
        }
        w0 + (w1 - w0) * (u - c0) / (c1 - c0)
    }
}

/// Read-mostly cache of CDF tables keyed by the scale rounded to 1e-6.
#[derive(Debug, Default)]
pub struct CdfCache {
    tables: RwLock<HashMap<u64, Arc<AngleCdfTable>>>,
}

impl CdfCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(eps: f64) -> u64 {
        (eps * 1e6).round() as u64
    }

    pub fn table(&self, eps: f64) -> Result<Arc<AngleCdfTable>> {
        let key = Self::key(eps);
        if let Some(t) = self.tables.read().expect("cdf cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(AngleCdfTable::build(eps, DEFAULT_CDF_GRID)?);
        let mut guard = self.tables.write().expect("cdf cache poisoned");
        Ok(Arc::clone(guard.entry(key).or_insert(table)))
    }
}

/// Draws a rotation from `IGSO3(mean, eps)`.
///
/// The zero-mean sample combines a uniform axis with an inverse-CDF angle,
/// and the result is rotated by the mean.
pub fn sample<S: Scalar, R: Rng + ?Sized>(
    params: &IgSo3Params<S>,
    cache: &CdfCache,
    rng: &mut R,
) -> Result<Rotation<S>> {
    let eps = params.eps.to_f64_lossy();
    if !(eps > 0.0) {
        return Err(Error::invalid("igso3 sample: eps must be > 0"));
    }
    let deviation = if eps < TANGENT_SAMPLING_EPS {
        let zx: f64 = StandardNormal.sample(rng);
        let zy: f64 = StandardNormal.sample(rng);
        let zz: f64 = StandardNormal.sample(rng);
        exp_so3(&Vec3::<S>::new(
            S::from_f64_lossy(zx * eps),
            S::from_f64_lossy(zy * eps),
            S::from_f64_lossy(zz * eps),
        ))?
    } else {
        let table = cache.table(eps)?;
        let angle = table.inverse(rng.random::<f64>());
        let axis: [f64; 3] = UnitSphere.sample(rng);
        exp_so3(&Vec3::<S>::new(
            S::from_f64_lossy(axis[0] * angle),
            S::from_f64_lossy(axis[1] * angle),
            S::from_f64_lossy(axis[2] * angle),
        ))?
    };
    Ok(params.mean.compose(&deviation))
}

/// Tangent-space Gaussian approximation `N(Log(mean), var I)` of the
/// distribution, valid for small scales: `var = eps^2` under this crate's
/// standard-deviation scale convention. Logs a warning outside the validity
/// regime (`eps >= 1`) instead of failing.
pub fn tangent_gaussian_params<S: Scalar>(params: &IgSo3Params<S>) -> Result<(Vec3<S>, S)> {
    if params.eps >= S::one() {
        log::warn!(
            "igso3 tangent approximation requested at eps = {} (valid regime is eps < 1)",
            params.eps
        );
    }
    Ok((log_so3(&params.mean)?, params.eps * params.eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geodesic_distance;
    use crate::stats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn rejects_nonpositive_eps() {
        assert!(heat_kernel_f(0.3f64, 0.0).is_err());
        assert!(heat_kernel_f(0.3f64, -1.0).is_err());
        assert!(IgSo3Params::new(Rotation::<f64>::identity(), 0.0).is_err());
    }

    #[test]
    fn large_eps_limit_is_uniform() {
        // Only the l = 0 term survives: f -> 1 uniformly.
        for i in 0..64 {
            let w = std::f64::consts::PI * i as f64 / 63.0;
            let f: f64 = heat_kernel_f(w, 5.0).unwrap();
            assert!((f - 1.0).abs() < 1e-6, "f({w}) = {f}");
        }
    }

    #[test]
    fn marginal_is_zero_at_zero_angle() {
        let m: f64 = angle_marginal(0.0, 0.5).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn marginal_matches_uniform_angle_distribution_at_large_eps() {
        for i in 1..64 {
            let w = std::f64::consts::PI * i as f64 / 63.0;
            let m: f64 = angle_marginal(w, 5.0).unwrap();
            let uniform = (1.0 - w.cos()) / std::f64::consts::PI;
            assert!((m - uniform).abs() < 1e-5);
        }
    }

    #[test]
    fn marginal_normalizes_across_eps_sweep() {
        // Independent quadrature of the marginal must give unit mass.
        for eps in [0.05, 0.5, 1.5] {
            let mass = stats::simpson(
                |w| angle_marginal(w, eps).unwrap(),
                0.0,
                std::f64::consts::PI,
                8192,
            );
            assert!((mass - 1.0).abs() < 1e-4, "eps = {eps}: mass = {mass}");
        }
    }

    #[test]
    fn small_eps_marginal_peaks_near_zero() {
        // Grid search for the argmax of the angle marginal at eps = 0.05.
        let mut best = (0.0f64, -1.0f64);
        for i in 0..4096 {
            let w = std::f64::consts::PI * i as f64 / 4095.0;
            let m: f64 = angle_marginal(w, 0.05).unwrap();
            if m > best.1 {
                best = (w, m);
            }
        }
        assert!(best.0 > 0.0 && best.0 < 0.2, "argmax at {}", best.0);
    }

    #[test]
    fn cdf_table_endpoints_and_monotonicity() {
        let t = AngleCdfTable::build(0.5, 512).unwrap();
        assert_eq!(t.cdf[0], 0.0);
        assert!((t.cdf[t.cdf.len() - 1] - 1.0).abs() < 1e-12);
        for w in t.cdf.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn cdf_table_rejects_small_grid() {
        assert!(AngleCdfTable::build(0.5, 128).is_err());
    }

    #[test]
    fn cdf_median_matches_monte_carlo() {
        let cache = CdfCache::new();
        let table = cache.table(1.5).unwrap();
        let median = table.inverse(0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let params = IgSo3Params::new(Rotation::<f64>::identity(), 1.5).unwrap();
        let mut angles: Vec<f64> = (0..200_000)
            .map(|_| {
                let r = sample(&params, &cache, &mut rng).unwrap();
                geodesic_distance(&Rotation::identity(), &r)
            })
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let empirical = angles[angles.len() / 2];
        assert!(
            (empirical - median).abs() < 0.01,
            "median {median} vs empirical {empirical}"
        );
    }

    #[test]
    fn tiny_eps_concentrates_at_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let cache = CdfCache::new();
        let mean = crate::geometry::exp_so3(&Vec3::new(0.4, -0.8, 0.2)).unwrap();
        let params = IgSo3Params::new(mean, 1e-4).unwrap();
        let mut close = 0usize;
        let n = 2000;
        for _ in 0..n {
            let r = sample(&params, &cache, &mut rng).unwrap();
            if geodesic_distance(&r, &mean) < 0.01 {
                close += 1;
            }
        }
        assert!(close as f64 / n as f64 > 0.99, "close = {close}/{n}");
    }

    #[test]
    fn sampler_matches_density_ks() {
        let cache = CdfCache::new();
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for eps in [0.5, 5.0] {
            let params = IgSo3Params::new(Rotation::<f64>::identity(), eps).unwrap();
            let mut angles: Vec<f64> = (0..100_000)
                .map(|_| {
                    let r = sample(&params, &cache, &mut rng).unwrap();
                    geodesic_distance(&Rotation::identity(), &r)
                })
                .collect();
            let table = cache.table(eps).unwrap();
            let d = stats::ks_statistic_vs_cdf(&mut angles, |w| table.cdf_at(w));
            assert!(d < 0.01, "eps = {eps}: KS = {d}");
        }
    }

    #[test]
    fn uniform_limit_ks_against_analytic_cdf() {
        // At eps = 5 the angle law is (1 - cos w)/pi with CDF (w - sin w)/pi.
        let cache = CdfCache::new();
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let params = IgSo3Params::new(Rotation::<f64>::identity(), 5.0).unwrap();
        let mut angles: Vec<f64> = (0..100_000)
            .map(|_| {
                let r = sample(&params, &cache, &mut rng).unwrap();
                geodesic_distance(&Rotation::identity(), &r)
            })
            .collect();
        let d = stats::ks_statistic_vs_cdf(&mut angles, |w| {
            (w - w.sin()) / std::f64::consts::PI
        });
        assert!(d < 0.01, "KS = {d}");
    }

    #[test]
    fn sampling_is_rotation_equivariant() {
        // Angle-to-mean law must not depend on the mean.
        let cache = CdfCache::new();
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let mean = crate::geometry::exp_so3(&Vec3::new(1.1, 0.3, -0.6)).unwrap();
        let p_id = IgSo3Params::new(Rotation::<f64>::identity(), 0.7).unwrap();
        let p_mu = IgSo3Params::new(mean, 0.7).unwrap();
        let n = 100_000;
        let mut a: Vec<f64> = (0..n)
            .map(|_| {
                geodesic_distance(
                    &Rotation::identity(),
                    &sample(&p_id, &cache, &mut rng).unwrap(),
                )
            })
            .collect();
        let mut b: Vec<f64> = (0..n)
            .map(|_| geodesic_distance(&mean, &sample(&p_mu, &cache, &mut rng).unwrap()))
            .collect();
        let d = stats::ks_statistic_two_sample(&mut a, &mut b);
        assert!(d < 0.015, "KS = {d}");
    }

    #[test]
    fn tangent_params_mean_and_variance() {
        let mean = crate::geometry::exp_so3(&Vec3::new(std::f64::consts::PI, 0.0, 0.0)).unwrap();
        let (m, var) = tangent_gaussian_params(&IgSo3Params::new(mean, 0.1).unwrap()).unwrap();
        assert!((m.x.abs() - std::f64::consts::PI).abs() < 1e-9);
        assert!((var - 0.01).abs() < 1e-15);
        let (m0, _) =
            tangent_gaussian_params(&IgSo3Params::new(Rotation::<f64>::identity(), 0.1).unwrap())
                .unwrap();
        assert_eq!(m0, Vec3::zeros());
    }

    #[test]
    fn tangent_variance_matches_sampling() {
        // Per-component variance of Log(R) must match eps^2 at small scales.
        let cache = CdfCache::new();
        let mut rng = ChaCha12Rng::seed_from_u64(36);
        let eps = 0.05f64;
        let params = IgSo3Params::new(Rotation::<f64>::identity(), eps).unwrap();
        let n = 100_000;
        let mut logs = Vec::with_capacity(n);
        for _ in 0..n {
            let r = sample(&params, &cache, &mut rng).unwrap();
            logs.push(log_so3(&r).unwrap());
        }
        let (_, var) = tangent_gaussian_params(&params).unwrap();
        for axis in 0..3 {
            let xs: Vec<f64> = logs.iter().map(|v| v[axis]).collect();
            let sample_var = stats::variance(&xs);
            assert!(
                (sample_var - var).abs() / var < 0.1,
                "axis {axis}: {sample_var} vs {var}"
            );
        }
    }

    #[test]
    fn cache_reuses_tables() {
        let cache = CdfCache::new();
        let a = cache.table(0.5).unwrap();
        let b = cache.table(0.5 + 1e-9).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
