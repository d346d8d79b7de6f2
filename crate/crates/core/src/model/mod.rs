//! The conditional denoising network and its optimizer.
//!
//! Architecture: a shared per-point MLP with max pooling embeds the cloud
//! (`z_p`); the diffusion index gets a sinusoidal embedding (`z_i`); their
//! concatenation is projected to the context `c`. The grasp input — the
//! flattened rotation matrix concatenated with the normalized translation —
//! is embedded with a Mish linear layer and refined by FiLM-conditioned
//! residual blocks; a final linear head emits the six-component noise
//! estimate (translation part first, rotation tangent part second).
//!
//! Everything is self-contained: forward passes, explicit reverse-mode
//! gradients (`net`), and Adam live here, with no autodiff framework.

mod net;

pub use net::{
    denoise_eps, encode_pointcloud, loss_and_grads, loss_and_grads_prepared, sinusoidal_embed,
    ModelDenoiser, PreparedSample, SceneBatch,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::{Error, Result, Scalar};

/// Network dimensions.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    /// Cloud embedding width (also the context width).
    pub d_p: usize,
    /// Time embedding width (even).
    pub d_i: usize,
    /// Grasp embedding width.
    pub d_g: usize,
    /// Number of residual blocks.
    pub n_r: usize,
    /// Hidden widths of the shared per-point encoder MLP.
    pub encoder_widths: Vec<usize>,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            d_p: 64,
            d_i: 32,
            d_g: 128,
            n_r: 4,
            encoder_widths: vec![64, 128],
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_p == 0 || self.d_i == 0 || self.d_g == 0 || self.n_r == 0 {
            return Err(Error::Config("denoiser dims must be >= 1".into()));
        }
        if self.d_i % 2 != 0 {
            return Err(Error::Config(format!(
                "time embedding width must be even, got {}",
                self.d_i
            )));
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return Err(Error::Config("encoder widths must be nonempty and positive".into()));
        }
        Ok(())
    }
}

/// Dense affine layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S: Scalar> {
    pub w: DMatrix<S>,
    pub b: DVector<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            w: DMatrix::zeros(out_dim, in_dim),
            b: DVector::zeros(out_dim),
        }
    }

    /// Kaiming-uniform weights, zero bias.
    pub fn kaiming<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let w = DMatrix::from_fn(out_dim, in_dim, |_, _| {
            S::from_f64_lossy(rng.random_range(-bound..bound))
        });
        Linear {
            w,
            b: DVector::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &DVector<S>) -> DVector<S> {
        &self.w * x + &self.b
    }
}

/// One FiLM-conditioned residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlockParams<S: Scalar> {
    /// Context to affine pair `(a, b)`: `2*d_g` outputs.
    pub film: Linear<S>,
    /// Grasp-embedding hidden layer.
    pub hidden: Linear<S>,
}

/// All weights of the denoiser plus the point-cloud encoder. The same
/// structure doubles as the gradient container and the Adam moment store.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams<S: Scalar> {
    pub encoder: Vec<Linear<S>>,
    pub cloud_proj: Linear<S>,
    pub ctx_proj: Linear<S>,
    pub grasp_in: Linear<S>,
    pub blocks: Vec<ResBlockParams<S>>,
    pub head: Linear<S>,
}

/// Grasp input width: flattened 3x3 rotation plus translation.
pub const GRASP_INPUT_DIM: usize = 12;
/// Output width: translation noise plus rotation tangent noise.
pub const OUTPUT_DIM: usize = 6;

impl<S: Scalar> DenoiserParams<S> {
    /// Kaiming-uniform hidden layers; the output head and every FiLM layer
    /// start at zero so each residual block begins as the identity and the
    /// step-0 prediction is unbiased.
    pub fn init<R: Rng + ?Sized>(cfg: &DenoiserConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut encoder = Vec::with_capacity(cfg.encoder_widths.len());
        let mut in_dim = 3;
        for &w in &cfg.encoder_widths {
            encoder.push(Linear::kaiming(w, in_dim, rng));
            in_dim = w;
        }
        let cloud_proj = Linear::kaiming(cfg.d_p, in_dim, rng);
        let ctx_proj = Linear::kaiming(cfg.d_p, cfg.d_p + cfg.d_i, rng);
        let grasp_in = Linear::kaiming(cfg.d_g, GRASP_INPUT_DIM, rng);
        let blocks = (0..cfg.n_r)
            .map(|_| ResBlockParams {
                film: Linear::zeros(2 * cfg.d_g, cfg.d_p),
                hidden: Linear::kaiming(cfg.d_g, cfg.d_g, rng),
            })
            .collect();
        let head = Linear::zeros(OUTPUT_DIM, cfg.d_g);
        Ok(DenoiserParams {
            encoder,
            cloud_proj,
            ctx_proj,
            grasp_in,
            blocks,
            head,
        })
    }

    /// Same shapes, all zeros (gradient / moment container).
    pub fn zeros_like(&self) -> Self {
        let zl = |l: &Linear<S>| Linear::zeros(l.w.nrows(), l.w.ncols());
        DenoiserParams {
            encoder: self.encoder.iter().map(zl).collect(),
            cloud_proj: zl(&self.cloud_proj),
            ctx_proj: zl(&self.ctx_proj),
            grasp_in: zl(&self.grasp_in),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResBlockParams {
                    film: zl(&b.film),
                    hidden: zl(&b.hidden),
                })
                .collect(),
            head: zl(&self.head),
        }
    }

    /// Named layers in a stable order (checkpoint and traversal order).
    pub fn linears(&self) -> Vec<(String, &Linear<S>)> {
        let mut v = Vec::new();
        for (k, l) in self.encoder.iter().enumerate() {
            v.push((format!("encoder.{k}"), l));
        }
        v.push(("cloud_proj".to_string(), &self.cloud_proj));
        v.push(("ctx_proj".to_string(), &self.ctx_proj));
        v.push(("grasp_in".to_string(), &self.grasp_in));
        for (k, b) in self.blocks.iter().enumerate() {
            v.push((format!("blocks.{k}.film"), &b.film));
            v.push((format!("blocks.{k}.hidden"), &b.hidden));
        }
        v.push(("head".to_string(), &self.head));
        v
    }

    pub fn linears_mut(&mut self) -> Vec<(String, &mut Linear<S>)> {
        let mut v: Vec<(String, &mut Linear<S>)> = Vec::new();
        for (k, l) in self.encoder.iter_mut().enumerate() {
            v.push((format!("encoder.{k}"), l));
        }
        v.push(("cloud_proj".to_string(), &mut self.cloud_proj));
        v.push(("ctx_proj".to_string(), &mut self.ctx_proj));
        v.push(("grasp_in".to_string(), &mut self.grasp_in));
        for (k, b) in self.blocks.iter_mut().enumerate() {
            v.push((format!("blocks.{k}.film"), &mut b.film));
            v.push((format!("blocks.{k}.hidden"), &mut b.hidden));
        }
        v.push(("head".to_string(), &mut self.head));
        v
    }

    /// Adds `other` (same shapes) in place; used to reduce batch-parallel
    /// partial gradients into one accumulator.
    pub fn add_assign(&mut self, other: &Self) {
        let mut mine = self.linears_mut();
        let theirs = other.linears();
        assert_eq!(mine.len(), theirs.len());
        for ((_, a), (_, b)) in mine.iter_mut().zip(theirs.iter()) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.linears().iter().all(|(_, l)| {
            l.w.iter().all(|x| x.is_finite()) && l.b.iter().all(|x| x.is_finite())
        })
    }
}

/// Adam first/second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    pub m: DenoiserParams<S>,
    pub v: DenoiserParams<S>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &DenoiserParams<S>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update.
pub fn adam_step<S: Scalar>(
    params: &mut DenoiserParams<S>,
    grads: &DenoiserParams<S>,
    state: &mut AdamState<S>,
    lr: S,
) {
    state.t += 1;
    let b1 = S::from_f64_lossy(ADAM_BETA1);
    let b2 = S::from_f64_lossy(ADAM_BETA2);
    let eps = S::from_f64_lossy(ADAM_EPS);
    let corr1 = S::one() - S::from_f64_lossy(ADAM_BETA1.powi(state.t as i32));
    let corr2 = S::one() - S::from_f64_lossy(ADAM_BETA2.powi(state.t as i32));
    let mut ps = params.linears_mut();
    let gs = grads.linears();
    let mut ms = state.m.linears_mut();
    let mut vs = state.v.linears_mut();
    for k in 0..ps.len() {
        let (p, g, m, v) = (&mut ps[k].1, &gs[k].1, &mut ms[k].1, &mut vs[k].1);
        let update = |p: &mut S, g: S, m: &mut S, v: &mut S| {
            *m = b1 * *m + (S::one() - b1) * g;
            *v = b2 * *v + (S::one() - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (pw, (gw, (mw, vw))) in p
            .w
            .iter_mut()
            .zip(g.w.iter().zip(m.w.iter_mut().zip(v.w.iter_mut())))
        {
            update(pw, *gw, mw, vw);
        }
        for (pb, (gb, (mb, vb))) in p
            .b
            .iter_mut()
            .zip(g.b.iter().zip(m.b.iter_mut().zip(v.b.iter_mut())))
        {
            update(pb, *gb, mb, vb);
        }
    }
}
