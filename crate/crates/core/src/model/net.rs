//! Forward passes and explicit reverse-mode gradients for the denoiser.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DenoiserConfig, DenoiserParams, GRASP_INPUT_DIM, OUTPUT_DIM};
use crate::diffusion::{noise_rotation, noise_translation, Denoiser};
use crate::geometry::GraspPose;
use crate::igso3::CdfCache;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result, Scalar, Vec3, Vec6};

fn softplus<S: Scalar>(x: S) -> S {
    if x > S::from_f64_lossy(20.0) {
        x
    } else if x < S::from_f64_lossy(-20.0) {
        x.exp()
    } else {
        (S::one() + x.exp()).ln()
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

fn mish<S: Scalar>(x: S) -> S {
    x * softplus(x).tanh()
}

fn mish_deriv<S: Scalar>(x: S) -> S {
    let t = softplus(x).tanh();
    t + x * (S::one() - t * t) * sigmoid(x)
}

/// Interleaved sin/cos positional embedding of the diffusion index at
/// geometric frequencies with base 10^4. Deterministic; every component in
/// `[-1, 1]`; index 0 maps to alternating zeros and ones.
pub fn sinusoidal_embed<S: Scalar>(index: usize, d_i: usize) -> Result<DVector<S>> {
    if d_i == 0 || d_i % 2 != 0 {
        return Err(Error::invalid(format!(
            "sinusoidal embedding width must be even and positive, got {d_i}"
        )));
    }
    let mut out = DVector::zeros(d_i);
    let half = d_i / 2;
    for k in 0..half {
        let freq = (10_000.0f64).powf(-(2.0 * k as f64) / d_i as f64);
        let phase = index as f64 * freq;
        out[2 * k] = S::from_f64_lossy(phase.sin());
        out[2 * k + 1] = S::from_f64_lossy(phase.cos());
    }
    Ok(out)
}

struct EncoderTrace<S: Scalar> {
    /// Per-layer pre-activations, each `width x n_points`.
    pre: Vec<DMatrix<S>>,
    /// Per-layer post-activations; `post[0]` is the raw 3 x n input.
    post: Vec<DMatrix<S>>,
    pooled: DVector<S>,
    argmax: Vec<usize>,
}

fn encode_trace<S: Scalar>(
    points: &[Vec3<S>],
    params: &DenoiserParams<S>,
) -> Result<(EncoderTrace<S>, DVector<S>)> {
    if points.is_empty() {
        return Err(Error::invalid("encode_pointcloud: empty cloud"));
    }
    let n = points.len();
    let mut x = DMatrix::zeros(3, n);
    for (j, p) in points.iter().enumerate() {
        x[(0, j)] = p.x;
        x[(1, j)] = p.y;
        x[(2, j)] = p.z;
    }
    let mut pre = Vec::with_capacity(params.encoder.len());
    let mut post = vec![x];
    for layer in &params.encoder {
        let mut u = &layer.w * post.last().unwrap();
        for mut col in u.column_iter_mut() {
            col += &layer.b;
        }
        let activated = u.map(mish);
        pre.push(u);
        post.push(activated);
    }
    let last = post.last().unwrap();
    let width = last.nrows();
    let mut pooled = DVector::zeros(width);
    let mut argmax = vec![0usize; width];
    for ch in 0..width {
        let mut best = last[(ch, 0)];
        for j in 1..n {
            if last[(ch, j)] > best {
                best = last[(ch, j)];
                argmax[ch] = j;
            }
        }
        pooled[ch] = best;
    }
    let z_p = params.cloud_proj.forward(&pooled);
    Ok((
        EncoderTrace {
            pre,
            post,
            pooled,
            argmax,
        },
        z_p,
    ))
}

/// Permutation-invariant cloud embedding: shared per-point MLP, max pool,
/// linear projection.
pub fn encode_pointcloud<S: Scalar>(
    points: &[Vec3<S>],
    params: &DenoiserParams<S>,
) -> Result<DVector<S>> {
    encode_trace(points, params).map(|(_, z)| z)
}

fn encoder_backward<S: Scalar>(
    trace: &EncoderTrace<S>,
    params: &DenoiserParams<S>,
    d_zp: &DVector<S>,
    grads: &mut DenoiserParams<S>,
) {
    grads.cloud_proj.w += d_zp * trace.pooled.transpose();
    grads.cloud_proj.b += d_zp;
    let d_pooled = params.cloud_proj.w.transpose() * d_zp;
    // Max pooling routes each channel's gradient to its source point.
    let last = trace.post.last().unwrap();
    let mut d_post = DMatrix::zeros(last.nrows(), last.ncols());
    for ch in 0..last.nrows() {
        d_post[(ch, trace.argmax[ch])] += d_pooled[ch];
    }
    for layer_idx in (0..params.encoder.len()).rev() {
        let d_pre = d_post.zip_map(&trace.pre[layer_idx], |g, u| g * mish_deriv(u));
        grads.encoder[layer_idx].w += &d_pre * trace.post[layer_idx].transpose();
        for row in 0..d_pre.nrows() {
            let mut acc = S::zero();
            for col in 0..d_pre.ncols() {
                acc += d_pre[(row, col)];
            }
            grads.encoder[layer_idx].b[row] += acc;
        }
        if layer_idx > 0 {
            d_post = params.encoder[layer_idx].w.transpose() * d_pre;
        }
    }
}

fn grasp_input_vec<S: Scalar>(pose: &GraspPose<S>) -> DVector<S> {
    let mut v = DVector::zeros(GRASP_INPUT_DIM);
    let m = pose.rotation.matrix();
    for r in 0..3 {
        for c in 0..3 {
            v[3 * r + c] = m[(r, c)];
        }
    }
    v[9] = pose.translation.x;
    v[10] = pose.translation.y;
    v[11] = pose.translation.z;
    v
}

struct ForwardTrace<S: Scalar> {
    ctx_in: DVector<S>,
    c: DVector<S>,
    grasp_vec: DVector<S>,
    z0_pre: DVector<S>,
    /// `zs[k]` enters block `k`; `zs[n_r]` feeds the head.
    zs: Vec<DVector<S>>,
    h_pres: Vec<DVector<S>>,
    hs: Vec<DVector<S>>,
    films: Vec<DVector<S>>,
}

fn denoise_forward<S: Scalar>(
    pose: &GraspPose<S>,
    index: usize,
    z_p: &DVector<S>,
    params: &DenoiserParams<S>,
    cfg: &DenoiserConfig,
) -> Result<(ForwardTrace<S>, Vec6<S>)> {
    let z_i = sinusoidal_embed::<S>(index, cfg.d_i)?;
    let mut ctx_in = DVector::zeros(cfg.d_p + cfg.d_i);
    ctx_in.rows_mut(0, cfg.d_p).copy_from(z_p);
    ctx_in.rows_mut(cfg.d_p, cfg.d_i).copy_from(&z_i);
    let c = params.ctx_proj.forward(&ctx_in);

    let grasp_vec = grasp_input_vec(pose);
    let z0_pre = params.grasp_in.forward(&grasp_vec);
    let z0 = z0_pre.map(mish);

    let mut zs = vec![z0];
    let mut h_pres = Vec::with_capacity(cfg.n_r);
    let mut hs = Vec::with_capacity(cfg.n_r);
    let mut films = Vec::with_capacity(cfg.n_r);
    for block in &params.blocks {
        let z = zs.last().unwrap();
        let h_pre = block.hidden.forward(z);
        let h = h_pre.map(mish);
        let film = block.film.forward(&c);
        let a = film.rows(0, cfg.d_g);
        let b = film.rows(cfg.d_g, cfg.d_g);
        let z_next = z + a.component_mul(&h) + b;
        h_pres.push(h_pre);
        hs.push(h);
        films.push(film.clone_owned());
        zs.push(z_next);
    }
    let out_v = params.head.forward(zs.last().unwrap());
    let out = Vec6::new(out_v[0], out_v[1], out_v[2], out_v[3], out_v[4], out_v[5]);
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::Numeric("denoiser produced non-finite output".into()));
    }
    Ok((
        ForwardTrace {
            ctx_in,
            c,
            grasp_vec,
            z0_pre,
            zs,
            h_pres,
            hs,
            films,
        },
        out,
    ))
}

/// Backpropagates `d_out` through one forward trace, accumulating weight
/// gradients; returns the gradient with respect to the cloud embedding.
fn denoise_backward<S: Scalar>(
    trace: &ForwardTrace<S>,
    params: &DenoiserParams<S>,
    cfg: &DenoiserConfig,
    d_out: &Vec6<S>,
    grads: &mut DenoiserParams<S>,
) -> DVector<S> {
    let d_out_v = DVector::from_iterator(OUTPUT_DIM, d_out.iter().copied());
    grads.head.w += &d_out_v * trace.zs.last().unwrap().transpose();
    grads.head.b += &d_out_v;
    let mut dz = params.head.w.transpose() * &d_out_v;
    let mut dc = DVector::zeros(cfg.d_p);

    for k in (0..params.blocks.len()).rev() {
        let film = &trace.films[k];
        let a = film.rows(0, cfg.d_g);
        let h = &trace.hs[k];
        let da = dz.component_mul(h);
        let dbf = dz.clone();
        let dh = dz.component_mul(&a.clone_owned());
        let mut d_film = DVector::zeros(2 * cfg.d_g);
        d_film.rows_mut(0, cfg.d_g).copy_from(&da);
        d_film.rows_mut(cfg.d_g, cfg.d_g).copy_from(&dbf);
        grads.blocks[k].film.w += &d_film * trace.c.transpose();
        grads.blocks[k].film.b += &d_film;
        dc += params.blocks[k].film.w.transpose() * &d_film;

        let du = dh.zip_map(&trace.h_pres[k], |g, u| g * mish_deriv(u));
        grads.blocks[k].hidden.w += &du * trace.zs[k].transpose();
        grads.blocks[k].hidden.b += &du;
        // Residual connection plus the hidden path.
        dz += params.blocks[k].hidden.w.transpose() * &du;
    }

    let du0 = dz.zip_map(&trace.z0_pre, |g, u| g * mish_deriv(u));
    grads.grasp_in.w += &du0 * trace.grasp_vec.transpose();
    grads.grasp_in.b += &du0;

    grads.ctx_proj.w += &dc * trace.ctx_in.transpose();
    grads.ctx_proj.b += &dc;
    let d_ctx_in = params.ctx_proj.w.transpose() * &dc;
    d_ctx_in.rows(0, cfg.d_p).clone_owned()
}

/// Translation coordinates this far outside the normalized range indicate
/// data that skipped `normalize_scene`.
const NORMALIZED_RANGE_GUARD: f64 = 1.5;

/// Single-pose denoiser evaluation: the six-component noise estimate for a
/// normalized grasp at a diffusion index, conditioned on a cloud.
///
/// Rejects translations outside `[-1.5, 1.5]` to catch un-normalized
/// inputs; the sampler uses [`ModelDenoiser`], which skips that check
/// because intermediate chain states legitimately wander outside it.
pub fn denoise_eps<S: Scalar>(
    pose: &GraspPose<S>,
    index: usize,
    points: &[Vec3<S>],
    params: &DenoiserParams<S>,
    cfg: &DenoiserConfig,
) -> Result<Vec6<S>> {
    let guard = S::from_f64_lossy(NORMALIZED_RANGE_GUARD);
    if pose.translation.iter().any(|t| t.abs() > guard) {
        return Err(Error::invalid(format!(
            "translation {:?} outside [-{NORMALIZED_RANGE_GUARD}, {NORMALIZED_RANGE_GUARD}]: normalize the scene first",
            pose.translation
        )));
    }
    let z_p = encode_pointcloud(points, params)?;
    denoise_forward(pose, index, &z_p, params, cfg).map(|(_, out)| out)
}

/// A denoiser bound to one conditioning cloud; the cloud embedding is
/// computed once and reused across the whole reverse chain.
pub struct ModelDenoiser<'a, S: Scalar> {
    params: &'a DenoiserParams<S>,
    cfg: &'a DenoiserConfig,
    z_p: DVector<S>,
}

impl<'a, S: Scalar> ModelDenoiser<'a, S> {
    pub fn new(
        params: &'a DenoiserParams<S>,
        cfg: &'a DenoiserConfig,
        points: &[Vec3<S>],
    ) -> Result<Self> {
        let z_p = encode_pointcloud(points, params)?;
        Ok(ModelDenoiser { params, cfg, z_p })
    }
}

impl<S: Scalar> Denoiser<S> for ModelDenoiser<'_, S> {
    fn predict(&self, pose: &GraspPose<S>, index: usize) -> Result<Vec6<S>> {
        denoise_forward(pose, index, &self.z_p, self.params, self.cfg).map(|(_, out)| out)
    }
}

/// One scene's contribution to a training mini-batch.
pub struct SceneBatch<'a, S: Scalar> {
    pub cloud: &'a [Vec3<S>],
    pub grasps: &'a [GraspPose<S>],
}

/// A training sample with the noise draws already applied: the noisy pose
/// fed to the network and the regression target.
#[derive(Debug, Clone)]
pub struct PreparedSample<S: Scalar> {
    pub scene_idx: usize,
    /// 0-based network index (`i - 1` for schedule step `i`).
    pub time_index: usize,
    pub noisy: GraspPose<S>,
    pub target: Vec6<S>,
}

/// Mean squared norm of the six-component residual over prepared samples,
/// with gradients for every parameter tensor. Deterministic given the
/// samples; the noise-drawing wrapper is [`loss_and_grads`].
pub fn loss_and_grads_prepared<S: Scalar>(
    clouds: &[&[Vec3<S>]],
    samples: &[PreparedSample<S>],
    params: &DenoiserParams<S>,
    cfg: &DenoiserConfig,
) -> Result<(S, DenoiserParams<S>)> {
    if samples.is_empty() {
        return Err(Error::invalid("loss_and_grads: empty batch"));
    }
    let mut grads = params.zeros_like();
    let mut encoder_traces = Vec::with_capacity(clouds.len());
    let mut z_ps = Vec::with_capacity(clouds.len());
    for cloud in clouds {
        let (trace, z_p) = encode_trace(cloud, params)?;
        encoder_traces.push(trace);
        z_ps.push(z_p);
    }
    let mut d_zps: Vec<DVector<S>> = z_ps.iter().map(|z| DVector::zeros(z.len())).collect();
    let inv_b = S::one() / S::from_usize_lossy(samples.len());
    let two = S::from_f64_lossy(2.0);
    let mut loss = S::zero();
    for sample in samples {
        let scene = sample.scene_idx;
        if scene >= clouds.len() {
            return Err(Error::invalid("loss_and_grads: scene index out of range"));
        }
        let (trace, out) =
            denoise_forward(&sample.noisy, sample.time_index, &z_ps[scene], params, cfg)?;
        let residual = out - sample.target;
        loss += residual.norm_squared() * inv_b;
        let d_out = residual * (two * inv_b);
        let d_zp = denoise_backward(&trace, params, cfg, &d_out, &mut grads);
        d_zps[scene] += d_zp;
    }
    for (scene, trace) in encoder_traces.iter().enumerate() {
        encoder_backward(trace, params, &d_zps[scene], &mut grads);
    }
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Numeric("non-finite loss or gradients".into()));
    }
    Ok((loss, grads))
}

/// Draws diffusion indices and forward noise for a mini-batch of clean
/// grasps, then computes the loss and gradients. Clean grasp translations
/// must be normalized; coordinates beyond 1.5 are rejected.
pub fn loss_and_grads<S: Scalar, R: Rng + ?Sized>(
    batches: &[SceneBatch<'_, S>],
    schedule: &NoiseSchedule<S>,
    params: &DenoiserParams<S>,
    cfg: &DenoiserConfig,
    cache: &CdfCache,
    rng: &mut R,
) -> Result<(S, DenoiserParams<S>)> {
    let samples = prepare_batch(batches, schedule, cache, rng)?;
    let clouds: Vec<&[Vec3<S>]> = batches.iter().map(|b| b.cloud).collect();
    loss_and_grads_prepared(&clouds, &samples, params, cfg)
}

/// The noise-drawing half of [`loss_and_grads`], exposed so training can
/// be replayed deterministically from recorded draws.
pub fn prepare_batch<S: Scalar, R: Rng + ?Sized>(
    batches: &[SceneBatch<'_, S>],
    schedule: &NoiseSchedule<S>,
    cache: &CdfCache,
    rng: &mut R,
) -> Result<Vec<PreparedSample<S>>> {
    let guard = S::from_f64_lossy(NORMALIZED_RANGE_GUARD);
    let mut samples = Vec::new();
    for (scene_idx, batch) in batches.iter().enumerate() {
        for grasp in batch.grasps {
            if grasp.translation.iter().any(|t| t.abs() > guard) {
                return Err(Error::invalid(
                    "training grasp translation outside the normalized range",
                ));
            }
            let i = rng.random_range(1..=schedule.n());
            let eps_t = Vec3::new(
                S::from_f64_lossy(StandardNormal.sample(rng)),
                S::from_f64_lossy(StandardNormal.sample(rng)),
                S::from_f64_lossy(StandardNormal.sample(rng)),
            );
            let t_i = noise_translation(&grasp.translation, i, &eps_t, schedule);
            let (r_i, eps_r) = noise_rotation(&grasp.rotation, i, schedule, cache, rng)?;
            samples.push(PreparedSample {
                scene_idx,
                time_index: i - 1,
                noisy: GraspPose::new(t_i, r_i),
                target: Vec6::new(eps_t.x, eps_t.y, eps_t.z, eps_r.x, eps_r.y, eps_r.z),
            });
        }
    }
    Ok(samples)
}
