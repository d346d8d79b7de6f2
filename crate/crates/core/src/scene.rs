//! Synthetic scenes: primitive objects, analytic partial-cloud rendering,
//! antipodal grasp generation, translation normalization, and an analytic
//! grasp-success oracle.
//!
//! Objects are axis-aligned primitives in their own frame (cylinder axis =
//! local z) placed in the world by a rigid pose. Everything here is exact:
//! rendered points lie on the analytic surface, the oracle is a geometric
//! predicate, and rigidly moving object and grasp together never changes a
//! verdict.

use rand::Rng;

use crate::geometry::{exp_so3, GraspPose, Rotation};
use crate::guidance::{gripper_spheres, GripperModel};
use crate::{Error, Result, Scalar, Vec3};

/// Primitive shape in its local frame, centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectKind<S: Scalar> {
    /// Axis-aligned box with full extents (width, depth, height).
    Box { width: S, depth: S, height: S },
    /// Cylinder with axis along local z.
    Cylinder { radius: S, height: S },
}

impl<S: Scalar> ObjectKind<S> {
    pub fn validate(&self) -> Result<()> {
        let desk = S::from_f64_lossy(0.3);
        let ok = match *self {
            ObjectKind::Box { width, depth, height } => {
                width > S::zero()
                    && depth > S::zero()
                    && height > S::zero()
                    && width <= desk
                    && depth <= desk
                    && height <= desk
            }
            ObjectKind::Cylinder { radius, height } => {
                radius > S::zero()
                    && height > S::zero()
                    && radius + radius <= desk
                    && height <= desk
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("object dimensions must be positive and desk-scale (<= 0.3 m)"))
        }
    }
}

/// A primitive object placed in the world.
#[derive(Debug, Clone, Copy)]
pub struct ObjectModel<S: Scalar> {
    pub kind: ObjectKind<S>,
    pub pose: GraspPose<S>,
}

impl<S: Scalar> ObjectModel<S> {
    pub fn new(kind: ObjectKind<S>, pose: GraspPose<S>) -> Result<Self> {
        kind.validate()?;
        Ok(ObjectModel { kind, pose })
    }

    /// Signed distance from a world point to the object surface
    /// (negative inside). Exact for both primitives.
    pub fn sdf(&self, world: &Vec3<S>) -> S {
        let p = self.pose.inverse().apply(world);
        match self.kind {
            ObjectKind::Box { width, depth, height } => {
                let half = Vec3::new(width, depth, height) * S::from_f64_lossy(0.5);
                let q = Vec3::new(p.x.abs() - half.x, p.y.abs() - half.y, p.z.abs() - half.z);
                let outside = Vec3::new(q.x.max(S::zero()), q.y.max(S::zero()), q.z.max(S::zero()));
                let inside = q.x.max(q.y).max(q.z).min(S::zero());
                outside.norm() + inside
            }
            ObjectKind::Cylinder { radius, height } => {
                let half_h = height * S::from_f64_lossy(0.5);
                let dr = (p.x * p.x + p.y * p.y).sqrt() - radius;
                let dz = p.z.abs() - half_h;
                let (or, oz) = (dr.max(S::zero()), dz.max(S::zero()));
                let outside = (or * or + oz * oz).sqrt();
                let inside = dr.max(dz).min(S::zero());
                outside + inside
            }
        }
    }

    /// Outward surface normal (world frame) at a world point on or near the
    /// surface.
    pub fn normal_at(&self, world: &Vec3<S>) -> Vec3<S> {
        let p = self.pose.inverse().apply(world);
        let n_local = match self.kind {
            ObjectKind::Box { width, depth, height } => {
                let half = Vec3::new(width, depth, height) * S::from_f64_lossy(0.5);
                // Closest face by smallest slack.
                let slack = [
                    (half.x - p.x.abs(), 0usize),
                    (half.y - p.y.abs(), 1),
                    (half.z - p.z.abs(), 2),
                ];
                let &(_, axis) = slack
                    .iter()
                    .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                    .unwrap();
                let mut n = Vec3::zeros();
                n[axis] = if p[axis] >= S::zero() { S::one() } else { -S::one() };
                n
            }
            ObjectKind::Cylinder { radius, height } => {
                let half_h = height * S::from_f64_lossy(0.5);
                let r = (p.x * p.x + p.y * p.y).sqrt();
                let side_slack = (radius - r).abs();
                let cap_slack = (half_h - p.z.abs()).abs();
                if side_slack <= cap_slack && r > S::from_f64_lossy(1e-12) {
                    Vec3::new(p.x / r, p.y / r, S::zero())
                } else {
                    Vec3::new(S::zero(), S::zero(), if p.z >= S::zero() { S::one() } else { -S::one() })
                }
            }
        };
        self.pose.rotation.apply(&n_local)
    }

    /// First intersection of a world-frame ray with the object: returns the
    /// ray parameter `t >= 1e-9` and the world hit point.
    pub fn ray_intersect(&self, origin: &Vec3<S>, dir: &Vec3<S>) -> Option<(S, Vec3<S>)> {
        let inv = self.pose.inverse();
        let o = inv.apply(origin);
        let d = inv.rotation.apply(dir);
        let t = match self.kind {
            ObjectKind::Box { width, depth, height } => {
                let half = [width, depth, height].map(|e| e * S::from_f64_lossy(0.5));
                let mut t_near = S::from_f64_lossy(-1e30);
                let mut t_far = S::from_f64_lossy(1e30);
                for a in 0..3 {
                    if d[a].abs() < S::from_f64_lossy(1e-14) {
                        if o[a].abs() > half[a] {
                            return None;
                        }
                        continue;
                    }
                    let mut t0 = (-half[a] - o[a]) / d[a];
                    let mut t1 = (half[a] - o[a]) / d[a];
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    t_near = t_near.max(t0);
                    t_far = t_far.min(t1);
                    if t_near > t_far {
                        return None;
                    }
                }
                let eps = S::from_f64_lossy(1e-9);
                if t_near >= eps {
                    t_near
                } else if t_far >= eps {
                    t_far
                } else {
                    return None;
                }
            }
            ObjectKind::Cylinder { radius, height } => {
                let half_h = height * S::from_f64_lossy(0.5);
                let eps = S::from_f64_lossy(1e-9);
                let mut best: Option<S> = None;
                let mut consider = |t: S| {
                    if t >= eps && best.map_or(true, |b| t < b) {
                        best = Some(t);
                    }
                };
                // Lateral surface: (ox + t dx)^2 + (oy + t dy)^2 = r^2.
                let a = d.x * d.x + d.y * d.y;
                if a > S::from_f64_lossy(1e-14) {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= S::zero() {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / a, (-b + sq) / a] {
                            let z = o.z + t * d.z;
                            if z.abs() <= half_h {
                                consider(t);
                            }
                        }
                    }
                }
                // Caps.
                if d.z.abs() > S::from_f64_lossy(1e-14) {
                    for zcap in [half_h, -half_h] {
                        let t = (zcap - o.z) / d.z;
                        let (x, y) = (o.x + t * d.x, o.y + t * d.y);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best?
            }
        };
        Some((t, origin + dir * t))
    }
}

/// Pinhole camera with a pixel grid; rays go through pixel centers.
#[derive(Debug, Clone, Copy)]
pub struct VirtualCamera<S: Scalar> {
    pub position: Vec3<S>,
    pub look_at: Vec3<S>,
    pub width: usize,
    pub height: usize,
    /// Vertical field of view, radians.
    pub fov: S,
}

impl<S: Scalar> VirtualCamera<S> {
    pub fn new(position: Vec3<S>, look_at: Vec3<S>, width: usize, height: usize, fov: S) -> Result<Self> {
        if (position - look_at).norm() < S::from_f64_lossy(1e-9) {
            return Err(Error::invalid("camera position must differ from look-at"));
        }
        if width == 0 || height == 0 || fov <= S::zero() {
            return Err(Error::invalid("camera needs positive resolution and fov"));
        }
        Ok(VirtualCamera { position, look_at, width, height, fov })
    }

    fn basis(&self) -> (Vec3<S>, Vec3<S>, Vec3<S>) {
        let forward = (self.look_at - self.position).normalize();
        let mut up = Vec3::new(S::zero(), S::zero(), S::one());
        if forward.cross(&up).norm() < S::from_f64_lossy(1e-6) {
            up = Vec3::new(S::one(), S::zero(), S::zero());
        }
        let right = forward.cross(&up).normalize();
        let cam_up = right.cross(&forward);
        (forward, right, cam_up)
    }

    /// Ray direction through the center of pixel `(ix, iy)`.
    pub fn ray(&self, ix: usize, iy: usize) -> Vec3<S> {
        let (forward, right, up) = self.basis();
        let tan = (self.fov * S::from_f64_lossy(0.5)).tan();
        let aspect = S::from_usize_lossy(self.width) / S::from_usize_lossy(self.height);
        let u = (S::from_usize_lossy(ix) + S::from_f64_lossy(0.5)) / S::from_usize_lossy(self.width);
        let v = (S::from_usize_lossy(iy) + S::from_f64_lossy(0.5)) / S::from_usize_lossy(self.height);
        let x = (u + u - S::one()) * tan * aspect;
        let y = (S::one() - (v + v)) * tan;
        (forward + right * x + up * y).normalize()
    }
}

/// Deterministic farthest-point downsampling to `n` points; the start index
/// is drawn from `rng`.
pub fn farthest_point_downsample<S: Scalar, R: Rng + ?Sized>(
    points: &[Vec3<S>],
    n: usize,
    rng: &mut R,
) -> Vec<Vec3<S>> {
    assert!(n <= points.len());
    let mut selected = Vec::with_capacity(n);
    let mut dist = vec![S::from_f64_lossy(f64::INFINITY); points.len()];
    let mut current = rng.random_range(0..points.len());
    for _ in 0..n {
        selected.push(points[current]);
        let cp = points[current];
        let mut next = 0usize;
        let mut best = S::from_f64_lossy(-1.0);
        for (k, p) in points.iter().enumerate() {
            let d = (p - cp).norm_squared().min(dist[k]);
            dist[k] = d;
            if d > best {
                best = d;
                next = k;
            }
        }
        current = next;
    }
    selected
}

/// Renders a partial point cloud: nearest analytic hit per pixel ray, then
/// farthest-point downsampling to exactly `n` points (world frame).
pub fn render_partial_cloud<S: Scalar, R: Rng + ?Sized>(
    object: &ObjectModel<S>,
    camera: &VirtualCamera<S>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec3<S>>> {
    let mut hits = Vec::new();
    for iy in 0..camera.height {
        for ix in 0..camera.width {
            let dir = camera.ray(ix, iy);
            if let Some((_, p)) = object.ray_intersect(&camera.position, &dir) {
                hits.push(p);
            }
        }
    }
    if hits.is_empty() {
        return Err(Error::EmptyView);
    }
    if hits.len() < n {
        return Err(Error::invalid(format!(
            "only {} surface hits for a {n}-point cloud; move the camera closer or raise resolution",
            hits.len()
        )));
    }
    Ok(farthest_point_downsample(&hits, n, rng))
}

/// Area-weighted surface samples of the object (world frame); used for
/// collision consistency checks against the full surface.
pub fn surface_points<S: Scalar, R: Rng + ?Sized>(
    object: &ObjectModel<S>,
    count: usize,
    rng: &mut R,
) -> Vec<Vec3<S>> {
    let mut out = Vec::with_capacity(count);
    match object.kind {
        ObjectKind::Box { width, depth, height } => {
            let (w, d, h) = (width.to_f64_lossy(), depth.to_f64_lossy(), height.to_f64_lossy());
            let areas = [d * h, d * h, w * h, w * h, w * d, w * d];
            let total: f64 = areas.iter().sum();
            for _ in 0..count {
                let mut pick = rng.random_range(0.0..total);
                let mut face = 0usize;
                for (k, a) in areas.iter().enumerate() {
                    if pick < *a {
                        face = k;
                        break;
                    }
                    pick -= a;
                }
                let (u, v) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                let p = match face {
                    0 => Vec3::new(w / 2.0, u * d, v * h),
                    1 => Vec3::new(-w / 2.0, u * d, v * h),
                    2 => Vec3::new(u * w, d / 2.0, v * h),
                    3 => Vec3::new(u * w, -d / 2.0, v * h),
                    4 => Vec3::new(u * w, v * d, h / 2.0),
                    _ => Vec3::new(u * w, v * d, -h / 2.0),
                };
                out.push(object.pose.apply(&Vec3::new(
                    S::from_f64_lossy(p.x),
                    S::from_f64_lossy(p.y),
                    S::from_f64_lossy(p.z),
                )));
            }
        }
        ObjectKind::Cylinder { radius, height } => {
            let (r, h) = (radius.to_f64_lossy(), height.to_f64_lossy());
            let side = 2.0 * std::f64::consts::PI * r * h;
            let cap = std::f64::consts::PI * r * r;
            let total = side + 2.0 * cap;
            for _ in 0..count {
                let pick = rng.random_range(0.0..total);
                let p = if pick < side {
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    let z = rng.random_range(-0.5..0.5) * h;
                    [r * phi.cos(), r * phi.sin(), z]
                } else {
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    let rr = r * rng.random_range(0.0f64..1.0).sqrt();
                    let z = if pick < side + cap { h / 2.0 } else { -h / 2.0 };
                    [rr * phi.cos(), rr * phi.sin(), z]
                };
                out.push(object.pose.apply(&Vec3::new(
                    S::from_f64_lossy(p[0]),
                    S::from_f64_lossy(p[1]),
                    S::from_f64_lossy(p[2]),
                )));
            }
        }
    }
    out
}

/// A grasp candidate with its oracle verdict.
#[derive(Debug, Clone, Copy)]
pub struct LabeledGrasp<S: Scalar> {
    pub pose: GraspPose<S>,
    pub success: bool,
}

/// Grasp-generation knobs.
#[derive(Debug, Clone)]
pub struct GraspGenConfig {
    /// Gripper aperture (free width between finger surfaces), meters.
    pub opening: f64,
    /// Restrict side-grasp closing azimuths to this many world-frame modes.
    pub azimuth_modes: Option<u32>,
    /// Fraction of candidates perturbed off the clean antipodal solution.
    pub perturbed_fraction: f64,
    /// Clearance kept between gripper spheres and the surface, meters
    /// (matched to the collision-sphere radius of the cloud).
    pub clearance: f64,
    /// Minimum fraction of success-labeled grasps per scene.
    pub min_positive_fraction: f64,
    /// Re-draw attempts before giving up on the balance requirement.
    pub max_attempts: usize,
}

impl Default for GraspGenConfig {
    fn default() -> Self {
        GraspGenConfig {
            opening: 0.08,
            azimuth_modes: None,
            perturbed_fraction: 0.3,
            clearance: crate::guidance::DEFAULT_CLOUD_SPHERE_RADIUS,
            min_positive_fraction: 0.3,
            max_attempts: 20,
        }
    }
}

/// Largest object span a clean grasp may close over.
fn max_clean_span(cfg: &GraspGenConfig) -> f64 {
    cfg.opening - 2.0 * (cfg.clearance + 0.002)
}

/// Antipodal grasp candidates with oracle labels. Both successful and
/// failing candidates are emitted; the generator retries until at least
/// `min_positive_fraction` of them are labeled successful.
pub fn generate_grasps<S: Scalar, R: Rng + ?Sized>(
    object: &ObjectModel<S>,
    count: usize,
    cfg: &GraspGenConfig,
    gripper: &GripperModel<S>,
    rng: &mut R,
) -> Result<Vec<LabeledGrasp<S>>> {
    if count == 0 {
        return Err(Error::invalid("generate_grasps: count must be >= 1"));
    }
    feasibility_check(object, cfg)?;
    for _ in 0..cfg.max_attempts {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let clean = clean_candidate(object, cfg, rng)?;
            let pose = if rng.random_range(0.0..1.0) < cfg.perturbed_fraction {
                perturb(&clean, rng)
            } else {
                clean
            };
            let success = success_oracle(object, &pose, S::from_f64_lossy(cfg.opening), gripper, S::from_f64_lossy(cfg.clearance));
            out.push(LabeledGrasp { pose, success });
        }
        let positives = out.iter().filter(|g| g.success).count();
        if positives as f64 / count as f64 >= cfg.min_positive_fraction {
            return Ok(out);
        }
    }
    Err(Error::NoFeasibleGrasp(format!(
        "could not reach {:.0}% successful grasps in {} attempts",
        cfg.min_positive_fraction * 100.0,
        cfg.max_attempts
    )))
}

fn feasibility_check<S: Scalar>(object: &ObjectModel<S>, cfg: &GraspGenConfig) -> Result<()> {
    let max_span = max_clean_span(cfg);
    let feasible = match object.kind {
        ObjectKind::Box { width, depth, height } => {
            [width, depth, height].iter().any(|d| d.to_f64_lossy() <= max_span)
        }
        ObjectKind::Cylinder { radius, height } => {
            2.0 * radius.to_f64_lossy() <= max_span || height.to_f64_lossy() <= max_span
        }
    };
    if feasible {
        Ok(())
    } else {
        Err(Error::NoFeasibleGrasp(format!(
            "every object span exceeds the {max_span:.3} m usable aperture"
        )))
    }
}

/// Rotation whose columns are the gripper axes in the world: x = closing,
/// z = approach, y = z cross x.
fn frame_from_axes<S: Scalar>(closing: &Vec3<S>, approach: &Vec3<S>) -> Rotation<S> {
    let x = closing.normalize();
    let z = (approach - x * approach.dot(&x)).normalize();
    let y = z.cross(&x);
    Rotation::from_matrix_unchecked(crate::Mat3::from_columns(&[x, y, z]))
}

fn clean_candidate<S: Scalar, R: Rng + ?Sized>(
    object: &ObjectModel<S>,
    cfg: &GraspGenConfig,
    rng: &mut R,
) -> Result<GraspPose<S>> {
    let max_span = max_clean_span(cfg);
    // Depth budget from the entry face before the palm hits the surface.
    let palm_reach = 0.060 - 0.020 - cfg.clearance - 0.002;
    match object.kind {
        ObjectKind::Box { width, depth, height } => {
            let dims = [width.to_f64_lossy(), depth.to_f64_lossy(), height.to_f64_lossy()];
            let feasible: Vec<usize> =
                (0..3).filter(|&k| dims[k] <= max_span).collect();
            let k = feasible[rng.random_range(0..feasible.len())];
            // Approach along one of the other two axes, either sign.
            let others = [(k + 1) % 3, (k + 2) % 3];
            let a_axis = others[rng.random_range(0..2)];
            let b_axis = if others[0] == a_axis { others[1] } else { others[0] };
            let a_sign = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
            let half_a = dims[a_axis] / 2.0;
            let depth_max = palm_reach.min(2.0 * half_a - 0.002).max(0.002);
            let depth_in = rng.random_range(0.002..depth_max.max(0.0021));
            let half_b = dims[b_axis] / 2.0;
            let inset = (0.15 * dims[b_axis]).max(0.002);
            let b_coord = if half_b > inset {
                rng.random_range(-(half_b - inset)..(half_b - inset))
            } else {
                0.0
            };
            let mut center_local = [0.0f64; 3];
            center_local[a_axis] = a_sign * (half_a - depth_in);
            center_local[b_axis] = b_coord;
            let mut closing_local = [0.0f64; 3];
            closing_local[k] = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
            let mut approach_local = [0.0f64; 3];
            approach_local[a_axis] = -a_sign; // travel toward the entry face
            let center = object.pose.apply(&vec3_from(center_local));
            let closing = object.pose.rotation.apply(&vec3_from(closing_local));
            let approach = object.pose.rotation.apply(&vec3_from(approach_local));
            Ok(GraspPose::new(center, frame_from_axes(&closing, &approach)))
        }
        ObjectKind::Cylinder { radius, height } => {
            let r = radius.to_f64_lossy();
            let h = height.to_f64_lossy();
            let axis_w = object.pose.rotation.apply(&Vec3::new(S::zero(), S::zero(), S::one()));
            let side_ok = 2.0 * r <= max_span;
            let cap_ok = h <= max_span && r <= palm_reach && cfg.azimuth_modes.is_none();
            let use_side = side_ok && (!cap_ok || rng.random_range(0..4) != 0);
            if use_side {
                // Closing along a world-frame azimuth, projected to the
                // plane perpendicular to the cylinder axis.
                let phi = match cfg.azimuth_modes {
                    Some(m) if m > 0 => {
                        let mode = rng.random_range(0..m);
                        mode as f64 * std::f64::consts::TAU / m as f64
                            + rng.random_range(-0.1..0.1)
                    }
                    _ => rng.random_range(0.0..std::f64::consts::TAU),
                };
                let u_raw = Vec3::new(
                    S::from_f64_lossy(phi.cos()),
                    S::from_f64_lossy(phi.sin()),
                    S::zero(),
                );
                let mut u = u_raw - axis_w * u_raw.dot(&axis_w);
                if u.norm().to_f64_lossy() < 1e-6 {
                    u = axis_w.cross(&Vec3::new(S::one(), S::zero(), S::zero()));
                }
                u = u.normalize();
                let v = {
                    let s = if rng.random_range(0..2) == 0 { S::one() } else { -S::one() };
                    axis_w.cross(&u) * s
                };
                let z_c = rng.random_range(-(h / 2.0 - 0.005)..(h / 2.0 - 0.005));
                let center = object.pose.apply(&Vec3::new(S::zero(), S::zero(), S::from_f64_lossy(z_c)));
                Ok(GraspPose::new(center, frame_from_axes(&u, &v)))
            } else if cap_ok {
                // Close over the caps; approach radially.
                let psi = rng.random_range(0.0..std::f64::consts::TAU);
                let radial = object.pose.rotation.apply(&Vec3::new(
                    S::from_f64_lossy(psi.cos()),
                    S::from_f64_lossy(psi.sin()),
                    S::zero(),
                ));
                let sign = if rng.random_range(0..2) == 0 { S::one() } else { -S::one() };
                let center = object.pose.translation;
                Ok(GraspPose::new(center, frame_from_axes(&(axis_w * sign), &radial)))
            } else {
                Err(Error::NoFeasibleGrasp("cylinder has no graspable span".into()))
            }
        }
    }
}

fn vec3_from<S: Scalar>(a: [f64; 3]) -> Vec3<S> {
    Vec3::new(
        S::from_f64_lossy(a[0]),
        S::from_f64_lossy(a[1]),
        S::from_f64_lossy(a[2]),
    )
}

fn perturb<S: Scalar, R: Rng + ?Sized>(g: &GraspPose<S>, rng: &mut R) -> GraspPose<S> {
    let dt = Vec3::new(
        S::from_f64_lossy(rng.random_range(-0.025..0.025)),
        S::from_f64_lossy(rng.random_range(-0.025..0.025)),
        S::from_f64_lossy(rng.random_range(-0.025..0.025)),
    );
    let axis = Vec3::new(
        rng.random_range(-1.0..1.0f64),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(0.0..0.35f64);
    let dv = if axis.norm() > 1e-6 {
        axis / axis.norm() * angle
    } else {
        Vec3::zeros()
    };
    let drot = exp_so3(&vec3_from::<S>([dv.x, dv.y, dv.z])).expect("finite perturbation");
    GraspPose::new(g.translation + dt, drot.compose(&g.rotation))
}

/// Analytic grasp-success predicate.
///
/// True iff (a) the closing rays cast inward from both fingertips hit the
/// object within the aperture with surface normals facing the fingers and
/// antipodal to each other (cosine < -0.95), (b) the contact span is below
/// the aperture, and (c) no gripper sphere intrudes on the surface
/// inflated by `clearance`, beyond a 1e-4 m tolerance. The inflation is
/// what ties the oracle to the sphere-based collision cost: a grasp it
/// accepts has zero collision cost against surface samples of the object
/// at that sphere radius.
pub fn success_oracle<S: Scalar>(
    object: &ObjectModel<S>,
    g: &GraspPose<S>,
    opening: S,
    gripper: &GripperModel<S>,
    clearance: S,
) -> bool {
    let half_open = opening * S::from_f64_lossy(0.5);
    let closing = g.rotation.apply(&Vec3::new(S::one(), S::zero(), S::zero()));
    let o_plus = g.apply(&Vec3::new(half_open, S::zero(), S::zero()));
    let o_minus = g.apply(&Vec3::new(-half_open, S::zero(), S::zero()));

    let hit_plus = object.ray_intersect(&o_plus, &(-closing));
    let hit_minus = object.ray_intersect(&o_minus, &closing);
    let (Some((t_p, p_plus)), Some((t_m, p_minus))) = (hit_plus, hit_minus) else {
        return false;
    };
    // Contacts must lie between the fingers.
    if t_p > opening || t_m > opening {
        return false;
    }
    let n_plus = object.normal_at(&p_plus);
    let n_minus = object.normal_at(&p_minus);
    // Surfaces must face the incoming fingers and oppose each other.
    if n_plus.dot(&-closing) >= S::zero() || n_minus.dot(&closing) >= S::zero() {
        return false;
    }
    if n_plus.dot(&n_minus) >= S::from_f64_lossy(-0.95) {
        return false;
    }
    if (p_plus - p_minus).norm() >= opening {
        return false;
    }
    // No sphere may intrude on the clearance-inflated surface.
    let posed = gripper_spheres(g, gripper);
    let tol = S::from_f64_lossy(1e-4);
    for (center, radius) in posed.centers.iter().zip(&posed.radii) {
        if object.sdf(center) < *radius + clearance - tol {
            return false;
        }
    }
    true
}

/// A scene after normalization: cloud and grasp translations mapped into
/// `[-1, 1]` by subtracting the cloud centroid and dividing by the max-abs
/// extent. `center` and `scale` invert the map exactly.
#[derive(Debug, Clone)]
pub struct SceneRecord<S: Scalar> {
    pub object: ObjectModel<S>,
    pub camera: VirtualCamera<S>,
    /// Normalized cloud.
    pub cloud: Vec<Vec3<S>>,
    pub center: Vec3<S>,
    pub scale: S,
    /// Grasps in the normalized frame (rotations untouched).
    pub grasps: Vec<GraspPose<S>>,
    pub labels: Vec<bool>,
}

impl<S: Scalar> SceneRecord<S> {
    pub fn denormalize_point(&self, p: &Vec3<S>) -> Vec3<S> {
        p * self.scale + self.center
    }

    pub fn normalize_point(&self, p: &Vec3<S>) -> Vec3<S> {
        (p - self.center) / self.scale
    }

    pub fn denormalize_pose(&self, g: &GraspPose<S>) -> GraspPose<S> {
        GraspPose::new(self.denormalize_point(&g.translation), g.rotation)
    }

    pub fn normalize_pose(&self, g: &GraspPose<S>) -> GraspPose<S> {
        GraspPose::new(self.normalize_point(&g.translation), g.rotation)
    }

    /// World-frame cloud (denormalized).
    pub fn cloud_world(&self) -> Vec<Vec3<S>> {
        self.cloud.iter().map(|p| self.denormalize_point(p)).collect()
    }

    /// Success-labeled grasps in the normalized frame.
    pub fn positive_grasps(&self) -> Vec<GraspPose<S>> {
        self.grasps
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l)
            .map(|(g, _)| *g)
            .collect()
    }
}

/// Normalization output of [`normalize_scene`].
pub struct NormalizedScene<S: Scalar> {
    pub cloud: Vec<Vec3<S>>,
    pub grasps: Vec<GraspPose<S>>,
    pub center: Vec3<S>,
    pub scale: S,
}

/// Subtracts the cloud centroid and rescales by the max-abs coordinate so
/// cloud coordinates land in `[-1, 1]`; grasp translations get the same
/// map. The `(center, scale)` pair inverts the map exactly.
pub fn normalize_scene<S: Scalar>(
    points: &[Vec3<S>],
    grasps: &[GraspPose<S>],
) -> Result<NormalizedScene<S>> {
    if points.is_empty() {
        return Err(Error::invalid("normalize_scene: empty cloud"));
    }
    let mut center = Vec3::zeros();
    for p in points {
        center += p;
    }
    center /= S::from_usize_lossy(points.len());
    let mut scale = S::zero();
    for p in points {
        let d = p - center;
        scale = scale.max(d.x.abs()).max(d.y.abs()).max(d.z.abs());
    }
    if scale < S::from_f64_lossy(1e-9) {
        return Err(Error::invalid("normalize_scene: degenerate cloud (all points identical)"));
    }
    Ok(NormalizedScene {
        cloud: points.iter().map(|p| (p - center) / scale).collect(),
        grasps: grasps
            .iter()
            .map(|g| GraspPose::new((g.translation - center) / scale, g.rotation))
            .collect(),
        center,
        scale,
    })
}

/// Renders, generates labeled grasps, and normalizes one scene.
pub fn synthesize_scene<S: Scalar, R: Rng + ?Sized>(
    object: ObjectModel<S>,
    camera: VirtualCamera<S>,
    n_points: usize,
    grasp_count: usize,
    cfg: &GraspGenConfig,
    gripper: &GripperModel<S>,
    rng: &mut R,
) -> Result<SceneRecord<S>> {
    let cloud_world = render_partial_cloud(&object, &camera, n_points, rng)?;
    let labeled = generate_grasps(&object, grasp_count, cfg, gripper, rng)?;
    let poses: Vec<GraspPose<S>> = labeled.iter().map(|l| l.pose).collect();
    let labels: Vec<bool> = labeled.iter().map(|l| l.success).collect();
    let norm = normalize_scene(&cloud_world, &poses)?;
    Ok(SceneRecord {
        object,
        camera,
        cloud: norm.cloud,
        center: norm.center,
        scale: norm.scale,
        grasps: norm.grasps,
        labels,
    })
}
