//! Evaluation metrics: earth mover's distance between grasp sets, collision
//! rate, and oracle success rate.
//!
//! The EMD ground metric mixes translation and rotation:
//! `|t1 - t2| + w * geodesic(R1, R2)` with `w` in meters per radian
//! (distances are computed in whatever frame the inputs share; the CLI uses
//! the normalized cloud frame with the default `w = 0.1`).

use rand::SeedableRng;

use crate::geometry::{geodesic_distance, GraspPose};
use crate::guidance::{collision_cost, GripperModel, SphereSet};
use crate::scene::{success_oracle, ObjectModel};
use crate::{Error, Result, Scalar};

/// Default rotation weight of the pose ground metric, meters per radian.
pub const DEFAULT_ROTATION_WEIGHT: f64 = 0.1;

/// Ground metric between two poses: `|t1 - t2| + w * geodesic(R1, R2)`.
pub fn pose_distance<S: Scalar>(a: &GraspPose<S>, b: &GraspPose<S>, w: S) -> S {
    (a.translation - b.translation).norm() + w * geodesic_distance(&a.rotation, &b.rotation)
}

/// Mean pairwise pose distance within a set; the spread measure used by the
/// low-temperature ablation.
pub fn mean_pairwise_distance<S: Scalar>(set: &[GraspPose<S>], w: S) -> S {
    if set.len() < 2 {
        return S::zero();
    }
    let mut acc = S::zero();
    let mut count = 0usize;
    for i in 0..set.len() {
        for j in (i + 1)..set.len() {
            acc += pose_distance(&set[i], &set[j], w);
            count += 1;
        }
    }
    acc / S::from_usize_lossy(count)
}

/// Earth mover's distance: the mean matched [`pose_distance`] under the
/// optimal one-to-one assignment (Hungarian algorithm). Unequal sizes are
/// resolved by uniformly subsampling the larger set with the given seed.
pub fn emd<S: Scalar>(a: &[GraspPose<S>], b: &[GraspPose<S>], w: S, seed: u64) -> Result<S> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("emd: both grasp sets must be nonempty"));
    }
    let n = a.len().min(b.len());
    let sub_a = subsample(a, n, seed);
    let sub_b = subsample(b, n, seed.wrapping_add(1));
    let mut cost = vec![vec![0.0f64; n]; n];
    for (i, ga) in sub_a.iter().enumerate() {
        for (j, gb) in sub_b.iter().enumerate() {
            cost[i][j] = pose_distance(ga, gb, w).to_f64_lossy();
        }
    }
    let assignment = hungarian(&cost);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .sum();
    Ok(S::from_f64_lossy(total / n as f64))
}

fn subsample<S: Scalar>(set: &[GraspPose<S>], n: usize, seed: u64) -> Vec<GraspPose<S>> {
    if set.len() == n {
        return set.to_vec();
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, set.len(), n)
        .into_iter()
        .map(|k| set[k])
        .collect()
}

/// Minimum-cost perfect matching on a square cost matrix; returns the
/// column assigned to each row. Shortest-augmenting-path formulation with
/// dual potentials, O(n^3).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    assert!(cost.iter().all(|row| row.len() == n));
    let inf = f64::INFINITY;
    // 1-indexed internals; p[j] is the row matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of grasps whose gripper spheres overlap the object spheres at
/// margin zero.
pub fn collision_rate<S: Scalar>(
    grasps: &[GraspPose<S>],
    obj: &SphereSet<S>,
    gripper: &GripperModel<S>,
) -> Result<S> {
    if grasps.is_empty() {
        return Err(Error::invalid("collision_rate: empty grasp list"));
    }
    let hits = grasps
        .iter()
        .filter(|g| collision_cost(g, gripper, obj, S::zero()) > S::zero())
        .count();
    Ok(S::from_usize_lossy(hits) / S::from_usize_lossy(grasps.len()))
}

/// Mean oracle verdict over a grasp list (world frame).
pub fn success_rate<S: Scalar>(
    grasps: &[GraspPose<S>],
    object: &ObjectModel<S>,
    opening: S,
    gripper: &GripperModel<S>,
    clearance: S,
) -> Result<S> {
    if grasps.is_empty() {
        return Err(Error::invalid("success_rate: empty grasp list"));
    }
    let wins = grasps
        .iter()
        .filter(|g| success_oracle(object, g, opening, gripper, clearance))
        .count();
    Ok(S::from_usize_lossy(wins) / S::from_usize_lossy(grasps.len()))
}

/// One evaluation result row; serialized as CSV by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scene_id: String,
    pub method: String,
    pub success_rate: f64,
    pub emd: f64,
    pub collision_rate: f64,
    pub wall_time_ms: u64,
}

impl ResultRow {
    pub const CSV_HEADER: &'static str =
        "scene_id,method,success_rate,emd,collision_rate,wall_time_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.scene_id,
            self.method,
            self.success_rate,
            self.emd,
            self.collision_rate,
            self.wall_time_ms
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.trim_end().split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Integrity(format!(
                "result row needs 6 fields, got {}",
                parts.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Integrity(format!("bad number {s:?}: {e}")))
        };
        Ok(ResultRow {
            scene_id: parts[0].to_string(),
            method: parts[1].to_string(),
            success_rate: num(parts[2])?,
            emd: num(parts[3])?,
            collision_rate: num(parts[4])?,
            wall_time_ms: parts[5]
                .parse()
                .map_err(|e| Error::Integrity(format!("bad wall time: {e}")))?,
        })
    }
}

/// Brute-force minimum assignment cost by permutation enumeration; the
/// factorial oracle for the Hungarian solver (sets of size <= ~8).
pub fn brute_force_min_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut cols, 0, &mut |perm| {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < best {
            best = total;
        }
    });
    best
}

fn permute(xs: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == xs.len() {
        visit(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute(xs, k + 1, visit);
        xs.swap(k, i);
    }
}
