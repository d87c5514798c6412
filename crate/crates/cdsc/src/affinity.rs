//! Node affinity construction: appearance via a kernel-trick distance with
//! a Laplacian kernel, motion via a constant-velocity model, and the sparse
//! spatio-temporally gated cross-camera block matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AffinityMatrix;

/// Appearance descriptor. Normalization is the ingester's responsibility;
/// nothing here re-normalizes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn l1_distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Elementwise maximum, the pooled descriptor of a composite node.
    pub fn max_pool<'a>(mut features: impl Iterator<Item = &'a FeatureVector>) -> Option<FeatureVector> {
        let first = features.next()?;
        let mut pooled = first.0.clone();
        for f in features {
            for (p, v) in pooled.iter_mut().zip(f.0.iter()) {
                *p = p.max(*v);
            }
        }
        Some(FeatureVector(pooled))
    }
}

/// Spatio-temporal attributes of a node at any layer of the hierarchy.
#[derive(Debug, Clone)]
pub struct NodeDescriptor {
    pub camera: u32,
    /// Inclusive [first, last] frame span.
    pub first_frame: u64,
    pub last_frame: u64,
    /// Image coordinates of the first and last observation (px).
    pub entry_position: [f64; 2],
    pub exit_position: [f64; 2],
    /// Zones of the entry/exit positions; resolved from camera geometry
    /// before cross-camera gating.
    pub entry_zone: Option<u32>,
    pub exit_zone: Option<u32>,
    /// Constant-velocity estimate (px/frame).
    pub velocity: [f64; 2],
    /// Whether the velocity was actually fitted (at least two distinct
    /// observation frames). Single-observation nodes predict nothing.
    pub velocity_fitted: bool,
    pub feature: FeatureVector,
}

/// One allowed camera-to-camera hand-over with its travel-time window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub from_cam: u32,
    pub from_zone: u32,
    pub to_cam: u32,
    pub to_zone: u32,
    pub min_frames: u64,
    pub max_frames: u64,
}

/// Maps image positions to zone ids: equal vertical strips.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneGeometry {
    pub image_width: f64,
    pub image_height: f64,
    pub zones_per_camera: u32,
}

impl ZoneGeometry {
    pub fn zone_of(&self, x: f64) -> u32 {
        let z = (x * self.zones_per_camera as f64 / self.image_width).floor();
        (z.max(0.0) as u32).min(self.zones_per_camera - 1)
    }
}

/// Camera topology: declared cameras and the allowed zone-to-zone
/// transitions with travel windows. Supplied as configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionModel {
    pub cameras: Vec<u32>,
    pub transitions: Vec<Transition>,
    /// Optional geometry for deriving zones from positions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<ZoneGeometry>,
}

impl TransitionModel {
    pub fn validate(&self) -> Result<()> {
        for t in &self.transitions {
            if t.min_frames > t.max_frames {
                return Err(Error::Invalid(format!(
                    "transition {}:{} -> {}:{} has min_frames {} > max_frames {}",
                    t.from_cam, t.from_zone, t.to_cam, t.to_zone, t.min_frames, t.max_frames
                )));
            }
            for cam in [t.from_cam, t.to_cam] {
                if !self.cameras.contains(&cam) {
                    return Err(Error::Invalid(format!(
                        "transition references undeclared camera {}",
                        cam
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TransitionModel =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn window(&self, from: (u32, u32), to: (u32, u32)) -> Option<(u64, u64)> {
        self.transitions
            .iter()
            .find(|t| (t.from_cam, t.from_zone) == from && (t.to_cam, t.to_zone) == to)
            .map(|t| (t.min_frames, t.max_frames))
    }
}

/// gamma = 1 / lower-median of all pairwise L1 distances.
pub fn median_gamma(features: &[FeatureVector]) -> Result<f64> {
    let n = features.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(features[i].l1_distance(&features[j]));
        }
    }
    if dists.is_empty() {
        return Err(Error::GammaUndefined);
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = dists[(dists.len() - 1) / 2];
    if median <= 0.0 {
        return Err(Error::GammaUndefined);
    }
    Ok(1.0 / median)
}

/// Laplacian kernel value exp(-gamma * ||a - b||_1).
fn laplacian_kernel(a: &FeatureVector, b: &FeatureVector, gamma: f64) -> f64 {
    (-gamma * a.l1_distance(b)).exp()
}

/// Appearance affinity A_ij = 1 - sqrt((K_ii + K_jj - 2 K_ij) / 2) with the
/// Laplacian kernel, so A_ij = 1 - sqrt(1 - K_ij): identical features give
/// 1, infinitely distant features give 0. The diagonal is forced to zero.
/// `gamma` defaults to [`median_gamma`].
pub fn kernel_affinity(features: &[FeatureVector], gamma: Option<f64>) -> Result<AffinityMatrix> {
    if features.len() < 2 {
        return Err(Error::Invalid("need at least 2 features".into()));
    }
    let gamma = match gamma {
        Some(g) if g > 0.0 => g,
        Some(g) => return Err(Error::Invalid(format!("gamma must be positive, got {}", g))),
        None => median_gamma(features)?,
    };
    let n = features.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let k = laplacian_kernel(&features[i], &features[j], gamma);
                        1.0 - (1.0 - k).max(0.0).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    AffinityMatrix::from_rows(rows)
}

/// Kinematically implausible pairs must contribute exactly nothing: any
/// strictly positive edge between an otherwise isolated pair already forms
/// a dominant set, so the exponential alone cannot gate links off.
const MOTION_EXPONENT_CUTOFF: f64 = 3.0;

/// The error allowance grows with the frame gap only up to this horizon.
/// Unbounded growth would eventually forgive any constant positional
/// offset, linking unrelated nodes across long gaps; a collinear pair has
/// near-zero error at any gap and is unaffected by the saturation.
const MOTION_GAP_HORIZON: f64 = 15.0;

/// Motion affinity under a constant-velocity model: extrapolate `a` forward
/// and `b` backward over the frame gap and penalize both prediction errors,
/// exp(-(e_f + e_b) / (2 s gap)). A node without a fitted velocity predicts
/// nothing, so the informative side counts double; when neither side has
/// one the raw displacement stands in for both. Zero when the nodes overlap
/// in time or when the normalized error passes [`MOTION_EXPONENT_CUTOFF`].
/// `scale` is in px/frame.
pub fn motion_affinity(a: &NodeDescriptor, b: &NodeDescriptor, scale: f64) -> f64 {
    let gap = b.first_frame as i64 - a.last_frame as i64;
    if gap <= 0 {
        return 0.0;
    }
    let gap = gap as f64;
    let fwd = [
        a.exit_position[0] + a.velocity[0] * gap,
        a.exit_position[1] + a.velocity[1] * gap,
    ];
    let bwd = [
        b.entry_position[0] - b.velocity[0] * gap,
        b.entry_position[1] - b.velocity[1] * gap,
    ];
    let e_f = ((fwd[0] - b.entry_position[0]).powi(2) + (fwd[1] - b.entry_position[1]).powi(2)).sqrt();
    let e_b = ((bwd[0] - a.exit_position[0]).powi(2) + (bwd[1] - a.exit_position[1]).powi(2)).sqrt();
    let error = match (a.velocity_fitted, b.velocity_fitted) {
        (true, true) => e_f + e_b,
        (true, false) => 2.0 * e_f,
        (false, true) => 2.0 * e_b,
        // both stationary guesses degenerate to the displacement
        (false, false) => e_f + e_b,
    };
    let exponent = error / (2.0 * scale * gap.min(MOTION_GAP_HORIZON));
    if exponent >= MOTION_EXPONENT_CUTOFF {
        return 0.0;
    }
    (-exponent).exp()
}

/// Appearance and motion combined for within-camera edges. Across cameras
/// only appearance is used (no kinematics exist between disjoint views).
pub fn combine(appearance: f64, motion: f64) -> f64 {
    appearance * motion
}

/// Pairwise linkability mask: true iff the ordered (earlier exit zone ->
/// later entry zone) transition is declared and the frame gap falls inside
/// its travel window. Symmetric after orientation resolution.
pub fn spatiotemporal_gate(tracks: &[NodeDescriptor], model: &TransitionModel) -> Result<Vec<Vec<bool>>> {
    let n = tracks.len();
    for (idx, t) in tracks.iter().enumerate() {
        if !model.cameras.contains(&t.camera) {
            return Err(Error::UnknownZone {
                track: idx,
                camera: t.camera,
                zone: t.exit_zone.unwrap_or(0),
            });
        }
        if t.entry_zone.is_none() || t.exit_zone.is_none() {
            return Err(Error::UnknownZone {
                track: idx,
                camera: t.camera,
                zone: 0,
            });
        }
        if let Some(g) = &model.geometry {
            for z in [t.entry_zone.unwrap(), t.exit_zone.unwrap()] {
                if z >= g.zones_per_camera {
                    return Err(Error::UnknownZone {
                        track: idx,
                        camera: t.camera,
                        zone: z,
                    });
                }
            }
        }
    }
    let mut mask = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let linked = directed_gate(&tracks[i], &tracks[j], model)
                || directed_gate(&tracks[j], &tracks[i], model);
            mask[i][j] = linked;
            mask[j][i] = linked;
        }
    }
    Ok(mask)
}

fn directed_gate(earlier: &NodeDescriptor, later: &NodeDescriptor, model: &TransitionModel) -> bool {
    if later.first_frame < earlier.last_frame {
        return false;
    }
    let gap = later.first_frame - earlier.last_frame;
    match model.window(
        (earlier.camera, earlier.exit_zone.unwrap_or(u32::MAX)),
        (later.camera, later.entry_zone.unwrap_or(u32::MAX)),
    ) {
        Some((lo, hi)) => gap >= lo && gap <= hi,
        None => false,
    }
}

/// Transitive closure of the gate along time-consistent intermediates:
/// i and z become linked when some j with i.last <= j.first and
/// j.last <= z.first links to both. Iterates to a fixed point, so closing
/// twice equals closing once.
pub fn path_closure(mask: &[Vec<bool>], tracks: &[NodeDescriptor]) -> Vec<Vec<bool>> {
    let n = mask.len();
    let mut closed: Vec<Vec<bool>> = mask.to_vec();
    let between = |a: usize, mid: usize, b: usize| -> bool {
        tracks[a].last_frame <= tracks[mid].first_frame && tracks[mid].last_frame <= tracks[b].first_frame
    };
    loop {
        let mut changed = false;
        for i in 0..n {
            for z in 0..n {
                if i == z || closed[i][z] {
                    continue;
                }
                for j in 0..n {
                    if j == i || j == z {
                        continue;
                    }
                    if closed[i][j] && closed[j][z] && (between(i, j, z) || between(z, j, i)) {
                        closed[i][z] = true;
                        closed[z][i] = true;
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            return closed;
        }
    }
}

/// Tracks of one camera, in the node order the block matrix will use.
pub struct CameraTracks<'a> {
    pub camera: u32,
    pub tracks: &'a [NodeDescriptor],
}

/// Assembles the full track-level block affinity: within-camera blocks use
/// appearance x motion, cross-camera blocks use appearance masked by the
/// path-closed spatio-temporal gate. Returns the matrix and, per camera,
/// the node-index range of its tracks.
pub fn build_cross_camera_affinity(
    per_camera: &[CameraTracks<'_>],
    model: &TransitionModel,
    gamma: Option<f64>,
    motion_scale: f64,
) -> Result<(AffinityMatrix, Vec<(u32, std::ops::Range<usize>)>)> {
    let mut flat: Vec<&NodeDescriptor> = Vec::new();
    let mut ranges = Vec::new();
    for ct in per_camera {
        let start = flat.len();
        flat.extend(ct.tracks.iter());
        ranges.push((ct.camera, start..flat.len()));
    }
    let n = flat.len();
    if n == 0 {
        return Ok((AffinityMatrix::zeros(0), ranges));
    }
    if n == 1 {
        return Ok((AffinityMatrix::zeros(1), ranges));
    }

    let features: Vec<FeatureVector> = flat.iter().map(|t| t.feature.clone()).collect();
    let appearance = kernel_affinity(&features, gamma)?;

    let multi_camera = per_camera.iter().filter(|ct| !ct.tracks.is_empty()).count() > 1;
    let closed = if multi_camera {
        let descs: Vec<NodeDescriptor> = flat.iter().map(|t| (*t).clone()).collect();
        let gate = spatiotemporal_gate(&descs, model)?;
        Some(path_closure(&gate, &descs))
    } else {
        None
    };

    let mut a = AffinityMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let same_camera = flat[i].camera == flat[j].camera;
            let w = if same_camera {
                let motion = if flat[i].first_frame <= flat[j].first_frame {
                    motion_affinity(flat[i], flat[j], motion_scale)
                } else {
                    motion_affinity(flat[j], flat[i], motion_scale)
                };
                combine(appearance.get(i, j), motion)
            } else {
                let gated = closed.as_ref().map_or(false, |m| m[i][j]);
                if gated {
                    appearance.get(i, j)
                } else {
                    0.0
                }
            };
            a.set(i, j, w)?;
        }
    }
    Ok((a, ranges))
}
