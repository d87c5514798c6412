//! Deterministic synthetic multi-camera scenarios with ground truth.
//!
//! Identities walk camera-to-camera along a chain topology at constant
//! velocity inside each view, with travel gaps sampled inside the declared
//! windows, per-detection appearance noise and optional detection drops.
//! Every output is a pure function of the config, seed included.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{FeatureVector, Transition, TransitionModel, ZoneGeometry};
use crate::error::{Error, Result};
use crate::graph::AffinityMatrix;
use crate::metrics::{Box2D, LabeledBox};
use crate::pipeline::{Dataset, Detection};

/// Scenario parameters. All counts must be positive, probabilities in [0,1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub cameras: u32,
    pub zones_per_camera: u32,
    pub identities: u32,
    /// Frames an identity spends crossing one camera view.
    pub frames_per_visit: u64,
    pub min_travel_frames: u64,
    pub max_travel_frames: u64,
    pub feature_dim: usize,
    /// Per-detection appearance perturbation; the expected L1 displacement
    /// of a feature is about 0.8 times this value.
    pub appearance_noise_std: f64,
    pub drop_probability: f64,
    pub seed: u64,
    /// Frames between successive identity spawns.
    #[serde(default = "default_stagger")]
    pub spawn_stagger: u64,
}

fn default_stagger() -> u64 {
    30
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            cameras: 3,
            zones_per_camera: 3,
            identities: 10,
            frames_per_visit: 80,
            min_travel_frames: 15,
            max_travel_frames: 45,
            feature_dim: 16,
            appearance_noise_std: 0.0,
            drop_probability: 0.0,
            seed: 0,
            spawn_stagger: 30,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cameras == 0 || self.zones_per_camera == 0 || self.identities == 0 {
            return Err(Error::Config("cameras, zones_per_camera and identities must be positive".into()));
        }
        if self.frames_per_visit < 2 {
            return Err(Error::Config("frames_per_visit must be at least 2".into()));
        }
        if self.min_travel_frames > self.max_travel_frames {
            return Err(Error::Config("min_travel_frames exceeds max_travel_frames".into()));
        }
        if self.min_travel_frames == 0 {
            return Err(Error::Config("min_travel_frames must be positive".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::Config("drop_probability must lie in [0, 1]".into()));
        }
        if self.appearance_noise_std < 0.0 {
            return Err(Error::Config("appearance_noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

const IMAGE_W: f64 = 1920.0;
const IMAGE_H: f64 = 1080.0;
const BOX_W: f64 = 140.0;
const BOX_H: f64 = 240.0;
const LANES: u64 = 7;
const LANE_Y0: f64 = 100.0;
const LANE_STEP: f64 = 130.0;

/// Generated scenario: detections with per-detection features, the camera
/// topology, and ground-truth trajectory rows.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub model: TransitionModel,
    pub truth: Vec<LabeledBox>,
}

/// Builds the chain topology of the scenario: camera c's last zone hands
/// over to camera c+1's zone 0.
pub fn chain_topology(cfg: &SynthConfig) -> TransitionModel {
    let cameras: Vec<u32> = (0..cfg.cameras).collect();
    let mut transitions = Vec::new();
    for c in 0..cfg.cameras.saturating_sub(1) {
        transitions.push(Transition {
            from_cam: c,
            from_zone: cfg.zones_per_camera - 1,
            to_cam: c + 1,
            to_zone: 0,
            min_frames: cfg.min_travel_frames,
            max_frames: cfg.max_travel_frames,
        });
    }
    TransitionModel {
        cameras,
        transitions,
        geometry: Some(ZoneGeometry {
            image_width: IMAGE_W,
            image_height: IMAGE_H,
            zones_per_camera: cfg.zones_per_camera,
        }),
    }
}

fn strip_center(zone: u32, zones: u32) -> f64 {
    (zone as f64 + 0.5) * IMAGE_W / zones as f64
}

/// Uniform sample from the unit L1 sphere: exponential magnitudes,
/// normalized, with independent random signs.
fn sample_base_feature(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let sum: f64 = v.iter().sum();
    for e in v.iter_mut() {
        *e /= sum;
        if rng.gen::<bool>() {
            *e = -*e;
        }
    }
    v
}

fn perturb(rng: &mut ChaCha8Rng, base: &[f64], std: f64) -> Vec<f64> {
    if std == 0.0 {
        return base.to_vec();
    }
    let per_coord = std / base.len() as f64;
    let mut v: Vec<f64> = base
        .iter()
        .map(|b| b + gaussian(rng) * per_coord)
        .collect();
    let norm: f64 = v.iter().map(|e| e.abs()).sum();
    if norm > 0.0 {
        for e in v.iter_mut() {
            *e /= norm;
        }
    }
    v
}

/// Box-Muller, two uniforms per draw for stream stability.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Simulates the configured scenario. Deterministic per seed.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let model = chain_topology(cfg);
    if cfg.cameras > 1 && model.transitions.is_empty() {
        return Err(Error::Config("multi-camera scenario has no transitions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut dataset = Dataset::default();
    let mut truth = Vec::new();

    for identity in 0..cfg.identities {
        let base = sample_base_feature(&mut rng, cfg.feature_dim);
        let lane_y = LANE_Y0 + ((identity as u64 % LANES) as f64) * LANE_STEP;
        let mut frame = identity as u64 * cfg.spawn_stagger;

        for camera in 0..cfg.cameras {
            // walk entry strip -> exit strip over the visit
            let entry_x = strip_center(0, cfg.zones_per_camera);
            let exit_x = strip_center(cfg.zones_per_camera - 1, cfg.zones_per_camera);
            let steps = cfg.frames_per_visit - 1;
            let velocity = (exit_x - entry_x) / steps as f64;
            for k in 0..cfg.frames_per_visit {
                let cx = entry_x + velocity * k as f64;
                let bbox = Box2D {
                    x: cx - BOX_W / 2.0,
                    y: lane_y,
                    w: BOX_W,
                    h: BOX_H,
                };
                let dropped = cfg.drop_probability > 0.0 && rng.gen::<f64>() < cfg.drop_probability;
                if dropped {
                    continue;
                }
                let feature_id = dataset.features.len();
                dataset
                    .features
                    .push(FeatureVector(perturb(&mut rng, &base, cfg.appearance_noise_std)));
                dataset.detections.push(Detection {
                    camera,
                    frame: frame + k,
                    bbox,
                    feature_id,
                    gt_id: Some(identity as u64),
                });
                truth.push(LabeledBox {
                    identity: identity as u64,
                    camera,
                    frame: frame + k,
                    bbox,
                });
            }
            frame += cfg.frames_per_visit - 1;
            if camera + 1 < cfg.cameras {
                let gap = rng.gen_range(cfg.min_travel_frames..=cfg.max_travel_frames);
                frame += gap;
            }
        }
    }
    Ok(SynthOutput {
        dataset,
        model,
        truth,
    })
}

/// Random symmetric sparse affinity for solver benchmarks: each edge kept
/// with probability `density`, weights uniform in (0, 1).
pub fn random_sparse_affinity(n: usize, density: f64, seed: u64) -> AffinityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = AffinityMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < density {
                a.set(i, j, rng.gen::<f64>().max(f64::MIN_POSITIVE))
                    .expect("valid weight");
            }
        }
    }
    a
}

/// Random dense affinity with uniform weights, for property suites.
pub fn random_dense_affinity(n: usize, seed: u64) -> AffinityMatrix {
    random_sparse_affinity(n, 1.1, seed)
}
