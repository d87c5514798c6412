//! Detections to trajectories in three layers: consecutive-frame chaining
//! into short-tracklets, clustering short-tracklets into tracklets per
//! 10-segment window, clustering tracklets into per-camera tracks, then one
//! simultaneous within- and across-camera association pass over all tracks,
//! followed by set refinement and trajectory merging.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::affinity::{
    build_cross_camera_affinity, kernel_affinity, median_gamma, motion_affinity, CameraTracks,
    FeatureVector, NodeDescriptor, TransitionModel,
};
use crate::enumeration::{assign_unique, enumerate_clusters, enumerate_clusters_tagged, ClusterCollection};
use crate::error::{Error, Result};
use crate::graph::AffinityMatrix;
use crate::metrics::{Box2D, LabeledBox};
use crate::solver::SolverConfig;

/// One detector output box with its appearance feature reference.
#[derive(Debug, Clone)]
pub struct Detection {
    pub camera: u32,
    pub frame: u64,
    pub bbox: Box2D,
    /// Index into the dataset feature table.
    pub feature_id: usize,
    /// Ground-truth identity, evaluation only.
    pub gt_id: Option<u64>,
}

impl Detection {
    pub fn center(&self) -> [f64; 2] {
        [self.bbox.x + self.bbox.w / 2.0, self.bbox.y + self.bbox.h / 2.0]
    }
}

/// Detections plus the feature table they reference.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub detections: Vec<Detection>,
    pub features: Vec<FeatureVector>,
}

/// Consecutive-frame detection chain inside one 15-frame segment.
#[derive(Debug, Clone)]
pub struct ShortTracklet {
    pub camera: u32,
    pub segment: u64,
    pub detections: Vec<Detection>,
    pub descriptor: NodeDescriptor,
}

/// A cluster of short-tracklets from one 10-segment window.
#[derive(Debug, Clone)]
pub struct Tracklet {
    pub camera: u32,
    pub window: u64,
    pub members: Vec<ShortTracklet>,
    pub descriptor: NodeDescriptor,
}

/// A per-camera identity: a cluster of tracklets.
#[derive(Debug, Clone)]
pub struct Track {
    pub camera: u32,
    pub members: Vec<Tracklet>,
    pub descriptor: NodeDescriptor,
}

impl Track {
    pub fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.members
            .iter()
            .flat_map(|t| t.members.iter())
            .flat_map(|s| s.detections.iter())
    }
}

/// A cross-camera identity: the tracks of one merged component.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: u64,
    /// Indices into the global track list.
    pub tracks: Vec<usize>,
}

/// One association set from the layer-3 pass: tracks extracted together
/// under some camera's constraint pass.
#[derive(Debug, Clone)]
pub struct TrackSet {
    pub constraint_camera: u32,
    /// Track indices, ascending.
    pub members: Vec<usize>,
    /// Membership scores parallel to `members`.
    pub membership: Vec<f64>,
}

impl TrackSet {
    pub fn contains(&self, track: usize) -> bool {
        self.members.binary_search(&track).is_ok()
    }

    pub fn membership_of(&self, track: usize) -> Option<f64> {
        self.members
            .binary_search(&track)
            .ok()
            .map(|pos| self.membership[pos])
    }

    fn remove(&mut self, track: usize) {
        if let Ok(pos) = self.members.binary_search(&track) {
            self.members.remove(pos);
            self.membership.remove(pos);
        }
    }

    fn intersection_len(&self, other: &TrackSet) -> usize {
        self.members
            .iter()
            .filter(|m| other.contains(**m))
            .count()
    }
}

/// All layer-3 sets in extraction order, queryable by track and by
/// constraint camera.
#[derive(Debug, Clone, Default)]
pub struct TrackSetIndex {
    pub sets: Vec<TrackSet>,
    /// Camera of each track, indexed by track id.
    pub track_cameras: Vec<u32>,
    /// Extractions that hit the solver iteration cap.
    pub non_converged: usize,
}

impl TrackSetIndex {
    /// Set ids containing `track`, extraction order.
    pub fn sets_of(&self, track: usize) -> Vec<usize> {
        self.sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(track))
            .map(|(i, _)| i)
            .collect()
    }

    /// Set ids containing `track` that were extracted under camera `p`.
    pub fn sets_of_under(&self, track: usize, p: u32) -> Vec<usize> {
        self.sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.constraint_camera == p && s.contains(track))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cameras(&self) -> Vec<u32> {
        let mut cams: Vec<u32> = self.sets.iter().map(|s| s.constraint_camera).collect();
        cams.sort_unstable();
        cams.dedup();
        cams
    }
}

/// Pipeline knobs; defaults follow the segment/window/overlap constants of
/// the hierarchy.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub segment_len: u64,
    pub window_segments: u64,
    pub chain_iou: f64,
    pub motion_scale: f64,
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            segment_len: 15,
            window_segments: 10,
            chain_iou: 0.7,
            motion_scale: 5.0,
            solver: SolverConfig::default(),
        }
    }
}

/// Per-run statistics and warnings, serialized as the run report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub cameras: usize,
    pub detections: usize,
    pub short_tracklets: usize,
    pub tracklets: usize,
    pub tracks: usize,
    pub layer3_sets: usize,
    pub trajectories: usize,
    pub warnings: Vec<String>,
    pub timing_ms: BTreeMap<String, f64>,
}

/// Full pipeline result.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub tracks: Vec<Track>,
    pub sets: TrackSetIndex,
    pub trajectories: Vec<Trajectory>,
    pub report: RunReport,
}

impl PipelineOutput {
    /// Trajectory rows in the output order: (camera, frame, x) ascending
    /// within each trajectory id.
    pub fn labeled_boxes(&self) -> Vec<LabeledBox> {
        let mut rows = Vec::new();
        for traj in &self.trajectories {
            for &ti in &traj.tracks {
                for det in self.tracks[ti].detections() {
                    rows.push(LabeledBox {
                        identity: traj.id,
                        camera: det.camera,
                        frame: det.frame,
                        bbox: det.bbox,
                    });
                }
            }
        }
        rows.sort_by(|a, b| {
            (a.identity, a.camera, a.frame)
                .cmp(&(b.identity, b.camera, b.frame))
                .then(a.bbox.x.partial_cmp(&b.bbox.x).unwrap())
        });
        rows
    }
}

fn descriptor_from_detections(
    camera: u32,
    detections: &[Detection],
    features: &[FeatureVector],
) -> NodeDescriptor {
    let mut sorted: Vec<&Detection> = detections.iter().collect();
    sorted.sort_by_key(|d| d.frame);
    let first = sorted.first().expect("nonempty detections");
    let last = sorted.last().expect("nonempty detections");
    let feature = FeatureVector::max_pool(sorted.iter().map(|d| &features[d.feature_id]))
        .expect("nonempty detections");
    NodeDescriptor {
        camera,
        first_frame: first.frame,
        last_frame: last.frame,
        entry_position: first.center(),
        exit_position: last.center(),
        entry_zone: None,
        exit_zone: None,
        velocity: fit_velocity(&sorted),
        velocity_fitted: sorted.first().map(|d| d.frame) != sorted.last().map(|d| d.frame),
        feature,
    }
}

/// Least-squares constant-velocity fit over detection centers; zero for a
/// single observation or a single distinct frame.
fn fit_velocity(sorted: &[&Detection]) -> [f64; 2] {
    let n = sorted.len() as f64;
    if sorted.len() < 2 {
        return [0.0, 0.0];
    }
    let t_mean = sorted.iter().map(|d| d.frame as f64).sum::<f64>() / n;
    let denom: f64 = sorted
        .iter()
        .map(|d| (d.frame as f64 - t_mean).powi(2))
        .sum();
    if denom == 0.0 {
        return [0.0, 0.0];
    }
    let mut v = [0.0, 0.0];
    for axis in 0..2 {
        let p_mean = sorted.iter().map(|d| d.center()[axis]).sum::<f64>() / n;
        let num: f64 = sorted
            .iter()
            .map(|d| (d.frame as f64 - t_mean) * (d.center()[axis] - p_mean))
            .sum();
        v[axis] = num / denom;
    }
    v
}

/// Chains detections of one camera into short-tracklets: inside each
/// segment, boxes in consecutive frames link when their IoU clears the
/// threshold, best overlaps first, each detection joining at most one
/// chain. Unlinked detections become singletons.
pub fn build_short_tracklets(
    detections: &[Detection],
    features: &[FeatureVector],
    cfg: &PipelineConfig,
) -> Vec<ShortTracklet> {
    let mut by_segment: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        by_segment.entry(d.frame / cfg.segment_len).or_default().push(d);
    }
    let mut out = Vec::new();
    for (&segment, dets) in &by_segment {
        let mut by_frame: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
        for d in dets {
            by_frame.entry(d.frame).or_default().push(d);
        }
        // chains as index lists over `dets`-local storage
        let mut chains: Vec<Vec<&Detection>> = Vec::new();
        let mut chain_last_frame: Vec<u64> = Vec::new();
        for (&frame, frame_dets) in &by_frame {
            // candidate links: open chains ending exactly one frame ago
            let open: Vec<usize> = chains
                .iter()
                .enumerate()
                .filter(|(ci, _)| chain_last_frame[*ci] + 1 == frame)
                .map(|(ci, _)| ci)
                .collect();
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for &ci in &open {
                let tail = chains[ci].last().unwrap();
                for (di, d) in frame_dets.iter().enumerate() {
                    let iou = tail.bbox.iou(&d.bbox);
                    if iou >= cfg.chain_iou {
                        pairs.push((iou, ci, di));
                    }
                }
            }
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
            let mut chain_taken = vec![false; chains.len()];
            let mut det_taken = vec![false; frame_dets.len()];
            for (_, ci, di) in pairs {
                if chain_taken[ci] || det_taken[di] {
                    continue;
                }
                chain_taken[ci] = true;
                det_taken[di] = true;
                chains[ci].push(frame_dets[di]);
                chain_last_frame[ci] = frame;
            }
            for (di, d) in frame_dets.iter().enumerate() {
                if !det_taken[di] {
                    chains.push(vec![d]);
                    chain_last_frame.push(frame);
                }
            }
        }
        for chain in chains {
            let owned: Vec<Detection> = chain.iter().map(|d| (*d).clone()).collect();
            let descriptor = descriptor_from_detections(owned[0].camera, &owned, features);
            out.push(ShortTracklet {
                camera: owned[0].camera,
                segment,
                detections: owned,
                descriptor,
            });
        }
    }
    out
}

/// Kernel width with graceful degradation for degenerate feature sets: a
/// zero lower-median distance falls back to the mean nonzero distance; a
/// fully identical gallery gets 1.0, under which the kernel still yields
/// unit affinity for every (zero-distance) pair.
fn robust_gamma(features: &[FeatureVector]) -> f64 {
    match median_gamma(features) {
        Ok(g) => g,
        Err(_) => {
            let n = features.len();
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = features[i].l1_distance(&features[j]);
                    if d > 0.0 {
                        sum += d;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                1.0
            } else {
                count as f64 / sum
            }
        }
    }
}

fn appearance_affinity(features: &[FeatureVector]) -> Result<AffinityMatrix> {
    if features.len() < 2 {
        return Ok(AffinityMatrix::zeros(features.len()));
    }
    kernel_affinity(features, Some(robust_gamma(features)))
}

/// Combined within-camera affinity over a set of node descriptors.
fn combined_affinity(nodes: &[&NodeDescriptor], cfg: &PipelineConfig) -> Result<AffinityMatrix> {
    let features: Vec<FeatureVector> = nodes.iter().map(|d| d.feature.clone()).collect();
    let appearance = appearance_affinity(&features)?;
    let mut a = AffinityMatrix::zeros(nodes.len());
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let motion = if nodes[i].first_frame <= nodes[j].first_frame {
                motion_affinity(nodes[i], nodes[j], cfg.motion_scale)
            } else {
                motion_affinity(nodes[j], nodes[i], cfg.motion_scale)
            };
            a.set(i, j, appearance.get(i, j) * motion)?;
        }
    }
    Ok(a)
}

/// Clusters one camera's short-tracklets window by window into tracklets.
/// `non_converged` counts extractions that hit the solver iteration cap.
pub fn layer1_tracklets(
    short_tracklets: Vec<ShortTracklet>,
    features: &[FeatureVector],
    cfg: &PipelineConfig,
) -> Result<Vec<Tracklet>> {
    layer1_tracklets_counted(short_tracklets, features, cfg).map(|(t, _)| t)
}

pub fn layer1_tracklets_counted(
    short_tracklets: Vec<ShortTracklet>,
    features: &[FeatureVector],
    cfg: &PipelineConfig,
) -> Result<(Vec<Tracklet>, usize)> {
    let mut by_window: BTreeMap<u64, Vec<ShortTracklet>> = BTreeMap::new();
    for s in short_tracklets {
        by_window
            .entry(s.segment / cfg.window_segments)
            .or_default()
            .push(s);
    }
    let windows: Vec<(u64, Vec<ShortTracklet>)> = by_window.into_iter().collect();
    let per_window: Vec<Result<(Vec<Tracklet>, usize)>> = windows
        .into_par_iter()
        .map(|(window, members)| {
            let (groups, non_converged) = cluster_nodes(
                &members.iter().map(|s| &s.descriptor).collect::<Vec<_>>(),
                cfg,
            )?;
            let tracklets = groups
                .into_iter()
                .map(|idxs| {
                    let mut ms: Vec<ShortTracklet> =
                        idxs.into_iter().map(|i| members[i].clone()).collect();
                    ms.sort_by_key(|s| (s.descriptor.first_frame, s.segment));
                    let dets: Vec<Detection> =
                        ms.iter().flat_map(|s| s.detections.iter().cloned()).collect();
                    let descriptor = descriptor_from_detections(ms[0].camera, &dets, features);
                    Tracklet {
                        camera: ms[0].camera,
                        window,
                        members: ms,
                        descriptor,
                    }
                })
                .collect();
            Ok((tracklets, non_converged))
        })
        .collect();
    let mut out = Vec::new();
    let mut warnings = 0;
    for w in per_window {
        let (t, n) = w?;
        out.extend(t);
        warnings += n;
    }
    Ok((out, warnings))
}

/// Associates one camera's tracklets across windows into tracks; same
/// recipe as layer 1, over the whole camera at once.
pub fn layer2_tracks(
    tracklets: Vec<Tracklet>,
    features: &[FeatureVector],
    cfg: &PipelineConfig,
) -> Result<Vec<Track>> {
    layer2_tracks_counted(tracklets, features, cfg).map(|(t, _)| t)
}

pub fn layer2_tracks_counted(
    tracklets: Vec<Tracklet>,
    features: &[FeatureVector],
    cfg: &PipelineConfig,
) -> Result<(Vec<Track>, usize)> {
    if tracklets.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let (groups, non_converged) = cluster_nodes(
        &tracklets.iter().map(|t| &t.descriptor).collect::<Vec<_>>(),
        cfg,
    )?;
    let tracks = groups
        .into_iter()
        .map(|idxs| {
            let mut ms: Vec<Tracklet> = idxs.into_iter().map(|i| tracklets[i].clone()).collect();
            ms.sort_by_key(|t| t.descriptor.first_frame);
            let dets: Vec<Detection> = ms
                .iter()
                .flat_map(|t| t.members.iter())
                .flat_map(|s| s.detections.iter().cloned())
                .collect();
            let descriptor = descriptor_from_detections(ms[0].camera, &dets, features);
            Track {
                camera: ms[0].camera,
                members: ms,
                descriptor,
            }
        })
        .collect();
    Ok((tracks, non_converged))
}

/// Shared clustering recipe of the first two layers: combined affinity,
/// enumeration with every node as constraint seed, unique assignment.
/// Returns member index groups in extraction order plus the number of
/// extractions that hit the solver's iteration cap.
fn cluster_nodes(nodes: &[&NodeDescriptor], cfg: &PipelineConfig) -> Result<(Vec<Vec<usize>>, usize)> {
    match nodes.len() {
        0 => return Ok((Vec::new(), 0)),
        1 => return Ok((vec![vec![0]], 0)),
        _ => {}
    }
    let a = combined_affinity(nodes, cfg)?;
    let all: Vec<usize> = (0..nodes.len()).collect();
    let coll = enumerate_clusters(&a, &all, &cfg.solver)?;
    let non_converged = coll.clusters.iter().filter(|c| c.warning).count();
    let assignment = assign_unique(&coll)?;
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (vertex, cluster) in assignment {
        groups.entry(cluster).or_default().push(vertex);
    }
    Ok((groups.into_values().collect(), non_converged))
}

/// The simultaneous association pass: build the block affinity over all
/// cameras' tracks, then run one constrained enumeration per camera with
/// that camera's tracks as the constraint set. Sets may mix within- and
/// across-camera tracks; that is what heals broken tracks.
pub fn layer3_associate(
    tracks: &[Track],
    model: &TransitionModel,
    cfg: &PipelineConfig,
) -> Result<TrackSetIndex> {
    let track_cameras: Vec<u32> = tracks.iter().map(|t| t.camera).collect();
    if tracks.is_empty() {
        return Ok(TrackSetIndex {
            sets: Vec::new(),
            track_cameras,
            non_converged: 0,
        });
    }

    let mut cameras: Vec<u32> = track_cameras.clone();
    cameras.sort_unstable();
    cameras.dedup();

    // resolve entry/exit zones from geometry when gating will be needed
    let mut descriptors: Vec<NodeDescriptor> = tracks.iter().map(|t| t.descriptor.clone()).collect();
    if cameras.len() > 1 {
        let geometry = model.geometry.as_ref().ok_or_else(|| {
            Error::Config("multi-camera association requires zone geometry in the transition model".into())
        })?;
        for d in descriptors.iter_mut() {
            d.entry_zone = Some(geometry.zone_of(d.entry_position[0]));
            d.exit_zone = Some(geometry.zone_of(d.exit_position[0]));
        }
    } else {
        for d in descriptors.iter_mut() {
            d.entry_zone = d.entry_zone.or(Some(0));
            d.exit_zone = d.exit_zone.or(Some(0));
        }
    }

    // node order: cameras ascending, tracks in their incoming order
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&i| (track_cameras[i], i));
    let mut per_camera: Vec<(u32, Vec<NodeDescriptor>, Vec<usize>)> = Vec::new();
    for &i in &order {
        let cam = track_cameras[i];
        if per_camera.last().map(|(c, _, _)| *c) != Some(cam) {
            per_camera.push((cam, Vec::new(), Vec::new()));
        }
        let slot = per_camera.last_mut().unwrap();
        slot.1.push(descriptors[i].clone());
        slot.2.push(i);
    }
    let camera_tracks: Vec<CameraTracks<'_>> = per_camera
        .iter()
        .map(|(cam, descs, _)| CameraTracks {
            camera: *cam,
            tracks: descs,
        })
        .collect();
    let gamma = robust_gamma(&descriptors.iter().map(|d| d.feature.clone()).collect::<Vec<_>>());
    let (a, ranges) = build_cross_camera_affinity(&camera_tracks, model, Some(gamma), cfg.motion_scale)?;
    let node_to_track: Vec<usize> = per_camera.iter().flat_map(|(_, _, idx)| idx.iter().copied()).collect();

    // per-camera constrained passes; independent given the shared matrix
    let collections: Vec<Result<ClusterCollection>> = ranges
        .par_iter()
        .map(|(cam, range)| {
            let q: Vec<usize> = range.clone().collect();
            if q.is_empty() {
                return Ok(ClusterCollection::new());
            }
            enumerate_clusters_tagged(&a, &q, *cam, &cfg.solver)
        })
        .collect();

    let mut sets = Vec::new();
    let mut non_converged = 0;
    for coll in collections {
        for c in coll?.clusters {
            if c.warning {
                non_converged += 1;
            }
            let mut pairs: Vec<(usize, f64)> = c
                .support
                .iter()
                .zip(c.membership.iter())
                .map(|(&node, &score)| (node_to_track[node], score))
                .collect();
            pairs.sort_by_key(|(t, _)| *t);
            sets.push(TrackSet {
                constraint_camera: c.constraint_tag,
                members: pairs.iter().map(|(t, _)| *t).collect(),
                membership: pairs.iter().map(|(_, s)| *s).collect(),
            });
        }
    }
    Ok(TrackSetIndex {
        sets,
        track_cameras,
        non_converged,
    })
}

/// First refinement pass: a track may appear in at most one set per
/// constraint camera. Violations are resolved toward the set maximizing
/// cardinality times membership, sizes and scores read from the
/// pre-refinement state, ties to the earlier-extracted set.
pub fn refine_constraint1(index: &mut TrackSetIndex) {
    let n_tracks = index.track_cameras.len();
    let snapshot = index.sets.clone();
    let mut removals: Vec<(usize, usize)> = Vec::new(); // (set, track)
    for track in 0..n_tracks {
        for cam in index.cameras() {
            let containing = index.sets_of_under(track, cam);
            if containing.len() <= 1 {
                continue;
            }
            let keep = containing
                .iter()
                .copied()
                .max_by(|&x, &y| {
                    let score = |si: usize| {
                        snapshot[si].members.len() as f64
                            * snapshot[si].membership_of(track).unwrap_or(0.0)
                    };
                    score(x)
                        .partial_cmp(&score(y))
                        .unwrap()
                        .then(y.cmp(&x)) // earlier set wins ties
                })
                .unwrap();
            for si in containing {
                if si != keep {
                    removals.push((si, track));
                }
            }
        }
    }
    for (si, track) in removals {
        index.sets[si].remove(track);
    }
}

/// Second refinement pass: a track may appear in at most I sets overall.
/// An over-assigned track keeps, per constraint camera, only the set with
/// the largest intersection with its home set (the earliest set containing
/// it under its own camera), ties to the earlier-extracted set.
pub fn refine_constraint2(index: &mut TrackSetIndex, camera_count: usize) {
    let n_tracks = index.track_cameras.len();
    let snapshot = index.sets.clone();
    let mut removals: Vec<(usize, usize)> = Vec::new();
    for track in 0..n_tracks {
        if index.sets_of(track).len() <= camera_count {
            continue;
        }
        let home_cam = index.track_cameras[track];
        let home = index.sets_of_under(track, home_cam).into_iter().next();
        for cam in index.cameras() {
            let containing = index.sets_of_under(track, cam);
            if containing.len() <= 1 {
                continue;
            }
            let keep = match home {
                Some(h) => containing
                    .iter()
                    .copied()
                    .max_by(|&x, &y| {
                        let ix = snapshot[x].intersection_len(&snapshot[h]);
                        let iy = snapshot[y].intersection_len(&snapshot[h]);
                        ix.cmp(&iy).then(y.cmp(&x))
                    })
                    .unwrap(),
                None => containing[0],
            };
            for si in containing {
                if si != keep {
                    removals.push((si, track));
                }
            }
        }
    }
    for (si, track) in removals {
        index.sets[si].remove(track);
    }
}

/// Merges co-membership into trajectories: tracks sharing any surviving set
/// land in one trajectory (connected components), labeled in order of their
/// lowest member track id. Components holding two temporally overlapping
/// tracks of one camera are kept but reported.
pub fn merge_to_trajectories(
    index: &TrackSetIndex,
    tracks: &[Track],
    warnings: &mut Vec<String>,
) -> Vec<Trajectory> {
    let n = tracks.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for set in &index.sets {
        for pair in set.members.windows(2) {
            let (a, b) = (find(&mut parent, pair[0]), find(&mut parent, pair[1]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = components.into_values().collect();
    groups.sort_by_key(|g| *g.iter().min().unwrap());
    groups
        .into_iter()
        .enumerate()
        .map(|(id, mut members)| {
            members.sort_unstable();
            for x in 0..members.len() {
                for y in (x + 1)..members.len() {
                    let (a, b) = (&tracks[members[x]], &tracks[members[y]]);
                    if a.camera == b.camera
                        && a.descriptor.first_frame <= b.descriptor.last_frame
                        && b.descriptor.first_frame <= a.descriptor.last_frame
                    {
                        warnings.push(format!(
                            "trajectory {} holds temporally overlapping tracks {} and {} in camera {}",
                            id, members[x], members[y], a.camera
                        ));
                    }
                }
            }
            Trajectory {
                id: id as u64,
                tracks: members,
            }
        })
        .collect()
}

/// Runs the full hierarchy over a dataset.
pub fn run(dataset: &Dataset, model: &TransitionModel, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let mut report = RunReport {
        detections: dataset.detections.len(),
        ..RunReport::default()
    };
    let t0 = Instant::now();

    let mut by_camera: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in &dataset.detections {
        by_camera.entry(d.camera).or_default().push(d.clone());
    }
    for dets in by_camera.values_mut() {
        dets.sort_by(|a, b| {
            (a.frame, a.bbox.x, a.bbox.y)
                .partial_cmp(&(b.frame, b.bbox.x, b.bbox.y))
                .unwrap()
        });
    }
    report.cameras = by_camera.len();

    let camera_dets: Vec<(u32, Vec<Detection>)> = by_camera.into_iter().collect();
    let per_camera: Vec<Result<(Vec<Track>, usize, usize, usize)>> = camera_dets
        .into_par_iter()
        .map(|(_, dets)| {
            let shorts = build_short_tracklets(&dets, &dataset.features, cfg);
            let n_short = shorts.len();
            let (tracklets, w1) = layer1_tracklets_counted(shorts, &dataset.features, cfg)?;
            let n_tracklets = tracklets.len();
            let (tracks, w2) = layer2_tracks_counted(tracklets, &dataset.features, cfg)?;
            Ok((tracks, n_short, n_tracklets, w1 + w2))
        })
        .collect();

    let mut tracks: Vec<Track> = Vec::new();
    let mut within_warnings = 0;
    for r in per_camera {
        let (ts, n_short, n_tracklets, w) = r?;
        report.short_tracklets += n_short;
        report.tracklets += n_tracklets;
        within_warnings += w;
        tracks.extend(ts);
    }
    if within_warnings > 0 {
        report.warnings.push(format!(
            "{} within-camera cluster extractions hit the solver iteration cap",
            within_warnings
        ));
    }
    report.tracks = tracks.len();
    report
        .timing_ms
        .insert("within_camera".into(), t0.elapsed().as_secs_f64() * 1e3);

    let t1 = Instant::now();
    let mut index = layer3_associate(&tracks, model, cfg)?;
    report.layer3_sets = index.sets.len();
    if index.non_converged > 0 {
        report.warnings.push(format!(
            "{} association extractions hit the solver iteration cap",
            index.non_converged
        ));
    }
    refine_constraint1(&mut index);
    let camera_count = index.cameras().len().max(1);
    refine_constraint2(&mut index, camera_count);
    let trajectories = merge_to_trajectories(&index, &tracks, &mut report.warnings);
    report.trajectories = trajectories.len();
    report
        .timing_ms
        .insert("across_camera".into(), t1.elapsed().as_secs_f64() * 1e3);
    report
        .timing_ms
        .insert("total".into(), t0.elapsed().as_secs_f64() * 1e3);

    Ok(PipelineOutput {
        tracks,
        sets: index,
        trajectories,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::Transition;

    fn boxed(x: f64, y: f64) -> Box2D {
        Box2D { x, y, w: 100.0, h: 200.0 }
    }

    fn det(camera: u32, frame: u64, x: f64, feature_id: usize) -> Detection {
        Detection {
            camera,
            frame,
            bbox: boxed(x, 100.0),
            feature_id,
            gt_id: None,
        }
    }

    fn one_feature() -> Vec<FeatureVector> {
        vec![FeatureVector(vec![1.0, 0.0])]
    }

    #[test]
    fn chaining_links_high_iou_consecutive_boxes() {
        // 10 px shift on a 100 px box: IoU = 90/110 > 0.7
        let dets = vec![det(0, 0, 0.0, 0), det(0, 1, 10.0, 0)];
        let shorts = build_short_tracklets(&dets, &one_feature(), &PipelineConfig::default());
        assert_eq!(shorts.len(), 1);
        assert_eq!(shorts[0].detections.len(), 2);
    }

    #[test]
    fn chaining_rejects_low_iou() {
        // 25 px shift on a 100 px box: IoU = 75/125 = 0.6 < 0.7
        let dets = vec![det(0, 0, 0.0, 0), det(0, 1, 25.0, 0)];
        let shorts = build_short_tracklets(&dets, &one_feature(), &PipelineConfig::default());
        assert_eq!(shorts.len(), 2);
        for s in &shorts {
            assert_eq!(s.detections.len(), 1);
        }
    }

    #[test]
    fn chaining_full_segment_single_chain() {
        let dets: Vec<Detection> = (0..15).map(|f| det(0, f, 0.0, 0)).collect();
        let shorts = build_short_tracklets(&dets, &one_feature(), &PipelineConfig::default());
        assert_eq!(shorts.len(), 1);
        assert_eq!(shorts[0].detections.len(), 15);
        assert_eq!(shorts[0].descriptor.first_frame, 0);
        assert_eq!(shorts[0].descriptor.last_frame, 14);
    }

    #[test]
    fn chaining_does_not_cross_segment_boundary() {
        let dets: Vec<Detection> = (0..30).map(|f| det(0, f, 0.0, 0)).collect();
        let shorts = build_short_tracklets(&dets, &one_feature(), &PipelineConfig::default());
        assert_eq!(shorts.len(), 2);
    }

    /// Walks an identity at constant velocity, one detection per frame.
    fn walk(camera: u32, frames: std::ops::Range<u64>, x0: f64, v: f64, y: f64, fid: usize) -> Vec<Detection> {
        let start = frames.start;
        frames
            .map(|f| Detection {
                camera,
                frame: f,
                bbox: boxed(x0 + v * (f - start) as f64, y),
                feature_id: fid,
                gt_id: None,
            })
            .collect()
    }

    #[test]
    fn layer1_single_identity_single_tracklet() {
        let cfg = PipelineConfig::default();
        let features = one_feature();
        // 150 frames = 10 segments of smooth motion
        let dets = walk(0, 0..150, 0.0, 5.0, 100.0, 0);
        let shorts = build_short_tracklets(&dets, &features, &cfg);
        assert_eq!(shorts.len(), 10);
        let tracklets = layer1_tracklets(shorts, &features, &cfg).unwrap();
        assert_eq!(tracklets.len(), 1);
        assert_eq!(tracklets[0].members.len(), 10);
    }

    #[test]
    fn layer1_two_identities_two_tracklets() {
        let cfg = PipelineConfig::default();
        let features = vec![
            FeatureVector(vec![1.0, 0.0, 0.0, 0.0]),
            FeatureVector(vec![0.0, 0.0, 1.0, 0.0]),
        ];
        let mut dets = walk(0, 0..150, 0.0, 5.0, 100.0, 0);
        dets.extend(walk(0, 0..150, 0.0, 5.0, 600.0, 1));
        let shorts = build_short_tracklets(&dets, &features, &cfg);
        assert_eq!(shorts.len(), 20);
        let tracklets = layer1_tracklets(shorts, &features, &cfg).unwrap();
        assert_eq!(tracklets.len(), 2);
    }

    #[test]
    fn layer1_singleton_window() {
        let cfg = PipelineConfig::default();
        let features = one_feature();
        let dets = walk(0, 0..5, 0.0, 1.0, 100.0, 0);
        let shorts = build_short_tracklets(&dets, &features, &cfg);
        let tracklets = layer1_tracklets(shorts, &features, &cfg).unwrap();
        assert_eq!(tracklets.len(), 1);
        assert_eq!(tracklets[0].members.len(), 1);
    }

    #[test]
    fn layer2_merges_across_windows() {
        let cfg = PipelineConfig::default();
        let features = one_feature();
        // 3 windows of 150 frames each, continuous motion
        let dets = walk(0, 0..450, 0.0, 2.0, 100.0, 0);
        let shorts = build_short_tracklets(&dets, &features, &cfg);
        let tracklets = layer1_tracklets(shorts, &features, &cfg).unwrap();
        assert_eq!(tracklets.len(), 3);
        let tracks = layer2_tracks(tracklets, &features, &cfg).unwrap();
        assert_eq!(tracks.len(), 1);
    }

    #[test]
    fn layer2_keeps_broken_track_apart_when_motion_fails() {
        let cfg = PipelineConfig::default();
        let features = one_feature();
        // same identity leaves moving right, re-enters far left much later:
        // the constant-velocity prediction misses by a wide margin
        let mut dets = walk(0, 0..150, 0.0, 10.0, 100.0, 0);
        dets.extend(walk(0, 300..450, 50.0, 10.0, 100.0, 0));
        let shorts = build_short_tracklets(&dets, &features, &cfg);
        let tracklets = layer1_tracklets(shorts, &features, &cfg).unwrap();
        let tracks = layer2_tracks(tracklets, &features, &cfg).unwrap();
        assert_eq!(tracks.len(), 2);
    }

    #[test]
    fn layer2_single_tracklet_single_track() {
        let cfg = PipelineConfig::default();
        let features = one_feature();
        let dets = walk(0, 0..30, 0.0, 1.0, 100.0, 0);
        let shorts = build_short_tracklets(&dets, &features, &cfg);
        let tracklets = layer1_tracklets(shorts, &features, &cfg).unwrap();
        let tracks = layer2_tracks(tracklets, &features, &cfg).unwrap();
        assert_eq!(tracks.len(), 1);
    }

    fn track_from(descriptor: NodeDescriptor) -> Track {
        let det = Detection {
            camera: descriptor.camera,
            frame: descriptor.first_frame,
            bbox: Box2D { x: descriptor.entry_position[0], y: 0.0, w: 10.0, h: 10.0 },
            feature_id: 0,
            gt_id: None,
        };
        Track {
            camera: descriptor.camera,
            members: vec![Tracklet {
                camera: descriptor.camera,
                window: 0,
                members: vec![ShortTracklet {
                    camera: descriptor.camera,
                    segment: 0,
                    detections: vec![det],
                    descriptor: descriptor.clone(),
                }],
                descriptor: descriptor.clone(),
            }],
            descriptor,
        }
    }

    fn desc(camera: u32, first: u64, last: u64, feature: Vec<f64>) -> NodeDescriptor {
        NodeDescriptor {
            camera,
            first_frame: first,
            last_frame: last,
            entry_position: [100.0, 100.0],
            exit_position: [1800.0, 100.0],
            entry_zone: None,
            exit_zone: None,
            velocity: [10.0, 0.0],
            velocity_fitted: true,
            feature: FeatureVector(feature),
        }
    }

    /// The broken-track fixture: one identity passes camera 1 (track a),
    /// camera 2, camera 1 again (track b), camera 3; a distractor lives in
    /// camera 1 only.
    fn green_clique_model() -> TransitionModel {
        let geometry = crate::affinity::ZoneGeometry {
            image_width: 1920.0,
            image_height: 1080.0,
            zones_per_camera: 2,
        };
        let mut transitions = Vec::new();
        for (fc, tc) in [(1u32, 2u32), (2, 1), (1, 3), (2, 3)] {
            transitions.push(Transition {
                from_cam: fc,
                from_zone: 1,
                to_cam: tc,
                to_zone: 0,
                min_frames: 10,
                max_frames: 60,
            });
        }
        TransitionModel {
            cameras: vec![1, 2, 3],
            transitions,
            geometry: Some(geometry),
        }
    }

    fn green_clique_tracks() -> Vec<Track> {
        let person = vec![1.0, 0.0, 0.0, 0.0];
        let distractor = vec![0.0, 0.0, 0.0, 1.0];
        vec![
            track_from(desc(1, 0, 50, distractor)), // 0: camera-1 loner
            track_from(desc(1, 0, 80, person.clone())), // 1: fragment a
            track_from(desc(2, 120, 200, person.clone())), // 2: camera 2
            track_from(desc(1, 240, 320, person.clone())), // 3: fragment b
            track_from(desc(3, 360, 440, person)),  // 4: camera 3
        ]
    }

    #[test]
    fn layer3_heals_broken_track_into_green_clique() {
        let cfg = PipelineConfig::default();
        let model = green_clique_model();
        let tracks = green_clique_tracks();
        let index = layer3_associate(&tracks, &model, &cfg).unwrap();
        // camera 1's pass must produce exactly the 4-track set {1,2,3,4}
        let cam1_sets: Vec<&TrackSet> = index
            .sets
            .iter()
            .filter(|s| s.constraint_camera == 1)
            .collect();
        assert!(cam1_sets.iter().any(|s| s.members == vec![1, 2, 3, 4]));
        // the distractor stays a singleton under camera 1
        assert!(cam1_sets.iter().any(|s| s.members == vec![0]));

        let mut index = index;
        refine_constraint1(&mut index);
        refine_constraint2(&mut index, 3);
        let mut warnings = Vec::new();
        let trajectories = merge_to_trajectories(&index, &tracks, &mut warnings);
        let healed = trajectories
            .iter()
            .find(|t| t.tracks.contains(&1))
            .expect("fragment a belongs somewhere");
        assert_eq!(healed.tracks, vec![1, 2, 3, 4]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn layer3_gates_disabled_keeps_fragments_apart() {
        let cfg = PipelineConfig::default();
        let mut model = green_clique_model();
        model.transitions.clear();
        let tracks = green_clique_tracks();
        let mut index = layer3_associate(&tracks, &model, &cfg).unwrap();
        refine_constraint1(&mut index);
        refine_constraint2(&mut index, 3);
        let mut warnings = Vec::new();
        let trajectories = merge_to_trajectories(&index, &tracks, &mut warnings);
        let of = |track: usize| {
            trajectories
                .iter()
                .find(|t| t.tracks.contains(&track))
                .unwrap()
                .id
        };
        assert_ne!(of(1), of(3));
    }

    #[test]
    fn layer3_single_camera_is_plain_enumeration() {
        let cfg = PipelineConfig::default();
        let model = TransitionModel {
            cameras: vec![0],
            transitions: vec![],
            geometry: None,
        };
        let t1 = track_from(desc(0, 0, 50, vec![1.0, 0.0]));
        let t2 = track_from(desc(0, 100, 150, vec![1.0, 0.0]));
        let index = layer3_associate(&[t1, t2], &model, &cfg).unwrap();
        assert!(index.sets.iter().all(|s| s.constraint_camera == 0));
        assert!(!index.sets.is_empty());
    }

    fn set(cam: u32, members: Vec<usize>, membership: Vec<f64>) -> TrackSet {
        TrackSet {
            constraint_camera: cam,
            members,
            membership,
        }
    }

    #[test]
    fn constraint1_resolves_by_cardinality_times_membership() {
        // track 7 in a size-3 set with score 0.5 (1.5) and a size-4 set
        // with score 0.3 (1.2): stays in the first
        let mut index = TrackSetIndex {
            sets: vec![
                set(0, vec![1, 2, 7], vec![0.25, 0.25, 0.5]),
                set(0, vec![3, 4, 5, 7], vec![0.2, 0.2, 0.3, 0.3]),
            ],
            track_cameras: vec![0; 8],
            non_converged: 0,
        };
        refine_constraint1(&mut index);
        assert!(index.sets[0].contains(7));
        assert!(!index.sets[1].contains(7));
        for t in 0..8 {
            assert!(index.sets_of_under(t, 0).len() <= 1);
        }
    }

    #[test]
    fn constraint1_identity_when_no_violation() {
        let mut index = TrackSetIndex {
            sets: vec![set(0, vec![0, 1], vec![0.5, 0.5]), set(0, vec![2], vec![1.0])],
            track_cameras: vec![0; 3],
            non_converged: 0,
        };
        let before = index.sets.clone();
        refine_constraint1(&mut index);
        for (a, b) in index.sets.iter().zip(before.iter()) {
            assert_eq!(a.members, b.members);
        }
    }

    #[test]
    fn constraint1_tie_keeps_earlier_set() {
        let mut index = TrackSetIndex {
            sets: vec![
                set(0, vec![1, 7], vec![0.5, 0.5]),
                set(0, vec![2, 7], vec![0.5, 0.5]),
            ],
            track_cameras: vec![0; 8],
            non_converged: 0,
        };
        refine_constraint1(&mut index);
        assert!(index.sets[0].contains(7));
        assert!(!index.sets[1].contains(7));
    }

    #[test]
    fn constraint2_resolves_by_intersection_with_home_set() {
        // track 9 lives in camera 0; its home set under camera 0 is {8, 9}.
        // under camera 1 it appears twice; the set sharing member 8 wins.
        let mut index = TrackSetIndex {
            sets: vec![
                set(0, vec![8, 9], vec![0.5, 0.5]),
                set(1, vec![5, 8, 9], vec![0.4, 0.3, 0.3]),
                set(1, vec![6, 9], vec![0.5, 0.5]),
                set(2, vec![7, 9], vec![0.5, 0.5]),
            ],
            track_cameras: vec![0; 10],
            non_converged: 0,
        };
        // |K^9| = 4 > I = 2 triggers the pass (cameras 0, 1, 2 all present;
        // use I = 2 to force it)
        refine_constraint2(&mut index, 2);
        assert!(index.sets[1].contains(9));
        assert!(!index.sets[2].contains(9));
        assert!(index.sets_of(9).len() <= 3);
    }

    #[test]
    fn constraint2_identity_when_within_budget() {
        let mut index = TrackSetIndex {
            sets: vec![set(0, vec![0, 1], vec![0.5, 0.5]), set(1, vec![0, 2], vec![0.5, 0.5])],
            track_cameras: vec![0, 0, 1],
            non_converged: 0,
        };
        let before = index.sets.clone();
        refine_constraint2(&mut index, 2);
        for (a, b) in index.sets.iter().zip(before.iter()) {
            assert_eq!(a.members, b.members);
        }
    }

    #[test]
    fn merge_builds_components_and_partition() {
        let tracks: Vec<Track> = vec![
            track_from(desc(0, 0, 10, vec![1.0])),
            track_from(desc(0, 20, 30, vec![1.0])),
            track_from(desc(1, 40, 50, vec![1.0])),
            track_from(desc(1, 60, 70, vec![1.0])),
        ];
        let index = TrackSetIndex {
            sets: vec![
                set(0, vec![0, 2], vec![0.5, 0.5]),
                set(1, vec![2, 3], vec![0.5, 0.5]),
                set(0, vec![1], vec![1.0]),
            ],
            track_cameras: vec![0, 0, 1, 1],
            non_converged: 0,
        };
        let mut warnings = Vec::new();
        let trajectories = merge_to_trajectories(&index, &tracks, &mut warnings);
        assert_eq!(trajectories.len(), 2);
        assert_eq!(trajectories[0].tracks, vec![0, 2, 3]);
        assert_eq!(trajectories[1].tracks, vec![1]);
        // partition: every track exactly once
        let mut seen: Vec<usize> = trajectories.iter().flat_map(|t| t.tracks.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn merge_all_singletons() {
        let tracks: Vec<Track> = (0..3)
            .map(|i| track_from(desc(0, i * 100, i * 100 + 10, vec![1.0])))
            .collect();
        let index = TrackSetIndex {
            sets: (0..3).map(|i| set(0, vec![i], vec![1.0])).collect(),
            track_cameras: vec![0; 3],
            non_converged: 0,
        };
        let mut warnings = Vec::new();
        let trajectories = merge_to_trajectories(&index, &tracks, &mut warnings);
        assert_eq!(trajectories.len(), 3);
    }

    #[test]
    fn merge_flags_overlapping_same_camera_tracks() {
        let tracks: Vec<Track> = vec![
            track_from(desc(0, 0, 100, vec![1.0])),
            track_from(desc(0, 50, 150, vec![1.0])),
        ];
        let index = TrackSetIndex {
            sets: vec![set(0, vec![0, 1], vec![0.5, 0.5])],
            track_cameras: vec![0, 0],
            non_converged: 0,
        };
        let mut warnings = Vec::new();
        let trajectories = merge_to_trajectories(&index, &tracks, &mut warnings);
        assert_eq!(trajectories.len(), 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn run_on_empty_dataset_is_empty() {
        let dataset = Dataset::default();
        let model = TransitionModel {
            cameras: vec![0],
            transitions: vec![],
            geometry: None,
        };
        let out = run(&dataset, &model, &PipelineConfig::default()).unwrap();
        assert!(out.trajectories.is_empty());
        assert_eq!(out.report.detections, 0);
    }

    #[test]
    fn run_single_detection_single_trajectory() {
        let dataset = Dataset {
            detections: vec![det(0, 3, 50.0, 0)],
            features: one_feature(),
        };
        let model = TransitionModel {
            cameras: vec![0],
            transitions: vec![],
            geometry: None,
        };
        let out = run(&dataset, &model, &PipelineConfig::default()).unwrap();
        assert_eq!(out.trajectories.len(), 1);
        let boxes = out.labeled_boxes();
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].identity, 0);
    }
}
