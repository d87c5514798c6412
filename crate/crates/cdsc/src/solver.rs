//! Solver for the constrained quadratic program over the simplex.
//!
//! The program maximizes x'(A - alpha*diag(m))x over the standard simplex,
//! where m indicates vertices outside the constraint set Q. With alpha above
//! the largest eigenvalue of the off-constraint principal submatrix, every
//! local maximizer keeps part of its support inside Q, which is what turns
//! dominant-set extraction into a constrained clustering primitive.
//!
//! Two solving routes are provided: plain discrete replicator dynamics over
//! the whole graph ([`local_maximizer`]), and the localized
//! infect-and-resolve loop ([`fast_cdsc`]) that runs the dynamics only on a
//! small subgraph grown around the constraint set.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::AffinityMatrix;
use crate::simplex::{SimplexVector, SUPPORT_EPS};

/// Default KKT residual tolerance for convergence.
pub const KKT_TOL: f64 = 1e-6;
/// Default iteration cap for one replicator solve.
pub const MAX_ITERS: usize = 10_000;
/// Entries below this are dropped entirely when an iterate is re-embedded
/// between localized solves. Well under the support threshold so that the
/// bookkeeping loss stays negligible against any accepted payoff gain.
const DUST_EPS: f64 = 1e-15;
/// Relative tilt applied to barycenter starts; see
/// [`SimplexVector::tilted_barycenter_of`].
const DEFAULT_TILT: f64 = 1e-2;

/// How the penalty parameter alpha is obtained from the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// Power iteration on the off-constraint submatrix plus a relative margin.
    Exact,
    /// Max weighted degree of the off-constraint submatrix plus one. Always
    /// at least the exact bound; cheap enough for large graphs.
    Fast,
}

/// Constraint set Q with its penalty alpha and the induced diagonal mask
/// (1 on V \ Q, 0 on Q).
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    n: usize,
    q: Vec<usize>,
    alpha: f64,
    mask: Vec<f64>,
}

impl ConstraintSpec {
    pub fn new(n: usize, q: &[usize], alpha: f64) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Invalid("constraint set must be nonempty".into()));
        }
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::Invalid(format!("alpha must be positive, got {}", alpha)));
        }
        let mut q: Vec<usize> = q.to_vec();
        q.sort_unstable();
        q.dedup();
        if let Some(&max) = q.last() {
            if max >= n {
                return Err(Error::Dimension(format!(
                    "constraint vertex {} out of range for n = {}",
                    max, n
                )));
            }
        }
        let mut mask = vec![1.0; n];
        for &i in &q {
            mask[i] = 0.0;
        }
        Ok(ConstraintSpec { n, q, alpha, mask })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn constraint_set(&self) -> &[usize] {
        &self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// 1.0 exactly on vertices outside Q.
    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i] == 0.0
    }
}

/// Outcome of one solve: the converged distribution plus its certificates.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub distribution: SimplexVector,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub converged: bool,
    /// Penalty value the solve actually ran with.
    pub alpha: f64,
    /// Objective after each localized solve of the outer loop; empty for
    /// plain replicator runs. Strictly increasing while the loop expands.
    pub objective_trace: Vec<f64>,
}

/// Knobs shared by both solving routes.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub support_eps: f64,
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub alpha_mode: AlphaMode,
    /// Fixes alpha directly instead of deriving it from the graph.
    pub alpha_override: Option<f64>,
    /// Relative symmetry-breaking tilt on barycenter starts.
    pub tilt: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            support_eps: SUPPORT_EPS,
            kkt_tol: KKT_TOL,
            max_iters: MAX_ITERS,
            alpha_mode: AlphaMode::Exact,
            alpha_override: None,
            tilt: DEFAULT_TILT,
        }
    }
}

impl SolverConfig {
    pub fn fast() -> Self {
        SolverConfig {
            alpha_mode: AlphaMode::Fast,
            ..SolverConfig::default()
        }
    }
}

/// x'(A - alpha*diag(mask))x.
pub fn objective(a: &AffinityMatrix, spec: &ConstraintSpec, x: &SimplexVector) -> Result<f64> {
    if x.len() != a.len() || spec.len() != a.len() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, x has {}, spec has {}",
            a.len(),
            a.len(),
            x.len(),
            spec.len()
        )));
    }
    let mut g = vec![0.0; a.len()];
    a.mul_vec(x.entries(), &mut g);
    Ok(objective_from_payoff(spec, x.entries(), &g))
}

fn objective_from_payoff(spec: &ConstraintSpec, x: &[f64], g: &[f64]) -> f64 {
    let mut f = 0.0;
    for i in 0..x.len() {
        f += x[i] * (g[i] - spec.alpha * spec.mask[i] * x[i]);
    }
    f
}

/// Penalty lower bound of the support theorem: any alpha above
/// lambda_max(A restricted to V \ Q) forces local maximizers to intersect Q.
///
/// Exact mode returns the eigenvalue plus a relative margin
/// 1e-4 * (1 + bound); fast mode returns the submatrix max weighted degree
/// plus 1. An empty complement yields just the margin.
pub fn alpha_bound(a: &AffinityMatrix, q: &[usize], mode: AlphaMode) -> f64 {
    let n = a.len();
    let mut in_q = vec![false; n];
    for &i in q {
        in_q[i] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&i| !in_q[i]).collect();
    match mode {
        AlphaMode::Exact => {
            let bound = if complement.is_empty() {
                0.0
            } else {
                a.submatrix(&complement).lambda_max()
            };
            bound + 1e-4 * (1.0 + bound)
        }
        AlphaMode::Fast => {
            // max over complement rows of the row sum restricted to the
            // complement, computed without materializing the submatrix
            let mut best = 0.0f64;
            for &i in &complement {
                let mut deg = a.degree(i);
                for &j in q {
                    deg -= a.get(i, j);
                }
                best = best.max(deg);
            }
            best + 1.0
        }
    }
}

/// One discrete replicator step under an explicit entrywise-nonnegative
/// payoff matrix (row-major n*n). The solver itself always steps the
/// alpha-shifted constrained payoff; this raw form exists for trajectory
/// analysis such as shift-invariance checks.
pub fn replicator_step_payoff(payoff: &[f64], n: usize, x: &SimplexVector) -> Result<SimplexVector> {
    if payoff.len() != n * n || x.len() != n {
        return Err(Error::Dimension(format!(
            "payoff has {} entries for n = {}, x has {}",
            payoff.len(),
            n,
            x.len()
        )));
    }
    let xs = x.entries();
    let mut next = vec![0.0; n];
    let mut denom = 0.0;
    for i in 0..n {
        let mut gi = 0.0;
        for j in 0..n {
            gi += payoff[i * n + j] * xs[j];
        }
        next[i] = xs[i] * gi;
        denom += xs[i] * gi;
    }
    if denom <= 0.0 {
        return Err(Error::DegeneratePayoff);
    }
    for e in next.iter_mut() {
        *e /= denom;
    }
    SimplexVector::renormalize(&mut next);
    Ok(SimplexVector::from_raw(next))
}

/// One replicator step of the constrained program. The payoff matrix is
/// (A - alpha*diag(mask)) + alpha*J; the all-ones shift keeps every entry
/// nonnegative without disturbing which entries grow or shrink.
pub fn replicator_step(
    a: &AffinityMatrix,
    spec: &ConstraintSpec,
    x: &SimplexVector,
) -> Result<SimplexVector> {
    if x.len() != a.len() || spec.len() != a.len() {
        return Err(Error::Dimension("replicator_step: size mismatch".into()));
    }
    let n = a.len();
    let xs = x.entries();
    let mut g = vec![0.0; n];
    a.mul_vec(xs, &mut g);
    let mut next = vec![0.0; n];
    step_in_place(spec, xs, &g, &mut next)?;
    Ok(SimplexVector::from_raw(next))
}

/// Shared step kernel: given g = A x, writes the next iterate into `next`.
fn step_in_place(spec: &ConstraintSpec, x: &[f64], g: &[f64], next: &mut [f64]) -> Result<()> {
    let alpha = spec.alpha;
    let s: f64 = x.iter().sum();
    let mut denom = 0.0;
    for i in 0..x.len() {
        let shifted = g[i] - alpha * spec.mask[i] * x[i] + alpha * s;
        next[i] = x[i] * shifted;
        denom += x[i] * shifted;
    }
    if denom <= 0.0 {
        return Err(Error::DegeneratePayoff);
    }
    for e in next.iter_mut() {
        *e /= denom;
    }
    SimplexVector::renormalize(next);
    Ok(())
}

/// Max violation of the first-order conditions: on-support payoffs must
/// equal the value, off-support payoffs must not exceed it.
pub fn kkt_residual(a: &AffinityMatrix, spec: &ConstraintSpec, x: &SimplexVector) -> f64 {
    let mut g = vec![0.0; a.len()];
    a.mul_vec(x.entries(), &mut g);
    kkt_from_payoff(spec, x.entries(), &g, SUPPORT_EPS)
}

fn kkt_from_payoff(spec: &ConstraintSpec, x: &[f64], g: &[f64], eps: f64) -> f64 {
    let lam2 = objective_from_payoff(spec, x, g);
    let mut resid = 0.0f64;
    for i in 0..x.len() {
        let pi = g[i] - spec.alpha * spec.mask[i] * x[i];
        if x[i] > eps {
            resid = resid.max((pi - lam2).abs());
        } else {
            resid = resid.max((pi - lam2).max(0.0));
        }
    }
    resid
}

/// Scans vertices outside the support for one whose pure strategy earns a
/// strictly higher payoff against x than x earns against itself. Returns
/// the vertex with the largest payoff gap (ties: lowest index). This is the
/// selective function of the localized solver; a returned vertex certifies
/// that x is not a local maximizer.
pub fn dominant_distribution(
    a: &AffinityMatrix,
    spec: &ConstraintSpec,
    x: &SimplexVector,
) -> Option<usize> {
    let mut g = vec![0.0; a.len()];
    a.mul_vec(x.entries(), &mut g);
    dominant_from_payoff(spec, x.entries(), &g, SUPPORT_EPS)
}

fn dominant_from_payoff(spec: &ConstraintSpec, x: &[f64], g: &[f64], eps: f64) -> Option<usize> {
    let f = objective_from_payoff(spec, x, g);
    let mut best: Option<(usize, f64)> = None;
    for i in 0..x.len() {
        if x[i] > eps {
            continue;
        }
        // e_i'(A - alpha*diag(mask))x; the mask term matters only for
        // sub-threshold nonzero entries
        let payoff = g[i] - spec.alpha * spec.mask[i] * x[i];
        let gap = payoff - f;
        if gap > 0.0 && best.map_or(true, |(_, b)| gap > b) {
            best = Some((i, gap));
        }
    }
    best.map(|(i, _)| i)
}

/// Runs replicator dynamics from `x0` until the KKT residual drops below
/// tolerance or the iteration cap is hit (reported as non-converged). The
/// objective is non-decreasing along the trajectory.
pub fn local_maximizer(
    a: &AffinityMatrix,
    spec: &ConstraintSpec,
    x0: &SimplexVector,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    if x0.len() != a.len() || spec.len() != a.len() {
        return Err(Error::Dimension("local_maximizer: size mismatch".into()));
    }
    let start = Instant::now();
    let n = a.len();
    let mut x: Vec<f64> = x0.entries().to_vec();
    let mut g = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        a.mul_vec(&x, &mut g);
        if kkt_from_payoff(spec, &x, &g, cfg.support_eps) <= cfg.kkt_tol {
            converged = true;
            break;
        }
        step_in_place(spec, &x, &g, &mut next)?;
        std::mem::swap(&mut x, &mut next);
        iterations += 1;
    }
    if !converged {
        // the cap may land exactly on a converged iterate
        a.mul_vec(&x, &mut g);
        converged = kkt_from_payoff(spec, &x, &g, cfg.support_eps) <= cfg.kkt_tol;
    }
    let distribution = SimplexVector::from_raw(x);
    let objective = objective(a, spec, &distribution)?;
    let kkt = kkt_residual(a, spec, &distribution);
    Ok(SolveReport {
        distribution,
        objective,
        kkt_residual: kkt,
        iterations,
        wall_seconds: start.elapsed().as_secs_f64(),
        converged,
        alpha: spec.alpha,
        objective_trace: Vec::new(),
    })
}

/// Convenience entry: full-graph replicator solve started from the tilted
/// barycenter of the constraint face. This is the baseline (non-localized)
/// extraction route.
pub fn solve_replicator(a: &AffinityMatrix, q: &[usize], cfg: &SolverConfig) -> Result<SolveReport> {
    let alpha = cfg
        .alpha_override
        .unwrap_or_else(|| alpha_bound(a, q, cfg.alpha_mode));
    let spec = ConstraintSpec::new(a.len(), q, alpha)?;
    // the baseline explores the whole graph, so it must start with full
    // support: mostly uniform, weighted toward the constraint face
    let n = a.len();
    let mut entries = vec![1.0; n];
    for &i in spec.constraint_set() {
        entries[i] = 2.0;
    }
    let tilted = SimplexVector::tilted_barycenter_of(n, &(0..n).collect::<Vec<_>>(), cfg.tilt);
    for (e, t) in entries.iter_mut().zip(tilted.entries()) {
        *e *= t;
    }
    SimplexVector::renormalize(&mut entries);
    local_maximizer(a, &spec, &SimplexVector::from_raw(entries), cfg)
}

/// Localized constrained solve: start on the constraint face, repeatedly
/// look for a dominant vertex outside the current support, fold it into a
/// small subgraph together with the support and the constraint set, and
/// re-solve there. Terminates when no vertex can improve on the current
/// distribution; the result is a KKT point of the full program whose
/// support intersects Q and whose objective increased strictly at every
/// expansion.
pub fn fast_cdsc(a: &AffinityMatrix, q: &[usize], cfg: &SolverConfig) -> Result<SolveReport> {
    let n = a.len();
    let alpha = cfg
        .alpha_override
        .unwrap_or_else(|| alpha_bound(a, q, cfg.alpha_mode));
    let spec = ConstraintSpec::new(n, q, alpha)?;
    let start = Instant::now();

    let mut x: Vec<f64> = SimplexVector::tilted_barycenter_of(n, spec.constraint_set(), cfg.tilt)
        .entries()
        .to_vec();
    let mut g = vec![0.0; n];
    let mut total_iters = 0usize;
    let mut all_converged = true;
    let mut objective_trace = Vec::new();

    // initial localized solve on the constraint face itself
    let mut grow_to: Option<usize> = None;
    let outer_cap = n.max(1);
    let mut outer = 0;
    loop {
        // subgraph: every live entry, the constraint set, and the vertex
        // being folded in
        let mut keep: Vec<usize> = (0..n)
            .filter(|&i| x[i] > DUST_EPS || spec.contains(i) || grow_to == Some(i))
            .collect();
        keep.sort_unstable();
        keep.dedup();

        let sub = a.submatrix(&keep);
        let sub_q: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter(|(_, &i)| spec.contains(i))
            .map(|(pos, _)| pos)
            .collect();
        // the run-wide alpha dominates every principal submatrix bound, so
        // the support guarantee carries over to each localized solve
        let sub_spec = ConstraintSpec::new(keep.len(), &sub_q, alpha)?;
        let mut local: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
        SimplexVector::renormalize(&mut local);
        let report = local_maximizer(&sub, &sub_spec, &SimplexVector::from_raw(local), cfg)?;
        total_iters += report.iterations;
        all_converged &= report.converged;

        x.fill(0.0);
        for (pos, &i) in keep.iter().enumerate() {
            x[i] = report.distribution.get(pos);
        }
        objective_trace.push(report.objective);

        let support: Vec<usize> = (0..n).filter(|&i| x[i] > DUST_EPS).collect();
        a.mul_vec_sparse(&x, &support, &mut g);
        match dominant_from_payoff(&spec, &x, &g, cfg.support_eps) {
            None => break,
            Some(i) => {
                outer += 1;
                if outer > outer_cap {
                    all_converged = false;
                    break;
                }
                infect(&spec, &mut x, &g, i);
                grow_to = Some(i);
            }
        }
    }

    restrict_to_anchor_component(a, &spec, &mut x, cfg.support_eps);

    let distribution = SimplexVector::from_raw(x);
    let obj = objective(a, &spec, &distribution)?;
    let kkt = kkt_residual(a, &spec, &distribution);
    let converged = all_converged && kkt <= cfg.kkt_tol;
    Ok(SolveReport {
        distribution,
        objective: obj,
        kkt_residual: kkt,
        iterations: total_iters,
        wall_seconds: start.elapsed().as_secs_f64(),
        converged,
        alpha,
        objective_trace,
    })
}

/// Exactly flat payoffs (an all-zero graph, or tied disconnected cliques)
/// can leave a converged distribution spread over several disconnected
/// pieces. A strict local maximizer always has a connected support, so
/// keeping only the piece holding the heaviest constraint vertex is a
/// no-op in the generic case; in the degenerate case it resolves the tie
/// toward an actual cluster. Restriction preserves the KKT conditions:
/// components share no edges, so payoffs rescale uniformly.
fn restrict_to_anchor_component(
    a: &AffinityMatrix,
    spec: &ConstraintSpec,
    x: &mut [f64],
    eps: f64,
) {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > eps).collect();
    if support.len() <= 1 {
        return;
    }
    // union-find over the support subgraph
    let mut parent: Vec<usize> = (0..support.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for ai in 0..support.len() {
        for bi in (ai + 1)..support.len() {
            if a.get(support[ai], support[bi]) > 0.0 {
                let (ra, rb) = (find(&mut parent, ai), find(&mut parent, bi));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
    }
    let roots: std::collections::BTreeSet<usize> =
        (0..support.len()).map(|i| find(&mut parent, i)).collect();
    if roots.len() <= 1 {
        return;
    }
    // anchor: constraint vertex with the most mass, ties to the lowest index
    let anchor = support
        .iter()
        .enumerate()
        .filter(|(_, &v)| spec.contains(v))
        .max_by(|(_, &u), (_, &v)| x[u].partial_cmp(&x[v]).unwrap().then(v.cmp(&u)))
        .map(|(pos, _)| pos);
    let Some(anchor) = anchor else { return };
    let keep_root = find(&mut parent, anchor);
    for (pos, &v) in support.iter().enumerate() {
        if find(&mut parent, pos) != keep_root {
            x[v] = 0.0;
        }
    }
    SimplexVector::renormalize(x);
}

/// Mixes the dominant vertex into x along the payoff-maximizing line
/// segment: f((1-t)x + t e_i) is quadratic in t with a positive slope at 0
/// whenever e_i dominates x, so any step up to the parabola peak strictly
/// improves the objective. t is capped below 1 to keep the current support
/// alive for the next localized solve.
fn infect(spec: &ConstraintSpec, x: &mut [f64], g: &[f64], i: usize) {
    let f = objective_from_payoff(spec, x, g);
    let p_i = g[i] - spec.alpha * spec.mask[i] * x[i];
    let upx = p_i - f;
    let upu = -spec.alpha * spec.mask[i] - 2.0 * p_i + f;
    let t = if upu >= 0.0 { 1.0 } else { (-upx / upu).min(1.0) };
    let t = t.min(0.999).max(0.0);
    for e in x.iter_mut() {
        *e *= 1.0 - t;
    }
    x[i] += t;
}
