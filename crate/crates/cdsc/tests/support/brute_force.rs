//! Brute-force enumeration oracle for the constrained solver: every support
//! subset is examined by direct linear algebra, entirely independent of the
//! replicator/localization machinery it checks. Shared by the oracle and
//! acceptance suites via #[path] inclusion.
#![allow(dead_code)]

use cdsc::AffinityMatrix;

/// Payoff matrix entry of the constrained program.
pub fn payoff(a: &AffinityMatrix, q: &[usize], alpha: f64, i: usize, j: usize) -> f64 {
    let masked = i == j && !q.contains(&i);
    a.get(i, j) - if masked { alpha } else { 0.0 }
}

/// Solves the equal-payoff system on a candidate support: P_S x = c 1,
/// sum x = 1, by Gaussian elimination with partial pivoting. Returns the
/// interior solution (all entries strictly positive) and its value, if any.
pub fn restricted_kkt_point(
    a: &AffinityMatrix,
    q: &[usize],
    alpha: f64,
    support: &[usize],
) -> Option<(Vec<f64>, f64)> {
    let k = support.len();
    let dim = k + 1; // unknowns: x on support, then c
    let mut m = vec![vec![0.0f64; dim + 1]; dim];
    for (row, &i) in support.iter().enumerate() {
        for (col, &j) in support.iter().enumerate() {
            m[row][col] = payoff(a, q, alpha, i, j);
        }
        m[row][k] = -1.0; // -c
        m[row][dim] = 0.0;
    }
    for col in 0..k {
        m[k][col] = 1.0;
    }
    m[k][dim] = 1.0;

    // elimination
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&r1, &r2| m[r1][col].abs().partial_cmp(&m[r2][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..dim {
            if row == col {
                continue;
            }
            let factor = m[row][col] / m[col][col];
            for c2 in col..=dim {
                m[row][c2] -= factor * m[col][c2];
            }
        }
    }
    let x: Vec<f64> = (0..k).map(|r| m[r][dim] / m[r][r]).collect();
    let c = m[k][dim] / m[k][k];
    if x.iter().any(|&v| v <= 1e-10) {
        return None;
    }
    Some((x, c))
}

/// First-order check outside the support: no vertex may beat the common
/// payoff value.
pub fn is_full_kkt(a: &AffinityMatrix, q: &[usize], alpha: f64, support: &[usize], x: &[f64], c: f64) -> bool {
    let n = a.len();
    for i in 0..n {
        if support.contains(&i) {
            continue;
        }
        let mut pi = 0.0;
        for (pos, &j) in support.iter().enumerate() {
            pi += payoff(a, q, alpha, i, j) * x[pos];
        }
        if pi > c + 1e-9 {
            return false;
        }
    }
    true
}

/// Second-order check: the payoff form restricted to the face tangent space
/// must be negative definite (up to jitter). Tested by Cholesky of its
/// negation.
pub fn is_face_local_max(a: &AffinityMatrix, q: &[usize], alpha: f64, support: &[usize]) -> bool {
    let k = support.len();
    if k == 1 {
        return true;
    }
    let t = k - 1;
    // tangent basis u_m = e_{s_m} - e_{s_0}
    let mut b = vec![vec![0.0f64; t]; t];
    for m1 in 0..t {
        for m2 in 0..t {
            let (s0, sm, sl) = (support[0], support[m1 + 1], support[m2 + 1]);
            b[m1][m2] = payoff(a, q, alpha, sm, sl) - payoff(a, q, alpha, sm, s0)
                - payoff(a, q, alpha, s0, sl)
                + payoff(a, q, alpha, s0, s0);
        }
    }
    // Cholesky of -B + jitter
    let mut l = vec![vec![0.0f64; t]; t];
    for i in 0..t {
        for j in 0..=i {
            let mut sum = -b[i][j] + if i == j { 1e-9 } else { 0.0 };
            for p in 0..j {
                sum -= l[i][p] * l[j][p];
            }
            if i == j {
                if sum <= 0.0 {
                    return false;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    true
}

pub fn objective_of(a: &AffinityMatrix, q: &[usize], alpha: f64, support: &[usize], x: &[f64]) -> f64 {
    let mut f = 0.0;
    for (pi, &i) in support.iter().enumerate() {
        for (pj, &j) in support.iter().enumerate() {
            f += x[pi] * payoff(a, q, alpha, i, j) * x[pj];
        }
    }
    f
}

/// Best objective among all restricted local maximizers whose support meets
/// the constraint set, by exhaustive support enumeration.
pub fn brute_force_best(a: &AffinityMatrix, q: &[usize], alpha: f64) -> Option<(f64, Vec<usize>)> {
    let n = a.len();
    assert!(n <= 16, "brute force is exponential in n");
    let mut best: Option<(f64, Vec<usize>)> = None;
    for bits in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| bits & (1 << i) != 0).collect();
        if !support.iter().any(|v| q.contains(v)) {
            continue;
        }
        let Some((x, c)) = restricted_kkt_point(a, q, alpha, &support) else {
            continue;
        };
        if !is_full_kkt(a, q, alpha, &support, &x, c) {
            continue;
        }
        if !is_face_local_max(a, q, alpha, &support) {
            continue;
        }
        let f = objective_of(a, q, alpha, &support, &x);
        if best.as_ref().map_or(true, |(bf, _)| f > *bf) {
            best = Some((f, support));
        }
    }
    best
}

