//! Combinatorics of the switching graph: which levels are reachable from
//! which, in how many steps, and with what total path weight.
//!
//! The graph is the off-diagonal part of the constant bound matrix `Q⁰`.
//! An `n`-step path is a level sequence with consecutive distinct levels and
//! a strictly positive bound on every edge; `a_n(k,l)` sums the edge-weight
//! products of all such paths and `H_kl(s) = Σ_n a_n(k,l) sⁿ` is the weight
//! series that controls how strongly level `l` feeds back into level `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Off-diagonal switching bounds with the quantities derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchGraph {
    /// Number of levels.
    pub m: usize,
    /// `m × m` nonnegative matrix with zero diagonal, row-major.
    pub q0_off: Vec<f64>,
}

/// Step count to reach a level: finite or unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Steps {
    Finite(usize),
    Unreachable,
}

impl Steps {
    pub fn as_option(self) -> Option<usize> {
        match self {
            Steps::Finite(n) => Some(n),
            Steps::Unreachable => None,
        }
    }
}

/// Reachability sets and minimal step counts of a switching graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reachability {
    /// `reachable[k]` = levels other than `k` reachable from `k`.
    pub reachable: Vec<Vec<usize>>,
    /// `min_steps[k][l]` = length of the shortest admissible path `k → l`;
    /// the diagonal holds the shortest positive-length cycle through `k`
    /// (a diagnostic extension, 2 whenever some neighbor edge goes both ways).
    pub min_steps: Vec<Vec<Steps>>,
}

impl SwitchGraph {
    pub fn new(m: usize, q0_off: Vec<f64>) -> Result<Self> {
        if m < 1 || q0_off.len() != m * m {
            return Err(Error::InvalidParam(format!(
                "switch graph needs an m × m matrix, got m = {m} and {} entries",
                q0_off.len()
            )));
        }
        for k in 0..m {
            for l in 0..m {
                let v = q0_off[k * m + l];
                if k == l && v != 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "diagonal of the off-diagonal bound matrix must be exactly zero, entry ({k},{k}) = {v}"
                    )));
                }
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "switch bound entries must be finite and ≥ 0, entry ({k},{l}) = {v}"
                    )));
                }
            }
        }
        Ok(Self { m, q0_off })
    }

    #[inline]
    pub fn weight(&self, k: usize, l: usize) -> f64 {
        self.q0_off[k * self.m + l]
    }

    #[inline]
    pub fn has_edge(&self, k: usize, l: usize) -> bool {
        k != l && self.weight(k, l) > 0.0
    }

    /// Minimum strictly positive off-diagonal entry; `None` when the graph
    /// has no edges at all.
    pub fn q0_min(&self) -> Option<f64> {
        let mut min = f64::INFINITY;
        for k in 0..self.m {
            for l in 0..self.m {
                if self.has_edge(k, l) {
                    min = min.min(self.weight(k, l));
                }
            }
        }
        if min.is_finite() {
            Some(min)
        } else {
            None
        }
    }

    /// Every ordered pair of distinct levels has a direct positive edge
    /// (needs at least two levels).
    pub fn is_strictly_irreducible(&self) -> bool {
        self.m >= 2 && (0..self.m).all(|k| (0..self.m).all(|l| k == l || self.has_edge(k, l)))
    }

    /// Every ordered pair of distinct levels is connected by some path.
    pub fn is_irreducible(&self) -> bool {
        let r = self.reachability();
        (0..self.m).all(|k| r.reachable[k].len() == self.m - 1)
    }

    /// BFS reachability sets and minimal step counts.
    pub fn reachability(&self) -> Reachability {
        let m = self.m;
        let mut min_steps = vec![vec![Steps::Unreachable; m]; m];
        let mut reachable = vec![Vec::new(); m];
        for k in 0..m {
            // Shortest path lengths from k (paths of length ≥ 1).
            let mut dist = vec![usize::MAX; m];
            let mut queue = std::collections::VecDeque::new();
            for l in 0..m {
                if self.has_edge(k, l) && dist[l] == usize::MAX {
                    dist[l] = 1;
                    queue.push_back(l);
                }
            }
            while let Some(v) = queue.pop_front() {
                for w in 0..m {
                    if self.has_edge(v, w) && w != k && dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            for l in 0..m {
                if l != k && dist[l] != usize::MAX {
                    min_steps[k][l] = Steps::Finite(dist[l]);
                    reachable[k].push(l);
                }
            }
            // Shortest positive cycle through k: one edge out plus the way back.
            let mut cycle = usize::MAX;
            for j in 0..m {
                if self.has_edge(k, j) {
                    // dist-from-j back to k.
                    let mut dj = vec![usize::MAX; m];
                    let mut q2 = std::collections::VecDeque::new();
                    dj[j] = 0;
                    q2.push_back(j);
                    while let Some(v) = q2.pop_front() {
                        if v == k {
                            break;
                        }
                        for w in 0..m {
                            if self.has_edge(v, w) && dj[w] == usize::MAX {
                                dj[w] = dj[v] + 1;
                                q2.push_back(w);
                            }
                        }
                    }
                    if dj[k] != usize::MAX {
                        cycle = cycle.min(1 + dj[k]);
                    }
                }
            }
            if cycle != usize::MAX {
                min_steps[k][k] = Steps::Finite(cycle);
            }
        }
        Reachability { reachable, min_steps }
    }

    /// `n`-step path weight sums `a_n(k,l)` as an `m × m` row-major matrix:
    /// the `n`-th power of the off-diagonal bound matrix (the zero diagonal
    /// enforces the consecutive-distinct rule).
    pub fn path_weight_sum(&self, n: usize) -> Result<Vec<f64>> {
        if n < 1 {
            return Err(Error::InvalidParam("path weight sums are defined for n ≥ 1".into()));
        }
        let m = self.m;
        let mut acc = self.q0_off.clone();
        let mut scratch = vec![0.0; m * m];
        for _ in 1..n {
            mat_mul(&acc, &self.q0_off, &mut scratch, m);
            std::mem::swap(&mut acc, &mut scratch);
        }
        Ok(acc)
    }

    /// Brute-force enumeration of all admissible `n`-step paths `k → l`.
    ///
    /// Guarded to `n ≤ 8`, `m ≤ 6`; this is the oracle that
    /// [`SwitchGraph::path_weight_sum`] is tested against.
    pub fn enumerate_paths(&self, n: usize, k: usize, l: usize) -> Result<Vec<Vec<usize>>> {
        if n > 8 || self.m > 6 {
            return Err(Error::Guard(format!(
                "path enumeration limited to n ≤ 8 and m ≤ 6 (got n = {n}, m = {})",
                self.m
            )));
        }
        if n < 1 || k >= self.m || l >= self.m {
            return Err(Error::InvalidParam(format!(
                "need n ≥ 1 and levels < m (n = {n}, k = {k}, l = {l}, m = {})",
                self.m
            )));
        }
        let mut out = Vec::new();
        let mut path = vec![k];
        self.extend_path(&mut path, n, l, &mut out);
        Ok(out)
    }

    fn extend_path(&self, path: &mut Vec<usize>, n: usize, target: usize, out: &mut Vec<Vec<usize>>) {
        if path.len() == n + 1 {
            if *path.last().unwrap() == target {
                out.push(path.clone());
            }
            return;
        }
        let cur = *path.last().unwrap();
        for next in 0..self.m {
            if self.has_edge(cur, next) {
                path.push(next);
                self.extend_path(path, n, target, out);
                path.pop();
            }
        }
    }

    /// Truncated weight series `H_kl(s) = Σ_{n≥1} a_n(k,l) sⁿ` with a
    /// certified geometric remainder.
    ///
    /// Requires `s (m-1) Θ₅ < 1` so the entrywise bound
    /// `a_n ≤ ((m-1) Θ₅)ⁿ` dominates the tail. Summation stops once the tail
    /// bound drops below `tolerance`.
    pub fn h_series(&self, s: f64, theta5: f64, tolerance: f64) -> Result<HSeries> {
        if s < 0.0 {
            return Err(Error::InvalidParam(format!("series argument must be ≥ 0, got {s}")));
        }
        let m = self.m;
        if m < 2 {
            return Err(Error::InvalidParam("series needs m ≥ 2".into()));
        }
        let rho = s * (m as f64 - 1.0) * theta5;
        if rho >= 1.0 {
            return Err(Error::Divergence(format!(
                "s (m-1) Θ₅ = {rho:.6} ≥ 1: the geometric domination fails"
            )));
        }
        let mut values = vec![0.0; m * m];
        let mut tail = if s == 0.0 { 0.0 } else { rho / (1.0 - rho) };
        let mut power = self.q0_off.clone();
        let mut scratch = vec![0.0; m * m];
        let mut s_pow = s;
        let mut n = 1usize;
        let reach = self.reachability();
        loop {
            for i in 0..m * m {
                values[i] += power[i] * s_pow;
            }
            if tail <= tolerance || s == 0.0 {
                break;
            }
            n += 1;
            if n > 10_000 {
                return Err(Error::Divergence(
                    "series truncation did not reach tolerance within 10^4 terms".into(),
                ));
            }
            mat_mul(&power, &self.q0_off, &mut scratch, m);
            std::mem::swap(&mut power, &mut scratch);
            s_pow *= s;
            tail *= rho;
        }
        // Leading-order sandwich a_{m_kl} s^{m_kl} ≤ H_kl(s) ≤ 3 a_{m_kl} s^{m_kl},
        // checked per entry at this s (unreachable pairs must give a zero sum).
        let mut sandwich_ok = vec![true; m * m];
        for k in 0..m {
            for l in 0..m {
                let idx = k * m + l;
                match reach.min_steps[k][l] {
                    Steps::Finite(mkl) if s > 0.0 => {
                        let a = self.path_weight_sum(mkl)?[idx];
                        let lead = a * s.powi(mkl as i32);
                        sandwich_ok[idx] = values[idx] >= lead * (1.0 - 1e-12)
                            && values[idx] <= 3.0 * lead * (1.0 + 1e-12);
                    }
                    Steps::Finite(_) => {
                        sandwich_ok[idx] = values[idx] == 0.0;
                    }
                    Steps::Unreachable => {
                        sandwich_ok[idx] = values[idx] == 0.0;
                    }
                }
            }
        }
        Ok(HSeries { m, values, remainder_bound: tail, terms: n, sandwich_ok })
    }

    /// Largest `s` with `Σ_n ((m-1) Θ₅ s)ⁿ < 2`, i.e. `s (m-1) Θ₅ < 2/3`;
    /// on `(0, s_max]` every series entry is below 2.
    pub fn admissible_s_max(&self, theta5: f64) -> f64 {
        2.0 / (3.0 * (self.m as f64 - 1.0) * theta5)
    }
}

/// Result of a truncated [`SwitchGraph::h_series`] evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSeries {
    pub m: usize,
    /// Row-major `H_kl(s)` values.
    pub values: Vec<f64>,
    /// Certified bound on the dropped tail (entrywise).
    pub remainder_bound: f64,
    /// Number of series terms summed.
    pub terms: usize,
    /// Per-entry flag for the leading-order sandwich
    /// `a_{m_kl} s^{m_kl} ≤ H_kl(s) ≤ 3 a_{m_kl} s^{m_kl}`.
    pub sandwich_ok: Vec<bool>,
}

impl HSeries {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.m + l]
    }
}

fn mat_mul(a: &[f64], b: &[f64], out: &mut [f64], m: usize) {
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += a[i * m + k] * b[k * m + j];
            }
            out[i * m + j] = acc;
        }
    }
}
