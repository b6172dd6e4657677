//! Exact moments of `T_π = Σ_ij A_ij v_π(i) v_π(j)` over uniformly random
//! permutations `π`.
//!
//! Expanding `E[T^m]` gives a sum over `2m` index slots. Both the kernel
//! factor and the permuted-score factor depend on which slots carry equal
//! indices, i.e. on a set partition `σ` of the slots:
//!
//! ```text
//! E[T^m] = Σ_σ  C_A(σ) · D_v(σ) / (n)_{|σ|}
//! ```
//!
//! where `C_A(σ)` sums the kernel product over index tuples whose equality
//! pattern is exactly `σ`, `D_v(σ) = Σ_{distinct a} Π_B v_{a_B}^{|B|}`, and
//! `(n)_b` is the falling factorial. Both exact-pattern sums come from their
//! "at least σ" counterparts by Möbius inversion on the partition lattice.
//! The "at least" kernel sums are tensor contractions of up to three copies
//! of `A`, evaluated by variable elimination; the score side reduces to
//! products of power sums.

use crate::error::{Result, RobkatError};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;

/// Mean, variance and skewness of the permutation distribution of `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationMoments {
    pub mean: f64,
    pub variance: f64,
    /// Reported as 0 when the variance is 0.
    pub skewness: f64,
}

impl PermutationMoments {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.variance > 0.0)
    }

    pub(crate) fn degenerate(mean: f64) -> Self {
        PermutationMoments {
            mean,
            variance: 0.0,
            skewness: 0.0,
        }
    }
}

/// A set partition in restricted-growth form: `labels[i]` is the block of
/// element `i`, blocks numbered by first appearance.
type Partition = Vec<u8>;

fn partitions(len: usize) -> Vec<Partition> {
    fn extend(prefix: &mut Partition, len: usize, max: u8, out: &mut Vec<Partition>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        let next = if prefix.is_empty() { 0 } else { max + 1 };
        for label in 0..=next {
            prefix.push(label);
            extend(prefix, len, max.max(label), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if len == 0 {
        out.push(Vec::new());
    } else {
        extend(&mut Vec::with_capacity(len), len, 0, &mut out);
    }
    out
}

fn block_count(p: &[u8]) -> usize {
    p.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
}

fn block_sizes(p: &[u8]) -> Vec<usize> {
    let mut sizes = vec![0; block_count(p)];
    for &l in p {
        sizes[l as usize] += 1;
    }
    sizes
}

/// `μ(0̂, ρ)` on the partition lattice: `Π_B (−1)^{|B|−1} (|B|−1)!`.
fn mobius(rho: &[u8]) -> f64 {
    block_sizes(rho)
        .into_iter()
        .map(|s| {
            let fact: f64 = (1..s).map(|k| k as f64).product();
            if s % 2 == 0 {
                -fact
            } else {
                fact
            }
        })
        .product()
}

/// Relabel to restricted-growth form.
fn normalize(labels: &[u8]) -> Partition {
    let mut map = [u8::MAX; 16];
    let mut next = 0u8;
    labels
        .iter()
        .map(|&l| {
            if map[l as usize] == u8::MAX {
                map[l as usize] = next;
                next += 1;
            }
            map[l as usize]
        })
        .collect()
}

fn falling_factorial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

enum Factor {
    Scalar(f64),
    Vector(usize, DVector<f64>),
    /// `data[(i, j)]` is the value at `(x_a = i, x_b = j)`; `a < b`.
    Matrix(usize, usize, DMatrix<f64>),
}

impl Factor {
    fn vars(&self) -> Vec<usize> {
        match self {
            Factor::Scalar(_) => Vec::new(),
            Factor::Vector(v, _) => vec![*v],
            Factor::Matrix(a, b, _) => vec![*a, *b],
        }
    }
}

/// `Σ_x Π_{(u,v) ∈ edges} A[x_u, x_v]` for a graph on vertices `0..n_vertices`.
fn contract(a: &DMatrix<f64>, diag: &DVector<f64>, edges: &[(usize, usize)]) -> Result<f64> {
    let n = a.nrows();
    let mut factors: Vec<Factor> = edges
        .iter()
        .map(|&(u, v)| {
            if u == v {
                Factor::Vector(u, diag.clone())
            } else {
                Factor::Matrix(u.min(v), u.max(v), a.clone())
            }
        })
        .collect();

    loop {
        // pick the variable with the fewest distinct neighbours
        let mut best: Option<(usize, usize)> = None;
        let mut all_vars: Vec<usize> = factors.iter().flat_map(Factor::vars).collect();
        all_vars.sort_unstable();
        all_vars.dedup();
        if all_vars.is_empty() {
            break;
        }
        for &x in &all_vars {
            let mut nbrs: Vec<usize> = factors
                .iter()
                .filter(|f| f.vars().contains(&x))
                .flat_map(Factor::vars)
                .filter(|&y| y != x)
                .collect();
            nbrs.sort_unstable();
            nbrs.dedup();
            if best.map_or(true, |(_, d)| nbrs.len() < d) {
                best = Some((x, nbrs.len()));
            }
        }
        let (x, _) = best.expect("non-empty variable set");

        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars().contains(&x));
        factors = rest;

        let mut unary = DVector::<f64>::from_element(n, 1.0);
        // neighbour -> matrix indexed (x, neighbour)
        let mut binary: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for f in touching {
            match f {
                Factor::Vector(_, d) => unary.component_mul_assign(&d),
                Factor::Matrix(p, q, m) => {
                    let (other, oriented) = if p == x { (q, m) } else { (p, m.transpose()) };
                    match binary.iter_mut().find(|(o, _)| *o == other) {
                        Some((_, acc)) => acc.component_mul_assign(&oriented),
                        None => binary.push((other, oriented)),
                    }
                }
                Factor::Scalar(_) => unreachable!("scalars carry no variables"),
            }
        }
        binary.sort_by_key(|(o, _)| *o);
        let produced = match binary.as_slice() {
            [] => Factor::Scalar(unary.sum()),
            [(y, m)] => Factor::Vector(*y, m.tr_mul(&unary)),
            [(y, my), (z, mz)] => {
                let mut scaled = mz.clone();
                for (mut row, &u) in scaled.row_iter_mut().zip(unary.iter()) {
                    row *= u;
                }
                Factor::Matrix(*y, *z, my.tr_mul(&scaled))
            }
            _ => {
                return Err(RobkatError::Numerical(
                    "contraction graph exceeds supported width".into(),
                ))
            }
        };
        factors.push(produced);
    }

    Ok(factors
        .into_iter()
        .map(|f| match f {
            Factor::Scalar(s) => s,
            _ => unreachable!("all variables eliminated"),
        })
        .product())
}

/// Canonical edge list of the multigraph induced by a slot partition, up to
/// vertex relabelling.
fn canonical_edges(slots: &[u8]) -> Vec<(usize, usize)> {
    let verts = block_count(slots);
    let raw: Vec<(usize, usize)> = slots
        .chunks(2)
        .map(|c| (c[0] as usize, c[1] as usize))
        .collect();
    let mut perm: Vec<usize> = (0..verts).collect();
    let mut best: Option<Vec<(usize, usize)>> = None;
    loop {
        let mut e: Vec<(usize, usize)> = raw
            .iter()
            .map(|&(u, v)| {
                let (pu, pv) = (perm[u], perm[v]);
                (pu.min(pv), pu.max(pv))
            })
            .collect();
        e.sort_unstable();
        if best.as_ref().map_or(true, |b| e < *b) {
            best = Some(e);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best.unwrap_or_default()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

struct KernelSums<'a> {
    a: &'a DMatrix<f64>,
    diag: DVector<f64>,
    by_partition: HashMap<Partition, f64>,
    by_graph: HashMap<Vec<(usize, usize)>, f64>,
}

impl<'a> KernelSums<'a> {
    fn new(a: &'a DMatrix<f64>) -> Self {
        KernelSums {
            a,
            diag: a.diagonal(),
            by_partition: HashMap::new(),
            by_graph: HashMap::new(),
        }
    }

    /// Sum of `Π A` over index tuples whose slot equalities include `slots`.
    fn at_least(&mut self, slots: &[u8]) -> Result<f64> {
        if let Some(&v) = self.by_partition.get(slots) {
            return Ok(v);
        }
        let graph = canonical_edges(slots);
        let v = match self.by_graph.get(&graph) {
            Some(&v) => v,
            None => {
                let v = contract(self.a, &self.diag, &graph)?;
                self.by_graph.insert(graph, v);
                v
            }
        };
        self.by_partition.insert(slots.to_vec(), v);
        Ok(v)
    }
}

/// Raw moments `E[T], E[T²], E[T³]` under uniform permutation of `v`.
fn raw_moments(a: &DMatrix<f64>, v: &[f64]) -> Result<[f64; 3]> {
    let n = v.len();
    let power_sums: Vec<f64> = (0..=6)
        .map(|k| v.iter().map(|x| x.powi(k as i32)).sum())
        .collect();
    let mut kernel = KernelSums::new(a);
    let coarsenings: Vec<Vec<(Partition, f64)>> = (0..=6)
        .map(|b| partitions(b).into_iter().map(|r| {
            let mu = mobius(&r);
            (r, mu)
        }).collect())
        .collect();

    let mut out = [0.0; 3];
    for (m, slot) in out.iter_mut().enumerate() {
        let len = 2 * (m + 1);
        let mut total = 0.0;
        for sigma in partitions(len) {
            let blocks = block_count(&sigma);
            if blocks > n {
                continue;
            }
            let mut exact_kernel = 0.0;
            let mut exact_score = 0.0;
            for (rho, mu) in &coarsenings[blocks] {
                let merged: Vec<u8> = sigma.iter().map(|&l| rho[l as usize]).collect();
                let tau = normalize(&merged);
                exact_kernel += mu * kernel.at_least(&tau)?;
                exact_score += mu
                    * block_sizes(&tau)
                        .into_iter()
                        .map(|s| power_sums[s])
                        .product::<f64>();
            }
            total += exact_kernel * exact_score / falling_factorial(n, blocks);
        }
        *slot = total;
    }
    Ok(out)
}

/// Relative size below which a centered score vector is treated as constant.
pub(crate) const CONSTANT_SCORE_TOL: f64 = 1e-12;

/// Center `w`; `None` if it is numerically constant.
pub(crate) fn centered_scores(w: &[f64]) -> Option<Vec<f64>> {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let v: Vec<f64> = w.iter().map(|x| x - mean).collect();
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let spread = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if spread <= CONSTANT_SCORE_TOL * scale || spread == 0.0 {
        None
    } else {
        Some(v)
    }
}

/// Exact mean, variance and skewness of `T = wᵀ Kc w` over all `n!`
/// permutations of the entries of `w`. `kc` must be doubly centered.
pub fn permutation_moments(kc: &DMatrix<f64>, w: &[f64]) -> Result<PermutationMoments> {
    let n = w.len();
    if n < 3 {
        return Err(RobkatError::Input(format!(
            "permutation moments need n >= 3, got {n}"
        )));
    }
    if kc.nrows() != n || kc.ncols() != n {
        return Err(RobkatError::Input(format!(
            "kernel is {}x{} but the score vector has length {n}",
            kc.nrows(),
            kc.ncols()
        )));
    }
    let Some(v) = centered_scores(w) else {
        return Ok(PermutationMoments::degenerate(0.0));
    };
    let [m1, m2, m3] = raw_moments(kc, &v)?;
    let variance = m2 - m1 * m1;
    let third = m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1;
    // Relative to the second raw moment, a variance at roundoff level is zero.
    if !(variance > 1e-13 * m2.abs()) {
        return Ok(PermutationMoments::degenerate(m1));
    }
    if !(m1.is_finite() && variance.is_finite() && third.is_finite()) {
        return Err(RobkatError::Numerical("non-finite permutation moments".into()));
    }
    Ok(PermutationMoments {
        mean: m1,
        variance,
        skewness: third / variance.powf(1.5),
    })
}
