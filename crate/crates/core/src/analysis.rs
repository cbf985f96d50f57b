//! Pairwise preference analysis: win-rate matrices and Bradley-Terry fits
//! anchored on a reference constitution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ConstitutionId, DimensionId};

/// `(winner, loser)`.
pub type Pair = (ConstitutionId, ConstitutionId);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("comparison of `{0}` with itself")]
    SelfComparison(ConstitutionId),
    #[error("unknown item `{0}`")]
    UnknownItem(ConstitutionId),
    #[error("malformed count matrix: {0}")]
    Shape(String),
    #[error("reference `{0}` has no comparisons")]
    ReferenceUnobserved(ConstitutionId),
    #[error("comparison graph is disconnected: {components:?}")]
    Disconnected { components: Vec<Vec<ConstitutionId>> },
    #[error("maximum likelihood estimate does not exist: {detail}")]
    Divergent { detail: String },
    #[error("information matrix is singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonCounts {
    pub dimension: DimensionId,
    pub items: Vec<ConstitutionId>,
    /// `counts[i][j]`: times item `i` beat item `j`.
    pub counts: Vec<Vec<u64>>,
}

impl ComparisonCounts {
    pub fn new(dimension: DimensionId, items: Vec<ConstitutionId>) -> Self {
        let n = items.len();
        Self { dimension, items, counts: vec![vec![0; n]; n] }
    }

    pub fn from_matrix(
        dimension: DimensionId,
        items: Vec<ConstitutionId>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self, AnalysisError> {
        let n = items.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(AnalysisError::Shape(format!("expected {n}x{n}")));
        }
        if let Some(i) = (0..n).find(|&i| counts[i][i] != 0) {
            return Err(AnalysisError::SelfComparison(items[i].clone()));
        }
        Ok(Self { dimension, items, counts })
    }

    pub fn index_of(&self, id: &ConstitutionId) -> Option<usize> {
        self.items.iter().position(|i| i == id)
    }

    pub fn count(&self, winner: usize, loser: usize) -> u64 {
        self.counts[winner][loser]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Comparisons involving item `i`.
    pub fn involving(&self, i: usize) -> u64 {
        (0..self.items.len()).map(|j| self.counts[i][j] + self.counts[j][i]).sum()
    }
}

pub fn tally(pairs: &[Pair], dimension: DimensionId, items: &[ConstitutionId]) -> Result<ComparisonCounts, AnalysisError> {
    let mut counts = ComparisonCounts::new(dimension, items.to_vec());
    for (w, l) in pairs {
        if w == l {
            return Err(AnalysisError::SelfComparison(w.clone()));
        }
        let wi = counts.index_of(w).ok_or_else(|| AnalysisError::UnknownItem(w.clone()))?;
        let li = counts.index_of(l).ok_or_else(|| AnalysisError::UnknownItem(l.clone()))?;
        counts.counts[wi][li] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateMatrix {
    pub dimension: DimensionId,
    pub items: Vec<ConstitutionId>,
    /// Share of `i`-vs-`j` comparisons won by `i`; `None` without data.
    pub rates: Vec<Vec<Option<f64>>>,
}

pub fn win_rates(counts: &ComparisonCounts) -> WinRateMatrix {
    let n = counts.items.len();
    let rates = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let total = counts.count(i, j) + counts.count(j, i);
                    (total > 0).then(|| counts.count(i, j) as f64 / total as f64)
                })
                .collect()
        })
        .collect();
    WinRateMatrix { dimension: counts.dimension.clone(), items: counts.items.clone(), rates }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the gradient's max-norm.
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BTFit {
    pub dimension: DimensionId,
    pub reference: ConstitutionId,
    /// Items that took part in at least one comparison, in count order.
    pub items: Vec<ConstitutionId>,
    pub beta: BTreeMap<ConstitutionId, f64>,
    pub standard_error: BTreeMap<ConstitutionId, f64>,
    pub ci95: BTreeMap<ConstitutionId, (f64, f64)>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: u32,
    pub gradient_norm: f64,
}

impl BTFit {
    /// Fitted probability that `i` beats `j`.
    pub fn win_probability(&self, i: &ConstitutionId, j: &ConstitutionId) -> Option<f64> {
        Some(logistic(self.beta.get(i)? - self.beta.get(j)?))
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Items reachable from `start` along edges `i -> j` where `edge(i, j)`.
fn reachable(n: usize, start: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

fn quoted(items: &[ConstitutionId]) -> String {
    items.iter().map(|i| format!("`{i}`")).collect::<Vec<_>>().join(", ")
}

/// Checks that the maximum likelihood estimate exists: the comparison graph
/// must be connected and every item must be able to reach every other item
/// through a chain of wins.
fn check_identifiable(items: &[ConstitutionId], m: &[Vec<u64>]) -> Result<(), AnalysisError> {
    let n = items.len();
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut components = Vec::new();
    while let Some(&start) = unassigned.first() {
        let seen = reachable(n, start, |i, j| m[i][j] + m[j][i] > 0);
        components.push((0..n).filter(|&i| seen[i]).map(|i| items[i].clone()).collect::<Vec<_>>());
        unassigned.retain(|&i| !seen[i]);
    }
    if components.len() > 1 {
        return Err(AnalysisError::Disconnected { components });
    }

    for i in 0..n {
        let wins: u64 = m[i].iter().sum();
        let losses: u64 = (0..n).map(|j| m[j][i]).sum();
        if losses == 0 {
            return Err(AnalysisError::Divergent { detail: format!("`{}` never loses", items[i]) });
        }
        if wins == 0 {
            return Err(AnalysisError::Divergent { detail: format!("`{}` never wins", items[i]) });
        }
    }
    for start in 0..n {
        let beaten = reachable(n, start, |i, j| m[i][j] > 0);
        if beaten.iter().any(|b| !b) {
            let group: Vec<ConstitutionId> = (0..n).filter(|&i| beaten[i]).map(|i| items[i].clone()).collect();
            return Err(AnalysisError::Divergent {
                detail: format!("{} never win against the other items", quoted(&group)),
            });
        }
    }
    Ok(())
}

struct Objective<'a> {
    m: &'a [Vec<u64>],
    /// Position of each item in the free parameter vector; `None` for the
    /// reference.
    slot: Vec<Option<usize>>,
}

impl Objective<'_> {
    fn beta(&self, free: &DVector<f64>) -> Vec<f64> {
        self.slot.iter().map(|s| s.map_or(0.0, |k| free[k])).collect()
    }

    fn log_likelihood(&self, free: &DVector<f64>) -> f64 {
        let b = self.beta(free);
        let mut ll = 0.0;
        for (i, row) in self.m.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                if n > 0 {
                    ll -= n as f64 * softplus(b[j] - b[i]);
                }
            }
        }
        ll
    }

    /// Gradient of the log-likelihood and the observed information.
    fn derivatives(&self, free: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let b = self.beta(free);
        let k = free.len();
        let mut grad = DVector::zeros(k);
        let mut info = DMatrix::zeros(k, k);
        let n = self.m.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let total = (self.m[i][j] + self.m[j][i]) as f64;
                if total == 0.0 {
                    continue;
                }
                let p = logistic(b[i] - b[j]);
                // d/dβ_i of the (i, j) terms
                let g = self.m[i][j] as f64 - total * p;
                let w = total * p * (1.0 - p);
                if let Some(a) = self.slot[i] {
                    grad[a] += g;
                    info[(a, a)] += w;
                }
                if let Some(c) = self.slot[j] {
                    grad[c] -= g;
                    info[(c, c)] += w;
                }
                if let (Some(a), Some(c)) = (self.slot[i], self.slot[j]) {
                    info[(a, c)] -= w;
                    info[(c, a)] -= w;
                }
            }
        }
        (grad, info)
    }
}

/// Maximum likelihood Bradley-Terry fit with `beta[reference] = 0`, by damped
/// Newton iteration. Items without comparisons are left out of the fit.
///
/// Standard errors come from the inverse observed information of the free
/// parameters; the reference has a standard error of zero.
pub fn fit_bradley_terry(
    counts: &ComparisonCounts,
    reference: &ConstitutionId,
    opts: FitOptions,
) -> Result<BTFit, AnalysisError> {
    let ref_idx = counts.index_of(reference).ok_or_else(|| AnalysisError::UnknownItem(reference.clone()))?;
    if counts.involving(ref_idx) == 0 {
        return Err(AnalysisError::ReferenceUnobserved(reference.clone()));
    }
    let active: Vec<usize> = (0..counts.items.len()).filter(|&i| counts.involving(i) > 0).collect();
    let items: Vec<ConstitutionId> = active.iter().map(|&i| counts.items[i].clone()).collect();
    let m: Vec<Vec<u64>> = active.iter().map(|&i| active.iter().map(|&j| counts.count(i, j)).collect()).collect();
    check_identifiable(&items, &m)?;

    let mut next = 0;
    let slot: Vec<Option<usize>> = items
        .iter()
        .map(|id| {
            (id != reference).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    let objective = Objective { m: &m, slot };

    let mut free = DVector::zeros(next);
    let mut ll = objective.log_likelihood(&free);
    let mut iterations = 0;
    let (mut grad, mut info) = objective.derivatives(&free);
    let mut gradient_norm = grad.amax();
    while gradient_norm >= opts.tol && iterations < opts.max_iter {
        let step = info.clone().cholesky().ok_or(AnalysisError::Singular)?.solve(&grad);
        // near the optimum the likelihood change drops below rounding error
        let floor = ll - 8.0 * f64::EPSILON * ll.abs().max(1.0);
        let mut t = 1.0;
        let (candidate, candidate_ll) = loop {
            let candidate = &free + &step * t;
            let candidate_ll = objective.log_likelihood(&candidate);
            if candidate_ll >= floor || t < 1e-10 {
                break (candidate, candidate_ll);
            }
            t /= 2.0;
        };
        iterations += 1;
        if candidate_ll < floor {
            tracing::debug!(iterations, gradient_norm, "line search stalled");
            break;
        }
        free = candidate;
        ll = candidate_ll;
        (grad, info) = objective.derivatives(&free);
        gradient_norm = grad.amax();
    }
    let converged = gradient_norm < opts.tol;
    if !converged {
        tracing::warn!(dimension = %counts.dimension, iterations, gradient_norm, "Bradley-Terry fit did not converge");
    }

    let covariance = info.cholesky().ok_or(AnalysisError::Singular)?.inverse();
    let mut beta = BTreeMap::new();
    let mut standard_error = BTreeMap::new();
    let mut ci95 = BTreeMap::new();
    for (id, s) in items.iter().zip(&objective.slot) {
        let (b, se) = match *s {
            Some(k) => (free[k], covariance[(k, k)].max(0.0).sqrt()),
            None => (0.0, 0.0),
        };
        beta.insert(id.clone(), b);
        standard_error.insert(id.clone(), se);
        ci95.insert(id.clone(), (b - 1.96 * se, b + 1.96 * se));
    }
    Ok(BTFit {
        dimension: counts.dimension.clone(),
        reference: reference.clone(),
        items,
        beta,
        standard_error,
        ci95,
        log_likelihood: ll,
        converged,
        iterations,
        gradient_norm,
    })
}

/// Draws `n_per_pair` outcomes for every unordered pair of items, in input
/// order, with `P(i beats j) = logistic(beta_i - beta_j)`.
pub fn simulate_comparisons(beta_true: &[(ConstitutionId, f64)], n_per_pair: usize, seed: u64) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_per_pair * beta_true.len() * beta_true.len().saturating_sub(1) / 2);
    for (a, (i, bi)) in beta_true.iter().enumerate() {
        for (j, bj) in &beta_true[a + 1..] {
            let p = logistic(bi - bj);
            for _ in 0..n_per_pair {
                if rng.random::<f64>() < p {
                    out.push((i.clone(), j.clone()));
                } else {
                    out.push((j.clone(), i.clone()));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionStatus {
    Fitted,
    Empty,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionResult {
    pub dimension: DimensionId,
    pub status: DimensionStatus,
    pub n_comparisons: u64,
    pub counts: ComparisonCounts,
    pub win_rates: WinRateMatrix,
    pub fit: Option<BTFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub reference: ConstitutionId,
    pub items: Vec<ConstitutionId>,
    pub dimensions: Vec<DimensionResult>,
}

fn analyse_dimension(
    dimension: &DimensionId,
    pairs: &[Pair],
    items: &[ConstitutionId],
    reference: &ConstitutionId,
    opts: FitOptions,
) -> DimensionResult {
    let empty = ComparisonCounts::new(dimension.clone(), items.to_vec());
    let counts = match tally(pairs, dimension.clone(), items) {
        Ok(c) => c,
        Err(e) => {
            return DimensionResult {
                dimension: dimension.clone(),
                status: DimensionStatus::Failed,
                n_comparisons: pairs.len() as u64,
                win_rates: win_rates(&empty),
                counts: empty,
                fit: None,
                error: Some(e.to_string()),
            }
        }
    };
    let rates = win_rates(&counts);
    let (status, fit, error) = if counts.total() == 0 {
        (DimensionStatus::Empty, None, None)
    } else {
        match fit_bradley_terry(&counts, reference, opts) {
            Ok(f) => (DimensionStatus::Fitted, Some(f), None),
            Err(e) => {
                tracing::warn!(%dimension, error = %e, "dimension not fitted");
                (DimensionStatus::Failed, None, Some(e.to_string()))
            }
        }
    };
    DimensionResult {
        dimension: dimension.clone(),
        status,
        n_comparisons: counts.total(),
        counts,
        win_rates: rates,
        fit,
        error,
    }
}

/// Tallies and fits every dimension independently; a failure in one
/// dimension is recorded on that dimension only.
pub fn fit_all_dimensions(
    comparisons: &[(DimensionId, Vec<Pair>)],
    items: &[ConstitutionId],
    reference: &ConstitutionId,
    opts: FitOptions,
) -> AnalysisBundle {
    let dimensions = comparisons
        .par_iter()
        .map(|(d, pairs)| analyse_dimension(d, pairs, items, reference, opts))
        .collect();
    AnalysisBundle { reference: reference.clone(), items: items.to_vec(), dimensions }
}

impl AnalysisBundle {
    /// One row per fitted (dimension, constitution).
    pub fn plot_tsv(&self) -> String {
        let mut out = String::from("dimension\tconstitution\tbeta\tci_low\tci_high\n");
        for d in &self.dimensions {
            let Some(fit) = &d.fit else { continue };
            for id in &fit.items {
                let (lo, hi) = fit.ci95[id];
                writeln!(out, "{}\t{}\t{:.6}\t{:.6}\t{:.6}", d.dimension, id, fit.beta[id], lo, hi).unwrap();
            }
        }
        out
    }

    /// Human-readable tables: win-rate heatmap values and β with its interval.
    pub fn summary(&self) -> String {
        let width = self.items.iter().map(|i| i.as_str().len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        for d in &self.dimensions {
            writeln!(out, "== {} ({} comparisons) ==", d.dimension, d.n_comparisons).unwrap();
            match d.status {
                DimensionStatus::Empty => {
                    out.push_str("no comparisons\n\n");
                    continue;
                }
                DimensionStatus::Failed => {
                    writeln!(out, "not fitted: {}\n", d.error.as_deref().unwrap_or("")).unwrap();
                    continue;
                }
                DimensionStatus::Fitted => {}
            }
            write!(out, "{:width$}", "").unwrap();
            for id in &self.items {
                write!(out, "  {:>width$}", id.as_str()).unwrap();
            }
            out.push('\n');
            for (i, row) in d.win_rates.rates.iter().enumerate() {
                write!(out, "{:width$}", self.items[i].as_str()).unwrap();
                for rate in row {
                    match rate {
                        Some(r) => write!(out, "  {:>width$.3}", r).unwrap(),
                        None => write!(out, "  {:>width$}", "").unwrap(),
                    }
                }
                out.push('\n');
            }
            let fit = d.fit.as_ref().expect("fitted dimension");
            for id in &fit.items {
                let (lo, hi) = fit.ci95[id];
                writeln!(out, "beta {:width$} {:+.3} [{:+.3}, {:+.3}]", id.as_str(), fit.beta[id], lo, hi).unwrap();
            }
            if !fit.converged {
                writeln!(out, "warning: did not converge after {} iterations", fit.iterations).unwrap();
            }
            out.push('\n');
        }
        out
    }
}
