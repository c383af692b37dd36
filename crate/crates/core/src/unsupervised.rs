//! Standardization, PCA, k-means with elbow/silhouette scans, and NMI.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub n_columns: usize,
    /// Indices of the columns kept (non-constant), in order.
    pub kept: Vec<usize>,
    /// Indices of constant columns that were dropped.
    pub dropped: Vec<usize>,
    /// Mean of every original column.
    pub mean: Vec<f64>,
    /// Population standard deviation of every original column.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        if data.is_empty() || data[0].is_empty() {
            return Err(Error::EmptyData);
        }
        let p = data[0].len();
        if data.iter().any(|r| r.len() != p) {
            return Err(Error::MalformedInput("ragged data matrix".into()));
        }
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..p).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std: Vec<f64> = (0..p)
            .map(|j| (data.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..p).partition(|&j| std[j] > 1e-12 * mean[j].abs().max(1.0));
        for &j in &dropped {
            log::warn!("dropping constant column {j}");
        }
        Ok(Self {
            n_columns: p,
            kept,
            dropped,
            mean,
            std,
        })
    }

    pub fn apply(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        data.iter()
            .map(|r| self.kept.iter().map(|&j| (r[j] - self.mean[j]) / self.std[j]).collect())
            .collect()
    }

    /// Maps standardized rows back to the original column space; dropped
    /// columns take their constant value.
    pub fn invert(&self, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        z.iter()
            .map(|r| {
                let mut out = self.mean.clone();
                for (v, &j) in r.iter().zip(&self.kept) {
                    out[j] = v * self.std[j] + self.mean[j];
                }
                out
            })
            .collect()
    }
}

/// Z-scores every non-constant column (population std); constant columns
/// are dropped and recorded in the returned parameters.
pub fn standardize(data: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Standardizer)> {
    let s = Standardizer::fit(data)?;
    if s.kept.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok((s.apply(data), s))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distinct_rows(data: &[Vec<f64>]) -> usize {
    data.iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// Index of the winning restart.
    pub restart: usize,
    pub iterations: usize,
    /// WCSS after every assignment step of the winning restart.
    pub wcss_trace: Vec<f64>,
}

fn assign(data: &[Vec<f64>], centroids: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut total = 0.0;
    for (row, a) in data.iter().zip(out.iter_mut()) {
        let mut best = (0, f64::INFINITY);
        for (c, cen) in centroids.iter().enumerate() {
            let d = sq_dist(row, cen);
            if d < best.1 {
                best = (c, d);
            }
        }
        *a = best.0;
        total += best.1;
    }
    total
}

fn plus_plus_init<R: Rng>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![data[rng.gen_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen_range(0.0..1.0) * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = data[pick].clone();
        for (r, d) in data.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from the given centroids.
pub fn lloyd(data: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, opts: &KMeansOptions) -> KMeansResult {
    let k = centroids.len();
    let p = data[0].len();
    let mut assignments = vec![0; data.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        trace.push(assign(data, &centroids, &mut assignments));
        iterations += 1;
        let mut sums = vec![vec![0.0; p]; k];
        let mut counts = vec![0usize; k];
        for (row, &a) in data.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut taken = HashSet::new();
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let new = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // Re-seed at the point farthest from its own centroid.
                let far = (0..data.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| {
                        sq_dist(&data[a], &centroids[assignments[a]])
                            .total_cmp(&sq_dist(&data[b], &centroids[assignments[b]]))
                            .then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                taken.insert(far);
                data[far].clone()
            };
            shift = shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < opts.tol || iterations >= opts.max_iter {
            break;
        }
    }
    let wcss = assign(data, &centroids, &mut assignments);
    trace.push(wcss);
    KMeansResult {
        assignments,
        centroids,
        wcss,
        restart: 0,
        iterations,
        wcss_trace: trace,
    }
}

fn check_k(data: &[Vec<f64>], k: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let distinct = distinct_rows(data);
    if k > distinct {
        return Err(Error::KTooLarge { k, distinct });
    }
    Ok(())
}

fn best_of(runs: Vec<KMeansResult>) -> KMeansResult {
    runs.into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.restart = i;
            r
        })
        .min_by(|a, b| a.wcss.total_cmp(&b.wcss).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart")
}

/// Best of `n_init` k-means++ restarts by (wcss, restart index).
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansResult> {
    check_k(data, k)?;
    let runs: Vec<KMeansResult> = (0..opts.n_init.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
            lloyd(data, plus_plus_init(data, k, &mut rng), opts)
        })
        .collect();
    Ok(best_of(runs))
}

/// Mean silhouette coefficient; points alone in their cluster score 0.
pub fn silhouette(data: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    if data.len() != assignments.len() {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: assignments.len(),
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &a) in assignments.iter().enumerate() {
        members.entry(a).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::SingleCluster);
    }
    let s: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let own = &members[&assignments[i]];
            if own.len() == 1 {
                return 0.0;
            }
            let mean_to = |idx: &[usize]| idx.iter().map(|&j| sq_dist(&data[i], &data[j]).sqrt()).sum::<f64>();
            let a = mean_to(own) / (own.len() - 1) as f64;
            let b = members
                .iter()
                .filter(|(c, _)| **c != assignments[i])
                .map(|(_, idx)| mean_to(idx) / idx.len() as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the entropies;
/// 0 when either labeling is constant.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .sum();
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub standardizer: Standardizer,
    /// Orthonormal component vectors over the kept (standardized) columns,
    /// ordered by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Column means of the standardized data (zero up to rounding).
    pub mean: Vec<f64>,
}

pub fn pca(data: &[Vec<f64>]) -> Result<PcaModel> {
    if data.len() < 2 {
        return Err(Error::EmptyData);
    }
    let (z, standardizer) = standardize(data)?;
    let n = z.len();
    let p = z[0].len();
    let mean: Vec<f64> = (0..p).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| z[i][j] - mean[j]);
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = v
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map_or(1.0, |(_, x)| x);
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyData);
    }
    let explained_variance_ratio = eigenvalues.iter().map(|e| e / total).collect();
    Ok(PcaModel {
        standardizer,
        components,
        eigenvalues,
        explained_variance_ratio,
        mean,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Scores of raw rows on the first `n_components` components.
    pub fn project(&self, data: &[Vec<f64>], n_components: usize) -> Result<Vec<Vec<f64>>> {
        if n_components == 0 || n_components > self.components.len() {
            return Err(Error::Config(format!(
                "n_components must be in 1..={}, got {n_components}",
                self.components.len()
            )));
        }
        if let Some(r) = data.iter().find(|r| r.len() != self.standardizer.n_columns) {
            return Err(Error::FeatureMismatch(format!(
                "row has {} columns, model expects {}",
                r.len(),
                self.standardizer.n_columns
            )));
        }
        let z = self.standardizer.apply(data);
        Ok(z.iter()
            .map(|r| {
                self.components[..n_components]
                    .iter()
                    .map(|c| c.iter().zip(r).zip(&self.mean).map(|((ci, x), m)| ci * (x - m)).sum())
                    .collect()
            })
            .collect())
    }

    /// Inverse of `project` (exact when every component was kept).
    pub fn reconstruct(&self, scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let z: Vec<Vec<f64>> = scores
            .iter()
            .map(|s| {
                let mut row = self.mean.clone();
                for (sv, c) in s.iter().zip(&self.components) {
                    for (r, ci) in row.iter_mut().zip(c) {
                        *r += sv * ci;
                    }
                }
                row
            })
            .collect();
        self.standardizer.invert(&z)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["component", "explained_ratio", "cumulative_ratio"])?;
        let mut cum = 0.0;
        for (i, r) in self.explained_variance_ratio.iter().enumerate() {
            cum += r;
            w.write_record([(i + 1).to_string(), r.to_string(), cum.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub k: usize,
    pub wcss: f64,
    /// Absent for k = 1.
    pub silhouette: Option<f64>,
    /// Absent when no reference labels were given.
    pub nmi: Option<f64>,
    pub assignments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScan {
    pub with_pca: bool,
    pub rows: Vec<ScanRow>,
}

/// Farthest point from its nearest centroid; lowest index on ties.
fn farthest_point(data: &[Vec<f64>], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, -1.0);
    for (i, r) in data.iter().enumerate() {
        let d = centroids.iter().map(|c| sq_dist(r, c)).fold(f64::INFINITY, f64::min);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// k-means for every k in `k_values` on standardized (optionally
/// PCA-projected) data, with silhouette and NMI against `labels`.
///
/// Besides the k-means++ restarts, each k after the first also runs from
/// the previous k's centroids plus the farthest point, which keeps WCSS
/// non-increasing along the scan.
pub fn elbow_scan(
    data: &[Vec<f64>],
    labels: Option<&[usize]>,
    k_values: &[usize],
    seed: u64,
    with_pca: bool,
    n_components: usize,
    opts: &KMeansOptions,
) -> Result<ClusterScan> {
    if k_values.is_empty() || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("k range must be non-empty and increasing".into()));
    }
    if let Some(l) = labels {
        if l.len() != data.len() {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: l.len(),
            });
        }
    }
    let input = if with_pca {
        let model = pca(data)?;
        model.project(data, n_components.min(model.n_components()))?
    } else {
        standardize(data)?.0
    };
    let mut rows = Vec::new();
    let mut previous: Option<KMeansResult> = None;
    for &k in k_values {
        check_k(&input, k)?;
        let mut runs: Vec<KMeansResult> = (0..opts.n_init.max(1))
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, k as u64), r as u64));
                lloyd(&input, plus_plus_init(&input, k, &mut rng), opts)
            })
            .collect();
        if let Some(prev) = &previous {
            if prev.centroids.len() < k {
                let mut init = prev.centroids.clone();
                while init.len() < k {
                    let far = farthest_point(&input, &init);
                    init.push(input[far].clone());
                }
                runs.push(lloyd(&input, init, opts));
            }
        }
        let best = best_of(runs);
        let silhouette = if k >= 2 {
            Some(silhouette(&input, &best.assignments)?)
        } else {
            None
        };
        let nmi = labels.map(|l| nmi(&best.assignments, l)).transpose()?;
        rows.push(ScanRow {
            k,
            wcss: best.wcss,
            silhouette,
            nmi,
            assignments: best.assignments.clone(),
        });
        previous = Some(best);
    }
    Ok(ClusterScan { with_pca, rows })
}

impl ClusterScan {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "wcss", "silhouette", "nmi", "with_pca"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.wcss.to_string(),
                opt(r.silhouette),
                opt(r.nmi),
                self.with_pca.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
