//! Greedy agglomeration on the partition likelihood.
//!
//! Starting from singletons, every step merges the pair of clusters whose
//! union gains the most log-likelihood, `ℓ(a ∪ b) − ℓ(a) − ℓ(b)`. Union fits
//! are warm-started from the current member estimates and cached per pair;
//! after a merge only pairs involving the new cluster need fitting.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{fit_cluster, ClusterInit};
use crate::error::{Error, Result};
use crate::model::{ClusterFit, DataSet, FitConfig, Partition};
use crate::subject::fit_all_subjects;

/// One agglomeration step. Clusters are named by creation index: subjects are
/// `0..n`, the cluster formed at step `t` (0-based) is `n + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    /// ℓ of the whole partition after this merge.
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    /// ℓ after `t` merges, i.e. at K = n − t.
    pub loglik_trace: Vec<f64>,
    pub subject_ids: Vec<String>,
}

/// A dendrogram together with the fit of every cluster it created.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub dendrogram: Dendrogram,
    /// Indexed by creation index.
    pub fits: Vec<ClusterFit>,
}

impl Dendrogram {
    pub fn n(&self) -> usize {
        self.subject_ids.len()
    }

    /// Member lists of every cluster by creation index.
    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut members: Vec<Vec<usize>> = (0..self.n()).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut union = members[m.cluster_a].clone();
            union.extend_from_slice(&members[m.cluster_b]);
            union.sort_unstable();
            members.push(union);
        }
        members
    }

    /// Creation indices of the clusters alive after `t` merges, ordered by
    /// their smallest member.
    pub fn alive_after(&self, t: usize) -> Result<Vec<usize>> {
        if t > self.merges.len() {
            return Err(Error::InvalidData(format!(
                "dendrogram has {} merges, asked for step {t}",
                self.merges.len()
            )));
        }
        let n = self.n();
        let mut alive: BTreeSet<usize> = (0..n).collect();
        for (s, m) in self.merges[..t].iter().enumerate() {
            alive.remove(&m.cluster_a);
            alive.remove(&m.cluster_b);
            alive.insert(n + s);
        }
        let members = self.cluster_members();
        let mut out: Vec<usize> = alive.into_iter().collect();
        out.sort_by_key(|&c| members[c][0]);
        Ok(out)
    }

    /// Partition after `t` merges, labelled by smallest member.
    pub fn partition_after(&self, t: usize) -> Result<Partition> {
        let alive = self.alive_after(t)?;
        let members = self.cluster_members();
        let clusters: Vec<Vec<usize>> = alive.iter().map(|&c| members[c].clone()).collect();
        Partition::from_clusters(self.n(), &clusters)
    }

    /// Partition with `k` clusters.
    pub fn partition_at_k(&self, k: usize) -> Result<Partition> {
        if k == 0 || k > self.n() {
            return Err(Error::InvalidData(format!("K = {k} outside 1..={}", self.n())));
        }
        self.partition_after(self.n() - k)
    }

    /// Newick text with node heights equal to the merge step (leaves at 0).
    pub fn to_newick(&self) -> String {
        let n = self.n();
        if self.merges.is_empty() {
            return format!("{};", newick_label(&self.subject_ids[0]));
        }
        let height = |c: usize| if c < n { 0 } else { c - n + 1 };
        // iterative post-order so deep trees do not overflow the stack
        let mut rendered: Vec<Option<String>> = vec![None; n + self.merges.len()];
        for (i, id) in self.subject_ids.iter().enumerate() {
            rendered[i] = Some(newick_label(id));
        }
        for (s, m) in self.merges.iter().enumerate() {
            let node = n + s;
            let h = height(node);
            let a = rendered[m.cluster_a].take().expect("child rendered once");
            let b = rendered[m.cluster_b].take().expect("child rendered once");
            rendered[node] = Some(format!(
                "({a}:{},{b}:{})",
                h - height(m.cluster_a),
                h - height(m.cluster_b)
            ));
        }
        format!("{};", rendered.pop().flatten().unwrap_or_default())
    }
}

fn newick_label(id: &str) -> String {
    let special = |c: char| c.is_whitespace() || "()[]':;,".contains(c);
    if id.is_empty() || id.chars().any(special) {
        format!("'{}'", id.replace('\'', "''"))
    } else {
        id.to_string()
    }
}

fn singleton_fit(i: usize, fit: &crate::subject::SubjectFitResult) -> ClusterFit {
    ClusterFit {
        members: vec![i],
        pi1: fit.pi1.clone(),
        gamma: fit.posteriors.clone(),
        theta: vec![fit.theta.clone()],
        loglik: fit.loglik,
    }
}

/// Fits the union of two clusters, members sorted ascending.
fn fit_union(data: &DataSet, a: &ClusterFit, b: &ClusterFit, config: &FitConfig) -> Option<ClusterFit> {
    let merged = ClusterInit::merged(a, b);
    let mut order: Vec<(usize, usize)> = a
        .members
        .iter()
        .chain(&b.members)
        .copied()
        .enumerate()
        .map(|(pos, m)| (m, pos))
        .collect();
    order.sort_unstable();
    let members: Vec<usize> = order.iter().map(|&(m, _)| m).collect();
    let init = ClusterInit {
        theta: order.iter().map(|&(_, pos)| merged.theta[pos].clone()).collect(),
        pi1: merged.pi1,
    };
    let warm = fit_cluster(data, &members, Some(&init), config).ok();
    if !config.merge_cold_restart {
        return warm;
    }
    let cold = fit_cluster(data, &members, None, config).ok();
    match (warm, cold) {
        (Some(w), Some(c)) => Some(if c.loglik > w.loglik { c } else { w }),
        (w, c) => w.or(c),
    }
}

/// Builds the full merge trace from singletons to one cluster.
pub fn build_hierarchy(data: &DataSet, config: &FitConfig) -> Result<Hierarchy> {
    config.validate()?;
    let n = data.n_subjects();
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "hierarchical clustering needs at least 2 subjects, got {n}"
        )));
    }
    let subject_fits = fit_all_subjects(data, config)?;
    let mut fits: Vec<ClusterFit> = subject_fits
        .iter()
        .enumerate()
        .map(|(i, f)| singleton_fit(i, f))
        .collect();
    let mut current: f64 = fits.iter().map(|f| f.loglik).sum();
    let mut trace = vec![current];
    let mut merges = Vec::with_capacity(n - 1);
    let mut active: BTreeSet<usize> = (0..n).collect();

    let evaluate = |pairs: Vec<(usize, usize)>, fits: &[ClusterFit]| -> Vec<((usize, usize), Option<ClusterFit>)> {
        pairs
            .into_par_iter()
            .map(|(a, b)| ((a, b), fit_union(data, &fits[a], &fits[b], config)))
            .collect()
    };

    let initial: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut cache: HashMap<(usize, usize), Option<ClusterFit>> = evaluate(initial, &fits).into_iter().collect();

    for step in 0..n - 1 {
        let mut best: Option<((usize, usize), f64)> = None;
        let ids: Vec<usize> = active.iter().copied().collect();
        for (x, &a) in ids.iter().enumerate() {
            for &b in &ids[x + 1..] {
                let Some(Some(fit)) = cache.get(&(a, b)) else { continue };
                let gain = fit.loglik - fits[a].loglik - fits[b].loglik;
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some(((a, b), gain));
                }
            }
        }
        let ((a, b), gain) = best.ok_or(Error::NoValidMerge)?;
        let union = cache.remove(&(a, b)).flatten().expect("best pair has a cached fit");
        let new_id = n + step;
        active.remove(&a);
        active.remove(&b);
        cache.retain(|&(x, y), _| x != a && x != b && y != a && y != b);
        fits.push(union);
        current += gain;
        trace.push(current);
        merges.push(Merge {
            cluster_a: a,
            cluster_b: b,
            loglik: current,
        });
        log::debug!("merge {step}: {a} + {b} -> {new_id}, gain {gain:.6}, loglik {current:.6}");
        let fresh: Vec<(usize, usize)> = active.iter().map(|&c| (c, new_id)).collect();
        cache.extend(evaluate(fresh, &fits));
        active.insert(new_id);
    }

    Ok(Hierarchy {
        dendrogram: Dendrogram {
            merges,
            loglik_trace: trace,
            subject_ids: data.subject_ids().to_vec(),
        },
        fits,
    })
}

/// Greedy agglomerative clustering; returns only the merge trace.
pub fn hierarchical_cluster(data: &DataSet, config: &FitConfig) -> Result<Dendrogram> {
    build_hierarchy(data, config).map(|h| h.dendrogram)
}

/// Number of merges leading to the selected partition.
///
/// `forced_k` wins over everything else; otherwise the trace argmax is taken,
/// restricted to partitions whose smallest cluster has at least
/// `min_cluster_size` members when that bound is given.
pub fn select_step(dendrogram: &Dendrogram, min_cluster_size: Option<usize>, forced_k: Option<usize>) -> Result<usize> {
    let n = dendrogram.n();
    if dendrogram.loglik_trace.len() != n || dendrogram.merges.len() + 1 != n {
        return Err(Error::InvalidData("dendrogram is incomplete".into()));
    }
    if let Some(k) = forced_k {
        if k == 0 || k > n {
            return Err(Error::InvalidData(format!("forced K = {k} outside 1..={n}")));
        }
        return Ok(n - k);
    }
    let members = dendrogram.cluster_members();
    let mut best: Option<(usize, f64)> = None;
    for (t, &ll) in dendrogram.loglik_trace.iter().enumerate() {
        if let Some(m) = min_cluster_size {
            let smallest = dendrogram
                .alive_after(t)?
                .iter()
                .map(|&c| members[c].len())
                .min()
                .unwrap_or(0);
            if smallest < m {
                continue;
            }
        }
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((t, ll));
        }
    }
    best.map(|(t, _)| t).ok_or_else(|| {
        Error::InvalidData(format!(
            "no partition in the trace has clusters of size >= {}",
            min_cluster_size.unwrap_or(0)
        ))
    })
}

/// The likelihood-selected partition of a dendrogram.
pub fn select_partition(
    dendrogram: &Dendrogram,
    min_cluster_size: Option<usize>,
    forced_k: Option<usize>,
) -> Result<Partition> {
    let t = select_step(dendrogram, min_cluster_size, forced_k)?;
    dendrogram.partition_after(t)
}

impl Hierarchy {
    /// Fits of the clusters alive after `t` merges, in partition label order.
    pub fn fits_after(&self, t: usize) -> Result<Vec<ClusterFit>> {
        Ok(self
            .dendrogram
            .alive_after(t)?
            .into_iter()
            .map(|c| self.fits[c].clone())
            .collect())
    }
}
