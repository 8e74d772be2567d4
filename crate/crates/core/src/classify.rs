//! Discriminant classification of new subjects into trained clusters.
//!
//! Training rounds each cluster's posterior indicators to 0/1. A new subject
//! is scored against every cluster by refitting its own means and variances
//! in closed form under that cluster's indicators; the best score wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::fit_cluster;
use crate::density::ln_phi;
use crate::error::{Error, Result};
use crate::model::{DataSet, FitConfig, Partition};

/// Rounded indicators of one trained cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndicators {
    pub label: String,
    /// `w_hat[k][j]`: probe `j` of platform `k` belongs to component 1.
    pub w_hat: Vec<Vec<bool>>,
    /// Per platform: every indicator has the same value.
    pub one_sided: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub platform_ids: Vec<String>,
    pub probe_ids: Vec<Vec<String>>,
    pub clusters: Vec<ClusterIndicators>,
}

/// Closed-form mean and variance of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalEstimate {
    pub mu: f64,
    pub var: f64,
}

/// Discriminant fit on one platform; an empty component is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformDiscriminant {
    pub component1: Option<NormalEstimate>,
    pub component2: Option<NormalEstimate>,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantFit {
    pub platforms: Vec<PlatformDiscriminant>,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: String,
    pub cluster: usize,
    /// Maximized discriminant log-likelihood per cluster; `None` if degenerate.
    pub scores: Vec<Option<f64>>,
}

fn component_estimate(
    y: &[f64],
    w: &[bool],
    side: bool,
    platform: usize,
    component: u8,
) -> Result<Option<(NormalEstimate, f64)>> {
    let values: Vec<f64> = y.iter().zip(w).filter(|(_, &b)| b == side).map(|(v, _)| *v).collect();
    if values.is_empty() {
        return Ok(None);
    }
    let m = values.len() as f64;
    let mu = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance { platform, component });
    }
    let ll = values.iter().map(|&v| ln_phi(v, mu, var)).sum();
    Ok(Some((NormalEstimate { mu, var }, ll)))
}

/// Weighted-mean and variance estimators that maximize the discriminant
/// likelihood under fixed indicators, with the maximized log-likelihood.
pub fn closed_form_theta(profile: &[&[f64]], w_hat: &[Vec<bool>]) -> Result<DiscriminantFit> {
    if profile.len() != w_hat.len() {
        return Err(Error::Dimension(format!(
            "{} platforms in profile, {} in indicators",
            profile.len(),
            w_hat.len()
        )));
    }
    let mut platforms = Vec::with_capacity(profile.len());
    for (k, (y, w)) in profile.iter().zip(w_hat).enumerate() {
        if y.len() != w.len() {
            return Err(Error::Dimension(format!(
                "platform {k}: {} values for {} indicators",
                y.len(),
                w.len()
            )));
        }
        let c1 = component_estimate(y, w, true, k, 1)?;
        let c2 = component_estimate(y, w, false, k, 2)?;
        let loglik = c1.map_or(0.0, |c| c.1) + c2.map_or(0.0, |c| c.1);
        platforms.push(PlatformDiscriminant {
            component1: c1.map(|c| c.0),
            component2: c2.map(|c| c.0),
            loglik,
        });
    }
    let loglik = platforms.iter().map(|p| p.loglik).sum();
    Ok(DiscriminantFit { platforms, loglik })
}

/// Fits every cluster of `partition` and rounds its posterior indicators at 0.5.
pub fn train_classifier(data: &DataSet, partition: &Partition, config: &FitConfig) -> Result<Classifier> {
    if partition.n() != data.n_subjects() {
        return Err(Error::Dimension(format!(
            "partition covers {} subjects, data has {}",
            partition.n(),
            data.n_subjects()
        )));
    }
    let fits = partition
        .clusters()
        .par_iter()
        .map(|members| fit_cluster(data, members, None, config))
        .collect::<Result<Vec<_>>>()?;
    let clusters = fits
        .iter()
        .enumerate()
        .map(|(c, fit)| {
            let w_hat: Vec<Vec<bool>> = fit
                .gamma
                .iter()
                .map(|g| g.iter().map(|&x| x >= 0.5).collect())
                .collect();
            let one_sided = w_hat
                .iter()
                .map(|w| w.iter().all(|&b| b) || w.iter().all(|&b| !b))
                .collect();
            ClusterIndicators {
                label: c.to_string(),
                w_hat,
                one_sided,
            }
        })
        .collect();
    Ok(Classifier {
        platform_ids: data.platforms().iter().map(|p| p.platform_id().to_string()).collect(),
        probe_ids: data.platforms().iter().map(|p| p.probe_ids().to_vec()).collect(),
        clusters,
    })
}

/// Scores a profile against every cluster and returns the argmax.
///
/// Ties go to the earliest cluster in training order.
pub fn classify_subject(profile: &[&[f64]], classifier: &Classifier) -> Result<Classification> {
    if profile.len() != classifier.platform_ids.len() {
        return Err(Error::Dimension(format!(
            "profile has {} platforms, classifier {}",
            profile.len(),
            classifier.platform_ids.len()
        )));
    }
    for (k, (y, ids)) in profile.iter().zip(&classifier.probe_ids).enumerate() {
        if y.len() != ids.len() {
            return Err(Error::Dimension(format!(
                "platform {k}: profile has {} probes, classifier {}",
                y.len(),
                ids.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("profile contains non-finite values".into()));
        }
    }
    let mut scores = Vec::with_capacity(classifier.clusters.len());
    for cluster in &classifier.clusters {
        match closed_form_theta(profile, &cluster.w_hat) {
            Ok(fit) => scores.push(Some(fit.loglik)),
            Err(Error::DegenerateVariance { .. }) => scores.push(None),
            Err(e) => return Err(e),
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (c, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
    }
    let (cluster, _) = best.ok_or(Error::Unclassifiable)?;
    Ok(Classification {
        label: classifier.clusters[cluster].label.clone(),
        cluster,
        scores,
    })
}

impl Classifier {
    /// Reorders `data` onto the classifier's platforms and probes.
    ///
    /// Every classifier probe must be present; extra probes are ignored.
    pub fn align(&self, data: &DataSet) -> Result<DataSet> {
        let mut platforms = Vec::with_capacity(self.platform_ids.len());
        for (pid, probes) in self.platform_ids.iter().zip(&self.probe_ids) {
            let plat = data
                .platforms()
                .iter()
                .find(|p| p.platform_id() == pid)
                .ok_or_else(|| Error::InvalidData(format!("platform {pid:?} missing from input")))?;
            let index: std::collections::HashMap<&str, usize> = plat
                .probe_ids()
                .iter()
                .enumerate()
                .map(|(j, id)| (id.as_str(), j))
                .collect();
            let mut keep = Vec::with_capacity(probes.len());
            let mut missing = 0usize;
            for id in probes {
                match index.get(id.as_str()) {
                    Some(&j) => keep.push(j),
                    None => missing += 1,
                }
            }
            if missing > 0 {
                return Err(Error::InvalidData(format!(
                    "platform {pid:?}: {missing} of {} classifier probes missing from input",
                    probes.len()
                )));
            }
            platforms.push(plat.select_probes(&keep)?);
        }
        DataSet::new(platforms)
    }

    /// Classifies every subject of an aligned data set.
    pub fn classify_all(&self, data: &DataSet) -> Result<Vec<Classification>> {
        (0..data.n_subjects())
            .into_par_iter()
            .map(|i| classify_subject(&data.profile(i), self))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ClassifierFile {
            platforms: self
                .platform_ids
                .iter()
                .zip(&self.probe_ids)
                .map(|(id, probes)| PlatformEntry {
                    platform_id: id.clone(),
                    probe_ids: probes.clone(),
                })
                .collect(),
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterEntry {
                    label: c.label.clone(),
                    one_sided: c.one_sided.clone(),
                    w_hat: c.w_hat.iter().map(|w| pack_bits(w)).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClassifierFile = serde_json::from_str(text)?;
        let lens: Vec<usize> = file.platforms.iter().map(|p| p.probe_ids.len()).collect();
        let clusters = file
            .clusters
            .into_iter()
            .map(|c| {
                if c.w_hat.len() != lens.len() {
                    return Err(Error::InvalidData(format!(
                        "cluster {:?} has indicators for {} platforms, expected {}",
                        c.label,
                        c.w_hat.len(),
                        lens.len()
                    )));
                }
                let w_hat = c
                    .w_hat
                    .iter()
                    .zip(&lens)
                    .map(|(hex, &len)| unpack_bits(hex, len))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ClusterIndicators {
                    label: c.label,
                    one_sided: c.one_sided,
                    w_hat,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            platform_ids: file.platforms.iter().map(|p| p.platform_id.clone()).collect(),
            probe_ids: file.platforms.into_iter().map(|p| p.probe_ids).collect(),
            clusters,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    platforms: Vec<PlatformEntry>,
    clusters: Vec<ClusterEntry>,
}

#[derive(Serialize, Deserialize)]
struct PlatformEntry {
    platform_id: String,
    probe_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ClusterEntry {
    label: String,
    one_sided: Vec<bool>,
    /// Hex string, bit `j` of byte `j / 8` at position `j % 8`.
    w_hat: Vec<String>,
}

fn pack_bits(bits: &[bool]) -> String {
    bits.chunks(8)
        .map(|chunk| {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (r, &b)| acc | ((b as u8) << r));
            format!("{byte:02x}")
        })
        .collect()
}

fn unpack_bits(hex: &str, len: usize) -> Result<Vec<bool>> {
    if hex.len() != len.div_ceil(8) * 2 {
        return Err(Error::InvalidData(format!(
            "packed indicator string of length {} does not fit {len} probes",
            hex.len()
        )));
    }
    let mut out = Vec::with_capacity(len);
    for m in 0..hex.len() / 2 {
        let byte = u8::from_str_radix(&hex[2 * m..2 * m + 2], 16)
            .map_err(|e| Error::InvalidData(format!("bad packed indicators: {e}")))?;
        for r in 0..8 {
            if out.len() < len {
                out.push(byte >> r & 1 == 1);
            }
        }
    }
    Ok(out)
}
