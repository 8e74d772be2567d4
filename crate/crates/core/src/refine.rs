//! Mixture-of-clusters EM that improves a starting partition.
//!
//! Each cluster carries a fixed 0/1 indicator vector per platform and a
//! mixing weight; subjects keep their own component parameters. The E-step
//! gives membership probabilities τ, the M-step updates weights, subject
//! parameters and (unless frozen) the indicator vectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::fit_cluster;
use crate::density::{ln_phi, log_sum_exp};
use crate::error::{Error, Result};
use crate::model::{ClusterFit, ComponentParams, DataSet, FitConfig, Partition, SubjectParams};
use crate::subject::{fit_all_subjects, variance_floor};

/// Clusters whose total responsibility falls below this are dropped.
pub const EMPTY_CLUSTER_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub partition: Partition,
    /// `tau[i][c]` = posterior probability that subject `i` belongs to cluster `c`.
    pub tau: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    /// `w_fixed[c][k][j]`: probe `j` of platform `k` is in component 1 for cluster `c`.
    pub w_fixed: Vec<Vec<Vec<bool>>>,
    pub theta: Vec<SubjectParams>,
    pub mixture_loglik: f64,
    /// Partition likelihood of the output partition with freshly maximized cluster fits.
    pub objective_loglik: f64,
    /// Mixture log-likelihood after every E-step.
    pub trace: Vec<f64>,
    /// Cluster fits behind `objective_loglik`, in partition label order.
    #[serde(skip)]
    pub cluster_fits: Vec<ClusterFit>,
}

/// Per-subject, per-platform ln φ under each component.
struct LogDensities {
    /// `[i][k]` → (ln φ2 summed over probes, per-probe ln φ1 − ln φ2)
    base: Vec<Vec<f64>>,
    diff: Vec<Vec<Vec<f64>>>,
}

fn log_densities(data: &DataSet, theta: &[SubjectParams]) -> LogDensities {
    let per_subject: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..data.n_subjects())
        .into_par_iter()
        .map(|i| {
            let mut base = Vec::with_capacity(data.n_platforms());
            let mut diff = Vec::with_capacity(data.n_platforms());
            for (k, plat) in data.platforms().iter().enumerate() {
                let p = theta[i].platform(k);
                let mut b = 0.0;
                let d: Vec<f64> = plat
                    .subject(i)
                    .iter()
                    .map(|&y| {
                        let l2 = ln_phi(y, p.mu2, p.var2);
                        b += l2;
                        ln_phi(y, p.mu1, p.var1) - l2
                    })
                    .collect();
                base.push(b);
                diff.push(d);
            }
            (base, diff)
        })
        .collect();
    let (base, diff) = per_subject.into_iter().unzip();
    LogDensities { base, diff }
}

/// ℓ_ic for every subject and cluster.
fn subject_cluster_logliks(dens: &LogDensities, w: &[Vec<Vec<bool>>]) -> Vec<Vec<f64>> {
    dens.base
        .iter()
        .zip(&dens.diff)
        .map(|(base, diff)| {
            w.iter()
                .map(|wc| {
                    base.iter()
                        .zip(diff)
                        .zip(wc)
                        .map(|((b, d), wk)| b + d.iter().zip(wk).filter(|(_, &on)| on).map(|(x, _)| x).sum::<f64>())
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn estep(dens: &LogDensities, w: &[Vec<Vec<bool>>], p: &[f64]) -> (Vec<Vec<f64>>, f64) {
    let ll = subject_cluster_logliks(dens, w);
    let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let mut total = 0.0;
    let tau = ll
        .iter()
        .map(|row| {
            let terms: Vec<f64> = row.iter().zip(&log_p).map(|(l, lp)| l + lp).collect();
            let norm = log_sum_exp(&terms);
            total += norm;
            terms.iter().map(|t| (t - norm).exp()).collect()
        })
        .collect();
    (tau, total)
}

fn check_inputs(data: &DataSet, w: &[Vec<Vec<bool>>], theta: &[SubjectParams], p: &[f64]) -> Result<()> {
    if theta.len() != data.n_subjects() {
        return Err(Error::Dimension(format!(
            "{} parameter sets for {} subjects",
            theta.len(),
            data.n_subjects()
        )));
    }
    if w.len() != p.len() || w.is_empty() {
        return Err(Error::Dimension(format!(
            "{} indicator sets for {} weights",
            w.len(),
            p.len()
        )));
    }
    for wc in w {
        if wc.len() != data.n_platforms()
            || wc
                .iter()
                .zip(data.platforms())
                .any(|(wk, pl)| wk.len() != pl.n_probes())
        {
            return Err(Error::Dimension("indicator vector shape does not match data".into()));
        }
    }
    for th in theta {
        if th.platforms.len() != data.n_platforms() || !th.platforms.iter().all(ComponentParams::is_valid) {
            return Err(Error::Domain("invalid subject parameters".into()));
        }
    }
    if p.iter().any(|&x| !(x > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("cluster weights must be positive and sum to 1".into()));
    }
    Ok(())
}

/// Membership posteriors τ_ic ∝ p_c f(y_i | w_c, θ_i).
pub fn membership_estep(
    data: &DataSet,
    w_fixed: &[Vec<Vec<bool>>],
    theta: &[SubjectParams],
    p: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_inputs(data, w_fixed, theta, p)?;
    Ok(estep(&log_densities(data, theta), w_fixed, p).0)
}

/// The mixture log-likelihood Σ_i ln Σ_c p_c f(y_i | w_c, θ_i).
pub fn mixture_loglik(data: &DataSet, w_fixed: &[Vec<Vec<bool>>], theta: &[SubjectParams], p: &[f64]) -> Result<f64> {
    check_inputs(data, w_fixed, theta, p)?;
    Ok(estep(&log_densities(data, theta), w_fixed, p).1)
}

/// Updates subject parameters given memberships and indicators.
fn update_theta(
    data: &DataSet,
    tau: &[Vec<f64>],
    w: &[Vec<Vec<bool>>],
    previous: &[SubjectParams],
    floors: &[Vec<f64>],
) -> Vec<SubjectParams> {
    (0..data.n_subjects())
        .into_par_iter()
        .map(|i| {
            let params = data
                .platforms()
                .iter()
                .enumerate()
                .map(|(k, plat)| {
                    let y = plat.subject(i);
                    // weight of component 1 on each probe: Σ_c τ_ic w_cjk
                    let mut u = vec![0.0; y.len()];
                    for (c, wc) in w.iter().enumerate() {
                        let t = tau[i][c];
                        for (uj, &on) in u.iter_mut().zip(&wc[k]) {
                            if on {
                                *uj += t;
                            }
                        }
                    }
                    let s1: f64 = u.iter().sum();
                    let s2: f64 = u.iter().map(|x| 1.0 - x).sum();
                    let old = *previous[i].platform(k);
                    let floor = floors[i][k];
                    let mut m1 = if s1 > 0.0 {
                        u.iter().zip(y).map(|(a, v)| a * v).sum::<f64>() / s1
                    } else {
                        old.mu1
                    };
                    let mut m2 = if s2 > 0.0 {
                        u.iter().zip(y).map(|(a, v)| (1.0 - a) * v).sum::<f64>() / s2
                    } else {
                        old.mu2
                    };
                    if m1 > m2 && s1 > 0.0 && s2 > 0.0 {
                        let (w1, w2) = (s1 / old.var1, s2 / old.var2);
                        let pooled = (w1 * m1 + w2 * m2) / (w1 + w2);
                        m1 = pooled;
                        m2 = pooled;
                    }
                    let v1 = if s1 > 0.0 {
                        (u.iter().zip(y).map(|(a, v)| a * (v - m1) * (v - m1)).sum::<f64>() / s1).max(floor)
                    } else {
                        old.var1
                    };
                    let v2 = if s2 > 0.0 {
                        (u.iter()
                            .zip(y)
                            .map(|(a, v)| (1.0 - a) * (v - m2) * (v - m2))
                            .sum::<f64>()
                            / s2)
                            .max(floor)
                    } else {
                        old.var2
                    };
                    ComponentParams::new(m1, v1, m2, v2)
                })
                .collect();
            SubjectParams::new(params)
        })
        .collect()
}

/// Re-optimizes each indicator by the sign of its responsibility-weighted
/// log-density difference.
fn update_indicators(dens: &LogDensities, tau: &[Vec<f64>], w: &mut [Vec<Vec<bool>>]) {
    for (c, wc) in w.iter_mut().enumerate() {
        for (k, wk) in wc.iter_mut().enumerate() {
            for (j, wj) in wk.iter_mut().enumerate() {
                let score: f64 = tau.iter().zip(&dens.diff).map(|(t, d)| t[c] * d[k][j]).sum();
                *wj = score > 0.0;
            }
        }
    }
}

fn drop_clusters(keep: &[bool], p: &mut Vec<f64>, w: &mut Vec<Vec<Vec<bool>>>) {
    let mut idx = 0;
    p.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    idx = 0;
    w.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
}

/// Refines `init` by EM on the mixture-of-clusters likelihood.
pub fn refine_partition(data: &DataSet, init: &Partition, config: &FitConfig) -> Result<RefineResult> {
    config.validate()?;
    let n = data.n_subjects();
    if init.n() != n {
        return Err(Error::Dimension(format!(
            "initial partition covers {} subjects, data has {n}",
            init.n()
        )));
    }
    let clusters = init.clusters();
    let init_fits = clusters
        .par_iter()
        .map(|members| fit_cluster(data, members, None, config))
        .collect::<Result<Vec<_>>>()?;
    let mut w: Vec<Vec<Vec<bool>>> = init_fits
        .iter()
        .map(|f| f.gamma.iter().map(|g| g.iter().map(|&x| x >= 0.5).collect()).collect())
        .collect();
    let mut theta: Vec<SubjectParams> = fit_all_subjects(data, config)?.into_iter().map(|f| f.theta).collect();
    let mut p: Vec<f64> = clusters.iter().map(|m| m.len() as f64 / n as f64).collect();
    let floors: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            data.platforms()
                .iter()
                .map(|pl| variance_floor(pl.subject(i), config))
                .collect()
        })
        .collect();

    let mut dens = log_densities(data, &theta);
    let (mut tau, mut ll) = estep(&dens, &w, &p);
    let mut trace = vec![ll];
    for _ in 0..config.max_iter {
        let mass: Vec<f64> = (0..p.len()).map(|c| tau.iter().map(|t| t[c]).sum()).collect();
        let keep: Vec<bool> = mass.iter().map(|&m| m >= EMPTY_CLUSTER_MASS).collect();
        if keep.iter().any(|k| !k) {
            log::warn!(
                "dropping {} cluster(s) with negligible responsibility",
                keep.iter().filter(|k| !**k).count()
            );
            drop_clusters(&keep, &mut p, &mut w);
            tau = estep(&dens, &w, &p).0;
        }
        p = (0..p.len())
            .map(|c| tau.iter().map(|t| t[c]).sum::<f64>() / n as f64)
            .collect();
        theta = update_theta(data, &tau, &w, &theta, &floors);
        dens = log_densities(data, &theta);
        if !config.freeze_indicators {
            update_indicators(&dens, &tau, &mut w);
        }
        let prev = ll;
        (tau, ll) = estep(&dens, &w, &p);
        trace.push(ll);
        if (ll - prev).abs() <= config.rel_tol * prev.abs() {
            break;
        }
    }

    let argmax = |row: &Vec<f64>| {
        row.iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |(bi, bv), (c, &v)| if v > bv { (c, v) } else { (bi, bv) },
            )
            .0
    };
    let winners: Vec<usize> = tau.iter().map(argmax).collect();
    let keep: Vec<bool> = (0..p.len()).map(|c| winners.contains(&c)).collect();
    if keep.iter().any(|k| !k) {
        drop_clusters(&keep, &mut p, &mut w);
        (tau, ll) = estep(&dens, &w, &p);
    }
    let labels: Vec<usize> = tau.iter().map(argmax).collect();
    let partition = Partition::new(labels, p.len())?;
    let cluster_fits = partition
        .clusters()
        .par_iter()
        .map(|members| fit_cluster(data, members, None, config))
        .collect::<Result<Vec<_>>>()?;
    let objective_loglik = cluster_fits.iter().map(|f| f.loglik).sum();
    Ok(RefineResult {
        partition,
        tau,
        p,
        w_fixed: w,
        theta,
        mixture_loglik: ll,
        objective_loglik,
        trace,
        cluster_fits,
    })
}

/// Refines every candidate and keeps the one with the best partition likelihood.
pub fn refine_best(data: &DataSet, inits: &[Partition], config: &FitConfig) -> Result<RefineResult> {
    let mut best: Option<RefineResult> = None;
    for init in inits {
        let r = refine_partition(data, init, config)?;
        if best.as_ref().is_none_or(|b| r.objective_loglik > b.objective_loglik) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::InvalidData("no initial partitions given".into()))
}
