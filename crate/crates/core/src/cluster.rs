//! EM maximization of the cluster likelihood ℓ_c.
//!
//! All members of a cluster share one indicator vector per platform; each
//! member keeps its own component means and variances. The posterior of the
//! shared indicator is `gamma`, and π1 is shared within a platform.

use serde::{Deserialize, Serialize};

use crate::density::{check_cluster_params, component_log_weights, log_add_exp};
use crate::error::{Error, Result};
use crate::model::{ClusterFit, ComponentParams, DataSet, FitConfig, SubjectParams};
use crate::subject::{fit_subject_at, variance_floor, SubjectFitResult};

/// Warm-start parameters for a cluster fit, aligned with its member list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInit {
    pub theta: Vec<SubjectParams>,
    pub pi1: Vec<f64>,
}

impl ClusterInit {
    /// Member-wise subject fits with π1 averaged across members.
    pub fn from_subject_fits(fits: &[&SubjectFitResult]) -> Self {
        let n_platforms = fits.first().map_or(0, |f| f.pi1.len());
        let pi1 = (0..n_platforms)
            .map(|k| fits.iter().map(|f| f.pi1[k]).sum::<f64>() / fits.len() as f64)
            .collect();
        Self {
            theta: fits.iter().map(|f| f.theta.clone()).collect(),
            pi1,
        }
    }

    /// Concatenates two clusters' parameters; π1 is the size-weighted mean.
    pub fn merged(a: &ClusterFit, b: &ClusterFit) -> Self {
        let (na, nb) = (a.members.len() as f64, b.members.len() as f64);
        let pi1 = a
            .pi1
            .iter()
            .zip(&b.pi1)
            .map(|(x, y)| (na * x + nb * y) / (na + nb))
            .collect();
        let mut theta = a.theta.clone();
        theta.extend(b.theta.iter().cloned());
        Self { theta, pi1 }
    }

    /// The parameters a converged fit ended on.
    pub fn from_fit(fit: &ClusterFit) -> Self {
        Self {
            theta: fit.theta.clone(),
            pi1: fit.pi1.clone(),
        }
    }
}

/// Updated parameters from one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStepResult {
    pub theta: Vec<SubjectParams>,
    pub pi1: Vec<f64>,
}

/// Posterior probabilities γ_jk of component 1 for the shared indicators.
pub fn e_step_gamma(data: &DataSet, members: &[usize], theta: &[SubjectParams], pi1: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_cluster_params(data, members, theta, pi1)?;
    Ok(e_step_unchecked(data, members, theta, pi1).0)
}

fn e_step_unchecked(data: &DataSet, members: &[usize], theta: &[SubjectParams], pi1: &[f64]) -> (Vec<Vec<f64>>, f64) {
    let mut total = 0.0;
    let gamma = (0..data.n_platforms())
        .map(|k| {
            let (a, b) = component_log_weights(data, k, members, theta, pi1[k]);
            a.iter()
                .zip(&b)
                .map(|(&x, &y)| {
                    let l = log_add_exp(x, y);
                    total += l;
                    (x - l).exp()
                })
                .collect()
        })
        .collect();
    (gamma, total)
}

/// Per-member variance floors, indexed `[member][platform]`.
fn member_floors(data: &DataSet, members: &[usize], config: &FitConfig) -> Vec<Vec<f64>> {
    members
        .iter()
        .map(|&i| {
            data.platforms()
                .iter()
                .map(|p| variance_floor(p.subject(i), config))
                .collect()
        })
        .collect()
}

/// Maximizes the expected complete-data log-likelihood given γ.
///
/// `previous` supplies the variances used when a member's unconstrained
/// means cross while the other members' do not: that member's means are then
/// pooled onto the boundary μ1 = μ2, the constrained maximizer at those
/// variances. When every member crosses, the platform's labels are swapped.
pub fn m_step(
    data: &DataSet,
    members: &[usize],
    gamma: &[Vec<f64>],
    previous: &[SubjectParams],
    config: &FitConfig,
) -> Result<MStepResult> {
    if gamma.len() != data.n_platforms() || previous.len() != members.len() {
        return Err(Error::Dimension("gamma or parameter sets misaligned".into()));
    }
    let floors = member_floors(data, members, config);
    m_step_with_floors(data, members, gamma, previous, &floors, config)
}

fn m_step_with_floors(
    data: &DataSet,
    members: &[usize],
    gamma: &[Vec<f64>],
    previous: &[SubjectParams],
    floors: &[Vec<f64>],
    config: &FitConfig,
) -> Result<MStepResult> {
    let mut theta: Vec<Vec<ComponentParams>> = vec![Vec::with_capacity(data.n_platforms()); members.len()];
    let mut pi1 = Vec::with_capacity(data.n_platforms());
    for (k, g) in gamma.iter().enumerate() {
        let plat = data.platform(k);
        if g.len() != plat.n_probes() {
            return Err(Error::Dimension(format!(
                "gamma on platform {k} has {} entries for {} probes",
                g.len(),
                plat.n_probes()
            )));
        }
        let s1: f64 = g.iter().sum();
        let s2: f64 = g.iter().map(|x| 1.0 - x).sum();
        if !(s1 > 0.0) {
            return Err(Error::ComponentCollapse {
                platform: k,
                component: 1,
            });
        }
        if !(s2 > 0.0) {
            return Err(Error::ComponentCollapse {
                platform: k,
                component: 2,
            });
        }
        let means: Vec<(f64, f64)> = members
            .iter()
            .map(|&i| {
                let y = plat.subject(i);
                let m1 = g.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / s1;
                let m2 = g.iter().zip(y).map(|(w, v)| (1.0 - w) * v).sum::<f64>() / s2;
                (m1, m2)
            })
            .collect();
        let crossing = means.iter().filter(|(m1, m2)| m1 > m2).count();
        let swap = crossing == members.len();
        let mut p1 = config.clamp_pi(s1 / plat.n_probes() as f64);
        if swap {
            p1 = 1.0 - p1;
        }
        pi1.push(p1);
        for (idx, (&i, &(mut m1, mut m2))) in members.iter().zip(&means).enumerate() {
            if !swap && m1 > m2 {
                let old = previous[idx].platform(k);
                let (w1, w2) = (s1 / old.var1, s2 / old.var2);
                let pooled = (w1 * m1 + w2 * m2) / (w1 + w2);
                m1 = pooled;
                m2 = pooled;
            }
            let y = plat.subject(i);
            let v1 = g.iter().zip(y).map(|(w, v)| w * (v - m1) * (v - m1)).sum::<f64>() / s1;
            let v2 = g
                .iter()
                .zip(y)
                .map(|(w, v)| (1.0 - w) * (v - m2) * (v - m2))
                .sum::<f64>()
                / s2;
            let floor = floors[idx][k];
            let mut params = ComponentParams::new(m1, v1.max(floor), m2, v2.max(floor));
            if swap {
                params = params.swapped();
            }
            theta[idx].push(params);
        }
    }
    Ok(MStepResult {
        theta: theta.into_iter().map(SubjectParams::new).collect(),
        pi1,
    })
}

/// Maximizes ℓ_c for `members`, returning the fit and the per-iteration ℓ trace.
pub fn fit_cluster_traced(
    data: &DataSet,
    members: &[usize],
    init: Option<&ClusterInit>,
    config: &FitConfig,
) -> Result<(ClusterFit, Vec<f64>)> {
    config.validate()?;
    if members.is_empty() {
        return Err(Error::Dimension("cluster has no members".into()));
    }
    let start = match init {
        Some(init) => init.clone(),
        None => {
            let fits = members
                .iter()
                .map(|&i| fit_subject_at(&data.profile(i), i, config))
                .collect::<Result<Vec<_>>>()?;
            ClusterInit::from_subject_fits(&fits.iter().collect::<Vec<_>>())
        }
    };
    let pi1: Vec<f64> = start.pi1.iter().map(|&p| config.clamp_pi(p)).collect();
    check_cluster_params(data, members, &start.theta, &pi1)?;
    let floors = member_floors(data, members, config);
    let mut theta: Vec<SubjectParams> = start
        .theta
        .iter()
        .zip(&floors)
        .map(|(th, fl)| {
            SubjectParams::new(
                th.platforms
                    .iter()
                    .zip(fl)
                    .map(|(p, &f)| ComponentParams::new(p.mu1, p.var1.max(f), p.mu2, p.var2.max(f)))
                    .collect(),
            )
        })
        .collect();
    let mut pi1 = pi1;

    let (mut gamma, mut ll) = e_step_unchecked(data, members, &theta, &pi1);
    let mut trace = vec![ll];
    for _ in 0..config.max_iter {
        let next = m_step_with_floors(data, members, &gamma, &theta, &floors, config)?;
        theta = next.theta;
        pi1 = next.pi1;
        let prev = ll;
        (gamma, ll) = e_step_unchecked(data, members, &theta, &pi1);
        trace.push(ll);
        if !ll.is_finite() {
            return Err(Error::Domain("cluster log-likelihood became non-finite".into()));
        }
        if (ll - prev).abs() <= config.rel_tol * prev.abs() {
            break;
        }
    }
    Ok((
        ClusterFit {
            members: members.to_vec(),
            pi1,
            gamma,
            theta,
            loglik: ll,
        },
        trace,
    ))
}

/// Maximizes ℓ_c for `members`.
///
/// Without `init`, the members' own subject fits seed θ and their mean π1
/// seeds the shared weight.
pub fn fit_cluster(
    data: &DataSet,
    members: &[usize],
    init: Option<&ClusterInit>,
    config: &FitConfig,
) -> Result<ClusterFit> {
    fit_cluster_traced(data, members, init, config).map(|(fit, _)| fit)
}
