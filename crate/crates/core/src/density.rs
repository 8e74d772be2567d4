//! Log-space likelihood kernels for the two-component profile mixtures.

use crate::error::{Error, Result};
use crate::model::{ClusterFit, ComponentParams, DataSet, Partition, SubjectParams};

/// ln(2π) / 2
pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// ln φ(y | mu, var).
pub fn log_normal_density(y: f64, mu: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Domain(format!("variance must be positive, got {var}")));
    }
    Ok(ln_phi(y, mu, var))
}

#[inline]
pub(crate) fn ln_phi(y: f64, mu: f64, var: f64) -> f64 {
    let d = y - mu;
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// ln(e^a + e^b) with max subtraction.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// ln(p1 f1 + p0 f0) given the logs of all four factors.
pub fn log_mix_term(logp1: f64, logp0: f64, logf1: f64, logf0: f64) -> f64 {
    log_add_exp(logp1 + logf1, logp0 + logf0)
}

/// Log-sum-exp over a slice; `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-probe log weights of each component for a set of members on one platform.
///
/// Returns `(a_j, b_j)` with `a_j = ln π1 + Σ_i ln φ(y_ij | μ1i, σ1i²)` and the
/// analogous `b_j` for component 2.
pub(crate) fn component_log_weights(
    data: &DataSet,
    k: usize,
    members: &[usize],
    theta: &[SubjectParams],
    pi1: f64,
) -> (Vec<f64>, Vec<f64>) {
    let plat = data.platform(k);
    let g = plat.n_probes();
    let mut a = vec![pi1.ln(); g];
    let mut b = vec![(1.0 - pi1).ln(); g];
    for (&i, th) in members.iter().zip(theta) {
        let p = th.platform(k);
        let y = plat.subject(i);
        let (c1, c2) = (-HALF_LN_2PI - 0.5 * p.var1.ln(), -HALF_LN_2PI - 0.5 * p.var2.ln());
        let (h1, h2) = (0.5 / p.var1, 0.5 / p.var2);
        for j in 0..g {
            let d1 = y[j] - p.mu1;
            let d2 = y[j] - p.mu2;
            a[j] += c1 - h1 * d1 * d1;
            b[j] += c2 - h2 * d2 * d2;
        }
    }
    (a, b)
}

/// ℓ_c for one subject set evaluated at the given parameters, summed over platforms.
pub fn cluster_loglik(data: &DataSet, members: &[usize], theta: &[SubjectParams], pi1: &[f64]) -> Result<f64> {
    check_cluster_params(data, members, theta, pi1)?;
    let mut total = 0.0;
    for (k, &p1) in pi1.iter().enumerate() {
        let (a, b) = component_log_weights(data, k, members, theta, p1);
        total += a.iter().zip(&b).map(|(&x, &y)| log_add_exp(x, y)).sum::<f64>();
    }
    Ok(total)
}

pub(crate) fn check_cluster_params(
    data: &DataSet,
    members: &[usize],
    theta: &[SubjectParams],
    pi1: &[f64],
) -> Result<()> {
    if members.is_empty() {
        return Err(Error::Dimension("cluster has no members".into()));
    }
    if theta.len() != members.len() {
        return Err(Error::Dimension(format!(
            "{} parameter sets for {} members",
            theta.len(),
            members.len()
        )));
    }
    if pi1.len() != data.n_platforms() {
        return Err(Error::Dimension(format!(
            "{} mixing weights for {} platforms",
            pi1.len(),
            data.n_platforms()
        )));
    }
    if let Some(&i) = members.iter().find(|&&i| i >= data.n_subjects()) {
        return Err(Error::Dimension(format!("member {i} out of range")));
    }
    for th in theta {
        if th.platforms.len() != data.n_platforms() || !th.platforms.iter().all(ComponentParams::is_valid) {
            return Err(Error::Domain("invalid subject parameters".into()));
        }
    }
    if !pi1.iter().all(|&p| p > 0.0 && p < 1.0) {
        return Err(Error::Domain("mixing weights must lie in (0, 1)".into()));
    }
    Ok(())
}

/// ℓ_C of a partition, evaluated at the parameters stored in `fits`.
///
/// `fits[c]` must cover exactly the members of cluster `c`.
pub fn partition_loglik(data: &DataSet, partition: &Partition, fits: &[ClusterFit]) -> Result<f64> {
    if partition.n() != data.n_subjects() {
        return Err(Error::Dimension(format!(
            "partition over {} subjects, data has {}",
            partition.n(),
            data.n_subjects()
        )));
    }
    if fits.len() != partition.k() {
        return Err(Error::Dimension(format!(
            "{} fits for {} clusters",
            fits.len(),
            partition.k()
        )));
    }
    let clusters = partition.clusters();
    let mut total = 0.0;
    for (c, (members, fit)) in clusters.iter().zip(fits).enumerate() {
        let mut got = fit.members.clone();
        got.sort_unstable();
        if &got != members {
            return Err(Error::Dimension(format!(
                "fit {c} covers {:?}, cluster holds {:?}",
                fit.members, members
            )));
        }
        total += cluster_loglik(data, &fit.members, &fit.theta, &fit.pi1)?;
    }
    Ok(total)
}

/// Sample variance (n − 1 denominator).
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}
