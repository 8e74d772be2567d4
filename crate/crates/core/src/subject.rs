//! Two-component Gaussian mixture fits of single subject profiles.
//!
//! Each platform is fitted independently from several starting values; runs
//! whose variance ends on the floor are discarded as spurious and the best
//! surviving local maximum is kept.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{ln_phi, log_add_exp, sample_variance};
use crate::error::{Error, Result};
use crate::model::{ComponentParams, DataSet, FitConfig, SubjectParams};

/// Starting point of one EM run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialValues {
    pub params: ComponentParams,
    pub pi1: f64,
}

/// Outcome of a single EM run on one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct EmRun {
    pub params: ComponentParams,
    pub pi1: f64,
    pub loglik: f64,
    /// Log-likelihood at the start of every iteration, ending with `loglik`.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Variance on the floor, equal means, or an emptied component.
    pub spurious: bool,
}

/// Best surviving fit of a subject, one entry per platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFitResult {
    pub theta: SubjectParams,
    pub pi1: Vec<f64>,
    pub loglik: f64,
    pub platform_loglik: Vec<f64>,
    /// P(w_j = 1 | y) per platform and probe.
    pub posteriors: Vec<Vec<f64>>,
}

/// Variance floor for a profile: a fixed fraction of its sample variance.
pub fn variance_floor(profile: &[f64], config: &FitConfig) -> f64 {
    config.variance_floor_factor * sample_variance(profile)
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Starting values for restart `restart_index`.
///
/// Restart 0 places the means at the quartiles, takes each variance from
/// the corresponding half of the sorted profile and starts at π1 = 0.5.
/// Later restarts jitter both means uniformly over an interquartile-range
/// wide window, seeded by `(seed, restart_index)`.
pub fn init_strategies(profile: &[f64], restart_index: usize, seed: u64) -> Result<InitialValues> {
    if profile.len() < 2 {
        return Err(Error::InvalidData("profile needs at least two values".into()));
    }
    let mut sorted = profile.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::ConstantProfile {
            subject: 0,
            platform: 0,
        });
    }
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let half = sorted.len() / 2;
    let total_var = sample_variance(&sorted);
    let min_var = 0.01 * total_var;
    let var1 = population_variance(&sorted[..half]).max(min_var);
    let var2 = population_variance(&sorted[half..]).max(min_var);
    let (mut mu1, mut mu2) = (q1, q3);
    if restart_index > 0 {
        let mut spread = q3 - q1;
        if spread <= 0.0 {
            spread = total_var.sqrt();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart_index as u64);
        mu1 += spread * (rng.random::<f64>() - 0.5);
        mu2 += spread * (rng.random::<f64>() - 0.5);
    }
    let mut params = ComponentParams::new(mu1, var1, mu2, var2);
    if mu1 > mu2 {
        params = params.swapped();
    }
    Ok(InitialValues { params, pi1: 0.5 })
}

/// E-step on one profile: writes posteriors of component 1, returns ℓ.
fn e_step(y: &[f64], p: &ComponentParams, pi1: f64, post: &mut [f64]) -> f64 {
    let (lp1, lp0) = (pi1.ln(), (1.0 - pi1).ln());
    let mut ll = 0.0;
    for (yj, pj) in y.iter().zip(post.iter_mut()) {
        let a = lp1 + ln_phi(*yj, p.mu1, p.var1);
        let b = lp0 + ln_phi(*yj, p.mu2, p.var2);
        let l = log_add_exp(a, b);
        *pj = (a - l).exp();
        ll += l;
    }
    ll
}

/// Posterior probabilities of component 1 at fixed parameters.
pub fn profile_posteriors(y: &[f64], params: &ComponentParams, pi1: f64) -> Vec<f64> {
    let mut post = vec![0.0; y.len()];
    e_step(y, params, pi1, &mut post);
    post
}

/// Runs EM on one profile from `init` until the relative change in ℓ drops
/// below `rel_tol` or `max_iter` iterations pass.
pub fn em_profile(y: &[f64], init: InitialValues, floor: f64, config: &FitConfig) -> EmRun {
    let n = y.len() as f64;
    let mut params = init.params;
    params.var1 = params.var1.max(floor);
    params.var2 = params.var2.max(floor);
    let mut pi1 = config.clamp_pi(init.pi1);
    let mut post = vec![0.0; y.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut collapsed = false;

    let mut ll = e_step(y, &params, pi1, &mut post);
    trace.push(ll);
    for _ in 0..config.max_iter {
        let s1: f64 = post.iter().sum();
        let s2: f64 = post.iter().map(|p| 1.0 - p).sum();
        if !(s1 > 0.0 && s2 > 0.0) {
            collapsed = true;
            break;
        }
        let mu1 = post.iter().zip(y).map(|(p, v)| p * v).sum::<f64>() / s1;
        let mu2 = post.iter().zip(y).map(|(p, v)| (1.0 - p) * v).sum::<f64>() / s2;
        let var1 = post.iter().zip(y).map(|(p, v)| p * (v - mu1) * (v - mu1)).sum::<f64>() / s1;
        let var2 = post
            .iter()
            .zip(y)
            .map(|(p, v)| (1.0 - p) * (v - mu2) * (v - mu2))
            .sum::<f64>()
            / s2;
        params = ComponentParams::new(mu1, var1.max(floor), mu2, var2.max(floor));
        pi1 = config.clamp_pi(s1 / n);
        if params.mu1 > params.mu2 {
            params = params.swapped();
            pi1 = 1.0 - pi1;
        }
        let prev = ll;
        ll = e_step(y, &params, pi1, &mut post);
        trace.push(ll);
        if (ll - prev).abs() <= config.rel_tol * prev.abs() {
            converged = true;
            break;
        }
    }
    let at_floor = |v: f64| v <= floor * (1.0 + 1e-12);
    let spurious =
        collapsed || !ll.is_finite() || at_floor(params.var1) || at_floor(params.var2) || params.mu1 >= params.mu2;
    EmRun {
        params,
        pi1,
        loglik: ll,
        trace,
        converged,
        spurious,
    }
}

fn count_distinct(y: &[f64]) -> usize {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.len()
}

/// Best non-spurious restart on one platform.
fn fit_platform(y: &[f64], subject: usize, platform: usize, config: &FitConfig) -> Result<EmRun> {
    let distinct = count_distinct(y);
    if distinct <= 1 {
        return Err(Error::ConstantProfile { subject, platform });
    }
    if distinct < 4 {
        return Err(Error::DegenerateProfile {
            subject,
            platform,
            reason: format!("only {distinct} distinct values"),
        });
    }
    let floor = variance_floor(y, config);
    let runs: Vec<Option<EmRun>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let init = init_strategies(y, r, config.seed).ok()?;
            let run = em_profile(y, init, floor, config);
            (!run.spurious).then_some(run)
        })
        .collect();
    let mut best: Option<EmRun> = None;
    for run in runs.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| run.loglik > b.loglik) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::DegenerateProfile {
        subject,
        platform,
        reason: "every restart converged to a spurious solution".into(),
    })
}

/// Fits the two-component mixture to one subject on every platform.
pub fn fit_subject(profile: &[&[f64]], config: &FitConfig) -> Result<SubjectFitResult> {
    fit_subject_at(profile, 0, config)
}

pub(crate) fn fit_subject_at(profile: &[&[f64]], subject: usize, config: &FitConfig) -> Result<SubjectFitResult> {
    config.validate()?;
    if profile.is_empty() {
        return Err(Error::InvalidData("profile has no platforms".into()));
    }
    let mut platforms = Vec::with_capacity(profile.len());
    let mut pi1 = Vec::with_capacity(profile.len());
    let mut platform_loglik = Vec::with_capacity(profile.len());
    let mut posteriors = Vec::with_capacity(profile.len());
    for (k, y) in profile.iter().enumerate() {
        let run = fit_platform(y, subject, k, config)?;
        posteriors.push(profile_posteriors(y, &run.params, run.pi1));
        platforms.push(run.params);
        pi1.push(run.pi1);
        platform_loglik.push(run.loglik);
    }
    Ok(SubjectFitResult {
        theta: SubjectParams::new(platforms),
        pi1,
        loglik: platform_loglik.iter().sum(),
        platform_loglik,
        posteriors,
    })
}

/// Fits every subject of a data set; the first failure aborts.
pub fn fit_all_subjects(data: &DataSet, config: &FitConfig) -> Result<Vec<SubjectFitResult>> {
    (0..data.n_subjects())
        .into_par_iter()
        .map(|i| fit_subject_at(&data.profile(i), i, config))
        .collect()
}
