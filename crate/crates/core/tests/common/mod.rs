#![allow(dead_code)]

use mixclust::simulate::PlatformSpec;
use mixclust::{DataSet, PlatformMatrix, SimSpec, SubjectParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Nondecreasing up to `rel` relative slack at every step.
pub fn is_monotone(trace: &[f64], rel: f64) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - rel * w[0].abs().max(1.0))
}

pub fn planted(n_per_cluster: &[usize], g: usize, overlap: f64, seed: u64) -> SimSpec {
    SimSpec {
        n_per_cluster: n_per_cluster.to_vec(),
        platforms: vec![PlatformSpec::new("meth", g)],
        w_overlap: overlap,
        correlated_blocks: None,
        seed,
    }
}

/// Log-density of a diagonal-covariance multivariate normal, evaluated as
/// −½(d ln 2π + ln det Σ + (y−m)ᵀ Σ⁻¹ (y−m)).
pub fn mvn_diag_logpdf(y: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let d = y.len() as f64;
    let log_det: f64 = var.iter().map(|v| v.ln()).sum();
    let quad: f64 = y
        .iter()
        .zip(mean)
        .zip(var)
        .map(|((y, m), v)| (y - m) * (y - m) / v)
        .sum();
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// ℓ_c written as a two-component mixture of |c|-variate normals over the
/// probe vectors, one mixture per platform.
pub fn multivariate_mixture_loglik(data: &DataSet, members: &[usize], theta: &[SubjectParams], pi1: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, plat) in data.platforms().iter().enumerate() {
        let m1: Vec<f64> = theta.iter().map(|t| t.platforms[k].mu1).collect();
        let v1: Vec<f64> = theta.iter().map(|t| t.platforms[k].var1).collect();
        let m2: Vec<f64> = theta.iter().map(|t| t.platforms[k].mu2).collect();
        let v2: Vec<f64> = theta.iter().map(|t| t.platforms[k].var2).collect();
        for j in 0..plat.n_probes() {
            let y: Vec<f64> = members.iter().map(|&i| plat.get(j, i)).collect();
            let a = pi1[k].ln() + mvn_diag_logpdf(&y, &m1, &v1);
            let b = (1.0 - pi1[k]).ln() + mvn_diag_logpdf(&y, &m2, &v2);
            let hi = a.max(b);
            total += hi + ((a - hi).exp() + (b - hi).exp()).ln();
        }
    }
    total
}

/// One subject on one platform drawn from a planted two-component mixture,
/// with the component label of every draw.
pub fn mixture_profile(
    g: usize,
    mu1: f64,
    var1: f64,
    mu2: f64,
    var2: f64,
    pi1: f64,
    seed: u64,
) -> (DataSet, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = Normal::new(mu1, var1.sqrt()).unwrap();
    let c2 = Normal::new(mu2, var2.sqrt()).unwrap();
    let mut labels = Vec::with_capacity(g);
    let rows: Vec<Vec<f64>> = (0..g)
        .map(|_| {
            let u: f64 = rand::Rng::random(&mut rng);
            labels.push(u < pi1);
            vec![if u < pi1 {
                c1.sample(&mut rng)
            } else {
                c2.sample(&mut rng)
            }]
        })
        .collect();
    let m = PlatformMatrix::from_rows("p", (0..g).map(|j| format!("g{j}")).collect(), vec!["s".into()], &rows).unwrap();
    (DataSet::new(vec![m]).unwrap(), labels)
}

/// Complete-data estimates (μ1, σ1², μ2, σ2², π1) given the true labels.
pub fn labelled_estimates(y: &[f64], labels: &[bool]) -> [f64; 5] {
    let moments = |want: bool| {
        let xs: Vec<f64> = y.iter().zip(labels).filter(|p| *p.1 == want).map(|p| *p.0).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n, n)
    };
    let (m1, v1, n1) = moments(true);
    let (m2, v2, _) = moments(false);
    [m1, v1, m2, v2, n1 / y.len() as f64]
}
