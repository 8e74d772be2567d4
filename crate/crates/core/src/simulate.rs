//! Planted-structure data generation, exhaustive partition search and the
//! adjusted Rand index.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{fit_cluster, ClusterInit};
use crate::error::{Error, Result};
use crate::model::{ComponentParams, DataSet, FitConfig, Partition, PlatformMatrix, SubjectParams};
use crate::subject::fit_all_subjects;

/// Largest n the exhaustive search accepts by default; Bell(8) = 4140.
pub const ORACLE_N_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    pub id: String,
    /// Probe count.
    pub g: usize,
    /// Bernoulli rate of component-1 indicators.
    #[serde(default = "half")]
    pub pi1: f64,
    /// Subject means and variances are drawn uniformly from these ranges.
    pub mu_low: [f64; 2],
    pub mu_high: [f64; 2],
    pub var_low: [f64; 2],
    pub var_high: [f64; 2],
    /// Clusters with equal group ids share indicators on this platform.
    #[serde(default)]
    pub cluster_groups: Option<Vec<usize>>,
}

fn half() -> f64 {
    0.5
}

/// Equicorrelated noise blocks over consecutive probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub block_size: usize,
    pub rho: f64,
    pub block_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_per_cluster: Vec<usize>,
    pub platforms: Vec<PlatformSpec>,
    /// Fraction of probes on which all indicator groups agree.
    pub w_overlap: f64,
    #[serde(default)]
    pub correlated_blocks: Option<BlockSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl PlatformSpec {
    pub fn new(id: impl Into<String>, g: usize) -> Self {
        Self {
            id: id.into(),
            g,
            pi1: 0.5,
            mu_low: [-2.5, -1.5],
            mu_high: [1.5, 2.5],
            var_low: [0.2, 0.5],
            var_high: [0.2, 0.5],
            cluster_groups: None,
        }
    }
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n_per_cluster: vec![5, 5, 5],
            platforms: vec![PlatformSpec::new("meth", 500)],
            w_overlap: 0.7,
            correlated_blocks: None,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_per_cluster.is_empty() || self.n_per_cluster.contains(&0) {
            return bad("every cluster needs at least one subject".into());
        }
        if self.platforms.is_empty() {
            return bad("at least one platform required".into());
        }
        if !(0.0..=1.0).contains(&self.w_overlap) {
            return bad(format!("w_overlap {} outside [0, 1]", self.w_overlap));
        }
        for p in &self.platforms {
            if p.g < 2 {
                return bad(format!("platform {}: need at least 2 probes", p.id));
            }
            if !(0.0..=1.0).contains(&p.pi1) {
                return bad(format!("platform {}: pi1 outside [0, 1]", p.id));
            }
            for (name, r) in [
                ("mu_low", p.mu_low),
                ("mu_high", p.mu_high),
                ("var_low", p.var_low),
                ("var_high", p.var_high),
            ] {
                if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                    return bad(format!("platform {}: {name} range is not ordered", p.id));
                }
            }
            if !(p.var_low[0] > 0.0 && p.var_high[0] > 0.0) {
                return bad(format!("platform {}: variances must be positive", p.id));
            }
            if !(p.mu_low[1] < p.mu_high[0]) {
                return bad(format!(
                    "platform {}: mean ranges overlap, mu1 < mu2 cannot be guaranteed",
                    p.id
                ));
            }
            if let Some(groups) = &p.cluster_groups {
                if groups.len() != self.n_per_cluster.len() {
                    return bad(format!(
                        "platform {}: {} cluster groups for {} clusters",
                        p.id,
                        groups.len(),
                        self.n_per_cluster.len()
                    ));
                }
            }
            if let Some(b) = self.correlated_blocks {
                if b.block_size < 2 {
                    return bad("block_size must be at least 2".into());
                }
                if !(0.0..1.0).contains(&b.rho) {
                    return bad(format!("rho {} outside [0, 1)", b.rho));
                }
                if b.block_size * b.block_count > p.g {
                    return bad(format!(
                        "platform {}: {} blocks of {} exceed {} probes",
                        p.id, b.block_count, b.block_size, p.g
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Generating truth of a simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub partition: Partition,
    /// `w[c][k][j]`
    pub w: Vec<Vec<Vec<bool>>>,
    pub theta: Vec<SubjectParams>,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Draws a data set with planted clusters, deterministic in `spec.seed`.
pub fn generate_dataset(spec: &SimSpec) -> Result<(DataSet, SimTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_clusters = spec.n_per_cluster.len();
    let n: usize = spec.n_per_cluster.iter().sum();
    let labels: Vec<usize> = spec
        .n_per_cluster
        .iter()
        .enumerate()
        .flat_map(|(c, &m)| std::iter::repeat_n(c, m))
        .collect();
    let subject_ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();

    let mut w: Vec<Vec<Vec<bool>>> = vec![Vec::with_capacity(spec.platforms.len()); n_clusters];
    let mut theta: Vec<Vec<ComponentParams>> = vec![Vec::with_capacity(spec.platforms.len()); n];
    let mut matrices = Vec::with_capacity(spec.platforms.len());
    for p in &spec.platforms {
        let groups: Vec<usize> = p.cluster_groups.clone().unwrap_or_else(|| (0..n_clusters).collect());
        let n_groups = groups.iter().max().map_or(1, |m| m + 1);
        let mut order: Vec<usize> = (0..p.g).collect();
        order.shuffle(&mut rng);
        let n_shared = (spec.w_overlap * p.g as f64).round() as usize;
        let mut shared = vec![false; p.g];
        for &j in &order[..n_shared] {
            shared[j] = true;
        }
        let base: Vec<bool> = (0..p.g).map(|_| rng.random_bool(p.pi1)).collect();
        let group_w: Vec<Vec<bool>> = (0..n_groups)
            .map(|_| {
                (0..p.g)
                    .map(|j| {
                        let own = rng.random_bool(p.pi1);
                        if shared[j] {
                            base[j]
                        } else {
                            own
                        }
                    })
                    .collect()
            })
            .collect();
        for (c, wc) in w.iter_mut().enumerate() {
            wc.push(group_w[groups[c]].clone());
        }

        let mut values = Vec::with_capacity(n * p.g);
        for i in 0..n {
            let params = ComponentParams::new(
                uniform(&mut rng, p.mu_low),
                uniform(&mut rng, p.var_low),
                uniform(&mut rng, p.mu_high),
                uniform(&mut rng, p.var_high),
            );
            theta[i].push(params);
            let noise = draw_noise(&mut rng, p.g, spec.correlated_blocks);
            let wi = &group_w[groups[labels[i]]];
            values.extend(noise.iter().zip(wi).map(|(e, &on)| {
                if on {
                    params.mu1 + params.var1.sqrt() * e
                } else {
                    params.mu2 + params.var2.sqrt() * e
                }
            }));
        }
        matrices.push(PlatformMatrix::from_subject_major(
            p.id.clone(),
            (0..p.g).map(|j| format!("{}_p{j}", p.id)).collect(),
            subject_ids.clone(),
            values,
        )?);
    }
    let data = DataSet::new(matrices)?;
    Ok((
        data,
        SimTruth {
            partition: Partition::new(labels, n_clusters)?,
            w,
            theta: theta.into_iter().map(SubjectParams::new).collect(),
        },
    ))
}

/// Standard-normal noise; inside blocks, `√ρ z_block + √(1 − ρ) ε`.
fn draw_noise(rng: &mut ChaCha8Rng, g: usize, blocks: Option<BlockSpec>) -> Vec<f64> {
    let mut e: Vec<f64> = (0..g).map(|_| StandardNormal.sample(rng)).collect();
    if let Some(b) = blocks {
        let (a, s) = (b.rho.sqrt(), (1.0 - b.rho).sqrt());
        for block in 0..b.block_count {
            let z: f64 = StandardNormal.sample(rng);
            for x in &mut e[block * b.block_size..(block + 1) * b.block_size] {
                *x = a * z + s * *x;
            }
        }
    }
    e
}

/// All set partitions of `0..n` as restricted growth strings, lexicographic.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut a = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        out.push(a.clone());
        // rightmost position that can still grow
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            if a[i] <= maxes[i - 1] {
                break;
            }
            i -= 1;
        }
        a[i] += 1;
        maxes[i] = maxes[i - 1].max(a[i]);
        for j in i + 1..n {
            a[j] = 0;
            maxes[j] = maxes[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub partition: Partition,
    pub loglik: f64,
    pub partitions_evaluated: usize,
}

/// Exhaustive maximization of the partition likelihood for small `n`.
///
/// Every subset is fitted once (cold start from member subject fits) and the
/// partition sums are then enumerated; ties keep the lexicographically first
/// restricted growth string.
pub fn brute_force_best_partition(data: &DataSet, config: &FitConfig, n_max: usize) -> Result<OracleResult> {
    let n = data.n_subjects();
    if n > n_max || n > 20 {
        return Err(Error::OracleTooLarge { n, n_max });
    }
    let subject_fits = fit_all_subjects(data, config)?;
    let subset_ll: Vec<f64> = (1u32..1 << n)
        .into_par_iter()
        .map(|mask| {
            let members: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            if members.len() == 1 {
                return subject_fits[members[0]].loglik;
            }
            let fits: Vec<_> = members.iter().map(|&i| &subject_fits[i]).collect();
            let init = ClusterInit::from_subject_fits(&fits);
            fit_cluster(data, &members, Some(&init), config).map_or(f64::NEG_INFINITY, |f| f.loglik)
        })
        .collect();
    let all = set_partitions(n);
    let scores: Vec<f64> = all
        .par_iter()
        .map(|rgs| {
            let k = rgs.iter().max().map_or(0, |m| m + 1);
            let mut masks = vec![0u32; k];
            for (i, &c) in rgs.iter().enumerate() {
                masks[c] |= 1 << i;
            }
            masks.iter().map(|&m| subset_ll[m as usize - 1]).sum()
        })
        .collect();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (idx, &s) in scores.iter().enumerate() {
        if s > best.1 {
            best = (idx, s);
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return Err(Error::NoValidMerge);
    }
    Ok(OracleResult {
        partition: Partition::from_labels(&all[best.0])?,
        loglik: best.1,
        partitions_evaluated: all.len(),
    })
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index from the pair-counting contingency table.
///
/// When both partitions are trivial in the same way (the chance-corrected
/// denominator vanishes) identical partitions score 1 and others 0.
pub fn adjusted_rand_index(p1: &Partition, p2: &Partition) -> Result<f64> {
    if p1.n() != p2.n() {
        return Err(Error::Dimension(format!(
            "partitions over {} and {} subjects",
            p1.n(),
            p2.n()
        )));
    }
    let mut table = vec![vec![0u64; p2.k()]; p1.k()];
    for (&a, &b) in p1.assignment().iter().zip(p2.assignment()) {
        table[a][b] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..p2.k()).map(|b| choose2(table.iter().map(|r| r[b]).sum())).sum();
    let total = choose2(p1.n() as u64);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-12 {
        return Ok(if p1.canonical() == p2.canonical() { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}
