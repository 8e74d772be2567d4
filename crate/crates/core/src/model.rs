//! Domain types shared by every stage of the pipeline.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One platform's probe × subject response matrix.
///
/// Values are stored subject-major so that a subject's whole profile is a
/// contiguous slice; every fitting routine walks profiles, not probes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformMatrix {
    platform_id: String,
    probe_ids: Vec<String>,
    subject_ids: Vec<String>,
    values: Vec<f64>,
}

impl PlatformMatrix {
    /// Builds a matrix from probe-major rows (`rows[probe][subject]`).
    pub fn from_rows(
        platform_id: impl Into<String>,
        probe_ids: Vec<String>,
        subject_ids: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let g = probe_ids.len();
        let n = subject_ids.len();
        if rows.len() != g {
            return Err(Error::Dimension(format!("{} probe ids but {} rows", g, rows.len())));
        }
        let mut values = vec![0.0; g * n];
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {} has {} values, expected {}",
                    j,
                    row.len(),
                    n
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                values[i * g + j] = v;
            }
        }
        Self::from_subject_major(platform_id, probe_ids, subject_ids, values)
    }

    /// Builds a matrix from subject-major storage (`values[subject * G + probe]`).
    pub fn from_subject_major(
        platform_id: impl Into<String>,
        probe_ids: Vec<String>,
        subject_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let platform_id = platform_id.into();
        let g = probe_ids.len();
        let n = subject_ids.len();
        if values.len() != g * n {
            return Err(Error::Dimension(format!(
                "platform {platform_id}: {} values for {g} probes x {n} subjects",
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(g);
        for id in &probe_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "platform {platform_id}: duplicate probe id {id:?}"
                )));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "platform {platform_id}: non-finite value for probe {:?}, subject {:?}",
                probe_ids[pos % g.max(1)],
                subject_ids[pos / g.max(1)]
            )));
        }
        Ok(Self {
            platform_id,
            probe_ids,
            subject_ids,
            values,
        })
    }

    pub fn platform_id(&self) -> &str {
        &self.platform_id
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn n_probes(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    /// The full profile of subject `i`.
    pub fn subject(&self, i: usize) -> &[f64] {
        let g = self.n_probes();
        &self.values[i * g..(i + 1) * g]
    }

    pub fn get(&self, probe: usize, subject: usize) -> f64 {
        self.values[subject * self.n_probes() + probe]
    }

    /// Probe-major copy of row `j`.
    pub fn probe_row(&self, j: usize) -> Vec<f64> {
        (0..self.n_subjects()).map(|i| self.get(j, i)).collect()
    }

    /// Keeps the listed probes, in the given order.
    pub fn select_probes(&self, keep: &[usize]) -> Result<Self> {
        let n = self.n_subjects();
        let g_new = keep.len();
        let mut values = Vec::with_capacity(g_new * n);
        for i in 0..n {
            let col = self.subject(i);
            values.extend(keep.iter().map(|&j| col[j]));
        }
        Self::from_subject_major(
            self.platform_id.clone(),
            keep.iter().map(|&j| self.probe_ids[j].clone()).collect(),
            self.subject_ids.clone(),
            values,
        )
    }

    /// Keeps the listed subjects, in the given order.
    pub fn select_subjects(&self, keep: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(keep.len() * self.n_probes());
        for &i in keep {
            values.extend_from_slice(self.subject(i));
        }
        Self::from_subject_major(
            self.platform_id.clone(),
            self.probe_ids.clone(),
            keep.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            values,
        )
    }
}

/// Aligned per-platform matrices over a common list of subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    platforms: Vec<PlatformMatrix>,
    subject_ids: Vec<String>,
}

impl DataSet {
    pub fn new(platforms: Vec<PlatformMatrix>) -> Result<Self> {
        let first = platforms
            .first()
            .ok_or_else(|| Error::InvalidData("data set needs at least one platform".into()))?;
        let subject_ids = first.subject_ids().to_vec();
        if subject_ids.is_empty() {
            return Err(Error::InvalidData("data set has no subjects".into()));
        }
        let mut ids = HashSet::new();
        for p in &platforms {
            if !ids.insert(p.platform_id()) {
                return Err(Error::InvalidData(format!(
                    "duplicate platform id {:?}",
                    p.platform_id()
                )));
            }
            if p.subject_ids() != subject_ids.as_slice() {
                return Err(Error::InvalidData(format!(
                    "platform {:?} does not share the subject ordering of platform {:?}",
                    p.platform_id(),
                    first.platform_id()
                )));
            }
            if p.n_probes() < 2 {
                return Err(Error::InvalidData(format!(
                    "platform {:?} has {} probes; at least 2 required",
                    p.platform_id(),
                    p.n_probes()
                )));
            }
        }
        Ok(Self { platforms, subject_ids })
    }

    pub fn platforms(&self) -> &[PlatformMatrix] {
        &self.platforms
    }

    pub fn platform(&self, k: usize) -> &PlatformMatrix {
        &self.platforms[k]
    }

    pub fn n_platforms(&self) -> usize {
        self.platforms.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    /// Subject `i`'s profile on every platform.
    pub fn profile(&self, i: usize) -> Vec<&[f64]> {
        self.platforms.iter().map(|p| p.subject(i)).collect()
    }

    /// Restricts the data set to a subset of subjects.
    pub fn select_subjects(&self, keep: &[usize]) -> Result<Self> {
        let platforms = self
            .platforms
            .iter()
            .map(|p| p.select_subjects(keep))
            .collect::<Result<Vec<_>>>()?;
        Self::new(platforms)
    }
}

/// Two-component parameters of one subject on one platform.
///
/// Component 1 carries the smaller mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub mu1: f64,
    pub var1: f64,
    pub mu2: f64,
    pub var2: f64,
}

impl ComponentParams {
    pub fn new(mu1: f64, var1: f64, mu2: f64, var2: f64) -> Self {
        Self { mu1, var1, mu2, var2 }
    }

    /// Exchanges the two components.
    pub fn swapped(self) -> Self {
        Self {
            mu1: self.mu2,
            var1: self.var2,
            mu2: self.mu1,
            var2: self.var1,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mu1.is_finite()
            && self.mu2.is_finite()
            && self.var1.is_finite()
            && self.var2.is_finite()
            && self.var1 > 0.0
            && self.var2 > 0.0
    }
}

/// Per-platform mixture parameters of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub platforms: Vec<ComponentParams>,
}

impl SubjectParams {
    pub fn new(platforms: Vec<ComponentParams>) -> Self {
        Self { platforms }
    }

    pub fn platform(&self, k: usize) -> &ComponentParams {
        &self.platforms[k]
    }
}

/// Assignment of subjects to clusters `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Validates that every label in `0..k` is used and nothing lies outside it.
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || assignment.is_empty() {
            return Err(Error::InvalidData("partition must be non-empty".into()));
        }
        if k > assignment.len() {
            return Err(Error::InvalidData(format!(
                "partition has K = {k} > n = {}",
                assignment.len()
            )));
        }
        let mut used = vec![false; k];
        for &a in &assignment {
            if a >= k {
                return Err(Error::InvalidData(format!("label {a} outside 0..{k}")));
            }
            used[a] = true;
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(Error::InvalidData(format!("cluster {c} is empty")));
        }
        Ok(Self { assignment, k })
    }

    /// Relabels arbitrary labels to `0..k` in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let assignment: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        let k = map.len();
        Self::new(assignment, k)
    }

    /// Builds a partition from explicit member lists.
    pub fn from_clusters(n: usize, clusters: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                if i >= n || labels[i] != usize::MAX {
                    return Err(Error::InvalidData(format!(
                        "subject {i} missing from range or assigned twice"
                    )));
                }
                labels[i] = c;
            }
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::InvalidData("some subject is unassigned".into()));
        }
        Self::from_labels(&labels)
    }

    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Member indices of each cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Same grouping with labels renumbered in order of first appearance.
    pub fn canonical(&self) -> Self {
        Self::from_labels(&self.assignment).expect("valid partition stays valid")
    }
}

/// Maximized (or evaluated) fit of the cluster likelihood for one subject set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFit {
    pub members: Vec<usize>,
    /// Mixing weight of component 1, one per platform.
    pub pi1: Vec<f64>,
    /// Posterior probability of component 1, per platform and probe.
    pub gamma: Vec<Vec<f64>>,
    /// Parameters of each member, aligned with `members`.
    pub theta: Vec<SubjectParams>,
    pub loglik: f64,
}

/// Numerical settings shared by all EM routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub variance_floor_factor: f64,
    pub pi_clamp: f64,
    pub seed: u64,
    /// Adds one cold-started fit per merge candidate and keeps the better one.
    #[serde(default)]
    pub merge_cold_restart: bool,
    /// Keeps refinement indicator vectors at their initial values.
    #[serde(default)]
    pub freeze_indicators: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 500,
            rel_tol: 1e-8,
            variance_floor_factor: 1e-4,
            pi_clamp: 1e-10,
            seed: 0,
            merge_cold_restart: false,
            freeze_indicators: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidConfig("rel_tol must lie in (0, 1)".into()));
        }
        if !(self.variance_floor_factor > 0.0) || !self.variance_floor_factor.is_finite() {
            return Err(Error::InvalidConfig("variance_floor_factor must be positive".into()));
        }
        if !(self.pi_clamp > 0.0 && self.pi_clamp < 0.5) {
            return Err(Error::InvalidConfig("pi_clamp must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn clamp_pi(&self, pi: f64) -> f64 {
        pi.clamp(self.pi_clamp, 1.0 - self.pi_clamp)
    }
}
