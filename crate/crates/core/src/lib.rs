//! Model-based clustering of bimodal high-dimensional profiles.
//!
//! Each subject's profile on each platform is modelled as a two-component
//! Gaussian mixture with subject-specific means and variances. Subjects in a
//! cluster share a latent indicator per probe saying which component the
//! probe belongs to; integrating the indicators out under a Bernoulli prior
//! gives a partition likelihood that scores any clustering.
//!
//! The crate provides:
//! - [`subject`]: per-subject mixture fits with restarts,
//! - [`cluster`]: EM for the shared-indicator cluster likelihood,
//! - [`hier`]: greedy agglomeration on the partition likelihood,
//! - [`refine`]: mixture-of-clusters EM that improves a starting partition,
//! - [`classify`]: discriminant assignment of new subjects,
//! - [`simulate`]: planted-structure generators and exhaustive oracles,
//! - [`io`]: matrix ingestion, filtering and result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod cli;
pub mod cluster;
pub mod density;
pub mod error;
pub mod hier;
pub mod io;
pub mod model;
pub mod refine;
pub mod simulate;
pub mod subject;

pub use classify::{classify_subject, closed_form_theta, train_classifier, Classification, Classifier};
pub use cluster::{e_step_gamma, fit_cluster, fit_cluster_traced, m_step, ClusterInit};
pub use density::{cluster_loglik, log_mix_term, log_normal_density, partition_loglik};
pub use error::{Error, Result};
pub use hier::{hierarchical_cluster, select_partition, Dendrogram, Hierarchy, Merge};
pub use model::{ClusterFit, ComponentParams, DataSet, FitConfig, Partition, PlatformMatrix, SubjectParams};
pub use refine::{membership_estep, refine_best, refine_partition, RefineResult};
pub use simulate::{adjusted_rand_index, brute_force_best_partition, generate_dataset, SimSpec, SimTruth};
pub use subject::{fit_all_subjects, fit_subject, init_strategies, SubjectFitResult};
