//! Command-line front end.

use std::collections::{HashMap, HashSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classify::{train_classifier, Classifier};
use crate::error::{Error, Result};
use crate::hier::{build_hierarchy, select_step};
use crate::io::{
    read_matrix, sd_filter, write_gamma_files, write_heatmap_files, write_json, write_matrix, write_merges_csv,
    write_scores_csv, write_subject_fits_csv, write_tau_csv, write_trace_csv, MatrixFormat, PartitionFile, SdFilter,
};
use crate::model::{DataSet, FitConfig, Partition, PlatformMatrix};
use crate::refine::refine_partition;
use crate::simulate::{adjusted_rand_index, brute_force_best_partition, generate_dataset, SimSpec, ORACLE_N_MAX};
use crate::subject::fit_all_subjects;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mixclust",
    version,
    about = "Likelihood-based clustering of multi-platform molecular profiles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the two-component mixture to every subject profile.
    FitSubjects {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Agglomerative clustering with likelihood-based K selection.
    Hcluster {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Refit every merge candidate from the member subject fits.
        #[arg(long)]
        merge_cold_restart: bool,
    },
    /// Mixture-of-clusters refinement of a starting partition.
    Refine {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        select: SelectArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Starting partition; defaults to the hierarchical selection.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Keep the cluster indicators fixed at their initial values.
        #[arg(long)]
        freeze_indicators: bool,
    },
    /// Train a classifier from a labelled partition.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        partition: PathBuf,
    },
    /// Assign new subjects to trained clusters.
    Classify {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Generate a data set with planted clusters.
    Simulate {
        /// Simulation spec as JSON; built-in defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exhaustive search over all partitions (small n only).
    Oracle {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Tsv,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::Tsv => MatrixFormat::Tsv,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Platform matrix as `<id>=<path>`; repeat for several platforms.
    #[arg(long = "platform", value_name = "ID=PATH", required = true, value_parser = parse_kv::<PathBuf>)]
    pub platforms: Vec<(String, PathBuf)>,
    /// Keep probes with standard deviation above `x` on platform `id`.
    #[arg(long = "sd-threshold", value_name = "ID=X", value_parser = parse_kv::<f64>)]
    pub sd_threshold: Vec<(String, f64)>,
    /// Keep the `m` most variable probes on platform `id`.
    #[arg(long = "top", value_name = "ID=M", value_parser = parse_kv::<usize>)]
    pub top: Vec<(String, usize)>,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Only consider partitions whose clusters all have at least this many subjects.
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    /// Force the number of clusters instead of taking the likelihood maximum.
    #[arg(long)]
    pub k: Option<usize>,
    /// Reference partition; adds the adjusted Rand index to partition.json.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Probes whose γ differs by at most this much across clusters are left out of heatmap orders.
    #[arg(long, default_value_t = 1e-6)]
    pub heatmap_exclude_eps: f64,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_kv<T: std::str::FromStr>(s: &str) -> std::result::Result<(String, T), String>
where
    T::Err: std::fmt::Display,
{
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected ID=VALUE, got {s:?}"))?;
    if k.is_empty() {
        return Err(format!("empty id in {s:?}"));
    }
    let v = v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((k.to_string(), v))
}

impl FitArgs {
    fn config(&self) -> Result<FitConfig> {
        let config = FitConfig {
            restarts: self.restarts,
            max_iter: self.max_iter,
            rel_tol: self.tol,
            seed: self.seed,
            ..FitConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::OracleTooLarge { .. } | Error::InvalidConfig(_) => EXIT_USAGE,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("ERROR[{EXIT_USAGE}]: {}", e.render());
            return EXIT_USAGE;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("ERROR[{code}]: {e}");
            code
        }
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(f)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitSubjects { data, fit, out } => {
            let config = fit.config()?;
            let ds = load_dataset(&data)?;
            let dir = prepare_out(&out.out)?;
            let fits = with_threads(fit.threads, || fit_all_subjects(&ds, &config))?;
            write_subject_fits_csv(&dir.join("subject_fits.csv"), &ds, &fits)
        }
        Command::Hcluster {
            data,
            fit,
            select,
            out,
            merge_cold_restart,
        } => {
            let mut config = fit.config()?;
            config.merge_cold_restart = merge_cold_restart;
            let ds = load_dataset(&data)?;
            let dir = prepare_out(&out.out)?;
            let truth = load_truth(select.truth.as_deref(), &ds)?;
            let h = with_threads(fit.threads, || build_hierarchy(&ds, &config))?;
            let d = &h.dendrogram;
            let t = select_step(d, select.min_cluster_size, select.k)?;
            let partition = d.partition_after(t)?;
            let fits = h.fits_after(t)?;
            write_partition(&dir, &ds, &partition, d.loglik_trace[t], truth.as_ref())?;
            fs::write(dir.join("dendrogram.newick"), d.to_newick() + "\n")?;
            write_merges_csv(&dir.join("merges.csv"), d)?;
            write_trace_csv(&dir.join("loglik_trace.csv"), d)?;
            write_gamma_files(&dir, &ds, &fits)?;
            write_heatmap_files(&dir, &ds, &fits, select.heatmap_exclude_eps)
        }
        Command::Refine {
            data,
            fit,
            select,
            out,
            init,
            freeze_indicators,
        } => {
            let mut config = fit.config()?;
            config.freeze_indicators = freeze_indicators;
            let ds = load_dataset(&data)?;
            let dir = prepare_out(&out.out)?;
            let truth = load_truth(select.truth.as_deref(), &ds)?;
            let start = match &init {
                Some(p) => Some(read_partition_file(p)?.partition_for(ds.subject_ids())?),
                None => None,
            };
            let result = with_threads(fit.threads, || {
                let start = match start {
                    Some(p) => p,
                    None => {
                        let h = build_hierarchy(&ds, &config)?;
                        let t = select_step(&h.dendrogram, select.min_cluster_size, select.k)?;
                        h.dendrogram.partition_after(t)?
                    }
                };
                refine_partition(&ds, &start, &config)
            })?;
            write_partition(&dir, &ds, &result.partition, result.objective_loglik, truth.as_ref())?;
            write_tau_csv(&dir.join("tau.csv"), ds.subject_ids(), &result.tau)?;
            write_json(&dir.join("refine.json"), &result)?;
            write_gamma_files(&dir, &ds, &result.cluster_fits)?;
            write_heatmap_files(&dir, &ds, &result.cluster_fits, select.heatmap_exclude_eps)
        }
        Command::Train {
            data,
            fit,
            out,
            partition,
        } => {
            let config = fit.config()?;
            let ds = load_dataset(&data)?;
            let dir = prepare_out(&out.out)?;
            let p = read_partition_file(&partition)?.partition_for(ds.subject_ids())?;
            let classifier = with_threads(fit.threads, || train_classifier(&ds, &p, &config))?;
            fs::write(dir.join("classifier.json"), classifier.to_json()? + "\n")?;
            Ok(())
        }
        Command::Classify {
            data,
            out,
            classifier,
            threads,
        } => {
            let ds = load_dataset(&data)?;
            let dir = prepare_out(&out.out)?;
            let clf = Classifier::from_json(&fs::read_to_string(&classifier)?)?;
            let aligned = clf.align(&ds)?;
            let results = with_threads(threads, || clf.classify_all(&aligned))?;
            let labels: Vec<String> = clf.clusters.iter().map(|c| c.label.clone()).collect();
            write_scores_csv(&dir.join("scores.csv"), aligned.subject_ids(), &labels, &results)
        }
        Command::Simulate {
            spec,
            seed,
            format,
            out,
        } => {
            let mut spec: SimSpec = match &spec {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => SimSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let (ds, truth) = generate_dataset(&spec)?;
            let dir = prepare_out(&out.out)?;
            let format = MatrixFormat::from(format);
            let ext = match format {
                MatrixFormat::Csv => "csv",
                MatrixFormat::Tsv => "tsv",
            };
            for plat in ds.platforms() {
                let f = fs::File::create(dir.join(format!("{}.{ext}", plat.platform_id())))?;
                write_matrix(std::io::BufWriter::new(f), plat, format)?;
            }
            #[derive(Serialize)]
            struct TruthFile<'a> {
                subject_ids: &'a [String],
                platform_ids: Vec<&'a str>,
                #[serde(flatten)]
                truth: &'a crate::simulate::SimTruth,
                spec: &'a SimSpec,
            }
            write_json(
                &dir.join("truth.json"),
                &TruthFile {
                    subject_ids: ds.subject_ids(),
                    platform_ids: ds.platforms().iter().map(PlatformMatrix::platform_id).collect(),
                    truth: &truth,
                    spec: &spec,
                },
            )?;
            write_json(
                &dir.join("partition.json"),
                &PartitionFile::new(ds.subject_ids(), &truth.partition, None),
            )
        }
        Command::Oracle { data, fit, out, truth } => {
            let config = fit.config()?;
            let ds = load_dataset(&data)?;
            if ds.n_subjects() > ORACLE_N_MAX {
                return Err(Error::OracleTooLarge {
                    n: ds.n_subjects(),
                    n_max: ORACLE_N_MAX,
                });
            }
            let dir = prepare_out(&out.out)?;
            let truth = load_truth(truth.as_deref(), &ds)?;
            let res = with_threads(fit.threads, || brute_force_best_partition(&ds, &config, ORACLE_N_MAX))?;
            #[derive(Serialize)]
            struct OracleFile {
                #[serde(flatten)]
                partition: PartitionFile,
                partitions_evaluated: usize,
            }
            let mut partition = PartitionFile::new(ds.subject_ids(), &res.partition, Some(res.loglik));
            if let Some(t) = &truth {
                partition.ari = Some(adjusted_rand_index(&res.partition, t)?);
            }
            write_json(
                &dir.join("oracle.json"),
                &OracleFile {
                    partition,
                    partitions_evaluated: res.partitions_evaluated,
                },
            )
        }
    }
}

fn prepare_out(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

fn read_partition_file(path: &Path) -> Result<PartitionFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn load_truth(path: Option<&Path>, data: &DataSet) -> Result<Option<Partition>> {
    path.map(|p| read_partition_file(p)?.partition_for(data.subject_ids()))
        .transpose()
}

fn write_partition(
    dir: &Path,
    data: &DataSet,
    partition: &Partition,
    loglik: f64,
    truth: Option<&Partition>,
) -> Result<()> {
    let mut file = PartitionFile::new(data.subject_ids(), partition, Some(loglik));
    if let Some(t) = truth {
        file.ari = Some(adjusted_rand_index(partition, t)?);
    }
    write_json(&dir.join("partition.json"), &file)
}

/// Reads every `--platform`, applies its filter and aligns subjects onto the
/// order of the first platform.
pub fn load_dataset(args: &DataArgs) -> Result<DataSet> {
    let mut ids = HashSet::new();
    for (id, _) in &args.platforms {
        if !ids.insert(id.as_str()) {
            return Err(Error::InvalidConfig(format!("platform {id:?} given twice")));
        }
    }
    let mut filters: HashMap<&str, SdFilter> = HashMap::new();
    let rules = args
        .sd_threshold
        .iter()
        .map(|(id, t)| (id, SdFilter::Threshold(*t)))
        .chain(args.top.iter().map(|(id, m)| (id, SdFilter::Top(*m))));
    for (id, rule) in rules {
        if !ids.contains(id.as_str()) {
            return Err(Error::InvalidConfig(format!("filter for unknown platform {id:?}")));
        }
        if filters.insert(id.as_str(), rule).is_some() {
            return Err(Error::InvalidConfig(format!(
                "more than one filter for platform {id:?}"
            )));
        }
    }
    let mut matrices = Vec::with_capacity(args.platforms.len());
    for (id, path) in &args.platforms {
        let format = args
            .format
            .map_or_else(|| MatrixFormat::from_path(path), MatrixFormat::from);
        let m = read_matrix(path, id, format)?;
        let m = match filters.get(id.as_str()) {
            Some(rule) => sd_filter(&m, *rule)?,
            None => m,
        };
        matrices.push(m);
    }
    let reference: Vec<String> = matrices[0].subject_ids().to_vec();
    for m in matrices.iter_mut().skip(1) {
        if m.subject_ids() != reference.as_slice() {
            let index: HashMap<&str, usize> = m
                .subject_ids()
                .iter()
                .enumerate()
                .map(|(i, s)| (s.as_str(), i))
                .collect();
            if index.len() != reference.len() {
                return Err(Error::InvalidData(format!(
                    "platform {:?} has {} subjects, expected {}",
                    m.platform_id(),
                    m.n_subjects(),
                    reference.len()
                )));
            }
            let keep = reference
                .iter()
                .map(|s| {
                    index.get(s.as_str()).copied().ok_or_else(|| {
                        Error::InvalidData(format!("subject {s:?} missing from platform {:?}", m.platform_id()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            *m = m.select_subjects(&keep)?;
        }
    }
    DataSet::new(matrices)
}
