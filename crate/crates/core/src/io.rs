//! Matrix ingestion, variance filtering and result serialization.
//!
//! Matrices are delimited text: the header row holds subject ids after one
//! leading cell, every following row is a probe id followed by its values.
//! Floats are written with 17 significant digits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hier::Dendrogram;
use crate::model::{ClusterFit, DataSet, Partition, PlatformMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Tsv,
}

impl MatrixFormat {
    /// `.tsv`/`.tab`/`.txt` are tab separated, anything else comma separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(e) if e == "tsv" || e == "tab" || e == "txt" => MatrixFormat::Tsv,
            _ => MatrixFormat::Csv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            MatrixFormat::Csv => b',',
            MatrixFormat::Tsv => b'\t',
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn read_matrix(path: &Path, platform_id: &str, format: MatrixFormat) -> Result<PlatformMatrix> {
    let file = File::open(path)?;
    read_matrix_from(file, platform_id, format)
}

pub fn read_matrix_from<R: Read>(reader: R, platform_id: &str, format: MatrixFormat) -> Result<PlatformMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let parse_err = |row: usize, column: usize, message: String| Error::Parse { row, column, message };
    let header = records
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty file".into()))?
        .map_err(|e| parse_err(1, 1, e.to_string()))?;
    if header.len() < 2 {
        return Err(parse_err(1, 2, "header lists no subjects".into()));
    }
    let subject_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let n = subject_ids.len();
    let mut probe_ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (r, rec) in records.enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| parse_err(row, 1, e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != n + 1 {
            return Err(parse_err(
                row,
                rec.len(),
                format!("expected {} fields, found {}", n + 1, rec.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_err(row, 1, format!("duplicate probe id {id:?}")));
        }
        let values = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, cell)| match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(
                    row,
                    c + 2,
                    format!("non-numeric or non-finite cell {cell:?}"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        probe_ids.push(id);
        rows.push(values);
    }
    PlatformMatrix::from_rows(platform_id, probe_ids, subject_ids, &rows)
}

pub fn write_matrix<W: Write>(writer: W, matrix: &PlatformMatrix, format: MatrixFormat) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .from_writer(writer);
    let mut header = vec!["probe_id".to_string()];
    header.extend(matrix.subject_ids().iter().cloned());
    wtr.write_record(&header).map_err(csv_err)?;
    for (j, id) in matrix.probe_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(matrix.probe_row(j).into_iter().map(fmt_f64));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidData(format!("{other:?}")),
    }
}

/// Probe selection rule for [`sd_filter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdFilter {
    /// Keep probes whose sample standard deviation exceeds the threshold.
    Threshold(f64),
    /// Keep the `m` most variable probes, ties broken by probe id.
    Top(usize),
}

/// Per-probe sample standard deviation across subjects.
pub fn probe_sds(matrix: &PlatformMatrix) -> Vec<f64> {
    (0..matrix.n_probes())
        .map(|j| crate::density::sample_variance(&matrix.probe_row(j)).sqrt())
        .collect()
}

/// Variance filtering of probes; subject columns are untouched and the
/// original probe order is kept.
pub fn sd_filter(matrix: &PlatformMatrix, rule: SdFilter) -> Result<PlatformMatrix> {
    let sds = probe_sds(matrix);
    let keep: Vec<usize> = match rule {
        SdFilter::Threshold(t) => {
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig(format!("sd threshold {t} must be non-negative")));
            }
            (0..sds.len()).filter(|&j| sds[j] > t).collect()
        }
        SdFilter::Top(m) => {
            if m == 0 || m > sds.len() {
                return Err(Error::InvalidConfig(format!(
                    "top-{m} requested from {} probes",
                    sds.len()
                )));
            }
            let ids = matrix.probe_ids();
            let mut order: Vec<usize> = (0..sds.len()).collect();
            order.sort_by(|&a, &b| sds[b].total_cmp(&sds[a]).then_with(|| ids[a].cmp(&ids[b])));
            let mut keep = order[..m].to_vec();
            keep.sort_unstable();
            keep
        }
    };
    matrix.select_probes(&keep)
}

/// On-disk form of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub subject_ids: Vec<String>,
    pub assignment: Vec<usize>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
}

impl PartitionFile {
    pub fn new(subject_ids: &[String], partition: &Partition, loglik: Option<f64>) -> Self {
        Self {
            subject_ids: subject_ids.to_vec(),
            assignment: partition.assignment().to_vec(),
            k: partition.k(),
            loglik,
            ari: None,
        }
    }

    pub fn partition(&self) -> Result<Partition> {
        if self.assignment.len() != self.subject_ids.len() {
            return Err(Error::InvalidData("assignment and subject ids differ in length".into()));
        }
        Partition::new(self.assignment.clone(), self.k)
    }

    /// The partition reordered onto `subject_ids`.
    pub fn partition_for(&self, subject_ids: &[String]) -> Result<Partition> {
        let index: std::collections::HashMap<&str, usize> = self
            .subject_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let labels = subject_ids
            .iter()
            .map(|s| {
                index
                    .get(s.as_str())
                    .map(|&i| self.assignment[i])
                    .ok_or_else(|| Error::InvalidData(format!("subject {s:?} missing from partition file")))
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::from_labels(&labels)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn write_records(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    wtr.write_record(header).map_err(csv_err)?;
    for r in rows {
        wtr.write_record(&r).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// `step, members_a, members_b, loglik`, members as `;`-joined subject ids.
pub fn write_merges_csv(path: &Path, dendrogram: &Dendrogram) -> Result<()> {
    let members = dendrogram.cluster_members();
    let names = |c: usize| {
        members[c]
            .iter()
            .map(|&i| dendrogram.subject_ids[i].as_str())
            .collect::<Vec<_>>()
            .join(";")
    };
    write_records(
        path,
        &["step", "members_a", "members_b", "loglik"],
        dendrogram.merges.iter().enumerate().map(|(t, m)| {
            vec![
                (t + 1).to_string(),
                names(m.cluster_a),
                names(m.cluster_b),
                fmt_f64(m.loglik),
            ]
        }),
    )
}

/// `K, loglik` for K = n down to 1.
pub fn write_trace_csv(path: &Path, dendrogram: &Dendrogram) -> Result<()> {
    let n = dendrogram.n();
    write_records(
        path,
        &["K", "loglik"],
        dendrogram
            .loglik_trace
            .iter()
            .enumerate()
            .map(|(t, &l)| vec![(n - t).to_string(), fmt_f64(l)]),
    )
}

pub fn write_tau_csv(path: &Path, subject_ids: &[String], tau: &[Vec<f64>]) -> Result<()> {
    let k = tau.first().map_or(0, Vec::len);
    let mut header = vec!["subject".to_string()];
    header.extend((0..k).map(|c| format!("cluster_{c}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(
        path,
        &header_ref,
        subject_ids.iter().zip(tau).map(|(s, row)| {
            let mut r = vec![s.clone()];
            r.extend(row.iter().map(|&x| fmt_f64(x)));
            r
        }),
    )
}

/// One `gamma_<cluster>_<platform>.csv` per cluster and platform.
pub fn write_gamma_files(dir: &Path, data: &DataSet, fits: &[ClusterFit]) -> Result<()> {
    for (c, fit) in fits.iter().enumerate() {
        for (k, plat) in data.platforms().iter().enumerate() {
            let path = dir.join(format!("gamma_{c}_{}.csv", plat.platform_id()));
            write_records(
                &path,
                &["probe_id", "gamma"],
                plat.probe_ids()
                    .iter()
                    .zip(&fit.gamma[k])
                    .map(|(id, &g)| vec![id.clone(), fmt_f64(g)]),
            )?;
        }
    }
    Ok(())
}

/// Probe order for heatmaps: lexicographically increasing γ across the
/// cluster sequence, dropping probes whose γ is equal (within `exclude_eps`)
/// for every cluster. Returns probe indices.
pub fn heatmap_order(gammas: &[&[f64]], exclude_eps: f64) -> Vec<usize> {
    let g = gammas.first().map_or(0, |x| x.len());
    let mut order: Vec<usize> = (0..g)
        .filter(|&j| {
            let (lo, hi) = gammas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), gc| {
                (lo.min(gc[j]), hi.max(gc[j]))
            });
            hi - lo > exclude_eps
        })
        .collect();
    order.sort_by(|&a, &b| {
        gammas
            .iter()
            .map(|gc| gc[a].total_cmp(&gc[b]))
            .find(|o| o.is_ne())
            .unwrap_or(a.cmp(&b))
    });
    order
}

/// One `heatmap_order_<platform>.csv` per platform.
pub fn write_heatmap_files(dir: &Path, data: &DataSet, fits: &[ClusterFit], exclude_eps: f64) -> Result<()> {
    for (k, plat) in data.platforms().iter().enumerate() {
        let gammas: Vec<&[f64]> = fits.iter().map(|f| f.gamma[k].as_slice()).collect();
        let order = heatmap_order(&gammas, exclude_eps);
        let mut header = vec!["probe_id".to_string()];
        header.extend((0..fits.len()).map(|c| format!("gamma_{c}")));
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        write_records(
            &dir.join(format!("heatmap_order_{}.csv", plat.platform_id())),
            &header_ref,
            order.iter().map(|&j| {
                let mut r = vec![plat.probe_ids()[j].clone()];
                r.extend(gammas.iter().map(|gc| fmt_f64(gc[j])));
                r
            }),
        )?;
    }
    Ok(())
}

/// `subject, label, score_<label>...`; degenerate scores are `NA`.
pub fn write_scores_csv(
    path: &Path,
    subject_ids: &[String],
    labels: &[String],
    results: &[crate::classify::Classification],
) -> Result<()> {
    let mut header = vec!["subject".to_string(), "label".to_string()];
    header.extend(labels.iter().map(|l| format!("score_{l}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(
        path,
        &header_ref,
        subject_ids.iter().zip(results).map(|(s, r)| {
            let mut row = vec![s.clone(), r.label.clone()];
            row.extend(r.scores.iter().map(|x| x.map_or("NA".to_string(), fmt_f64)));
            row
        }),
    )
}

pub fn write_subject_fits_csv(path: &Path, data: &DataSet, fits: &[crate::subject::SubjectFitResult]) -> Result<()> {
    let mut rows = Vec::new();
    for (i, fit) in fits.iter().enumerate() {
        for (k, plat) in data.platforms().iter().enumerate() {
            let p = fit.theta.platform(k);
            rows.push(vec![
                data.subject_ids()[i].clone(),
                plat.platform_id().to_string(),
                fmt_f64(p.mu1),
                fmt_f64(p.var1),
                fmt_f64(p.mu2),
                fmt_f64(p.var2),
                fmt_f64(fit.pi1[k]),
                fmt_f64(fit.platform_loglik[k]),
            ]);
        }
    }
    write_records(
        path,
        &["subject", "platform", "mu1", "var1", "mu2", "var2", "pi1", "loglik"],
        rows,
    )
}
