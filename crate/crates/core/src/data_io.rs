//! Contact-list ingestion, time-window aggregation, CSV tables and the run
//! manifest.
//!
//! Floats are written in shortest round-trip form, so every table reads back
//! bit-identically.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::ParamRow;
use crate::metrics::{ProbabilityEstimates, RocPoint};
use crate::model::{pair_count, pairs, AdjacencySeries, LatentConfig, StaticParams};
use crate::smc::{FilterTrace, StepRecord};

/// One face-to-face contact between two dense node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub timestamp: i64,
    pub node_a: usize,
    pub node_b: usize,
}

/// Bijection between dense indices and the labels found in the input.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMap {
    labels: Vec<String>,
}

impl NodeMap {
    /// Sorts numerically when every label is an integer, lexicographically otherwise.
    pub fn from_labels(labels: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = labels.into_iter().collect();
        let mut labels: Vec<String> = set.into_iter().collect();
        if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
            labels.sort_by_key(|l| l.parse::<i64>().expect("checked integer"));
        }
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Which contacts to keep while parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFilter {
    /// Keep only contacts between these labels.
    pub nodes: Option<BTreeSet<String>>,
    /// Keep only contacts whose fourth and fifth columns both equal this group.
    pub group: Option<String>,
    /// Index every label of `nodes`, even those without a retained contact.
    pub pin_nodes: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedContacts {
    /// Sorted by timestamp; ties keep input order.
    pub records: Vec<ContactRecord>,
    pub nodes: NodeMap,
    pub self_ties_skipped: usize,
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .collect()
}

/// Parses `t,i,j` lines. Fields may be separated by commas or whitespace, a
/// header line is optional and columns past the third are ignored except by
/// the group filter.
pub fn parse_edge_list<R: BufRead>(reader: R, filter: &NodeFilter) -> Result<ParsedContacts> {
    let mut raw: Vec<(i64, String, String)> = Vec::new();
    let mut self_ties = 0;
    let mut seen_data = false;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_fields(trimmed);
        let timestamp = fields.first().and_then(|f| f.parse::<i64>().ok());
        let Some(timestamp) = timestamp else {
            if !seen_data && fields.len() >= 3 {
                seen_data = true;
                continue;
            }
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected an integer timestamp, found {:?}",
                    fields.first().unwrap_or(&"")
                ),
            });
        };
        seen_data = true;
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        let (a, b) = (fields[1], fields[2]);
        if let Some(group) = &filter.group {
            if fields.len() < 5 || fields[3] != group || fields[4] != group {
                continue;
            }
        }
        if let Some(nodes) = &filter.nodes {
            if !nodes.contains(a) || !nodes.contains(b) {
                continue;
            }
        }
        if a == b {
            self_ties += 1;
            continue;
        }
        raw.push((timestamp, a.to_string(), b.to_string()));
    }
    let mut labels: Vec<String> = raw
        .iter()
        .flat_map(|(_, a, b)| [a.clone(), b.clone()])
        .collect();
    if filter.pin_nodes {
        labels.extend(filter.nodes.iter().flatten().cloned());
    }
    let nodes = NodeMap::from_labels(labels);
    let lookup: BTreeMap<&str, usize> = nodes
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut records: Vec<ContactRecord> = raw
        .iter()
        .map(|(t, a, b)| ContactRecord {
            timestamp: *t,
            node_a: lookup[a.as_str()],
            node_b: lookup[b.as_str()],
        })
        .collect();
    records.sort_by_key(|r| r.timestamp);
    Ok(ParsedContacts {
        records,
        nodes,
        self_ties_skipped: self_ties,
    })
}

pub fn parse_edge_file(path: &Path, filter: &NodeFilter) -> Result<ParsedContacts> {
    parse_edge_list(BufReader::new(File::open(path)?), filter)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    #[default]
    Binary,
    Count,
}

/// Half-open windows `[origin + k L, origin + (k+1) L)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Window length `L` in seconds.
    pub length: i64,
    pub mode: WindowMode,
    /// Start of the first window; defaults to the earliest timestamp.
    pub origin: Option<i64>,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 240,
            mode: WindowMode::Binary,
            origin: None,
        }
    }
}

/// Aggregates contacts among `n` nodes into one network per window. The
/// last, possibly partial, window is kept.
pub fn aggregate(
    records: &[ContactRecord],
    n: usize,
    spec: &WindowSpec,
) -> Result<AdjacencySeries> {
    if spec.length <= 0 {
        return Err(Error::InvalidParameter(format!(
            "window length must be positive, got {}",
            spec.length
        )));
    }
    let (Some(lo), Some(hi)) = (
        records.iter().map(|r| r.timestamp).min(),
        records.iter().map(|r| r.timestamp).max(),
    ) else {
        return Err(Error::InvalidParameter(
            "no contact records to aggregate".into(),
        ));
    };
    let origin = spec.origin.unwrap_or(lo);
    if origin > lo {
        return Err(Error::InvalidParameter(format!(
            "window origin {origin} lies after the first record at {lo}"
        )));
    }
    let windows = ((hi - origin) / spec.length + 1) as usize;
    let mut slices = vec![vec![0u32; pair_count(n)]; windows];
    for r in records {
        let (i, j) = (r.node_a.min(r.node_b), r.node_a.max(r.node_b));
        if j >= n || i == j {
            return Err(Error::InputDomain(format!(
                "record {r:?} outside {n} nodes"
            )));
        }
        let w = ((r.timestamp - origin) / spec.length) as usize;
        let cell = &mut slices[w][crate::model::pair_index(n, i, j)];
        *cell = match spec.mode {
            WindowMode::Binary => 1,
            WindowMode::Count => *cell + 1,
        };
    }
    AdjacencySeries::from_upper(n, slices)
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse {
            line: pos.line() as usize,
            message: e.to_string(),
        },
        None => Error::Csv(e),
    }
}

/// Writes serializable rows as a CSV table with a header.
pub fn write_rows<W: Write, T: Serialize>(
    writer: W,
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    write_rows(File::create(path)?, rows)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_rows(File::open(path)?)
}

/// `t,i,j,y` with `t` counted from 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub y: u32,
}

/// Every pair at every time, including zeros, so `N` and `T` are recoverable.
pub fn series_rows(series: &AdjacencySeries) -> Vec<EdgeRow> {
    let n = series.n();
    (0..series.len())
        .flat_map(|k| {
            pairs(n)
                .zip(series.slice(k))
                .map(move |((i, j), &y)| EdgeRow { t: k + 1, i, j, y })
        })
        .collect()
}

pub fn series_from_rows(rows: &[EdgeRow]) -> Result<AdjacencySeries> {
    let t_len = rows.iter().map(|r| r.t).max().unwrap_or(0);
    let n = rows.iter().map(|r| r.j + 1).max().unwrap_or(0);
    let mut slices = vec![vec![None; pair_count(n)]; t_len];
    for (k, r) in rows.iter().enumerate() {
        if r.t == 0 || r.i >= r.j {
            return Err(Error::Parse {
                line: k + 2,
                message: format!("invalid edge row {r:?}"),
            });
        }
        slices[r.t - 1][crate::model::pair_index(n, r.i, r.j)] = Some(r.y);
    }
    let slices = slices
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.into_iter()
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("time {} is missing pairs", k + 1),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    AdjacencySeries::from_upper(n, slices)
}

pub fn write_series(path: &Path, series: &AdjacencySeries) -> Result<()> {
    write_csv(path, series_rows(series))
}

pub fn read_series(path: &Path) -> Result<AdjacencySeries> {
    series_from_rows(&read_csv::<EdgeRow>(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRow {
    pub index: usize,
    pub label: String,
}

pub fn write_node_map(path: &Path, map: &NodeMap) -> Result<()> {
    write_csv(
        path,
        map.labels.iter().enumerate().map(|(index, label)| NodeRow {
            index,
            label: label.clone(),
        }),
    )
}

pub fn read_node_map(path: &Path) -> Result<NodeMap> {
    let rows: Vec<NodeRow> = read_csv(path)?;
    for (k, r) in rows.iter().enumerate() {
        if r.index != k {
            return Err(Error::Parse {
                line: k + 2,
                message: format!("expected index {k}, found {}", r.index),
            });
        }
    }
    Ok(NodeMap {
        labels: rows.into_iter().map(|r| r.label).collect(),
    })
}

/// `index,alpha,sigma,phi,sigma_tilde,phi_tilde,log_lik`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTraceRow {
    pub index: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub phi: f64,
    pub sigma_tilde: f64,
    pub phi_tilde: f64,
    pub log_lik: f64,
}

impl From<&ParamRow> for ParamTraceRow {
    fn from(r: &ParamRow) -> Self {
        let u = r.params.to_unconstrained();
        Self {
            index: r.index,
            alpha: r.params.alpha,
            sigma: r.params.sigma,
            phi: r.params.phi,
            sigma_tilde: u.sigma_tilde,
            phi_tilde: u.phi_tilde,
            log_lik: r.log_lik,
        }
    }
}

pub fn write_param_trace(path: &Path, rows: &[ParamRow]) -> Result<()> {
    write_csv(path, rows.iter().map(ParamTraceRow::from))
}

pub fn read_param_trace(path: &Path) -> Result<Vec<ParamTraceRow>> {
    read_csv(path)
}

/// `time,substep,ess,log_lik_increment,alpha,sigma,phi`; the parameter
/// columns are empty when the record carries none.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterTraceRow {
    pub time: usize,
    pub substep: usize,
    pub ess: f64,
    pub log_lik_increment: f64,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub phi: Option<f64>,
}

pub fn write_filter_trace(path: &Path, trace: &FilterTrace) -> Result<()> {
    write_csv(
        path,
        trace.records.iter().map(|r| FilterTraceRow {
            time: r.time,
            substep: r.substep,
            ess: r.ess,
            log_lik_increment: r.log_lik_increment,
            alpha: r.params.map(|p| p.alpha),
            sigma: r.params.map(|p| p.sigma),
            phi: r.params.map(|p| p.phi),
        }),
    )
}

/// Reads a filter trace; recorded parameters get the default link and likelihood.
pub fn read_filter_trace(path: &Path) -> Result<FilterTrace> {
    let rows: Vec<FilterTraceRow> = read_csv(path)?;
    let records = rows
        .into_iter()
        .map(|r| {
            let params = match (r.alpha, r.sigma, r.phi) {
                (Some(alpha), Some(sigma), Some(phi)) => Some(StaticParams {
                    alpha,
                    sigma,
                    phi,
                    link: Default::default(),
                    likelihood: Default::default(),
                }),
                _ => None,
            };
            StepRecord {
                time: r.time,
                substep: r.substep,
                ess: r.ess,
                log_lik_increment: r.log_lik_increment,
                params,
            }
        })
        .collect();
    Ok(FilterTrace { records })
}

/// `t,i,j,p` with `t` counted from 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub p: f64,
}

pub fn write_probabilities(path: &Path, estimates: &ProbabilityEstimates) -> Result<()> {
    let n = estimates.n();
    write_csv(
        path,
        estimates.slices().iter().enumerate().flat_map(|(k, s)| {
            pairs(n)
                .zip(s)
                .map(move |((i, j), &p)| ProbabilityRow { t: k + 1, i, j, p })
        }),
    )
}

pub fn read_probabilities(path: &Path) -> Result<ProbabilityEstimates> {
    let rows: Vec<ProbabilityRow> = read_csv(path)?;
    let t_len = rows.iter().map(|r| r.t).max().unwrap_or(0);
    let n = rows.iter().map(|r| r.j + 1).max().unwrap_or(0);
    let mut slices = vec![vec![f64::NAN; pair_count(n)]; t_len];
    for (k, r) in rows.iter().enumerate() {
        if r.t == 0 || r.i >= r.j {
            return Err(Error::Parse {
                line: k + 2,
                message: format!("invalid probability row {r:?}"),
            });
        }
        slices[r.t - 1][crate::model::pair_index(n, r.i, r.j)] = r.p;
    }
    ProbabilityEstimates::new(n, slices)
}

/// `t,node,dim,value` with `t` counted from 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    pub t: usize,
    pub node: usize,
    pub dim: usize,
    pub value: f64,
}

pub fn write_latent(path: &Path, latent: &[LatentConfig]) -> Result<()> {
    write_csv(
        path,
        latent.iter().enumerate().flat_map(|(t, u)| {
            let d = u.d();
            u.coords()
                .iter()
                .enumerate()
                .map(move |(k, &value)| LatentRow {
                    t,
                    node: k / d,
                    dim: k % d,
                    value,
                })
        }),
    )
}

/// `t,ess,mse_prob`; `mse_prob` is empty without simulation truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssRow {
    pub t: usize,
    pub ess: f64,
    pub mse_prob: Option<f64>,
}

/// Long-format ROC points, one curve per `curve` label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub curve: String,
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

impl RocRow {
    pub fn new(curve: &str, p: &RocPoint) -> Self {
        Self {
            curve: curve.to_string(),
            threshold: p.threshold,
            fpr: p.fpr,
            tpr: p.tpr,
        }
    }
}

/// Per-pair average absolute error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaeRow {
    pub i: usize,
    pub j: usize,
    pub y: u32,
    pub prediction: f64,
    pub aae: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&std::fs::read(path)?),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to re-run a command: seed, configuration and input digests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<StaticParams>,
    #[serde(default)]
    pub config: toml::Table,
    #[serde(default)]
    pub inputs: Vec<FileDigest>,
    #[serde(default)]
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            schema_version: MANIFEST_VERSION,
            command: command.to_string(),
            seed,
            params: None,
            config: toml::Table::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Manifest(e.to_string()))?;
        let version = table
            .get("schema_version")
            .and_then(|v| v.as_integer())
            .ok_or_else(|| Error::Manifest("missing schema_version".into()))?;
        if version != MANIFEST_VERSION as i64 {
            return Err(Error::ManifestVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: MANIFEST_VERSION,
            });
        }
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn parse(text: &str) -> ParsedContacts {
        parse_edge_list(text.as_bytes(), &NodeFilter::default()).unwrap()
    }

    #[test]
    fn empty_input_gives_no_records() {
        let p = parse("");
        assert!(p.records.is_empty() && p.nodes.is_empty());
    }

    #[test]
    fn reversed_pair_is_the_same_edge() {
        let p = parse("0,A,B\n20,B,A\n");
        assert_eq!(p.records.len(), 2);
        let s = aggregate(
            &p.records,
            p.nodes.len(),
            &WindowSpec {
                mode: WindowMode::Count,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.slice(0), &[2]);
    }

    #[test]
    fn header_whitespace_and_extra_columns() {
        let p =
            parse("t i j Ci Cj\n40\t1558\t1567\t3B\t3B\n20  1567 1560 3B 3B\n60,1560,1560,3B,3B\n");
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.self_ties_skipped, 1);
        assert_eq!(p.nodes.labels(), ["1558", "1560", "1567"]);
        assert_eq!(p.records[0].timestamp, 20);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err =
            parse_edge_list("0,1,2\n\n20,1\n".as_bytes(), &NodeFilter::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_edge_list("0,1,2\nx,1,2\n".as_bytes(), &NodeFilter::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn filters() {
        let text = "0 1 2 A A\n0 2 3 A B\n0 3 4 B B\n20 1 4 A A\n";
        let by_group = parse_edge_list(
            text.as_bytes(),
            &NodeFilter {
                group: Some("A".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(by_group.nodes.labels(), ["1", "2", "4"]);
        let ids: BTreeSet<String> = ["1", "2", "9"].iter().map(|s| s.to_string()).collect();
        let pinned = parse_edge_list(
            text.as_bytes(),
            &NodeFilter {
                nodes: Some(ids.clone()),
                pin_nodes: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(pinned.nodes.labels(), ["1", "2", "9"]);
        assert_eq!(pinned.records.len(), 1);
        let unpinned = parse_edge_list(
            text.as_bytes(),
            &NodeFilter {
                nodes: Some(ids),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(unpinned.nodes.len(), 2);
    }

    #[test]
    fn window_examples() {
        let one = [ContactRecord {
            timestamp: 100,
            node_a: 2,
            node_b: 0,
        }];
        let s = aggregate(&one, 3, &WindowSpec::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.total(), 1);
        assert_eq!(s.get(0, 0, 2), 1);
        assert_eq!(s.get(0, 2, 0), 1);

        let many: Vec<ContactRecord> = (0..13)
            .map(|k| ContactRecord {
                timestamp: 15 * k,
                node_a: 0,
                node_b: 1,
            })
            .collect();
        let count = aggregate(
            &many,
            2,
            &WindowSpec {
                mode: WindowMode::Count,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(count.slices(), &[vec![13]]);
        let binary = aggregate(&many, 2, &WindowSpec::default()).unwrap();
        assert_eq!(binary.slices(), &[vec![1]]);
        // Half-open windows: 240 starts the second window.
        let edge = [
            ContactRecord {
                timestamp: 0,
                node_a: 0,
                node_b: 1,
            },
            ContactRecord {
                timestamp: 240,
                node_a: 0,
                node_b: 1,
            },
        ];
        assert_eq!(
            aggregate(&edge, 2, &WindowSpec::default()).unwrap().len(),
            2
        );
        assert!(aggregate(&[], 2, &WindowSpec::default()).is_err());
        assert!(aggregate(
            &one,
            3,
            &WindowSpec {
                length: 0,
                ..Default::default()
            }
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn count_mode_conserves_records(
            raw in proptest::collection::vec((0i64..5000, 0usize..6, 0usize..6), 1..200),
            shift in 0i64..4,
        ) {
            let records: Vec<ContactRecord> = raw
                .iter()
                .filter(|r| r.1 != r.2)
                .map(|&(timestamp, node_a, node_b)| ContactRecord { timestamp, node_a, node_b })
                .collect();
            if records.is_empty() {
                return Ok(());
            }
            let spec = WindowSpec { length: 240, mode: WindowMode::Count, origin: Some(0) };
            let base = aggregate(&records, 6, &spec).unwrap();
            prop_assert_eq!(base.total(), records.len() as u64);

            let moved: Vec<ContactRecord> = records
                .iter()
                .map(|r| ContactRecord { timestamp: r.timestamp + shift * 240, ..*r })
                .collect();
            let shifted = aggregate(&moved, 6, &spec).unwrap();
            prop_assert_eq!(shifted.len(), base.len() + shift as usize);
            for k in 0..shift as usize {
                prop_assert_eq!(shifted.slice(k).iter().sum::<u32>(), 0);
            }
            for k in 0..base.len() {
                prop_assert_eq!(shifted.slice(k + shift as usize), base.slice(k));
            }
        }

        #[test]
        fn series_round_trips(slices in proptest::collection::vec(proptest::collection::vec(0u32..4, 10), 1..5)) {
            let series = AdjacencySeries::from_upper(5, slices).unwrap();
            let mut buf = Vec::new();
            write_rows(&mut buf, series_rows(&series)).unwrap();
            let back = series_from_rows(&read_rows::<_, EdgeRow>(buf.as_slice()).unwrap()).unwrap();
            prop_assert_eq!(back, series);
        }

        #[test]
        fn floats_round_trip_bitwise(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..20)) {
            let rows: Vec<EssRow> = values.iter().enumerate().map(|(t, &v)| EssRow { t, ess: v, mse_prob: Some(-v) }).collect();
            let mut buf = Vec::new();
            write_rows(&mut buf, &rows).unwrap();
            let back: Vec<EssRow> = read_rows(buf.as_slice()).unwrap();
            for (a, b) in rows.iter().zip(&back) {
                prop_assert_eq!(a.ess.to_bits(), b.ess.to_bits());
                prop_assert_eq!(a.mse_prob.map(f64::to_bits), b.mse_prob.map(f64::to_bits));
            }
        }
    }

    #[test]
    fn manifest_round_trip_and_version_check() {
        let mut m = RunManifest::new("fit", 42);
        m.params = Some(StaticParams::new(0.1 + 0.2, 0.4, 0.9).unwrap());
        m.config
            .insert("particles".into(), toml::Value::Integer(500));
        m.inputs.push(FileDigest {
            path: "data.csv".into(),
            sha256: sha256_hex(b"abc"),
        });
        let back = RunManifest::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            back.params.unwrap().alpha.to_bits(),
            (0.1f64 + 0.2).to_bits()
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let future = m
            .to_toml()
            .unwrap()
            .replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(
            RunManifest::from_toml(&future),
            Err(Error::ManifestVersion {
                found: 7,
                expected: 1
            })
        ));
    }

    #[test]
    fn filter_trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = FilterTrace {
            records: vec![
                StepRecord {
                    time: 1,
                    substep: 1,
                    ess: 3.25,
                    log_lik_increment: -1.0 / 3.0,
                    params: None,
                },
                StepRecord {
                    time: 1,
                    substep: 2,
                    ess: 4.0,
                    log_lik_increment: 0.1,
                    params: Some(StaticParams::new(0.5, 0.2, 0.9).unwrap()),
                },
            ],
        };
        write_filter_trace(&path, &trace).unwrap();
        assert_eq!(read_filter_trace(&path).unwrap(), trace);
    }
}
