//! CSV and JSON readers and writers for every artifact.
//!
//! Writers emit rows in a canonical order with floats in Rust's shortest
//! round-trip notation and LF line endings, so rewriting unchanged data
//! produces byte-identical files. Readers validate headers and report the
//! offending line on malformed input.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::covariates::{ProcurementNotice, Provenance, RankingEntry, RegionYearPanel};
use crate::ingest::{FlowTable, FlowYear, Level, Scope};
use crate::model::CurvePoint;
use crate::network::{HitsScores, MobilityNetwork, Partition, SCoreResult};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: u64,
        message: String,
    },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> IoError {
    IoError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path, expected_header: &[&str]) -> Result<csv::Reader<std::fs::File>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected_header {
        return Err(malformed(
            path,
            1,
            format!(
                "expected header '{}', got '{}'",
                expected_header.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(reader)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    record: &csv::StringRecord,
    idx: usize,
    what: &str,
) -> Result<T, IoError> {
    let raw = record
        .get(idx)
        .ok_or_else(|| malformed(path, record_line(record), format!("missing {what}")))?;
    raw.trim().parse().map_err(|_| {
        malformed(
            path,
            record_line(record),
            format!("cannot parse {what} from '{raw}'"),
        )
    })
}

fn string_field(
    path: &Path,
    record: &csv::StringRecord,
    idx: usize,
    what: &str,
) -> Result<String, IoError> {
    Ok(record
        .get(idx)
        .ok_or_else(|| malformed(path, record_line(record), format!("missing {what}")))?
        .trim()
        .to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, IoError> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

/// One region's metadata row for the `region,country,lat,lon` table.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMetadataRow {
    pub region: String,
    pub country: String,
    pub lat: f64,
    pub lon: f64,
}

/// One `region,year,population,researchers` denominator row.
#[derive(Debug, Clone, PartialEq)]
pub struct DenominatorRow {
    pub region: String,
    pub year: i32,
    pub population: f64,
    pub researchers: f64,
}

/// One `raw_name,region` alias row.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasRow {
    pub raw_name: String,
    pub region: String,
}

/// One `person_id,place,start_year,end_year,kind` affiliation row; empty
/// years stay empty in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct AffiliationRow {
    pub person_id: String,
    pub place: String,
    pub start_year: Option<i32>,
    pub end_year: Option<i32>,
    pub kind: String,
}

pub fn write_region_metadata(path: &Path, rows: &[RegionMetadataRow]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["region", "country", "lat", "lon"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.region.as_str(),
            r.country.as_str(),
            &r.lat.to_string(),
            &r.lon.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

pub fn write_denominators(path: &Path, rows: &[DenominatorRow]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["region", "year", "population", "researchers"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.region.as_str(),
            &r.year.to_string(),
            &r.population.to_string(),
            &r.researchers.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

pub fn write_aliases(path: &Path, rows: &[AliasRow]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["raw_name", "region"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([r.raw_name.as_str(), r.region.as_str()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

pub fn write_affiliations(path: &Path, rows: &[AffiliationRow]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["person_id", "place", "start_year", "end_year", "kind"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        let start = r.start_year.map(|y| y.to_string()).unwrap_or_default();
        let end = r.end_year.map(|y| y.to_string()).unwrap_or_default();
        w.write_record([
            r.person_id.as_str(),
            r.place.as_str(),
            &start,
            &end,
            r.kind.as_str(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Writes a flow table as `year,sender,receiver,count` in canonical order;
/// cumulative entries carry `*` as the year.
pub fn write_flow_table(path: &Path, table: &FlowTable) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["year", "sender", "receiver", "count"])
        .map_err(|e| csv_err(path, e))?;
    for (year, sender, receiver, count) in table.entries() {
        w.write_record([&year.to_string(), sender, receiver, &count.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Reads a flow table. The universe is the given node list when provided,
/// otherwise the set of regions appearing in the file.
pub fn read_flow_table(
    path: &Path,
    scope: Scope,
    level: Level,
    year_range: (i32, i32),
    universe: Option<&[String]>,
) -> Result<FlowTable, IoError> {
    let mut reader = open_reader(path, &["year", "sender", "receiver", "count"])?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let year_raw = string_field(path, &record, 0, "year")?;
        let year = if year_raw == "*" {
            FlowYear::Cumulative
        } else {
            FlowYear::Year(year_raw.parse().map_err(|_| {
                malformed(
                    path,
                    record_line(&record),
                    format!("cannot parse year from '{year_raw}'"),
                )
            })?)
        };
        let sender = string_field(path, &record, 1, "sender")?;
        let receiver = string_field(path, &record, 2, "receiver")?;
        let count: f64 = parse_field(path, &record, 3, "count")?;
        rows.push((year, sender, receiver, count));
    }
    let universe: Vec<String> = match universe {
        Some(u) => u.to_vec(),
        None => rows
            .iter()
            .flat_map(|(_, s, r, _)| [s.clone(), r.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut table = FlowTable::new(scope, level, year_range, universe);
    for (year, sender, receiver, count) in rows {
        table.set(year, &sender, &receiver, count);
    }
    Ok(table)
}

pub fn write_rankings(path: &Path, rows: &[RankingEntry]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["year", "university", "position", "region"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            &r.year.to_string(),
            r.university.as_str(),
            &r.position.to_string(),
            r.region.as_str(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

pub fn read_rankings(path: &Path) -> Result<Vec<RankingEntry>, IoError> {
    let mut reader = open_reader(path, &["year", "university", "position", "region"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        out.push(RankingEntry {
            year: parse_field(path, &record, 0, "year")?,
            university: string_field(path, &record, 1, "university")?,
            position: parse_field(path, &record, 2, "position")?,
            region: string_field(path, &record, 3, "region")?,
        });
    }
    Ok(out)
}

pub fn write_procurements(path: &Path, rows: &[ProcurementNotice]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["year", "region", "value_euro", "awarded"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        let year = r.year.to_string();
        let value = r.value_euro.to_string();
        w.write_record([
            year.as_str(),
            r.region.as_str(),
            value.as_str(),
            if r.awarded { "true" } else { "false" },
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

pub fn read_procurements(path: &Path) -> Result<Vec<ProcurementNotice>, IoError> {
    let mut reader = open_reader(path, &["year", "region", "value_euro", "awarded"])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        out.push(ProcurementNotice {
            year: parse_field(path, &record, 0, "year")?,
            region: string_field(path, &record, 1, "region")?,
            value_euro: parse_field(path, &record, 2, "value_euro")?,
            awarded: parse_field(path, &record, 3, "awarded")?,
        });
    }
    Ok(out)
}

/// Writes `(key, year) -> value` rows under the given key header, in map
/// order.
pub fn write_keyed_values(
    path: &Path,
    key_header: &str,
    rows: &std::collections::BTreeMap<(String, i32), f64>,
) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record([key_header, "year", "value"])
        .map_err(|e| csv_err(path, e))?;
    for ((key, year), value) in rows {
        w.write_record([key.as_str(), &year.to_string(), &value.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

pub fn read_keyed_values(
    path: &Path,
    key_header: &str,
) -> Result<std::collections::BTreeMap<(String, i32), f64>, IoError> {
    let mut reader = open_reader(path, &[key_header, "year", "value"])?;
    let mut out = std::collections::BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let key = string_field(path, &record, 0, key_header)?;
        let year: i32 = parse_field(path, &record, 1, "year")?;
        let value: f64 = parse_field(path, &record, 2, "value")?;
        out.insert((key, year), value);
    }
    Ok(out)
}

/// Writes a panel as `region,year,indicator,value,provenance` in canonical
/// order.
pub fn write_panel(path: &Path, panel: &RegionYearPanel) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["region", "year", "indicator", "value", "provenance"])
        .map_err(|e| csv_err(path, e))?;
    for (region, year, indicator, value, prov) in panel.entries() {
        w.write_record([
            region,
            &year.to_string(),
            indicator,
            &value.to_string(),
            &prov.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Reads a panel; the axes are the distinct regions, years, and indicators
/// present in the file.
pub fn read_panel(path: &Path) -> Result<RegionYearPanel, IoError> {
    let mut reader = open_reader(path, &["region", "year", "indicator", "value", "provenance"])?;
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let region = string_field(path, &record, 0, "region")?;
        let year: i32 = parse_field(path, &record, 1, "year")?;
        let indicator = string_field(path, &record, 2, "indicator")?;
        let value: f64 = parse_field(path, &record, 3, "value")?;
        let prov_raw = string_field(path, &record, 4, "provenance")?;
        let prov = match prov_raw.as_str() {
            "observed" => Provenance::Observed,
            "corrected" => Provenance::Corrected,
            "imputed" => Provenance::Imputed,
            other => {
                return Err(malformed(
                    path,
                    record_line(&record),
                    format!("unknown provenance '{other}'"),
                ))
            }
        };
        cells.push((region, year, indicator, value, prov));
    }
    let regions: Vec<String> = cells.iter().map(|c| c.0.clone()).collect();
    let years: Vec<i32> = cells.iter().map(|c| c.1).collect();
    let indicators: Vec<String> = cells.iter().map(|c| c.2.clone()).collect();
    let mut panel = RegionYearPanel::new(regions, years, indicators);
    for (region, year, indicator, value, prov) in cells {
        panel.set(&region, year, &indicator, value, prov);
    }
    Ok(panel)
}

/// Writes the nonzero edges of a network as `sender,receiver,weight` in node
/// order.
pub fn write_network(path: &Path, net: &MobilityNetwork) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["sender", "receiver", "weight"])
        .map_err(|e| csv_err(path, e))?;
    let nodes = net.nodes();
    for i in 0..net.n() {
        for j in 0..net.n() {
            let weight = net.weight(i, j);
            if weight != 0.0 {
                w.write_record([
                    nodes[i].as_str(),
                    nodes[j].as_str(),
                    &weight.to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Reads an edge list. Extra isolated nodes survive only when a universe is
/// given; unknown endpoints are an error when it is.
pub fn read_network(path: &Path, universe: Option<&[String]>) -> Result<MobilityNetwork, IoError> {
    let mut reader = open_reader(path, &["sender", "receiver", "weight"])?;
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let sender = string_field(path, &record, 0, "sender")?;
        let receiver = string_field(path, &record, 1, "receiver")?;
        let weight: f64 = parse_field(path, &record, 2, "weight")?;
        edges.push((sender, receiver, weight, record_line(&record)));
    }
    let nodes: Vec<String> = match universe {
        Some(u) => u.to_vec(),
        None => edges
            .iter()
            .flat_map(|(s, r, _, _)| [s.clone(), r.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut net = MobilityNetwork::new(nodes);
    for (sender, receiver, weight, line) in edges {
        let i = net
            .node_index(&sender)
            .ok_or_else(|| malformed(path, line, format!("unknown sender '{sender}'")))?;
        let j = net
            .node_index(&receiver)
            .ok_or_else(|| malformed(path, line, format!("unknown receiver '{receiver}'")))?;
        net.set_weight(i, j, weight);
    }
    Ok(net)
}

/// Writes hub and authority scores as `region,hub,authority` in node order.
pub fn write_hits_scores(
    path: &Path,
    nodes: &[String],
    scores: &HitsScores,
) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["region", "hub", "authority"])
        .map_err(|e| csv_err(path, e))?;
    for (i, node) in nodes.iter().enumerate() {
        w.write_record([
            node.as_str(),
            &scores.hub[i].to_string(),
            &scores.authority[i].to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Reads `region,hub,authority` back into node order and score vectors.
pub fn read_hits_scores(path: &Path) -> Result<(Vec<String>, Vec<f64>, Vec<f64>), IoError> {
    let mut reader = open_reader(path, &["region", "hub", "authority"])?;
    let mut nodes = Vec::new();
    let mut hub = Vec::new();
    let mut authority = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        nodes.push(string_field(path, &record, 0, "region")?);
        hub.push(parse_field(path, &record, 1, "hub")?);
        authority.push(parse_field(path, &record, 2, "authority")?);
    }
    Ok((nodes, hub, authority))
}

/// Writes shell assignments as `region,shell,threshold` in node order.
pub fn write_s_core(path: &Path, result: &SCoreResult) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["region", "shell", "threshold"])
        .map_err(|e| csv_err(path, e))?;
    for (node, &shell) in result.nodes.iter().zip(&result.shell) {
        w.write_record([
            node.as_str(),
            &shell.to_string(),
            &result.thresholds[shell].to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Writes a partition as `region,label` in node order.
pub fn write_partition(path: &Path, partition: &Partition) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["region", "label"])
        .map_err(|e| csv_err(path, e))?;
    for (node, label) in partition.nodes.iter().zip(&partition.labels) {
        w.write_record([node.as_str(), &label.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

pub fn read_partition(path: &Path) -> Result<Partition, IoError> {
    let mut reader = open_reader(path, &["region", "label"])?;
    let mut nodes = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        nodes.push(string_field(path, &record, 0, "region")?);
        labels.push(parse_field(path, &record, 1, "label")?);
    }
    Ok(Partition::new(nodes, labels))
}

/// One row of the indicator comparison table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnovaRow {
    pub variable: String,
    pub location_p: f64,
    pub scale_p: f64,
}

pub fn write_anova_table(path: &Path, rows: &[AnovaRow]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["variable", "location_p", "scale_p"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.variable.as_str(),
            &r.location_p.to_string(),
            &r.scale_p.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Writes smooth-term curves as `term,x,fit,se`, term by term.
pub fn write_curves(path: &Path, curves: &[(String, Vec<CurvePoint>)]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(["term", "x", "fit", "se"])
        .map_err(|e| csv_err(path, e))?;
    for (term, points) in curves {
        for p in points {
            w.write_record([
                term.as_str(),
                &p.x.to_string(),
                &p.fit.to_string(),
                &p.se.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| IoError::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| file_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let body = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&body).map_err(|e| IoError::Json {
        path: path.display().to_string(),
        source: e,
    })
}
