//! Affiliation records -> migration events -> flow tables.
//!
//! The ingest path is deliberately strict about what counts as a move: an
//! affiliation with no date at all is dropped (and logged), an affiliation
//! whose place cannot be resolved to a region is kept but excluded from
//! pairing, and a person's history is ordered by `(start_year, end_year,
//! input sequence)` with missing years borrowed from the other endpoint of
//! the same record. Consecutive affiliations in different regions produce one
//! event; the event year is the start of the new affiliation, falling back to
//! the end of the previous one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: Box<csv::Error>,
    },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("alias '{alias}' points at unknown region '{region}'")]
    AliasTarget { alias: String, region: String },
    #[error("region '{0}' has no metadata entry (country unknown)")]
    UnknownRegion(String),
    #[error("no usable denominator for region '{region}' in year {year}")]
    MissingDenominator { region: String, year: String },
    #[error("cannot normalize a cumulative flow table; normalize per-year flows and aggregate afterwards")]
    CumulativeNormalization,
    #[error("{0}")]
    Invalid(String),
}

/// One row of an affiliation history.
///
/// At least one of `start_year` / `end_year` is present (the parser drops
/// fully undated rows). `seq` is the row's position in the original input;
/// it is the final ordering tie-break, so extraction does not depend on how
/// a record slice happens to be ordered in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffiliationRecord {
    pub person_id: String,
    pub place_raw: String,
    /// Resolved region code, `None` when the place could not be resolved.
    pub region: Option<String>,
    pub start_year: Option<i32>,
    pub end_year: Option<i32>,
    pub kind: String,
    pub seq: usize,
}

/// One inferred move between regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MigrationEvent {
    pub person_id: String,
    pub sender: String,
    pub receiver: String,
    pub year: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionInfo {
    pub lat: f64,
    pub lon: f64,
}

/// Region universe, alias table and per-year denominators.
///
/// Resolution order: exact region code, case/diacritic-folded region code,
/// folded alias. Retired region codes are merged by aliasing them onto their
/// successor; a merged-away code must not appear in the metadata table or the
/// exact match would shadow the alias.
#[derive(Debug, Clone, Default)]
pub struct RegionMap {
    regions: BTreeMap<String, (String, RegionInfo)>, // region -> (country, coords)
    folded: HashMap<String, String>,                 // folded region code -> region
    aliases: HashMap<String, String>,                // folded raw name -> region
    denominators: BTreeMap<(String, i32), (f64, f64)>, // (region, year) -> (population, researchers)
}

/// Case-fold, strip common Latin diacritics, collapse whitespace.
pub fn fold_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last_space = true;
    for c in raw.trim().chars().flat_map(char::to_lowercase) {
        let mapped: &str = match c {
            'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' | 'ā' | 'ă' | 'ą' => "a",
            'ç' | 'ć' | 'č' | 'ĉ' | 'ċ' => "c",
            'ď' | 'đ' => "d",
            'è' | 'é' | 'ê' | 'ë' | 'ē' | 'ĕ' | 'ė' | 'ę' | 'ě' => "e",
            'ĝ' | 'ğ' | 'ġ' | 'ģ' => "g",
            'ì' | 'í' | 'î' | 'ï' | 'ĩ' | 'ī' | 'ĭ' | 'į' | 'ı' => "i",
            'ł' | 'ĺ' | 'ļ' | 'ľ' => "l",
            'ñ' | 'ń' | 'ņ' | 'ň' => "n",
            'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' | 'ō' | 'ŏ' | 'ő' => "o",
            'ŕ' | 'ř' => "r",
            'ś' | 'ş' | 'š' | 'ș' => "s",
            'ť' | 'ţ' | 'ț' => "t",
            'ù' | 'ú' | 'û' | 'ü' | 'ũ' | 'ū' | 'ŭ' | 'ů' | 'ű' | 'ų' => "u",
            'ý' | 'ÿ' => "y",
            'ź' | 'ż' | 'ž' => "z",
            'ß' => "ss",
            'æ' => "ae",
            'œ' => "oe",
            _ => {
                if c.is_whitespace() {
                    if !last_space {
                        out.push(' ');
                        last_space = true;
                    }
                    continue;
                }
                out.push(c);
                last_space = false;
                continue;
            }
        };
        out.push_str(mapped);
        last_space = false;
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

impl RegionMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_region(&mut self, region: &str, country: &str, lat: f64, lon: f64) {
        self.regions
            .insert(region.to_string(), (country.to_string(), RegionInfo { lat, lon }));
        self.folded.insert(fold_name(region), region.to_string());
    }

    pub fn add_alias(&mut self, raw_name: &str, region: &str) -> Result<(), IngestError> {
        if !self.regions.contains_key(region) {
            return Err(IngestError::AliasTarget {
                alias: raw_name.to_string(),
                region: region.to_string(),
            });
        }
        self.aliases.insert(fold_name(raw_name), region.to_string());
        Ok(())
    }

    pub fn add_denominator(&mut self, region: &str, year: i32, population: f64, researchers: f64) {
        self.denominators
            .insert((region.to_string(), year), (population, researchers));
    }

    /// Region codes in sorted order.
    pub fn universe(&self) -> Vec<String> {
        self.regions.keys().cloned().collect()
    }

    pub fn contains(&self, region: &str) -> bool {
        self.regions.contains_key(region)
    }

    pub fn country(&self, region: &str) -> Option<&str> {
        self.regions.get(region).map(|(c, _)| c.as_str())
    }

    pub fn coords(&self, region: &str) -> Option<RegionInfo> {
        self.regions.get(region).map(|(_, i)| *i)
    }

    /// Sorted list of countries covered by the universe.
    pub fn countries(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.regions.values().map(|(c, _)| c.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn denominator(&self, region: &str, year: i32) -> Option<(f64, f64)> {
        self.denominators.get(&(region.to_string(), year)).copied()
    }

    /// Resolve a raw place string to a region code.
    pub fn resolve(&self, place_raw: &str) -> Option<&str> {
        let trimmed = place_raw.trim();
        if let Some((region, _)) = self.regions.get_key_value(trimmed) {
            return Some(region.as_str());
        }
        let folded = fold_name(trimmed);
        if let Some(region) = self.folded.get(&folded) {
            return Some(region.as_str());
        }
        self.aliases.get(&folded).map(String::as_str)
    }

    /// Load from the three on-disk tables. `aliases` and `denominators` are
    /// optional inputs; pass `None` when the run does not use them.
    pub fn load(
        metadata: &Path,
        aliases: Option<&Path>,
        denominators: Option<&Path>,
    ) -> Result<Self, IngestError> {
        let mut map = RegionMap::new();
        let mut rdr = open_csv(metadata)?;
        check_headers(&mut rdr, metadata, &["region", "country", "lat", "lon"])?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(metadata, e))?;
            let region = field(&rec, 0);
            let country = field(&rec, 1);
            let lat: f64 = parse_num(metadata, &rec, 2)?;
            let lon: f64 = parse_num(metadata, &rec, 3)?;
            map.add_region(&region, &country, lat, lon);
        }
        if let Some(path) = aliases {
            let mut rdr = open_csv(path)?;
            check_headers(&mut rdr, path, &["raw_name", "region"])?;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| csv_err(path, e))?;
                map.add_alias(&field(&rec, 0), &field(&rec, 1))?;
            }
        }
        if let Some(path) = denominators {
            let mut rdr = open_csv(path)?;
            check_headers(&mut rdr, path, &["region", "year", "population", "researchers"])?;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| csv_err(path, e))?;
                let region = field(&rec, 0);
                let year: i32 = parse_num(path, &rec, 1)?;
                let population: f64 = parse_num(path, &rec, 2)?;
                let researchers: f64 = parse_num(path, &rec, 3)?;
                map.add_denominator(&region, year, population, researchers);
            }
        }
        Ok(map)
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                IngestError::Io { path: path.display().to_string(), source: io }
            } else {
                unreachable!()
            }
        }
        _ => csv_err(path, e),
    })
}

fn csv_err(path: &Path, e: csv::Error) -> IngestError {
    IngestError::Csv { path: path.display().to_string(), source: Box::new(e) }
}

fn check_headers<R: Read>(
    rdr: &mut csv::Reader<R>,
    path: &Path,
    required: &[&str],
) -> Result<(), IngestError> {
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(IngestError::MissingColumn {
                path: path.display().to_string(),
                column: col.to_string(),
            });
        }
    }
    Ok(())
}

fn field(rec: &csv::StringRecord, idx: usize) -> String {
    rec.get(idx).unwrap_or("").trim().to_string()
}

fn parse_num<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    idx: usize,
) -> Result<T, IngestError> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| {
        IngestError::Invalid(format!(
            "{}: cannot parse '{}' at line {}",
            path.display(),
            raw,
            rec.position().map(|p| p.line()).unwrap_or(0)
        ))
    })
}

/// A dropped or suspicious input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub records: Vec<AffiliationRecord>,
    pub issues: Vec<RowIssue>,
    /// Share of kept records whose place resolved to a region. 1.0 on empty input.
    pub resolution_rate: f64,
}

/// Parse an affiliations CSV (`person_id,place,start_year,end_year,kind`).
///
/// Row-level problems (undated rows, unparseable years) are collected as
/// issues and the rows dropped; only an unreadable file or a missing column
/// is fatal. Unresolved places are kept with `region = None` and only lower
/// the resolution rate.
pub fn parse_affiliations(path: &Path, map: &RegionMap) -> Result<ParseOutcome, IngestError> {
    let mut rdr = open_csv(path)?;
    check_headers(&mut rdr, path, &["person_id", "place", "start_year", "end_year", "kind"])?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (c_person, c_place, c_start, c_end, c_kind) =
        (col("person_id"), col("place"), col("start_year"), col("end_year"), col("kind"));

    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut resolved = 0usize;
    let mut seq = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let year_at = |idx: usize| -> Result<Option<i32>, String> {
            let raw = rec.get(idx).unwrap_or("").trim();
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<i32>().map(Some).map_err(|_| format!("bad year '{raw}'"))
        };
        let (start_year, end_year) = match (year_at(c_start), year_at(c_end)) {
            (Ok(s), Ok(e)) => (s, e),
            (Err(msg), _) | (_, Err(msg)) => {
                issues.push(RowIssue { line, message: msg });
                continue;
            }
        };
        if start_year.is_none() && end_year.is_none() {
            issues.push(RowIssue { line, message: "undated affiliation dropped".into() });
            continue;
        }
        let place_raw = field(&rec, c_place);
        let region = map.resolve(&place_raw).map(str::to_string);
        if region.is_some() {
            resolved += 1;
        }
        records.push(AffiliationRecord {
            person_id: field(&rec, c_person),
            place_raw,
            region,
            start_year,
            end_year,
            kind: field(&rec, c_kind),
            seq,
        });
        seq += 1;
    }
    let resolution_rate =
        if records.is_empty() { 1.0 } else { resolved as f64 / records.len() as f64 };
    Ok(ParseOutcome { records, issues, resolution_rate })
}

/// Ordering key: missing years borrow the record's other endpoint.
fn order_key(r: &AffiliationRecord) -> (i32, i32, usize) {
    let start = r.start_year.or(r.end_year).unwrap();
    let end = r.end_year.or(r.start_year).unwrap();
    (start, end, r.seq)
}

/// Derive migration events from affiliation records.
///
/// Records without a resolved region are excluded from pairing. Within a
/// person, each consecutive pair of region-distinct affiliations yields one
/// event; equal-region pairs yield none. Output is sorted by person, then
/// chronology, and does not depend on the order of the input slice.
pub fn extract_migrations(records: &[AffiliationRecord]) -> Vec<MigrationEvent> {
    let mut by_person: BTreeMap<&str, Vec<&AffiliationRecord>> = BTreeMap::new();
    for r in records {
        if r.region.is_some() && (r.start_year.is_some() || r.end_year.is_some()) {
            by_person.entry(&r.person_id).or_default().push(r);
        }
    }
    let mut events = Vec::new();
    for (person, mut hist) in by_person {
        hist.sort_by_key(|r| order_key(r));
        for pair in hist.windows(2) {
            let (prev, next) = (pair[0], pair[1]);
            let from = prev.region.as_deref().unwrap();
            let to = next.region.as_deref().unwrap();
            if from == to {
                continue;
            }
            // Event year: start of the new affiliation, else end of the old
            // one; last resorts keep the event datable.
            let year = next
                .start_year
                .or(prev.end_year)
                .or(next.end_year)
                .or(prev.start_year)
                .unwrap();
            events.push(MigrationEvent {
                person_id: person.to_string(),
                sender: from.to_string(),
                receiver: to.to_string(),
                year,
            });
        }
    }
    events
}

/// Which endpoints must lie inside the region universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Either endpoint inside the universe keeps the event.
    All,
    /// Both endpoints inside the universe.
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Region,
    Country,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeAggregation {
    PerYear,
    Cumulative,
}

/// Time key of a flow entry. `Cumulative` serializes as `*` and sorts first,
/// matching the lexicographic order of the CSV form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowYear {
    Cumulative,
    Year(i32),
}

impl std::fmt::Display for FlowYear {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowYear::Cumulative => write!(f, "*"),
            FlowYear::Year(y) => write!(f, "{y}"),
        }
    }
}

/// Directed flow counts keyed by (year, sender, receiver).
///
/// Counts are integers straight after building and rationals after
/// normalization; both live in `f64` (integer counts are exact).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    pub scope: Scope,
    pub level: Level,
    pub year_range: (i32, i32),
    /// Sorted node codes (regions or countries).
    pub universe: Vec<String>,
    counts: BTreeMap<(FlowYear, String, String), f64>,
}

impl FlowTable {
    pub fn new(scope: Scope, level: Level, year_range: (i32, i32), universe: Vec<String>) -> Self {
        let mut universe = universe;
        universe.sort();
        universe.dedup();
        FlowTable { scope, level, year_range, universe, counts: BTreeMap::new() }
    }

    pub fn add(&mut self, year: FlowYear, sender: &str, receiver: &str, count: f64) {
        *self
            .counts
            .entry((year, sender.to_string(), receiver.to_string()))
            .or_insert(0.0) += count;
    }

    pub fn set(&mut self, year: FlowYear, sender: &str, receiver: &str, count: f64) {
        self.counts.insert((year, sender.to_string(), receiver.to_string()), count);
    }

    pub fn get(&self, year: FlowYear, sender: &str, receiver: &str) -> f64 {
        self.counts
            .get(&(year, sender.to_string(), receiver.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Entries in canonical (year, sender, receiver) order.
    pub fn entries(&self) -> impl Iterator<Item = (FlowYear, &str, &str, f64)> {
        self.counts.iter().map(|((y, s, r), c)| (*y, s.as_str(), r.as_str(), *c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    /// Years with at least one entry, sorted; cumulative entries excluded.
    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self
            .counts
            .keys()
            .filter_map(|(y, _, _)| match y {
                FlowYear::Year(y) => Some(*y),
                FlowYear::Cumulative => None,
            })
            .collect();
        set.into_iter().collect()
    }
}

/// Count migration events into a per-year flow table.
pub fn build_flow_table(
    events: &[MigrationEvent],
    year_range: (i32, i32),
    universe: &[String],
    scope: Scope,
) -> FlowTable {
    let mut table = FlowTable::new(scope, Level::Region, year_range, universe.to_vec());
    let mut sorted: Vec<&str> = universe.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let in_universe = |r: &str| -> bool { sorted.binary_search(&r).is_ok() };
    for ev in events {
        if ev.year < year_range.0 || ev.year > year_range.1 {
            continue;
        }
        let keep = match scope {
            Scope::All => in_universe(&ev.sender) || in_universe(&ev.receiver),
            Scope::Internal => in_universe(&ev.sender) && in_universe(&ev.receiver),
        };
        if keep {
            table.add(FlowYear::Year(ev.year), &ev.sender, &ev.receiver, 1.0);
        }
    }
    table
}

/// Re-key a flow table by level and time.
///
/// Country aggregation drops within-country flows (they are not migrations at
/// that level) and requires every endpoint region to be known to the map.
pub fn aggregate_flows(
    table: &FlowTable,
    map: &RegionMap,
    level: Level,
    time: TimeAggregation,
) -> Result<FlowTable, IngestError> {
    let universe = match (table.level, level) {
        (_, Level::Region) => table.universe.clone(),
        (Level::Region, Level::Country) => map.countries(),
        (Level::Country, Level::Country) => table.universe.clone(),
    };
    let mut out = FlowTable::new(table.scope, level, table.year_range, universe);
    for (year, sender, receiver, count) in table.entries() {
        let (s, r) = match (table.level, level) {
            (Level::Region, Level::Country) => {
                let sc = map
                    .country(sender)
                    .ok_or_else(|| IngestError::UnknownRegion(sender.to_string()))?;
                let rc = map
                    .country(receiver)
                    .ok_or_else(|| IngestError::UnknownRegion(receiver.to_string()))?;
                if sc == rc {
                    continue;
                }
                (sc.to_string(), rc.to_string())
            }
            _ => (sender.to_string(), receiver.to_string()),
        };
        let key_year = match time {
            TimeAggregation::PerYear => year,
            TimeAggregation::Cumulative => FlowYear::Cumulative,
        };
        out.add(key_year, &s, &r, count);
    }
    Ok(out)
}

/// Denominator scheme for flow normalization.
///
/// Population schemes express flows per 100k inhabitants; researcher schemes
/// divide by the raw headcount. `Both*` divides by the sum of the two
/// endpoint denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScheme {
    SenderPop,
    ReceiverPop,
    BothPop,
    SenderRes,
    ReceiverRes,
    BothRes,
}

/// Scale each per-year entry by the scheme's denominator.
pub fn normalize_flows(
    table: &FlowTable,
    map: &RegionMap,
    scheme: NormalizationScheme,
) -> Result<FlowTable, IngestError> {
    use NormalizationScheme::*;
    let mut out = FlowTable::new(table.scope, table.level, table.year_range, table.universe.clone());
    for (year, sender, receiver, count) in table.entries() {
        let y = match year {
            FlowYear::Year(y) => y,
            FlowYear::Cumulative => return Err(IngestError::CumulativeNormalization),
        };
        let lookup = |region: &str| -> Result<(f64, f64), IngestError> {
            map.denominator(region, y).ok_or_else(|| IngestError::MissingDenominator {
                region: region.to_string(),
                year: y.to_string(),
            })
        };
        let denom = match scheme {
            SenderPop => lookup(sender)?.0 / 100_000.0,
            ReceiverPop => lookup(receiver)?.0 / 100_000.0,
            BothPop => (lookup(sender)?.0 + lookup(receiver)?.0) / 100_000.0,
            SenderRes => lookup(sender)?.1,
            ReceiverRes => lookup(receiver)?.1,
            BothRes => lookup(sender)?.1 + lookup(receiver)?.1,
        };
        if !(denom > 0.0) || !denom.is_finite() {
            let region = match scheme {
                SenderPop | SenderRes => sender,
                ReceiverPop | ReceiverRes => receiver,
                BothPop | BothRes => sender, // either endpoint zeroed the sum
            };
            return Err(IngestError::MissingDenominator {
                region: region.to_string(),
                year: y.to_string(),
            });
        }
        out.set(year, sender, receiver, count / denom);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(
        person: &str,
        region: Option<&str>,
        start: Option<i32>,
        end: Option<i32>,
        seq: usize,
    ) -> AffiliationRecord {
        AffiliationRecord {
            person_id: person.into(),
            place_raw: region.unwrap_or("?").into(),
            region: region.map(String::from),
            start_year: start,
            end_year: end,
            kind: "work".into(),
            seq,
        }
    }

    fn test_map() -> RegionMap {
        let mut m = RegionMap::new();
        m.add_region("ITC4", "IT", 45.5, 9.2);
        m.add_region("DE21", "DE", 48.1, 11.6);
        m.add_region("DE30", "DE", 52.5, 13.4);
        m.add_alias("milnao", "ITC4").unwrap();
        m
    }

    #[test]
    fn resolve_prefers_exact_then_folded_then_alias() {
        let m = test_map();
        assert_eq!(m.resolve("ITC4"), Some("ITC4"));
        assert_eq!(m.resolve("itc4"), Some("ITC4"));
        assert_eq!(m.resolve("Milnao"), Some("ITC4"));
        assert_eq!(m.resolve("  Milnao "), Some("ITC4"));
        assert_eq!(m.resolve("Atlantis"), None);
    }

    #[test]
    fn fold_name_strips_diacritics_and_case() {
        assert_eq!(fold_name("Genève"), "geneve");
        assert_eq!(fold_name("  Région   Lémanique "), "region lemanique");
        assert_eq!(fold_name("Łódź"), "lodz");
    }

    #[test]
    fn consecutive_same_region_gives_no_event() {
        let recs = vec![
            rec("p1", Some("ITC4"), Some(2001), Some(2004), 0),
            rec("p1", Some("ITC4"), Some(2004), None, 1),
        ];
        assert!(extract_migrations(&recs).is_empty());
    }

    #[test]
    fn event_year_falls_back_to_previous_end() {
        // First affiliation only has an end year; second has no start year.
        let recs = vec![
            rec("p1", Some("ITC4"), None, Some(2011), 0),
            rec("p1", Some("DE21"), None, Some(2014), 1),
        ];
        let evs = extract_migrations(&recs);
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].sender, "ITC4");
        assert_eq!(evs[0].receiver, "DE21");
        assert_eq!(evs[0].year, 2011);
    }

    #[test]
    fn unresolved_regions_are_skipped_in_pairing() {
        let recs = vec![
            rec("p1", Some("ITC4"), Some(2001), Some(2003), 0),
            rec("p1", None, Some(2003), Some(2005), 1),
            rec("p1", Some("DE21"), Some(2005), None, 2),
        ];
        let evs = extract_migrations(&recs);
        assert_eq!(evs.len(), 1, "the unresolved middle stop must not break the chain");
        assert_eq!((evs[0].sender.as_str(), evs[0].receiver.as_str()), ("ITC4", "DE21"));
        assert_eq!(evs[0].year, 2005);
    }

    #[test]
    fn extraction_ignores_in_memory_order() {
        let mut recs = vec![
            rec("p1", Some("ITC4"), Some(2001), Some(2003), 0),
            rec("p1", Some("DE21"), Some(2003), Some(2006), 1),
            rec("p1", Some("DE30"), Some(2006), None, 2),
            rec("p2", Some("DE30"), Some(1999), Some(2002), 3),
            rec("p2", Some("ITC4"), Some(2002), None, 4),
        ];
        let baseline = extract_migrations(&recs);
        recs.reverse();
        assert_eq!(extract_migrations(&recs), baseline);
    }

    #[test]
    fn ties_in_years_break_on_input_sequence() {
        let recs = vec![
            rec("p1", Some("ITC4"), Some(2000), Some(2002), 0),
            rec("p1", Some("DE21"), Some(2000), Some(2002), 1),
        ];
        let evs = extract_migrations(&recs);
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].sender, "ITC4");
        assert_eq!(evs[0].receiver, "DE21");
    }

    #[test]
    fn scope_all_keeps_partial_matches_internal_does_not() {
        let events = vec![
            MigrationEvent { person_id: "p1".into(), sender: "ITC4".into(), receiver: "XX99".into(), year: 2005 },
            MigrationEvent { person_id: "p2".into(), sender: "ITC4".into(), receiver: "DE21".into(), year: 2005 },
            MigrationEvent { person_id: "p3".into(), sender: "YY11".into(), receiver: "ZZ22".into(), year: 2005 },
        ];
        let universe = vec!["ITC4".to_string(), "DE21".to_string()];
        let all = build_flow_table(&events, (2000, 2010), &universe, Scope::All);
        assert_eq!(all.total(), 2.0);
        let internal = build_flow_table(&events, (2000, 2010), &universe, Scope::Internal);
        assert_eq!(internal.total(), 1.0);
        assert_eq!(internal.get(FlowYear::Year(2005), "ITC4", "DE21"), 1.0);
    }

    #[test]
    fn year_range_filters_events() {
        let events = vec![
            MigrationEvent { person_id: "p1".into(), sender: "ITC4".into(), receiver: "DE21".into(), year: 1999 },
            MigrationEvent { person_id: "p2".into(), sender: "ITC4".into(), receiver: "DE21".into(), year: 2000 },
        ];
        let universe = vec!["ITC4".to_string(), "DE21".to_string()];
        let t = build_flow_table(&events, (2000, 2010), &universe, Scope::Internal);
        assert_eq!(t.total(), 1.0);
    }

    #[test]
    fn country_aggregation_drops_self_flows() {
        let map = test_map();
        let universe = map.universe();
        let mut t = FlowTable::new(Scope::Internal, Level::Region, (2000, 2010), universe);
        t.add(FlowYear::Year(2005), "DE21", "DE30", 4.0); // within DE
        t.add(FlowYear::Year(2005), "ITC4", "DE21", 3.0);
        let agg = aggregate_flows(&t, &map, Level::Country, TimeAggregation::PerYear).unwrap();
        assert_eq!(agg.total(), 3.0);
        assert_eq!(agg.get(FlowYear::Year(2005), "IT", "DE"), 3.0);
        assert_eq!(agg.universe, vec!["DE".to_string(), "IT".to_string()]);
    }

    #[test]
    fn country_aggregation_names_unknown_region() {
        let map = test_map();
        let mut t = FlowTable::new(
            Scope::All,
            Level::Region,
            (2000, 2010),
            vec!["ITC4".into(), "XX99".into()],
        );
        t.add(FlowYear::Year(2005), "ITC4", "XX99", 1.0);
        let err = aggregate_flows(&t, &map, Level::Country, TimeAggregation::PerYear).unwrap_err();
        assert!(matches!(err, IngestError::UnknownRegion(r) if r == "XX99"));
    }

    #[test]
    fn cumulative_aggregation_sums_years() {
        let map = test_map();
        let mut t = FlowTable::new(Scope::Internal, Level::Region, (2000, 2010), map.universe());
        t.add(FlowYear::Year(2005), "ITC4", "DE21", 2.0);
        t.add(FlowYear::Year(2006), "ITC4", "DE21", 5.0);
        let cum = aggregate_flows(&t, &map, Level::Region, TimeAggregation::Cumulative).unwrap();
        assert_eq!(cum.get(FlowYear::Cumulative, "ITC4", "DE21"), 7.0);
        assert_eq!(cum.len(), 1);
    }

    #[test]
    fn both_pop_normalization_matches_worked_example() {
        let mut map = test_map();
        map.add_denominator("ITC4", 2005, 100_000.0, 50.0);
        map.add_denominator("DE21", 2005, 300_000.0, 70.0);
        let mut t = FlowTable::new(Scope::Internal, Level::Region, (2000, 2010), map.universe());
        t.add(FlowYear::Year(2005), "ITC4", "DE21", 8.0);
        let n = normalize_flows(&t, &map, NormalizationScheme::BothPop).unwrap();
        assert_eq!(n.get(FlowYear::Year(2005), "ITC4", "DE21"), 2.0);
    }

    #[test]
    fn missing_denominator_is_reported_with_region_and_year() {
        let map = test_map();
        let mut t = FlowTable::new(Scope::Internal, Level::Region, (2000, 2010), map.universe());
        t.add(FlowYear::Year(2005), "ITC4", "DE21", 8.0);
        let err = normalize_flows(&t, &map, NormalizationScheme::SenderPop).unwrap_err();
        match err {
            IngestError::MissingDenominator { region, year } => {
                assert_eq!(region, "ITC4");
                assert_eq!(year, "2005");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn normalizing_cumulative_tables_is_refused() {
        let mut map = test_map();
        map.add_denominator("ITC4", 2005, 1.0, 1.0);
        let mut t = FlowTable::new(Scope::Internal, Level::Region, (2000, 2010), map.universe());
        t.add(FlowYear::Cumulative, "ITC4", "DE21", 8.0);
        assert!(matches!(
            normalize_flows(&t, &map, NormalizationScheme::SenderRes),
            Err(IngestError::CumulativeNormalization)
        ));
    }
}
