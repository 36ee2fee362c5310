//! Dyadic flow models and region-year mobility models.
//!
//! The dyad frame pairs every ordered region pair with every year, joining
//! flow counts, regional indicators for both roles, great-circle distance,
//! and shared-country and shared-language-family flags. The mobility frame
//! aggregates each region-year's in- and outflow. Model variants assemble
//! term lists for the penalized additive engine.

use std::collections::BTreeMap;

use crate::covariates::RegionYearPanel;
use crate::ingest::{FlowTable, FlowYear, Level, RegionMap, Scope};

use super::families::LanguageFamilies;
use super::geo::haversine_km;
use super::pgam::{fit_pgam, FitOptions, GamFit, GamSpec, Lambda, TermSpec};
use super::ModelError;

/// Canonical indicator keys, in the column order used by frame rows.
pub const INDICATOR_KEYS: [&str; 4] = ["gdp_pc", "edu_index", "uni_score", "ted"];

const EDU: usize = 1;
const UNI: usize = 2;
const TED: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkVariant {
    /// All four indicators for both roles with year-wise smooths, distance,
    /// shared country, shared language family.
    Full,
    /// Time-invariant university and procurement smooths for both roles,
    /// distance, shared country.
    Final,
    /// Smooths of the sender-plus-receiver indicator sums; the flow law does
    /// not distinguish roles.
    Symmetric,
    /// The symmetric terms plus separate role smooths. The role smooths are
    /// constrained to drop their linear directions, which the sum smooths
    /// already span.
    AsymmetricExtended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityVariant {
    /// All four indicators with year-wise smooths.
    Full,
    /// Time-invariant smooths of university, procurement, and education.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityResponse {
    /// log(inflow + outflow + 1)
    Total,
    /// log(inflow + 1)
    In,
    /// log(outflow + 1)
    Out,
}

#[derive(Debug, Clone)]
pub struct DyadRow {
    pub year: i32,
    pub sender: String,
    pub receiver: String,
    pub flow: f64,
    /// log(flow + 1)
    pub log_flow: f64,
    pub log_distance: f64,
    pub same_country: bool,
    pub same_language: bool,
    /// Indicator values in `INDICATOR_KEYS` order.
    pub sender_vals: [f64; 4],
    pub receiver_vals: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct DyadFrame {
    pub rows: Vec<DyadRow>,
    pub years: Vec<i32>,
    pub regions: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MobilityRow {
    pub region: String,
    pub country: String,
    pub year: i32,
    pub inflow: f64,
    pub outflow: f64,
    /// Indicator values in `INDICATOR_KEYS` order.
    pub vals: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct MobilityFrame {
    pub rows: Vec<MobilityRow>,
    pub years: Vec<i32>,
    pub regions: Vec<String>,
}

fn check_flow_table(flows: &FlowTable) -> Result<Vec<i32>, ModelError> {
    if flows.level != Level::Region {
        return Err(ModelError::BadFlowTable(
            "models need region-level flows".to_string(),
        ));
    }
    if flows.scope != Scope::Internal {
        return Err(ModelError::BadFlowTable(
            "models need internal-scope flows".to_string(),
        ));
    }
    let (lo, hi) = flows.year_range;
    let years: Vec<i32> = (lo..=hi).collect();
    if years.len() < 2 {
        return Err(ModelError::TooFewYears(years.len()));
    }
    Ok(years)
}

fn indicator_values(
    panel: &RegionYearPanel,
    region: &str,
    year: i32,
) -> Result<[f64; 4], ModelError> {
    let mut out = [0.0; 4];
    for (k, key) in INDICATOR_KEYS.iter().enumerate() {
        let v = panel
            .value(region, year, key)
            .ok_or_else(|| ModelError::MissingCovariate {
                region: region.to_string(),
                year,
                indicator: key.to_string(),
            })?;
        if !v.is_finite() {
            return Err(ModelError::NonFinite(format!("{key} for {region} in {year}")));
        }
        out[k] = v;
    }
    Ok(out)
}

/// Joins flows, indicators, distances, and pair flags into one row per
/// ordered region pair and year. Zero flows are kept; self-pairs are not.
pub fn build_dyad_frame(
    flows: &FlowTable,
    panel: &RegionYearPanel,
    map: &RegionMap,
    families: &LanguageFamilies,
) -> Result<DyadFrame, ModelError> {
    let years = check_flow_table(flows)?;
    let regions = flows.universe.clone();

    let mut coords = BTreeMap::new();
    let mut countries = BTreeMap::new();
    for r in &regions {
        let info = map
            .coords(r)
            .ok_or_else(|| ModelError::MissingCoordinates(r.clone()))?;
        let country = map
            .country(r)
            .ok_or_else(|| ModelError::MissingCoordinates(r.clone()))?;
        coords.insert(r.clone(), info);
        countries.insert(r.clone(), country.to_string());
    }

    let mut log_dist = BTreeMap::new();
    for (i, a) in regions.iter().enumerate() {
        for b in regions.iter().skip(i + 1) {
            let ca = coords[a];
            let cb = coords[b];
            let d = haversine_km(ca.lat, ca.lon, cb.lat, cb.lon)?;
            if d <= 0.0 {
                return Err(ModelError::DegenerateDistance {
                    a: a.clone(),
                    b: b.clone(),
                });
            }
            log_dist.insert((a.clone(), b.clone()), d.ln());
        }
    }

    let mut indicator_cache = BTreeMap::new();
    for r in &regions {
        for &y in &years {
            indicator_cache.insert((r.clone(), y), indicator_values(panel, r, y)?);
        }
    }

    let mut rows = Vec::with_capacity(years.len() * regions.len() * (regions.len() - 1));
    for &year in &years {
        for sender in &regions {
            for receiver in &regions {
                if sender == receiver {
                    continue;
                }
                let key = if sender < receiver {
                    (sender.clone(), receiver.clone())
                } else {
                    (receiver.clone(), sender.clone())
                };
                let flow = flows.get(FlowYear::Year(year), sender, receiver);
                rows.push(DyadRow {
                    year,
                    sender: sender.clone(),
                    receiver: receiver.clone(),
                    flow,
                    log_flow: (flow + 1.0).ln(),
                    log_distance: log_dist[&key],
                    same_country: countries[sender] == countries[receiver],
                    same_language: families.same_family(
                        sender,
                        &countries[sender],
                        receiver,
                        &countries[receiver],
                    ),
                    sender_vals: indicator_cache[&(sender.clone(), year)],
                    receiver_vals: indicator_cache[&(receiver.clone(), year)],
                });
            }
        }
    }
    Ok(DyadFrame {
        rows,
        years,
        regions,
    })
}

/// Response vector of the dyadic models: log(flow + 1) per frame row.
pub fn network_response(frame: &DyadFrame) -> Vec<f64> {
    frame.rows.iter().map(|r| r.log_flow).collect()
}

fn flag_column(frame: &DyadFrame, f: impl Fn(&DyadRow) -> bool) -> Vec<f64> {
    frame
        .rows
        .iter()
        .map(|r| if f(r) { 1.0 } else { 0.0 })
        .collect()
}

fn smooth(name: &str, values: Vec<f64>, n_knots: usize) -> TermSpec {
    TermSpec::Smooth {
        name: name.to_string(),
        values,
        n_knots,
        mask: None,
        drop_linear: false,
        lambda: Lambda::Gcv,
    }
}

/// Term list for a dyadic model variant.
pub fn network_model_spec(
    frame: &DyadFrame,
    variant: NetworkVariant,
    n_knots: usize,
) -> Result<GamSpec, ModelError> {
    if frame.years.len() < 2 {
        return Err(ModelError::TooFewYears(frame.years.len()));
    }
    let year_labels: Vec<String> = frame.rows.iter().map(|r| r.year.to_string()).collect();
    let sender = |k: usize| -> Vec<f64> { frame.rows.iter().map(|r| r.sender_vals[k]).collect() };
    let receiver =
        |k: usize| -> Vec<f64> { frame.rows.iter().map(|r| r.receiver_vals[k]).collect() };
    let sum = |k: usize| -> Vec<f64> {
        frame
            .rows
            .iter()
            .map(|r| r.sender_vals[k] + r.receiver_vals[k])
            .collect()
    };
    let log_dist: Vec<f64> = frame.rows.iter().map(|r| r.log_distance).collect();

    let mut terms = vec![
        TermSpec::Intercept,
        TermSpec::Factor {
            name: "year".to_string(),
            levels: year_labels.clone(),
        },
        TermSpec::Linear {
            name: "same_country".to_string(),
            values: flag_column(frame, |r| r.same_country),
        },
    ];
    match variant {
        NetworkVariant::Full => {
            terms.push(TermSpec::Linear {
                name: "same_lan".to_string(),
                values: flag_column(frame, |r| r.same_language),
            });
            terms.push(smooth("s(log_dist)", log_dist, n_knots));
            for (k, key) in INDICATOR_KEYS.iter().enumerate() {
                terms.push(TermSpec::YearwiseSmooth {
                    name: format!("s({key}_sender)"),
                    values: sender(k),
                    groups: year_labels.clone(),
                    n_knots,
                    lambda: Lambda::Gcv,
                });
                terms.push(TermSpec::YearwiseSmooth {
                    name: format!("s({key}_receiver)"),
                    values: receiver(k),
                    groups: year_labels.clone(),
                    n_knots,
                    lambda: Lambda::Gcv,
                });
            }
        }
        NetworkVariant::Final => {
            terms.push(smooth("s(log_dist)", log_dist, n_knots));
            for k in [UNI, TED] {
                let key = INDICATOR_KEYS[k];
                terms.push(smooth(&format!("s({key}_sender)"), sender(k), n_knots));
                terms.push(smooth(&format!("s({key}_receiver)"), receiver(k), n_knots));
            }
        }
        NetworkVariant::Symmetric | NetworkVariant::AsymmetricExtended => {
            terms.push(smooth("s(log_dist)", log_dist, n_knots));
            for k in [UNI, TED] {
                let key = INDICATOR_KEYS[k];
                terms.push(smooth(&format!("s({key}_sum)"), sum(k), n_knots));
            }
            if variant == NetworkVariant::AsymmetricExtended {
                for k in [UNI, TED] {
                    let key = INDICATOR_KEYS[k];
                    for (role, values) in [("sender", sender(k)), ("receiver", receiver(k))] {
                        terms.push(TermSpec::Smooth {
                            name: format!("s({key}_{role})"),
                            values,
                            n_knots,
                            mask: None,
                            // The sum smooth already spans the linear
                            // directions of both roles; keeping them here
                            // would make the design singular.
                            drop_linear: true,
                            lambda: Lambda::Gcv,
                        });
                    }
                }
            }
        }
    }
    Ok(GamSpec { terms })
}

/// Fits a dyadic model variant to log-transformed flows.
pub fn fit_network_model(
    frame: &DyadFrame,
    variant: NetworkVariant,
    n_knots: usize,
    opts: &FitOptions,
) -> Result<GamFit, ModelError> {
    let spec = network_model_spec(frame, variant, n_knots)?;
    fit_pgam(&spec, &network_response(frame), opts)
}

/// Aggregates each region-year's total in- and outflow with its indicators.
pub fn build_mobility_frame(
    flows: &FlowTable,
    panel: &RegionYearPanel,
    map: &RegionMap,
) -> Result<MobilityFrame, ModelError> {
    let years = check_flow_table(flows)?;
    let regions = flows.universe.clone();
    let mut inflow: BTreeMap<(String, i32), f64> = BTreeMap::new();
    let mut outflow: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for (year, sender, receiver, count) in flows.entries() {
        if let FlowYear::Year(y) = year {
            *outflow.entry((sender.to_string(), y)).or_insert(0.0) += count;
            *inflow.entry((receiver.to_string(), y)).or_insert(0.0) += count;
        }
    }
    let mut rows = Vec::with_capacity(regions.len() * years.len());
    for region in &regions {
        let country = map
            .country(region)
            .ok_or_else(|| ModelError::MissingCoordinates(region.clone()))?
            .to_string();
        for &year in &years {
            rows.push(MobilityRow {
                region: region.clone(),
                country: country.clone(),
                year,
                inflow: inflow.get(&(region.clone(), year)).copied().unwrap_or(0.0),
                outflow: outflow.get(&(region.clone(), year)).copied().unwrap_or(0.0),
                vals: indicator_values(panel, region, year)?,
            });
        }
    }
    Ok(MobilityFrame {
        rows,
        years,
        regions,
    })
}

/// Response vector of a mobility model.
pub fn mobility_response(frame: &MobilityFrame, response: MobilityResponse) -> Vec<f64> {
    frame
        .rows
        .iter()
        .map(|r| match response {
            MobilityResponse::Total => (r.inflow + r.outflow + 1.0).ln(),
            MobilityResponse::In => (r.inflow + 1.0).ln(),
            MobilityResponse::Out => (r.outflow + 1.0).ln(),
        })
        .collect()
}

/// Term list for a mobility model variant: indicator smooths plus year and
/// country random intercepts.
pub fn mobility_model_spec(
    frame: &MobilityFrame,
    variant: MobilityVariant,
    n_knots: usize,
) -> Result<GamSpec, ModelError> {
    if frame.years.len() < 2 {
        return Err(ModelError::TooFewYears(frame.years.len()));
    }
    let year_labels: Vec<String> = frame.rows.iter().map(|r| r.year.to_string()).collect();
    let country_labels: Vec<String> = frame.rows.iter().map(|r| r.country.clone()).collect();
    let col = |k: usize| -> Vec<f64> { frame.rows.iter().map(|r| r.vals[k]).collect() };

    let mut terms = vec![
        TermSpec::Intercept,
        TermSpec::RandomIntercept {
            name: "year".to_string(),
            levels: year_labels.clone(),
            lambda: Lambda::Gcv,
        },
        TermSpec::RandomIntercept {
            name: "country".to_string(),
            levels: country_labels,
            lambda: Lambda::Gcv,
        },
    ];
    match variant {
        MobilityVariant::Full => {
            for (k, key) in INDICATOR_KEYS.iter().enumerate() {
                terms.push(TermSpec::YearwiseSmooth {
                    name: format!("s({key})"),
                    values: col(k),
                    groups: year_labels.clone(),
                    n_knots,
                    lambda: Lambda::Gcv,
                });
            }
        }
        MobilityVariant::Final => {
            for k in [UNI, TED, EDU] {
                let key = INDICATOR_KEYS[k];
                terms.push(smooth_mob(&format!("s({key})"), col(k), n_knots));
            }
        }
    }
    Ok(GamSpec { terms })
}

fn smooth_mob(name: &str, values: Vec<f64>, n_knots: usize) -> TermSpec {
    TermSpec::Smooth {
        name: name.to_string(),
        values,
        n_knots,
        mask: None,
        drop_linear: false,
        lambda: Lambda::Gcv,
    }
}

/// Fits a mobility model variant.
pub fn fit_mobility_model(
    frame: &MobilityFrame,
    response: MobilityResponse,
    variant: MobilityVariant,
    n_knots: usize,
    opts: &FitOptions,
) -> Result<GamFit, ModelError> {
    let spec = mobility_model_spec(frame, variant, n_knots)?;
    fit_pgam(&spec, &mobility_response(frame, response), opts)
}
