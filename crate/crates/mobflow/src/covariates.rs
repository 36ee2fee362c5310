//! Regional indicator panels.
//!
//! Four indicator families feed the flow models: a university score built
//! from ranking positions, a procurement indicator (log of summed awarded
//! capital), benchmark-corrected GDP, and an aggregated education index.
//! [`impute_panel`] closes the remaining gaps deterministically so model
//! design matrices never see a hole.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RegionMap;

#[derive(Debug, Error)]
pub enum CovariateError {
    #[error("ranking position must be >= 1, got {0}")]
    InvalidPosition(u32),
    #[error("ranking entries span multiple years ({0} and {1}); score one year at a time")]
    MixedYears(i32, i32),
    #[error("cannot aggregate an empty set of subregion values")]
    EmptyAggregate,
    #[error("no national value for country '{country}' in year {year}")]
    MissingNational { country: String, year: i32 },
    #[error("non-positive national value for country '{country}' in year {year}")]
    NonPositiveNational { country: String, year: i32 },
    #[error("no benchmark value for country '{country}' in year {year}")]
    MissingBenchmark { country: String, year: i32 },
    #[error("region '{0}' has no country assignment")]
    UnknownRegion(String),
    #[error("indicator '{indicator}' has no observation anywhere in country '{country}'")]
    AllMissing { country: String, indicator: String },
}

/// Where a panel cell's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Observed,
    Corrected,
    Imputed,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Observed => write!(f, "observed"),
            Provenance::Corrected => write!(f, "corrected"),
            Provenance::Imputed => write!(f, "imputed"),
        }
    }
}

/// Region x year x indicator panel with explicit axes.
///
/// A cell absent from the map is missing; completeness is judged against the
/// full cross product of the declared axes.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionYearPanel {
    pub regions: Vec<String>,
    pub years: Vec<i32>,
    pub indicators: Vec<String>,
    cells: BTreeMap<(String, i32, String), (f64, Provenance)>,
}

impl RegionYearPanel {
    pub fn new(regions: Vec<String>, years: Vec<i32>, indicators: Vec<String>) -> Self {
        let mut regions = regions;
        let mut years = years;
        let mut indicators = indicators;
        regions.sort();
        regions.dedup();
        years.sort_unstable();
        years.dedup();
        indicators.sort();
        indicators.dedup();
        RegionYearPanel { regions, years, indicators, cells: BTreeMap::new() }
    }

    pub fn set(&mut self, region: &str, year: i32, indicator: &str, value: f64, prov: Provenance) {
        self.cells
            .insert((region.to_string(), year, indicator.to_string()), (value, prov));
    }

    pub fn get(&self, region: &str, year: i32, indicator: &str) -> Option<(f64, Provenance)> {
        self.cells.get(&(region.to_string(), year, indicator.to_string())).copied()
    }

    pub fn value(&self, region: &str, year: i32, indicator: &str) -> Option<f64> {
        self.get(region, year, indicator).map(|(v, _)| v)
    }

    /// Cells in canonical (region, year, indicator) order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, i32, &str, f64, Provenance)> {
        self.cells
            .iter()
            .map(|((r, y, i), (v, p))| (r.as_str(), *y, i.as_str(), *v, *p))
    }

    /// Missing (region, year, indicator) triples in canonical order.
    pub fn missing(&self) -> Vec<(String, i32, String)> {
        let mut out = Vec::new();
        for r in &self.regions {
            for &y in &self.years {
                for i in &self.indicators {
                    if !self.cells.contains_key(&(r.clone(), y, i.clone())) {
                        out.push((r.clone(), y, i.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.regions.len() * self.years.len() * self.indicators.len()
    }
}

/// One ranked university in one year's table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingEntry {
    pub year: i32,
    pub university: String,
    pub position: u32,
    /// Region hosting the university; empty when unmapped.
    pub region: String,
}

/// Numerator of the band weight in units of 1/250.
///
/// Bands: 1-10 -> 1/5, 11-20 -> 1/10, 21-50 -> 1/25, 51-100 -> 1/50,
/// 101-250 -> 1/125, 251-500 -> 1/250, beyond 500 -> 0.
pub fn ranking_weight_num(position: u32) -> Result<u64, CovariateError> {
    match position {
        0 => Err(CovariateError::InvalidPosition(0)),
        1..=10 => Ok(50),
        11..=20 => Ok(25),
        21..=50 => Ok(10),
        51..=100 => Ok(5),
        101..=250 => Ok(2),
        251..=500 => Ok(1),
        _ => Ok(0),
    }
}

/// Band weight for a ranking position.
pub fn ranking_weight(position: u32) -> Result<f64, CovariateError> {
    Ok(ranking_weight_num(position)? as f64 / 250.0)
}

/// Exact band-weight sum for one region's entries, as (numerator, 250).
///
/// All entries must belong to a single ranking year.
pub fn university_weight_sum(
    entries: &[RankingEntry],
    region: &str,
) -> Result<(u64, u64), CovariateError> {
    if let Some(first) = entries.first() {
        for e in entries {
            if e.year != first.year {
                return Err(CovariateError::MixedYears(first.year, e.year));
            }
        }
    }
    let mut num = 0u64;
    for e in entries.iter().filter(|e| e.region == region) {
        num += ranking_weight_num(e.position)?;
    }
    Ok((num, 250))
}

/// Cube root of the region's band-weight sum; 0 when the region hosts no
/// ranked university that year.
pub fn university_score(entries: &[RankingEntry], region: &str) -> Result<f64, CovariateError> {
    let (num, den) = university_weight_sum(entries, region)?;
    Ok((num as f64 / den as f64).cbrt())
}

/// One procurement notice.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcurementNotice {
    pub year: i32,
    pub region: String,
    pub value_euro: f64,
    pub awarded: bool,
}

/// Log of the summed awarded procurement value for a region-year.
///
/// Region-years with no awarded capital are missing, not zero: the
/// downstream imputer decides what to do with them.
pub fn ted_indicator(notices: &[ProcurementNotice], region: &str, year: i32) -> Option<f64> {
    let total: f64 = notices
        .iter()
        .filter(|n| n.awarded && n.region == region && n.year == year)
        .map(|n| n.value_euro)
        .sum();
    if total > 0.0 {
        Some(total.ln())
    } else {
        None
    }
}

/// Rescale a regional GDP table so national aggregates match a benchmark
/// series: every region of country c in year y is multiplied by
/// alpha(c, y) = benchmark(c, y) / national(c, y).
///
/// Returns the corrected cells; provenance is `Corrected`.
pub fn gdp_correction(
    regional: &BTreeMap<(String, i32), f64>,
    national: &BTreeMap<(String, i32), f64>,
    benchmark: &BTreeMap<(String, i32), f64>,
    map: &RegionMap,
) -> Result<BTreeMap<(String, i32), f64>, CovariateError> {
    let mut out = BTreeMap::new();
    for ((region, year), value) in regional {
        let country = map
            .country(region)
            .ok_or_else(|| CovariateError::UnknownRegion(region.clone()))?;
        let nat = *national.get(&(country.to_string(), *year)).ok_or_else(|| {
            CovariateError::MissingNational { country: country.to_string(), year: *year }
        })?;
        if !(nat > 0.0) {
            return Err(CovariateError::NonPositiveNational {
                country: country.to_string(),
                year: *year,
            });
        }
        let bench = *benchmark.get(&(country.to_string(), *year)).ok_or_else(|| {
            CovariateError::MissingBenchmark { country: country.to_string(), year: *year }
        })?;
        out.insert((region.clone(), *year), value * (bench / nat));
    }
    Ok(out)
}

/// Unweighted mean of subregion values.
pub fn edu_aggregate(values: &[f64]) -> Result<f64, CovariateError> {
    if values.is_empty() {
        return Err(CovariateError::EmptyAggregate);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Fill every missing cell of the panel.
///
/// Per (region, indicator) series: linear interpolation between observed
/// years, nearest-observation carry at the boundaries. Series with no
/// observation at all fall back to the year's mean over same-country series
/// (taken after their own fill), which exists whenever any region of the
/// country observed the indicator at least once; otherwise the gap is an
/// error. Observed cells are never altered, and a second run is a no-op.
pub fn impute_panel(
    panel: &RegionYearPanel,
    map: &RegionMap,
) -> Result<RegionYearPanel, CovariateError> {
    let mut out = panel.clone();
    for indicator in &panel.indicators {
        // First pass: fill every series that has at least one observation.
        let mut filled: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut empty_regions: Vec<&str> = Vec::new();
        for region in &panel.regions {
            let series: Vec<Option<f64>> = panel
                .years
                .iter()
                .map(|&y| panel.value(region, y, indicator))
                .collect();
            if series.iter().all(Option::is_none) {
                empty_regions.push(region);
                continue;
            }
            let full = fill_series(&panel.years, &series);
            for (idx, &y) in panel.years.iter().enumerate() {
                if series[idx].is_none() {
                    out.set(region, y, indicator, full[idx], Provenance::Imputed);
                }
            }
            filled.insert(region, full);
        }
        // Second pass: fully missing series borrow the country-year mean.
        for region in empty_regions {
            let country = map
                .country(region)
                .ok_or_else(|| CovariateError::UnknownRegion(region.to_string()))?;
            let peers: Vec<&Vec<f64>> = panel
                .regions
                .iter()
                .filter(|r| r.as_str() != region && map.country(r) == Some(country))
                .filter_map(|r| filled.get(r.as_str()))
                .collect();
            if peers.is_empty() {
                return Err(CovariateError::AllMissing {
                    country: country.to_string(),
                    indicator: indicator.clone(),
                });
            }
            for (idx, &y) in panel.years.iter().enumerate() {
                let mean =
                    peers.iter().map(|s| s[idx]).sum::<f64>() / peers.len() as f64;
                out.set(region, y, indicator, mean, Provenance::Imputed);
            }
        }
    }
    Ok(out)
}

/// Linearly interpolate interior gaps; carry the nearest observation at the
/// edges. `series` must contain at least one value.
fn fill_series(years: &[i32], series: &[Option<f64>]) -> Vec<f64> {
    let obs: Vec<(usize, f64)> =
        series.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
    let mut out = vec![0.0; series.len()];
    let (first_idx, first_val) = obs[0];
    let (last_idx, last_val) = *obs.last().unwrap();
    for i in 0..series.len() {
        out[i] = if let Some(v) = series[i] {
            v
        } else if i < first_idx {
            first_val
        } else if i > last_idx {
            last_val
        } else {
            // Bracketing observations exist on both sides.
            let (li, lv) = *obs.iter().rev().find(|(j, _)| *j < i).unwrap();
            let (ri, rv) = *obs.iter().find(|(j, _)| *j > i).unwrap();
            let t = (years[i] - years[li]) as f64 / (years[ri] - years[li]) as f64;
            lv + t * (rv - lv)
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_weight_bands_and_boundaries() {
        let cases = [
            (1, 50),
            (10, 50),
            (11, 25),
            (20, 25),
            (21, 10),
            (30, 10),
            (50, 10),
            (51, 5),
            (100, 5),
            (101, 2),
            (250, 2),
            (251, 1),
            (500, 1),
            (501, 0),
            (10_000, 0),
        ];
        for (pos, num) in cases {
            assert_eq!(ranking_weight_num(pos).unwrap(), num, "position {pos}");
            assert_eq!(ranking_weight(pos).unwrap(), num as f64 / 250.0);
        }
        assert!(matches!(ranking_weight(0), Err(CovariateError::InvalidPosition(0))));
    }

    fn entry(pos: u32, region: &str) -> RankingEntry {
        RankingEntry { year: 2010, university: format!("U{pos}"), position: pos, region: region.into() }
    }

    #[test]
    fn university_score_sums_band_weights_then_takes_cube_root() {
        let entries = vec![entry(3, "ITC4"), entry(120, "ITC4"), entry(7, "DE21")];
        let score = university_score(&entries, "ITC4").unwrap();
        assert!((score - (0.2f64 + 0.008).cbrt()).abs() < 1e-15);
        assert!((score - 0.5925).abs() < 1e-4);
        let lone = university_score(&entries, "DE21").unwrap();
        assert!((lone - 0.2f64.cbrt()).abs() < 1e-15);
        assert!((lone - 0.5848).abs() < 1e-4);
    }

    #[test]
    fn university_score_without_ranked_hosts_is_zero() {
        assert_eq!(university_score(&[], "ITC4").unwrap(), 0.0);
        let entries = vec![entry(3, "DE21")];
        assert_eq!(university_score(&entries, "ITC4").unwrap(), 0.0);
    }

    #[test]
    fn university_score_rejects_mixed_years() {
        let mut entries = vec![entry(3, "ITC4")];
        entries.push(RankingEntry { year: 2011, ..entry(5, "ITC4") });
        assert!(matches!(
            university_score(&entries, "ITC4"),
            Err(CovariateError::MixedYears(2010, 2011))
        ));
    }

    #[test]
    fn cube_of_score_is_the_exact_rational_sum() {
        let entries =
            vec![entry(2, "ITC4"), entry(15, "ITC4"), entry(260, "ITC4"), entry(990, "ITC4")];
        let (num, den) = university_weight_sum(&entries, "ITC4").unwrap();
        assert_eq!((num, den), (50 + 25 + 1, 250));
        let score = university_score(&entries, "ITC4").unwrap();
        assert!((score.powi(3) - num as f64 / den as f64).abs() < 1e-12);
    }

    fn notice(year: i32, region: &str, value: f64, awarded: bool) -> ProcurementNotice {
        ProcurementNotice { year, region: region.into(), value_euro: value, awarded }
    }

    #[test]
    fn ted_logs_total_awarded_value() {
        let notices = vec![
            notice(2010, "ITC4", 1_200_000.0, true),
            notice(2010, "ITC4", 800_000.0, true),
            notice(2010, "ITC4", 5_000_000.0, false), // not awarded
            notice(2011, "ITC4", 9_000_000.0, true),  // other year
        ];
        let v = ted_indicator(&notices, "ITC4", 2010).unwrap();
        assert!((v - 2_000_000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ted_is_missing_when_nothing_awarded() {
        assert_eq!(ted_indicator(&[], "ITC4", 2010), None);
        let zero = vec![notice(2010, "ITC4", 0.0, true)];
        assert_eq!(ted_indicator(&zero, "ITC4", 2010), None);
    }

    fn test_map() -> RegionMap {
        let mut m = RegionMap::new();
        m.add_region("ITC4", "IT", 45.5, 9.2);
        m.add_region("ITF1", "IT", 42.4, 13.4);
        m.add_region("DE21", "DE", 48.1, 11.6);
        m
    }

    #[test]
    fn gdp_correction_applies_country_year_ratio() {
        let map = test_map();
        let regional: BTreeMap<(String, i32), f64> = [
            (("ITC4".to_string(), 2010), 25_000.0),
            (("ITF1".to_string(), 2010), 18_000.0),
        ]
        .into();
        let national: BTreeMap<(String, i32), f64> = [(("IT".to_string(), 2010), 25_000.0)].into();
        let benchmark: BTreeMap<(String, i32), f64> = [(("IT".to_string(), 2010), 30_000.0)].into();
        let out = gdp_correction(&regional, &national, &benchmark, &map).unwrap();
        assert!((out[&("ITC4".to_string(), 2010)] - 30_000.0).abs() < 1e-9);
        assert!((out[&("ITF1".to_string(), 2010)] - 21_600.0).abs() < 1e-9);
    }

    #[test]
    fn gdp_correction_reports_missing_and_nonpositive_national_values() {
        let map = test_map();
        let regional: BTreeMap<(String, i32), f64> =
            [(("ITC4".to_string(), 2010), 25_000.0)].into();
        let err = gdp_correction(&regional, &BTreeMap::new(), &BTreeMap::new(), &map).unwrap_err();
        assert!(matches!(err, CovariateError::MissingNational { ref country, year: 2010 } if country == "IT"));
        let national: BTreeMap<(String, i32), f64> = [(("IT".to_string(), 2010), 0.0)].into();
        let err = gdp_correction(&regional, &national, &BTreeMap::new(), &map).unwrap_err();
        assert!(matches!(err, CovariateError::NonPositiveNational { ref country, year: 2010 } if country == "IT"));
    }

    #[test]
    fn edu_aggregate_is_the_plain_mean() {
        assert!((edu_aggregate(&[0.8, 0.9]).unwrap() - 0.85).abs() < 1e-15);
        assert!(matches!(edu_aggregate(&[]), Err(CovariateError::EmptyAggregate)));
    }

    fn panel_with(values: &[(&str, i32, Option<f64>)]) -> RegionYearPanel {
        let mut p = RegionYearPanel::new(
            vec!["ITC4".into(), "ITF1".into(), "DE21".into()],
            vec![2000, 2001, 2002],
            vec!["edu".into()],
        );
        for (region, year, v) in values {
            if let Some(v) = v {
                p.set(region, *year, "edu", *v, Provenance::Observed);
            }
        }
        p
    }

    #[test]
    fn interior_gaps_interpolate_linearly() {
        let p = panel_with(&[
            ("ITC4", 2000, Some(2.0)),
            ("ITC4", 2001, None),
            ("ITC4", 2002, Some(4.0)),
            ("ITF1", 2000, Some(1.0)),
            ("DE21", 2000, Some(1.0)),
        ]);
        let map = test_map();
        let out = impute_panel(&p, &map).unwrap();
        let (v, prov) = out.get("ITC4", 2001, "edu").unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        assert_eq!(prov, Provenance::Imputed);
    }

    #[test]
    fn boundaries_carry_the_nearest_observation() {
        let p = panel_with(&[
            ("ITC4", 2001, Some(5.0)),
            ("ITF1", 2000, Some(1.0)),
            ("DE21", 2000, Some(1.0)),
        ]);
        let out = impute_panel(&p, &test_map()).unwrap();
        assert_eq!(out.value("ITC4", 2000, "edu").unwrap(), 5.0);
        assert_eq!(out.value("ITC4", 2002, "edu").unwrap(), 5.0);
    }

    #[test]
    fn fully_missing_series_takes_country_year_means() {
        let p = panel_with(&[
            ("ITC4", 2000, Some(2.0)),
            ("ITC4", 2002, Some(4.0)),
            ("DE21", 2000, Some(9.0)),
        ]);
        // ITF1 has nothing; its values come from IT peers (just ITC4 here).
        let out = impute_panel(&p, &test_map()).unwrap();
        assert_eq!(out.value("ITF1", 2000, "edu").unwrap(), 2.0);
        assert_eq!(out.value("ITF1", 2001, "edu").unwrap(), 3.0);
        assert_eq!(out.value("ITF1", 2002, "edu").unwrap(), 4.0);
        assert!(out.is_complete());
    }

    #[test]
    fn country_without_any_observation_is_an_error() {
        let mut p = RegionYearPanel::new(
            vec!["ITC4".into(), "DE21".into()],
            vec![2000, 2001],
            vec!["edu".into()],
        );
        p.set("ITC4", 2000, "edu", 1.0, Provenance::Observed);
        let err = impute_panel(&p, &test_map()).unwrap_err();
        assert!(matches!(
            err,
            CovariateError::AllMissing { ref country, ref indicator }
                if country == "DE" && indicator == "edu"
        ));
    }

    #[test]
    fn imputation_is_idempotent_and_preserves_observations() {
        let p = panel_with(&[
            ("ITC4", 2000, Some(2.0)),
            ("ITC4", 2002, Some(4.0)),
            ("ITF1", 2001, Some(7.0)),
            ("DE21", 2000, Some(1.0)),
        ]);
        let once = impute_panel(&p, &test_map()).unwrap();
        let twice = impute_panel(&once, &test_map()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.get("ITC4", 2000, "edu").unwrap(), (2.0, Provenance::Observed));
        assert_eq!(once.get("ITF1", 2001, "edu").unwrap(), (7.0, Provenance::Observed));
    }
}
