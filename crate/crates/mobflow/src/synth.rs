//! Synthetic affiliation corpora drawn from a known gravity law.
//!
//! The generator builds a deterministic region geography and raw covariate
//! tables, derives the indicator panel from those tables through the same
//! functions the real pipeline uses, draws flows around a gravity law over
//! the derived indicators, and realizes every flow as a two-affiliation
//! person history. Because the covariates are derived, not invented, a
//! pipeline run over the written bundle reproduces the generator's panel
//! exactly, and the recovered flow table equals the planted one.
//!
//! With the asymmetry switch off the law is invariant under swapping sender
//! and receiver. The switch adds a curved sender-only term (quadratic in the
//! sender's university score) rather than a linear one: role smooths in the
//! dyadic model are centered and de-trended for identifiability, so only a
//! curved role effect is detectable by design.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariates::{
    gdp_correction, impute_panel, ted_indicator, university_score, CovariateError,
    ProcurementNotice, Provenance, RankingEntry, RegionYearPanel,
};
use crate::ingest::{FlowTable, FlowYear, Level, RegionMap, Scope};
use crate::io::{
    self, AffiliationRow, AliasRow, DenominatorRow, IoError, RegionMetadataRow,
};
use crate::model::haversine_km;
use crate::rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 5 regions, got {0}")]
    TooFewRegions(usize),
    #[error("the region grid supports at most 320 regions, got {0}")]
    TooManyRegions(usize),
    #[error("need at least 2 years, got {0}")]
    TooFewYears(usize),
    #[error(transparent)]
    Covariate(#[from] CovariateError),
}

/// Coefficients of the flow-generating law, all on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityLaw {
    /// Log of the baseline dyad-year mean.
    pub base: f64,
    /// Additive drift per year away from the middle year.
    pub year_drift: f64,
    /// Bonus when sender and receiver share a country.
    pub same_country: f64,
    /// Decay per unit of centered log distance (applied with a minus sign).
    pub distance: f64,
    /// Slope on the centered sum of the two university scores.
    pub uni_sum: f64,
    /// Slope on the centered sum of the two procurement indicators.
    pub ted_sum: f64,
    /// Curvature of the sender-only term used when asymmetry is on.
    pub asymmetry: f64,
}

impl Default for GravityLaw {
    fn default() -> Self {
        GravityLaw {
            base: 0.8,
            year_drift: 0.02,
            same_country: 0.6,
            distance: 0.7,
            uni_sum: 1.2,
            ted_sum: 0.8,
            asymmetry: 3.0,
        }
    }
}

/// Flow sampling law around the planted mean surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowNoise {
    /// Integer counts drawn from a Poisson law at the planted mean. The
    /// variance of the log response then depends on the mean, so the log
    /// response is only approximately additive in the planted terms.
    #[default]
    Poisson,
    /// Continuous flows `exp(log-mean + sigma * z)` with standard normal
    /// `z`. The log response is exactly additive with constant variance,
    /// which makes this the right mode for calibration studies.
    LogNormal { sigma: f64 },
}

/// Generator settings. `n_countries` below 2 selects an automatic count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_regions: usize,
    #[serde(default)]
    pub n_countries: usize,
    pub year_range: (i32, i32),
    pub seed: u64,
    #[serde(default)]
    pub asymmetric: bool,
    #[serde(default)]
    pub law: GravityLaw,
    #[serde(default)]
    pub noise: FlowNoise,
}

impl SynthConfig {
    pub fn new(n_regions: usize, year_range: (i32, i32), seed: u64) -> Self {
        SynthConfig {
            n_regions,
            n_countries: 0,
            year_range,
            seed,
            asymmetric: false,
            law: GravityLaw::default(),
            noise: FlowNoise::Poisson,
        }
    }
}

/// The generator's own record of what it planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub asymmetric: bool,
    pub law: GravityLaw,
    #[serde(default)]
    pub noise: FlowNoise,
    pub n_regions: usize,
    pub years: Vec<i32>,
    /// Sum of the planted means; under Poisson noise the drawn total lies
    /// within a few square roots of it.
    pub expected_total_flow: f64,
    pub drawn_total_flow: f64,
    pub mean_log_distance: f64,
    pub mean_uni: f64,
    pub mean_ted: f64,
    /// True partial-effect curves sampled over their observed domains,
    /// keyed by the covariate they act on.
    pub curves: BTreeMap<String, Vec<(f64, f64)>>,
}

/// A complete in-memory dataset bundle.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub map: RegionMap,
    pub region_rows: Vec<RegionMetadataRow>,
    pub alias_rows: Vec<AliasRow>,
    pub denominator_rows: Vec<DenominatorRow>,
    pub rankings: Vec<RankingEntry>,
    pub procurements: Vec<ProcurementNotice>,
    pub gdp_regional: BTreeMap<(String, i32), f64>,
    pub gdp_national: BTreeMap<(String, i32), f64>,
    pub gdp_benchmark: BTreeMap<(String, i32), f64>,
    pub edu_attainment: BTreeMap<(String, i32), f64>,
    /// Indicator panel derived from the raw tables above.
    pub panel: RegionYearPanel,
    /// Drawn flow counts, region level, internal scope.
    pub flows: FlowTable,
    /// Poisson means in (year, sender, receiver) iteration order over the
    /// sorted region list, self-pairs skipped.
    expected: Vec<f64>,
    pub ground_truth: GroundTruth,
}

/// Paths of a written bundle, all inside the chosen directory.
#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub regions: PathBuf,
    pub aliases: PathBuf,
    pub denominators: PathBuf,
    pub affiliations: PathBuf,
    pub rankings: PathBuf,
    pub procurements: PathBuf,
    pub gdp_regional: PathBuf,
    pub gdp_national: PathBuf,
    pub gdp_benchmark: PathBuf,
    pub edu_attainment: PathBuf,
    pub flows_true: PathBuf,
    pub panel_true: PathBuf,
    pub ground_truth: PathBuf,
}

/// Country codes regions are drawn from; the mix spans several language
/// families so the same-language flag varies.
const COUNTRY_POOL: [&str; 16] = [
    "DE", "FR", "IT", "ES", "PL", "AT", "NL", "SE", "PT", "CZ", "DK", "FI", "HU", "RO", "GR",
    "SK",
];

/// Representative ranking positions, one per weight band.
const BAND_POSITIONS: [(u64, u32); 6] = [(50, 7), (25, 15), (10, 30), (5, 77), (2, 150), (1, 300)];

const INDICATORS: [&str; 4] = ["gdp_pc", "edu_index", "uni_score", "ted"];

/// Appends ranking entries for one region-year whose band weights sum to
/// `num` over the common denominator.
fn rankings_for(region: &str, year: i32, mut num: u64, out: &mut Vec<RankingEntry>) {
    let mut idx = 0usize;
    for (weight, position) in BAND_POSITIONS {
        while num >= weight {
            num -= weight;
            idx += 1;
            out.push(RankingEntry {
                year,
                university: format!("U {region} {idx}"),
                position,
                region: region.to_string(),
            });
        }
    }
}

fn base_weight_num(ri: usize) -> u64 {
    const BASES: [u64; 10] = [3, 8, 1, 20, 45, 12, 70, 30, 5, 100];
    BASES[ri % 10] + 2 * (ri / 10) as u64
}

/// Generate a dataset. Affiliation rows are materialized separately by
/// [`SynthDataset::affiliation_rows`] since model-level replicates only need
/// the flow table and the panel.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    let n = config.n_regions;
    if n < 5 {
        return Err(SynthError::TooFewRegions(n));
    }
    if n > 320 {
        return Err(SynthError::TooManyRegions(n));
    }
    let (y0, y1) = config.year_range;
    let n_years = if y1 >= y0 { (y1 - y0 + 1) as usize } else { 0 };
    if n_years < 2 {
        return Err(SynthError::TooFewYears(n_years));
    }
    let years: Vec<i32> = (y0..=y1).collect();

    // Country layout: contiguous blocks of regions, at least two regions per
    // country so the same-country flag varies, at most twenty so the
    // coordinate grid below stays collision-free.
    let auto = (n / 5).clamp(2, 16);
    let requested = if config.n_countries < 2 { auto } else { config.n_countries.min(16) };
    let n_countries = requested.min(n / 2).max(n.div_ceil(20));
    let rpc = n.div_ceil(n_countries);

    let mut region_rows = Vec::with_capacity(n);
    for ri in 0..n {
        let ci = ri / rpc;
        let k = ri % rpc;
        let country = COUNTRY_POOL[ci % COUNTRY_POOL.len()];
        region_rows.push(RegionMetadataRow {
            region: format!("{country}{}", 10 + k),
            country: country.to_string(),
            lat: 40.0 + 3.0 * (ci % 4) as f64 + 0.6 * (k % 4) as f64,
            lon: 2.0 + 5.0 * (ci / 4) as f64 + 0.8 * (k / 4) as f64,
        });
    }
    region_rows.sort_by(|a, b| a.region.cmp(&b.region));

    let mut map = RegionMap::new();
    let mut alias_rows = Vec::with_capacity(2 * n);
    for row in &region_rows {
        map.add_region(&row.region, &row.country, row.lat, row.lon);
    }
    for row in &region_rows {
        for raw in [
            format!("University of {}", row.region),
            format!("Institute {}", row.region),
        ] {
            map.add_alias(&raw, &row.region).expect("alias targets a known region");
            alias_rows.push(AliasRow { raw_name: raw, region: row.region.clone() });
        }
    }
    let regions = map.universe();

    // Raw covariate tables, all deterministic in the region index.
    let mut denominator_rows = Vec::new();
    let mut rankings = Vec::new();
    let mut procurements = Vec::new();
    let mut gdp_regional = BTreeMap::new();
    let mut gdp_national = BTreeMap::new();
    let mut gdp_benchmark = BTreeMap::new();
    let mut edu_attainment = BTreeMap::new();
    for (ri, region) in regions.iter().enumerate() {
        procurements.push(ProcurementNotice {
            year: y0,
            region: region.clone(),
            value_euro: 999.0,
            awarded: false,
        });
        for (ti, &year) in years.iter().enumerate() {
            let population = 400_000.0 + 35_000.0 * ((ri * 9) % 17) as f64 + 2_000.0 * ti as f64;
            let researchers = 1_500.0 + 120.0 * ((ri * 4) % 13) as f64 + 10.0 * ti as f64;
            denominator_rows.push(DenominatorRow {
                region: region.clone(),
                year,
                population,
                researchers,
            });

            let grows = ri % 3 == 0;
            let num = base_weight_num(ri) + if grows { ti as u64 } else { 0 };
            rankings_for(region, year, num, &mut rankings);

            procurements.push(ProcurementNotice {
                year,
                region: region.clone(),
                value_euro: 600.0 + 600.0 * ri as f64 + 30.0 * ti as f64,
                awarded: true,
            });
            procurements.push(ProcurementNotice {
                year,
                region: region.clone(),
                value_euro: 400.0 + 400.0 * ri as f64 + 20.0 * ti as f64,
                awarded: true,
            });

            gdp_regional.insert(
                (region.clone(), year),
                18_000.0 + 1_200.0 * ((ri * 5) % 13) as f64 + 250.0 * ti as f64,
            );
            if (ri + ti) % 7 != 3 {
                edu_attainment
                    .insert((region.clone(), year), 0.2 + 0.05 * ((ri * 3 + ti) % 11) as f64);
            }
        }
    }
    for (ci, country) in map.countries().iter().enumerate() {
        let alpha = 1.0 + 0.04 * ((ci % 3) as f64 - 1.0);
        for (ti, &year) in years.iter().enumerate() {
            let national = 100_000.0 + 5_000.0 * ci as f64 + 1_000.0 * ti as f64;
            gdp_national.insert((country.clone(), year), national);
            gdp_benchmark.insert((country.clone(), year), national * alpha);
        }
    }

    // Derive the indicator panel from the raw tables exactly as the real
    // pipeline does, so planted and pipeline-derived covariates coincide.
    let mut panel = RegionYearPanel::new(
        regions.clone(),
        years.clone(),
        INDICATORS.iter().map(|s| s.to_string()).collect(),
    );
    let corrected = gdp_correction(&gdp_regional, &gdp_national, &gdp_benchmark, &map)?;
    for ((region, year), value) in &corrected {
        panel.set(region, *year, "gdp_pc", *value, Provenance::Corrected);
    }
    for &year in &years {
        let year_entries: Vec<RankingEntry> =
            rankings.iter().filter(|e| e.year == year).cloned().collect();
        for region in &regions {
            let score = university_score(&year_entries, region)?;
            panel.set(region, year, "uni_score", score, Provenance::Observed);
            if let Some(ted) = ted_indicator(&procurements, region, year) {
                panel.set(region, year, "ted", ted, Provenance::Observed);
            }
        }
    }
    for ((region, year), value) in &edu_attainment {
        panel.set(region, *year, "edu_index", *value, Provenance::Observed);
    }
    let panel = impute_panel(&panel, &map)?;

    // Center the law's covariates so the flow scale tracks `base` whatever
    // the configured sizes.
    let cells = (n * n_years) as f64;
    let mean_of = |key: &str| -> f64 {
        regions
            .iter()
            .flat_map(|r| years.iter().map(|&y| panel.value(r, y, key).expect("panel is complete")))
            .sum::<f64>()
            / cells
    };
    let mean_uni = mean_of("uni_score");
    let mean_ted = mean_of("ted");

    let mut log_dist = BTreeMap::new();
    let mut ld_sum = 0.0;
    let mut ld_min = f64::INFINITY;
    let mut ld_max = f64::NEG_INFINITY;
    for (i, a) in regions.iter().enumerate() {
        for b in regions.iter().skip(i + 1) {
            let ca = map.coords(a).expect("region has coordinates");
            let cb = map.coords(b).expect("region has coordinates");
            let d = haversine_km(ca.lat, ca.lon, cb.lat, cb.lon)
                .expect("generated coordinates are valid");
            let ld = d.ln();
            log_dist.insert((a.clone(), b.clone()), ld);
            ld_sum += ld;
            ld_min = ld_min.min(ld);
            ld_max = ld_max.max(ld);
        }
    }
    let n_pairs = (n * (n - 1) / 2) as f64;
    let mean_log_distance = ld_sum / n_pairs;

    let t_mid = (y0 as f64 + y1 as f64) / 2.0;
    let law = config.law;
    let log_mu = |year: i32, sender: &str, receiver: &str| -> f64 {
        let key = if sender < receiver {
            (sender.to_string(), receiver.to_string())
        } else {
            (receiver.to_string(), sender.to_string())
        };
        let u_s = panel.value(sender, year, "uni_score").expect("panel is complete");
        let u_r = panel.value(receiver, year, "uni_score").expect("panel is complete");
        let t_s = panel.value(sender, year, "ted").expect("panel is complete");
        let t_r = panel.value(receiver, year, "ted").expect("panel is complete");
        let same = map.country(sender) == map.country(receiver);
        let mut lm = law.base
            + law.year_drift * (year as f64 - t_mid)
            + if same { law.same_country } else { 0.0 }
            - law.distance * (log_dist[&key] - mean_log_distance)
            + law.uni_sum * ((u_s - mean_uni) + (u_r - mean_uni))
            + law.ted_sum * ((t_s - mean_ted) + (t_r - mean_ted));
        if config.asymmetric {
            lm += law.asymmetry * (u_s - mean_uni) * (u_s - mean_uni);
        }
        lm
    };

    let mut flows =
        FlowTable::new(Scope::Internal, Level::Region, config.year_range, regions.clone());
    let mut expected = Vec::with_capacity(n_years * n * (n - 1));
    let mut expected_total = 0.0;
    let mut drawn_total = 0.0;
    let mut draws = rng::stream(config.seed, 0);
    for &year in &years {
        for sender in &regions {
            for receiver in &regions {
                if sender == receiver {
                    continue;
                }
                let mu = log_mu(year, sender, receiver).exp();
                expected.push(mu);
                expected_total += mu;
                let count = match config.noise {
                    FlowNoise::Poisson => {
                        Poisson::new(mu).expect("mean is positive").sample(&mut draws)
                    }
                    FlowNoise::LogNormal { sigma } => {
                        let z: f64 = StandardNormal.sample(&mut draws);
                        (mu.ln() + sigma * z).exp()
                    }
                };
                if count > 0.0 {
                    drawn_total += count;
                    flows.set(FlowYear::Year(year), sender, receiver, count);
                }
            }
        }
    }

    let mut curves = BTreeMap::new();
    let sample = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
        (0..=40)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / 40.0;
                (x, f(x))
            })
            .collect()
    };
    curves.insert(
        "log_distance".to_string(),
        sample(ld_min, ld_max, &|x| -law.distance * (x - mean_log_distance)),
    );
    let (u_lo, u_hi) = value_range(&panel, &regions, &years, "uni_score");
    curves.insert(
        "uni_sum".to_string(),
        sample(2.0 * u_lo, 2.0 * u_hi, &|s| law.uni_sum * (s - 2.0 * mean_uni)),
    );
    let (t_lo, t_hi) = value_range(&panel, &regions, &years, "ted");
    curves.insert(
        "ted_sum".to_string(),
        sample(2.0 * t_lo, 2.0 * t_hi, &|s| law.ted_sum * (s - 2.0 * mean_ted)),
    );
    if config.asymmetric {
        curves.insert(
            "uni_sender".to_string(),
            sample(u_lo, u_hi, &|u| law.asymmetry * (u - mean_uni) * (u - mean_uni)),
        );
    }

    let ground_truth = GroundTruth {
        seed: config.seed,
        asymmetric: config.asymmetric,
        law,
        noise: config.noise,
        n_regions: n,
        years: years.clone(),
        expected_total_flow: expected_total,
        drawn_total_flow: drawn_total,
        mean_log_distance,
        mean_uni,
        mean_ted,
        curves,
    };

    Ok(SynthDataset {
        config: config.clone(),
        map,
        region_rows,
        alias_rows,
        denominator_rows,
        rankings,
        procurements,
        gdp_regional,
        gdp_national,
        gdp_benchmark,
        edu_attainment,
        panel,
        flows,
        expected,
        ground_truth,
    })
}

fn value_range(
    panel: &RegionYearPanel,
    regions: &[String],
    years: &[i32],
    key: &str,
) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in regions {
        for &y in years {
            let v = panel.value(r, y, key).expect("panel is complete");
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

impl SynthDataset {
    /// Planted mean of one directed dyad-year.
    pub fn expected_mean(&self, year: i32, sender: &str, receiver: &str) -> Option<f64> {
        let regions = &self.flows.universe;
        let n = regions.len();
        let (y0, y1) = self.config.year_range;
        if year < y0 || year > y1 || sender == receiver {
            return None;
        }
        let si = regions.binary_search(&sender.to_string()).ok()?;
        let ri = regions.binary_search(&receiver.to_string()).ok()?;
        let per_year = n * (n - 1);
        let mut idx = (year - y0) as usize * per_year + si * (n - 1);
        idx += if ri < si { ri } else { ri - 1 };
        Some(self.expected[idx])
    }

    /// Realize every planted flow as a person with two affiliations, plus a
    /// few decoys: single-affiliation stayers, unresolvable places, and one
    /// undated row. Place strings cycle through the region code and its two
    /// alias spellings (one shouted, exercising case folding).
    pub fn affiliation_rows(&self) -> Vec<AffiliationRow> {
        let mut rows = Vec::new();
        let mut person = 0usize;
        let place = |region: &str, variant: usize| -> String {
            match variant % 3 {
                0 => region.to_string(),
                1 => format!("University of {region}"),
                _ => format!("UNIVERSITY OF {region}"),
            }
        };
        for (year, sender, receiver, count) in self.flows.entries() {
            let year = match year {
                FlowYear::Year(y) => y,
                FlowYear::Cumulative => continue,
            };
            for _ in 0..count as u64 {
                let id = format!("m{person:06}");
                rows.push(AffiliationRow {
                    person_id: id.clone(),
                    place: place(sender, person),
                    start_year: Some(year - 1),
                    end_year: Some(year),
                    kind: "employment".to_string(),
                });
                rows.push(AffiliationRow {
                    person_id: id,
                    place: place(receiver, person + 1),
                    start_year: Some(year),
                    end_year: None,
                    kind: "employment".to_string(),
                });
                person += 1;
            }
        }
        let (y0, _) = self.config.year_range;
        for (ri, region) in self.flows.universe.iter().enumerate() {
            rows.push(AffiliationRow {
                person_id: format!("stay{ri:04}"),
                place: region.clone(),
                start_year: Some(y0),
                end_year: Some(y0 + 1),
                kind: "employment".to_string(),
            });
        }
        for k in 0..5 {
            rows.push(AffiliationRow {
                person_id: format!("lost{k:04}"),
                place: format!("Unlisted Centre {k}"),
                start_year: Some(y0),
                end_year: Some(y0 + 1),
                kind: "employment".to_string(),
            });
        }
        rows.push(AffiliationRow {
            person_id: "undated0".to_string(),
            place: self.flows.universe[0].clone(),
            start_year: None,
            end_year: None,
            kind: "education".to_string(),
        });
        rows
    }

    /// Write the full bundle into a directory that already exists.
    pub fn write_bundle(&self, dir: &Path) -> Result<BundlePaths, IoError> {
        let paths = BundlePaths {
            regions: dir.join("regions.csv"),
            aliases: dir.join("aliases.csv"),
            denominators: dir.join("denominators.csv"),
            affiliations: dir.join("affiliations.csv"),
            rankings: dir.join("rankings.csv"),
            procurements: dir.join("procurements.csv"),
            gdp_regional: dir.join("gdp_regional.csv"),
            gdp_national: dir.join("gdp_national.csv"),
            gdp_benchmark: dir.join("gdp_benchmark.csv"),
            edu_attainment: dir.join("edu_attainment.csv"),
            flows_true: dir.join("flows_true.csv"),
            panel_true: dir.join("panel_true.csv"),
            ground_truth: dir.join("ground_truth.json"),
        };
        io::write_region_metadata(&paths.regions, &self.region_rows)?;
        io::write_aliases(&paths.aliases, &self.alias_rows)?;
        io::write_denominators(&paths.denominators, &self.denominator_rows)?;
        io::write_affiliations(&paths.affiliations, &self.affiliation_rows())?;
        io::write_rankings(&paths.rankings, &self.rankings)?;
        io::write_procurements(&paths.procurements, &self.procurements)?;
        io::write_keyed_values(&paths.gdp_regional, "region", &self.gdp_regional)?;
        io::write_keyed_values(&paths.gdp_national, "country", &self.gdp_national)?;
        io::write_keyed_values(&paths.gdp_benchmark, "country", &self.gdp_benchmark)?;
        io::write_keyed_values(&paths.edu_attainment, "region", &self.edu_attainment)?;
        io::write_flow_table(&paths.flows_true, &self.flows)?;
        io::write_panel(&paths.panel_true, &self.panel)?;
        io::write_json(&paths.ground_truth, &self.ground_truth)?;
        Ok(paths)
    }
}
