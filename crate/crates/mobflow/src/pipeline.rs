//! Batch orchestration: stages, artifacts, and the run manifest.
//!
//! A run executes the selected stages in canonical order. Every stage writes
//! its artifacts into the output directory and records them in the manifest;
//! a stage that was not selected can still serve a later one, which reloads
//! the missing artifact from an earlier run's files. All outputs are
//! deterministic in the config and inputs, so rerunning a config over the
//! same inputs rewrites every file byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::covariates::{
    gdp_correction, impute_panel, ted_indicator, university_score, CovariateError, Provenance,
    RankingEntry, RegionYearPanel,
};
use crate::ingest::{
    aggregate_flows, build_flow_table, extract_migrations, normalize_flows, parse_affiliations,
    FlowTable, FlowYear, IngestError, Level, NormalizationScheme, RegionMap, Scope,
    TimeAggregation,
};
use crate::io::{self, AnovaRow, IoError};
use crate::model::{
    build_dyad_frame, build_mobility_frame, fit_mobility_model, fit_network_model,
    mobility_response, network_model_spec, network_response, FitOptions, GamFit,
    LanguageFamilies, MobilityResponse, MobilityVariant, ModelError, NetworkVariant, PermFResult,
    TermReport, perm_f_test,
};
use crate::network::{
    edge_betweenness_communities, hits_scores, map_equation_communities, s_core_decomposition,
    score_partition, HitsConfig, HitsScores, MobilityNetwork, NetworkError, NetworkTime,
    Partition, ScoreCutoff, StrengthMode,
};
use crate::stats::{npc_anova, pca, spearman_perm_test, NpcAnovaResult, StatsError, TestResult};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Covariates,
    Network,
    Stats,
    Models,
}

impl Stage {
    pub const ALL: [Stage; 5] =
        [Stage::Ingest, Stage::Covariates, Stage::Network, Stage::Stats, Stage::Models];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Ingest => "ingest",
            Stage::Covariates => "covariates",
            Stage::Network => "network",
            Stage::Stats => "stats",
            Stage::Models => "models",
        };
        f.write_str(name)
    }
}

/// Whether a failure came from the inputs or from the numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Input,
    Numeric,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, kind: FailureKind, message: String },
    #[error(transparent)]
    Manifest(#[from] IoError),
}

fn default_scope() -> Scope {
    Scope::Internal
}
fn default_permutations() -> usize {
    999
}
fn default_n_knots() -> usize {
    10
}
fn default_authority_quantile() -> f64 {
    0.8
}
fn default_spearman_lambda() -> f64 {
    1.0
}
fn default_network_variant() -> NetworkVariant {
    NetworkVariant::Final
}
fn default_mobility_variant() -> MobilityVariant {
    MobilityVariant::Final
}

/// Full description of a run. Optional inputs switch their derived
/// indicators or artifacts off; an empty stage list selects every stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub affiliations: PathBuf,
    pub regions: PathBuf,
    #[serde(default)]
    pub aliases: Option<PathBuf>,
    #[serde(default)]
    pub denominators: Option<PathBuf>,
    #[serde(default)]
    pub rankings: Option<PathBuf>,
    #[serde(default)]
    pub procurements: Option<PathBuf>,
    #[serde(default)]
    pub gdp_regional: Option<PathBuf>,
    #[serde(default)]
    pub gdp_national: Option<PathBuf>,
    #[serde(default)]
    pub gdp_benchmark: Option<PathBuf>,
    #[serde(default)]
    pub edu_attainment: Option<PathBuf>,
    pub year_range: (i32, i32),
    /// Explicit region universe; defaults to every region of the map.
    #[serde(default)]
    pub universe: Option<Vec<String>>,
    #[serde(default = "default_scope")]
    pub scope: Scope,
    #[serde(default)]
    pub normalization: Option<NormalizationScheme>,
    pub seed: u64,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_n_knots")]
    pub n_knots: usize,
    /// Override of the GCV grid; `None` keeps the built-in grid.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default = "default_network_variant")]
    pub network_variant: NetworkVariant,
    #[serde(default = "default_mobility_variant")]
    pub mobility_variant: MobilityVariant,
    /// Quantile of the authority scores splitting regions into the high and
    /// low groups compared by the stats stage.
    #[serde(default = "default_authority_quantile")]
    pub authority_quantile: f64,
    /// Smoothing parameter for the functional rank-coupling test.
    #[serde(default = "default_spearman_lambda")]
    pub spearman_lambda: f64,
    #[serde(default)]
    pub stages: Vec<Stage>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    fn fit_options(&self) -> FitOptions {
        let mut opts = FitOptions::default();
        if let Some(grid) = &self.lambda_grid {
            opts.lambda_grid = grid.clone();
        }
        opts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    /// File name inside the output directory.
    pub file: String,
    pub stage: Stage,
}

/// The run record written as `manifest.json` next to the artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub permutations: usize,
    /// Digest of the serialized config, so any config change is visible.
    pub config_digest: String,
    /// SHA-256 of every configured input file, keyed by configured path.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<ArtifactRecord>,
}

type StageResult<T> = Result<T, (FailureKind, String)>;

fn input_err<E: fmt::Display>(e: E) -> (FailureKind, String) {
    (FailureKind::Input, e.to_string())
}

fn ingest_err(e: IngestError) -> (FailureKind, String) {
    input_err(e)
}

fn covariate_err(e: CovariateError) -> (FailureKind, String) {
    input_err(e)
}

fn network_err(e: NetworkError) -> (FailureKind, String) {
    let kind = match e {
        NetworkError::AllZero | NetworkError::Degenerate(_) => FailureKind::Numeric,
        _ => FailureKind::Input,
    };
    (kind, e.to_string())
}

fn stats_err(e: StatsError) -> (FailureKind, String) {
    let kind = match e {
        StatsError::ZeroVariance { .. }
        | StatsError::ConstantX
        | StatsError::Degenerate(_)
        | StatsError::Smoothing(_) => FailureKind::Numeric,
        _ => FailureKind::Input,
    };
    (kind, e.to_string())
}

fn model_err(e: ModelError) -> (FailureKind, String) {
    let kind = match e {
        ModelError::RankDeficient { .. }
        | ModelError::NonFinite(_)
        | ModelError::InvalidCoordinate { .. }
        | ModelError::DegenerateDistance { .. }
        | ModelError::InvalidSmooth(_) => FailureKind::Numeric,
        _ => FailureKind::Input,
    };
    (kind, e.to_string())
}

/// In-memory products of earlier stages, reloaded from artifacts on demand.
#[derive(Default)]
struct State {
    map: Option<RegionMap>,
    flows: Option<FlowTable>,
    panel: Option<RegionYearPanel>,
    net: Option<MobilityNetwork>,
    hits: Option<HitsScores>,
    authority_partition: Option<Partition>,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    state: State,
    artifacts: Vec<ArtifactRecord>,
}

impl<'a> Ctx<'a> {
    fn out(&self, file: &str) -> PathBuf {
        self.config.out_dir.join(file)
    }

    fn record(&mut self, stage: Stage, name: &str, file: &str) {
        self.artifacts.push(ArtifactRecord {
            name: name.to_string(),
            file: file.to_string(),
            stage,
        });
    }

    fn map(&mut self) -> StageResult<&RegionMap> {
        if self.state.map.is_none() {
            let map = RegionMap::load(
                &self.config.regions,
                self.config.aliases.as_deref(),
                self.config.denominators.as_deref(),
            )
            .map_err(ingest_err)?;
            self.state.map = Some(map);
        }
        Ok(self.state.map.as_ref().unwrap())
    }

    fn universe(&mut self) -> StageResult<Vec<String>> {
        match &self.config.universe {
            Some(u) => {
                let mut u = u.clone();
                u.sort();
                u.dedup();
                Ok(u)
            }
            None => Ok(self.map()?.universe()),
        }
    }

    fn flows(&mut self) -> StageResult<&FlowTable> {
        if self.state.flows.is_none() {
            let universe = self.universe()?;
            let table = io::read_flow_table(
                &self.out("flows.csv"),
                self.config.scope,
                Level::Region,
                self.config.year_range,
                Some(&universe),
            )
            .map_err(input_err)?;
            self.state.flows = Some(table);
        }
        Ok(self.state.flows.as_ref().unwrap())
    }

    fn panel(&mut self) -> StageResult<&RegionYearPanel> {
        if self.state.panel.is_none() {
            let panel = io::read_panel(&self.out("panel.csv")).map_err(input_err)?;
            self.state.panel = Some(panel);
        }
        Ok(self.state.panel.as_ref().unwrap())
    }

    fn net(&mut self) -> StageResult<&MobilityNetwork> {
        if self.state.net.is_none() {
            let flows = self.flows()?;
            let net = MobilityNetwork::from_flow_table(flows, NetworkTime::Cumulative)
                .map_err(network_err)?;
            self.state.net = Some(net);
        }
        Ok(self.state.net.as_ref().unwrap())
    }

    fn hits(&mut self) -> StageResult<&HitsScores> {
        if self.state.hits.is_none() {
            let path = self.out("hits.csv");
            if path.exists() {
                let (nodes, hub, authority) = io::read_hits_scores(&path).map_err(input_err)?;
                let expected = self.net()?.nodes().to_vec();
                if nodes != expected {
                    return Err(input_err("hits.csv does not cover the network's nodes"));
                }
                self.state.hits = Some(HitsScores {
                    hub,
                    authority,
                    iterations: 0,
                    converged: true,
                });
            } else {
                let net = self.net()?;
                let scores = hits_scores(net, &HitsConfig::default()).map_err(network_err)?;
                self.state.hits = Some(scores);
            }
        }
        Ok(self.state.hits.as_ref().unwrap())
    }

    fn authority_partition(&mut self) -> StageResult<&Partition> {
        if self.state.authority_partition.is_none() {
            let path = self.out("partition_authority.csv");
            let partition = if path.exists() {
                io::read_partition(&path).map_err(input_err)?
            } else {
                let quantile = self.config.authority_quantile;
                let authority = self.hits()?.authority.clone();
                let nodes = self.net()?.nodes().to_vec();
                score_partition(&nodes, &authority, ScoreCutoff::Quantile(quantile))
                    .map_err(network_err)?
            };
            self.state.authority_partition = Some(partition);
        }
        Ok(self.state.authority_partition.as_ref().unwrap())
    }
}

#[derive(Serialize)]
struct IngestReport {
    n_rows_kept: usize,
    n_issues: usize,
    resolution_rate: f64,
    n_events: usize,
    total_flow: f64,
    issues: Vec<crate::ingest::RowIssue>,
}

fn run_ingest(ctx: &mut Ctx) -> StageResult<()> {
    let universe = ctx.universe()?;
    let map = ctx.map()?.clone();
    let outcome = parse_affiliations(&ctx.config.affiliations, &map).map_err(ingest_err)?;
    let events = extract_migrations(&outcome.records);
    let flows = build_flow_table(&events, ctx.config.year_range, &universe, ctx.config.scope);

    io::write_flow_table(&ctx.out("flows.csv"), &flows).map_err(input_err)?;
    ctx.record(Stage::Ingest, "per-year region flows", "flows.csv");

    let cumulative = aggregate_flows(&flows, &map, Level::Region, TimeAggregation::Cumulative)
        .map_err(ingest_err)?;
    io::write_flow_table(&ctx.out("flows_cumulative.csv"), &cumulative).map_err(input_err)?;
    ctx.record(Stage::Ingest, "cumulative region flows", "flows_cumulative.csv");

    let country = aggregate_flows(&flows, &map, Level::Country, TimeAggregation::Cumulative)
        .map_err(ingest_err)?;
    io::write_flow_table(&ctx.out("flows_country.csv"), &country).map_err(input_err)?;
    ctx.record(Stage::Ingest, "cumulative country flows", "flows_country.csv");

    let report = IngestReport {
        n_rows_kept: outcome.records.len(),
        n_issues: outcome.issues.len(),
        resolution_rate: outcome.resolution_rate,
        n_events: events.len(),
        total_flow: flows.total(),
        issues: outcome.issues,
    };
    io::write_json(&ctx.out("ingest_report.json"), &report).map_err(input_err)?;
    ctx.record(Stage::Ingest, "ingest report", "ingest_report.json");

    ctx.state.flows = Some(flows);
    Ok(())
}

#[derive(Serialize)]
struct CovariatesReport {
    indicators: Vec<String>,
    n_missing_before_imputation: usize,
    n_imputed: usize,
    normalized: Option<NormalizationScheme>,
}

fn run_covariates(ctx: &mut Ctx) -> StageResult<()> {
    let universe = ctx.universe()?;
    let map = ctx.map()?.clone();
    let (y0, y1) = ctx.config.year_range;
    let years: Vec<i32> = (y0..=y1).collect();
    let config = ctx.config;

    let mut indicators = Vec::new();
    let has_gdp = config.gdp_regional.is_some()
        && config.gdp_national.is_some()
        && config.gdp_benchmark.is_some();
    if has_gdp {
        indicators.push("gdp_pc".to_string());
    }
    if config.edu_attainment.is_some() {
        indicators.push("edu_index".to_string());
    }
    if config.rankings.is_some() {
        indicators.push("uni_score".to_string());
    }
    if config.procurements.is_some() {
        indicators.push("ted".to_string());
    }
    if indicators.is_empty() {
        return Err(input_err("no covariate inputs configured"));
    }

    let mut panel = RegionYearPanel::new(universe.clone(), years.clone(), indicators.clone());

    if has_gdp {
        let regional = io::read_keyed_values(config.gdp_regional.as_ref().unwrap(), "region")
            .map_err(input_err)?;
        let national = io::read_keyed_values(config.gdp_national.as_ref().unwrap(), "country")
            .map_err(input_err)?;
        let benchmark = io::read_keyed_values(config.gdp_benchmark.as_ref().unwrap(), "country")
            .map_err(input_err)?;
        let corrected =
            gdp_correction(&regional, &national, &benchmark, &map).map_err(covariate_err)?;
        for ((region, year), value) in &corrected {
            if panel.regions.contains(region) && years.contains(year) {
                panel.set(region, *year, "gdp_pc", *value, Provenance::Corrected);
            }
        }
    }
    if let Some(path) = &config.edu_attainment {
        let rows = io::read_keyed_values(path, "region").map_err(input_err)?;
        for ((region, year), value) in &rows {
            if panel.regions.contains(region) && years.contains(year) {
                panel.set(region, *year, "edu_index", *value, Provenance::Observed);
            }
        }
    }
    if let Some(path) = &config.rankings {
        let rankings = io::read_rankings(path).map_err(input_err)?;
        for &year in &years {
            let year_entries: Vec<RankingEntry> =
                rankings.iter().filter(|e| e.year == year).cloned().collect();
            for region in &universe {
                let score =
                    university_score(&year_entries, region).map_err(covariate_err)?;
                panel.set(region, year, "uni_score", score, Provenance::Observed);
            }
        }
    }
    if let Some(path) = &config.procurements {
        let notices = io::read_procurements(path).map_err(input_err)?;
        for region in &universe {
            for &year in &years {
                if let Some(ted) = ted_indicator(&notices, region, year) {
                    panel.set(region, year, "ted", ted, Provenance::Observed);
                }
            }
        }
    }

    let missing_before = panel.missing().len();
    let panel = impute_panel(&panel, &map).map_err(covariate_err)?;
    let imputed = panel
        .entries()
        .filter(|(_, _, _, _, p)| *p == Provenance::Imputed)
        .count();

    io::write_panel(&ctx.out("panel.csv"), &panel).map_err(input_err)?;
    ctx.record(Stage::Covariates, "indicator panel", "panel.csv");

    let mut normalized = None;
    if let Some(scheme) = config.normalization {
        let flows = ctx.flows()?.clone();
        let table = normalize_flows(&flows, &map, scheme).map_err(ingest_err)?;
        io::write_flow_table(&ctx.out("flows_normalized.csv"), &table).map_err(input_err)?;
        ctx.record(Stage::Covariates, "normalized flows", "flows_normalized.csv");
        normalized = Some(scheme);
    }

    let report = CovariatesReport {
        indicators,
        n_missing_before_imputation: missing_before,
        n_imputed: imputed,
        normalized,
    };
    io::write_json(&ctx.out("covariates_report.json"), &report).map_err(input_err)?;
    ctx.record(Stage::Covariates, "covariates report", "covariates_report.json");

    ctx.state.panel = Some(panel);
    Ok(())
}

#[derive(Serialize)]
struct NetworkReport {
    hits_iterations: usize,
    hits_converged: bool,
    s_core_thresholds_total: Vec<f64>,
    innermost_core: Vec<String>,
    gn_modularity: f64,
    gn_communities: usize,
    map_codelength: f64,
    map_communities: usize,
    partition_congruence: f64,
}

fn run_network(ctx: &mut Ctx) -> StageResult<()> {
    let net = ctx.net()?.clone();
    io::write_network(&ctx.out("edges.csv"), &net).map_err(input_err)?;
    ctx.record(Stage::Network, "cumulative edge list", "edges.csv");

    let scores = hits_scores(&net, &HitsConfig::default()).map_err(network_err)?;
    io::write_hits_scores(&ctx.out("hits.csv"), net.nodes(), &scores).map_err(input_err)?;
    ctx.record(Stage::Network, "hub and authority scores", "hits.csv");

    let mut total_thresholds = Vec::new();
    let mut innermost = Vec::new();
    for (mode, file) in [
        (StrengthMode::In, "shells_in.csv"),
        (StrengthMode::Out, "shells_out.csv"),
        (StrengthMode::Total, "shells_total.csv"),
    ] {
        let result = s_core_decomposition(&net, mode);
        io::write_s_core(&ctx.out(file), &result).map_err(input_err)?;
        ctx.record(Stage::Network, &format!("s-core shells ({mode:?} strength)"), file);
        if mode == StrengthMode::Total {
            total_thresholds = result.thresholds.clone();
            innermost = result.innermost().into_iter().map(String::from).collect();
        }
    }

    let gn = edge_betweenness_communities(&net).map_err(network_err)?;
    io::write_partition(&ctx.out("partition_gn.csv"), &gn.partition).map_err(input_err)?;
    ctx.record(Stage::Network, "betweenness communities", "partition_gn.csv");

    let me = map_equation_communities(&net, ctx.config.seed).map_err(network_err)?;
    io::write_partition(&ctx.out("partition_map.csv"), &me.partition).map_err(input_err)?;
    ctx.record(Stage::Network, "map-equation communities", "partition_map.csv");

    let authority = score_partition(
        net.nodes(),
        &scores.authority,
        ScoreCutoff::Quantile(ctx.config.authority_quantile),
    )
    .map_err(network_err)?;
    io::write_partition(&ctx.out("partition_authority.csv"), &authority).map_err(input_err)?;
    ctx.record(Stage::Network, "authority split", "partition_authority.csv");

    let report = NetworkReport {
        hits_iterations: scores.iterations,
        hits_converged: scores.converged,
        s_core_thresholds_total: total_thresholds,
        innermost_core: innermost,
        gn_modularity: gn.modularity,
        gn_communities: gn.partition.n_groups(),
        map_codelength: me.codelength,
        map_communities: me.partition.n_groups(),
        partition_congruence: crate::network::congruence(&gn.partition, &me.partition)
            .map_err(network_err)?,
    };
    io::write_json(&ctx.out("network_report.json"), &report).map_err(input_err)?;
    ctx.record(Stage::Network, "network report", "network_report.json");

    ctx.state.hits = Some(scores);
    ctx.state.authority_partition = Some(authority);
    Ok(())
}

#[derive(Serialize)]
struct StatsReport {
    group_sizes: (usize, usize),
    anova: BTreeMap<String, NpcAnovaResult>,
    spearman_in_out: TestResult,
    pca: PcaReport,
}

#[derive(Serialize)]
struct PcaReport {
    indicators: Vec<String>,
    eigenvalues: Vec<f64>,
    proportions: Vec<f64>,
    /// Rows follow `indicators`, columns are components.
    loadings: Vec<Vec<f64>>,
    standardized: bool,
}

/// Mean over years of one indicator per region, in region order.
fn region_means(panel: &RegionYearPanel, indicator: &str) -> StageResult<Vec<f64>> {
    let mut out = Vec::with_capacity(panel.regions.len());
    for region in &panel.regions {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &year in &panel.years {
            if let Some(v) = panel.value(region, year, indicator) {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            return Err(input_err(format!("indicator {indicator} is empty for {region}")));
        }
        out.push(sum / n as f64);
    }
    Ok(out)
}

fn run_stats(ctx: &mut Ctx) -> StageResult<()> {
    let config = ctx.config;
    let b = config.permutations;
    let seed = config.seed;

    let partition = ctx.authority_partition()?.clone();
    let panel = ctx.panel()?.clone();
    let flows = ctx.flows()?.clone();

    let label_of: BTreeMap<&str, u32> = partition
        .nodes
        .iter()
        .map(String::as_str)
        .zip(partition.labels.iter().copied())
        .collect();

    let mut anova = BTreeMap::new();
    let mut rows = Vec::new();
    for indicator in &panel.indicators {
        let means = region_means(&panel, indicator)?;
        let mut high = Vec::new();
        let mut low = Vec::new();
        for (region, value) in panel.regions.iter().zip(&means) {
            match label_of.get(region.as_str()) {
                Some(1) => high.push(*value),
                Some(_) => low.push(*value),
                None => {
                    return Err(input_err(format!(
                        "region {region} is missing from the authority split"
                    )))
                }
            }
        }
        let result = npc_anova(&high, &low, b, seed).map_err(stats_err)?;
        rows.push(AnovaRow {
            variable: indicator.clone(),
            location_p: result.p_location_corrected,
            scale_p: result.p_scale_corrected,
        });
        anova.insert(indicator.clone(), result);
    }
    io::write_anova_table(&ctx.out("anova.csv"), &rows).map_err(input_err)?;
    ctx.record(Stage::Stats, "indicator comparison table", "anova.csv");

    let group_sizes = {
        let high = partition.labels.iter().filter(|&&l| l == 1).count();
        (high, partition.labels.len() - high)
    };

    // Functional rank coupling of per-region in-flow and out-flow series.
    let (y0, y1) = config.year_range;
    let years: Vec<i32> = (y0..=y1).collect();
    let regions = flows.universe.clone();
    let mut inflow = vec![vec![0.0; years.len()]; regions.len()];
    let mut outflow = vec![vec![0.0; years.len()]; regions.len()];
    for (year, sender, receiver, count) in flows.entries() {
        let year = match year {
            FlowYear::Year(y) => y,
            FlowYear::Cumulative => continue,
        };
        let ti = (year - y0) as usize;
        let si = regions.binary_search(&sender.to_string()).unwrap();
        let ri = regions.binary_search(&receiver.to_string()).unwrap();
        outflow[si][ti] += count;
        inflow[ri][ti] += count;
    }
    let year_grid: Vec<f64> = years.iter().map(|&y| y as f64).collect();
    let spearman = spearman_perm_test(
        &inflow,
        &outflow,
        &year_grid,
        config.spearman_lambda,
        b,
        seed,
    )
    .map_err(stats_err)?;
    io::write_json(&ctx.out("spearman.json"), &spearman).map_err(input_err)?;
    ctx.record(Stage::Stats, "in/out coupling test", "spearman.json");

    let mut data = DMatrix::zeros(panel.regions.len(), panel.indicators.len());
    for (j, indicator) in panel.indicators.iter().enumerate() {
        let means = region_means(&panel, indicator)?;
        for (i, v) in means.iter().enumerate() {
            data[(i, j)] = *v;
        }
    }
    let pca_result = pca(&data, true).map_err(stats_err)?;
    let loadings: Vec<Vec<f64>> = (0..pca_result.loadings.nrows())
        .map(|i| (0..pca_result.loadings.ncols()).map(|j| pca_result.loadings[(i, j)]).collect())
        .collect();
    let pca_report = PcaReport {
        indicators: panel.indicators.clone(),
        eigenvalues: pca_result.eigenvalues,
        proportions: pca_result.proportions,
        loadings,
        standardized: pca_result.standardized,
    };
    io::write_json(&ctx.out("pca.json"), &pca_report).map_err(input_err)?;
    ctx.record(Stage::Stats, "indicator principal components", "pca.json");

    let report = StatsReport {
        group_sizes,
        anova,
        spearman_in_out: spearman,
        pca: pca_report,
    };
    io::write_json(&ctx.out("stats_report.json"), &report).map_err(input_err)?;
    ctx.record(Stage::Stats, "stats report", "stats_report.json");
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    variant: String,
    response: String,
    n_rows: usize,
    r_squared: f64,
    gcv: f64,
    edf: f64,
    sigma2: f64,
    terms: Vec<TermReport>,
    level_effects: BTreeMap<String, BTreeMap<String, f64>>,
}

fn fit_report(fit: &GamFit, variant: String, response: String, n_rows: usize) -> FitReport {
    FitReport {
        variant,
        response,
        n_rows,
        r_squared: fit.r_squared,
        gcv: fit.gcv,
        edf: fit.edf,
        sigma2: fit.sigma2,
        terms: fit.terms.clone(),
        level_effects: fit.level_effects.clone(),
    }
}

fn run_models(ctx: &mut Ctx) -> StageResult<()> {
    let config = ctx.config;
    let opts = config.fit_options();
    let map = ctx.map()?.clone();
    let panel = ctx.panel()?.clone();
    let flows = ctx.flows()?.clone();
    let families = LanguageFamilies::bundled();

    let frame = build_dyad_frame(&flows, &panel, &map, &families).map_err(model_err)?;
    let fit = fit_network_model(&frame, config.network_variant, config.n_knots, &opts)
        .map_err(model_err)?;
    let variant = serde_variant(&config.network_variant);
    io::write_json(
        &ctx.out("network_fit.json"),
        &fit_report(&fit, variant, "log_flow".to_string(), frame.rows.len()),
    )
    .map_err(input_err)?;
    ctx.record(Stage::Models, "dyadic flow model", "network_fit.json");
    io::write_curves(&ctx.out("network_curves.csv"), &fit.smooth_curves(200))
        .map_err(input_err)?;
    ctx.record(Stage::Models, "dyadic flow smooths", "network_curves.csv");

    let null_spec =
        network_model_spec(&frame, NetworkVariant::Symmetric, config.n_knots).map_err(model_err)?;
    let extended_spec =
        network_model_spec(&frame, NetworkVariant::AsymmetricExtended, config.n_knots)
            .map_err(model_err)?;
    let perm: PermFResult = perm_f_test(
        &null_spec,
        &extended_spec,
        &network_response(&frame),
        config.permutations,
        config.seed,
        &opts,
    )
    .map_err(model_err)?;
    io::write_json(&ctx.out("perm_f.json"), &perm).map_err(input_err)?;
    ctx.record(Stage::Models, "role-symmetry permutation test", "perm_f.json");

    let mob = build_mobility_frame(&flows, &panel, &map).map_err(model_err)?;
    for (response, fit_file, curve_file) in [
        (MobilityResponse::Total, "mobility_fit_total.json", "mobility_curves_total.csv"),
        (MobilityResponse::In, "mobility_fit_in.json", "mobility_curves_in.csv"),
        (MobilityResponse::Out, "mobility_fit_out.json", "mobility_curves_out.csv"),
    ] {
        let fit = fit_mobility_model(&mob, response, config.mobility_variant, config.n_knots, &opts)
            .map_err(model_err)?;
        let _ = mobility_response(&mob, response);
        io::write_json(
            &ctx.out(fit_file),
            &fit_report(
                &fit,
                serde_variant(&config.mobility_variant),
                format!("{response:?}").to_lowercase(),
                mob.rows.len(),
            ),
        )
        .map_err(input_err)?;
        ctx.record(Stage::Models, &format!("mobility model ({fit_file})"), fit_file);
        io::write_curves(&ctx.out(curve_file), &fit.smooth_curves(200)).map_err(input_err)?;
        ctx.record(Stage::Models, &format!("mobility smooths ({curve_file})"), curve_file);
    }
    Ok(())
}

/// Snake_case name of a fieldless enum variant via its serde serialization.
fn serde_variant<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "unknown".to_string())
}

fn sha256_hex(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => {
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            format!("{:x}", hasher.finalize())
        }
        Err(_) => "missing".to_string(),
    }
}

/// Run the selected stages and write `manifest.json`. On a stage failure the
/// manifest still records every stage up to and including the failing one.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest, PipelineError> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| {
        PipelineError::Manifest(IoError::File {
            path: config.out_dir.display().to_string(),
            source: e,
        })
    })?;

    let selected: Vec<Stage> = if config.stages.is_empty() {
        Stage::ALL.to_vec()
    } else {
        let set: BTreeSet<Stage> = config.stages.iter().copied().collect();
        set.into_iter().collect()
    };

    let mut inputs = BTreeMap::new();
    inputs.insert(config.affiliations.display().to_string(), sha256_hex(&config.affiliations));
    inputs.insert(config.regions.display().to_string(), sha256_hex(&config.regions));
    let mut add_input = |path: &Option<PathBuf>| {
        if let Some(p) = path {
            inputs.insert(p.display().to_string(), sha256_hex(p));
        }
    };
    add_input(&config.aliases);
    add_input(&config.denominators);
    add_input(&config.rankings);
    add_input(&config.procurements);
    add_input(&config.gdp_regional);
    add_input(&config.gdp_national);
    add_input(&config.gdp_benchmark);
    add_input(&config.edu_attainment);

    let config_json = serde_json::to_vec(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&config_json);
    let config_digest = format!("{:x}", hasher.finalize());

    let mut manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        permutations: config.permutations,
        config_digest,
        inputs,
        stages: Vec::new(),
        artifacts: Vec::new(),
    };

    let mut ctx = Ctx { config, state: State::default(), artifacts: Vec::new() };
    for stage in selected {
        let result = match stage {
            Stage::Ingest => run_ingest(&mut ctx),
            Stage::Covariates => run_covariates(&mut ctx),
            Stage::Network => run_network(&mut ctx),
            Stage::Stats => run_stats(&mut ctx),
            Stage::Models => run_models(&mut ctx),
        };
        match result {
            Ok(()) => {
                manifest.stages.push(StageRecord {
                    stage,
                    status: StageStatus::Ok,
                    error: None,
                });
            }
            Err((kind, message)) => {
                manifest.stages.push(StageRecord {
                    stage,
                    status: StageStatus::Failed,
                    error: Some(message.clone()),
                });
                manifest.artifacts = ctx.artifacts;
                io::write_json(&config.out_dir.join("manifest.json"), &manifest)?;
                return Err(PipelineError::Stage { stage, kind, message });
            }
        }
    }
    manifest.artifacts = ctx.artifacts;
    io::write_json(&config.out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use tempfile::tempdir;

    fn bundle_config(dir: &Path, out: &Path) -> RunConfig {
        RunConfig {
            affiliations: dir.join("affiliations.csv"),
            regions: dir.join("regions.csv"),
            aliases: Some(dir.join("aliases.csv")),
            denominators: Some(dir.join("denominators.csv")),
            rankings: Some(dir.join("rankings.csv")),
            procurements: Some(dir.join("procurements.csv")),
            gdp_regional: Some(dir.join("gdp_regional.csv")),
            gdp_national: Some(dir.join("gdp_national.csv")),
            gdp_benchmark: Some(dir.join("gdp_benchmark.csv")),
            edu_attainment: Some(dir.join("edu_attainment.csv")),
            year_range: (2010, 2013),
            universe: None,
            scope: Scope::Internal,
            normalization: None,
            seed: 11,
            permutations: 49,
            n_knots: 6,
            lambda_grid: None,
            network_variant: NetworkVariant::Final,
            mobility_variant: MobilityVariant::Final,
            authority_quantile: 0.5,
            spearman_lambda: 1.0,
            stages: vec![Stage::Ingest, Stage::Covariates],
            out_dir: out.to_path_buf(),
        }
    }

    #[test]
    fn ingest_and_covariates_recover_the_generator_tables() {
        let data = generate(&SynthConfig::new(8, (2010, 2013), 5)).expect("generate");
        let dir = tempdir().expect("tempdir");
        data.write_bundle(dir.path()).expect("bundle writes");
        let out = dir.path().join("out");
        let config = bundle_config(dir.path(), &out);

        let manifest = run_pipeline(&config).expect("pipeline succeeds");
        assert_eq!(manifest.stages.len(), 2);
        assert!(manifest.stages.iter().all(|s| s.status == StageStatus::Ok));

        let flows = io::read_flow_table(
            &out.join("flows.csv"),
            Scope::Internal,
            Level::Region,
            (2010, 2013),
            Some(&data.flows.universe),
        )
        .expect("flows readable");
        assert_eq!(flows, data.flows, "pipeline recovers the planted flows");

        let panel = io::read_panel(&out.join("panel.csv")).expect("panel readable");
        assert_eq!(panel, data.panel, "pipeline reproduces the generator panel");
    }

    #[test]
    fn rerun_is_byte_identical() {
        let data = generate(&SynthConfig::new(6, (2011, 2013), 9)).expect("generate");
        let dir = tempdir().expect("tempdir");
        data.write_bundle(dir.path()).expect("bundle writes");
        let out = dir.path().join("out");
        let mut config = bundle_config(dir.path(), &out);
        config.year_range = (2011, 2013);
        config.stages = vec![Stage::Ingest, Stage::Covariates, Stage::Network];

        run_pipeline(&config).expect("first run succeeds");
        let mut first = BTreeMap::new();
        for entry in std::fs::read_dir(&out).expect("readable") {
            let path = entry.expect("entry").path();
            first.insert(path.clone(), std::fs::read(&path).expect("file bytes"));
        }
        run_pipeline(&config).expect("second run succeeds");
        for (path, bytes) in &first {
            let again = std::fs::read(path).expect("file bytes");
            assert_eq!(&again, bytes, "{} changed between reruns", path.display());
        }
    }

    #[test]
    fn missing_affiliations_fails_the_ingest_stage_and_records_it() {
        let dir = tempdir().expect("tempdir");
        let data = generate(&SynthConfig::new(6, (2011, 2013), 9)).expect("generate");
        data.write_bundle(dir.path()).expect("bundle writes");
        let out = dir.path().join("out");
        let mut config = bundle_config(dir.path(), &out);
        config.year_range = (2011, 2013);
        config.affiliations = dir.path().join("nonexistent.csv");
        config.stages = vec![Stage::Ingest];

        let err = run_pipeline(&config).unwrap_err();
        match err {
            PipelineError::Stage { stage, kind, .. } => {
                assert_eq!(stage, Stage::Ingest);
                assert_eq!(kind, FailureKind::Input);
            }
            other => panic!("expected a stage failure, got {other}"),
        }
        let manifest: Manifest =
            io::read_json(&out.join("manifest.json")).expect("manifest written");
        assert_eq!(manifest.stages.len(), 1);
        assert_eq!(manifest.stages[0].status, StageStatus::Failed);
        assert!(manifest.stages[0].error.is_some());
    }

    #[test]
    fn later_stages_reload_artifacts_from_an_earlier_run() {
        let data = generate(&SynthConfig::new(8, (2010, 2013), 5)).expect("generate");
        let dir = tempdir().expect("tempdir");
        data.write_bundle(dir.path()).expect("bundle writes");
        let out = dir.path().join("out");

        let mut config = bundle_config(dir.path(), &out);
        run_pipeline(&config).expect("ingest and covariates succeed");

        config.stages = vec![Stage::Network, Stage::Stats];
        config.permutations = 19;
        let manifest = run_pipeline(&config).expect("network and stats succeed");
        assert!(manifest.stages.iter().all(|s| s.status == StageStatus::Ok));
        assert!(out.join("hits.csv").exists());
        assert!(out.join("anova.csv").exists());
        assert!(out.join("spearman.json").exists());
        assert!(out.join("pca.json").exists());
    }

    #[test]
    fn config_digest_tracks_config_changes() {
        let dir = tempdir().expect("tempdir");
        let data = generate(&SynthConfig::new(6, (2011, 2013), 9)).expect("generate");
        data.write_bundle(dir.path()).expect("bundle writes");
        let out = dir.path().join("out");
        let mut config = bundle_config(dir.path(), &out);
        config.year_range = (2011, 2013);
        config.stages = vec![Stage::Ingest];

        let first = run_pipeline(&config).expect("run succeeds");
        config.seed = 12;
        let second = run_pipeline(&config).expect("run succeeds");
        assert_ne!(first.config_digest, second.config_digest);
        assert_eq!(first.inputs, second.inputs, "input digests track files, not config");
    }
}
