//! Demand traces: tagging applications into content categories, binning raw
//! records into per-base-station series, and converting traffic volume into
//! CPU ticks through per-category linear cost models.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per megabyte. Traffic is always expressed in decimal megabytes.
pub const BYTES_PER_MB: f64 = 1e6;

/// Default time step of one hour.
pub const DEFAULT_STEP_SECONDS: u64 = 3600;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("degenerate fit: need at least two distinct traffic values, got {0}")]
    DegenerateFit(usize),
    #[error("no cost model for category {0}")]
    NoModel(Category),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("step length must be positive")]
    ZeroStep,
    #[error("invalid cost model for {category}: {reason}")]
    InvalidModel { category: Category, reason: String },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Video,
    Gaming,
    Maps,
    #[default]
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Video, Category::Gaming, Category::Maps, Category::Other];
    /// Categories that carry a cost model.
    pub const MODELED: [Category; 3] = [Category::Video, Category::Gaming, Category::Maps];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Video => "video",
            Category::Gaming => "gaming",
            Category::Maps => "maps",
            Category::Other => "other",
        }
    }

    pub fn is_modeled(self) -> bool {
        self != Category::Other
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "video" => Ok(Category::Video),
            "gaming" => Ok(Category::Gaming),
            "maps" => Ok(Category::Maps),
            "other" => Ok(Category::Other),
            _ => Err(TraceError::UnknownCategory(s.to_string())),
        }
    }
}

/// One line of a raw demand trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandRecord {
    pub timestamp: i64,
    pub bs_id: String,
    pub app_name: String,
    pub bytes_down: u64,
}

/// Ordered application-name patterns. Matching ignores case, whitespace and
/// punctuation, and succeeds when the normalized pattern is a substring of the
/// normalized application name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggingRules {
    rules: Vec<(String, Category)>,
}

fn normalize_app(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl TaggingRules {
    pub fn new() -> Self {
        Self { rules: Vec::new() }
    }

    pub fn push(&mut self, pattern: &str, category: Category) {
        self.rules.push((normalize_app(pattern), category));
    }

    pub fn rules(&self) -> &[(String, Category)] {
        &self.rules
    }

    /// First matching rule wins; unmatched apps are `Other`.
    pub fn tag(&self, app_name: &str) -> Category {
        let app = normalize_app(app_name);
        self.rules
            .iter()
            .find(|(pattern, _)| !pattern.is_empty() && app.contains(pattern.as_str()))
            .map(|(_, category)| *category)
            .unwrap_or(Category::Other)
    }
}

impl Default for TaggingRules {
    fn default() -> Self {
        let mut rules = Self::new();
        for app in VIDEO_APPS {
            rules.push(app, Category::Video);
        }
        for app in GAMING_APPS {
            rules.push(app, Category::Gaming);
        }
        for app in MAPS_APPS {
            rules.push(app, Category::Maps);
        }
        rules
    }
}

pub const VIDEO_APPS: &[&str] = &[
    "YouTube",
    "Netflix",
    "TimeWarner",
    "ShowBox",
    "Twitch",
    "DirectTV",
    "FoxSports",
    "FoxNews",
];
pub const GAMING_APPS: &[&str] = &[
    "Minecraft",
    "World of Warcraft",
    "Riptide",
    "Grand Theft Auto",
    "Rollercoaster Tycoon",
    "This War of Mine",
    "Titan Quest",
    "Unkilled",
];
pub const MAPS_APPS: &[&str] = &["Google Maps", "Waze"];
const OTHER_APPS: &[&str] = &["Facebook", "Instagram", "WhatsApp", "Snapchat", "Twitter"];

pub fn tag_app(app_name: &str, rules: &TaggingRules) -> Category {
    rules.tag(app_name)
}

/// Traffic of one category at one base station, in megabytes per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub bs_id: String,
    pub category: Category,
    pub values: Vec<f64>,
}

impl DemandSeries {
    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> DemandSeries {
        DemandSeries {
            bs_id: self.bs_id.clone(),
            category: self.category,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// The binned demand δ(b, k, t) for a whole trace: every series shares the
/// same number of steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemandSet {
    pub steps: usize,
    pub step_seconds: u64,
    pub window_start: i64,
    series: BTreeMap<(String, Category), DemandSeries>,
}

impl DemandSet {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            step_seconds: DEFAULT_STEP_SECONDS,
            window_start: 0,
            series: BTreeMap::new(),
        }
    }

    /// Inserts a series, replacing any previous one for the same key.
    ///
    /// Panics if the series length does not match `steps`.
    pub fn insert(&mut self, series: DemandSeries) {
        assert_eq!(series.values.len(), self.steps, "series length must equal step count");
        self.series.insert((series.bs_id.clone(), series.category), series);
    }

    pub fn get(&self, bs_id: &str, category: Category) -> Option<&DemandSeries> {
        self.series.get(&(bs_id.to_string(), category))
    }

    pub fn iter(&self) -> impl Iterator<Item = &DemandSeries> {
        self.series.values()
    }

    pub fn for_category(&self, category: Category) -> impl Iterator<Item = &DemandSeries> {
        self.series.values().filter(move |s| s.category == category)
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut out: Vec<Category> = self.series.values().map(|s| s.category).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn total_megabytes(&self) -> f64 {
        self.series.values().map(DemandSeries::total).sum()
    }

    pub fn category_megabytes(&self, category: Category) -> f64 {
        self.for_category(category).map(DemandSeries::total).sum()
    }

    pub fn scaled(&self, factor: f64) -> DemandSet {
        DemandSet {
            steps: self.steps,
            step_seconds: self.step_seconds,
            window_start: self.window_start,
            series: self.series.iter().map(|(k, s)| (k.clone(), s.scaled(factor))).collect(),
        }
    }

    /// Only the series of `categories`.
    pub fn restricted(&self, categories: &[Category]) -> DemandSet {
        DemandSet {
            series: self
                .series
                .iter()
                .filter(|((_, c), _)| categories.contains(c))
                .map(|(k, s)| (k.clone(), s.clone()))
                .collect(),
            ..*self
        }
    }
}

/// Result of binning a record list.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub demand: DemandSet,
    pub rejected: usize,
}

/// Bins records into one series per (base station, category) with any traffic.
/// Records with a negative timestamp are rejected and counted.
pub fn aggregate(records: &[DemandRecord], rules: &TaggingRules, step_seconds: u64) -> Result<Aggregation> {
    if step_seconds == 0 {
        return Err(TraceError::ZeroStep);
    }
    let step = step_seconds as i64;
    let (valid, rejected): (Vec<&DemandRecord>, Vec<&DemandRecord>) = records.iter().partition(|r| r.timestamp >= 0);

    let (Some(min_ts), Some(max_ts)) = (
        valid.iter().map(|r| r.timestamp).min(),
        valid.iter().map(|r| r.timestamp).max(),
    ) else {
        let mut demand = DemandSet::new(0);
        demand.step_seconds = step_seconds;
        return Ok(Aggregation {
            demand,
            rejected: rejected.len(),
        });
    };

    let window_start = min_ts.div_euclid(step) * step;
    let steps = ((max_ts - window_start) / step + 1) as usize;

    let mut bytes: BTreeMap<(String, Category), Vec<u128>> = BTreeMap::new();
    for record in valid {
        if record.bytes_down == 0 {
            continue;
        }
        let category = rules.tag(&record.app_name);
        let t = ((record.timestamp - window_start) / step) as usize;
        let slot = bytes
            .entry((record.bs_id.clone(), category))
            .or_insert_with(|| vec![0; steps]);
        slot[t] += u128::from(record.bytes_down);
    }

    let mut demand = DemandSet::new(steps);
    demand.step_seconds = step_seconds;
    demand.window_start = window_start;
    for ((bs_id, category), per_step) in bytes {
        demand.insert(DemandSeries {
            bs_id,
            category,
            values: per_step.iter().map(|&b| b as f64 / BYTES_PER_MB).collect(),
        });
    }
    Ok(Aggregation {
        demand,
        rejected: rejected.len(),
    })
}

/// Linear relation between served traffic and CPU load for one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(skip)]
    pub category: Category,
    /// CPU ticks per megabyte.
    pub slope: f64,
    /// CPU ticks per experiment, independent of traffic.
    pub intercept: f64,
    pub nrmse: f64,
}

impl CostModel {
    pub const VIDEO: CostModel = CostModel {
        category: Category::Video,
        slope: 0.25,
        intercept: 6.76,
        nrmse: 0.04,
    };
    pub const GAMING: CostModel = CostModel {
        category: Category::Gaming,
        slope: 161.38,
        intercept: 1675.03,
        nrmse: 0.06,
    };
    pub const MAPS: CostModel = CostModel {
        category: Category::Maps,
        slope: 67.44,
        intercept: -7.53,
        nrmse: 0.02,
    };

    pub fn predict(&self, megabytes: f64) -> f64 {
        self.slope * megabytes + self.intercept
    }

    fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| TraceError::InvalidModel {
            category: self.category,
            reason: reason.to_string(),
        };
        if !self.category.is_modeled() {
            return Err(invalid("category carries no cost model"));
        }
        if !(self.slope.is_finite() && self.slope > 0.0) {
            return Err(invalid("slope must be positive"));
        }
        if !self.intercept.is_finite() {
            return Err(invalid("intercept must be finite"));
        }
        if self.nrmse.is_nan() || self.nrmse < 0.0 {
            return Err(invalid("nrmse must be non-negative"));
        }
        Ok(())
    }
}

/// Ordinary least squares over `(traffic_mb, ticks)` samples.
///
/// `nrmse` is the root-mean-square residual divided by the mean observed
/// ticks (by its absolute value; zero mean yields zero or infinity).
pub fn fit_cost_model(samples: &[(f64, f64)], category: Category) -> Result<CostModel> {
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(TraceError::DegenerateFit(distinct.len()));
    }

    let n = samples.len() as f64;
    let mean_x = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (sxy, sxx) = samples.iter().fold((0.0, 0.0), |(sxy, sxx), &(x, y)| {
        let dx = x - mean_x;
        (sxy + dx * (y - mean_y), sxx + dx * dx)
    });
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let mse = samples
        .iter()
        .map(|&(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / n;
    let rmse = mse.sqrt();
    let nrmse = if rmse == 0.0 {
        0.0
    } else if mean_y == 0.0 {
        f64::INFINITY
    } else {
        rmse / mean_y.abs()
    };

    Ok(CostModel {
        category,
        slope,
        intercept,
        nrmse,
    })
}

/// Whether tick conversion uses the fitted slopes or treats every category
/// as one tick per megabyte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    #[default]
    Enriched,
    Raw,
}

impl fmt::Display for TraceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceMode::Enriched => "enriched",
            TraceMode::Raw => "raw",
        })
    }
}

impl FromStr for TraceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "enriched" => Ok(TraceMode::Enriched),
            "raw" => Ok(TraceMode::Raw),
            other => Err(format!("unknown mode `{other}` (expected enriched or raw)")),
        }
    }
}

/// The set of per-category cost models in use.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModels {
    models: BTreeMap<Category, CostModel>,
}

impl Default for CostModels {
    fn default() -> Self {
        Self::from_models([CostModel::VIDEO, CostModel::GAMING, CostModel::MAPS])
    }
}

impl CostModels {
    pub fn from_models(models: impl IntoIterator<Item = CostModel>) -> Self {
        Self {
            models: models.into_iter().map(|m| (m.category, m)).collect(),
        }
    }

    pub fn get(&self, category: Category) -> Option<&CostModel> {
        self.models.get(&category)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CostModel> {
        self.models.values()
    }

    /// Ticks per megabyte for `category` under `mode`. Raw mode is 1 for every
    /// category; enriched mode is `None` when no model exists.
    pub fn tau(&self, category: Category, mode: TraceMode) -> Option<f64> {
        match mode {
            TraceMode::Raw => Some(1.0),
            TraceMode::Enriched => self.models.get(&category).map(|m| m.slope),
        }
    }

    pub fn from_json_reader(reader: impl Read) -> Result<Self> {
        let raw: BTreeMap<String, CostModel> = serde_json::from_reader(reader)?;
        let mut models = BTreeMap::new();
        for (name, mut model) in raw {
            model.category = name.parse()?;
            model.validate()?;
            models.insert(model.category, model);
        }
        Ok(Self { models })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json_reader(s.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_reader(std::fs::File::open(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let raw: BTreeMap<&str, &CostModel> = self.models.iter().map(|(c, m)| (c.as_str(), m)).collect();
        Ok(serde_json::to_string_pretty(&raw)?)
    }
}

/// Per-step CPU ticks for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedSeries {
    pub bs_id: String,
    pub category: Category,
    pub ticks: Vec<f64>,
}

/// Converts traffic to ticks with the category's slope. The intercept is not
/// applied. In raw mode ticks equal megabytes for every category.
pub fn enrich(series: &DemandSeries, models: &CostModels, mode: TraceMode) -> Result<EnrichedSeries> {
    let tau = models
        .tau(series.category, mode)
        .ok_or(TraceError::NoModel(series.category))?;
    Ok(EnrichedSeries {
        bs_id: series.bs_id.clone(),
        category: series.category,
        ticks: series.values.iter().map(|v| v * tau).collect(),
    })
}

/// Total ticks per category over the whole demand set. Categories without a
/// model are skipped in enriched mode.
pub fn ticks_by_category(demand: &DemandSet, models: &CostModels, mode: TraceMode) -> BTreeMap<Category, f64> {
    let mut out = BTreeMap::new();
    for category in demand.categories() {
        if let Some(tau) = models.tau(category, mode) {
            out.insert(category, tau * demand.category_megabytes(category));
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    timestamp: String,
    bs_id: String,
    app_name: String,
    bytes_down: String,
}

/// Records read from a trace CSV; unparsable rows are counted, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceIngest {
    pub records: Vec<DemandRecord>,
    pub rejected: usize,
}

/// Reads `timestamp,bs_id,app_name,bytes_down` rows.
pub fn read_trace_csv(reader: impl Read) -> Result<TraceIngest> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    let mut rejected = 0;
    for row in rdr.deserialize::<CsvRecord>() {
        let Ok(row) = row else {
            rejected += 1;
            continue;
        };
        match (row.timestamp.parse::<i64>(), row.bytes_down.parse::<u64>()) {
            (Ok(timestamp), Ok(bytes_down)) if timestamp >= 0 => records.push(DemandRecord {
                timestamp,
                bs_id: row.bs_id,
                app_name: row.app_name,
                bytes_down,
            }),
            _ => rejected += 1,
        }
    }
    Ok(TraceIngest { records, rejected })
}

pub fn write_trace_csv(records: &[DemandRecord], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for record in records {
        wtr.serialize(record)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EnrichedRow<'a> {
    step: usize,
    bs_id: &'a str,
    category: Category,
    megabytes: f64,
    cpu_ticks: f64,
}

/// Writes `step,bs_id,category,megabytes,cpu_ticks` rows for every non-zero
/// step. Series without a model are skipped unless `mode` is raw.
pub fn write_enriched_csv(demand: &DemandSet, models: &CostModels, mode: TraceMode, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for series in demand.iter() {
        let enriched = match enrich(series, models, mode) {
            Ok(e) => e,
            Err(TraceError::NoModel(_)) => continue,
            Err(e) => return Err(e),
        };
        for (step, (&megabytes, &cpu_ticks)) in series.values.iter().zip(&enriched.ticks).enumerate() {
            if megabytes == 0.0 {
                continue;
            }
            wtr.serialize(EnrichedRow {
                step,
                bs_id: &series.bs_id,
                category: series.category,
                megabytes,
                cpu_ticks,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Parameters of the synthetic trace generator.
///
/// Demand of base station `b`, category `k`, hour `h` of day `d` is
///
/// ```text
/// mean_bs_mb_per_hour * share_k * size_b * day_noise(b,k,d)
///     * (1 + amplitude * cos(2π (h - peak_hour_k - jitter_b) / 24))
/// ```
///
/// with `size_b` log-normal (unit mean, `size_sigma`), `day_noise` log-normal
/// (unit mean, `daily_noise_sigma`) and `jitter_b` uniform in
/// `±phase_jitter_hours`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub base_stations: usize,
    pub days: u32,
    pub shares: BTreeMap<Category, f64>,
    pub diurnal_amplitude: f64,
    pub peak_hours: BTreeMap<Category, f64>,
    pub mean_bs_mb_per_hour: f64,
    pub size_sigma: f64,
    pub daily_noise_sigma: f64,
    pub phase_jitter_hours: f64,
    /// Side of the square area base stations are scattered over.
    pub area_meters: f64,
    pub start_timestamp: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            base_stations: 1000,
            days: 7,
            shares: BTreeMap::from([
                (Category::Video, 0.66),
                (Category::Gaming, 0.15),
                (Category::Maps, 0.04),
                (Category::Other, 0.15),
            ]),
            diurnal_amplitude: 0.8,
            peak_hours: BTreeMap::from([
                (Category::Video, 21.0),
                (Category::Gaming, 9.0),
                (Category::Maps, 15.0),
                (Category::Other, 3.0),
            ]),
            mean_bs_mb_per_hour: 50.0,
            size_sigma: 0.5,
            daily_noise_sigma: 0.1,
            phase_jitter_hours: 4.0,
            area_meters: 20_000.0,
            start_timestamp: 1_500_001_200,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(TraceError::InvalidConfig(msg.to_string()));
        if self.base_stations == 0 {
            return invalid("base_stations must be at least 1");
        }
        if self.days == 0 {
            return invalid("days must be at least 1");
        }
        if self.shares.values().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return invalid("shares must be non-negative");
        }
        if self.shares.values().sum::<f64>() <= 0.0 {
            return invalid("shares must not all be zero");
        }
        if !(0.0..=1.0).contains(&self.diurnal_amplitude) {
            return invalid("diurnal_amplitude must lie in [0, 1]");
        }
        if !(self.mean_bs_mb_per_hour.is_finite() && self.mean_bs_mb_per_hour > 0.0) {
            return invalid("mean_bs_mb_per_hour must be positive");
        }
        if !(self.size_sigma >= 0.0 && self.daily_noise_sigma >= 0.0 && self.phase_jitter_hours >= 0.0) {
            return invalid("noise parameters must be non-negative");
        }
        if !(self.area_meters.is_finite() && self.area_meters > 0.0) {
            return invalid("area_meters must be positive");
        }
        if self.start_timestamp < 0 {
            return invalid("start_timestamp must be non-negative");
        }
        Ok(())
    }

    pub fn bs_id(index: usize) -> String {
        format!("bs-{index:05}")
    }
}

fn unit_mean_lognormal(sigma: f64) -> LogNormal<f64> {
    LogNormal::new(-sigma * sigma / 2.0, sigma).expect("sigma validated non-negative")
}

/// Generates hourly records, one per (hour, base station, category) with
/// traffic. Deterministic for a fixed `seed`.
pub fn generate_synthetic_trace(config: &SyntheticConfig, seed: u64) -> Result<Vec<DemandRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let share_total: f64 = config.shares.values().sum();
    let size = unit_mean_lognormal(config.size_sigma);
    let day_noise = unit_mean_lognormal(config.daily_noise_sigma);

    struct Station {
        size: f64,
        jitter: f64,
    }
    let stations: Vec<Station> = (0..config.base_stations)
        .map(|_| Station {
            size: size.sample(&mut rng),
            jitter: if config.phase_jitter_hours > 0.0 {
                rng.random_range(-config.phase_jitter_hours..=config.phase_jitter_hours)
            } else {
                0.0
            },
        })
        .collect();

    let hours = config.days as usize * 24;
    let mut records = Vec::new();
    for day in 0..config.days as usize {
        // (station, category) → noise factor for this day
        let noise: Vec<f64> = (0..stations.len() * Category::ALL.len())
            .map(|_| day_noise.sample(&mut rng))
            .collect();
        for hour in 0..24 {
            let h = day * 24 + hour;
            debug_assert!(h < hours);
            let timestamp = config.start_timestamp + (h as i64) * DEFAULT_STEP_SECONDS as i64;
            for (i, station) in stations.iter().enumerate() {
                for (c, category) in Category::ALL.iter().enumerate() {
                    let share = config.shares.get(category).copied().unwrap_or(0.0) / share_total;
                    if share == 0.0 {
                        continue;
                    }
                    let peak = config.peak_hours.get(category).copied().unwrap_or(12.0);
                    let phase = 2.0 * std::f64::consts::PI * (hour as f64 - peak - station.jitter) / 24.0;
                    let shape = 1.0 + config.diurnal_amplitude * phase.cos();
                    let mb =
                        config.mean_bs_mb_per_hour * share * station.size * noise[i * Category::ALL.len() + c] * shape;
                    let bytes_down = (mb * BYTES_PER_MB).round() as u64;
                    let apps = match category {
                        Category::Video => VIDEO_APPS,
                        Category::Gaming => GAMING_APPS,
                        Category::Maps => MAPS_APPS,
                        Category::Other => OTHER_APPS,
                    };
                    let app_name = apps[rng.random_range(0..apps.len())].to_string();
                    if bytes_down == 0 {
                        continue;
                    }
                    records.push(DemandRecord {
                        timestamp,
                        bs_id: SyntheticConfig::bs_id(i),
                        app_name,
                        bytes_down,
                    });
                }
            }
        }
    }
    Ok(records)
}

/// Base-station positions scattered uniformly over the configured square,
/// with ids matching [`generate_synthetic_trace`].
pub fn generate_bs_positions(config: &SyntheticConfig, seed: u64) -> Result<Vec<(String, f64, f64)>> {
    config.validate()?;
    // separate stream so positions do not shift when trace parameters change
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok((0..config.base_stations)
        .map(|i| {
            let x = rng.random_range(0.0..config.area_meters);
            let y = rng.random_range(0.0..config.area_meters);
            (SyntheticConfig::bs_id(i), x, y)
        })
        .collect())
}
