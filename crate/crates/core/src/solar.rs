//! Synthetic per-site solar production and weather series.
//!
//! Series mirror the field data shape: production at 15-minute resolution (96
//! steps per day) with hourly weather duplicated across the four steps of
//! each hour. Region structure is controlled: sites of one location cluster
//! share a regional cloud process and a cloud-attenuation response, which is
//! what makes location clustering learnable from production data alone.
//!
//! ## Clear-sky model
//!
//! Production under a clear sky follows a truncated cosine bell over the
//! daylight window, with the peak shifted by panel azimuth (15 degrees of
//! azimuth per hour, so a south-facing 180-degree panel peaks at solar noon):
//!
//! ```text
//! day_length_hours(d) = 12 + 4 * sin(2*pi*(d - 80)/365)
//! season_amplitude(d) = 0.65 + 0.35 * sin(2*pi*(d - 80)/365)
//! half_width_min(d)   = 30 * day_length_hours(d)
//! peak_center_min(az) = 720 + 4 * (az - 180)
//! daylight(d, t)      = |t - 720| < half_width_min(d)
//! clearsky(d, t, az)  = daylight ? season_amplitude(d)
//!                         * max(0, cos(pi/2 * (t - peak_center)/half_width)) : 0
//! ```
//!
//! and each step's production is
//! `kwp * clearsky * cloud_attenuation * snow_mask * (1 + noise)`, clamped to
//! `[0, kwp]`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClientProfile;
use crate::seeds::derive_seed;
use crate::trainer::TrainingExample;

pub const STEPS_PER_DAY: usize = 96;
pub const STEP_MINUTES: u32 = 15;
pub const MINUTES_PER_DAY: u32 = 1440;
/// Number of model input features (the table below, in order).
pub const FEATURE_COUNT: usize = 7;

/// Normalization maxima for the seven features, mirroring the observed ranges
/// of the field dataset the workload is modeled on.
pub const SOLAR_RAD_MAX: f64 = 956.2;
pub const GHI_MAX: f64 = 956.21;
pub const SNOW_DEPTH_MAX: f64 = 1178.6;
pub const PRECIP_MAX: f64 = 14.78;
pub const CLOUDS_MAX: f64 = 100.0;
pub const MINUTE_OF_DAY_MAX: f64 = 1440.0;
pub const DAY_OF_YEAR_MAX: f64 = 365.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolarError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("site index {index} out of range for {total} sites")]
    SiteIndexOutOfRange { index: usize, total: usize },
    #[error("negative raw feature {name}: {value}")]
    NegativeFeature { name: &'static str, value: f64 },
    #[error("series must cover at least {needed} days, found {found}")]
    SeriesTooShort { needed: usize, found: usize },
    #[error("train fraction must lie strictly between 0 and 1")]
    InvalidSplit,
    #[error("series is malformed: {0}")]
    MalformedSeries(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("day index {day} out of range for {days}-day series")]
    DayOutOfRange { day: usize, days: usize },
}

/// One 15-minute step of raw (un-normalized) site data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawStep {
    pub solar_rad: f64,
    pub ghi: f64,
    pub snow_depth: f64,
    pub precip: f64,
    pub clouds: f64,
    pub minute_of_day: u32,
    pub day_of_year: u32,
    pub production_kw: f64,
}

/// Timestamped feature + production series for one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub site_id: String,
    pub kwp: f64,
    pub steps: Vec<RawStep>,
}

impl SiteSeries {
    pub fn days(&self) -> usize {
        self.steps.len() / STEPS_PER_DAY
    }

    pub fn day_steps(&self, day: usize) -> Result<&[RawStep], SolarError> {
        if day >= self.days() {
            return Err(SolarError::DayOutOfRange {
                day,
                days: self.days(),
            });
        }
        Ok(&self.steps[day * STEPS_PER_DAY..(day + 1) * STEPS_PER_DAY])
    }

    pub fn validate(&self) -> Result<(), SolarError> {
        if self.kwp <= 0.0 || !self.kwp.is_finite() {
            return Err(SolarError::MalformedSeries("kwp must be positive".into()));
        }
        if self.steps.is_empty() || self.steps.len() % STEPS_PER_DAY != 0 {
            return Err(SolarError::MalformedSeries(format!(
                "step count {} is not a positive multiple of {STEPS_PER_DAY}",
                self.steps.len()
            )));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let expected_minute = (i % STEPS_PER_DAY) as u32 * STEP_MINUTES;
            if step.minute_of_day != expected_minute {
                return Err(SolarError::MalformedSeries(format!(
                    "step {i} has minute_of_day {} (expected {expected_minute})",
                    step.minute_of_day
                )));
            }
        }
        Ok(())
    }
}

/// Weather regime of one location cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRegime {
    /// Long-run mean cloud cover in percent.
    pub cloud_mean: f64,
    /// AR(1) coefficient of the hourly regional cloud process.
    pub cloud_ar: f64,
    /// Innovation standard deviation of the regional cloud process.
    pub cloud_sd: f64,
    /// Per-site deviation from the regional clouds (std dev, percent).
    pub site_cloud_sd: f64,
    /// Fraction of production lost under full cloud cover; the transfer is
    /// `1 - attenuation * clouds/100`.
    pub attenuation: f64,
    /// Chance that a winter day carries snow.
    pub snow_day_probability: f64,
    /// Upper bound for generated snow depth in millimeters.
    pub snow_depth_max_mm: f64,
}

impl Default for WeatherRegime {
    fn default() -> Self {
        Self {
            cloud_mean: 40.0,
            cloud_ar: 0.92,
            cloud_sd: 11.0,
            site_cloud_sd: 4.0,
            attenuation: 0.75,
            snow_day_probability: 0.0,
            snow_depth_max_mm: 120.0,
        }
    }
}

/// Geometry and weather of one location cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center_lat: f64,
    pub center_lon: f64,
    /// Radius of the disc sites are scattered over, in kilometers.
    pub spread_km: f64,
    pub weather: WeatherRegime,
}

/// Full description of a synthetic site population. The seed fixes every
/// draw: geometry, weather and production noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub clusters: Vec<ClusterSpec>,
    /// Training-population sites per cluster.
    pub sites_per_cluster: usize,
    /// Additional held-out sites per cluster (for population-independent
    /// evaluation); generated after the training sites of their cluster.
    pub heldout_per_cluster: usize,
    /// Panel azimuth groups; sites alternate through them.
    pub azimuth_groups: Vec<f64>,
    pub azimuth_jitter_deg: f64,
    pub kwp_min: f64,
    pub kwp_max: f64,
    pub days: usize,
    pub start_day_of_year: u32,
    /// Bounded multiplicative production noise amplitude (0 disables).
    pub production_noise: f64,
    /// Snow depth above this masks production entirely.
    pub snow_mask_threshold_mm: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The scenario used by the experiment harness unless overridden: three
    /// regional clusters with distinct cloud regimes and attenuation
    /// responses, two azimuth groups, 120 days starting mid-April.
    pub fn default_scenario(seed: u64) -> Self {
        let cluster = |lat: f64, lon: f64, mean: f64, atten: f64| ClusterSpec {
            center_lat: lat,
            center_lon: lon,
            spread_km: 12.0,
            weather: WeatherRegime {
                cloud_mean: mean,
                attenuation: atten,
                ..WeatherRegime::default()
            },
        };
        Self {
            clusters: vec![
                cluster(48.21, 16.37, 25.0, 0.45),
                cluster(47.07, 15.44, 45.0, 0.72),
                cluster(48.31, 14.29, 60.0, 0.95),
            ],
            sites_per_cluster: 6,
            heldout_per_cluster: 2,
            azimuth_groups: vec![150.0, 210.0],
            azimuth_jitter_deg: 3.0,
            kwp_min: 4.0,
            kwp_max: 15.0,
            days: 120,
            start_day_of_year: 105,
            production_noise: 0.04,
            snow_mask_threshold_mm: 10.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SolarError> {
        let fail = |msg: &str| Err(SolarError::InvalidScenario(msg.to_string()));
        if self.clusters.is_empty() {
            return fail("at least one cluster required");
        }
        if self.sites_per_cluster == 0 {
            return fail("sites_per_cluster must be >= 1");
        }
        if self.azimuth_groups.is_empty() {
            return fail("at least one azimuth group required");
        }
        if self
            .azimuth_groups
            .iter()
            .any(|az| !(0.0..360.0).contains(az))
        {
            return fail("azimuth groups must lie in [0, 360)");
        }
        if self.days < 14 {
            return fail("simulation length must be at least 14 days");
        }
        if !(self.kwp_min > 0.0 && self.kwp_max >= self.kwp_min) {
            return fail("kwp range must satisfy 0 < min <= max");
        }
        if !(0.0..=0.5).contains(&self.production_noise) {
            return fail("production_noise must lie in [0, 0.5]");
        }
        if self.start_day_of_year == 0 || self.start_day_of_year > 365 {
            return fail("start_day_of_year must lie in [1, 365]");
        }
        for c in &self.clusters {
            if !(0.0..=1.0).contains(&c.weather.attenuation)
                || !(0.0..1.0).contains(&c.weather.cloud_ar)
                || !(0.0..=100.0).contains(&c.weather.cloud_mean)
            {
                return fail("cluster weather parameters out of range");
            }
        }
        Ok(())
    }

    /// Sites per cluster including held-out ones.
    pub fn sites_per_cluster_total(&self) -> usize {
        self.sites_per_cluster + self.heldout_per_cluster
    }

    pub fn total_sites(&self) -> usize {
        self.clusters.len() * self.sites_per_cluster_total()
    }

    pub fn cluster_of_site(&self, site_index: usize) -> usize {
        site_index / self.sites_per_cluster_total()
    }

    /// Held-out sites occupy the tail indices of each cluster block.
    pub fn is_heldout(&self, site_index: usize) -> bool {
        site_index % self.sites_per_cluster_total() >= self.sites_per_cluster
    }

    pub fn site_id(&self, site_index: usize) -> String {
        let cluster = self.cluster_of_site(site_index);
        let within = site_index % self.sites_per_cluster_total();
        format!("site-c{cluster}-{within:02}")
    }

    pub fn training_site_indices(&self) -> Vec<usize> {
        (0..self.total_sites()).filter(|i| !self.is_heldout(*i)).collect()
    }

    pub fn heldout_site_indices(&self) -> Vec<usize> {
        (0..self.total_sites()).filter(|i| self.is_heldout(*i)).collect()
    }

    pub fn day_of_year(&self, day_index: usize) -> u32 {
        ((self.start_day_of_year as usize - 1 + day_index) % 365) as u32 + 1
    }
}

pub fn day_length_hours(day_of_year: u32) -> f64 {
    12.0 + 4.0 * (2.0 * std::f64::consts::PI * (day_of_year as f64 - 80.0) / 365.0).sin()
}

pub fn season_amplitude(day_of_year: u32) -> f64 {
    0.65 + 0.35 * (2.0 * std::f64::consts::PI * (day_of_year as f64 - 80.0) / 365.0).sin()
}

fn half_width_minutes(day_of_year: u32) -> f64 {
    30.0 * day_length_hours(day_of_year)
}

fn in_daylight(day_of_year: u32, minute: u32) -> bool {
    (minute as f64 - 720.0).abs() < half_width_minutes(day_of_year)
}

/// Cosine bell centered at `center`, 1 at the center, 0 at `±half_width`.
fn bell(minute: u32, center: f64, half_width: f64) -> f64 {
    let u = (minute as f64 - center) / half_width;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * u).cos()
    }
}

/// Clear-sky production factor in [0, 1]; see the module docs for the closed
/// form.
pub fn clearsky_factor(day_of_year: u32, minute_of_day: u32, azimuth: f64) -> f64 {
    if !in_daylight(day_of_year, minute_of_day) {
        return 0.0;
    }
    let center = 720.0 + 4.0 * (azimuth - 180.0);
    let value = season_amplitude(day_of_year) * bell(minute_of_day, center, half_width_minutes(day_of_year));
    value.max(0.0)
}

/// Production factor remaining under the given cloud cover.
pub fn cloud_attenuation_factor(clouds_percent: f64, attenuation: f64) -> f64 {
    (1.0 - attenuation * clouds_percent / 100.0).clamp(0.0, 1.0)
}

fn is_winter(day_of_year: u32) -> bool {
    day_of_year < 70 || day_of_year > 334
}

/// Deterministic geometry of one site (placement, azimuth, capacity).
pub fn site_profile(spec: &ScenarioSpec, site_index: usize) -> Result<ClientProfile, SolarError> {
    spec.validate()?;
    if site_index >= spec.total_sites() {
        return Err(SolarError::SiteIndexOutOfRange {
            index: site_index,
            total: spec.total_sites(),
        });
    }
    let cluster = &spec.clusters[spec.cluster_of_site(site_index)];
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(spec.seed, &format!("site-geom-{site_index}")));

    // Uniform placement over a disc of radius spread_km around the centroid.
    let radius_km = cluster.spread_km * rng.gen::<f64>().sqrt();
    let angle = rng.gen::<f64>() * std::f64::consts::TAU;
    let latitude = cluster.center_lat + radius_km * angle.cos() / 111.0;
    let longitude =
        cluster.center_lon + radius_km * angle.sin() / (111.0 * cluster.center_lat.to_radians().cos());

    let group = spec.azimuth_groups[site_index % spec.azimuth_groups.len()];
    let jitter = spec.azimuth_jitter_deg * (2.0 * rng.gen::<f64>() - 1.0);
    let orientation_azimuth = (group + jitter).rem_euclid(360.0);

    let kwp = spec.kwp_min + (spec.kwp_max - spec.kwp_min) * rng.gen::<f64>();

    Ok(ClientProfile {
        client_id: spec.site_id(site_index),
        latitude,
        longitude,
        orientation_azimuth,
        kwp,
    })
}

/// Hourly regional weather shared by every site of a cluster:
/// (clouds %, precip mm, snow depth mm) per hour.
fn cluster_weather(spec: &ScenarioSpec, cluster_index: usize) -> Vec<(f64, f64, f64)> {
    let regime = &spec.clusters[cluster_index].weather;
    let mut rng =
        ChaCha12Rng::seed_from_u64(derive_seed(spec.seed, &format!("weather-{cluster_index}")));
    let hours = spec.days * 24;
    let mut out = Vec::with_capacity(hours);
    let mut clouds = regime.cloud_mean;
    let mut snow_today = 0.0;
    for hour in 0..hours {
        let day = hour / 24;
        if hour % 24 == 0 {
            let doy = spec.day_of_year(day);
            snow_today = if is_winter(doy) && rng.gen::<f64>() < regime.snow_day_probability {
                (0.3 + 0.7 * rng.gen::<f64>()) * regime.snow_depth_max_mm
            } else {
                0.0
            };
        }
        let innovation: f64 = StandardNormal.sample(&mut rng);
        clouds = (regime.cloud_mean + regime.cloud_ar * (clouds - regime.cloud_mean)
            + regime.cloud_sd * innovation)
            .clamp(0.0, CLOUDS_MAX);
        let precip = if clouds > 70.0 {
            ((clouds - 70.0) / 30.0 * rng.gen::<f64>() * 0.9 * PRECIP_MAX).min(PRECIP_MAX)
        } else {
            rng.gen::<f64>(); // keep the stream aligned across dry/wet hours
            0.0
        };
        out.push((clouds, precip, snow_today.min(SNOW_DEPTH_MAX)));
    }
    out
}

/// Generates the full series for one site of the scenario.
pub fn generate_site(spec: &ScenarioSpec, site_index: usize) -> Result<SiteSeries, SolarError> {
    let profile = site_profile(spec, site_index)?;
    let cluster_index = spec.cluster_of_site(site_index);
    let regime = spec.clusters[cluster_index].weather.clone();
    let regional = cluster_weather(spec, cluster_index);

    let mut rng =
        ChaCha12Rng::seed_from_u64(derive_seed(spec.seed, &format!("site-series-{site_index}")));
    let mut steps = Vec::with_capacity(spec.days * STEPS_PER_DAY);
    for day in 0..spec.days {
        let doy = spec.day_of_year(day);
        for hour in 0..24 {
            let (regional_clouds, precip, snow_depth) = regional[day * 24 + hour];
            let site_noise: f64 = StandardNormal.sample(&mut rng);
            let clouds =
                (regional_clouds + regime.site_cloud_sd * site_noise).clamp(0.0, CLOUDS_MAX);
            let attenuation = cloud_attenuation_factor(clouds, regime.attenuation);
            for quarter in 0..4 {
                let minute = (hour as u32) * 60 + quarter * STEP_MINUTES;
                let noise = spec.production_noise * (2.0 * rng.gen::<f64>() - 1.0);

                let ghi = if in_daylight(doy, minute) {
                    GHI_MAX * season_amplitude(doy) * bell(minute, 720.0, half_width_minutes(doy))
                } else {
                    0.0
                };
                let solar_rad = (ghi * attenuation).min(SOLAR_RAD_MAX);
                let snow_mask = if snow_depth > spec.snow_mask_threshold_mm {
                    0.0
                } else {
                    1.0
                };
                let production_kw = (profile.kwp
                    * clearsky_factor(doy, minute, profile.orientation_azimuth)
                    * attenuation
                    * snow_mask
                    * (1.0 + noise))
                    .clamp(0.0, profile.kwp);

                steps.push(RawStep {
                    solar_rad,
                    ghi,
                    snow_depth,
                    precip,
                    clouds,
                    minute_of_day: minute,
                    day_of_year: doy,
                    production_kw,
                });
            }
        }
    }

    Ok(SiteSeries {
        site_id: profile.client_id,
        kwp: profile.kwp,
        steps,
    })
}

/// Normalizes one raw step into the seven model features, each in [0, 1]:
/// `[solar_rad, ghi, snow_depth, precip, clouds, minute_of_day, day_of_year]`.
pub fn normalize_features(step: &RawStep) -> Result<[f64; FEATURE_COUNT], SolarError> {
    let pairs: [(&'static str, f64, f64); FEATURE_COUNT] = [
        ("solar_rad", step.solar_rad, SOLAR_RAD_MAX),
        ("ghi", step.ghi, GHI_MAX),
        ("snow_depth", step.snow_depth, SNOW_DEPTH_MAX),
        ("precip", step.precip, PRECIP_MAX),
        ("clouds", step.clouds, CLOUDS_MAX),
        ("minute_of_day", step.minute_of_day as f64, MINUTE_OF_DAY_MAX),
        ("day_of_year", step.day_of_year as f64, DAY_OF_YEAR_MAX),
    ];
    let mut out = [0.0; FEATURE_COUNT];
    for (i, (name, value, max)) in pairs.into_iter().enumerate() {
        if value < 0.0 || !value.is_finite() {
            return Err(SolarError::NegativeFeature { name, value });
        }
        out[i] = (value / max).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Feature matrix for one day of a series: 96 rows of 7 normalized features.
pub fn day_feature_matrix(
    series: &SiteSeries,
    day: usize,
) -> Result<Vec<[f64; FEATURE_COUNT]>, SolarError> {
    series.day_steps(day)?.iter().map(normalize_features).collect()
}

/// Actual production of one day in kilowatts, one entry per step.
pub fn day_production_kw(series: &SiteSeries, day: usize) -> Result<Vec<f64>, SolarError> {
    Ok(series.day_steps(day)?.iter().map(|s| s.production_kw).collect())
}

fn example_from_step(step: &RawStep, kwp: f64) -> Result<TrainingExample<f64>, SolarError> {
    Ok(TrainingExample {
        features: normalize_features(step)?.to_vec(),
        target: (step.production_kw / kwp).clamp(0.0, 1.0),
    })
}

/// Training examples for a contiguous day range `[from, to)`.
pub fn examples_for_days(
    series: &SiteSeries,
    from: usize,
    to: usize,
) -> Result<Vec<TrainingExample<f64>>, SolarError> {
    let mut out = Vec::with_capacity((to.saturating_sub(from)) * STEPS_PER_DAY);
    for day in from..to {
        for step in series.day_steps(day)? {
            out.push(example_from_step(step, series.kwp)?);
        }
    }
    Ok(out)
}

/// Number of training days under a chronological split.
pub fn train_day_count(days: usize, train_fraction: f64) -> Result<usize, SolarError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SolarError::InvalidSplit);
    }
    let train_days = (days as f64 * train_fraction).floor() as usize;
    if train_days == 0 || train_days >= days {
        return Err(SolarError::InvalidSplit);
    }
    Ok(train_days)
}

/// Chronological train/test split at a day boundary; the first
/// `floor(days * train_fraction)` days train, the rest test.
pub fn make_examples(
    series: &SiteSeries,
    train_fraction: f64,
) -> Result<(Vec<TrainingExample<f64>>, Vec<TrainingExample<f64>>), SolarError> {
    series.validate()?;
    let days = series.days();
    if days < 14 {
        return Err(SolarError::SeriesTooShort {
            needed: 14,
            found: days,
        });
    }
    let train_days = train_day_count(days, train_fraction)?;
    Ok((
        examples_for_days(series, 0, train_days)?,
        examples_for_days(series, train_days, days)?,
    ))
}

/// Writes a series as CSV: `timestamp_min` is minutes since the series start.
pub fn write_series_csv<W: Write>(series: &SiteSeries, writer: W) -> Result<(), SolarError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "timestamp_min",
        "solar_rad",
        "ghi",
        "snow_depth",
        "precip",
        "clouds",
        "minute_of_day",
        "day_of_year",
        "production_kw",
        "kwp",
    ])
    .map_err(|e| SolarError::Csv(e.to_string()))?;
    for (i, s) in series.steps.iter().enumerate() {
        let day = i / STEPS_PER_DAY;
        let timestamp = day as u64 * u64::from(MINUTES_PER_DAY) + u64::from(s.minute_of_day);
        w.write_record([
            timestamp.to_string(),
            s.solar_rad.to_string(),
            s.ghi.to_string(),
            s.snow_depth.to_string(),
            s.precip.to_string(),
            s.clouds.to_string(),
            s.minute_of_day.to_string(),
            s.day_of_year.to_string(),
            s.production_kw.to_string(),
            series.kwp.to_string(),
        ])
        .map_err(|e| SolarError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| SolarError::Csv(e.to_string()))
}

/// Reads a series back from the CSV layout of [`write_series_csv`], so real
/// datasets can replace the generator without code changes.
pub fn read_series_csv<R: Read>(site_id: &str, reader: R) -> Result<SiteSeries, SolarError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut steps = Vec::new();
    let mut kwp = None;
    for record in r.records() {
        let record = record.map_err(|e| SolarError::Csv(e.to_string()))?;
        if record.len() != 10 {
            return Err(SolarError::Csv(format!(
                "expected 10 columns, found {}",
                record.len()
            )));
        }
        let field = |i: usize| -> Result<f64, SolarError> {
            record[i]
                .parse::<f64>()
                .map_err(|e| SolarError::Csv(format!("column {i}: {e}")))
        };
        steps.push(RawStep {
            solar_rad: field(1)?,
            ghi: field(2)?,
            snow_depth: field(3)?,
            precip: field(4)?,
            clouds: field(5)?,
            minute_of_day: field(6)? as u32,
            day_of_year: field(7)? as u32,
            production_kw: field(8)?,
        });
        kwp.get_or_insert(field(9)?);
    }
    let series = SiteSeries {
        site_id: site_id.to_string(),
        kwp: kwp.ok_or_else(|| SolarError::Csv("empty series".into()))?,
        steps,
    };
    series.validate()?;
    Ok(series)
}
