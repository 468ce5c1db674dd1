//! Panel-azimuth estimation from production data.
//!
//! On clear-sky days the daily production peak tracks panel orientation: a
//! south-facing panel (180 degrees) peaks at solar noon and the peak moves by
//! 15 degrees of azimuth per hour of offset. The estimator takes the median
//! peak time over all clear-sky days and maps it back through that line.

use crate::solar::SiteSeries;

use super::ClusterError;

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationInferenceConfig {
    /// A day counts as clear-sky when every daytime step stays below this
    /// cloud percentage.
    pub clear_sky_cloud_threshold: f64,
    /// Daytime window (minutes, half-open) the cloud screen applies to.
    pub daytime_start_min: u32,
    pub daytime_end_min: u32,
}

impl Default for OrientationInferenceConfig {
    fn default() -> Self {
        Self {
            clear_sky_cloud_threshold: 20.0,
            daytime_start_min: 360,
            daytime_end_min: 1260,
        }
    }
}

/// Estimates a site's panel azimuth in degrees, [0, 360).
///
/// Errors when the series holds no clear-sky day with nonzero production.
pub fn infer_orientation(
    series: &SiteSeries,
    cfg: &OrientationInferenceConfig,
) -> Result<f64, ClusterError> {
    let mut peak_minutes: Vec<f64> = Vec::new();
    for day in 0..series.days() {
        let steps = series.day_steps(day).expect("day index within range");
        let clear = steps
            .iter()
            .filter(|s| {
                s.minute_of_day >= cfg.daytime_start_min && s.minute_of_day < cfg.daytime_end_min
            })
            .all(|s| s.clouds < cfg.clear_sky_cloud_threshold);
        if !clear {
            continue;
        }
        let peak = steps
            .iter()
            .max_by(|a, b| a.production_kw.total_cmp(&b.production_kw))
            .expect("day has steps");
        if peak.production_kw > 0.0 {
            peak_minutes.push(peak.minute_of_day as f64);
        }
    }
    if peak_minutes.is_empty() {
        return Err(ClusterError::NoClearSkyDay);
    }

    peak_minutes.sort_by(f64::total_cmp);
    let median = if peak_minutes.len() % 2 == 1 {
        peak_minutes[peak_minutes.len() / 2]
    } else {
        let hi = peak_minutes.len() / 2;
        (peak_minutes[hi - 1] + peak_minutes[hi]) / 2.0
    };

    // 15 degrees of azimuth per hour of peak offset = 1 degree per 4 minutes.
    Ok((180.0 + (median - 720.0) / 4.0).rem_euclid(360.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solar::{generate_site, ScenarioSpec};

    fn clear_spec(seed: u64, azimuth: f64) -> ScenarioSpec {
        let mut spec = ScenarioSpec::default_scenario(seed);
        spec.days = 30;
        spec.sites_per_cluster = 1;
        spec.heldout_per_cluster = 0;
        spec.azimuth_groups = vec![azimuth];
        spec.azimuth_jitter_deg = 0.0;
        for c in &mut spec.clusters {
            c.weather.cloud_mean = 5.0;
            c.weather.cloud_sd = 2.0;
            c.weather.site_cloud_sd = 1.0;
            c.weather.snow_day_probability = 0.0;
        }
        spec
    }

    #[test]
    fn south_facing_site_is_recovered() {
        let spec = clear_spec(17, 180.0);
        let series = generate_site(&spec, 0).unwrap();
        let estimate =
            infer_orientation(&series, &OrientationInferenceConfig::default()).unwrap();
        assert!((estimate - 180.0).abs() <= 10.0, "estimate {estimate}");
    }

    #[test]
    fn south_west_facing_site_is_recovered() {
        let spec = clear_spec(18, 240.0);
        let series = generate_site(&spec, 0).unwrap();
        let estimate =
            infer_orientation(&series, &OrientationInferenceConfig::default()).unwrap();
        assert!((estimate - 240.0).abs() <= 10.0, "estimate {estimate}");
    }

    #[test]
    fn all_overcast_series_is_an_error() {
        let mut spec = clear_spec(19, 180.0);
        for c in &mut spec.clusters {
            c.weather.cloud_mean = 95.0;
            c.weather.cloud_sd = 1.0;
            c.weather.cloud_ar = 0.5;
        }
        let series = generate_site(&spec, 0).unwrap();
        assert_eq!(
            infer_orientation(&series, &OrientationInferenceConfig::default()).unwrap_err(),
            ClusterError::NoClearSkyDay
        );
    }
}
