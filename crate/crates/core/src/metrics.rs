//! Forecast error metrics.
//!
//! Power errors are normalized by a site's rated capacity (kWp), daily energy
//! errors by the theoretical daily maximum of 12 hours at rated capacity —
//! both expressed in percent, which makes sites of different sizes
//! comparable. Daytime variants restrict to the [06:00, 21:00) window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::solar::{STEPS_PER_DAY, STEP_MINUTES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("kwp must be positive, got {0}")]
    NonPositiveKwp(f64),
    #[error("no forecast data")]
    Empty,
    #[error("malformed forecast series for {site_id}: {detail}")]
    Malformed { site_id: String, detail: String },
}

/// Half-open daytime window in minutes of day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaytimeWindow {
    pub start_minute: u32,
    pub end_minute: u32,
}

impl Default for DaytimeWindow {
    fn default() -> Self {
        Self {
            start_minute: 6 * 60,
            end_minute: 21 * 60,
        }
    }
}

impl DaytimeWindow {
    pub fn contains(&self, minute_of_day: u32) -> bool {
        minute_of_day >= self.start_minute && minute_of_day < self.end_minute
    }
}

/// Instantaneous power error in percent of rated capacity:
/// `|predicted - actual| / kwp * 100`.
pub fn power_error<F: Scalar>(predicted_kw: F, actual_kw: F, kwp: F) -> Result<F, MetricsError> {
    if kwp <= F::zero() || !kwp.is_finite() {
        return Err(MetricsError::NonPositiveKwp(kwp.as_f64()));
    }
    Ok((predicted_kw - actual_kw).abs() / kwp * F::from_f64_lossy(100.0))
}

/// Daily energy error in percent of the theoretical daily maximum
/// (12 hours at rated capacity): `|predicted - actual| / (kwp * 12) * 100`.
pub fn energy_error<F: Scalar>(
    predicted_kwh: F,
    actual_kwh: F,
    kwp: F,
) -> Result<F, MetricsError> {
    if kwp <= F::zero() || !kwp.is_finite() {
        return Err(MetricsError::NonPositiveKwp(kwp.as_f64()));
    }
    Ok((predicted_kwh - actual_kwh).abs() / (kwp * F::from_f64_lossy(12.0))
        * F::from_f64_lossy(100.0))
}

/// One forecast step: predicted vs actual power at a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub day_index: usize,
    pub minute_of_day: u32,
    pub predicted_kw: f64,
    pub actual_kw: f64,
}

/// Aligned (predicted, actual) pairs for one site, full days only.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    pub site_id: String,
    pub kwp: f64,
    pub points: Vec<ForecastPoint>,
}

impl ForecastSeries {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let malformed = |detail: String| MetricsError::Malformed {
            site_id: self.site_id.clone(),
            detail,
        };
        if self.kwp <= 0.0 {
            return Err(MetricsError::NonPositiveKwp(self.kwp));
        }
        if self.points.is_empty() || self.points.len() % STEPS_PER_DAY != 0 {
            return Err(malformed(format!(
                "{} points is not a positive multiple of {STEPS_PER_DAY}",
                self.points.len()
            )));
        }
        for (i, p) in self.points.iter().enumerate() {
            let expected_minute = (i % STEPS_PER_DAY) as u32 * STEP_MINUTES;
            if p.minute_of_day != expected_minute {
                return Err(malformed(format!(
                    "point {i} at minute {} (expected {expected_minute})",
                    p.minute_of_day
                )));
            }
            if p.predicted_kw < 0.0 || p.actual_kw < 0.0 {
                return Err(malformed(format!("negative power at point {i}")));
            }
        }
        Ok(())
    }

    fn days(&self) -> impl Iterator<Item = &[ForecastPoint]> {
        self.points.chunks(STEPS_PER_DAY)
    }
}

/// Error statistics of one experiment run, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mean_error_power: f64,
    pub max_error_power: f64,
    pub mean_error_energy: f64,
    pub mean_error_day_power: f64,
    pub mean_error_day_energy: f64,
}

impl RunReport {
    pub const METRIC_LABELS: [&'static str; 5] = [
        "Mean Error Power",
        "Max Error Power",
        "Mean Error Energy",
        "Mean Error Day Power",
        "Mean Error Day Energy",
    ];

    pub fn values(&self) -> [f64; 5] {
        [
            self.mean_error_power,
            self.max_error_power,
            self.mean_error_energy,
            self.mean_error_day_power,
            self.mean_error_day_energy,
        ]
    }

    /// CSV with one `metric,value` row per statistic.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (label, value) in Self::METRIC_LABELS.iter().zip(self.values()) {
            out.push_str(&format!("{label},{value}\n"));
        }
        out
    }
}

/// Hours of energy integration per step.
const STEP_HOURS: f64 = STEP_MINUTES as f64 / 60.0;

/// Computes the run statistics over a set of forecast series.
///
/// Power statistics pool every step of every site; energy statistics average
/// the per-day energy errors over all (site, day) pairs. The daytime energy
/// variant integrates daytime steps only but keeps the kwp*12h denominator so
/// rows stay comparable.
pub fn summarize(
    forecasts: &[ForecastSeries],
    window: DaytimeWindow,
) -> Result<RunReport, MetricsError> {
    if forecasts.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut power_sum = 0.0;
    let mut power_count = 0_u64;
    let mut power_max = 0.0_f64;
    let mut day_power_sum = 0.0;
    let mut day_power_count = 0_u64;
    let mut energy_sum = 0.0;
    let mut day_energy_sum = 0.0;
    let mut day_count = 0_u64;

    for series in forecasts {
        series.validate()?;
        let kwp = series.kwp;
        for day in series.days() {
            let mut predicted_kwh = 0.0;
            let mut actual_kwh = 0.0;
            let mut predicted_day_kwh = 0.0;
            let mut actual_day_kwh = 0.0;
            for p in day {
                let err = power_error(p.predicted_kw, p.actual_kw, kwp)?;
                power_sum += err;
                power_count += 1;
                power_max = power_max.max(err);
                predicted_kwh += p.predicted_kw * STEP_HOURS;
                actual_kwh += p.actual_kw * STEP_HOURS;
                if window.contains(p.minute_of_day) {
                    day_power_sum += err;
                    day_power_count += 1;
                    predicted_day_kwh += p.predicted_kw * STEP_HOURS;
                    actual_day_kwh += p.actual_kw * STEP_HOURS;
                }
            }
            energy_sum += energy_error(predicted_kwh, actual_kwh, kwp)?;
            day_energy_sum += energy_error(predicted_day_kwh, actual_day_kwh, kwp)?;
            day_count += 1;
        }
    }

    Ok(RunReport {
        mean_error_power: power_sum / power_count as f64,
        max_error_power: power_max,
        mean_error_energy: energy_sum / day_count as f64,
        mean_error_day_power: if day_power_count == 0 {
            0.0
        } else {
            day_power_sum / day_power_count as f64
        },
        mean_error_day_energy: day_energy_sum / day_count as f64,
    })
}

/// Mean and sample standard deviation of one statistic across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn over(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }

    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Per-metric mean ± std over a set of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportAggregate {
    pub runs: usize,
    pub mean_error_power: MeanStd,
    pub max_error_power: MeanStd,
    pub mean_error_energy: MeanStd,
    pub mean_error_day_power: MeanStd,
    pub mean_error_day_energy: MeanStd,
}

impl ReportAggregate {
    pub fn values(&self) -> [MeanStd; 5] {
        [
            self.mean_error_power,
            self.max_error_power,
            self.mean_error_energy,
            self.mean_error_day_power,
            self.mean_error_day_energy,
        ]
    }
}

pub fn aggregate_reports(reports: &[RunReport]) -> Result<ReportAggregate, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let column = |f: fn(&RunReport) -> f64| -> MeanStd {
        MeanStd::over(&reports.iter().map(f).collect::<Vec<_>>())
    };
    Ok(ReportAggregate {
        runs: reports.len(),
        mean_error_power: column(|r| r.mean_error_power),
        max_error_power: column(|r| r.max_error_power),
        mean_error_energy: column(|r| r.mean_error_energy),
        mean_error_day_power: column(|r| r.mean_error_day_power),
        mean_error_day_energy: column(|r| r.mean_error_day_energy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_day(site: &str, kwp: f64, predicted: f64, actual: f64) -> ForecastSeries {
        ForecastSeries {
            site_id: site.into(),
            kwp,
            points: (0..STEPS_PER_DAY)
                .map(|i| ForecastPoint {
                    day_index: 0,
                    minute_of_day: i as u32 * STEP_MINUTES,
                    predicted_kw: predicted,
                    actual_kw: actual,
                })
                .collect(),
        }
    }

    #[test]
    fn power_error_formula() {
        assert!((power_error(5.0_f64, 4.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(power_error(3.3_f64, 3.3, 7.0).unwrap(), 0.0);
        assert!((power_error(0.0_f64, 10.0, 10.0).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(
            power_error(1.0_f64, 1.0, 0.0).unwrap_err(),
            MetricsError::NonPositiveKwp(_)
        ));
    }

    #[test]
    fn energy_error_formula() {
        assert!((energy_error(60.0_f64, 48.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(energy_error(33.0_f64, 33.0, 5.0).unwrap(), 0.0);
        assert!(matches!(
            energy_error(1.0_f64, 1.0, -2.0).unwrap_err(),
            MetricsError::NonPositiveKwp(_)
        ));
    }

    #[test]
    fn constant_bias_separates_power_and_energy_error() {
        // +1 kW bias on a 10 kWp site over 24 h: per-step power error 10%,
        // daily energy error 24 kWh / 120 kWh = 20%.
        let series = flat_day("s", 10.0, 3.0, 2.0);
        let report = summarize(&[series], DaytimeWindow::default()).unwrap();
        assert!((report.mean_error_power - 10.0).abs() < 1e-9);
        assert!((report.mean_error_energy - 20.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_errors_give_an_all_zero_report() {
        let series = flat_day("s", 10.0, 4.0, 4.0);
        let report = summarize(&[series], DaytimeWindow::default()).unwrap();
        assert_eq!(report.values(), [0.0; 5]);
    }

    #[test]
    fn mean_and_max_over_constructed_errors() {
        // Two nonzero-error steps on a 10 kWp site: errors 10% and 30%.
        let mut series = flat_day("s", 10.0, 0.0, 0.0);
        series.points[40].predicted_kw = 1.0; // 10%
        series.points[41].predicted_kw = 3.0; // 30%
        let report = summarize(&[series], DaytimeWindow::default()).unwrap();
        let expected_mean = (10.0 + 30.0) / STEPS_PER_DAY as f64;
        assert!((report.mean_error_power - expected_mean).abs() < 1e-9);
        assert!((report.max_error_power - 30.0).abs() < 1e-9);
    }

    #[test]
    fn daytime_filter_excludes_night_errors() {
        // Error only at 03:00 (minute 180, step 12): outside [06:00, 21:00).
        let mut series = flat_day("s", 10.0, 0.0, 0.0);
        series.points[12].predicted_kw = 5.0;
        assert_eq!(series.points[12].minute_of_day, 180);
        let report = summarize(&[series], DaytimeWindow::default()).unwrap();
        assert_eq!(report.mean_error_day_power, 0.0);
        assert_eq!(report.mean_error_day_energy, 0.0);
        assert!(report.mean_error_power > 0.0);
        assert!(report.mean_error_energy > 0.0);
    }

    #[test]
    fn daytime_window_covers_sixty_of_ninety_six_steps() {
        let window = DaytimeWindow::default();
        let selected = (0..STEPS_PER_DAY)
            .filter(|i| window.contains(*i as u32 * STEP_MINUTES))
            .count();
        assert_eq!(selected, 60);
    }

    #[test]
    fn metrics_are_scale_invariant() {
        let mut state = 0xfeed_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let (p, a, kwp) = (next() * 20.0, next() * 20.0, next() * 20.0 + 0.1);
            let scale = next() * 99.0 + 0.5;
            let base = power_error(p, a, kwp).unwrap();
            let scaled = power_error(p * scale, a * scale, kwp * scale).unwrap();
            assert!((base - scaled).abs() < 1e-9);
            let base_e = energy_error(p, a, kwp).unwrap();
            let scaled_e = energy_error(p * scale, a * scale, kwp * scale).unwrap();
            assert!((base_e - scaled_e).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_error_is_bounded_by_twice_mean_power_error() {
        // |∫(p - a)| <= ∫|p - a| gives energy error <= (24/12) * mean power error.
        let mut state = 0xabcd_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let kwp = 5.0 + next() * 10.0;
            let series = ForecastSeries {
                site_id: "s".into(),
                kwp,
                points: (0..STEPS_PER_DAY)
                    .map(|i| ForecastPoint {
                        day_index: 0,
                        minute_of_day: i as u32 * STEP_MINUTES,
                        predicted_kw: next() * kwp,
                        actual_kw: next() * kwp,
                    })
                    .collect(),
            };
            let report = summarize(&[series], DaytimeWindow::default()).unwrap();
            assert!(report.mean_error_energy <= 2.0 * report.mean_error_power + 1e-9);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(
            summarize(&[], DaytimeWindow::default()).unwrap_err(),
            MetricsError::Empty
        );
    }

    #[test]
    fn aggregate_reports_mean_and_sample_std() {
        let r = |v: f64| RunReport {
            mean_error_power: v,
            max_error_power: 2.0 * v,
            mean_error_energy: v,
            mean_error_day_power: v,
            mean_error_day_energy: v,
        };
        let agg = aggregate_reports(&[r(4.0), r(6.0)]).unwrap();
        assert_eq!(agg.runs, 2);
        assert!((agg.mean_error_power.mean - 5.0).abs() < 1e-12);
        assert!((agg.mean_error_power.std - 2.0_f64.sqrt()).abs() < 1e-12);
        let single = aggregate_reports(&[r(4.0)]).unwrap();
        assert_eq!(single.mean_error_power.std, 0.0);
    }
}
