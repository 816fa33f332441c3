//! Comparison metrics between estimation methods and descriptive
//! statistics, pointwise and as rolling time series.
//!
//! The central quantity is the likelihood-loss distance between the
//! cohort matrix `T` and an alternative estimate: the cohort-count
//! weighted average of `ln T_ij / ln T_other_ij`. It equals 1 when the
//! estimates coincide on every weighted cell, and drifts away from 1
//! when the alternative's assumptions (time continuity, Markov,
//! homogeneity) fail on the data. Cells where a logarithm degenerates
//! (zero count, probability 0 or 1 in either matrix) are excluded and
//! their weight share is reported alongside the value.
//!
//! The normalized delta compares the distance at a coarse state count
//! against the distance on the full scale:
//! `(d_full - d_coarse) / d_full`.

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::estimators::{
    chapman_kolmogorov_estimate, cohort_estimate, count_window, generator_estimate,
    EstimateError, TransitionCounts,
};
use crate::expm::{matrix_exponential, ExpmError};
use crate::ingest::RatingHistory;
use crate::matrix::{MatrixError, StochasticMatrix};
use crate::scalar::{lift, lift_count, Scalar};
use crate::statespace::{
    coarsen_histories, CoarseningMap, MergeLeftover, StateSpace, StateSpaceError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("no admissible cell: every weighted cell has a degenerate logarithm")]
    NoAdmissibleCells,
    #[error("matrix dimension {got} does not match the counts dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("time grid must be strictly increasing and non-empty")]
    BadTimeGrid,
    #[error("state counts must be non-empty")]
    NoStateCounts,
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Expm(#[from] ExpmError),
}

/// Why a rolling-series point carries no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapReason {
    /// No entity rated at the window start.
    EmptyWindow,
    /// A Chapman-Kolmogorov sub-window had an empty start sample.
    EmptySubwindow,
    /// Every weighted cell of the distance was excluded.
    NoAdmissibleCells,
    /// The baseline distance is zero, the delta is undefined.
    ZeroBaseline,
    /// The baseline series has a gap at this date.
    BaselineGap,
    /// No entity rated at both increment endpoints.
    NoIncrements,
    /// A numerical step failed (matrix exponential).
    Numerical,
}

impl GapReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            GapReason::EmptyWindow => "empty_window",
            GapReason::EmptySubwindow => "empty_subwindow",
            GapReason::NoAdmissibleCells => "no_admissible_cells",
            GapReason::ZeroBaseline => "zero_baseline",
            GapReason::BaselineGap => "baseline_gap",
            GapReason::NoIncrements => "no_increments",
            GapReason::Numerical => "numerical",
        }
    }
}

/// Likelihood-loss distance with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceReport<F> {
    /// Weighted average of log-probability ratios over admissible cells.
    pub value: F,
    /// Share of the total cohort-count weight on excluded cells.
    pub excluded_mass: F,
    /// Number of admissible cells that entered the average.
    pub admissible_cells: usize,
}

/// Count-weighted average of `ln T_ij / ln T_other_ij`.
///
/// `t` must be the cohort estimate of `counts`; the weights are the
/// cohort endpoint-pair counts. A cell enters the average only when
/// its count is positive and both probabilities lie strictly inside
/// (0, 1); everything else is excluded and accumulated into
/// [`DistanceReport::excluded_mass`].
pub fn likelihood_distance<F: Scalar>(
    counts: &TransitionCounts<F>,
    t: &StochasticMatrix<F>,
    t_other: &StochasticMatrix<F>,
) -> Result<DistanceReport<F>, DiagnosticsError> {
    let n = counts.n();
    for m in [t, t_other] {
        if m.n() != n {
            return Err(DiagnosticsError::DimensionMismatch { expected: n, got: m.n() });
        }
    }
    let mut weighted_sum = F::zero();
    let mut admissible_weight = 0u64;
    let mut admissible_cells = 0usize;
    let mut total_weight = 0u64;
    for i in 0..n {
        for j in 0..n {
            let weight = counts.cohort_pair(i, j);
            total_weight += weight;
            if weight == 0 {
                continue;
            }
            let p = t.get(i, j);
            let q = t_other.get(i, j);
            let interior =
                |x: F| x > F::zero() && x < F::one();
            if !(interior(p) && interior(q)) {
                continue;
            }
            weighted_sum += lift_count::<F>(weight) * (p.ln() / q.ln());
            admissible_weight += weight;
            admissible_cells += 1;
        }
    }
    if admissible_weight == 0 {
        return Err(DiagnosticsError::NoAdmissibleCells);
    }
    let excluded = total_weight - admissible_weight;
    Ok(DistanceReport {
        value: weighted_sum / lift_count::<F>(admissible_weight),
        excluded_mass: lift_count::<F>(excluded) / lift_count::<F>(total_weight),
        admissible_cells,
    })
}

/// Normalized change of the distance when coarsening the state space:
/// `(d_baseline - d_coarse) / d_baseline`. `None` when the baseline
/// distance is zero.
pub fn delta_across_states<F: Scalar>(d_baseline: F, d_coarse: F) -> Option<F> {
    if d_baseline == F::zero() {
        return None;
    }
    Some((d_baseline - d_coarse) / d_baseline)
}

/// Per-entity label increments over `[t - tau, t]`: one value for each
/// entity rated at both endpoints, in entity order.
pub fn rating_increments<F: Scalar>(
    histories: &[RatingHistory],
    space: &StateSpace<F>,
    t: NaiveDate,
    tau_days: u32,
) -> Vec<F> {
    let start = t - Days::new(u64::from(tau_days));
    histories
        .iter()
        .filter_map(|h| match (h.state_at(start), h.state_at(t)) {
            (Some(before), Some(after)) => {
                let labels = space.labels();
                Some(labels[after - 1] - labels[before - 1])
            }
            _ => None,
        })
        .collect()
}

/// Sample mean and population standard deviation; `None` on empty input.
pub fn increment_moments<F: Scalar>(values: &[F]) -> Option<(F, F)> {
    if values.is_empty() {
        return None;
    }
    let count = lift::<F>(values.len() as f64);
    let mean = values.iter().copied().sum::<F>() / count;
    let variance = values
        .iter()
        .map(|&x| {
            let dev = x - mean;
            dev * dev
        })
        .sum::<F>()
        / count;
    Some((mean, variance.sqrt()))
}

/// Increment-moment snapshot for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementStats<F> {
    pub t: NaiveDate,
    pub tau_days: u32,
    pub mean: F,
    pub std: F,
    /// Entities rated at both window endpoints.
    pub count: usize,
}

/// Increment moments of one window; `None` when no entity is rated at
/// both endpoints.
pub fn increment_stats<F: Scalar>(
    histories: &[RatingHistory],
    space: &StateSpace<F>,
    t: NaiveDate,
    tau_days: u32,
) -> Option<IncrementStats<F>> {
    let increments = rating_increments(histories, space, t, tau_days);
    increment_moments(&increments).map(|(mean, std)| IncrementStats {
        t,
        tau_days,
        mean,
        std,
        count: increments.len(),
    })
}

/// Number of entities rated in each state on `date`.
pub fn rating_histogram(histories: &[RatingHistory], n: usize, date: NaiveDate) -> Vec<u64> {
    let mut counts = vec![0u64; n];
    for h in histories {
        if let Some(state) = h.state_at(date) {
            counts[state - 1] += 1;
        }
    }
    counts
}

/// Rolling-series metric kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// d(cohort, exp(generator)).
    DPrime,
    /// d(cohort, Chapman-Kolmogorov product).
    DBar,
    /// Excluded weight share behind the d_prime value.
    DPrimeExcludedMass,
    /// Excluded weight share behind the d_bar value.
    DBarExcludedMass,
    /// Normalized delta of d_prime against the baseline state count.
    DeltaPrime,
    /// Normalized delta of d_bar against the baseline state count.
    DeltaBar,
    IncrementMean,
    IncrementStd,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::DPrime => "d_prime",
            Metric::DBar => "d_bar",
            Metric::DPrimeExcludedMass => "d_prime_excluded_mass",
            Metric::DBarExcludedMass => "d_bar_excluded_mass",
            Metric::DeltaPrime => "delta_prime",
            Metric::DeltaBar => "delta_bar",
            Metric::IncrementMean => "increment_mean",
            Metric::IncrementStd => "increment_std",
        }
    }
}

/// One dated observation: either a value or a gap with its reason.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint<F> {
    pub date: NaiveDate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<F>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapReason>,
}

impl<F: Scalar> SeriesPoint<F> {
    fn value(date: NaiveDate, value: F) -> Self {
        Self { date, value: Some(value), gap: None }
    }

    fn gap(date: NaiveDate, reason: GapReason) -> Self {
        Self { date, value: None, gap: Some(reason) }
    }
}

/// Time series of one metric at one state count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSeries<F> {
    pub metric: Metric,
    pub n_states: usize,
    pub points: Vec<SeriesPoint<F>>,
}

/// Parameters of a rolling run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RollingParams {
    /// Window length in days.
    pub tau_days: u32,
    /// Chapman-Kolmogorov sub-window count; must divide `tau_days`.
    pub k: usize,
    /// Days per year for occupancy and exponential scaling.
    pub year_days: f64,
    /// State counts to evaluate (each reachable from the source count
    /// by pairwise merging).
    pub state_counts: Vec<usize>,
    /// State count the deltas are measured against.
    pub baseline_n: usize,
    pub merge_leftover: MergeLeftover,
    /// Evaluate grid points on the rayon pool; results are identical
    /// to the serial path.
    pub parallel: bool,
}

impl Default for RollingParams {
    fn default() -> Self {
        Self {
            tau_days: 365,
            // 365 days split into 5 non-overlapping 73-day sub-windows.
            k: 5,
            year_days: 365.0,
            state_counts: vec![2, 4, 8, 15],
            baseline_n: 15,
            merge_leftover: MergeLeftover::Top,
            parallel: true,
        }
    }
}

/// Full output of a rolling run, ready for CSV/JSON export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsBundle<F> {
    pub tau_days: u32,
    pub k: usize,
    pub year_days: f64,
    pub baseline_n: usize,
    pub state_counts: Vec<usize>,
    pub merge_leftover: MergeLeftover,
    pub series: Vec<DiagnosticSeries<F>>,
}

impl<F: Scalar + Serialize> DiagnosticsBundle<F> {
    pub fn series(&self, metric: Metric, n_states: usize) -> Option<&DiagnosticSeries<F>> {
        self.series
            .iter()
            .find(|s| s.metric == metric && s.n_states == n_states)
    }

    /// Long-format CSV: `date,metric,n_states,value,gap_reason`.
    pub fn write_csv<W: std::io::Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "date,metric,n_states,value,gap_reason")?;
        for series in &self.series {
            for point in &series.points {
                let value = point.value.map(|v| format!("{v}")).unwrap_or_default();
                let gap = point.gap.map(|g| g.as_str()).unwrap_or_default();
                writeln!(
                    writer,
                    "{},{},{},{},{}",
                    point.date.format("%Y-%m-%d"),
                    series.metric.as_str(),
                    series.n_states,
                    value,
                    gap
                )?;
            }
        }
        Ok(())
    }
}

/// Evaluation of one window at one state count.
struct WindowEval<F> {
    d_prime: Result<DistanceReport<F>, GapReason>,
    d_bar: Result<DistanceReport<F>, GapReason>,
    moments: Option<(F, F)>,
}

/// Distance values (or gaps) per grid date, one column per route.
type DistanceColumns<F> = (usize, Vec<Result<F, GapReason>>, Vec<Result<F, GapReason>>);

fn eval_window<F: Scalar>(
    histories: &[RatingHistory],
    space: &StateSpace<F>,
    t: NaiveDate,
    params: &RollingParams,
) -> Result<WindowEval<F>, DiagnosticsError> {
    let n = space.n();
    let counts = match count_window::<F>(histories, n, t, params.tau_days, params.year_days) {
        Ok(counts) => counts,
        Err(EstimateError::EmptyWindowStart(_)) => {
            return Ok(WindowEval {
                d_prime: Err(GapReason::EmptyWindow),
                d_bar: Err(GapReason::EmptyWindow),
                moments: increment_moments(&rating_increments(histories, space, t, params.tau_days)),
            });
        }
        Err(other) => return Err(other.into()),
    };

    let cohort = cohort_estimate(&counts)?;
    let tau_years = lift::<F>(f64::from(params.tau_days) / params.year_days);

    let d_prime = match generator_estimate(&counts)
        .map_err(DiagnosticsError::from)
        .and_then(|q| matrix_exponential(&q, tau_years).map_err(DiagnosticsError::from))
    {
        Ok(exp_estimate) => match likelihood_distance(&counts, &cohort, &exp_estimate) {
            Ok(report) => Ok(report),
            Err(DiagnosticsError::NoAdmissibleCells) => Err(GapReason::NoAdmissibleCells),
            Err(other) => return Err(other),
        },
        Err(err) => {
            log::warn!("generator route failed at {t}: {err}");
            Err(GapReason::Numerical)
        }
    };

    let d_bar = match chapman_kolmogorov_estimate::<F>(
        histories,
        n,
        t,
        params.tau_days,
        params.k,
        params.year_days,
    ) {
        Ok(ck) => match likelihood_distance(&counts, &cohort, &ck) {
            Ok(report) => Ok(report),
            Err(DiagnosticsError::NoAdmissibleCells) => Err(GapReason::NoAdmissibleCells),
            Err(other) => return Err(other),
        },
        Err(EstimateError::EmptySubwindowStart { .. }) => Err(GapReason::EmptySubwindow),
        Err(other) => return Err(other.into()),
    };

    let moments = increment_moments(&rating_increments(histories, space, t, params.tau_days));
    Ok(WindowEval { d_prime, d_bar, moments })
}

/// Runs the full diagnostic battery over a date grid.
///
/// For every state count: coarsen the sample, then per grid date
/// estimate the cohort matrix, the exponential of the estimated
/// generator, and the Chapman-Kolmogorov product, and record both
/// distances plus increment moments. Deltas against the baseline
/// state count are added when the baseline is part of `state_counts`.
/// Windows that cannot be evaluated yield gap markers, never values.
pub fn rolling_diagnostics<F: Scalar>(
    histories: &[RatingHistory],
    source_n: usize,
    t_grid: &[NaiveDate],
    params: &RollingParams,
) -> Result<DiagnosticsBundle<F>, DiagnosticsError> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DiagnosticsError::BadTimeGrid);
    }
    if params.state_counts.is_empty() {
        return Err(DiagnosticsError::NoStateCounts);
    }
    if params.k == 0 || params.tau_days % params.k as u32 != 0 {
        return Err(EstimateError::IndivisibleWindow {
            tau_days: params.tau_days,
            k: params.k,
        }
        .into());
    }

    let mut series: Vec<DiagnosticSeries<F>> = Vec::new();
    let mut distance_table: Vec<DistanceColumns<F>> = Vec::new();

    for &n in &params.state_counts {
        let map = CoarseningMap::chain(source_n, n, params.merge_leftover)?;
        let coarse = coarsen_histories(histories, &map)?;
        let space = StateSpace::<F>::new(n)?;

        let evals: Vec<Result<WindowEval<F>, DiagnosticsError>> = if params.parallel {
            t_grid
                .par_iter()
                .map(|&t| eval_window(&coarse, &space, t, params))
                .collect()
        } else {
            t_grid
                .iter()
                .map(|&t| eval_window(&coarse, &space, t, params))
                .collect()
        };

        let mut d_prime = Vec::with_capacity(t_grid.len());
        let mut d_bar = Vec::with_capacity(t_grid.len());
        let mut prime_excluded = Vec::with_capacity(t_grid.len());
        let mut bar_excluded = Vec::with_capacity(t_grid.len());
        let mut inc_mean = Vec::with_capacity(t_grid.len());
        let mut inc_std = Vec::with_capacity(t_grid.len());
        let mut prime_values = Vec::with_capacity(t_grid.len());
        let mut bar_values = Vec::with_capacity(t_grid.len());

        for (&t, eval) in t_grid.iter().zip(evals) {
            let eval = eval?;
            match eval.d_prime {
                Ok(report) => {
                    d_prime.push(SeriesPoint::value(t, report.value));
                    prime_excluded.push(SeriesPoint::value(t, report.excluded_mass));
                    prime_values.push(Ok(report.value));
                }
                Err(reason) => {
                    d_prime.push(SeriesPoint::gap(t, reason));
                    prime_excluded.push(SeriesPoint::gap(t, reason));
                    prime_values.push(Err(reason));
                }
            }
            match eval.d_bar {
                Ok(report) => {
                    d_bar.push(SeriesPoint::value(t, report.value));
                    bar_excluded.push(SeriesPoint::value(t, report.excluded_mass));
                    bar_values.push(Ok(report.value));
                }
                Err(reason) => {
                    d_bar.push(SeriesPoint::gap(t, reason));
                    bar_excluded.push(SeriesPoint::gap(t, reason));
                    bar_values.push(Err(reason));
                }
            }
            match eval.moments {
                Some((mean, std)) => {
                    inc_mean.push(SeriesPoint::value(t, mean));
                    inc_std.push(SeriesPoint::value(t, std));
                }
                None => {
                    inc_mean.push(SeriesPoint::gap(t, GapReason::NoIncrements));
                    inc_std.push(SeriesPoint::gap(t, GapReason::NoIncrements));
                }
            }
        }

        for (metric, points) in [
            (Metric::DPrime, d_prime),
            (Metric::DPrimeExcludedMass, prime_excluded),
            (Metric::DBar, d_bar),
            (Metric::DBarExcludedMass, bar_excluded),
            (Metric::IncrementMean, inc_mean),
            (Metric::IncrementStd, inc_std),
        ] {
            series.push(DiagnosticSeries { metric, n_states: n, points });
        }
        distance_table.push((n, prime_values, bar_values));
    }

    if params.state_counts.contains(&params.baseline_n) {
        let baseline = distance_table
            .iter()
            .find(|(n, _, _)| *n == params.baseline_n)
            .cloned()
            .expect("baseline present in table");
        for (n, prime_values, bar_values) in &distance_table {
            if *n == params.baseline_n {
                continue;
            }
            let delta_series = |coarse: &[Result<F, GapReason>],
                                base: &[Result<F, GapReason>],
                                metric: Metric| {
                let points = t_grid
                    .iter()
                    .zip(coarse.iter().zip(base))
                    .map(|(&t, (c, b))| match (c, b) {
                        (Ok(dc), Ok(db)) => match delta_across_states(*db, *dc) {
                            Some(delta) => SeriesPoint::value(t, delta),
                            None => SeriesPoint::gap(t, GapReason::ZeroBaseline),
                        },
                        (Err(reason), _) => SeriesPoint::gap(t, *reason),
                        (_, Err(_)) => SeriesPoint::gap(t, GapReason::BaselineGap),
                    })
                    .collect();
                DiagnosticSeries { metric, n_states: *n, points }
            };
            series.push(delta_series(prime_values, &baseline.1, Metric::DeltaPrime));
            series.push(delta_series(bar_values, &baseline.2, Metric::DeltaBar));
        }
    }

    Ok(DiagnosticsBundle {
        tau_days: params.tau_days,
        k: params.k,
        year_days: params.year_days,
        baseline_n: params.baseline_n,
        state_counts: params.state_counts.clone(),
        merge_leftover: params.merge_leftover,
        series,
    })
}

/// Evenly spaced date grid from `from` to `to` inclusive of `from`,
/// stepping `step_days`; the last point never exceeds `to`.
pub fn date_grid(from: NaiveDate, to: NaiveDate, step_days: u32) -> Vec<NaiveDate> {
    let mut grid = Vec::new();
    let mut t = from;
    while t <= to {
        grid.push(t);
        t = t + Days::new(u64::from(step_days.max(1)));
    }
    grid
}
