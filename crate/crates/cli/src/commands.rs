//! Command implementations. All numerics live in the core crate; this
//! layer parses inputs, wires the pipeline together, and writes files.

use std::path::Path;

use ratemig_core::diagnostics::{
    date_grid, rolling_diagnostics, DiagnosticsBundle, Metric, RollingParams,
};
use ratemig_core::estimators::{
    chapman_kolmogorov_estimate, cohort_estimate, count_window, generator_estimate,
    MatrixDocument, TransitionCounts,
};
use ratemig_core::expm::matrix_exponential;
use ratemig_core::ingest::{parse_history_file, IngestConfig, RatingHistory};
use ratemig_core::matrix::GeneratorMatrix;
use ratemig_core::scalar::lift;
use ratemig_core::simulate::simulate;
use ratemig_core::statespace::{coarsen_histories, CoarseningMap};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{
    CommandParams, CompareParams, EstimateParams, Manifest, MethodKind, SimulateParams,
};
use crate::output::{to_json_bytes, write_atomic};

fn load_histories(
    params: &crate::manifest::DataParams,
) -> Result<(Vec<RatingHistory>, IngestConfig), CliError> {
    let config = params.ingest_config();
    let histories = parse_history_file(&params.input, &config)?;
    Ok((histories, config))
}

fn write_matrix_files<F: ratemig_core::Scalar + Serialize>(
    out_dir: &Path,
    stem: &str,
    doc: &MatrixDocument<F>,
) -> Result<(), CliError> {
    write_atomic(&out_dir.join(format!("{stem}.json")), &to_json_bytes(doc))?;
    let mut csv = Vec::new();
    doc.write_csv(&mut csv)?;
    write_atomic(&out_dir.join(format!("{stem}.csv")), &csv)?;
    Ok(())
}

pub fn run_estimate(params: EstimateParams, out_dir: &Path) -> Result<(), CliError> {
    let (histories, _) = load_histories(&params.data)?;
    let source_n = params.data.scale.n();
    let chain = CoarseningMap::chain(source_n, params.states, params.merge_leftover)?;
    let histories = coarsen_histories(&histories, &chain)?;

    let counts: TransitionCounts<f64> = count_window(
        &histories,
        params.states,
        params.at,
        params.tau_days,
        params.year_days,
    )?;
    let tau_years = f64::from(params.tau_days) / params.year_days;
    let document = |method: &str, subwindows: Option<usize>, rows: Vec<Vec<f64>>| MatrixDocument {
        method: method.to_owned(),
        n: params.states,
        t: params.at,
        tau_days: params.tau_days,
        year_days: params.year_days,
        subwindows,
        rows,
    };

    for method in &params.methods {
        match method {
            MethodKind::Cohort => {
                let t = cohort_estimate(&counts)?;
                write_matrix_files(out_dir, "transition_cohort", &document("cohort", None, t.to_rows()))?;
            }
            MethodKind::Generator => {
                let q = generator_estimate(&counts)?;
                write_matrix_files(out_dir, "generator", &document("generator", None, q.to_rows()))?;
                let t = matrix_exponential(&q, tau_years)?;
                write_matrix_files(
                    out_dir,
                    "transition_generator",
                    &document("generator_exp", None, t.to_rows()),
                )?;
            }
            MethodKind::ChapmanKolmogorov => {
                let t = chapman_kolmogorov_estimate::<f64>(
                    &histories,
                    params.states,
                    params.at,
                    params.tau_days,
                    params.k,
                    params.year_days,
                )?;
                write_matrix_files(
                    out_dir,
                    "transition_chapman_kolmogorov",
                    &document("chapman_kolmogorov", Some(params.k), t.to_rows()),
                )?;
            }
        }
    }

    let manifest = Manifest::new(CommandParams::Estimate(params));
    write_atomic(&out_dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(())
}

fn run_rolling(params: &CompareParams) -> Result<DiagnosticsBundle<f64>, CliError> {
    let (histories, _) = load_histories(&params.data)?;
    let grid = date_grid(params.grid_start, params.grid_end, params.grid_step_days);
    if grid.is_empty() {
        return Err(CliError::Input(format!(
            "empty grid: {} to {}",
            params.grid_start, params.grid_end
        )));
    }
    let rolling = RollingParams {
        tau_days: params.tau_days,
        k: params.k,
        year_days: params.year_days,
        state_counts: params.state_counts.clone(),
        baseline_n: params.baseline_n,
        merge_leftover: params.merge_leftover,
        parallel: !params.serial,
    };
    let bundle =
        rolling_diagnostics::<f64>(&histories, params.data.scale.n(), &grid, &rolling)?;
    Ok(bundle)
}

fn all_distance_points_are_gaps(bundle: &DiagnosticsBundle<f64>) -> bool {
    bundle
        .series
        .iter()
        .filter(|s| matches!(s.metric, Metric::DPrime | Metric::DBar))
        .all(|s| s.points.iter().all(|p| p.value.is_none()))
}

fn write_bundle(out_dir: &Path, stem: &str, bundle: &DiagnosticsBundle<f64>) -> Result<(), CliError> {
    write_atomic(&out_dir.join(format!("{stem}.json")), &to_json_bytes(bundle))?;
    let mut csv = Vec::new();
    bundle.write_csv(&mut csv)?;
    write_atomic(&out_dir.join(format!("{stem}.csv")), &csv)?;
    Ok(())
}

pub fn run_compare(params: CompareParams, out_dir: &Path) -> Result<(), CliError> {
    let bundle = run_rolling(&params)?;
    if all_distance_points_are_gaps(&bundle) {
        return Err(CliError::Numeric(
            "no window produced a distance value (all gaps)".into(),
        ));
    }
    write_bundle(out_dir, "diagnostics", &bundle)?;
    let manifest = Manifest::new(CommandParams::Compare(params));
    write_atomic(&out_dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(())
}

/// Delta-series output document; the note explains an empty sweep.
#[derive(Serialize)]
struct SweepDocument<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
    #[serde(flatten)]
    bundle: &'a DiagnosticsBundle<f64>,
}

pub fn run_sweep_states(params: CompareParams, out_dir: &Path) -> Result<(), CliError> {
    if !params.state_counts.contains(&params.baseline_n) {
        return Err(CliError::Input(format!(
            "the sweep baseline ({} states) must be part of --states",
            params.baseline_n
        )));
    }
    let bundle = run_rolling(&params)?;
    if all_distance_points_are_gaps(&bundle) {
        return Err(CliError::Numeric(
            "no window produced a distance value (all gaps)".into(),
        ));
    }

    let subset = |metrics: &[Metric]| DiagnosticsBundle::<f64> {
        tau_days: bundle.tau_days,
        k: bundle.k,
        year_days: bundle.year_days,
        baseline_n: bundle.baseline_n,
        state_counts: bundle.state_counts.clone(),
        merge_leftover: bundle.merge_leftover,
        series: bundle
            .series
            .iter()
            .filter(|s| metrics.contains(&s.metric))
            .cloned()
            .collect(),
    };

    let distances = subset(&[Metric::DPrime, Metric::DBar]);
    write_bundle(out_dir, "distances", &distances)?;

    let deltas = subset(&[Metric::DeltaPrime, Metric::DeltaBar]);
    let note = deltas.series.is_empty().then_some(
        "only the baseline state count was requested, so there is no delta series",
    );
    if let Some(note) = note {
        log::warn!("{note}");
    }
    write_atomic(
        &out_dir.join("deltas.json"),
        &to_json_bytes(&SweepDocument { note, bundle: &deltas }),
    )?;
    let mut csv = Vec::new();
    deltas.write_csv(&mut csv)?;
    write_atomic(&out_dir.join("deltas.csv"), &csv)?;

    let manifest = Manifest::new(CommandParams::SweepStates(params));
    write_atomic(&out_dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(())
}

pub fn run_simulate(params: SimulateParams, out_file: &Path) -> Result<(), CliError> {
    let histories = simulate(&params.config)?;
    let ingest = IngestConfig {
        study_start: params.config.start,
        study_end: params.config.end(),
        scale: params.scale,
        ..Default::default()
    };
    // Write through a buffer so the file lands atomically like every
    // other artifact.
    let mut buf = Vec::new();
    ratemig_core::ingest::write_histories_csv(&mut buf, &histories, &ingest)?;
    write_atomic(out_file, &buf)?;

    let manifest = Manifest::new(CommandParams::Simulate(params));
    let manifest_path = manifest_path_for(out_file);
    write_atomic(&manifest_path, manifest.to_json().as_bytes())?;
    Ok(())
}

/// `sample.csv` -> `sample.manifest.json` next to it.
pub fn manifest_path_for(out_file: &Path) -> std::path::PathBuf {
    let stem = out_file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".to_owned());
    out_file.with_file_name(format!("{stem}.manifest.json"))
}

/// Nearest-neighbour generator used when `simulate` runs from flags:
/// total exit rate `rate` split 45% up / 55% down at interior states.
pub fn default_generator(n: usize, rate: f64) -> Result<GeneratorMatrix<f64>, CliError> {
    let mut rates = vec![0.0; n * n];
    for i in 0..n {
        let up = rate * 0.45;
        let down = rate * 0.55;
        if i + 1 < n {
            rates[i * n + i + 1] = up;
        }
        if i > 0 {
            rates[i * n + i - 1] = down;
        }
    }
    Ok(GeneratorMatrix::from_off_diagonal(n, rates)?)
}

/// Stressed regime for the flag-driven regime-switching mode:
/// downgrades scaled up by `stress`, upgrades scaled down by it.
pub fn stressed_generator(n: usize, rate: f64, stress: f64) -> Result<GeneratorMatrix<f64>, CliError> {
    let mut rates = vec![0.0; n * n];
    for i in 0..n {
        let up = rate * 0.45 / stress;
        let down = rate * 0.55 * stress;
        if i + 1 < n {
            rates[i * n + i + 1] = up;
        }
        if i > 0 {
            rates[i * n + i - 1] = down;
        }
    }
    Ok(GeneratorMatrix::from_off_diagonal(n, rates)?)
}

/// Transition matrix for the flag-driven discrete mode: the default
/// generator exponentiated over one step.
pub fn default_step_matrix(
    n: usize,
    rate: f64,
    step_days: u32,
    year_days: f64,
) -> Result<ratemig_core::StochasticMatrix64, CliError> {
    let q = default_generator(n, rate)?;
    Ok(matrix_exponential(&q, lift::<f64>(f64::from(step_days) / year_days))?)
}
