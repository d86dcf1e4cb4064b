//! Monte Carlo benchmarking of the two estimation pipelines.
//!
//! A scenario is a (loading fraction, length scale) cell of a sweep. For
//! each cell the feeder is rescaled, a four-wire sweep power flow provides
//! the physical truth, and `MC` independent noisy meter sets are estimated
//! per requested mode. Errors against the truth are aggregated into three
//! metrics per cell and mode:
//!
//! - average maximum voltage error: mean over iterations of
//!   `max_j |V̂_j − V_j|`,
//! - average voltage error: mean over iterations of the RMS magnitude
//!   error over the compared terminals,
//! - average angle error: the same RMS form over the angle states.
//!
//! Both estimators are scored against the same four-wire truth on the
//! phase terminals they share; neutral states stay out of the metrics so
//! the modes remain comparable. Angles on both sides are tied to the same
//! fixed reference, so differences carry no constant offset.
//!
//! Iterations of one cell run in parallel; results are reduced in
//! iteration order, so a report is a pure function of (feeder, spec) and
//! is bit-identical across runs and worker counts. Wall-clock fields are
//! the one exception and are excluded from [`MetricsReport::fingerprint`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::{run_cwls, run_nwls, EstimationConfig};
use crate::metering::{derive_seed, exact_measurements, simulate_measurements, MeterSpecs};
use crate::netmodel::node_phase_base;
use crate::netmodel::{
    apply_scenario, load_feeder, GridModel, LoadModel, ModelError, WireMode,
};
use crate::powerflow::{solve_bfs, PowerFlowError, PowerFlowSolution};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("truth power flow failed: {0}")]
    Truth(#[from] PowerFlowError),
    #[error("scenario spec invalid: {0}")]
    Spec(String),
    #[error("metric input is empty")]
    EmptyMetricInput,
    #[error("report has no rows to export")]
    EmptyReport,
    #[error(
        "{excluded} of {mc} Monte Carlo iterations failed (limit 10%), first failure: {first}"
    )]
    TooManyFailures {
        excluded: usize,
        mc: usize,
        first: String,
    },
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean over iterations of the largest absolute error in each iteration.
/// `errors` holds one per-variable error vector per Monte Carlo iteration.
pub fn metric_avg_max_v(errors: &[Vec<f64>]) -> Result<f64, BenchError> {
    Ok(mean(&per_iteration_maxima(errors)?))
}

/// Mean over iterations of the per-iteration RMS magnitude error.
pub fn metric_avg_v(errors: &[Vec<f64>]) -> Result<f64, BenchError> {
    Ok(mean(&per_iteration_rms(errors)?))
}

/// Mean over iterations of the per-iteration RMS angle error. Same form as
/// [`metric_avg_v`] on angle differences in radians.
pub fn metric_avg_theta(errors: &[Vec<f64>]) -> Result<f64, BenchError> {
    Ok(mean(&per_iteration_rms(errors)?))
}

fn per_iteration_maxima(errors: &[Vec<f64>]) -> Result<Vec<f64>, BenchError> {
    if errors.is_empty() || errors.iter().any(Vec::is_empty) {
        return Err(BenchError::EmptyMetricInput);
    }
    Ok(errors
        .iter()
        .map(|e| e.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect())
}

fn per_iteration_rms(errors: &[Vec<f64>]) -> Result<Vec<f64>, BenchError> {
    if errors.is_empty() || errors.iter().any(Vec::is_empty) {
        return Err(BenchError::EmptyMetricInput);
    }
    Ok(errors
        .iter()
        .map(|e| (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt())
        .collect())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Smallest signed angle taking `a` to `b`'s frame, in (−π, π].
fn angle_difference(a: f64, b: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut d = (a - b) % tau;
    if d > std::f64::consts::PI {
        d -= tau;
    } else if d < -std::f64::consts::PI {
        d += tau;
    }
    d
}

/// Knobs shared by every cell of a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub specs: MeterSpecs,
    pub config: EstimationConfig,
    /// Draw meter noise. Disabled for noiseless sanity runs; σ weighting
    /// is kept either way.
    pub noisy: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            specs: MeterSpecs::residential(),
            config: EstimationConfig::default(),
            noisy: true,
        }
    }
}

/// One sweep cell: the rescaled feeder plus its four-wire truth, solved
/// once since the truth does not depend on the noise draws.
#[derive(Debug, Clone)]
pub struct ScenarioInstance {
    pub loading: f64,
    pub scale: f64,
    pub grid: GridModel,
    pub truth: PowerFlowSolution,
}

impl ScenarioInstance {
    pub fn prepare(
        base: &GridModel,
        loading: f64,
        scale: f64,
        power_factor: f64,
        truth_model: LoadModel,
        options: &BenchOptions,
    ) -> Result<ScenarioInstance, BenchError> {
        let mut grid = apply_scenario(base, loading, scale, power_factor)?;
        for load in &mut grid.loads {
            load.model = truth_model;
        }
        let truth = solve_bfs(&grid, &grid.loads, WireMode::FourWire, &options.config.bfs)?;
        Ok(ScenarioInstance {
            loading,
            scale,
            grid,
            truth,
        })
    }
}

/// Aggregated outcome of one (cell, mode) Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub loading: f64,
    pub scale: f64,
    pub mode: WireMode,
    /// Iterations requested.
    pub mc: usize,
    /// Iterations that failed or did not converge; excluded from every
    /// aggregate below.
    pub excluded: usize,
    pub avg_max_v_pu: f64,
    pub std_max_v_pu: f64,
    pub avg_v_pu: f64,
    pub std_v_pu: f64,
    pub avg_theta_rad: f64,
    pub std_theta_rad: f64,
    pub mean_iterations: f64,
    pub mean_wall_ms: f64,
    /// First failure message, when any iteration was excluded.
    pub note: Option<String>,
}

impl MetricsRow {
    /// Conventional three-wire runs are labeled C, four-wire runs N.
    pub fn mode_label(&self) -> &'static str {
        match self.mode {
            WireMode::ThreeWire => "C",
            WireMode::FourWire => "N",
        }
    }
}

struct IterationOutcome {
    v_errors: Vec<f64>,
    theta_errors: Vec<f64>,
    iterations: usize,
    wall_ms: f64,
}

/// Runs `mc` independent estimations of one scenario cell in one mode.
/// Per-iteration seeds derive from `master_seed`, so the row is
/// reproducible and independent of the worker count. Fails when more than
/// 10% of the iterations fail.
pub fn run_monte_carlo(
    instance: &ScenarioInstance,
    mode: WireMode,
    mc: usize,
    master_seed: u64,
    options: &BenchOptions,
) -> Result<MetricsRow, BenchError> {
    if mc == 0 {
        return Err(BenchError::Spec("Monte Carlo count must be at least 1".into()));
    }
    let outcomes: Vec<Result<IterationOutcome, String>> = (0..mc)
        .into_par_iter()
        .map(|i| run_iteration(instance, mode, derive_seed(master_seed, i as u64), options))
        .collect();

    // Reduction stays sequential and in iteration order; this is what
    // makes the row independent of scheduling.
    let mut v_errors = Vec::new();
    let mut theta_errors = Vec::new();
    let mut iteration_counts = Vec::new();
    let mut wall_ms = Vec::new();
    let mut excluded = 0usize;
    let mut note = None;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                v_errors.push(o.v_errors);
                theta_errors.push(o.theta_errors);
                iteration_counts.push(o.iterations as f64);
                wall_ms.push(o.wall_ms);
            }
            Err(msg) => {
                excluded += 1;
                note.get_or_insert(msg);
            }
        }
    }
    if excluded * 10 > mc {
        return Err(BenchError::TooManyFailures {
            excluded,
            mc,
            first: note.unwrap_or_default(),
        });
    }

    let maxima = per_iteration_maxima(&v_errors)?;
    let rms_v = per_iteration_rms(&v_errors)?;
    let rms_theta = per_iteration_rms(&theta_errors)?;
    Ok(MetricsRow {
        loading: instance.loading,
        scale: instance.scale,
        mode,
        mc,
        excluded,
        avg_max_v_pu: metric_avg_max_v(&v_errors)?,
        std_max_v_pu: sample_std(&maxima),
        avg_v_pu: metric_avg_v(&v_errors)?,
        std_v_pu: sample_std(&rms_v),
        avg_theta_rad: metric_avg_theta(&theta_errors)?,
        std_theta_rad: sample_std(&rms_theta),
        mean_iterations: mean(&iteration_counts),
        mean_wall_ms: mean(&wall_ms),
        note,
    })
}

fn run_iteration(
    instance: &ScenarioInstance,
    mode: WireMode,
    seed: u64,
    options: &BenchOptions,
) -> Result<IterationOutcome, String> {
    let ms = if options.noisy {
        simulate_measurements(&instance.truth, &instance.grid, &options.specs, seed)
    } else {
        exact_measurements(&instance.truth, &instance.grid, &options.specs)
    }
    .map_err(|e| e.to_string())?;

    let result = match mode {
        WireMode::ThreeWire => run_cwls(&instance.grid, &ms, &options.config),
        WireMode::FourWire => run_nwls(&instance.grid, &ms, &options.config),
    }
    .map_err(|e| e.to_string())?;
    if !result.converged {
        return Err(format!(
            "estimation did not converge in {} iterations",
            result.iterations
        ));
    }

    let mut v_errors = Vec::new();
    let mut theta_errors = Vec::new();
    for s in &result.states {
        if s.phase.is_neutral() {
            continue;
        }
        let Some(truth_v) = instance.truth.voltage(s.node, s.phase) else {
            continue;
        };
        let base = node_phase_base(&instance.grid, s.node);
        v_errors.push((s.vmag_pu - truth_v.norm() / base).abs());
        theta_errors.push(angle_difference(s.theta_rad, truth_v.arg()).abs());
    }
    Ok(IterationOutcome {
        v_errors,
        theta_errors,
        iterations: result.iterations,
        wall_ms: result.wall_time.as_secs_f64() * 1e3,
    })
}

/// A full sweep request: which feeder, which cells, how many draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Feeder path, or `builtin:<name>`.
    pub feeder: String,
    pub loadings: Vec<f64>,
    pub scales: Vec<f64>,
    /// Lagging power factor applied when rescaling loads.
    pub power_factor: f64,
    pub mc: usize,
    pub seed: u64,
    pub modes: Vec<WireMode>,
    /// Load model the truth power flow uses.
    pub truth: LoadModel,
}

impl ScenarioSpec {
    pub fn new(feeder: impl Into<String>) -> ScenarioSpec {
        ScenarioSpec {
            feeder: feeder.into(),
            loadings: vec![0.25, 0.5, 0.75, 1.0],
            scales: vec![0.5, 1.0, 2.0, 5.0],
            power_factor: 0.95,
            mc: 500,
            seed: 1,
            modes: vec![WireMode::ThreeWire, WireMode::FourWire],
            truth: LoadModel::ConstantPower,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.feeder.is_empty() {
            return Err(BenchError::Spec("no feeder given".into()));
        }
        if self.loadings.is_empty() || self.scales.is_empty() {
            return Err(BenchError::Spec(
                "loading and scale lists must be non-empty".into(),
            ));
        }
        if self.mc == 0 {
            return Err(BenchError::Spec("mc must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(BenchError::Spec("no estimator modes requested".into()));
        }
        Ok(())
    }

    /// Parses the sectioned sweep format: a `[sweep]` section of
    /// `key = value` lines with `#` comments. Lists are comma separated.
    pub fn parse(text: &str) -> Result<ScenarioSpec, BenchError> {
        let mut spec = ScenarioSpec::new("");
        let mut in_sweep = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(section) = line.strip_prefix('[') {
                let name = section.strip_suffix(']').ok_or_else(|| {
                    BenchError::Spec(format!("line {}: unterminated section header", lineno + 1))
                })?;
                if name != "sweep" {
                    return Err(BenchError::Spec(format!(
                        "line {}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                in_sweep = true;
                continue;
            }
            if !in_sweep {
                return Err(BenchError::Spec(format!(
                    "line {}: expected a [sweep] section before any keys",
                    lineno + 1
                )));
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BenchError::Spec(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let context = |what: &str| {
                BenchError::Spec(format!("line {}: bad {what}: {value}", lineno + 1))
            };
            match key {
                "feeder" => spec.feeder = value.to_string(),
                "loadings" => spec.loadings = parse_f64_list(value).ok_or_else(|| context("loading list"))?,
                "scales" => spec.scales = parse_f64_list(value).ok_or_else(|| context("scale list"))?,
                "pf" => {
                    spec.power_factor = value.parse().map_err(|_| context("power factor"))?;
                }
                "mc" => spec.mc = value.parse().map_err(|_| context("mc count"))?,
                "seed" => spec.seed = value.parse().map_err(|_| context("seed"))?,
                "modes" => {
                    let mut modes = Vec::new();
                    for item in value.split(',') {
                        modes.push(match item.trim() {
                            "C" | "c" => WireMode::ThreeWire,
                            "N" | "n" => WireMode::FourWire,
                            other => {
                                return Err(BenchError::Spec(format!(
                                    "line {}: unknown mode {other}, expected C or N",
                                    lineno + 1
                                )))
                            }
                        });
                    }
                    spec.modes = modes;
                }
                "truth" => {
                    spec.truth = match value {
                        "constant-power" => LoadModel::ConstantPower,
                        "constant-impedance" => LoadModel::ConstantImpedance,
                        other => {
                            return Err(BenchError::Spec(format!(
                                "line {}: unknown truth model {other}",
                                lineno + 1
                            )))
                        }
                    };
                }
                other => {
                    return Err(BenchError::Spec(format!(
                        "line {}: unknown key {other}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(spec)
    }

    pub fn from_file(path: &str) -> Result<ScenarioSpec, BenchError> {
        let text = std::fs::read_to_string(path)?;
        ScenarioSpec::parse(&text)
    }
}

fn parse_f64_list(value: &str) -> Option<Vec<f64>> {
    let items: Option<Vec<f64>> = value
        .split(',')
        .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect();
    items.filter(|v| !v.is_empty())
}

/// A cell the sweep could not score, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedCell {
    pub loading: f64,
    pub scale: f64,
    pub mode: WireMode,
    pub message: String,
}

/// Sweep outcome: one row per scored (cell, mode), failed cells marked
/// separately.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<FailedCell>,
}

/// Runs the full loadings × scales × modes product of `spec`.
/// Cell failures are recorded and the sweep continues.
pub fn run_scenario_sweep(spec: &ScenarioSpec) -> Result<MetricsReport, BenchError> {
    run_scenario_sweep_with(spec, &BenchOptions::default(), |_| {})
}

/// [`run_scenario_sweep`] with explicit options and a callback invoked as
/// each row completes, for incremental progress output.
pub fn run_scenario_sweep_with(
    spec: &ScenarioSpec,
    options: &BenchOptions,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<MetricsReport, BenchError> {
    spec.validate()?;
    let base = load_feeder(&spec.feeder)?;
    let mut report = MetricsReport::default();
    for &loading in &spec.loadings {
        for &scale in &spec.scales {
            let instance = match ScenarioInstance::prepare(
                &base,
                loading,
                scale,
                spec.power_factor,
                spec.truth,
                options,
            ) {
                Ok(instance) => instance,
                Err(e) => {
                    for &mode in &spec.modes {
                        report.failures.push(FailedCell {
                            loading,
                            scale,
                            mode,
                            message: e.to_string(),
                        });
                    }
                    continue;
                }
            };
            for &mode in &spec.modes {
                match run_monte_carlo(&instance, mode, spec.mc, spec.seed, options) {
                    Ok(row) => {
                        on_row(&row);
                        report.rows.push(row);
                    }
                    Err(e) => report.failures.push(FailedCell {
                        loading,
                        scale,
                        mode,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    Ok(report)
}

/// Percentage by which `proposed` improves on `conventional`,
/// 100·(1 − proposed/conventional). None when the baseline is zero.
pub fn improvement_percent(conventional: f64, proposed: f64) -> Option<f64> {
    (conventional != 0.0).then(|| 100.0 * (1.0 - proposed / conventional))
}

impl MetricsReport {
    /// One CSV line per row; column order is documented in
    /// `docs/formats.md`. Failed cells are appended as comment lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "loading,scale,mode,mc,excluded,avg_max_v_pu,std_max_v_pu,avg_v_pu,std_v_pu,\
             avg_theta_rad,std_theta_rad,mean_iterations,mean_wall_ms\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.loading,
                r.scale,
                r.mode_label(),
                r.mc,
                r.excluded,
                r.avg_max_v_pu,
                r.std_max_v_pu,
                r.avg_v_pu,
                r.std_v_pu,
                r.avg_theta_rad,
                r.std_theta_rad,
                r.mean_iterations,
                r.mean_wall_ms,
            );
        }
        for f in &self.failures {
            let _ = writeln!(
                out,
                "# failed: loading {} scale {} mode {}: {}",
                f.loading,
                f.scale,
                mode_label(f.mode),
                f.message
            );
        }
        out
    }

    /// Human-readable comparison table, including the N-over-C improvement
    /// per metric for every cell that carries both modes.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>4} {:>5} {:>4}  {:>12} {:>12} {:>12} {:>8} {:>9}",
            "loading", "scale", "mode", "mc", "excl", "avg_max_v", "avg_v", "avg_theta", "iters", "wall_ms"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>8} {:>6} {:>4} {:>5} {:>4}  {:>12.4e} {:>12.4e} {:>12.4e} {:>8.2} {:>9.2}",
                r.loading,
                r.scale,
                r.mode_label(),
                r.mc,
                r.excluded,
                r.avg_max_v_pu,
                r.avg_v_pu,
                r.avg_theta_rad,
                r.mean_iterations,
                r.mean_wall_ms,
            );
            if let Some(note) = &r.note {
                let _ = writeln!(out, "         note: {note}");
            }
        }
        for f in &self.failures {
            let _ = writeln!(
                out,
                "failed: loading {} scale {} mode {}: {}",
                f.loading,
                f.scale,
                mode_label(f.mode),
                f.message
            );
        }
        let mut wrote_header = false;
        for pair in self.mode_pairs() {
            let (c, n) = pair;
            if !wrote_header {
                let _ = writeln!(out, "\nN over C improvement (100·(1 − N/C)):");
                wrote_header = true;
            }
            let _ = writeln!(
                out,
                "  loading {} scale {}: max|dV| {}, rms dV {}, rms dtheta {}",
                c.loading,
                c.scale,
                fmt_improvement(improvement_percent(c.avg_max_v_pu, n.avg_max_v_pu)),
                fmt_improvement(improvement_percent(c.avg_v_pu, n.avg_v_pu)),
                fmt_improvement(improvement_percent(c.avg_theta_rad, n.avg_theta_rad)),
            );
        }
        out
    }

    /// Per-metric plot files: `(file name, CSV content)` with one row per
    /// cell and one value column per mode.
    pub fn plotdata(&self) -> Vec<(String, String)> {
        let metrics: [(&str, fn(&MetricsRow) -> f64); 3] = [
            ("avg_max_v_pu", |r| r.avg_max_v_pu),
            ("avg_v_pu", |r| r.avg_v_pu),
            ("avg_theta_rad", |r| r.avg_theta_rad),
        ];
        let cells = self.cells();
        metrics
            .iter()
            .map(|(name, get)| {
                let mut content = String::from("loading,scale,C,N\n");
                for &(loading, scale) in &cells {
                    let cell_value = |mode| {
                        self.find(loading, scale, mode)
                            .map(|r| get(r).to_string())
                            .unwrap_or_default()
                    };
                    let _ = writeln!(
                        content,
                        "{},{},{},{}",
                        loading,
                        scale,
                        cell_value(WireMode::ThreeWire),
                        cell_value(WireMode::FourWire),
                    );
                }
                (format!("plot_{name}.csv"), content)
            })
            .collect()
    }

    /// Canonical digest of everything the benchmark computes, with exact
    /// float bit patterns. Wall-clock fields are environmental and left
    /// out; two runs of the same spec must produce equal fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = write!(
                out,
                "{:016x}:{:016x}:{}:{}:{}",
                r.loading.to_bits(),
                r.scale.to_bits(),
                r.mode_label(),
                r.mc,
                r.excluded,
            );
            for v in [
                r.avg_max_v_pu,
                r.std_max_v_pu,
                r.avg_v_pu,
                r.std_v_pu,
                r.avg_theta_rad,
                r.std_theta_rad,
                r.mean_iterations,
            ] {
                let _ = write!(out, ":{:016x}", v.to_bits());
            }
            let _ = writeln!(out, ":{}", r.note.as_deref().unwrap_or(""));
        }
        for f in &self.failures {
            let _ = writeln!(
                out,
                "failed:{:016x}:{:016x}:{}:{}",
                f.loading.to_bits(),
                f.scale.to_bits(),
                mode_label(f.mode),
                f.message
            );
        }
        out
    }

    pub fn find(&self, loading: f64, scale: f64, mode: WireMode) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.loading == loading && r.scale == scale && r.mode == mode)
    }

    /// Distinct (loading, scale) cells in first-appearance order.
    fn cells(&self) -> Vec<(f64, f64)> {
        let mut cells: Vec<(f64, f64)> = Vec::new();
        for r in &self.rows {
            if !cells.iter().any(|&(l, s)| l == r.loading && s == r.scale) {
                cells.push((r.loading, r.scale));
            }
        }
        cells
    }

    /// (C row, N row) pairs for cells scored in both modes.
    fn mode_pairs(&self) -> Vec<(&MetricsRow, &MetricsRow)> {
        self.cells()
            .into_iter()
            .filter_map(|(l, s)| {
                Some((
                    self.find(l, s, WireMode::ThreeWire)?,
                    self.find(l, s, WireMode::FourWire)?,
                ))
            })
            .collect()
    }
}

fn mode_label(mode: WireMode) -> &'static str {
    match mode {
        WireMode::ThreeWire => "C",
        WireMode::FourWire => "N",
    }
}

fn fmt_improvement(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.1}%"),
        None => "n/a".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
    Plotdata,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<ReportFormat, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "table" => Ok(ReportFormat::Table),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(format!("unknown format {other}, expected csv, table or plotdata")),
        }
    }
}

/// Writes the report under `out_dir` and returns the files created.
pub fn export_report(
    report: &MetricsReport,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, BenchError> {
    if report.rows.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    std::fs::create_dir_all(out_dir)?;
    let files: Vec<(String, String)> = match format {
        ReportFormat::Csv => vec![("report.csv".into(), report.to_csv())],
        ReportFormat::Table => vec![("report.txt".into(), report.to_table())],
        ReportFormat::Plotdata => report.plotdata(),
    };
    let mut written = Vec::new();
    for (name, content) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}
