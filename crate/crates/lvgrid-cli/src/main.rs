//! Batch front end for the `lvgrid` library: line parameter inspection,
//! power flow, single estimation runs, and Monte Carlo benchmark sweeps.
//!
//! Data goes to stdout (or `--out`); progress and diagnostics go to stderr.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lvgrid::bench::{
    export_report, run_scenario_sweep_with, BenchOptions, MetricsRow, ReportFormat, ScenarioSpec,
};
use lvgrid::estimator::{run_cwls, run_nwls, EstimationConfig, EstimationResult};
use lvgrid::metering::{exact_measurements, simulate_measurements, MeterSpecs};
use lvgrid::netmodel::{
    apply_scenario, kron_reduce, load_feeder, GridModel, LineImpedance, LoadModel, WireMode,
};
use lvgrid::powerflow::{solve_bfs, PowerFlowSolution};

const DEFAULT_FEEDER: &str = "builtin:suburban-lv";

#[derive(Parser)]
#[command(
    name = "lvgrid",
    version,
    about = "Power flow and state estimation for four-wire low-voltage feeders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct Shared {
    /// Feeder file, or builtin:<name> [default: builtin:suburban-lv]
    #[arg(long, global = true)]
    feeder: Option<String>,

    /// Master seed for measurement noise [default: 1]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Estimator mode: C (three-wire) or N (four-wire) [default: N]
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<WireMode>,

    /// Output file; for bench, the report directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Per-iteration estimator diagnostics on stderr
    #[arg(long, global = true)]
    trace: bool,
}

impl Shared {
    fn feeder(&self) -> &str {
        self.feeder.as_deref().unwrap_or(DEFAULT_FEEDER)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    fn mode(&self) -> WireMode {
        self.mode.unwrap_or(WireMode::FourWire)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print per-km series impedance matrices for every line type of a feeder
    Lineparams,
    /// Solve one backward/forward-sweep power flow and print terminal voltages
    Pf(ScenarioArgs),
    /// Simulate one metered snapshot and run a single state estimation
    Estimate(EstimateArgs),
    /// Run a Monte Carlo scenario sweep and export the error metrics
    Bench(BenchArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Rescale loads to this fraction of the transformer rating first
    #[arg(long)]
    loading: Option<f64>,

    /// Multiply branch lengths by this factor first
    #[arg(long, default_value_t = 1.0)]
    scale: f64,

    /// Lagging power factor applied when rescaling loads
    #[arg(long, default_value_t = 0.95)]
    pf: f64,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Suppress meter noise; values equal the truth, sigma weights kept
    #[arg(long)]
    noiseless: bool,

    /// Write the simulated meter records to this CSV file
    #[arg(long)]
    measurements_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep file with a [sweep] section; flags below override its values
    #[arg(long)]
    scenario: Option<PathBuf>,

    /// Comma-separated loading fractions
    #[arg(long)]
    loadings: Option<String>,

    /// Comma-separated branch length scales
    #[arg(long)]
    scales: Option<String>,

    /// Monte Carlo draws per sweep cell
    #[arg(long)]
    mc: Option<usize>,

    /// Lagging power factor applied when rescaling loads
    #[arg(long)]
    pf: Option<f64>,

    /// Estimator modes to run, comma separated (C,N)
    #[arg(long)]
    modes: Option<String>,

    /// Truth load model: constant-power or constant-impedance
    #[arg(long)]
    truth: Option<String>,

    /// Report format written under --out: csv, table or plotdata
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ReportFormat,
}

fn parse_mode(s: &str) -> Result<WireMode, String> {
    match s {
        "C" | "c" | "threewire" | "3" => Ok(WireMode::ThreeWire),
        "N" | "n" | "fourwire" | "4" => Ok(WireMode::FourWire),
        other => Err(format!("unknown mode {other}, expected C or N")),
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn parse_f64_list(value: &str, what: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|item| {
            item.trim()
                .parse::<f64>()
                .with_context(|| format!("bad {what} entry {:?}", item.trim()))
        })
        .collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Lineparams => cmd_lineparams(&cli.shared),
        Command::Pf(args) => cmd_pf(&cli.shared, args),
        Command::Estimate(args) => cmd_estimate(&cli.shared, args),
        Command::Bench(args) => cmd_bench(&cli.shared, args),
    }
}

/// Writes `content` to `--out` when given, otherwise to stdout.
fn deliver(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

/// Applies the optional loading/length rescale to a loaded feeder. Without
/// `--loading` the feeder's own loads are kept and only lengths scale.
fn scenario_grid(base: GridModel, args: &ScenarioArgs) -> Result<GridModel> {
    match args.loading {
        Some(fraction) => Ok(apply_scenario(&base, fraction, args.scale, args.pf)?),
        None if args.scale != 1.0 => {
            let mut grid = base;
            for branch in &mut grid.branches {
                branch.length_km *= args.scale;
            }
            Ok(grid)
        }
        None => Ok(base),
    }
}

/// Phase-to-ground voltage base at a node: the MV base on the transformer
/// primary, the LV base everywhere else.
fn phase_base_v(grid: &GridModel, node: usize) -> f64 {
    match &grid.transformer {
        Some(link) if link.primary == node => link.model.primary_phase_base(),
        _ => grid.lv_phase_base_v(),
    }
}

fn cmd_lineparams(shared: &Shared) -> Result<()> {
    let grid = load_feeder(shared.feeder())?;
    let mut out = String::from("linetype,form,row,col,r_ohm_per_km,x_ohm_per_km\n");
    for (name, line) in &grid.line_types {
        push_impedance_rows(&mut out, name, "full", line);
        if line.has_neutral() {
            let reduced = kron_reduce(line)?;
            push_impedance_rows(&mut out, name, "kron", &reduced);
        }
    }
    deliver(&shared.out, &out)
}

fn push_impedance_rows(out: &mut String, name: &str, form: &str, line: &LineImpedance) {
    let z = line.matrix();
    for (i, row) in line.roles().iter().enumerate() {
        for (j, col) in line.roles().iter().enumerate() {
            out.push_str(&format!(
                "{name},{form},{row},{col},{:.12e},{:.12e}\n",
                z[(i, j)].re,
                z[(i, j)].im
            ));
        }
    }
}

fn cmd_pf(shared: &Shared, args: &ScenarioArgs) -> Result<()> {
    let grid = scenario_grid(load_feeder(shared.feeder())?, args)?;
    let mode = shared.mode();
    let config = EstimationConfig::default();
    let solution = solve_bfs(&grid, &grid.loads, mode, &config.bfs)?;

    let slack = solution.slack_va();
    let mut out = String::new();
    out.push_str(&format!(
        "# mode: {}, iterations: {}, slack_p_w: {:.3}, slack_q_var: {:.3}, max_neutral_pu: {:.6e}\n",
        mode.letter(),
        solution.iterations(),
        slack.re,
        slack.im,
        solution.max_neutral_pu()
    ));
    out.push_str("node,phase,vmag_v,vmag_pu,theta_rad\n");
    for &(node, phase) in solution.index().terminals() {
        let v = solution.voltage(node, phase).expect("terminal from own index");
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e}\n",
            grid.nodes[node].id,
            phase,
            v.norm(),
            v.norm() / phase_base_v(&grid, node),
            v.arg()
        ));
    }
    deliver(&shared.out, &out)
}

/// Largest per-terminal voltage magnitude error of an estimate against the
/// four-wire reference solution, pu.
fn max_voltage_error_pu(
    result: &EstimationResult,
    truth: &PowerFlowSolution,
    grid: &GridModel,
) -> f64 {
    result
        .states
        .iter()
        .filter_map(|s| {
            let v = truth.voltage(s.node, s.phase)?;
            Some((s.vmag_pu - v.norm() / phase_base_v(grid, s.node)).abs())
        })
        .fold(0.0, f64::max)
}

fn cmd_estimate(shared: &Shared, args: &EstimateArgs) -> Result<()> {
    let grid = scenario_grid(load_feeder(shared.feeder())?, &args.scenario)?;
    let config = EstimationConfig::default();
    let specs = MeterSpecs::residential();
    let seed = shared.seed();

    let truth = solve_bfs(&grid, &grid.loads, WireMode::FourWire, &config.bfs)
        .context("solving the reference power flow")?;
    let ms = if args.noiseless {
        exact_measurements(&truth, &grid, &specs)?
    } else {
        simulate_measurements(&truth, &grid, &specs, seed)?
    };
    if let Some(path) = &args.measurements_out {
        let label = match args.scenario.loading {
            Some(l) => format!("loading {l}, scale {}, seed {seed}", args.scenario.scale),
            None => format!("as-loaded, scale {}, seed {seed}", args.scenario.scale),
        };
        std::fs::write(path, ms.to_csv(&grid, &label))
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let mode = shared.mode();
    let result = match mode {
        WireMode::ThreeWire => run_cwls(&grid, &ms, &config)?,
        WireMode::FourWire => run_nwls(&grid, &ms, &config)?,
    };

    if shared.trace {
        for rec in &result.trace {
            eprintln!(
                "iter {:2}: J = {:.6e}, step_inf = {:.3e}, c_inf = {:.3e}, step scale = {}",
                rec.iteration,
                rec.objective,
                rec.step_inf_norm,
                rec.constraint_inf_norm,
                rec.damping
            );
        }
    }
    eprintln!(
        "{mode}: {} in {} iterations, J = {:.4e}, max |dV| vs simulated truth = {:.3e} pu",
        if result.converged { "converged" } else { "stopped" },
        result.iterations,
        result.objective,
        max_voltage_error_pu(&result, &truth, &grid)
    );

    deliver(&shared.out, &result.to_csv(&grid))?;
    if !result.converged {
        bail!("estimation did not converge in {} iterations", result.iterations);
    }
    Ok(())
}

/// Builds the sweep spec from the scenario file (when given) and the
/// command-line overrides.
fn bench_spec(shared: &Shared, args: &BenchArgs) -> Result<ScenarioSpec> {
    let mut spec = match &args.scenario {
        Some(path) => ScenarioSpec::from_file(&path.to_string_lossy())
            .with_context(|| format!("reading {}", path.display()))?,
        None => ScenarioSpec::new(""),
    };
    if let Some(feeder) = &shared.feeder {
        spec.feeder = feeder.clone();
    }
    if spec.feeder.is_empty() {
        spec.feeder = DEFAULT_FEEDER.into();
    }
    if let Some(seed) = shared.seed {
        spec.seed = seed;
    }
    if let Some(list) = &args.loadings {
        spec.loadings = parse_f64_list(list, "loading")?;
    }
    if let Some(list) = &args.scales {
        spec.scales = parse_f64_list(list, "scale")?;
    }
    if let Some(mc) = args.mc {
        spec.mc = mc;
    }
    if let Some(pf) = args.pf {
        spec.power_factor = pf;
    }
    if let Some(modes) = &args.modes {
        spec.modes = modes
            .split(',')
            .map(|item| parse_mode(item.trim()).map_err(anyhow::Error::msg))
            .collect::<Result<Vec<_>>>()?;
    }
    // A single --mode narrows the sweep to that estimator.
    if let Some(mode) = shared.mode {
        spec.modes = vec![mode];
    }
    if let Some(truth) = &args.truth {
        spec.truth = match truth.as_str() {
            "constant-power" => LoadModel::ConstantPower,
            "constant-impedance" => LoadModel::ConstantImpedance,
            other => bail!("unknown truth model {other}, expected constant-power or constant-impedance"),
        };
    }
    Ok(spec)
}

fn progress_line(row: &MetricsRow) -> String {
    format!(
        "loading {:.2} scale {:.2} mode {}: avg_max {:.3e} pu, rms {:.3e} pu, theta {:.3e} rad, {:.1} iters, {:.1} ms/run, excluded {}",
        row.loading,
        row.scale,
        row.mode_label(),
        row.avg_max_v_pu,
        row.avg_v_pu,
        row.avg_theta_rad,
        row.mean_iterations,
        row.mean_wall_ms,
        row.excluded
    )
}

fn cmd_bench(shared: &Shared, args: &BenchArgs) -> Result<()> {
    let spec = bench_spec(shared, args)?;
    let cells = spec.loadings.len() * spec.scales.len() * spec.modes.len();
    eprintln!(
        "sweep: {} x {} x {} modes = {cells} cells, mc {}, seed {}, feeder {}",
        spec.loadings.len(),
        spec.scales.len(),
        spec.modes.len(),
        spec.mc,
        spec.seed,
        spec.feeder
    );

    let started = Instant::now();
    let options = BenchOptions::default();
    let report = run_scenario_sweep_with(&spec, &options, |row| {
        eprintln!("{}", progress_line(row));
    })?;
    eprintln!(
        "sweep finished in {:.1} s: {} rows, {} failed cells",
        started.elapsed().as_secs_f64(),
        report.rows.len(),
        report.failures.len()
    );
    for cell in &report.failures {
        eprintln!(
            "warning: loading {:.2} scale {:.2} mode {}: {}",
            cell.loading,
            cell.scale,
            match cell.mode {
                WireMode::ThreeWire => "C",
                WireMode::FourWire => "N",
            },
            cell.message
        );
    }

    if report.rows.is_empty() {
        bail!("every cell of the sweep failed");
    }
    match &shared.out {
        Some(dir) => {
            let files = export_report(&report, args.format, dir)?;
            for file in files {
                println!("{}", file.display());
            }
        }
        None => print!("{}", report.to_table()),
    }
    if !report.failures.is_empty() {
        bail!("{} of {cells} cells failed", report.failures.len());
    }
    Ok(())
}
