//! Weighted least squares state estimation for the distribution feeder.
//!
//! Two pipelines share one constrained Gauss-Newton core:
//!
//! * [`run_cwls`] estimates the conventional three-wire model: Kron-reduced
//!   lines, meter values used as-is, neutrals assumed at ground potential.
//! * [`run_nwls`] estimates the four-wire model with explicit neutral
//!   states. It first replays the metered powers through a sweep power
//!   flow, then attaches virtual neutral records and re-references the
//!   meter voltage magnitudes to ground, and finally iterates the
//!   estimator warm-started from the sweep.
//!
//! States are polar per terminal (angle in radians, magnitude in pu); the
//! zero-injection junctions enter as equality constraints through a
//! bordered KKT system rather than as high-weight pseudo-measurements.

mod kkt;
mod rows;
mod state;

pub use kkt::kkt_step;
pub use rows::{
    constraint_plan, eval_constraints, eval_h, eval_jacobian, MeasurementPlan, PlanRow,
    RowQuantity,
};
pub use state::{StateVariable, StateVector};

use std::time::{Duration, Instant};

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::metering::{
    attach_virtual_neutral, MeasurementKind, MeasurementSet, MeteringError,
};
use crate::netmodel::{
    assemble_admittance, node_phase_base, AdmittanceMatrix, GridModel, Load, LoadModel,
    ModelError, Phase, WireMode,
};
use crate::powerflow::{solve_bfs, BfsOptions, PowerFlowError, PowerFlowSolution};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metering(#[from] MeteringError),
    #[error("power flow stage of the four-wire pipeline failed: {0}")]
    PowerFlowStage(#[source] PowerFlowError),
    #[error("state {variable} of {node}:{phase} is unobservable (support norm {support:.3e})")]
    Unobservable {
        node: String,
        phase: Phase,
        variable: &'static str,
        support: f64,
    },
    #[error("measurement set unusable: {0}")]
    Mismatch(String),
}

/// Iteration controls shared by both pipelines.
#[derive(Debug, Clone, Copy)]
pub struct EstimationConfig {
    /// Convergence threshold on the applied update's infinity norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Lower bound on neutral magnitudes, pu, keeping the polar angle
    /// defined near a zero neutral voltage.
    pub neutral_floor_pu: f64,
    /// Step halvings tried when a full step raises the objective.
    pub max_step_halvings: usize,
    /// Weight ratio of the virtual neutral angle rows over the virtual
    /// magnitude rows.
    pub angle_weight_factor: f64,
    /// Sweep options for the four-wire pipeline's power flow stage.
    pub bfs: BfsOptions,
    /// Diagnostic: model meter voltage rows as phase-to-neutral functions
    /// instead of identity rows onto the corrected magnitudes.
    pub phase_to_neutral_vmag_rows: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            tolerance: 1e-6,
            max_iterations: 50,
            neutral_floor_pu: 1e-9,
            max_step_halvings: 4,
            angle_weight_factor: 10.0,
            bfs: BfsOptions::default(),
            phase_to_neutral_vmag_rows: false,
        }
    }
}

/// One estimated terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate {
    pub node: usize,
    pub phase: Phase,
    pub theta_rad: f64,
    pub vmag_pu: f64,
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective after the accepted step.
    pub objective: f64,
    /// Infinity norm of the applied update.
    pub step_inf_norm: f64,
    /// Step fraction actually taken.
    pub damping: f64,
    pub constraint_inf_norm: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub mode: WireMode,
    /// Free-terminal estimates in admittance index order.
    pub states: Vec<StateEstimate>,
    /// Constraint multipliers at the final iterate.
    pub lambda: Vec<f64>,
    /// Measurement residuals z − h(x̂), pu, plan order.
    pub residuals: Vec<f64>,
    pub objective: f64,
    pub constraint_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
    pub trace: Vec<IterationRecord>,
}

impl EstimationResult {
    pub fn theta(&self, node: usize, phase: Phase) -> Option<f64> {
        self.states
            .iter()
            .find(|s| s.node == node && s.phase == phase)
            .map(|s| s.theta_rad)
    }

    pub fn vmag(&self, node: usize, phase: Phase) -> Option<f64> {
        self.states
            .iter()
            .find(|s| s.node == node && s.phase == phase)
            .map(|s| s.vmag_pu)
    }

    pub fn phasor(&self, node: usize, phase: Phase) -> Option<Complex64> {
        self.states
            .iter()
            .find(|s| s.node == node && s.phase == phase)
            .map(|s| Complex64::from_polar(s.vmag_pu, s.theta_rad))
    }

    /// CSV form: metadata comments, then `node,phase,theta_rad,vmag_pu`.
    pub fn to_csv(&self, grid: &GridModel) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# mode: {}, iterations: {}, converged: {}, objective: {:.6e}, wall_ms: {:.3}\n",
            self.mode.letter(),
            self.iterations,
            self.converged,
            self.objective,
            self.wall_time.as_secs_f64() * 1e3
        ));
        out.push_str("node,phase,theta_rad,vmag_pu\n");
        for s in &self.states {
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e}\n",
                grid.nodes[s.node].id, s.phase, s.theta_rad, s.vmag_pu
            ));
        }
        out
    }
}

/// Magnitude of a phase-to-neutral reading re-referenced to ground:
/// the measured magnitude is placed at the phase-to-neutral angle and the
/// neutral phasor is added back.
pub fn corrected_magnitude(v_meas: f64, phase_to_neutral_angle: f64, v_n: Complex64) -> f64 {
    (Complex64::from_polar(v_meas, phase_to_neutral_angle) + v_n).norm()
}

/// Re-references every meter voltage magnitude to ground using the power
/// flow's phase-to-neutral angle and neutral phasor at the metered node.
/// σ and all other records are untouched.
pub fn correct_voltage_measurements(
    ms: &MeasurementSet,
    pf: &PowerFlowSolution,
    grid: &GridModel,
) -> Result<MeasurementSet, EstimatorError> {
    ms.map_values(|m| {
        if m.kind != MeasurementKind::VoltageMag {
            return Ok(m.value);
        }
        let u = pf.phase_to_neutral(m.node, m.phase).ok_or_else(|| {
            EstimatorError::Mismatch(format!(
                "power flow lacks data for metered terminal {}:{}",
                grid.nodes[m.node].id, m.phase
            ))
        })?;
        let v_n = pf.neutral_voltage(m.node);
        Ok(corrected_magnitude(m.value, u.arg(), v_n))
    })
}

/// Conventional three-wire estimation: Kron-reduced network, meter records
/// used exactly as delivered, flat start.
pub fn run_cwls(
    grid: &GridModel,
    ms: &MeasurementSet,
    config: &EstimationConfig,
) -> Result<EstimationResult, EstimatorError> {
    if ms.has_virtual() {
        return Err(EstimatorError::Mismatch(
            "three-wire estimation takes raw meter records, not virtual neutral rows".into(),
        ));
    }
    let started = Instant::now();
    let y = assemble_admittance(grid, WireMode::ThreeWire)?.to_per_unit(grid)?;
    let plan = MeasurementPlan::from_measurements(grid, &y, ms, config.phase_to_neutral_vmag_rows)?;
    let constraints = constraint_plan(grid, &y, &grid.zero_injection_nodes())?;
    let x0 = StateVector::flat_start(grid, y.index(), WireMode::ThreeWire, config.neutral_floor_pu);
    gauss_newton(grid, &y, &plan, &constraints, x0, config, started)
}

/// Four-wire estimation pipeline: sweep power flow from the metered powers,
/// virtual neutral records, voltage re-referencing, then the constrained
/// iteration on the full four-conductor model warm-started from the sweep.
pub fn run_nwls(
    grid: &GridModel,
    ms: &MeasurementSet,
    config: &EstimationConfig,
) -> Result<EstimationResult, EstimatorError> {
    if ms.has_virtual() {
        return Err(EstimatorError::Mismatch(
            "four-wire estimation attaches its own virtual records".into(),
        ));
    }
    let started = Instant::now();

    let loads = loads_from_measurements(grid, ms)?;
    let pf = solve_bfs(grid, &loads, WireMode::FourWire, &config.bfs)
        .map_err(EstimatorError::PowerFlowStage)?;

    let sigma_v_pu = meter_voltage_sigma_pu(grid, ms)?;
    let with_virtual =
        attach_virtual_neutral(ms, &pf, grid, sigma_v_pu, config.angle_weight_factor)?;
    let referenced = correct_voltage_measurements(&with_virtual, &pf, grid)?;

    let y = assemble_admittance(grid, WireMode::FourWire)?.to_per_unit(grid)?;
    let plan = MeasurementPlan::from_measurements(
        grid,
        &y,
        &referenced,
        config.phase_to_neutral_vmag_rows,
    )?;
    let constraints = constraint_plan(grid, &y, &grid.zero_injection_nodes())?;
    let x0 = StateVector::from_power_flow(
        grid,
        y.index(),
        WireMode::FourWire,
        &pf,
        config.neutral_floor_pu,
    )?;
    gauss_newton(grid, &y, &plan, &constraints, x0, config, started)
}

/// Rebuilds constant-power loads from the metered injections (negated:
/// consumption is a negative injection).
fn loads_from_measurements(
    grid: &GridModel,
    ms: &MeasurementSet,
) -> Result<Vec<Load>, EstimatorError> {
    let mut loads = Vec::new();
    for p in ms
        .records()
        .iter()
        .filter(|m| m.kind == MeasurementKind::ActivePower)
    {
        let q = ms
            .find(MeasurementKind::ReactivePower, p.node, p.phase)
            .ok_or_else(|| {
                EstimatorError::Mismatch(format!(
                    "active power at {}:{} has no reactive partner",
                    grid.nodes[p.node].id, p.phase
                ))
            })?;
        loads.push(Load {
            node: p.node,
            phase: p.phase,
            p_w: -p.value,
            q_var: -q.value,
            model: LoadModel::ConstantPower,
        });
    }
    if loads.is_empty() {
        return Err(EstimatorError::Mismatch(
            "no power measurements to replay through the power flow".into(),
        ));
    }
    Ok(loads)
}

fn meter_voltage_sigma_pu(grid: &GridModel, ms: &MeasurementSet) -> Result<f64, EstimatorError> {
    let m = ms
        .records()
        .iter()
        .find(|m| m.kind == MeasurementKind::VoltageMag)
        .ok_or_else(|| {
            EstimatorError::Mismatch("measurement set contains no voltage magnitudes".into())
        })?;
    Ok(m.sigma / node_phase_base(grid, m.node))
}

fn objective(plan: &MeasurementPlan, h: &DVector<f64>) -> f64 {
    plan.rows()
        .iter()
        .zip(h.iter())
        .map(|(row, &hv)| {
            let r = row.value - hv;
            r * r / (row.sigma * row.sigma)
        })
        .sum()
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Marks magnitude slots whose update at step size `alpha` lands below
/// their representation floor; `stepped` clamps them there, so from the
/// next iteration on they are bound variables, not free ones. Returns
/// whether anything new was pinned.
fn pin_floor_crossings(
    pinned: &mut [bool],
    x: &StateVector,
    dx: &DVector<f64>,
    alpha: f64,
    config: &EstimationConfig,
) -> bool {
    let nf = x.n_free();
    let px = x.packed();
    let mut any = false;
    for slot in 0..nf {
        let k = nf + slot;
        if pinned[k] {
            continue;
        }
        let ((_, phase), _) = x.column_terminal(k);
        let floor = if phase.is_neutral() {
            config.neutral_floor_pu
        } else {
            1e-6
        };
        if px[k] + alpha * dx[k] < floor {
            pinned[k] = true;
            any = true;
        }
    }
    any
}

fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn gauss_newton(
    grid: &GridModel,
    y: &AdmittanceMatrix,
    plan: &MeasurementPlan,
    constraints: &[PlanRow],
    x0: StateVector,
    config: &EstimationConfig,
    started: Instant,
) -> Result<EstimationResult, EstimatorError> {
    let z = plan.values();
    let weights = plan.weights();
    let mut x = x0;
    let mut j_current = objective(plan, &eval_h(&x, y, plan));
    let mut trace = Vec::new();
    let mut lambda = DVector::zeros(constraints.len());
    let mut converged = false;
    let mut iterations = 0;
    let mut mu = 1.0f64;
    // Magnitude variables driven onto their floor are pinned there and
    // re-enter the free set only when the optimality system starts pulling
    // them upward again. Without this, a neutral whose best fit lies on
    // the far side of the origin keeps asking for a negative radius that
    // the polar representation cannot take, and the line search grinds to
    // a halt short of constraint closure.
    let mut pinned = vec![false; x.n_states()];

    for iteration in 1..=config.max_iterations {
        iterations = iteration;
        let h = eval_h(&x, y, plan);
        let h_jac = eval_jacobian(&x, y, plan);
        let (c_vec, c_jac) = eval_constraints(&x, y, constraints);
        let residual = &z - &h;

        let unobservable = |e: kkt::SingularKkt| {
            let ((node, phase), variable) = x.column_terminal(e.weakest_column);
            EstimatorError::Unobservable {
                node: grid.nodes[node].id.clone(),
                phase,
                variable: variable.label(),
                support: e.column_norm,
            }
        };
        if iteration == 1 {
            // Rank deficiency can leave the bordered system consistent and
            // quietly solvable, so gate on the Gram spectrum up front.
            kkt::observability_check(&h_jac, &weights, &c_jac).map_err(unobservable)?;
        }
        let (dx, lam) = kkt_step(&h_jac, &weights, &residual, &c_jac, &c_vec, &pinned)
            .map_err(unobservable)?;
        lambda = lam;

        // Steps are judged by the exact-penalty merit J + μ‖c‖₁, not J
        // alone: a warm start that fits the power records exactly sits
        // below the constrained optimum, and the climb to feasibility must
        // not be rejected as an objective increase. μ stays above the
        // multiplier scale so feasibility progress always counts.
        mu = mu.max(2.0 * inf_norm(&lambda)).max(1.0);
        let phi_current = j_current + mu * l1_norm(&c_vec);

        // Full step first; halve while the merit rises.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_step_halvings {
            let candidate = x.stepped(&dx, alpha);
            let j_trial = objective(plan, &eval_h(&candidate, y, plan));
            let (c_trial, _) = eval_constraints(&candidate, y, constraints);
            let phi_trial = j_trial + mu * l1_norm(&c_trial);
            if phi_trial <= phi_current + 1e-12 {
                accepted = Some((alpha, j_trial, c_trial, candidate));
                break;
            }
            alpha *= 0.5;
        }

        // No trial improved the merit. If the blocker is a magnitude
        // crossing its floor even at the smallest trial step, pin it and
        // go round again; otherwise the run is at its numerical floor, so
        // stay put rather than drift, converged only if the current point
        // already satisfies both exit tests.
        let Some((alpha, j_new, c_new, x_new)) = accepted else {
            let alpha_min = 0.5f64.powi(config.max_step_halvings as i32);
            let pinned_any = pin_floor_crossings(&mut pinned, &x, &dx, alpha_min, config);
            trace.push(IterationRecord {
                iteration,
                objective: j_current,
                step_inf_norm: 0.0,
                damping: 0.0,
                constraint_inf_norm: inf_norm(&c_vec),
            });
            if pinned_any {
                continue;
            }
            converged = dx.amax() < config.tolerance && inf_norm(&c_vec) < 1e-8;
            break;
        };

        let step_inf = dx.amax() * alpha;
        pin_floor_crossings(&mut pinned, &x, &dx, alpha, config);
        x = x_new;
        j_current = j_new;
        let c_inf = inf_norm(&c_new);
        trace.push(IterationRecord {
            iteration,
            objective: j_current,
            step_inf_norm: step_inf,
            damping: alpha,
            constraint_inf_norm: c_inf,
        });

        // A small step alone is not convergence: the constraints must be
        // closed too, and until they are the iteration keeps going.
        if step_inf < config.tolerance && c_inf < 1e-8 {
            converged = true;
            break;
        }
    }

    let h_final = eval_h(&x, y, plan);
    let (c_final, _) = eval_constraints(&x, y, constraints);
    let states = x
        .free_terminals()
        .map(|(node, phase)| {
            let k = x.index().position(node, phase).expect("free terminal indexed");
            StateEstimate {
                node,
                phase,
                theta_rad: x.theta_at(k),
                vmag_pu: x.vmag_at(k),
            }
        })
        .collect();

    Ok(EstimationResult {
        mode: y.mode(),
        states,
        lambda: lambda.iter().copied().collect(),
        residuals: plan
            .rows()
            .iter()
            .zip(h_final.iter())
            .map(|(row, &hv)| row.value - hv)
            .collect(),
        objective: j_current,
        constraint_inf_norm: inf_norm(&c_final),
        iterations,
        converged,
        wall_time: started.elapsed(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metering::{exact_measurements, MeterSpecs};
    use crate::netmodel::load_feeder;
    use approx::assert_relative_eq;

    #[test]
    fn corrected_magnitude_hand_values() {
        // 230∠0° plus 5∠180°: the neutral shift subtracts head on.
        let down = corrected_magnitude(230.0, 0.0, Complex64::from_polar(5.0, std::f64::consts::PI));
        assert_relative_eq!(down, 225.0, max_relative = 1e-12);
        // 230∠0° plus 5∠90°: quadrature shift barely moves the magnitude.
        let quad =
            corrected_magnitude(230.0, 0.0, Complex64::from_polar(5.0, std::f64::consts::FRAC_PI_2));
        assert_relative_eq!(quad, 230.05434140654683, max_relative = 1e-12);
        // Zero neutral leaves the reading untouched.
        assert_eq!(
            corrected_magnitude(231.4, 0.3, Complex64::new(0.0, 0.0)),
            231.4
        );
    }

    fn four_wire_truth() -> (GridModel, PowerFlowSolution) {
        let grid = load_feeder("builtin:suburban-lv").unwrap();
        let sol = solve_bfs(&grid, &grid.loads, WireMode::FourWire, &BfsOptions::default()).unwrap();
        (grid, sol)
    }

    #[test]
    fn correction_recovers_ground_referenced_magnitude() {
        let (grid, sol) = four_wire_truth();
        let ms = exact_measurements(&sol, &grid, &MeterSpecs::residential()).unwrap();
        let corrected = correct_voltage_measurements(&ms, &sol, &grid).unwrap();
        for m in corrected.records() {
            if m.kind == MeasurementKind::VoltageMag {
                let truth = sol.voltage(m.node, m.phase).unwrap().norm();
                assert_relative_eq!(m.value, truth, max_relative = 1e-12);
            }
        }
        // Power records are untouched.
        let h01 = grid.node_index("h01").unwrap();
        assert_eq!(
            corrected
                .find(MeasurementKind::ActivePower, h01, Phase::A)
                .unwrap()
                .value,
            ms.find(MeasurementKind::ActivePower, h01, Phase::A)
                .unwrap()
                .value
        );
    }

    #[test]
    fn noiseless_three_wire_recovery() {
        let grid = load_feeder("builtin:suburban-lv").unwrap();
        let truth =
            solve_bfs(&grid, &grid.loads, WireMode::ThreeWire, &BfsOptions::default()).unwrap();
        let ms = exact_measurements(&truth, &grid, &MeterSpecs::residential()).unwrap();
        let result = run_cwls(&grid, &ms, &EstimationConfig::default()).unwrap();
        assert!(result.converged, "{:?}", result.trace);
        assert!(result.iterations <= 10);
        assert!(result.constraint_inf_norm < 1e-8);
        for s in &result.states {
            let v = truth.voltage(s.node, s.phase).unwrap();
            let base = node_phase_base(&grid, s.node);
            assert!(
                (s.vmag_pu - v.norm() / base).abs() < 1e-6,
                "magnitude at {}:{}",
                grid.nodes[s.node].id,
                s.phase
            );
            assert!(
                (s.theta_rad - v.arg()).abs() < 1e-6,
                "angle at {}:{}",
                grid.nodes[s.node].id,
                s.phase
            );
        }
    }

    #[test]
    fn noiseless_four_wire_recovery_includes_neutrals() {
        let (grid, truth) = four_wire_truth();
        let ms = exact_measurements(&truth, &grid, &MeterSpecs::residential()).unwrap();
        let result = run_nwls(&grid, &ms, &EstimationConfig::default()).unwrap();
        assert!(result.converged, "{:?}", result.trace);
        assert!(result.iterations <= 10);
        let mut saw_neutral = false;
        for s in &result.states {
            let v = truth.voltage(s.node, s.phase).unwrap();
            let base = node_phase_base(&grid, s.node);
            assert!(
                (s.vmag_pu - v.norm() / base).abs() < 1e-6,
                "magnitude at {}:{} ({} vs {})",
                grid.nodes[s.node].id,
                s.phase,
                s.vmag_pu,
                v.norm() / base
            );
            if s.phase.is_neutral() && v.norm() / base > 1e-4 {
                saw_neutral = true;
                assert!((s.theta_rad - v.arg()).abs() < 1e-4, "neutral angle");
            }
        }
        assert!(saw_neutral, "expected visible neutral magnitudes");
    }

    #[test]
    fn objective_descends_once_feasible_and_constraints_close() {
        let (grid, truth) = four_wire_truth();
        let ms = crate::metering::simulate_measurements(
            &truth,
            &grid,
            &MeterSpecs::residential(),
            2024,
        )
        .unwrap();
        let result = run_nwls(&grid, &ms, &EstimationConfig::default()).unwrap();
        assert!(result.converged, "{:?}", result.trace);
        // The warm start fits the power records exactly and sits below the
        // constrained optimum, so the objective may rise while the
        // constraints close. From the first feasible iterate on it must
        // not rise again.
        let mut feasible = false;
        for pair in result.trace.windows(2) {
            if feasible {
                assert!(
                    pair[1].objective <= pair[0].objective + 1e-12,
                    "objective rose after feasibility: {pair:?}"
                );
            }
            feasible = feasible || pair[0].constraint_inf_norm < 1e-8;
        }
        assert!(result.constraint_inf_norm < 1e-8);
        assert!(result.objective > 0.0, "noise leaves residuals");
    }

    #[test]
    fn virtual_records_rejected_by_both_entry_points() {
        let (grid, truth) = four_wire_truth();
        let specs = MeterSpecs::residential();
        let ms = exact_measurements(&truth, &grid, &specs).unwrap();
        let with = attach_virtual_neutral(
            &ms,
            &truth,
            &grid,
            specs.voltage_sigma_pu(grid.lv_phase_base_v()),
            10.0,
        )
        .unwrap();
        assert!(run_cwls(&grid, &with, &EstimationConfig::default()).is_err());
        assert!(run_nwls(&grid, &with, &EstimationConfig::default()).is_err());
    }

    #[test]
    fn loaded_zero_injection_node_is_a_config_error() {
        let (grid, truth) = four_wire_truth();
        let ms = exact_measurements(&truth, &grid, &MeterSpecs::residential()).unwrap();
        let mut broken = grid.clone();
        let f1p1 = broken.node_index("f1p1").unwrap();
        broken.loads.push(Load {
            node: f1p1,
            phase: Phase::A,
            p_w: 100.0,
            q_var: 0.0,
            model: LoadModel::ConstantPower,
        });
        let err = run_cwls(&broken, &ms, &EstimationConfig::default()).unwrap_err();
        assert!(err.to_string().contains("zero-injection"), "{err}");
    }

    #[test]
    fn missing_meter_yields_observability_error() {
        // A consumer hanging off another consumer: no junction constraint
        // reaches c2, so stripping its meters leaves its state unsupported
        // (9 rows against 10 states in three-wire mode).
        let text = "\
[nodes]
mv,  source,   abc
sub, junction, abcn
c1,  consumer, an
c2,  consumer, an

[transformer]
mv, sub, 800e3, 11e3, 416, 0.0075, 0.045

[branches]
sub, c1, 2x22, 0.02
c1,  c2, 2x22, 0.02

[loads]
c1, a, 2000, 600
c2, a, 1500, 500

[grounding]
sub
";
        let grid = crate::netmodel::parse_feeder(text).unwrap();
        let truth =
            solve_bfs(&grid, &grid.loads, WireMode::ThreeWire, &BfsOptions::default()).unwrap();
        let ms = exact_measurements(&truth, &grid, &MeterSpecs::residential()).unwrap();

        // Fully metered, the chain is estimable.
        let full = run_cwls(&grid, &ms, &EstimationConfig::default()).unwrap();
        assert!(full.converged);

        let c2 = grid.node_index("c2").unwrap();
        let stripped = ms.retain_records(|m| m.node != c2);
        let err = run_cwls(&grid, &stripped, &EstimationConfig::default()).unwrap_err();
        assert!(
            matches!(err, EstimatorError::Unobservable { .. }),
            "expected unobservable error, got {err}"
        );
    }
}
