//! Measurement functions, their Jacobian, and the zero-injection
//! constraints.
//!
//! Power rows are built from one generalized product
//! `S(o, r) = V_o · conj((Y·V)_r)`: the plain nodal injection is `S(r, r)`,
//! and the power registered by a meter, which senses the phase-to-neutral
//! voltage, is `S(p, p) − S(n, p)`. All partial derivatives are expressed
//! without divisions, so rows stay well defined as a neutral magnitude
//! approaches zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::metering::{MeasurementKind, MeasurementSet};
use crate::netmodel::{node_phase_base, AdmittanceMatrix, GridModel, Phase, WireMode};

use super::state::StateVector;
use super::EstimatorError;

/// What one plan row computes from the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowQuantity {
    ActiveInjection,
    ReactiveInjection,
    /// Identity onto a magnitude state.
    MagnitudeState,
    /// Identity onto an angle state.
    AngleState,
    /// Diagnostic form: |V_p∠θ_p − V_n∠θ_n| of a terminal pair.
    PhaseToNeutralMagnitude,
}

/// One measurement row, in pu/radians.
#[derive(Debug, Clone, Copy)]
pub struct PlanRow {
    pub quantity: RowQuantity,
    /// Index position the row targets: the admittance row for injections,
    /// the state terminal for identity rows.
    pub terminal: usize,
    /// For injections: the node's neutral position when the metered value
    /// is referenced phase-to-neutral. For the diagnostic magnitude: the
    /// neutral position. `None` means plain phase-to-ground referencing.
    pub neutral_ref: Option<usize>,
    pub value: f64,
    pub sigma: f64,
}

/// Ordered measurement rows with values and deviations in pu.
#[derive(Debug, Clone)]
pub struct MeasurementPlan {
    rows: Vec<PlanRow>,
}

impl MeasurementPlan {
    /// Converts a measurement set into estimator rows on the given
    /// admittance index. Power values scale by the per-phase power base,
    /// meter voltages by the node's voltage base; virtual records are
    /// already in pu/radians.
    ///
    /// `phase_to_neutral_vmag` switches meter voltage rows from the identity
    /// form (used once measurements are re-referenced to ground) to the
    /// diagnostic phase-to-neutral form.
    pub fn from_measurements(
        grid: &GridModel,
        y: &AdmittanceMatrix,
        ms: &MeasurementSet,
        phase_to_neutral_vmag: bool,
    ) -> Result<MeasurementPlan, EstimatorError> {
        let s_phase = grid.power_base_va().ok_or_else(|| {
            EstimatorError::Mismatch("estimation needs a transformer power base".into())
        })? / 3.0;
        let index = y.index();
        let mode = y.mode();
        let mut rows = Vec::with_capacity(ms.len());
        for m in ms.records() {
            let terminal = |phase: Phase| {
                index.position(m.node, phase).ok_or_else(|| {
                    EstimatorError::Mismatch(format!(
                        "measurement at {}:{} has no admittance terminal",
                        grid.nodes[m.node].id, phase
                    ))
                })
            };
            let row = match m.kind {
                MeasurementKind::ActivePower | MeasurementKind::ReactivePower => {
                    let quantity = if m.kind == MeasurementKind::ActivePower {
                        RowQuantity::ActiveInjection
                    } else {
                        RowQuantity::ReactiveInjection
                    };
                    // The meter senses phase-to-neutral power; only in
                    // four-wire mode is the neutral there to reference.
                    let neutral_ref = match mode {
                        WireMode::FourWire => index.position(m.node, Phase::N),
                        WireMode::ThreeWire => None,
                    };
                    PlanRow {
                        quantity,
                        terminal: terminal(m.phase)?,
                        neutral_ref,
                        value: m.value / s_phase,
                        sigma: m.sigma / s_phase,
                    }
                }
                MeasurementKind::VoltageMag => {
                    let v_base = node_phase_base(grid, m.node);
                    let neutral_ref = if phase_to_neutral_vmag {
                        match mode {
                            WireMode::FourWire => index.position(m.node, Phase::N),
                            WireMode::ThreeWire => None,
                        }
                    } else {
                        None
                    };
                    PlanRow {
                        quantity: if neutral_ref.is_some() {
                            RowQuantity::PhaseToNeutralMagnitude
                        } else {
                            RowQuantity::MagnitudeState
                        },
                        terminal: terminal(m.phase)?,
                        neutral_ref,
                        value: m.value / v_base,
                        sigma: m.sigma / v_base,
                    }
                }
                MeasurementKind::NeutralVoltageMag => PlanRow {
                    quantity: RowQuantity::MagnitudeState,
                    terminal: terminal(Phase::N)?,
                    neutral_ref: None,
                    value: m.value,
                    sigma: m.sigma,
                },
                MeasurementKind::NeutralAngle => PlanRow {
                    quantity: RowQuantity::AngleState,
                    terminal: terminal(Phase::N)?,
                    neutral_ref: None,
                    value: m.value,
                    sigma: m.sigma,
                },
            };
            rows.push(row);
        }
        Ok(MeasurementPlan { rows })
    }

    pub fn rows(&self) -> &[PlanRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.value))
    }

    pub fn sigmas(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.sigma))
    }

    /// Weights w = 1/σ².
    pub fn weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| 1.0 / (r.sigma * r.sigma)),
        )
    }
}

/// P and Q of the generalized product V_o · conj((Y·V)_r).
fn injection_pair(x: &StateVector, y: &AdmittanceMatrix, outer: usize, row: usize) -> (f64, f64) {
    let m = y.matrix();
    let v_o = x.vmag_at(outer);
    let th_o = x.theta_at(outer);
    let mut sum_g = 0.0;
    let mut sum_h = 0.0;
    for k in 0..m.ncols() {
        let yv = m[(row, k)];
        if yv == Complex64::new(0.0, 0.0) {
            continue;
        }
        let delta = th_o - x.theta_at(k);
        let (sin_d, cos_d) = delta.sin_cos();
        let g = yv.re * cos_d + yv.im * sin_d;
        let h = yv.re * sin_d - yv.im * cos_d;
        sum_g += x.vmag_at(k) * g;
        sum_h += x.vmag_at(k) * h;
    }
    (v_o * sum_g, v_o * sum_h)
}

/// Adds `sign ×` the partials of the generalized P (or Q) row into a dense
/// Jacobian row over the packed state layout.
fn add_injection_partials(
    x: &StateVector,
    y: &AdmittanceMatrix,
    outer: usize,
    row: usize,
    active: bool,
    sign: f64,
    out: &mut [f64],
) {
    let m = y.matrix();
    let n = x.n_free();
    let v_o = x.vmag_at(outer);
    let th_o = x.theta_at(outer);
    let mut sum_vg = 0.0;
    let mut sum_vh = 0.0;
    let mut own_g = 0.0;
    let mut own_h = 0.0;
    for k in 0..m.ncols() {
        let yv = m[(row, k)];
        if yv == Complex64::new(0.0, 0.0) {
            continue;
        }
        let delta = th_o - x.theta_at(k);
        let (sin_d, cos_d) = delta.sin_cos();
        let g = yv.re * cos_d + yv.im * sin_d;
        let h = yv.re * sin_d - yv.im * cos_d;
        let v_k = x.vmag_at(k);
        sum_vg += v_k * g;
        sum_vh += v_k * h;
        if k == outer {
            own_g = g;
            own_h = h;
            continue;
        }
        if let Some(slot) = x.slot(k) {
            if active {
                out[slot] += sign * v_o * v_k * h;
                out[n + slot] += sign * v_o * g;
            } else {
                out[slot] += sign * (-v_o * v_k * g);
                out[n + slot] += sign * v_o * h;
            }
        }
    }
    if let Some(slot) = x.slot(outer) {
        if active {
            out[slot] += sign * (-v_o * (sum_vh - v_o * own_h));
            out[n + slot] += sign * (sum_vg + v_o * own_g);
        } else {
            out[slot] += sign * v_o * (sum_vg - v_o * own_g);
            out[n + slot] += sign * (sum_vh + v_o * own_h);
        }
    }
}

fn row_value(x: &StateVector, y: &AdmittanceMatrix, row: &PlanRow) -> f64 {
    match row.quantity {
        RowQuantity::ActiveInjection | RowQuantity::ReactiveInjection => {
            let active = row.quantity == RowQuantity::ActiveInjection;
            let pick = |pair: (f64, f64)| if active { pair.0 } else { pair.1 };
            let own = pick(injection_pair(x, y, row.terminal, row.terminal));
            match row.neutral_ref {
                Some(nref) => own - pick(injection_pair(x, y, nref, row.terminal)),
                None => own,
            }
        }
        RowQuantity::MagnitudeState => x.vmag_at(row.terminal),
        RowQuantity::AngleState => x.theta_at(row.terminal),
        RowQuantity::PhaseToNeutralMagnitude => {
            let nref = row.neutral_ref.expect("diagnostic row carries a neutral");
            (x.phasor_at(row.terminal) - x.phasor_at(nref)).norm()
        }
    }
}

fn fill_row_jacobian(x: &StateVector, y: &AdmittanceMatrix, row: &PlanRow, out: &mut [f64]) {
    let n = x.n_free();
    match row.quantity {
        RowQuantity::ActiveInjection | RowQuantity::ReactiveInjection => {
            let active = row.quantity == RowQuantity::ActiveInjection;
            add_injection_partials(x, y, row.terminal, row.terminal, active, 1.0, out);
            if let Some(nref) = row.neutral_ref {
                add_injection_partials(x, y, nref, row.terminal, active, -1.0, out);
            }
        }
        RowQuantity::MagnitudeState => {
            if let Some(slot) = x.slot(row.terminal) {
                out[n + slot] = 1.0;
            }
        }
        RowQuantity::AngleState => {
            if let Some(slot) = x.slot(row.terminal) {
                out[slot] = 1.0;
            }
        }
        RowQuantity::PhaseToNeutralMagnitude => {
            let nref = row.neutral_ref.expect("diagnostic row carries a neutral");
            let u = x.phasor_at(row.terminal) - x.phasor_at(nref);
            let h = u.norm().max(1e-12);
            let (v_p, th_p) = (x.vmag_at(row.terminal), x.theta_at(row.terminal));
            let (v_n, th_n) = (x.vmag_at(nref), x.theta_at(nref));
            if let Some(slot) = x.slot(row.terminal) {
                out[n + slot] = (u.re * th_p.cos() + u.im * th_p.sin()) / h;
                out[slot] = v_p * (-u.re * th_p.sin() + u.im * th_p.cos()) / h;
            }
            if let Some(slot) = x.slot(nref) {
                out[n + slot] = -(u.re * th_n.cos() + u.im * th_n.sin()) / h;
                out[slot] = v_n * (u.re * th_n.sin() - u.im * th_n.cos()) / h;
            }
        }
    }
}

/// Evaluates every measurement row at the state.
pub fn eval_h(x: &StateVector, y: &AdmittanceMatrix, plan: &MeasurementPlan) -> DVector<f64> {
    DVector::from_iterator(
        plan.len(),
        plan.rows().iter().map(|row| row_value(x, y, row)),
    )
}

/// Analytic Jacobian ∂h/∂x over the packed state layout.
pub fn eval_jacobian(
    x: &StateVector,
    y: &AdmittanceMatrix,
    plan: &MeasurementPlan,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(plan.len(), x.n_states());
    for (r, row) in plan.rows().iter().enumerate() {
        let mut buf = vec![0.0; x.n_states()];
        fill_row_jacobian(x, y, row, &mut buf);
        for (c, v) in buf.into_iter().enumerate() {
            jac[(r, c)] = v;
        }
    }
    jac
}

/// Builds the zero-injection constraint rows: P and Q forced to zero at
/// every terminal of the listed nodes. Nodes carrying a load are rejected.
pub fn constraint_plan(
    grid: &GridModel,
    y: &AdmittanceMatrix,
    zero_injection_nodes: &[usize],
) -> Result<Vec<PlanRow>, EstimatorError> {
    let mut rows = Vec::new();
    for &node in zero_injection_nodes {
        if grid.loads.iter().any(|l| l.node == node) {
            return Err(EstimatorError::Mismatch(format!(
                "zero-injection node {} carries a load",
                grid.nodes[node].id
            )));
        }
        for (k, &(n, _)) in y.index().terminals().iter().enumerate() {
            if n != node {
                continue;
            }
            for quantity in [RowQuantity::ActiveInjection, RowQuantity::ReactiveInjection] {
                rows.push(PlanRow {
                    quantity,
                    terminal: k,
                    neutral_ref: None,
                    value: 0.0,
                    sigma: 1.0,
                });
            }
        }
    }
    Ok(rows)
}

/// Evaluates the constraint values c(x) and their Jacobian C = ∂c/∂x.
pub fn eval_constraints(
    x: &StateVector,
    y: &AdmittanceMatrix,
    rows: &[PlanRow],
) -> (DVector<f64>, DMatrix<f64>) {
    let c = DVector::from_iterator(rows.len(), rows.iter().map(|row| row_value(x, y, row)));
    let mut jac = DMatrix::zeros(rows.len(), x.n_states());
    for (r, row) in rows.iter().enumerate() {
        let mut buf = vec![0.0; x.n_states()];
        fill_row_jacobian(x, y, row, &mut buf);
        for (col, v) in buf.into_iter().enumerate() {
            jac[(r, col)] = v;
        }
    }
    (c, jac)
}
