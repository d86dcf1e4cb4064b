//! Polar state vector over the admittance terminal index.
//!
//! Every admittance terminal carries an angle (rad) and a magnitude (pu).
//! Terminals of the reference node are fixed at the nominal positive
//! sequence; all other terminals are free variables. The packed variable
//! vector is `[θ over free terminals, |V| over free terminals]`, so the
//! Jacobian splits into angle and magnitude column blocks.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::netmodel::{node_phase_base, GridModel, NodePhaseIndex, Phase, WireMode};
use crate::powerflow::PowerFlowSolution;

use super::EstimatorError;

/// Which half of the packed vector a state column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateVariable {
    Angle,
    Magnitude,
}

impl StateVariable {
    pub fn label(self) -> &'static str {
        match self {
            StateVariable::Angle => "angle",
            StateVariable::Magnitude => "magnitude",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StateVector {
    mode: WireMode,
    index: NodePhaseIndex,
    /// Angle per index position, rad.
    theta: Vec<f64>,
    /// Magnitude per index position, pu.
    vmag: Vec<f64>,
    /// Index positions that are free variables, ascending.
    free: Vec<usize>,
    /// Index position -> free slot.
    slot_of: Vec<Option<usize>>,
    neutral_floor: f64,
}

/// The angle and magnitude reference: the transformer primary, or the
/// source node on transformer-less grids.
pub(crate) fn reference_node(grid: &GridModel) -> usize {
    grid.transformer
        .as_ref()
        .map(|t| t.primary)
        .unwrap_or_else(|| grid.lv_root())
}

impl StateVector {
    fn from_values(
        mode: WireMode,
        index: &NodePhaseIndex,
        reference: usize,
        theta: Vec<f64>,
        vmag: Vec<f64>,
        neutral_floor: f64,
    ) -> StateVector {
        let mut free = Vec::new();
        let mut slot_of = vec![None; index.len()];
        for (k, &(node, _)) in index.terminals().iter().enumerate() {
            if node != reference {
                slot_of[k] = Some(free.len());
                free.push(k);
            }
        }
        StateVector {
            mode,
            index: index.clone(),
            theta,
            vmag,
            free,
            slot_of,
            neutral_floor,
        }
    }

    /// Flat start: 1 pu at the reference angles (plus the transformer phase
    /// shift on the LV side); neutral magnitudes at the floor.
    pub fn flat_start(
        grid: &GridModel,
        index: &NodePhaseIndex,
        mode: WireMode,
        neutral_floor: f64,
    ) -> StateVector {
        let reference = reference_node(grid);
        let shift = grid
            .transformer
            .as_ref()
            .map(|t| t.model.phase_shift_rad())
            .unwrap_or(0.0);
        let mut theta = Vec::with_capacity(index.len());
        let mut vmag = Vec::with_capacity(index.len());
        for &(node, phase) in index.terminals() {
            if phase.is_neutral() {
                theta.push(0.0);
                vmag.push(neutral_floor);
            } else if node == reference {
                theta.push(phase.reference_angle());
                vmag.push(1.0);
            } else {
                theta.push(phase.reference_angle() + shift);
                vmag.push(1.0);
            }
        }
        StateVector::from_values(mode, index, reference, theta, vmag, neutral_floor)
    }

    /// Warm start from a solved power flow, converted to pu on each node's
    /// voltage base. Neutral magnitudes are floored so the polar angle stays
    /// defined.
    pub fn from_power_flow(
        grid: &GridModel,
        index: &NodePhaseIndex,
        mode: WireMode,
        pf: &PowerFlowSolution,
        neutral_floor: f64,
    ) -> Result<StateVector, EstimatorError> {
        let reference = reference_node(grid);
        let mut theta = Vec::with_capacity(index.len());
        let mut vmag = Vec::with_capacity(index.len());
        for &(node, phase) in index.terminals() {
            let v = pf.voltage(node, phase).ok_or_else(|| {
                EstimatorError::Mismatch(format!(
                    "power flow solution lacks terminal {}:{phase}",
                    grid.nodes[node].id
                ))
            })?;
            let base = node_phase_base(grid, node);
            let mut mag = v.norm() / base;
            if phase.is_neutral() {
                mag = mag.max(neutral_floor);
            }
            theta.push(v.arg());
            vmag.push(mag);
        }
        Ok(StateVector::from_values(
            mode,
            index,
            reference,
            theta,
            vmag,
            neutral_floor,
        ))
    }

    /// State over an explicit index with given values, for hand-built
    /// systems; terminals of `reference` are held fixed. Neutral floor is
    /// the default 1e-9.
    pub fn synthetic(
        mode: WireMode,
        index: &NodePhaseIndex,
        reference: usize,
        theta: Vec<f64>,
        vmag: Vec<f64>,
    ) -> StateVector {
        assert_eq!(theta.len(), index.len(), "one angle per terminal");
        assert_eq!(vmag.len(), index.len(), "one magnitude per terminal");
        StateVector::from_values(mode, index, reference, theta, vmag, 1e-9)
    }

    pub fn mode(&self) -> WireMode {
        self.mode
    }

    pub fn index(&self) -> &NodePhaseIndex {
        &self.index
    }

    /// Number of free terminals; the packed vector has twice as many entries.
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_states(&self) -> usize {
        2 * self.free.len()
    }

    pub fn free_terminals(&self) -> impl Iterator<Item = (usize, Phase)> + '_ {
        self.free.iter().map(|&k| self.index.terminal(k))
    }

    pub fn theta_at(&self, position: usize) -> f64 {
        self.theta[position]
    }

    pub fn vmag_at(&self, position: usize) -> f64 {
        self.vmag[position]
    }

    pub fn phasor_at(&self, position: usize) -> Complex64 {
        Complex64::from_polar(self.vmag[position], self.theta[position])
    }

    /// Free slot of a terminal's index position, if it is a variable.
    pub fn slot(&self, position: usize) -> Option<usize> {
        self.slot_of[position]
    }

    /// Packed variable vector `[θ_free, |V|_free]`.
    pub fn packed(&self) -> DVector<f64> {
        let n = self.free.len();
        let mut x = DVector::zeros(2 * n);
        for (slot, &k) in self.free.iter().enumerate() {
            x[slot] = self.theta[k];
            x[n + slot] = self.vmag[k];
        }
        x
    }

    /// Applies `alpha · dx` and returns the stepped state. Neutral
    /// magnitudes are floored; phase magnitudes are kept positive.
    pub fn stepped(&self, dx: &DVector<f64>, alpha: f64) -> StateVector {
        let n = self.free.len();
        let mut out = self.clone();
        for (slot, &k) in self.free.iter().enumerate() {
            out.theta[k] += alpha * dx[slot];
            out.vmag[k] += alpha * dx[n + slot];
            let (_, phase) = self.index.terminal(k);
            let floor = if phase.is_neutral() {
                self.neutral_floor
            } else {
                1e-6
            };
            out.vmag[k] = out.vmag[k].max(floor);
        }
        out
    }

    /// Terminal and variable kind behind one packed-vector column.
    pub fn column_terminal(&self, column: usize) -> ((usize, Phase), StateVariable) {
        let n = self.free.len();
        if column < n {
            (self.index.terminal(self.free[column]), StateVariable::Angle)
        } else {
            (
                self.index.terminal(self.free[column - n]),
                StateVariable::Magnitude,
            )
        }
    }
}
