//! Unbalanced radial power flow by backward/forward sweep.
//!
//! The solver walks the feeder tree: a backward pass accumulates conductor
//! currents from the leaves to the root using the present voltage estimate,
//! the transformer equation (or the fixed source) updates the root voltages,
//! and a forward pass applies the series voltage drops back out to the
//! leaves. Four-wire mode carries the neutral conductor explicitly, with load
//! return currents flowing through it; three-wire mode works on Kron-reduced
//! lines with every neutral at ground potential.
//!
//! All quantities are SI (volts, amperes); convergence is measured in pu on
//! the LV phase base.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::netmodel::{
    build_transformer_admittance, kron_reduce, GridModel, Load, LoadModel, ModelError,
    NodePhaseIndex, Phase, WireMode,
};

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("sweep did not converge after {iterations} iterations (last update {last_update_v:.3e} V)")]
    NonConvergence { iterations: usize, last_update_v: f64 },
    #[error("voltage collapse at node {node:?} phase {phase}: |V| = {magnitude:.3} V")]
    VoltageCollapse { node: String, phase: Phase, magnitude: f64 },
    #[error("load terminal voltage too small to define a current ({0:.3e} V)")]
    DegenerateVoltage(f64),
}

/// Solver knobs; the defaults match the crate's validation settings.
#[derive(Debug, Clone, Copy)]
pub struct BfsOptions {
    /// Convergence threshold on the largest voltage update, pu of the LV
    /// phase base.
    pub tolerance_pu: f64,
    pub max_iterations: usize,
    /// Phase-to-neutral magnitudes below this fraction of nominal abort the
    /// sweep as voltage collapse.
    pub collapse_fraction: f64,
}

impl Default for BfsOptions {
    fn default() -> Self {
        BfsOptions {
            tolerance_pu: 1e-8,
            max_iterations: 100,
            collapse_fraction: 0.05,
        }
    }
}

/// Converged sweep state. Voltages cover every terminal of the grid
/// (grounded neutrals included, pinned at zero); branch currents are stored
/// per conductor in the parent-to-child direction of the tree.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    mode: WireMode,
    index: NodePhaseIndex,
    voltages: Vec<Complex64>,
    branch_currents: Vec<Vec<Complex64>>,
    branch_parent: Vec<usize>,
    branch_child: Vec<usize>,
    iterations: usize,
    last_update_v: f64,
    /// Complex power delivered into the LV network at the root, VA.
    slack_va: Complex64,
    lv_phase_base_v: f64,
}

impl PowerFlowSolution {
    pub fn mode(&self) -> WireMode {
        self.mode
    }

    pub fn index(&self) -> &NodePhaseIndex {
        &self.index
    }

    /// Terminal voltage, V. `None` when the terminal does not exist in the
    /// solved mode (e.g. any neutral in three-wire mode).
    pub fn voltage(&self, node: usize, phase: Phase) -> Option<Complex64> {
        self.index
            .position(node, phase)
            .map(|k| self.voltages[k])
    }

    /// Neutral voltage of a node, V. Zero where the neutral is grounded,
    /// absent, or not modeled (three-wire).
    pub fn neutral_voltage(&self, node: usize) -> Complex64 {
        self.voltage(node, Phase::N)
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Voltage across a load connected phase-to-neutral, V.
    pub fn phase_to_neutral(&self, node: usize, phase: Phase) -> Option<Complex64> {
        let v = self.voltage(node, phase)?;
        Some(v - self.neutral_voltage(node))
    }

    /// Conductor currents of one branch, parent-to-child, A.
    pub fn branch_current(&self, branch: usize) -> &[Complex64] {
        &self.branch_currents[branch]
    }

    /// Tree orientation of one branch: (parent node, child node).
    pub fn branch_orientation(&self, branch: usize) -> (usize, usize) {
        (self.branch_parent[branch], self.branch_child[branch])
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Largest voltage magnitude update of the final sweep, V.
    pub fn last_update_v(&self) -> f64 {
        self.last_update_v
    }

    pub fn slack_va(&self) -> Complex64 {
        self.slack_va
    }

    /// Largest neutral voltage magnitude over all terminals, pu.
    pub fn max_neutral_pu(&self) -> f64 {
        self.index
            .terminals()
            .iter()
            .enumerate()
            .filter(|(_, (_, p))| p.is_neutral())
            .map(|(k, _)| self.voltages[k].norm())
            .fold(0.0, f64::max)
            / self.lv_phase_base_v
    }
}

/// Current a load injects into the network at its phase terminal, given the
/// complex power it consumes and the terminal pair voltage. The returned
/// current is the draw (flowing from network into the load).
pub fn injected_current(
    s_va: Complex64,
    v_phase: Complex64,
    v_neutral: Complex64,
) -> Result<Complex64, PowerFlowError> {
    let u = v_phase - v_neutral;
    let magnitude = u.norm();
    if magnitude < 1e-6 {
        return Err(PowerFlowError::DegenerateVoltage(magnitude));
    }
    Ok((s_va / u).conj())
}

/// Per-branch conductor layout in the solved mode: terminal phases and the
/// total series impedance block in Ω.
struct BranchBlock {
    phases: Vec<Phase>,
    z_total: DMatrix<Complex64>,
}

fn branch_blocks(grid: &GridModel, mode: WireMode) -> Result<Vec<BranchBlock>, ModelError> {
    grid.branches
        .iter()
        .map(|b| {
            let line = &grid.line_types[b.line_type].1;
            let (z, phases) = match mode {
                WireMode::FourWire => (line.clone(), b.phases.clone()),
                WireMode::ThreeWire => {
                    if line.has_neutral() {
                        let kept = b
                            .phases
                            .iter()
                            .zip(line.roles())
                            .filter(|(_, r)| !r.is_neutral())
                            .map(|(p, _)| *p)
                            .collect();
                        (kron_reduce(line)?, kept)
                    } else {
                        (line.clone(), b.phases.clone())
                    }
                }
            };
            Ok(BranchBlock {
                phases,
                z_total: z.matrix() * Complex64::from(b.length_km),
            })
        })
        .collect()
}

/// Solves the sweep for the given loads (which may differ from the grid's
/// own load list, e.g. when replaying metered powers).
pub fn solve_bfs(
    grid: &GridModel,
    loads: &[Load],
    mode: WireMode,
    options: &BfsOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let tree = grid.validate()?;
    let index = NodePhaseIndex::full(grid, mode);
    let blocks = branch_blocks(grid, mode)?;
    let v_base = grid.lv_phase_base_v();
    let tol_v = options.tolerance_pu * v_base;
    let collapse_v = options.collapse_fraction * v_base;

    let transformer = match &grid.transformer {
        Some(link) => Some((link, build_transformer_admittance(&link.model)?)),
        None => None,
    };
    let shift = transformer
        .as_ref()
        .map(|(l, _)| l.model.phase_shift_rad())
        .unwrap_or(0.0);
    let primary = transformer.as_ref().map(|(l, _)| l.primary);

    // Nominal MV positive sequence in pu; reused by the root update.
    let v_primary_pu = Vector3::from_iterator(
        Phase::ABC
            .iter()
            .map(|p| Complex64::from_polar(1.0, p.reference_angle())),
    );

    let mut v: Vec<Complex64> = index
        .terminals()
        .iter()
        .map(|&(node, phase)| {
            if phase.is_neutral() {
                Complex64::new(0.0, 0.0)
            } else if Some(node) == primary {
                Complex64::from_polar(
                    transformer.as_ref().unwrap().0.model.primary_phase_base(),
                    phase.reference_angle(),
                )
            } else {
                Complex64::from_polar(v_base, phase.reference_angle() + shift)
            }
        })
        .collect();

    // Loads grouped per node for the backward pass.
    let mut loads_at: Vec<Vec<&Load>> = vec![Vec::new(); grid.nodes.len()];
    for l in loads {
        loads_at[l.node].push(l);
    }
    let v_nom_sq = v_base * v_base;

    let mut branch_currents: Vec<Vec<Complex64>> =
        blocks.iter().map(|b| vec![Complex64::new(0.0, 0.0); b.phases.len()]).collect();
    let mut through: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); index.len()];
    let mut iterations = 0;
    let mut last_update = f64::INFINITY;

    while iterations < options.max_iterations {
        iterations += 1;

        // Backward: load draws, then accumulate to the root.
        for t in through.iter_mut() {
            *t = Complex64::new(0.0, 0.0);
        }
        for (node_idx, node_loads) in loads_at.iter().enumerate() {
            for load in node_loads {
                let p_idx = index
                    .position(node_idx, load.phase)
                    .expect("validated load terminal exists");
                let n_idx = match mode {
                    WireMode::FourWire => index.position(node_idx, Phase::N),
                    WireMode::ThreeWire => None,
                };
                let v_p = v[p_idx];
                let v_n = n_idx.map(|k| v[k]).unwrap_or(Complex64::new(0.0, 0.0));
                let u = v_p - v_n;
                if u.norm() < collapse_v {
                    return Err(PowerFlowError::VoltageCollapse {
                        node: grid.nodes[node_idx].id.clone(),
                        phase: load.phase,
                        magnitude: u.norm(),
                    });
                }
                let draw = match load.model {
                    LoadModel::ConstantPower => {
                        injected_current(Complex64::new(load.p_w, load.q_var), v_p, v_n)?
                    }
                    LoadModel::ConstantImpedance => {
                        u * Complex64::new(load.p_w, -load.q_var) / v_nom_sq
                    }
                };
                through[p_idx] += draw;
                // Return path: through the neutral conductor unless this
                // node's neutral is bonded to earth (or not modeled).
                if let Some(k) = n_idx {
                    if !grid.is_grounded(node_idx) {
                        through[k] -= draw;
                    }
                }
            }
        }
        for &node in tree.pre_order.iter().rev() {
            let Some(k) = tree.parent_branch[node] else {
                continue;
            };
            let parent = tree.parent_of_branch[k];
            let block = &blocks[k];
            for (c, &phase) in block.phases.iter().enumerate() {
                let child_idx = index.position(node, phase);
                let current = match child_idx {
                    Some(idx) => through[idx],
                    None => Complex64::new(0.0, 0.0),
                };
                branch_currents[k][c] = current;
                // Grounded parent neutrals pass the current to earth.
                if let Some(parent_idx) = index.position(parent, phase) {
                    if !(phase.is_neutral() && grid.is_grounded(parent)) {
                        through[parent_idx] += current;
                    }
                }
            }
            // Between two earthed ends the neutral conductor current is not
            // a return path set by KCL (earth takes that role); it is the
            // induced current closing the branch voltage equation with both
            // terminals at zero.
            if mode == WireMode::FourWire && grid.is_grounded(node) && grid.is_grounded(parent) {
                if let Some(n_pos) = block.phases.iter().position(|p| p.is_neutral()) {
                    let coupled: Complex64 = block
                        .phases
                        .iter()
                        .enumerate()
                        .filter(|&(c, _)| c != n_pos)
                        .map(|(c, _)| block.z_total[(n_pos, c)] * branch_currents[k][c])
                        .sum();
                    branch_currents[k][n_pos] = -coupled / block.z_total[(n_pos, n_pos)];
                }
            }
        }

        // Root update.
        let root = tree.root;
        if let Some((link, adm)) = &transformer {
            let i_base = link.model.s_rated_va / (3f64.sqrt() * link.model.v_secondary_ll);
            let i_delivered_pu = Vector3::from_iterator(Phase::ABC.iter().map(|&p| {
                let idx = index.position(root, p).expect("secondary carries abc");
                through[idx] / i_base
            }));
            let v_s = adm.secondary_voltages(&v_primary_pu, &i_delivered_pu);
            for (i, &p) in Phase::ABC.iter().enumerate() {
                let idx = index.position(root, p).expect("secondary carries abc");
                v[idx] = v_s[i] * v_base;
            }
        }
        // Without a transformer the root keeps its fixed source voltages.

        // Forward: apply series drops parent to child.
        let mut max_update = 0.0f64;
        for &node in &tree.pre_order {
            let Some(k) = tree.parent_branch[node] else {
                continue;
            };
            let parent = tree.parent_of_branch[k];
            let block = &blocks[k];
            let drop = &block.z_total
                * DMatrix::from_column_slice(block.phases.len(), 1, &branch_currents[k]);
            for (c, &phase) in block.phases.iter().enumerate() {
                let Some(idx) = index.position(node, phase) else {
                    continue;
                };
                if phase.is_neutral() && grid.is_grounded(node) {
                    v[idx] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let v_parent = index
                    .position(parent, phase)
                    .map(|i| v[i])
                    .unwrap_or(Complex64::new(0.0, 0.0));
                let new = v_parent - drop[(c, 0)];
                max_update = max_update.max((new - v[idx]).norm());
                v[idx] = new;
            }
        }

        last_update = max_update;
        if max_update < tol_v {
            let root = tree.root;
            let slack = Phase::ABC
                .iter()
                .filter_map(|&p| index.position(root, p))
                .map(|idx| v[idx] * through[idx].conj())
                .sum();
            return Ok(PowerFlowSolution {
                mode,
                index,
                voltages: v,
                branch_currents,
                branch_parent: tree.parent_of_branch,
                branch_child: tree.child_of_branch,
                iterations,
                last_update_v: max_update,
                slack_va: slack,
                lv_phase_base_v: v_base,
            });
        }
    }

    Err(PowerFlowError::NonConvergence {
        iterations,
        last_update_v: last_update,
    })
}

/// Conservation audit of a solved sweep.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    /// Power delivered at the root into the LV network, VA.
    pub slack_va: Complex64,
    /// Power consumed by the loads at their solved voltages, VA.
    pub load_va: Complex64,
    /// Series losses over all conductors, VA.
    pub loss_va: Complex64,
    /// slack − loads − losses.
    pub residual_va: Complex64,
    /// |residual| relative to total load apparent power.
    pub relative_residual: f64,
    /// Largest per-conductor KVL residual |ΔV − Z·I|, V. Conductors whose
    /// child terminal is earthed are excluded (the bond breaks series KVL).
    pub kvl_residual_max_v: f64,
}

/// Recomputes load, loss, and root powers from the stored solution and
/// reports how well they balance.
pub fn power_balance_check(
    grid: &GridModel,
    loads: &[Load],
    solution: &PowerFlowSolution,
) -> Result<BalanceReport, PowerFlowError> {
    let v_nom_sq = grid.lv_phase_base_v() * grid.lv_phase_base_v();
    let mut load_va = Complex64::new(0.0, 0.0);
    for load in loads {
        let u = solution
            .phase_to_neutral(load.node, load.phase)
            .ok_or_else(|| ModelError::Invalid(format!(
                "load terminal {}:{} missing from solution",
                grid.nodes[load.node].id, load.phase
            )))?;
        let s = match load.model {
            LoadModel::ConstantPower => {
                let i = injected_current(Complex64::new(load.p_w, load.q_var), u, Complex64::new(0.0, 0.0))?;
                u * i.conj()
            }
            LoadModel::ConstantImpedance => {
                let i = u * Complex64::new(load.p_w, -load.q_var) / v_nom_sq;
                u * i.conj()
            }
        };
        load_va += s;
    }

    let blocks = branch_blocks(grid, solution.mode())?;
    let mut loss_va = Complex64::new(0.0, 0.0);
    let mut kvl_max = 0.0f64;
    for (k, block) in blocks.iter().enumerate() {
        let (parent, child) = solution.branch_orientation(k);
        let currents = solution.branch_current(k);
        let drop = &block.z_total
            * DMatrix::from_column_slice(block.phases.len(), 1, currents);
        for (c, &phase) in block.phases.iter().enumerate() {
            let v_p = solution
                .voltage(parent, phase)
                .unwrap_or(Complex64::new(0.0, 0.0));
            let v_c = solution
                .voltage(child, phase)
                .unwrap_or(Complex64::new(0.0, 0.0));
            loss_va += (v_p - v_c) * currents[c].conj();
            if !(phase.is_neutral() && grid.is_grounded(child)) {
                kvl_max = kvl_max.max((v_p - v_c - drop[(c, 0)]).norm());
            }
        }
    }

    let residual = solution.slack_va() - load_va - loss_va;
    let denom = load_va.norm().max(1.0);
    Ok(BalanceReport {
        slack_va: solution.slack_va(),
        load_va,
        loss_va,
        residual_va: residual,
        relative_residual: residual.norm() / denom,
        kvl_residual_max_v: kvl_max,
    })
}
