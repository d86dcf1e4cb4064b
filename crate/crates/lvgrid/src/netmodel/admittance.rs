//! Nodal admittance assembly over (node, phase) terminal pairs.
//!
//! Three-wire assembly Kron-reduces every line to its phase conductors and
//! treats all neutrals as grounded, which is the conventional model behind
//! three-wire state estimation. Four-wire assembly keeps neutral conductors
//! explicit; only terminals listed in the grounding set are eliminated as
//! known-zero. Entries are siemens; [`AdmittanceMatrix::to_per_unit`]
//! rescales onto the transformer base for estimation work.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::grid::{GridModel, LoadModel};
use super::transformer::{build_transformer_admittance, TransformerAdmittance};
use super::{kron_reduce, ModelError, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireMode {
    ThreeWire,
    FourWire,
}

impl WireMode {
    /// Single-letter tag used in report columns: C conventional, N four-wire.
    pub fn letter(self) -> char {
        match self {
            WireMode::ThreeWire => 'C',
            WireMode::FourWire => 'N',
        }
    }
}

impl std::fmt::Display for WireMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WireMode::ThreeWire => write!(f, "threewire"),
            WireMode::FourWire => write!(f, "fourwire"),
        }
    }
}

/// Bijection between matrix positions and (node, phase) terminals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePhaseIndex {
    entries: Vec<(usize, Phase)>,
    lookup: BTreeMap<(usize, Phase), usize>,
}

impl NodePhaseIndex {
    /// Builds the terminal index for a grid. Terminals follow node order,
    /// phases sorted a, b, c, n within a node. Grounded neutrals are skipped
    /// in four-wire mode; all neutrals are skipped in three-wire mode.
    pub fn for_grid(grid: &GridModel, mode: WireMode) -> NodePhaseIndex {
        let mut entries = Vec::new();
        for (i, node) in grid.nodes.iter().enumerate() {
            for &p in &node.phases {
                let keep = match mode {
                    WireMode::ThreeWire => !p.is_neutral(),
                    WireMode::FourWire => !(p.is_neutral() && grid.is_grounded(i)),
                };
                if keep {
                    entries.push((i, p));
                }
            }
        }
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(k, &e)| (e, k))
            .collect();
        NodePhaseIndex { entries, lookup }
    }

    /// Builds an index over an explicit terminal list, for systems assembled
    /// by hand rather than from a grid.
    pub fn from_terminals(entries: Vec<(usize, Phase)>) -> NodePhaseIndex {
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(k, &e)| (e, k))
            .collect();
        NodePhaseIndex { entries, lookup }
    }

    /// Like [`for_grid`](Self::for_grid), but keeps grounded neutrals in
    /// four-wire mode, so every physical terminal has a slot. Used by
    /// solvers that report grounded neutrals explicitly (pinned at zero).
    pub fn full(grid: &GridModel, mode: WireMode) -> NodePhaseIndex {
        let mut entries = Vec::new();
        for (i, node) in grid.nodes.iter().enumerate() {
            for &p in &node.phases {
                let keep = match mode {
                    WireMode::ThreeWire => !p.is_neutral(),
                    WireMode::FourWire => true,
                };
                if keep {
                    entries.push((i, p));
                }
            }
        }
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(k, &e)| (e, k))
            .collect();
        NodePhaseIndex { entries, lookup }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, node: usize, phase: Phase) -> Option<usize> {
        self.lookup.get(&(node, phase)).copied()
    }

    pub fn terminal(&self, k: usize) -> (usize, Phase) {
        self.entries[k]
    }

    pub fn terminals(&self) -> &[(usize, Phase)] {
        &self.entries
    }
}

/// Complex nodal admittance with its terminal index.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    mode: WireMode,
    index: NodePhaseIndex,
    y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    /// Wraps an explicit matrix; mainly for small hand-built test systems.
    pub fn from_parts(
        mode: WireMode,
        index: NodePhaseIndex,
        y: DMatrix<Complex64>,
    ) -> Result<Self, ModelError> {
        if y.nrows() != index.len() || y.ncols() != index.len() {
            return Err(ModelError::ShapeMismatch {
                rows: y.nrows(),
                cols: y.ncols(),
                roles: index.len(),
            });
        }
        Ok(AdmittanceMatrix { mode, index, y })
    }

    pub fn mode(&self) -> WireMode {
        self.mode
    }

    pub fn index(&self) -> &NodePhaseIndex {
        &self.index
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Entry between two terminals; zero when either is eliminated.
    pub fn entry(&self, a: (usize, Phase), b: (usize, Phase)) -> Complex64 {
        match (self.index.position(a.0, a.1), self.index.position(b.0, b.1)) {
            (Some(i), Some(j)) => self.y[(i, j)],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Rescales a siemens matrix to per-unit on the transformer power base,
    /// using each terminal's own phase voltage base. Entry (r, c) maps to
    /// y·V_base(r)·V_base(c)/(S_base/3).
    pub fn to_per_unit(&self, grid: &GridModel) -> Result<AdmittanceMatrix, ModelError> {
        let s_base = grid
            .power_base_va()
            .ok_or_else(|| ModelError::Invalid("per-unit scaling needs a transformer".into()))?;
        let s_phase = s_base / 3.0;
        let bases: Vec<f64> = self
            .index
            .terminals()
            .iter()
            .map(|&(node, _)| node_phase_base(grid, node))
            .collect();
        let mut y = self.y.clone();
        for r in 0..y.nrows() {
            for c in 0..y.ncols() {
                y[(r, c)] *= bases[r] * bases[c] / s_phase;
            }
        }
        Ok(AdmittanceMatrix {
            mode: self.mode,
            index: self.index.clone(),
            y,
        })
    }
}

/// Phase-to-neutral voltage base of one node, V.
pub(crate) fn node_phase_base(grid: &GridModel, node: usize) -> f64 {
    match &grid.transformer {
        Some(t) if node == t.primary => t.model.primary_phase_base(),
        _ => grid.lv_phase_base_v(),
    }
}

/// Assembles the nodal admittance of a validated grid in siemens.
///
/// Series branches stamp the inverse of their total impedance block; the
/// transformer stamps its four 3×3 blocks scaled to siemens; constant
/// impedance loads stamp shunts between phase and neutral (or phase and
/// ground where the neutral is absent or eliminated). Constant power loads
/// are injections, not admittances, and do not appear.
pub fn assemble_admittance(
    grid: &GridModel,
    mode: WireMode,
) -> Result<AdmittanceMatrix, ModelError> {
    let index = NodePhaseIndex::for_grid(grid, mode);
    let n = index.len();
    let mut y: DMatrix<Complex64> = DMatrix::zeros(n, n);

    let mut add = |a: Option<usize>, b: Option<usize>, v: Complex64| {
        if let (Some(i), Some(j)) = (a, b) {
            y[(i, j)] += v;
        }
    };

    for branch in &grid.branches {
        let (type_name, line) = &grid.line_types[branch.line_type];
        let (z_per_km, phases): (_, Vec<Phase>) = match mode {
            WireMode::FourWire => (line.clone(), branch.phases.clone()),
            WireMode::ThreeWire => {
                if line.has_neutral() {
                    let reduced = kron_reduce(line)?;
                    let kept: Vec<Phase> = branch
                        .phases
                        .iter()
                        .zip(line.roles())
                        .filter(|(_, r)| !r.is_neutral())
                        .map(|(p, _)| *p)
                        .collect();
                    (reduced, kept)
                } else {
                    (line.clone(), branch.phases.clone())
                }
            }
        };
        if phases.is_empty() {
            continue;
        }
        let z_total = z_per_km.matrix() * Complex64::from(branch.length_km);
        let y_block = z_total.clone().try_inverse().ok_or_else(|| {
            ModelError::SingularBranch(format!(
                "{} -> {} ({type_name})",
                grid.nodes[branch.from].id, grid.nodes[branch.to].id,
            ))
        })?;
        let from_idx: Vec<Option<usize>> = phases
            .iter()
            .map(|&p| index.position(branch.from, p))
            .collect();
        let to_idx: Vec<Option<usize>> = phases
            .iter()
            .map(|&p| index.position(branch.to, p))
            .collect();
        for i in 0..phases.len() {
            for j in 0..phases.len() {
                let v = y_block[(i, j)];
                add(from_idx[i], from_idx[j], v);
                add(to_idx[i], to_idx[j], v);
                add(from_idx[i], to_idx[j], -v);
                add(to_idx[i], from_idx[j], -v);
            }
        }
    }

    if let Some(link) = &grid.transformer {
        let t = build_transformer_admittance(&link.model)?;
        let (vp, vs) = (link.model.v_primary_ll, link.model.v_secondary_ll);
        let s = link.model.s_rated_va;
        let blocks = [
            (link.primary, link.primary, TransformerAdmittance::block_to_siemens(&t.y_pp, s, vp, vp)),
            (link.primary, link.secondary, TransformerAdmittance::block_to_siemens(&t.y_ps, s, vp, vs)),
            (link.secondary, link.primary, TransformerAdmittance::block_to_siemens(&t.y_sp, s, vs, vp)),
            (link.secondary, link.secondary, TransformerAdmittance::block_to_siemens(&t.y_ss, s, vs, vs)),
        ];
        for (row_node, col_node, block) in blocks {
            for (i, pi) in Phase::ABC.iter().enumerate() {
                for (j, pj) in Phase::ABC.iter().enumerate() {
                    add(
                        index.position(row_node, *pi),
                        index.position(col_node, *pj),
                        block[(i, j)],
                    );
                }
            }
        }
    }

    let v_nom = grid.lv_phase_base_v();
    for load in &grid.loads {
        if load.model != LoadModel::ConstantImpedance {
            continue;
        }
        // Admittance reproducing the setpoint at nominal phase-neutral voltage.
        let y_load = Complex64::new(load.p_w, -load.q_var) / (v_nom * v_nom);
        let p = index.position(load.node, load.phase);
        let n_term = match mode {
            WireMode::FourWire => index.position(load.node, Phase::N),
            WireMode::ThreeWire => None,
        };
        add(p, p, y_load);
        add(n_term, n_term, y_load);
        add(p, n_term, -y_load);
        add(n_term, p, -y_load);
    }

    AdmittanceMatrix::from_parts(mode, index, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{
        build_line_impedance, Branch, ConductorGeometry, GridModel, Load, Node, NodeKind,
        TransformerLink, TransformerModel,
    };
    use approx::assert_relative_eq;

    fn quad_type(symmetric: bool) -> (String, crate::netmodel::LineImpedance) {
        // Symmetric variant places conductors so that all mutual spacings and
        // all self terms match exactly (equilateral-like fiction for tests).
        let g: Vec<ConductorGeometry> = if symmetric {
            [Phase::A, Phase::B, Phase::C, Phase::N]
                .iter()
                .enumerate()
                .map(|(i, &role)| ConductorGeometry {
                    role,
                    r_ac: 0.32,
                    gmr: 0.0045,
                    x: 0.001 * i as f64, // unused below; replaced by matrix
                    y: 10.0,
                })
                .collect()
        } else {
            [Phase::A, Phase::B, Phase::C, Phase::N]
                .iter()
                .enumerate()
                .map(|(i, &role)| ConductorGeometry {
                    role,
                    r_ac: 0.32,
                    gmr: 0.0045,
                    x: 0.04 * i as f64,
                    y: 10.0,
                })
                .collect()
        };
        if symmetric {
            // Equal self and equal mutual terms cannot come from a planar
            // layout; build the matrix directly.
            let zs = crate::netmodel::carson_self_impedance(0.32, 0.0045).unwrap();
            let zm = crate::netmodel::carson_mutual_impedance(0.08).unwrap();
            let mut m = nalgebra::DMatrix::from_element(4, 4, zm);
            for i in 0..4 {
                m[(i, i)] = zs;
            }
            (
                "sym".into(),
                crate::netmodel::LineImpedance::from_matrix(
                    m,
                    vec![Phase::A, Phase::B, Phase::C, Phase::N],
                )
                .unwrap(),
            )
        } else {
            ("quad".into(), build_line_impedance(&g).unwrap())
        }
    }

    fn abcn() -> Vec<Phase> {
        vec![Phase::A, Phase::B, Phase::C, Phase::N]
    }

    fn line_only_grid(symmetric: bool, ground_source: bool) -> GridModel {
        GridModel {
            nodes: vec![
                Node { id: "s".into(), kind: NodeKind::Source, phases: abcn() },
                Node { id: "c".into(), kind: NodeKind::Consumer, phases: abcn() },
            ],
            branches: vec![Branch { from: 0, to: 1, line_type: 0, length_km: 0.2, phases: abcn() }],
            line_types: vec![quad_type(symmetric)],
            transformer: None,
            loads: vec![],
            grounded: if ground_source { vec![0] } else { vec![] },
            source_phase_v: Some(240.0),
        }
    }

    #[test]
    fn single_branch_threewire_block_pattern() {
        let g = line_only_grid(false, true);
        g.validate().unwrap();
        let adm = assemble_admittance(&g, WireMode::ThreeWire).unwrap();
        assert_eq!(adm.dim(), 6);

        let line = &g.line_types[0].1;
        let reduced = kron_reduce(line).unwrap();
        let z_total = reduced.matrix() * Complex64::from(0.2);
        let y_oracle = z_total.try_inverse().unwrap();
        for (i, pi) in Phase::ABC.iter().enumerate() {
            for (j, pj) in Phase::ABC.iter().enumerate() {
                let same = adm.entry((0, *pi), (0, *pj));
                let far = adm.entry((1, *pi), (1, *pj));
                let cross = adm.entry((0, *pi), (1, *pj));
                assert_relative_eq!(same.re, y_oracle[(i, j)].re, max_relative = 1e-12);
                assert_relative_eq!(same.im, y_oracle[(i, j)].im, max_relative = 1e-12);
                assert_eq!(same, far);
                assert_relative_eq!(cross.re, -y_oracle[(i, j)].re, max_relative = 1e-12);
                assert_relative_eq!(cross.im, -y_oracle[(i, j)].im, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn fourwire_index_drops_grounded_neutral() {
        let g = line_only_grid(false, true);
        let adm = assemble_admittance(&g, WireMode::FourWire).unwrap();
        // 2 nodes × 4 terminals − 1 grounded neutral.
        assert_eq!(adm.dim(), 7);
        assert!(adm.index().position(0, Phase::N).is_none());
        assert!(adm.index().position(1, Phase::N).is_some());
    }

    #[test]
    fn floating_network_rows_sum_to_zero() {
        // No grounding, no transformer, no shunts: every row of Y sums to
        // zero because each branch block only moves current between ends.
        let g = line_only_grid(false, false);
        let adm = assemble_admittance(&g, WireMode::FourWire).unwrap();
        assert_eq!(adm.dim(), 8);
        let scale = adm
            .matrix()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        for r in 0..adm.dim() {
            let sum: Complex64 = (0..adm.dim()).map(|c| adm.matrix()[(r, c)]).sum();
            assert!(sum.norm() <= 1e-12 * scale, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn balanced_line_phase_blocks_cyclically_symmetric() {
        let g = line_only_grid(true, true);
        let adm = assemble_admittance(&g, WireMode::FourWire).unwrap();
        let rot = [Phase::B, Phase::C, Phase::A];
        for (i, &pi) in Phase::ABC.iter().enumerate() {
            for (j, &pj) in Phase::ABC.iter().enumerate() {
                let orig = adm.entry((0, pi), (1, pj));
                let rotated = adm.entry((0, rot[i]), (1, rot[j]));
                assert_relative_eq!(orig.re, rotated.re, max_relative = 1e-12);
                assert_relative_eq!(orig.im, rotated.im, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn transformer_block_lands_in_siemens() {
        let model =
            TransformerModel::from_impedance(800e3, 11e3, 416.0, 0.01, 0.04, -30.0).unwrap();
        let g = GridModel {
            nodes: vec![
                Node { id: "mv".into(), kind: NodeKind::Source, phases: Phase::ABC.to_vec() },
                Node { id: "lv".into(), kind: NodeKind::Junction, phases: abcn() },
                Node { id: "c".into(), kind: NodeKind::Consumer, phases: abcn() },
            ],
            branches: vec![Branch { from: 1, to: 2, line_type: 0, length_km: 0.1, phases: abcn() }],
            line_types: vec![quad_type(false)],
            transformer: Some(TransformerLink { model: model.clone(), primary: 0, secondary: 1 }),
            loads: vec![],
            grounded: vec![1],
            source_phase_v: None,
        };
        g.validate().unwrap();
        let adm = assemble_admittance(&g, WireMode::FourWire).unwrap();
        // 3 MV + 3 LV (neutral grounded) + 4 consumer terminals.
        assert_eq!(adm.dim(), 10);

        let t = build_transformer_admittance(&model).unwrap();
        let pp = TransformerAdmittance::block_to_siemens(&t.y_pp, 800e3, 11e3, 11e3);
        let ps = TransformerAdmittance::block_to_siemens(&t.y_ps, 800e3, 11e3, 416.0);
        for (i, &pi) in Phase::ABC.iter().enumerate() {
            for (j, &pj) in Phase::ABC.iter().enumerate() {
                assert_eq!(adm.entry((0, pi), (0, pj)), pp[(i, j)]);
                assert_eq!(adm.entry((0, pi), (1, pj)), ps[(i, j)]);
            }
        }

        // Per-unit rescaling recovers the connection-matrix values.
        let pu = adm.to_per_unit(&g).unwrap();
        for (i, &pi) in Phase::ABC.iter().enumerate() {
            for (j, &pj) in Phase::ABC.iter().enumerate() {
                assert_relative_eq!(
                    pu.entry((0, pi), (0, pj)).re,
                    t.y_pp[(i, j)].re,
                    epsilon = 1e-12
                );
                assert_relative_eq!(
                    pu.entry((0, pi), (1, pj)).im,
                    t.y_ps[(i, j)].im,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn constant_impedance_load_stamps_shunt() {
        let mut g = line_only_grid(false, true);
        g.loads.push(Load {
            node: 1,
            phase: Phase::A,
            p_w: 2400.0,
            q_var: 0.0,
            model: crate::netmodel::LoadModel::ConstantImpedance,
        });
        let base = assemble_admittance(&line_only_grid(false, true), WireMode::FourWire).unwrap();
        let adm = assemble_admittance(&g, WireMode::FourWire).unwrap();
        let y_load = Complex64::new(2400.0 / (240.0 * 240.0), 0.0);
        let delta = adm.entry((1, Phase::A), (1, Phase::A)) - base.entry((1, Phase::A), (1, Phase::A));
        assert_relative_eq!(delta.re, y_load.re, max_relative = 1e-12);
        let cross = adm.entry((1, Phase::A), (1, Phase::N)) - base.entry((1, Phase::A), (1, Phase::N));
        assert_relative_eq!(cross.re, -y_load.re, max_relative = 1e-12);
    }

    #[test]
    fn singular_branch_is_reported() {
        let mut g = line_only_grid(false, true);
        let zeros = nalgebra::DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
        g.line_types[0] =
            ("dead".into(), crate::netmodel::LineImpedance::from_matrix(zeros, abcn()).unwrap());
        assert!(matches!(
            assemble_admittance(&g, WireMode::FourWire),
            Err(ModelError::SingularBranch(_))
        ));
    }
}
