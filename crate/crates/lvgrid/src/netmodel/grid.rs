//! Feeder description: nodes, branches, transformer, loads, grounding.
//!
//! A grid is a radial LV network fed either through an MV/LV transformer
//! (the in-scope configuration) or directly from a fixed-voltage source node
//! (useful for small test networks). Validation checks the structural rules
//! once; the rest of the crate then trusts the model.

use super::{LineImpedance, ModelError, Phase, TransformerModel};
use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Slack side: MV terminal of the transformer, or the root of a
    /// transformer-less test network.
    Source,
    /// Pole or cabinet without load or meter; all its injections are zero.
    Junction,
    /// Metered customer connection.
    Consumer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Terminals present at the node, sorted a, b, c, n.
    pub phases: Vec<Phase>,
}

impl Node {
    pub fn has_phase(&self, p: Phase) -> bool {
        self.phases.contains(&p)
    }
}

/// Series line segment between two nodes. `phases[i]` names the node terminal
/// conductor `i` of the line type lands on, at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub line_type: usize,
    pub length_km: f64,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadModel {
    /// Consumes its P, Q setpoint regardless of voltage.
    ConstantPower,
    /// Admittance fixed from the setpoint at nominal voltage.
    ConstantImpedance,
}

/// Single-phase load drawn between a phase terminal and the node's neutral.
#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub node: usize,
    pub phase: Phase,
    pub p_w: f64,
    pub q_var: f64,
    pub model: LoadModel,
}

/// Transformer plus its terminal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLink {
    pub model: TransformerModel,
    pub primary: usize,
    pub secondary: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
    /// Named line types; branches refer to them by index.
    pub line_types: Vec<(String, LineImpedance)>,
    pub transformer: Option<TransformerLink>,
    pub loads: Vec<Load>,
    /// Nodes whose neutral terminal is bonded to earth (potential zero).
    pub grounded: Vec<usize>,
    /// Phase-to-neutral source magnitude, V; required without a transformer.
    pub source_phase_v: Option<f64>,
}

/// Tree orientation of a validated radial grid. Branch `k` of the grid
/// carries current from `parent_of_branch[k]` towards `child_of_branch[k]`.
#[derive(Debug, Clone)]
pub struct RadialTree {
    pub root: usize,
    /// Nodes in deterministic pre-order, root first.
    pub pre_order: Vec<usize>,
    /// Per node: branch connecting it to its parent (None for the root and
    /// the transformer primary).
    pub parent_branch: Vec<Option<usize>>,
    pub parent_of_branch: Vec<usize>,
    pub child_of_branch: Vec<usize>,
}

impl GridModel {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Root of the LV tree: transformer secondary, or the source node.
    pub fn lv_root(&self) -> usize {
        match &self.transformer {
            Some(t) => t.secondary,
            None => self
                .nodes
                .iter()
                .position(|n| n.kind == NodeKind::Source)
                .expect("validated grid has a source"),
        }
    }

    /// LV phase-to-neutral voltage base, V.
    pub fn lv_phase_base_v(&self) -> f64 {
        match &self.transformer {
            Some(t) => t.model.secondary_phase_base(),
            None => self.source_phase_v.expect("validated grid has a source voltage"),
        }
    }

    /// Power base for per-unit work: the transformer rating.
    pub fn power_base_va(&self) -> Option<f64> {
        self.transformer.as_ref().map(|t| t.model.s_rated_va)
    }

    pub fn is_grounded(&self, node: usize) -> bool {
        self.grounded.contains(&node)
    }

    /// Total series impedance of a branch in Ω, over its conductors.
    pub fn branch_impedance(&self, branch: &Branch) -> DMatrix<Complex64> {
        self.line_types[branch.line_type].1.matrix() * Complex64::from(branch.length_km)
    }

    /// Loads attached to one node terminal.
    pub fn loads_at(&self, node: usize, phase: Phase) -> impl Iterator<Item = &Load> {
        self.loads
            .iter()
            .filter(move |l| l.node == node && l.phase == phase)
    }

    /// Consumer nodes in index order.
    pub fn consumers(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Consumer)
            .map(|(i, _)| i)
    }

    /// Zero-injection nodes: junctions (and the transformer secondary if it
    /// is one). The source is the slack and never in the set.
    pub fn zero_injection_nodes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Junction)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks structural rules and returns the oriented radial tree.
    pub fn validate(&self) -> Result<RadialTree, ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::Invalid("grid has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.is_empty() {
                return Err(ModelError::Invalid(format!("node {i} has an empty id")));
            }
            if self.nodes[..i].iter().any(|m| m.id == n.id) {
                return Err(ModelError::Invalid(format!("duplicate node id {:?}", n.id)));
            }
            if n.phases.is_empty() {
                return Err(ModelError::Invalid(format!("node {:?} has no phases", n.id)));
            }
            let mut sorted = n.phases.clone();
            sorted.sort();
            sorted.dedup();
            if sorted != n.phases {
                return Err(ModelError::Invalid(format!(
                    "node {:?} phases must be unique and sorted a,b,c,n",
                    n.id
                )));
            }
            if n.kind == NodeKind::Consumer {
                if !n.has_phase(Phase::N) {
                    return Err(ModelError::Invalid(format!(
                        "consumer node {:?} must carry a neutral terminal",
                        n.id
                    )));
                }
                if !n.phases.iter().any(|p| !p.is_neutral()) {
                    return Err(ModelError::Invalid(format!(
                        "consumer node {:?} must carry at least one phase",
                        n.id
                    )));
                }
            }
        }

        let sources: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Source)
            .map(|(i, _)| i)
            .collect();
        if sources.len() != 1 {
            return Err(ModelError::Invalid(format!(
                "grid must have exactly one source node, found {}",
                sources.len()
            )));
        }
        let source = sources[0];

        if let Some(t) = &self.transformer {
            if t.primary >= self.nodes.len() || t.secondary >= self.nodes.len() {
                return Err(ModelError::Invalid("transformer node out of range".into()));
            }
            if t.primary != source {
                return Err(ModelError::Invalid(
                    "transformer primary must be the source node".into(),
                ));
            }
            if t.secondary == t.primary {
                return Err(ModelError::Invalid(
                    "transformer primary and secondary must differ".into(),
                ));
            }
            for p in Phase::ABC {
                if !self.nodes[t.primary].has_phase(p) || !self.nodes[t.secondary].has_phase(p) {
                    return Err(ModelError::Invalid(
                        "transformer terminals must carry phases a, b, c".into(),
                    ));
                }
            }
            if t.model.secondary_grounded && !self.is_grounded(t.secondary) {
                return Err(ModelError::Invalid(
                    "transformer secondary star point is earthed: list its node under grounding"
                        .into(),
                ));
            }
        } else if self.source_phase_v.is_none() {
            return Err(ModelError::Invalid(
                "grid without a transformer needs a source voltage".into(),
            ));
        }

        for (k, b) in self.branches.iter().enumerate() {
            let name = || format!("branch {k} ({} -> {})", b.from, b.to);
            if b.from >= self.nodes.len() || b.to >= self.nodes.len() || b.from == b.to {
                return Err(ModelError::Invalid(format!("{} endpoints invalid", name())));
            }
            if b.line_type >= self.line_types.len() {
                return Err(ModelError::Invalid(format!("{} unknown line type", name())));
            }
            if !(b.length_km > 0.0) {
                return Err(ModelError::NonPositive {
                    name: "length_km",
                    value: b.length_km,
                });
            }
            let lt = &self.line_types[b.line_type].1;
            if b.phases.len() != lt.n_conductors() {
                return Err(ModelError::Invalid(format!(
                    "{} maps {} phases onto a {}-conductor line type",
                    name(),
                    b.phases.len(),
                    lt.n_conductors()
                )));
            }
            for (i, (&p, &role)) in b.phases.iter().zip(lt.roles()).enumerate() {
                if p.is_neutral() != role.is_neutral() {
                    return Err(ModelError::Invalid(format!(
                        "{} conductor {i} is {} in the line type but mapped to terminal {p}",
                        name(),
                        role
                    )));
                }
                for node in [b.from, b.to] {
                    if !self.nodes[node].has_phase(p) {
                        return Err(ModelError::Invalid(format!(
                            "{} uses terminal {p} missing at node {:?}",
                            name(),
                            self.nodes[node].id
                        )));
                    }
                }
                if b.phases[..i].contains(&p) {
                    return Err(ModelError::Invalid(format!(
                        "{} maps terminal {p} twice",
                        name()
                    )));
                }
            }
            if self.transformer.is_some() && (b.from == source || b.to == source) {
                return Err(ModelError::Invalid(format!(
                    "{} connects to the MV source; LV lines must stay behind the transformer",
                    name()
                )));
            }
        }

        for (k, l) in self.loads.iter().enumerate() {
            if l.node >= self.nodes.len() {
                return Err(ModelError::Invalid(format!("load {k} node out of range")));
            }
            let node = &self.nodes[l.node];
            if node.kind != NodeKind::Consumer {
                return Err(ModelError::Invalid(format!(
                    "load {k} sits on non-consumer node {:?}; junction injections must stay zero",
                    node.id
                )));
            }
            if l.phase.is_neutral() || !node.has_phase(l.phase) {
                return Err(ModelError::Invalid(format!(
                    "load {k} connects to terminal {} missing or invalid at node {:?}",
                    l.phase, node.id
                )));
            }
            if !l.p_w.is_finite() || !l.q_var.is_finite() || l.p_w < 0.0 {
                return Err(ModelError::Invalid(format!(
                    "load {k} has invalid setpoint P={} Q={}",
                    l.p_w, l.q_var
                )));
            }
        }

        for &g in &self.grounded {
            if g >= self.nodes.len() {
                return Err(ModelError::Invalid("grounded node out of range".into()));
            }
            if !self.nodes[g].has_phase(Phase::N) {
                return Err(ModelError::Invalid(format!(
                    "grounded node {:?} has no neutral terminal",
                    self.nodes[g].id
                )));
            }
        }

        self.build_tree()
    }

    /// Orients the LV branches into a tree rooted at the LV root, visiting
    /// children in node-id order for deterministic sweeps.
    fn build_tree(&self) -> Result<RadialTree, ModelError> {
        let root = self.lv_root();
        let n = self.nodes.len();
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, b) in self.branches.iter().enumerate() {
            adjacency[b.from].push((k, b.to));
            adjacency[b.to].push((k, b.from));
        }
        for adj in &mut adjacency {
            adj.sort_by(|a, b| self.nodes[a.1].id.cmp(&self.nodes[b.1].id));
        }

        let mut parent_branch = vec![None; n];
        let mut parent_of_branch = vec![usize::MAX; self.branches.len()];
        let mut child_of_branch = vec![usize::MAX; self.branches.len()];
        let mut visited = vec![false; n];
        let mut pre_order = Vec::with_capacity(n);
        let mut stack = vec![root];
        visited[root] = true;
        while let Some(u) = stack.pop() {
            pre_order.push(u);
            // Reverse keeps the id-sorted order on a LIFO stack.
            for &(k, v) in adjacency[u].iter().rev() {
                if Some(k) == parent_branch[u] {
                    continue;
                }
                if visited[v] {
                    return Err(ModelError::NonRadial(format!(
                        "branch {k} closes a loop at node {:?}",
                        self.nodes[v].id
                    )));
                }
                visited[v] = true;
                parent_branch[v] = Some(k);
                parent_of_branch[k] = u;
                child_of_branch[k] = v;
                stack.push(v);
            }
        }

        let primary = self.transformer.as_ref().map(|t| t.primary);
        for (i, n) in self.nodes.iter().enumerate() {
            if !visited[i] && Some(i) != primary {
                return Err(ModelError::NonRadial(format!(
                    "node {:?} is not connected to the LV root",
                    n.id
                )));
            }
        }

        // Every phase of a child must arrive through its parent branch.
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(k) = parent_branch[i] {
                for &p in &node.phases {
                    if !self.branches[k].phases.contains(&p) {
                        return Err(ModelError::Invalid(format!(
                            "node {:?} terminal {p} is not fed by its supply branch",
                            node.id
                        )));
                    }
                }
            }
        }

        Ok(RadialTree {
            root,
            pre_order,
            parent_branch,
            parent_of_branch,
            child_of_branch,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{build_line_impedance, ConductorGeometry};

    fn line_type() -> (String, LineImpedance) {
        let g: Vec<ConductorGeometry> = [Phase::A, Phase::B, Phase::C, Phase::N]
            .iter()
            .enumerate()
            .map(|(i, &role)| ConductorGeometry {
                role,
                r_ac: 0.32,
                gmr: 0.0045,
                x: 0.04 * i as f64,
                y: 10.0,
            })
            .collect();
        ("quad".into(), build_line_impedance(&g).unwrap())
    }

    fn abcn() -> Vec<Phase> {
        vec![Phase::A, Phase::B, Phase::C, Phase::N]
    }

    fn small_grid() -> GridModel {
        GridModel {
            nodes: vec![
                Node { id: "s".into(), kind: NodeKind::Source, phases: abcn() },
                Node { id: "m".into(), kind: NodeKind::Junction, phases: abcn() },
                Node { id: "c1".into(), kind: NodeKind::Consumer, phases: abcn() },
                Node { id: "c2".into(), kind: NodeKind::Consumer, phases: abcn() },
            ],
            branches: vec![
                Branch { from: 0, to: 1, line_type: 0, length_km: 0.1, phases: abcn() },
                Branch { from: 1, to: 2, line_type: 0, length_km: 0.05, phases: abcn() },
                Branch { from: 1, to: 3, line_type: 0, length_km: 0.05, phases: abcn() },
            ],
            line_types: vec![line_type()],
            transformer: None,
            loads: vec![Load {
                node: 2,
                phase: Phase::A,
                p_w: 5000.0,
                q_var: 1000.0,
                model: LoadModel::ConstantPower,
            }],
            grounded: vec![0],
            source_phase_v: Some(240.0),
        }
    }

    #[test]
    fn validates_and_orients_tree() {
        let g = small_grid();
        let tree = g.validate().unwrap();
        assert_eq!(tree.root, 0);
        assert_eq!(tree.pre_order, vec![0, 1, 2, 3]);
        assert_eq!(tree.parent_branch, vec![None, Some(0), Some(1), Some(2)]);
        assert_eq!(tree.parent_of_branch, vec![0, 1, 1]);
        assert_eq!(tree.child_of_branch, vec![1, 2, 3]);
    }

    #[test]
    fn rejects_loops_and_islands() {
        let mut g = small_grid();
        g.branches.push(Branch { from: 2, to: 3, line_type: 0, length_km: 0.05, phases: abcn() });
        assert!(matches!(g.validate(), Err(ModelError::NonRadial(_))));

        let mut g = small_grid();
        g.branches.pop();
        assert!(matches!(g.validate(), Err(ModelError::NonRadial(_))));
    }

    #[test]
    fn rejects_loads_on_junctions() {
        let mut g = small_grid();
        g.loads[0].node = 1;
        assert!(g.validate().is_err());
    }

    #[test]
    fn rejects_consumer_without_neutral() {
        let mut g = small_grid();
        g.nodes[2].phases = vec![Phase::A, Phase::B, Phase::C];
        assert!(g.validate().is_err());
    }

    #[test]
    fn rejects_unfed_child_terminal() {
        let mut g = small_grid();
        // c2 keeps all four terminals but its supply drop carries only a+n.
        let pair: Vec<ConductorGeometry> = [Phase::A, Phase::N]
            .iter()
            .enumerate()
            .map(|(i, &role)| ConductorGeometry {
                role,
                r_ac: 1.2,
                gmr: 0.0032,
                x: 0.03 * i as f64,
                y: 10.0,
            })
            .collect();
        g.line_types.push(("pair".into(), build_line_impedance(&pair).unwrap()));
        g.branches[2] = Branch {
            from: 1,
            to: 3,
            line_type: 1,
            length_km: 0.02,
            phases: vec![Phase::A, Phase::N],
        };
        let err = g.validate().unwrap_err();
        assert!(err.to_string().contains("not fed"), "{err}");

        // Narrowing the node's terminals to the drop makes it valid again.
        g.nodes[3].phases = vec![Phase::A, Phase::N];
        assert!(g.validate().is_ok());
    }

    #[test]
    fn deterministic_child_order_follows_ids() {
        let mut g = small_grid();
        // Swap declaration order of the two consumer branches; pre-order is
        // still sorted by node id.
        g.branches.swap(1, 2);
        let tree = g.validate().unwrap();
        assert_eq!(tree.pre_order, vec![0, 1, 2, 3]);
    }
}
