//! Network modeling: conductor geometry to nodal admittance.
//!
//! The submodules build series impedance matrices from geometry via Carson's
//! equations ([`carson`]), model the MV/LV distribution transformer
//! ([`transformer`]), describe a radial feeder ([`grid`]), parse and emit the
//! sectioned feeder text format ([`feeder`]), scale a feeder into benchmark
//! scenarios ([`scenario`]), and assemble the complex nodal admittance matrix
//! in three-wire or four-wire form ([`admittance`]).

mod admittance;
mod carson;
mod feeder;
mod grid;
mod scenario;
mod transformer;

pub use admittance::{assemble_admittance, AdmittanceMatrix, NodePhaseIndex, WireMode};
pub(crate) use admittance::node_phase_base;
pub use carson::{
    build_line_impedance, carson_mutual_impedance, carson_self_impedance, kron_reduce,
    ConductorGeometry, LineImpedance,
};
pub use feeder::{
    builtin_feeder, builtin_feeder_names, builtin_line_types, load_feeder, parse_feeder,
};
pub use grid::{Branch, GridModel, Load, LoadModel, Node, NodeKind, TransformerLink};
pub use scenario::apply_scenario;
pub use transformer::{build_transformer_admittance, TransformerAdmittance, TransformerModel};

use thiserror::Error;

/// Conductor role at a node terminal or within a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
    N,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::A, Phase::B, Phase::C, Phase::N];
    pub const ABC: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn is_neutral(self) -> bool {
        self == Phase::N
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
            Phase::N => 'n',
        }
    }

    pub fn from_letter(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            'n' => Some(Phase::N),
            _ => None,
        }
    }

    /// Nominal positive-sequence angle of the phase, radians. Zero for the neutral.
    pub fn reference_angle(self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * PI / 3.0,
            Phase::C => 2.0 * PI / 3.0,
            Phase::N => 0.0,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Errors raised while building or validating network models.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("conductor parameter must be positive: {name} = {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("conductors {0} and {1} are coincident")]
    CoincidentConductors(usize, usize),
    #[error("line has {0} conductors tagged neutral, at most one is allowed")]
    MultipleNeutrals(usize),
    #[error("duplicate conductor role {0} in line")]
    DuplicateRole(Phase),
    #[error("line has no conductors")]
    EmptyLine,
    #[error("line has no neutral conductor to eliminate")]
    NoNeutral,
    #[error("neutral self impedance is singular (|z_nn| = {0:.3e} Ω/km)")]
    SingularNeutral(f64),
    #[error("impedance matrix is not symmetric (|z[{i}][{j}] - z[{j}][{i}]| = {delta:.3e})")]
    Asymmetric { i: usize, j: usize, delta: f64 },
    #[error("impedance matrix is {rows}x{cols} but {roles} roles were given")]
    ShapeMismatch { rows: usize, cols: usize, roles: usize },
    #[error("branch {0} has a singular series impedance block")]
    SingularBranch(String),
    #[error("unknown line type {0:?}")]
    UnknownLineType(String),
    #[error("feeder line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid feeder model: {0}")]
    Invalid(String),
    #[error("LV network is not radial: {0}")]
    NonRadial(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
