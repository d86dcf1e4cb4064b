//! Sectioned text format for feeders, plus built-in line types and feeders.
//!
//! The format is line oriented UTF-8: `#` starts a comment, blank lines are
//! ignored, `[section]` headers group comma-delimited records. See
//! `docs/formats.md` in the repository root for the full grammar.
//!
//! Two line types are built in and can be referenced by name without being
//! defined in the file: `4x100`, a four-conductor 100 mm² mains cable, and
//! `2x22`, a two-conductor 22 mm² service drop (one phase plus neutral).
//! Both carry measured R and L data converted to reactance at 50 Hz.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::grid::{Branch, GridModel, Load, LoadModel, Node, NodeKind, TransformerLink};
use super::{
    build_line_impedance, ConductorGeometry, LineImpedance, ModelError, Phase, TransformerModel,
};

/// System frequency for reactance data, Hz.
pub const SYSTEM_FREQUENCY_HZ: f64 = 50.0;

/// Measured per-km parameters of the built-in 4×100 mm² mains cable:
/// (resistance Ω/km, inductance H/km), row-major, conductors a, b, c, n.
const MAINS_4X100_R: [[f64; 4]; 4] = [
    [0.3187, 0.0482, 0.0482, 0.0482],
    [0.0482, 0.3187, 0.0482, 0.0483],
    [0.0482, 0.0482, 0.3188, 0.0483],
    [0.0482, 0.0483, 0.0483, 0.3188],
];
const MAINS_4X100_L: [[f64; 4]; 4] = [
    [0.0024, 0.0016, 0.0014, 0.0013],
    [0.0016, 0.0024, 0.0016, 0.0014],
    [0.0014, 0.0016, 0.0024, 0.0016],
    [0.0013, 0.0014, 0.0016, 0.0024],
];

/// Measured per-km parameters of the built-in 2×22 mm² service drop:
/// conductors phase, neutral.
const DROP_2X22_R: [[f64; 2]; 2] = [[1.2753, 0.0482], [0.0482, 1.2753]];
const DROP_2X22_L: [[f64; 2]; 2] = [[0.0025, 0.0016], [0.0016, 0.0025]];

fn impedance_from_rl<const N: usize>(
    r: &[[f64; N]; N],
    l: &[[f64; N]; N],
    roles: Vec<Phase>,
) -> LineImpedance {
    let w = 2.0 * std::f64::consts::PI * SYSTEM_FREQUENCY_HZ;
    let mut z = DMatrix::zeros(N, N);
    for i in 0..N {
        for j in 0..N {
            z[(i, j)] = Complex64::new(r[i][j], w * l[i][j]);
        }
    }
    LineImpedance::from_matrix(z, roles).expect("built-in line data is consistent")
}

/// Built-in line types, in registration order.
pub fn builtin_line_types() -> Vec<(String, LineImpedance)> {
    vec![
        (
            "4x100".to_string(),
            impedance_from_rl(&MAINS_4X100_R, &MAINS_4X100_L, vec![Phase::A, Phase::B, Phase::C, Phase::N]),
        ),
        (
            "2x22".to_string(),
            impedance_from_rl(&DROP_2X22_R, &DROP_2X22_L, vec![Phase::A, Phase::N]),
        ),
    ]
}

/// Built-in feeder names accepted by [`builtin_feeder`] and by `load_feeder`
/// through a `builtin:<name>` path.
pub fn builtin_feeder_names() -> &'static [&'static str] {
    &["two-node", "suburban-lv"]
}

/// Returns the text of a built-in feeder.
pub fn builtin_feeder(name: &str) -> Option<&'static str> {
    match name {
        "two-node" => Some(TWO_NODE_FEEDER),
        "suburban-lv" => Some(SUBURBAN_LV_FEEDER),
        _ => None,
    }
}

/// Minimal network for oracle checks: a fixed LV source and one consumer
/// with a single phase-a load over 1 km of mains cable.
const TWO_NODE_FEEDER: &str = "\
# two-node check network
[nodes]
src, source, abcn, 240.0
house, consumer, abcn

[branches]
src, house, 4x100, 1.0

[loads]
house, a, 5000, 1643.4

[grounding]
src
";

/// Synthetic suburban LV feeder: MV source, 250 kVA delta/wye transformer,
/// three short mains runs with pole-top junctions, thirteen consumers with
/// deliberately unbalanced phase assignment (5×a, 4×b, 3×c single-phase plus
/// one three-phase), service drops in 2×22 mm² cable.
const SUBURBAN_LV_FEEDER: &str = "\
# suburban LV feeder, 21 nodes
[nodes]
mv,     source,   abc
sub,    junction, abcn
f1p1,   junction, abcn
f1p2,   junction, abcn
f2p1,   junction, abcn
f2p2,   junction, abcn
f3p1,   junction, abcn
f3p2,   junction, abcn
h01, consumer, an
h02, consumer, bn
h03, consumer, cn
h04, consumer, an
h05, consumer, an
h06, consumer, bn
h07, consumer, an
h08, consumer, cn
h09, consumer, bn
h10, consumer, an
h11, consumer, bn
h12, consumer, cn
h13, consumer, abcn

[transformer]
mv, sub, 250e3, 11e3, 416, 0.0075, 0.045, -30

[branches]
sub,  f1p1, 4x100, 0.025
f1p1, f1p2, 4x100, 0.025
sub,  f2p1, 4x100, 0.030
f2p1, f2p2, 4x100, 0.020
sub,  f3p1, 4x100, 0.020
f3p1, f3p2, 4x100, 0.030
f1p1, h01, 2x22, 0.010, an
f1p1, h02, 2x22, 0.012, bn
f1p2, h03, 2x22, 0.010, cn
f1p2, h04, 2x22, 0.008, an
f1p2, h05, 2x22, 0.014, an
f2p1, h06, 2x22, 0.010, bn
f2p1, h07, 2x22, 0.011, an
f2p2, h08, 2x22, 0.009, cn
f2p2, h09, 2x22, 0.012, bn
f3p1, h10, 2x22, 0.010, an
f3p1, h11, 2x22, 0.013, bn
f3p2, h12, 2x22, 0.010, cn
f3p2, h13, 4x100, 0.015

[loads]
h01, a, 3000, 986.1
h02, b, 2000, 657.4
h03, c, 2500, 821.7
h04, a, 4000, 1314.7
h05, a, 1500, 493.0
h06, b, 2500, 821.7
h07, a, 3500, 1150.4
h08, c, 2000, 657.4
h09, b, 3000, 986.1
h10, a, 2500, 821.7
h11, b, 1800, 591.6
h12, c, 2200, 723.1
h13, abc, 9000, 2958.2

[grounding]
sub
";

/// Loads and validates a feeder from a file path, or from the built-in set
/// when the path has the form `builtin:<name>`.
pub fn load_feeder(path: &str) -> Result<GridModel, ModelError> {
    if let Some(name) = path.strip_prefix("builtin:") {
        let text = builtin_feeder(name).ok_or_else(|| {
            ModelError::Invalid(format!(
                "unknown built-in feeder {name:?}; available: {}",
                builtin_feeder_names().join(", ")
            ))
        })?;
        return parse_feeder(text);
    }
    let text = fs::read_to_string(Path::new(path)).map_err(|source| ModelError::Io {
        path: path.to_string(),
        source,
    })?;
    parse_feeder(&text)
}

/// Parses and validates feeder text.
pub fn parse_feeder(text: &str) -> Result<GridModel, ModelError> {
    let mut parser = Parser::new(text);
    let grid = parser.run()?;
    grid.validate()?;
    Ok(grid)
}

struct RawRecord {
    line_no: usize,
    fields: Vec<String>,
}

struct Parser {
    records: Vec<(String, Vec<RawRecord>)>,
}

impl Parser {
    fn new(text: &str) -> Parser {
        let mut sections: Vec<(String, Vec<RawRecord>)> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                sections.push((line[1..line.len() - 1].trim().to_string(), Vec::new()));
                continue;
            }
            let fields = line.split(',').map(|f| f.trim().to_string()).collect();
            match sections.last_mut() {
                Some((_, records)) => records.push(RawRecord { line_no, fields }),
                None => {
                    // A record before any section header is always an error;
                    // remember it under a marker section.
                    sections.push(("".into(), vec![RawRecord { line_no, fields }]));
                }
            }
        }
        Parser { records: sections }
    }

    fn run(&mut self) -> Result<GridModel, ModelError> {
        let mut line_types = builtin_line_types();
        let builtin_count = line_types.len();
        let mut nodes: Vec<Node> = Vec::new();
        let mut source_phase_v = None;
        let mut branches_raw: Vec<(RawRecordRef, String, String, String, f64, Option<String>)> =
            Vec::new();
        let mut transformer_raw = None;
        let mut loads_raw: Vec<(RawRecordRef, String, String, f64, f64, LoadModel)> = Vec::new();
        let mut grounding_raw: Vec<(RawRecordRef, String)> = Vec::new();

        for (section, records) in &self.records {
            match section.as_str() {
                "" => {
                    let r = &records[0];
                    return Err(err(r.line_no, "record appears before any [section] header"));
                }
                "linetypes" => {
                    let mut i = 0;
                    while i < records.len() {
                        let header = &records[i];
                        i += 1;
                        let consumed =
                            parse_line_type(header, &records[i..], &mut line_types, builtin_count)?;
                        i += consumed;
                    }
                }
                "nodes" => {
                    for r in records {
                        let f = expect_fields(r, 3, 4)?;
                        let kind = match f[1].as_str() {
                            "source" => NodeKind::Source,
                            "junction" => NodeKind::Junction,
                            "consumer" => NodeKind::Consumer,
                            other => {
                                return Err(err(
                                    r.line_no,
                                    &format!("unknown node kind {other:?} (source|junction|consumer)"),
                                ))
                            }
                        };
                        let phases = parse_phase_set(r.line_no, &f[2])?;
                        if f.len() == 4 {
                            if kind != NodeKind::Source {
                                return Err(err(
                                    r.line_no,
                                    "only a source node may carry a voltage field",
                                ));
                            }
                            source_phase_v = Some(parse_f64(r.line_no, &f[3], "source voltage")?);
                        }
                        nodes.push(Node { id: f[0].clone(), kind, phases });
                    }
                }
                "branches" => {
                    for r in records {
                        let f = expect_fields(r, 4, 5)?;
                        branches_raw.push((
                            RawRecordRef(r.line_no),
                            f[0].clone(),
                            f[1].clone(),
                            f[2].clone(),
                            parse_f64(r.line_no, &f[3], "length_km")?,
                            f.get(4).cloned(),
                        ));
                    }
                }
                "transformer" => {
                    for r in records {
                        if transformer_raw.is_some() {
                            return Err(err(r.line_no, "more than one transformer record"));
                        }
                        let f = expect_fields(r, 7, 8)?;
                        let shift = match f.get(7) {
                            Some(s) => parse_f64(r.line_no, s, "phase shift")?,
                            None => -30.0,
                        };
                        let model = TransformerModel::from_impedance(
                            parse_f64(r.line_no, &f[2], "rated power")?,
                            parse_f64(r.line_no, &f[3], "primary voltage")?,
                            parse_f64(r.line_no, &f[4], "secondary voltage")?,
                            parse_f64(r.line_no, &f[5], "r_pu")?,
                            parse_f64(r.line_no, &f[6], "x_pu")?,
                            shift,
                        )
                        .map_err(|e| err(r.line_no, &e.to_string()))?;
                        transformer_raw = Some((RawRecordRef(r.line_no), f[0].clone(), f[1].clone(), model));
                    }
                }
                "loads" => {
                    for r in records {
                        let f = expect_fields(r, 4, 5)?;
                        let model = match f.get(4).map(|s| s.as_str()) {
                            None | Some("power") => LoadModel::ConstantPower,
                            Some("impedance") => LoadModel::ConstantImpedance,
                            Some(other) => {
                                return Err(err(
                                    r.line_no,
                                    &format!("unknown load model {other:?} (power|impedance)"),
                                ))
                            }
                        };
                        loads_raw.push((
                            RawRecordRef(r.line_no),
                            f[0].clone(),
                            f[1].clone(),
                            parse_f64(r.line_no, &f[2], "P")?,
                            parse_f64(r.line_no, &f[3], "Q")?,
                            model,
                        ));
                    }
                }
                "grounding" => {
                    for r in records {
                        let f = expect_fields(r, 1, 1)?;
                        grounding_raw.push((RawRecordRef(r.line_no), f[0].clone()));
                    }
                }
                other => {
                    let line_no = records.first().map(|r| r.line_no).unwrap_or(0);
                    return Err(err(line_no, &format!("unknown section [{other}]")));
                }
            }
        }

        let node_index = |line_no: usize, id: &str| -> Result<usize, ModelError> {
            nodes
                .iter()
                .position(|n| n.id == id)
                .ok_or_else(|| err(line_no, &format!("unknown node {id:?}")))
        };
        let type_index = |line_no: usize, name: &str| -> Result<usize, ModelError> {
            line_types
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| err(line_no, &format!("unknown line type {name:?}")))
        };

        let mut branches = Vec::new();
        for (r, from, to, type_name, length_km, phases) in branches_raw {
            let line_type = type_index(r.0, &type_name)?;
            let phases = match phases {
                Some(s) => parse_phase_list(r.0, &s)?,
                None => line_types[line_type].1.roles().to_vec(),
            };
            branches.push(Branch {
                from: node_index(r.0, &from)?,
                to: node_index(r.0, &to)?,
                line_type,
                length_km,
                phases,
            });
        }

        let transformer = match transformer_raw {
            Some((r, primary, secondary, model)) => Some(TransformerLink {
                primary: node_index(r.0, &primary)?,
                secondary: node_index(r.0, &secondary)?,
                model,
            }),
            None => None,
        };

        let mut loads = Vec::new();
        for (r, node_id, phases, p, q, model) in loads_raw {
            let node = node_index(r.0, &node_id)?;
            let phase_list = parse_phase_set(r.0, &phases)?;
            if phase_list.iter().any(|p| p.is_neutral()) {
                return Err(err(r.0, "loads connect phase terminals, not the neutral"));
            }
            let share = phase_list.len() as f64;
            for phase in phase_list {
                loads.push(Load {
                    node,
                    phase,
                    p_w: p / share,
                    q_var: q / share,
                    model,
                });
            }
        }

        let mut grounded = Vec::new();
        for (r, id) in grounding_raw {
            grounded.push(node_index(r.0, &id)?);
        }
        grounded.sort_unstable();
        grounded.dedup();

        Ok(GridModel {
            nodes,
            branches,
            line_types,
            transformer,
            loads,
            grounded,
            source_phase_v,
        })
    }
}

struct RawRecordRef(usize);

fn err(line_no: usize, msg: &str) -> ModelError {
    ModelError::Parse {
        line: line_no,
        msg: msg.to_string(),
    }
}

fn expect_fields(r: &RawRecord, min: usize, max: usize) -> Result<&Vec<String>, ModelError> {
    if r.fields.len() < min || r.fields.len() > max {
        return Err(err(
            r.line_no,
            &format!(
                "expected {} fields, got {}",
                if min == max {
                    format!("{min}")
                } else {
                    format!("{min}..{max}")
                },
                r.fields.len()
            ),
        ));
    }
    Ok(&r.fields)
}

fn parse_f64(line_no: usize, s: &str, what: &str) -> Result<f64, ModelError> {
    s.parse::<f64>()
        .map_err(|_| err(line_no, &format!("cannot parse {what} from {s:?}")))
}

/// Phase letters as a set: sorted, duplicates rejected.
fn parse_phase_set(line_no: usize, s: &str) -> Result<Vec<Phase>, ModelError> {
    let mut phases = parse_phase_list(line_no, s)?;
    let len = phases.len();
    phases.sort_unstable();
    phases.dedup();
    if phases.len() != len {
        return Err(err(line_no, &format!("duplicate phase letter in {s:?}")));
    }
    Ok(phases)
}

/// Phase letters in written order (order is significant for branch maps).
fn parse_phase_list(line_no: usize, s: &str) -> Result<Vec<Phase>, ModelError> {
    s.chars()
        .map(|c| {
            Phase::from_letter(c).ok_or_else(|| err(line_no, &format!("unknown phase letter {c:?}")))
        })
        .collect()
}

/// Parses one line-type definition. Returns how many follow-up records the
/// definition consumed.
fn parse_line_type(
    header: &RawRecord,
    rest: &[RawRecord],
    line_types: &mut Vec<(String, LineImpedance)>,
    builtin_count: usize,
) -> Result<usize, ModelError> {
    let f = expect_fields(header, 3, 4)?;
    let name = f[0].clone();
    if line_types[..builtin_count].iter().any(|(n, _)| *n == name) {
        return Err(err(
            header.line_no,
            &format!("line type {name:?} shadows a built-in type"),
        ));
    }
    if line_types.iter().any(|(n, _)| *n == name) {
        return Err(err(header.line_no, &format!("duplicate line type {name:?}")));
    }
    let n: usize = f[2]
        .parse()
        .map_err(|_| err(header.line_no, &format!("bad conductor count {:?}", f[2])))?;
    if n == 0 || n > 4 {
        return Err(err(header.line_no, "conductor count must be 1..=4"));
    }
    if rest.len() < n {
        return Err(err(
            header.line_no,
            &format!("line type {name:?} needs {n} data records"),
        ));
    }

    let impedance = match f[1].as_str() {
        "geometry" => {
            if f.len() != 3 {
                return Err(err(header.line_no, "geometry form takes 3 header fields"));
            }
            let mut conductors = Vec::with_capacity(n);
            for r in &rest[..n] {
                let g = expect_fields(r, 5, 5)?;
                let role = parse_phase_list(r.line_no, &g[0])?;
                if role.len() != 1 {
                    return Err(err(r.line_no, "conductor role must be one letter"));
                }
                conductors.push(ConductorGeometry {
                    role: role[0],
                    r_ac: parse_f64(r.line_no, &g[1], "r_ac")?,
                    gmr: parse_f64(r.line_no, &g[2], "gmr")?,
                    x: parse_f64(r.line_no, &g[3], "x")?,
                    y: parse_f64(r.line_no, &g[4], "y")?,
                });
            }
            build_line_impedance(&conductors)
                .map_err(|e| err(header.line_no, &e.to_string()))?
        }
        "matrix" => {
            if f.len() != 4 {
                return Err(err(
                    header.line_no,
                    "matrix form header is name,matrix,<n>,<roles>",
                ));
            }
            let roles = parse_phase_list(header.line_no, &f[3])?;
            if roles.len() != n {
                return Err(err(header.line_no, "role list must match conductor count"));
            }
            let mut z = DMatrix::zeros(n, n);
            for (i, r) in rest[..n].iter().enumerate() {
                let row = expect_fields(r, 2 * n, 2 * n)?;
                for j in 0..n {
                    z[(i, j)] = Complex64::new(
                        parse_f64(r.line_no, &row[2 * j], "R")?,
                        parse_f64(r.line_no, &row[2 * j + 1], "X")?,
                    );
                }
            }
            LineImpedance::from_matrix(z, roles).map_err(|e| err(header.line_no, &e.to_string()))?
        }
        other => {
            return Err(err(
                header.line_no,
                &format!("unknown line type form {other:?} (geometry|matrix)"),
            ))
        }
    };
    line_types.push((name, impedance));
    Ok(n)
}
