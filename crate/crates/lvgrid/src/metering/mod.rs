//! Smart-meter simulation: accuracy-class noise on top of a solved power
//! flow, plus the virtual neutral records the four-wire estimator consumes.
//!
//! A meter channel's standard deviation comes from its accuracy class: the
//! maximum error is `max_error × full_scale` and is read as a 95% interval,
//! so σ = max_error × FS / 1.96. The noise draw is N(0, σ²) in physical
//! units; the full scale is already folded into σ, it never multiplies the
//! draw a second time.
//!
//! Meter records are in SI units (W, var, V). Virtual neutral records are in
//! pu and radians, matching the estimator's state space directly.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::netmodel::{GridModel, LoadModel, NodeKind, Phase, WireMode};
use crate::powerflow::PowerFlowSolution;

#[derive(Debug, Error)]
pub enum MeteringError {
    #[error("invalid meter class: {0}")]
    InvalidClass(String),
    #[error("truth solution has no data for {node}:{phase}")]
    MissingTruth { node: String, phase: Phase },
    #[error("virtual neutral records require a four-wire truth solution")]
    ModeMismatch,
    #[error("measurement set already contains virtual records")]
    DuplicateVirtual,
}

/// What a record measures. The two virtual kinds are computed, not metered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeasurementKind {
    /// Active power injection at a consumer phase, W (negative = consumption).
    ActivePower,
    /// Reactive power injection at a consumer phase, var.
    ReactivePower,
    /// Phase-to-neutral voltage magnitude at a meter, V.
    VoltageMag,
    /// Neutral-to-ground voltage magnitude, pu (virtual).
    NeutralVoltageMag,
    /// Neutral voltage angle, rad (virtual).
    NeutralAngle,
}

impl MeasurementKind {
    pub fn is_virtual(self) -> bool {
        matches!(
            self,
            MeasurementKind::NeutralVoltageMag | MeasurementKind::NeutralAngle
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            MeasurementKind::ActivePower => "P_inj",
            MeasurementKind::ReactivePower => "Q_inj",
            MeasurementKind::VoltageMag => "Vmag",
            MeasurementKind::NeutralVoltageMag => "Vn_mag",
            MeasurementKind::NeutralAngle => "theta_n",
        }
    }
}

impl std::fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Accuracy class of one meter channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterClassSpec {
    pub kind: MeasurementKind,
    /// Full scale, VA for power channels, V for voltage.
    pub full_scale: f64,
    /// Maximum error as a fraction of full scale.
    pub max_error: f64,
    /// Coverage factor turning the maximum error into a standard deviation.
    pub coverage_factor: f64,
}

impl MeterClassSpec {
    pub fn new(
        kind: MeasurementKind,
        full_scale: f64,
        max_error: f64,
        coverage_factor: f64,
    ) -> Result<MeterClassSpec, MeteringError> {
        if !(full_scale > 0.0) {
            return Err(MeteringError::InvalidClass(format!(
                "full scale must be positive, got {full_scale}"
            )));
        }
        if !(max_error > 0.0 && max_error < 0.1) {
            return Err(MeteringError::InvalidClass(format!(
                "max error must lie in (0, 0.1), got {max_error}"
            )));
        }
        if !(coverage_factor > 0.0) {
            return Err(MeteringError::InvalidClass(format!(
                "coverage factor must be positive, got {coverage_factor}"
            )));
        }
        Ok(MeterClassSpec {
            kind,
            full_scale,
            max_error,
            coverage_factor,
        })
    }
}

/// σ of the channel, in the channel's physical units.
pub fn sigma_from_class(spec: &MeterClassSpec) -> f64 {
    spec.max_error * spec.full_scale / spec.coverage_factor
}

/// The three meter channels of a residential smart meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterSpecs {
    pub p: MeterClassSpec,
    pub q: MeterClassSpec,
    pub v: MeterClassSpec,
}

impl MeterSpecs {
    /// Residential defaults: 9.2 kVA power channels at 0.6% (P) and 1% (Q),
    /// 300 V voltage channel at 0.4%, 95% coverage.
    pub fn residential() -> MeterSpecs {
        MeterSpecs {
            p: MeterClassSpec::new(MeasurementKind::ActivePower, 9200.0, 0.006, 1.96)
                .expect("valid default"),
            q: MeterClassSpec::new(MeasurementKind::ReactivePower, 9200.0, 0.01, 1.96)
                .expect("valid default"),
            v: MeterClassSpec::new(MeasurementKind::VoltageMag, 300.0, 0.004, 1.96)
                .expect("valid default"),
        }
    }

    /// Voltage-channel σ expressed in pu on the given phase base.
    pub fn voltage_sigma_pu(&self, phase_base_v: f64) -> f64 {
        sigma_from_class(&self.v) / phase_base_v
    }
}

impl Default for MeterSpecs {
    fn default() -> Self {
        MeterSpecs::residential()
    }
}

/// One measurement record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub node: usize,
    pub phase: Phase,
    pub value: f64,
    pub sigma: f64,
}

/// Ordered measurement records with their diagonal covariance. Record order
/// is canonical: meter kinds grouped P, Q, V, each sorted by (node, phase),
/// then virtual kinds Vn, θn in the same node order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    records: Vec<Measurement>,
    seed: u64,
    has_virtual: bool,
}

impl MeasurementSet {
    pub fn records(&self) -> &[Measurement] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn has_virtual(&self) -> bool {
        self.has_virtual
    }

    /// Diagonal of the covariance matrix R, record order.
    pub fn covariance_diagonal(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sigma * r.sigma).collect()
    }

    pub fn find(&self, kind: MeasurementKind, node: usize, phase: Phase) -> Option<&Measurement> {
        self.records
            .iter()
            .find(|r| r.kind == kind && r.node == node && r.phase == phase)
    }

    /// Rewrites record values through a fallible mapping, keeping kinds,
    /// terminals, σ, and order.
    pub fn map_values<E>(
        &self,
        mut f: impl FnMut(&Measurement) -> Result<f64, E>,
    ) -> Result<MeasurementSet, E> {
        let mut out = self.clone();
        for r in &mut out.records {
            r.value = f(r)?;
        }
        Ok(out)
    }

    /// Keeps only records the predicate accepts.
    pub fn retain_records(&self, mut f: impl FnMut(&Measurement) -> bool) -> MeasurementSet {
        let mut out = self.clone();
        out.records.retain(|r| f(r));
        out
    }

    /// CSV form: one `kind,node,phase,value,sigma` row per record, preceded
    /// by comment lines carrying the scenario id and seed.
    pub fn to_csv(&self, grid: &GridModel, scenario_id: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# scenario: {scenario_id}\n"));
        out.push_str(&format!("# seed: {}\n", self.seed));
        out.push_str("kind,node,phase,value,sigma\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{:.12e},{:.12e}\n",
                r.kind, grid.nodes[r.node].id, r.phase, r.value, r.sigma
            ));
        }
        out
    }
}

/// Splits a master seed into per-iteration seeds with disjoint streams.
pub fn derive_seed(master: u64, iteration: u64) -> u64 {
    // splitmix64 of the combined counter; avalanches every input bit.
    let mut z = master ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Meter placements: one record triple per connected non-neutral phase of
/// every consumer node, sorted by (node, phase).
fn meter_terminals(grid: &GridModel) -> Vec<(usize, Phase)> {
    let mut terminals = Vec::new();
    for (i, node) in grid.nodes.iter().enumerate() {
        if node.kind == NodeKind::Consumer {
            for &p in &node.phases {
                if !p.is_neutral() {
                    terminals.push((i, p));
                }
            }
        }
    }
    terminals
}

/// Truth values seen by the meter at one terminal: (P_inj, Q_inj, |V|).
fn meter_truth(
    grid: &GridModel,
    truth: &PowerFlowSolution,
    node: usize,
    phase: Phase,
) -> Result<(f64, f64, f64), MeteringError> {
    let u = truth
        .phase_to_neutral(node, phase)
        .ok_or_else(|| MeteringError::MissingTruth {
            node: grid.nodes[node].id.clone(),
            phase,
        })?;
    let v_nom_sq = grid.lv_phase_base_v() * grid.lv_phase_base_v();
    let mut s_inj = Complex64::new(0.0, 0.0);
    for load in grid.loads_at(node, phase) {
        let i_draw = match load.model {
            LoadModel::ConstantPower => (Complex64::new(load.p_w, load.q_var) / u).conj(),
            LoadModel::ConstantImpedance => u * Complex64::new(load.p_w, -load.q_var) / v_nom_sq,
        };
        s_inj -= u * i_draw.conj();
    }
    Ok((s_inj.re, s_inj.im, u.norm()))
}

/// Generates noisy meter records from a converged truth solution. The grid
/// must be the one the truth was solved for. Deterministic under a fixed
/// seed.
pub fn simulate_measurements(
    truth: &PowerFlowSolution,
    grid: &GridModel,
    specs: &MeterSpecs,
    seed: u64,
) -> Result<MeasurementSet, MeteringError> {
    build_measurements(truth, grid, specs, seed, true)
}

/// Same records as [`simulate_measurements`] with the noise suppressed:
/// values equal the truth, σ still comes from the meter class so downstream
/// weights are unchanged.
pub fn exact_measurements(
    truth: &PowerFlowSolution,
    grid: &GridModel,
    specs: &MeterSpecs,
) -> Result<MeasurementSet, MeteringError> {
    build_measurements(truth, grid, specs, 0, false)
}

fn build_measurements(
    truth: &PowerFlowSolution,
    grid: &GridModel,
    specs: &MeterSpecs,
    seed: u64,
    noisy: bool,
) -> Result<MeasurementSet, MeteringError> {
    let terminals = meter_terminals(grid);
    let mut truths = Vec::with_capacity(terminals.len());
    for &(node, phase) in &terminals {
        truths.push(meter_truth(grid, truth, node, phase)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(3 * terminals.len());
    let channels = [
        (specs.p, 0usize),
        (specs.q, 1usize),
        (specs.v, 2usize),
    ];
    for (class, component) in channels {
        let sigma = sigma_from_class(&class);
        let noise = Normal::new(0.0, sigma).expect("validated sigma");
        for (&(node, phase), t) in terminals.iter().zip(&truths) {
            let truth_value = [t.0, t.1, t.2][component];
            let value = if noisy {
                truth_value + noise.sample(&mut rng)
            } else {
                truth_value
            };
            records.push(Measurement {
                kind: class.kind,
                node,
                phase,
                value,
                sigma,
            });
        }
    }
    Ok(MeasurementSet {
        records,
        seed,
        has_virtual: false,
    })
}

/// Appends virtual neutral records for every LV node whose neutral is
/// modeled and not bonded to earth: the neutral voltage magnitude (pu, σ =
/// the meter voltage σ in pu) and its angle (rad, weighted ten times
/// heavier, so σ_θ = σ_V/√angle_weight_factor). Values are copied
/// unperturbed from the solution.
pub fn attach_virtual_neutral(
    ms: &MeasurementSet,
    pf: &PowerFlowSolution,
    grid: &GridModel,
    voltage_sigma_pu: f64,
    angle_weight_factor: f64,
) -> Result<MeasurementSet, MeteringError> {
    if ms.has_virtual {
        return Err(MeteringError::DuplicateVirtual);
    }
    if pf.mode() != WireMode::FourWire {
        return Err(MeteringError::ModeMismatch);
    }
    if !(voltage_sigma_pu > 0.0 && angle_weight_factor > 0.0) {
        return Err(MeteringError::InvalidClass(format!(
            "virtual sigma {voltage_sigma_pu} and weight factor {angle_weight_factor} must be positive"
        )));
    }
    let sigma_theta = voltage_sigma_pu / angle_weight_factor.sqrt();
    let v_base = grid.lv_phase_base_v();

    let mut out = ms.clone();
    let nodes: Vec<usize> = (0..grid.nodes.len())
        .filter(|&i| {
            grid.nodes[i].phases.contains(&Phase::N) && !grid.is_grounded(i)
        })
        .collect();
    for &node in &nodes {
        let v_n = pf
            .voltage(node, Phase::N)
            .ok_or(MeteringError::ModeMismatch)?;
        out.records.push(Measurement {
            kind: MeasurementKind::NeutralVoltageMag,
            node,
            phase: Phase::N,
            value: v_n.norm() / v_base,
            sigma: voltage_sigma_pu,
        });
    }
    for &node in &nodes {
        let v_n = pf.voltage(node, Phase::N).expect("checked above");
        out.records.push(Measurement {
            kind: MeasurementKind::NeutralAngle,
            node,
            phase: Phase::N,
            value: v_n.arg(),
            sigma: sigma_theta,
        });
    }
    out.has_virtual = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::load_feeder;
    use crate::powerflow::{solve_bfs, BfsOptions};
    use approx::assert_relative_eq;

    fn residential_sigmas() -> (f64, f64, f64) {
        let specs = MeterSpecs::residential();
        (
            sigma_from_class(&specs.p),
            sigma_from_class(&specs.q),
            sigma_from_class(&specs.v),
        )
    }

    #[test]
    fn sigma_values_for_residential_classes() {
        let (sp, sq, sv) = residential_sigmas();
        assert_relative_eq!(sp, 28.16326530612245, max_relative = 1e-12);
        assert_relative_eq!(sq, 46.93877551020408, max_relative = 1e-12);
        assert_relative_eq!(sv, 0.6122448979591837, max_relative = 1e-12);
        let specs = MeterSpecs::residential();
        let base = 416.0 / 3f64.sqrt();
        assert_relative_eq!(
            specs.voltage_sigma_pu(base),
            0.002549132860433002,
            max_relative = 1e-12
        );
    }

    #[test]
    fn class_validation_rejects_bad_fields() {
        use MeasurementKind::ActivePower as P;
        assert!(MeterClassSpec::new(P, 0.0, 0.006, 1.96).is_err());
        assert!(MeterClassSpec::new(P, 9200.0, 0.0, 1.96).is_err());
        assert!(MeterClassSpec::new(P, 9200.0, 0.1, 1.96).is_err());
        assert!(MeterClassSpec::new(P, 9200.0, 0.006, 0.0).is_err());
        assert!(MeterClassSpec::new(P, 9200.0, 0.006, 1.96).is_ok());
    }

    fn suburban_truth() -> (crate::netmodel::GridModel, PowerFlowSolution) {
        let grid = load_feeder("builtin:suburban-lv").unwrap();
        let sol = solve_bfs(&grid, &grid.loads, WireMode::FourWire, &BfsOptions::default()).unwrap();
        (grid, sol)
    }

    #[test]
    fn record_inventory_and_order() {
        let (grid, sol) = suburban_truth();
        let ms = simulate_measurements(&sol, &grid, &MeterSpecs::residential(), 7).unwrap();
        // 12 single-phase consumers + 1 three-phase consumer = 15 metered
        // phases, three channels each.
        assert_eq!(ms.len(), 45);
        let kinds: Vec<_> = ms.records().iter().map(|r| r.kind).collect();
        let mut sorted = kinds.clone();
        sorted.sort();
        assert_eq!(kinds, sorted, "kinds grouped P, Q, V");
        for chunk in ms.records().chunks(15) {
            let keys: Vec<_> = chunk.iter().map(|r| (r.node, r.phase)).collect();
            let mut s = keys.clone();
            s.sort();
            assert_eq!(keys, s, "(node, phase) sorted within a kind");
        }
        assert!(ms.covariance_diagonal().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn fixed_seed_reproduces_exactly() {
        let (grid, sol) = suburban_truth();
        let specs = MeterSpecs::residential();
        let a = simulate_measurements(&sol, &grid, &specs, 42).unwrap();
        let b = simulate_measurements(&sol, &grid, &specs, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_measurements(&sol, &grid, &specs, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exact_records_reproduce_truth() {
        let (grid, sol) = suburban_truth();
        let ms = exact_measurements(&sol, &grid, &MeterSpecs::residential()).unwrap();
        let h01 = grid.node_index("h01").unwrap();
        let p = ms.find(MeasurementKind::ActivePower, h01, Phase::A).unwrap();
        assert_relative_eq!(p.value, -3000.0, max_relative = 1e-12);
        let q = ms
            .find(MeasurementKind::ReactivePower, h01, Phase::A)
            .unwrap();
        assert_relative_eq!(q.value, -986.1, max_relative = 1e-12);
        let v = ms.find(MeasurementKind::VoltageMag, h01, Phase::A).unwrap();
        let truth = sol.phase_to_neutral(h01, Phase::A).unwrap().norm();
        assert_eq!(v.value, truth);
        // σ still carries the meter class.
        assert!(p.sigma > 28.0 && v.sigma > 0.6);
    }

    #[test]
    fn noise_statistics_match_class_sigma() {
        let (grid, sol) = suburban_truth();
        let specs = MeterSpecs::residential();
        let exact = exact_measurements(&sol, &grid, &specs).unwrap();
        let truth_p = exact.records()[0].value;
        let n = 10_000;
        let mut draws = Vec::with_capacity(n);
        for i in 0..n {
            let ms =
                simulate_measurements(&sol, &grid, &specs, derive_seed(9001, i as u64)).unwrap();
            draws.push(ms.records()[0].value - truth_p);
        }
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
        let sigma = sigma_from_class(&specs.p);
        assert!(
            (var.sqrt() - sigma).abs() / sigma < 0.03,
            "sample std {} vs class {}",
            var.sqrt(),
            sigma
        );
        assert!(
            mean.abs() < 3.0 * sigma / (n as f64).sqrt(),
            "bias {mean} too large"
        );
    }

    #[test]
    fn derive_seed_separates_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 7), derive_seed(5, 7));
    }

    #[test]
    fn virtual_records_copy_solution_neutrals() {
        let (grid, sol) = suburban_truth();
        let specs = MeterSpecs::residential();
        let base = grid.lv_phase_base_v();
        let ms = simulate_measurements(&sol, &grid, &specs, 3).unwrap();
        let sigma_v_pu = specs.voltage_sigma_pu(base);
        let with = attach_virtual_neutral(&ms, &sol, &grid, sigma_v_pu, 10.0).unwrap();
        // 21 nodes: 19 carry an ungrounded neutral (all but mv and sub).
        assert_eq!(with.len(), ms.len() + 38);
        let h05 = grid.node_index("h05").unwrap();
        let mag = with
            .find(MeasurementKind::NeutralVoltageMag, h05, Phase::N)
            .unwrap();
        let ang = with
            .find(MeasurementKind::NeutralAngle, h05, Phase::N)
            .unwrap();
        let v_n = sol.voltage(h05, Phase::N).unwrap();
        assert_eq!(mag.value, v_n.norm() / base);
        assert_eq!(ang.value, v_n.arg());
        assert_relative_eq!(ang.sigma, sigma_v_pu / 10f64.sqrt(), max_relative = 1e-12);

        // A second attach must refuse.
        assert!(matches!(
            attach_virtual_neutral(&with, &sol, &grid, sigma_v_pu, 10.0),
            Err(MeteringError::DuplicateVirtual)
        ));
        // Three-wire truth cannot source neutral values.
        let three = solve_bfs(&grid, &grid.loads, WireMode::ThreeWire, &BfsOptions::default())
            .unwrap();
        assert!(matches!(
            attach_virtual_neutral(&ms, &three, &grid, sigma_v_pu, 10.0),
            Err(MeteringError::ModeMismatch)
        ));
    }

    #[test]
    fn csv_round_carries_header_and_rows() {
        let (grid, sol) = suburban_truth();
        let ms = simulate_measurements(&sol, &grid, &MeterSpecs::residential(), 11).unwrap();
        let csv = ms.to_csv(&grid, "demo");
        assert!(csv.starts_with("# scenario: demo\n# seed: 11\n"));
        assert!(csv.contains("kind,node,phase,value,sigma\n"));
        let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 1 + ms.len());
        assert!(csv.contains("P_inj,h01,a,"));
    }
}
