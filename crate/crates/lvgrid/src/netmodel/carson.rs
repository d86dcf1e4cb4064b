//! Series line impedance from conductor geometry.
//!
//! Self and mutual terms follow the modified Carson's equations for a 50 Hz
//! system over earth with 100 Ω·m resistivity, expressed in Ω/km. The neutral
//! conductor can be folded into the phase block by Kron reduction when the
//! neutral potential is treated as zero at both ends.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ModelError, Phase};

/// Earth-return resistance added to every term, Ω/km.
pub const EARTH_RESISTANCE: f64 = 0.0493;
/// Reactance coefficient, Ω/km per unit of the log term (4π·f·10⁻⁴ at 50 Hz).
pub const REACTANCE_COEFF: f64 = 0.0628;
/// Earth-return depth term for 100 Ω·m soil at 50 Hz, dimensionless.
pub const EARTH_LOG_TERM: f64 = 8.0251;
/// Distance datum of the log argument, m (one foot expressed in metres).
pub const LOG_DATUM_M: f64 = 0.3048;

/// One conductor of a line: role, AC resistance, geometric mean radius, and
/// cross-section position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductorGeometry {
    pub role: Phase,
    /// AC resistance, Ω/km.
    pub r_ac: f64,
    /// Geometric mean radius, m.
    pub gmr: f64,
    /// Horizontal position in the cross-section, m.
    pub x: f64,
    /// Vertical position in the cross-section, m.
    pub y: f64,
}

/// Per-length series impedance of a line: an n_c × n_c complex matrix in Ω/km
/// with one row/column per conductor.
#[derive(Debug, Clone, PartialEq)]
pub struct LineImpedance {
    z: DMatrix<Complex64>,
    roles: Vec<Phase>,
    reduced: bool,
}

impl LineImpedance {
    /// Wraps an explicit impedance matrix. The matrix must be square, match
    /// the role list, be symmetric within 1e-12, and tag at most one neutral.
    pub fn from_matrix(z: DMatrix<Complex64>, roles: Vec<Phase>) -> Result<Self, ModelError> {
        if z.nrows() != z.ncols() || z.nrows() != roles.len() {
            return Err(ModelError::ShapeMismatch {
                rows: z.nrows(),
                cols: z.ncols(),
                roles: roles.len(),
            });
        }
        if roles.is_empty() {
            return Err(ModelError::EmptyLine);
        }
        for i in 0..z.nrows() {
            for j in (i + 1)..z.ncols() {
                let delta = (z[(i, j)] - z[(j, i)]).norm();
                if delta > 1e-12 {
                    return Err(ModelError::Asymmetric { i, j, delta });
                }
            }
        }
        check_roles(&roles)?;
        let reduced = !roles.contains(&Phase::N);
        Ok(LineImpedance { z, roles, reduced })
    }

    /// Impedance matrix, Ω/km.
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.z
    }

    /// Conductor roles in matrix order.
    pub fn roles(&self) -> &[Phase] {
        &self.roles
    }

    /// True once the neutral has been eliminated (or was never present).
    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn n_conductors(&self) -> usize {
        self.roles.len()
    }

    pub fn has_neutral(&self) -> bool {
        self.roles.contains(&Phase::N)
    }

    /// Index of the neutral conductor, if present.
    pub fn neutral_index(&self) -> Option<usize> {
        self.roles.iter().position(|r| r.is_neutral())
    }
}

fn check_roles(roles: &[Phase]) -> Result<(), ModelError> {
    let neutrals = roles.iter().filter(|r| r.is_neutral()).count();
    if neutrals > 1 {
        return Err(ModelError::MultipleNeutrals(neutrals));
    }
    for (i, r) in roles.iter().enumerate() {
        if roles[..i].contains(r) {
            return Err(ModelError::DuplicateRole(*r));
        }
    }
    Ok(())
}

/// Self impedance of one conductor with earth return, Ω/km.
pub fn carson_self_impedance(r_ac: f64, gmr_m: f64) -> Result<Complex64, ModelError> {
    if !(gmr_m > 0.0) {
        return Err(ModelError::NonPositive {
            name: "gmr",
            value: gmr_m,
        });
    }
    if !(r_ac >= 0.0) {
        return Err(ModelError::NonPositive {
            name: "r_ac",
            value: r_ac,
        });
    }
    let x = REACTANCE_COEFF * ((LOG_DATUM_M / gmr_m).ln() + EARTH_LOG_TERM);
    Ok(Complex64::new(r_ac + EARTH_RESISTANCE, x))
}

/// Mutual impedance between two conductors with earth return, Ω/km.
pub fn carson_mutual_impedance(spacing_m: f64) -> Result<Complex64, ModelError> {
    if !(spacing_m > 0.0) {
        return Err(ModelError::NonPositive {
            name: "spacing",
            value: spacing_m,
        });
    }
    let x = REACTANCE_COEFF * ((LOG_DATUM_M / spacing_m).ln() + EARTH_LOG_TERM);
    Ok(Complex64::new(EARTH_RESISTANCE, x))
}

/// Builds the primitive series impedance matrix of a line from its conductor
/// geometry. Diagonal terms are self impedances, off-diagonal terms mutual
/// impedances from centre-to-centre spacing.
pub fn build_line_impedance(conductors: &[ConductorGeometry]) -> Result<LineImpedance, ModelError> {
    if conductors.is_empty() {
        return Err(ModelError::EmptyLine);
    }
    let roles: Vec<Phase> = conductors.iter().map(|c| c.role).collect();
    check_roles(&roles)?;
    let n = conductors.len();
    let mut z = DMatrix::zeros(n, n);
    for i in 0..n {
        z[(i, i)] = carson_self_impedance(conductors[i].r_ac, conductors[i].gmr)?;
        for j in (i + 1)..n {
            let d = (conductors[i].x - conductors[j].x).hypot(conductors[i].y - conductors[j].y);
            if d <= 0.0 {
                return Err(ModelError::CoincidentConductors(i, j));
            }
            let m = carson_mutual_impedance(d)?;
            z[(i, j)] = m;
            z[(j, i)] = m;
        }
    }
    let reduced = !roles.contains(&Phase::N);
    Ok(LineImpedance { z, roles, reduced })
}

/// Eliminates the neutral conductor assuming zero neutral potential at both
/// ends: z'_ij = z_ij − z_in·z_nj / z_nn over the remaining conductors.
pub fn kron_reduce(line: &LineImpedance) -> Result<LineImpedance, ModelError> {
    let nn = line.neutral_index().ok_or(ModelError::NoNeutral)?;
    let znn = line.z[(nn, nn)];
    if znn.norm() < 1e-12 {
        return Err(ModelError::SingularNeutral(znn.norm()));
    }
    let keep: Vec<usize> = (0..line.n_conductors()).filter(|&i| i != nn).collect();
    let m = keep.len();
    let mut z = DMatrix::zeros(m, m);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            z[(a, b)] = line.z[(i, j)] - line.z[(i, nn)] * line.z[(nn, j)] / znn;
        }
    }
    Ok(LineImpedance {
        z,
        roles: keep.iter().map(|&i| line.roles[i]).collect(),
        reduced: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cplx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn self_impedance_at_datum_gmr() {
        // gmr equal to the datum distance kills the geometry log entirely.
        let z = carson_self_impedance(0.3, 0.3048).unwrap();
        assert_relative_eq!(z.re, 0.3493, max_relative = 1e-12);
        assert_relative_eq!(z.im, 0.5039762800, epsilon = 1e-9);
    }

    #[test]
    fn self_impedance_small_gmr() {
        let z = carson_self_impedance(0.3, 0.004).unwrap();
        assert_relative_eq!(z.re, 0.3493, max_relative = 1e-12);
        assert_relative_eq!(z.im, 0.7761113799, epsilon = 1e-9);
    }

    #[test]
    fn mutual_impedance_half_metre() {
        let z = carson_mutual_impedance(0.5).unwrap();
        assert_relative_eq!(z.re, 0.0493, max_relative = 1e-12);
        assert_relative_eq!(z.im, 0.4728932772, epsilon = 1e-9);
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        assert!(carson_self_impedance(0.3, 0.0).is_err());
        assert!(carson_self_impedance(0.3, -1.0).is_err());
        assert!(carson_mutual_impedance(0.0).is_err());
        assert!(carson_mutual_impedance(-0.5).is_err());
    }

    fn quad_geometry() -> Vec<ConductorGeometry> {
        // Flat spacer arrangement: three phases and a neutral 10 m up.
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
    }

    #[test]
    fn geometry_matrix_is_symmetric_with_dominant_diagonal() {
        let line = build_line_impedance(&quad_geometry()).unwrap();
        let z = line.matrix();
        assert_eq!(line.n_conductors(), 4);
        assert!(!line.is_reduced());
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(z[(i, j)].re, z[(j, i)].re, epsilon = 1e-15);
                assert_relative_eq!(z[(i, j)].im, z[(j, i)].im, epsilon = 1e-15);
                if i != j {
                    assert!(z[(i, i)].re > z[(i, j)].re);
                }
            }
        }
        // Mutual reactance decays with spacing along the spacer.
        assert!(z[(0, 1)].im > z[(0, 2)].im);
        assert!(z[(0, 2)].im > z[(0, 3)].im);
    }

    #[test]
    fn rejects_coincident_and_duplicate_conductors() {
        let mut g = quad_geometry();
        g[1].x = g[0].x;
        g[1].y = g[0].y;
        assert!(matches!(
            build_line_impedance(&g),
            Err(ModelError::CoincidentConductors(0, 1))
        ));

        let mut g = quad_geometry();
        g[1].role = Phase::A;
        assert!(matches!(
            build_line_impedance(&g),
            Err(ModelError::DuplicateRole(Phase::A))
        ));

        let mut g = quad_geometry();
        g[0].role = Phase::N;
        assert!(matches!(
            build_line_impedance(&g),
            Err(ModelError::MultipleNeutrals(2))
        ));
    }

    #[test]
    fn kron_scalar_example() {
        let z = DMatrix::from_row_slice(2, 2, &[cplx(1.0, 1.0), cplx(0.2, 0.0), cplx(0.2, 0.0), cplx(0.5, 0.0)]);
        let line = LineImpedance::from_matrix(z, vec![Phase::A, Phase::N]).unwrap();
        let red = kron_reduce(&line).unwrap();
        assert_eq!(red.n_conductors(), 1);
        assert!(red.is_reduced());
        assert_relative_eq!(red.matrix()[(0, 0)].re, 0.92, epsilon = 1e-15);
        assert_relative_eq!(red.matrix()[(0, 0)].im, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn kron_matches_block_formula_on_geometry_line() {
        let line = build_line_impedance(&quad_geometry()).unwrap();
        let red = kron_reduce(&line).unwrap();
        assert_eq!(red.roles(), &[Phase::A, Phase::B, Phase::C]);

        // Independent block form: Z_pp − Z_pn · Z_np / z_nn.
        let z = line.matrix();
        let zpp = z.view((0, 0), (3, 3));
        let zpn = z.view((0, 3), (3, 1));
        let znp = z.view((3, 0), (1, 3));
        let oracle = zpp - (zpn * znp) / z[(3, 3)];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(red.matrix()[(i, j)].re, oracle[(i, j)].re, epsilon = 1e-14);
                assert_relative_eq!(red.matrix()[(i, j)].im, oracle[(i, j)].im, epsilon = 1e-14);
            }
        }

        // Qualitative effect of the shared earth/neutral return: self
        // impedance magnitudes shrink slightly, mutual reactances strongly.
        for i in 0..3 {
            assert!(red.matrix()[(i, i)].norm() <= z[(i, i)].norm() + 1e-15);
            for j in 0..3 {
                if i != j {
                    assert!(red.matrix()[(i, j)].im.abs() < z[(i, j)].im.abs());
                }
            }
        }
    }

    #[test]
    fn kron_requires_a_neutral() {
        let line = build_line_impedance(&quad_geometry()[..3]).unwrap();
        assert!(line.is_reduced());
        assert!(matches!(kron_reduce(&line), Err(ModelError::NoNeutral)));
    }

    #[test]
    fn from_matrix_validates_shape_and_symmetry() {
        let z = DMatrix::from_row_slice(2, 2, &[cplx(1.0, 1.0), cplx(0.2, 0.0), cplx(0.3, 0.0), cplx(0.5, 0.0)]);
        assert!(matches!(
            LineImpedance::from_matrix(z, vec![Phase::A, Phase::N]),
            Err(ModelError::Asymmetric { .. })
        ));

        let z = DMatrix::from_row_slice(2, 2, &[cplx(1.0, 1.0), cplx(0.2, 0.0), cplx(0.2, 0.0), cplx(0.5, 0.0)]);
        assert!(matches!(
            LineImpedance::from_matrix(z, vec![Phase::A]),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn kron_rejects_singular_neutral() {
        let z = DMatrix::from_row_slice(2, 2, &[cplx(1.0, 1.0), cplx(0.2, 0.0), cplx(0.2, 0.0), cplx(0.0, 0.0)]);
        let line = LineImpedance::from_matrix(z, vec![Phase::A, Phase::N]).unwrap();
        assert!(matches!(kron_reduce(&line), Err(ModelError::SingularNeutral(_))));
    }
}
