//! Delta / grounded-wye distribution transformer admittance.
//!
//! The transformer couples the three MV phases to the three LV phases through
//! a 6×6 nodal admittance built from its per-unit leakage admittance and the
//! winding connection. The LV winding's star point is the origin of the LV
//! neutral; with the star point solidly earthed the neutral terminal itself
//! stays at ground potential and does not appear in the admittance.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use super::ModelError;

/// Two-winding MV/LV transformer, delta primary and wye secondary.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    /// Rated apparent power of the bank, VA.
    pub s_rated_va: f64,
    /// Primary (MV) line-to-line voltage, V.
    pub v_primary_ll: f64,
    /// Secondary (LV) line-to-line voltage, V.
    pub v_secondary_ll: f64,
    /// Leakage admittance on the transformer's own base, pu.
    pub y_leakage_pu: Complex64,
    /// Secondary reference angle minus primary reference angle, degrees.
    /// Only ±30° connections are representable by the winding matrices.
    pub phase_shift_deg: f64,
    /// True when the wye star point is solidly earthed.
    pub secondary_grounded: bool,
}

impl TransformerModel {
    /// Leakage admittance from series resistance and reactance in pu.
    pub fn from_impedance(
        s_rated_va: f64,
        v_primary_ll: f64,
        v_secondary_ll: f64,
        r_pu: f64,
        x_pu: f64,
        phase_shift_deg: f64,
    ) -> Result<Self, ModelError> {
        let z = Complex64::new(r_pu, x_pu);
        if z.norm() < 1e-12 {
            return Err(ModelError::Invalid(
                "transformer leakage impedance must be nonzero".into(),
            ));
        }
        for (name, v) in [
            ("s_rated", s_rated_va),
            ("v_primary", v_primary_ll),
            ("v_secondary", v_secondary_ll),
        ] {
            if !(v > 0.0) {
                return Err(ModelError::NonPositive { name, value: v });
            }
        }
        Ok(TransformerModel {
            s_rated_va,
            v_primary_ll,
            v_secondary_ll,
            y_leakage_pu: z.inv(),
            phase_shift_deg,
            secondary_grounded: true,
        })
    }

    /// Phase shift in radians.
    pub fn phase_shift_rad(&self) -> f64 {
        self.phase_shift_deg.to_radians()
    }

    /// LV phase-to-neutral voltage base, V.
    pub fn secondary_phase_base(&self) -> f64 {
        self.v_secondary_ll / 3f64.sqrt()
    }

    /// MV phase-to-neutral voltage base, V.
    pub fn primary_phase_base(&self) -> f64 {
        self.v_primary_ll / 3f64.sqrt()
    }
}

/// 6×6 transformer admittance as four 3×3 blocks in pu on the transformer
/// base. Ordering is primary a,b,c then secondary a,b,c.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerAdmittance {
    pub y_pp: Matrix3<Complex64>,
    pub y_ps: Matrix3<Complex64>,
    pub y_sp: Matrix3<Complex64>,
    pub y_ss: Matrix3<Complex64>,
    /// Leakage admittance the blocks were built from, pu.
    pub y_leakage_pu: Complex64,
}

/// Builds the connection-matrix admittance blocks for the delta / grounded-wye
/// transformer. A −30° shift (secondary lagging) uses the standard coupling
/// pattern; +30° uses its transpose. Other shifts are rejected.
pub fn build_transformer_admittance(
    model: &TransformerModel,
) -> Result<TransformerAdmittance, ModelError> {
    let y = model.y_leakage_pu;
    if y.norm() < 1e-15 {
        return Err(ModelError::Invalid(
            "transformer leakage admittance must be nonzero".into(),
        ));
    }
    let third = 1.0 / 3.0;
    let s = 1.0 / 3f64.sqrt();

    // Delta winding seen from its own terminals.
    let y_pp = Matrix3::from_row_slice(&[
        2.0 * third, -third, -third,
        -third, 2.0 * third, -third,
        -third, -third, 2.0 * third,
    ])
    .map(|c| c * y);

    // Delta-to-wye coupling for a secondary lagging the primary by 30°.
    let coupling = Matrix3::from_row_slice(&[
        -s, s, 0.0,
        0.0, -s, s,
        s, 0.0, -s,
    ]);
    let shift = model.phase_shift_deg;
    let coupling = if (shift + 30.0).abs() < 1e-9 {
        coupling
    } else if (shift - 30.0).abs() < 1e-9 {
        coupling.transpose()
    } else {
        return Err(ModelError::Invalid(format!(
            "unsupported transformer phase shift {shift}°, expected ±30°"
        )));
    };

    let y_ps = coupling.map(|c| c * y);
    let y_sp = y_ps.transpose();
    let y_ss = Matrix3::from_diagonal(&Vector3::from_element(y));

    Ok(TransformerAdmittance {
        y_pp,
        y_ps,
        y_sp,
        y_ss,
        y_leakage_pu: y,
    })
}

impl TransformerAdmittance {
    /// Secondary terminal voltages (pu) given primary voltages (pu) and the
    /// phase currents the secondary delivers into the LV network (pu).
    pub fn secondary_voltages(
        &self,
        v_primary_pu: &Vector3<Complex64>,
        i_delivered_pu: &Vector3<Complex64>,
    ) -> Vector3<Complex64> {
        // I_into_secondary = Y_sp V_p + Y_ss V_s with I_into = −I_delivered.
        let rhs = -(self.y_sp * v_primary_pu) - i_delivered_pu;
        rhs / self.y_leakage_pu
    }

    /// Scales a pu block to siemens. `v_row`/`v_col` are the line-to-line
    /// voltage bases of the block's row and column sides; `s_base` the bank
    /// rating in VA.
    pub fn block_to_siemens(
        block: &Matrix3<Complex64>,
        s_base: f64,
        v_row_ll: f64,
        v_col_ll: f64,
    ) -> Matrix3<Complex64> {
        block.map(|c| c * s_base / (v_row_ll * v_col_ll))
    }
}
