//! The constrained Gauss-Newton iteration.
//!
//! Each step linearizes the measurement model and solves the bordered
//! system
//!
//! ```text
//! [ HᵀR⁻¹H  −Cᵀ ] [Δx]   [ HᵀR⁻¹(z − h) ]
//! [   C       0 ] [λ ] = [     −c        ]
//! ```
//!
//! which is the optimality system of: minimize the weighted squared
//! residual of the linearized measurements subject to the linearized
//! constraints. The update therefore descends the objective and drives the
//! constraint values toward zero.

use nalgebra::{DMatrix, DVector};

/// Raised when the bordered system cannot be solved reliably; carries the
/// packed-state column with the least support in the weighted system.
#[derive(Debug, Clone, Copy)]
pub struct SingularKkt {
    pub weakest_column: usize,
    pub column_norm: f64,
}

/// Solves one bordered step. `weights` is the diagonal of R⁻¹, `residual`
/// is z − h(x), `c_vec`/`c_jac` the constraint values and Jacobian. Columns
/// flagged in `pinned` are held fixed (Δx = 0): magnitudes sitting on their
/// floor are bound-constrained, not free. Returns (Δx, λ).
pub fn kkt_step(
    h_jac: &DMatrix<f64>,
    weights: &DVector<f64>,
    residual: &DVector<f64>,
    c_jac: &DMatrix<f64>,
    c_vec: &DVector<f64>,
    pinned: &[bool],
) -> Result<(DVector<f64>, DVector<f64>), SingularKkt> {
    let n = h_jac.ncols();
    let m = c_jac.nrows();
    debug_assert_eq!(c_jac.ncols(), n);
    let is_pinned = |k: usize| pinned.get(k).copied().unwrap_or(false);

    // HᵀWH and HᵀW(z − h) without forming W.
    let mut gain: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut grad: DVector<f64> = DVector::zeros(n);
    for r in 0..h_jac.nrows() {
        let w = weights[r];
        for i in 0..n {
            let hi = h_jac[(r, i)];
            if hi == 0.0 {
                continue;
            }
            let whi = w * hi;
            grad[i] += whi * residual[r];
            for j in i..n {
                gain[(i, j)] += whi * h_jac[(r, j)];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gain[(i, j)] = gain[(j, i)];
        }
    }

    // A pinned column is replaced by the trivial equation Δx_k = 0 and
    // removed from every constraint row.
    for k in 0..n {
        if is_pinned(k) {
            for j in 0..n {
                gain[(k, j)] = 0.0;
                gain[(j, k)] = 0.0;
            }
            gain[(k, k)] = 1.0;
            grad[k] = 0.0;
        }
    }

    // The raw bordered matrix mixes meter weights (gain entries around
    // 1e11) with constraint rows around 1e2, and LU elimination at that
    // spread cancels the constraint part almost entirely: a "solved" step
    // then misses C·Δx = −c by far more than the convergence threshold.
    // Equilibrate first: state columns by the gain diagonal, constraint
    // rows to unit norm, so every block is O(1).
    let mut d = DVector::from_element(n, 1.0);
    for i in 0..n {
        let g: f64 = gain[(i, i)];
        if g > 0.0 && g.is_finite() {
            d[i] = 1.0 / g.sqrt();
        }
    }
    let mut gain_s = gain;
    for i in 0..n {
        for j in 0..n {
            gain_s[(i, j)] *= d[i] * d[j];
        }
    }
    let mut c_s = c_jac.clone();
    for k in 0..n {
        if is_pinned(k) {
            for r in 0..m {
                c_s[(r, k)] = 0.0;
            }
        }
    }
    let mut e = DVector::from_element(m, 1.0);
    for r in 0..m {
        for i in 0..n {
            c_s[(r, i)] *= d[i];
        }
        let norm = c_s.row(r).norm();
        if norm > 0.0 && norm.is_finite() {
            e[r] = 1.0 / norm;
        }
        for i in 0..n {
            c_s[(r, i)] *= e[r];
        }
    }

    let dim = n + m;
    let mut k: DMatrix<f64> = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(&gain_s);
    if m > 0 {
        k.view_mut((0, n), (n, m)).copy_from(&(-c_s.transpose()));
        k.view_mut((n, 0), (m, n)).copy_from(&c_s);
    }
    let mut rhs: DVector<f64> = DVector::zeros(dim);
    for i in 0..n {
        rhs[i] = d[i] * grad[i];
    }
    for r in 0..m {
        rhs[n + r] = -e[r] * c_vec[r];
    }

    let fail = |h_jac: &DMatrix<f64>, c_jac: &DMatrix<f64>| {
        let (col, norm) = weakest_state_column(h_jac, weights, c_jac);
        SingularKkt {
            weakest_column: col,
            column_norm: norm,
        }
    };

    let lu = k.clone().lu();
    let sol = lu.solve(&rhs).ok_or_else(|| fail(h_jac, c_jac))?;

    // LU rarely reports exact singularity in floating point; check the
    // defect instead and treat an unreliable solve as unobservability.
    let defect = (&k * &sol - &rhs).norm();
    let scale = rhs.norm().max(1.0);
    if !defect.is_finite() || defect > 1e-6 * scale {
        return Err(fail(h_jac, c_jac));
    }

    // Undo the scaling: Δx = D·u, λ = E·v.
    let mut dx: DVector<f64> = DVector::zeros(n);
    for i in 0..n {
        dx[i] = d[i] * sol[i];
    }
    let mut lambda: DVector<f64> = DVector::zeros(m);
    for r in 0..m {
        lambda[r] = e[r] * sol[n + r];
    }
    Ok((dx, lambda))
}

/// Numerical observability gate: the state space is observable when the
/// Gram matrix HᵀR⁻¹H + CᵀC is safely positive definite. A (near) zero
/// eigenvalue means some state direction is unsupported, even when the
/// bordered system happens to be consistent and solvable.
pub fn observability_check(
    h_jac: &DMatrix<f64>,
    weights: &DVector<f64>,
    c_jac: &DMatrix<f64>,
) -> Result<(), SingularKkt> {
    // Measured on the scaled Gram: healthy feeders sit at λ_min/λ_max of
    // 1e-8 down to 3e-11, while a rank-deficient system lands at machine
    // zero. 1e-12 splits the two regimes with margin on both sides.
    let (col, min_support, max_support) = gram_extremes(h_jac, weights, c_jac);
    if min_support * min_support <= 1e-12 * (max_support * max_support).max(1e-300) {
        return Err(SingularKkt {
            weakest_column: col,
            column_norm: min_support,
        });
    }
    Ok(())
}

/// The packed-state column the system supports least: the dominant
/// component of the smallest eigenpair of HᵀR⁻¹H + CᵀC, i.e. the variable
/// the (near) null direction points at.
fn weakest_state_column(
    h_jac: &DMatrix<f64>,
    weights: &DVector<f64>,
    c_jac: &DMatrix<f64>,
) -> (usize, f64) {
    let (col, min_support, _) = gram_extremes(h_jac, weights, c_jac);
    (col, min_support)
}

/// (weakest column, √λ_min, √λ_max) of the diagonally scaled Gram matrix.
///
/// The raw Gram mixes meter weights spanning many decades, so its spectrum
/// says more about units than about structure. Scaling both sides by
/// diag(G)^(-1/2) gives a unit diagonal; a structural rank deficiency
/// survives the congruence, while weight spread is normalized away. A zero
/// diagonal entry is a column no row touches at all and is reported
/// directly.
fn gram_extremes(
    h_jac: &DMatrix<f64>,
    weights: &DVector<f64>,
    c_jac: &DMatrix<f64>,
) -> (usize, f64, f64) {
    let n = h_jac.ncols();
    let mut gram: DMatrix<f64> = DMatrix::zeros(n, n);
    for r in 0..h_jac.nrows() {
        let w = weights[r];
        for i in 0..n {
            let hi = h_jac[(r, i)];
            if hi == 0.0 {
                continue;
            }
            for j in 0..n {
                gram[(i, j)] += w * hi * h_jac[(r, j)];
            }
        }
    }
    for r in 0..c_jac.nrows() {
        for i in 0..n {
            let ci = c_jac[(r, i)];
            if ci == 0.0 {
                continue;
            }
            for j in 0..n {
                gram[(i, j)] += ci * c_jac[(r, j)];
            }
        }
    }

    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = gram[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return (i, 0.0, 1.0);
        }
        scale[i] = 1.0 / d.sqrt();
    }
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] *= scale[i] * scale[j];
        }
    }

    let eigen = gram.symmetric_eigen();
    let mut weakest = 0;
    let mut smallest = f64::INFINITY;
    let mut largest = 0.0f64;
    for (i, &ev) in eigen.eigenvalues.iter().enumerate() {
        if ev < smallest {
            smallest = ev;
            weakest = i;
        }
        largest = largest.max(ev);
    }
    let direction = eigen.eigenvectors.column(weakest);
    let col = direction
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (col, smallest.max(0.0).sqrt(), largest.max(0.0).sqrt())
}
