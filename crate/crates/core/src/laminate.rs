//! Rank-1 laminate homogenization: the building block of the network.
//!
//! Phase 1 occupies the fraction `f`; the lamination direction is the local
//! `e3`, so in Mandel form rows `3..6` are the normal (traction) components and
//! rows `0..3` the tangential (in-plane strain) components.

use nalgebra::Matrix3;

use crate::error::{DmnError, Result};
use crate::tensor::{symmetrize3, symmetrize6, Mat3, MandelMatrix, SymTensor2};

/// Relative gap between phases below which the CTE formula is replaced by its limit.
pub const NEAR_IDENTICAL_TOL: f64 = 1e-9;

/// Interface operator `C^` with its inverse in closed block form.
#[derive(Debug, Clone, Copy)]
struct Interface {
    /// Normal-tangential block `B` of `C^`.
    b: Matrix3<f64>,
    /// Inverse of the normal-normal block `D` of `C^`.
    d_inv: Matrix3<f64>,
}

impl Interface {
    fn new(c1: &MandelMatrix, c2: &MandelMatrix, f: f64) -> Result<Self> {
        let mix = c1 * (1.0 - f) + c2 * f;
        let b: Matrix3<f64> = mix.fixed_view::<3, 3>(3, 0).into_owned();
        let d: Matrix3<f64> = mix.fixed_view::<3, 3>(3, 3).into_owned();
        let scale = d.norm();
        let det = d.determinant();
        if !(det.abs() > 1e-14 * scale * scale * scale) || !det.is_finite() {
            return Err(DmnError::SingularInterfaceMatrix);
        }
        let d_inv = d.try_inverse().ok_or(DmnError::SingularInterfaceMatrix)?;
        Ok(Interface { b, d_inv })
    }

    /// `C^{-1} C^_k` for the interface operator `C^_k` of a phase stiffness `c`.
    fn solve_hat(&self, c: &MandelMatrix) -> MandelMatrix {
        let bk: Matrix3<f64> = c.fixed_view::<3, 3>(3, 0).into_owned();
        let dk: Matrix3<f64> = c.fixed_view::<3, 3>(3, 3).into_owned();
        let mut a = MandelMatrix::identity();
        a.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(self.d_inv * (bk - self.b)));
        a.fixed_view_mut::<3, 3>(3, 3).copy_from(&(self.d_inv * dk));
        a
    }

    fn inverse(&self) -> MandelMatrix {
        let mut m = MandelMatrix::identity();
        m.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(-self.d_inv * self.b));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.d_inv);
        m
    }
}

/// Effective stiffness of a laminate with the strain localization tensors of both phases.
#[derive(Debug, Clone, Copy)]
pub struct LaminateResult {
    pub f: f64,
    pub c_bar: MandelMatrix,
    /// Phase-1 strain localization `A = C^{-1} C^_2`.
    pub a1: MandelMatrix,
    /// Phase-2 strain localization `C^{-1} C^_1`, equal to `(I - f A) / (1 - f)` when `f < 1`.
    pub a2: MandelMatrix,
    /// Inverse of the interface operator `C^ = (1 - f) C^_1 + f C^_2`.
    pub hat_inv: MandelMatrix,
}

fn check_fraction(f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(DmnError::Data(format!("volume fraction {f} outside [0, 1]")))
    }
}

pub fn lam_stiffness(c1: &MandelMatrix, c2: &MandelMatrix, f: f64) -> Result<LaminateResult> {
    check_fraction(f)?;
    let iface = Interface::new(c1, c2, f)?;
    let a1 = iface.solve_hat(c2);
    let a2 = iface.solve_hat(c1);
    let c_bar = symmetrize6(&((c1 - c2) * a1 * f + c2));
    Ok(LaminateResult {
        f,
        c_bar,
        a1,
        a2,
        hat_inv: iface.inverse(),
    })
}

/// Gradients of a scalar loss with respect to the laminate inputs.
#[derive(Debug, Clone, Copy)]
pub struct LaminateGrad {
    pub c1: MandelMatrix,
    pub c2: MandelMatrix,
    pub f: f64,
}

/// Pulls `g_bar = dL/dC_bar` back through `lam_stiffness`.
pub fn lam_stiffness_adjoint(
    c1: &MandelMatrix,
    c2: &MandelMatrix,
    res: &LaminateResult,
    g_bar: &MandelMatrix,
) -> LaminateGrad {
    let f = res.f;
    let g = symmetrize6(g_bar);
    let m = c1 - c2;
    let a = &res.a1;
    let mut c1_bar = MandelMatrix::zeros();
    let mut c2_bar = g;
    let m_bar = g * a.transpose() * f;
    c1_bar += m_bar;
    c2_bar -= m_bar;
    let mut f_bar = g.component_mul(&(m * a)).sum();

    let a_bar = m.transpose() * g * f;
    let y = res.hat_inv.transpose() * a_bar;
    let hat_bar = -(y * a.transpose());
    // Only the normal rows of each interface operator depend on the stiffness.
    let mut hat2_bar = y + hat_bar * f;
    let hat1_bar = hat_bar * (1.0 - f);
    hat2_bar.fixed_view_mut::<3, 6>(0, 0).fill(0.0);
    let hat_diff = (c2 - c1).fixed_view::<3, 6>(3, 0).into_owned();
    f_bar += hat_bar
        .fixed_view::<3, 6>(3, 0)
        .component_mul(&hat_diff)
        .sum();
    let mut c1_rows = c1_bar.fixed_view_mut::<3, 6>(3, 0);
    c1_rows += hat1_bar.fixed_view::<3, 6>(3, 0);
    let mut c2_rows = c2_bar.fixed_view_mut::<3, 6>(3, 0);
    c2_rows += hat2_bar.fixed_view::<3, 6>(3, 0);
    LaminateGrad {
        c1: c1_bar,
        c2: c2_bar,
        f: f_bar,
    }
}

/// Effective conductivity with the phase-1 gradient localization tensor.
#[derive(Debug, Clone, Copy)]
pub struct ConductivityResult {
    pub k_bar: Mat3,
    pub a1: Mat3,
}

/// Same construction as the stiffness with the tangential block `0..2` and normal index 2.
pub fn lam_conductivity(k1: &Mat3, k2: &Mat3, f: f64) -> Result<ConductivityResult> {
    check_fraction(f)?;
    let mix = k1 * (1.0 - f) + k2 * f;
    let d = mix[(2, 2)];
    if !(d.abs() > 1e-14 * mix.norm()) || !d.is_finite() {
        return Err(DmnError::SingularInterfaceMatrix);
    }
    let mut a1 = Mat3::identity();
    for j in 0..2 {
        a1[(2, j)] = (k2[(2, j)] - mix[(2, j)]) / d;
    }
    a1[(2, 2)] = k2[(2, 2)] / d;
    let k_bar = symmetrize3(&((k1 - k2) * a1 * f + k2));
    Ok(ConductivityResult { k_bar, a1 })
}

/// Effective stiffness and thermal expansion of a laminate.
#[derive(Debug, Clone, Copy)]
pub struct CteResult {
    pub c_bar: MandelMatrix,
    pub alpha_bar: SymTensor2,
    /// Set when the phases were too close for the compliance-difference inverse;
    /// `alpha_bar` then holds the volume-weighted mean.
    pub near_identical: bool,
}

/// CTE from the effective compliance: `a = a1 + (S - S1)(S1 - S2)^{-1}(a1 - a2)`.
pub fn lam_cte(
    c1: &MandelMatrix,
    c2: &MandelMatrix,
    alpha1: &SymTensor2,
    alpha2: &SymTensor2,
    f: f64,
) -> Result<CteResult> {
    let lam = lam_stiffness(c1, c2, f)?;
    let gap = (c1 - c2).norm() / c1.norm().max(c2.norm());
    if gap < NEAR_IDENTICAL_TOL {
        return Ok(CteResult {
            c_bar: lam.c_bar,
            alpha_bar: alpha1 * f + alpha2 * (1.0 - f),
            near_identical: true,
        });
    }
    let alpha_bar = levin_cte(&lam.c_bar, c1, c2, alpha1, alpha2)?;
    Ok(CteResult {
        c_bar: lam.c_bar,
        alpha_bar,
        near_identical: false,
    })
}

/// Two-phase CTE relation evaluated for a given effective stiffness.
pub fn levin_cte(
    c_bar: &MandelMatrix,
    c1: &MandelMatrix,
    c2: &MandelMatrix,
    alpha1: &SymTensor2,
    alpha2: &SymTensor2,
) -> Result<SymTensor2> {
    let inv = |c: &MandelMatrix| {
        c.lu()
            .try_inverse()
            .ok_or(DmnError::NotPositiveDefinite(0.0))
    };
    let s_bar = inv(c_bar)?;
    let s1 = inv(c1)?;
    let s2 = inv(c2)?;
    let rhs = (s1 - s2)
        .lu()
        .solve(&(alpha1 - alpha2))
        .ok_or(DmnError::SingularInterfaceMatrix)?;
    Ok(alpha1 + (s_bar - s1) * rhs)
}

/// Laminate response to incrementally affine phases `dsig_i = C_i deps_i + ds_i`.
#[derive(Debug, Clone, Copy)]
pub struct TangentResidual {
    pub lam: LaminateResult,
    /// Effective residual stress increment.
    pub ds_bar: SymTensor2,
    /// Strain offsets from residual stresses: `deps_i = A_i deps_bar + res_i`.
    pub res1: SymTensor2,
    pub res2: SymTensor2,
}

impl TangentResidual {
    /// Splits a laminate strain increment into the two phase increments.
    pub fn localize(&self, deps_bar: &SymTensor2) -> (SymTensor2, SymTensor2) {
        (
            self.lam.a1 * deps_bar + self.res1,
            self.lam.a2 * deps_bar + self.res2,
        )
    }
}

pub fn lam_tangent_residual(
    c1: &MandelMatrix,
    c2: &MandelMatrix,
    ds1: &SymTensor2,
    ds2: &SymTensor2,
    f: f64,
) -> Result<TangentResidual> {
    let lam = lam_stiffness(c1, c2, f)?;
    // Traction continuity with residual stresses: only their normal parts enter.
    let mut jump = ds2 - ds1;
    jump.fixed_rows_mut::<3>(0).fill(0.0);
    let solved = lam.hat_inv * jump;
    let res1 = solved * (1.0 - f);
    let res2 = -solved * f;
    let ds_bar = (c1 - c2) * res1 * f + ds1 * f + ds2 * (1.0 - f);
    Ok(TangentResidual {
        lam,
        ds_bar,
        res1,
        res2,
    })
}
