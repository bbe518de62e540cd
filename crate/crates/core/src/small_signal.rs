//! Linearization of the averaged switch around an operating point.
//!
//! The averaged switch is a pair of dependent sources: a current source
//! `d_E·I_L` on the input side and a voltage source `d_E·V_dc` on the output
//! side. Their partial derivatives with respect to `(I_L, V_dc, d1)` give six
//! small-signal coefficients:
//!
//! | coefficient | derivative |
//! |---|---|
//! | `D_T` | ∂(d_E·I_L)/∂I_L |
//! | `G_T` | ∂(d_E·I_L)/∂V_dc |
//! | `I_T` | ∂(d_E·I_L)/∂d1 |
//! | `R_P` | ∂(d_E·V_dc)/∂I_L |
//! | `D_P` | ∂(d_E·V_dc)/∂V_dc |
//! | `V_P` | ∂(d_E·V_dc)/∂d1 |
//!
//! Two coefficient sets are available. [`coefficients_analytic`] returns the
//! closed-form expressions in the form they are usually tabulated, where
//! `R_P = −16·L_s·I_L/(D_1²·t_sw)`. [`coefficients_numeric`] differentiates
//! the simplified `d_E` directly, which gives `R_P = −8·L_s/(D_1²·t_sw)`.
//! The two `R_P` values differ by a factor `2·I_L`; the tabulated form carries
//! units of volts. Both are kept and labeled by [`CoefficientSource`].

use num_complex::Complex64;

use crate::averaged::{load_ratio_raw, DutyModel, OperatingPoint};
use crate::error::{Error, Result};
use crate::params::ConverterParams;

/// Default relative finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientSource {
    /// Closed-form expressions, `R_P` in its tabulated form.
    AnalyticAsPrinted,
    /// Central differences of the simplified `d_E` sources.
    NumericOracle,
    /// Central differences of the exact `d_E` sources (reporting only).
    NumericExact,
}

impl CoefficientSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CoefficientSource::AnalyticAsPrinted => "printed",
            CoefficientSource::NumericOracle => "oracle",
            CoefficientSource::NumericExact => "exact-oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignalCoefficients {
    pub d_t: f64,
    /// Siemens.
    pub g_t: f64,
    /// Amperes per unit duty.
    pub i_t: f64,
    /// Ohms for the numeric sources; see the module docs for the printed form.
    pub r_p: f64,
    pub d_p: f64,
    /// Volts per unit duty.
    pub v_p: f64,
    pub source: CoefficientSource,
    /// Set when the operating point carries no current, in which case the
    /// printed `R_P` degenerates to zero.
    pub zero_current: bool,
}

fn check_op(op: &OperatingPoint) -> Result<()> {
    if !(op.d1 > 0.0 && op.d1 <= 1.0) {
        return Err(Error::InvalidDuty(op.d1));
    }
    if !(op.v_dc > 0.0 && op.v_dc.is_finite()) {
        return Err(Error::InvalidSource(op.v_dc));
    }
    if op.i_l.is_nan() || op.i_l < 0.0 {
        return Err(Error::NegativeLoad(op.i_l));
    }
    Ok(())
}

/// Closed-form coefficients evaluated at `(D_1, I_L, V_dc)`.
pub fn coefficients_analytic(
    op: &OperatingPoint,
    params: &ConverterParams,
) -> Result<SmallSignalCoefficients> {
    check_op(op)?;
    let (l, t) = (params.l_s(), params.t_sw());
    let (d, i, v) = (op.d1, op.i_l, op.v_dc);
    let d2 = d * d;
    let d3 = d2 * d;
    if i == 0.0 {
        log::warn!("zero operating current: printed R_P evaluates to 0");
    }
    Ok(SmallSignalCoefficients {
        d_t: 1.0 - 16.0 * l * i / (d2 * v * t),
        g_t: 8.0 * l * i * i / (d2 * v * v * t),
        i_t: 16.0 * l * i * i / (d3 * v * t),
        r_p: -16.0 * l * i / (d2 * t),
        d_p: 1.0,
        v_p: 16.0 * l * i / (d3 * t),
        source: CoefficientSource::AnalyticAsPrinted,
        zero_current: i == 0.0,
    })
}

/// Central-difference coefficients of the simplified `d_E` sources.
pub fn coefficients_numeric(
    op: &OperatingPoint,
    params: &ConverterParams,
    h_rel: f64,
) -> Result<SmallSignalCoefficients> {
    coefficients_numeric_with(op, params, h_rel, DutyModel::Simplified)
}

/// Central-difference coefficients using either `d_E` expression. The
/// current argument of `d_E` is `I_L`.
pub fn coefficients_numeric_with(
    op: &OperatingPoint,
    params: &ConverterParams,
    h_rel: f64,
    model: DutyModel,
) -> Result<SmallSignalCoefficients> {
    check_op(op)?;
    if !(h_rel > 0.0 && h_rel <= 1e-3) {
        return Err(Error::InvalidStep(h_rel));
    }
    let d_e = |i: f64, v: f64, d: f64| model.ratio(load_ratio_raw(d, v, i, params));
    let f_i = |i: f64, v: f64, d: f64| d_e(i, v, d) * i;
    let f_v = |i: f64, v: f64, d: f64| d_e(i, v, d) * v;

    let step = |x: f64, name: &'static str| -> Result<(f64, f64, f64)> {
        let h = h_rel * x.abs().max(1.0);
        let (up, down) = (x + h, x - h);
        if up == x || down == x {
            return Err(Error::StepTooSmall(name));
        }
        Ok((up, down, up - down))
    };
    let (i, v, d) = (op.i_l, op.v_dc, op.d1);
    let (i_up, i_dn, di) = step(i, "i_l")?;
    let (v_up, v_dn, dv) = step(v, "v_dc")?;
    let (d_up, d_dn, dd) = step(d, "d1")?;

    let source = match model {
        DutyModel::Simplified => CoefficientSource::NumericOracle,
        DutyModel::Exact => CoefficientSource::NumericExact,
    };
    Ok(SmallSignalCoefficients {
        d_t: (f_i(i_up, v, d) - f_i(i_dn, v, d)) / di,
        g_t: (f_i(i, v_up, d) - f_i(i, v_dn, d)) / dv,
        i_t: (f_i(i, v, d_up) - f_i(i, v, d_dn)) / dd,
        r_p: (f_v(i_up, v, d) - f_v(i_dn, v, d)) / di,
        d_p: (f_v(i, v_up, d) - f_v(i, v_dn, d)) / dv,
        v_p: (f_v(i, v, d_up) - f_v(i, v, d_dn)) / dd,
        source,
        zero_current: i == 0.0,
    })
}

/// Perturbation input of the small-signal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    /// Duty command `d̃1`.
    Duty,
    /// Source voltage `ṽ_dc`.
    Source,
    /// Injected output current `ĩ_z`.
    LoadCurrent,
}

/// `ẋ = A·x + B1·d̃1 + B2·ṽ_dc + B3·ĩ_z` with `x = [ĩ_L, ṽ_out]`.
///
/// The series path of one stage carries `2·L_s`; the output node is `C_f`
/// loaded by `R_L / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpaceModel {
    pub a: [[f64; 2]; 2],
    pub b1: [f64; 2],
    pub b2: [f64; 2],
    pub b3: [f64; 2],
    /// Selects `ṽ_out`.
    pub c: [f64; 2],
    /// Selects `ĩ_L`.
    pub d_sel: [f64; 2],
}

pub fn assemble_state_space(coeffs: &SmallSignalCoefficients, params: &ConverterParams) -> StateSpaceModel {
    let two_l = 2.0 * params.l_s();
    let c_f = params.c_f();
    let r_stage = params.per_stage_load();
    StateSpaceModel {
        a: [
            [coeffs.r_p / two_l, -1.0 / two_l],
            [1.0 / c_f, -1.0 / (c_f * r_stage)],
        ],
        b1: [coeffs.v_p / two_l, 0.0],
        b2: [coeffs.d_p / two_l, 0.0],
        b3: [0.0, 1.0 / c_f],
        c: [0.0, 1.0],
        d_sel: [1.0, 0.0],
    }
}

impl StateSpaceModel {
    pub fn input(&self, input: Input) -> [f64; 2] {
        match input {
            Input::Duty => self.b1,
            Input::Source => self.b2,
            Input::LoadCurrent => self.b3,
        }
    }

    pub fn trace(&self) -> f64 {
        self.a[0][0] + self.a[1][1]
    }

    pub fn determinant(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    /// Eigenvalues of `A`.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let half_tr = 0.5 * self.trace();
        let disc = Complex64::new(half_tr * half_tr - self.determinant(), 0.0).sqrt();
        [half_tr + disc, half_tr - disc]
    }

    /// Both eigenvalues strictly in the left half plane.
    pub fn is_hurwitz(&self) -> bool {
        self.trace() < 0.0 && self.determinant() > 0.0
    }

    /// `C·(sI − A)⁻¹·B` evaluated numerically at a complex frequency.
    pub fn evaluate(&self, input: Input, s: Complex64) -> Complex64 {
        let b = self.input(input);
        let m00 = s - self.a[0][0];
        let m01 = Complex64::new(-self.a[0][1], 0.0);
        let m10 = Complex64::new(-self.a[1][0], 0.0);
        let m11 = s - self.a[1][1];
        let det = m00 * m11 - m01 * m10;
        // (sI − A)⁻¹ = adj / det
        let x0 = (m11 * b[0] - m01 * b[1]) / det;
        let x1 = (-m10 * b[0] + m00 * b[1]) / det;
        self.c[0] * x0 + self.c[1] * x1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaged::solve_operating_point;
    use approx::assert_relative_eq;

    fn op(d1: f64, i_l: f64) -> OperatingPoint {
        OperatingPoint {
            d1,
            v_dc: 15.0,
            i_l,
            v_out_stage: 0.0,
            i_out: i_l,
            d_e: 0.0,
            v_out_total: 0.0,
        }
    }

    #[test]
    fn analytic_at_zero_current() {
        let p = ConverterParams::reference_design();
        let c = coefficients_analytic(&op(0.5, 0.0), &p).unwrap();
        assert_eq!(
            (c.d_t, c.g_t, c.i_t, c.r_p, c.d_p, c.v_p),
            (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
        );
        assert!(c.zero_current);
    }

    #[test]
    fn analytic_hand_value() {
        let p = ConverterParams::reference_design();
        let c = coefficients_analytic(&op(0.5, 0.5), &p).unwrap();
        // 1 − 16·230e-9·0.5 / (0.25·15·5e-6)
        assert_relative_eq!(c.d_t, 0.901_866_666_666_667, max_relative = 1e-13);
        assert_relative_eq!(c.r_p, -1.472, max_relative = 1e-13);
    }

    #[test]
    fn numeric_at_zero_current() {
        let p = ConverterParams::reference_design();
        let c = coefficients_numeric(&op(0.5, 0.0), &p, DEFAULT_STEP).unwrap();
        assert_relative_eq!(c.d_t, 1.0, max_relative = 1e-9);
        assert!(c.g_t.abs() < 1e-12 && c.i_t.abs() < 1e-12 && c.v_p.abs() < 1e-9);
        assert_relative_eq!(c.r_p, -8.0 * 230e-9 / (0.25 * 5e-6), max_relative = 1e-8);
        assert_relative_eq!(c.d_p, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn printed_and_derived_rp_differ_by_twice_current() {
        let p = ConverterParams::reference_design();
        for i_l in [0.25, 0.5, 1.3] {
            let a = coefficients_analytic(&op(0.5, i_l), &p).unwrap();
            let n = coefficients_numeric(&op(0.5, i_l), &p, DEFAULT_STEP).unwrap();
            assert_relative_eq!(n.r_p, -1.472, max_relative = 1e-8);
            assert_relative_eq!(a.r_p, n.r_p * 2.0 * i_l, max_relative = 1e-8);
        }
    }

    #[test]
    fn numeric_matches_analytic_for_shared_terms() {
        let p = ConverterParams::reference_design();
        let a = coefficients_analytic(&op(0.5, 0.5), &p).unwrap();
        let n = coefficients_numeric(&op(0.5, 0.5), &p, DEFAULT_STEP).unwrap();
        for (x, y) in [
            (a.d_t, n.d_t),
            (a.g_t, n.g_t),
            (a.i_t, n.i_t),
            (a.d_p, n.d_p),
            (a.v_p, n.v_p),
        ] {
            assert_relative_eq!(x, y, max_relative = 1e-6);
        }
    }

    #[test]
    fn central_difference_converges_quadratically() {
        let p = ConverterParams::reference_design();
        let o = op(0.35, 0.8);
        let a = coefficients_analytic(&o, &p).unwrap();
        let err = |h: f64| {
            let n = coefficients_numeric(&o, &p, h).unwrap();
            [
                (n.g_t - a.g_t).abs(),
                (n.i_t - a.i_t).abs(),
                (n.v_p - a.v_p).abs(),
            ]
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        for k in 0..3 {
            let ratio = e1[k] / e2[k];
            assert!((ratio - 4.0).abs() < 0.05, "term {k}: ratio {ratio}");
        }
        // D_T and D_P are polynomial in their own variable: exact to roundoff.
        let n = coefficients_numeric(&o, &p, 1e-3).unwrap();
        assert!((n.d_t - a.d_t).abs() < 1e-11);
        assert!((n.d_p - a.d_p).abs() < 1e-11);
    }

    #[test]
    fn step_validation() {
        let p = ConverterParams::reference_design();
        assert_eq!(
            coefficients_numeric(&op(0.5, 0.5), &p, 0.0),
            Err(Error::InvalidStep(0.0))
        );
        assert_eq!(
            coefficients_numeric(&op(0.5, 0.5), &p, 1e-2),
            Err(Error::InvalidStep(1e-2))
        );
        assert_eq!(
            coefficients_numeric(&op(0.5, 0.5), &p, 1e-17),
            Err(Error::StepTooSmall("i_l"))
        );
    }

    #[test]
    fn state_space_layout() {
        let p = ConverterParams::reference_design();
        let c = coefficients_analytic(&op(0.5, 0.5), &p).unwrap();
        let ss = assemble_state_space(&c, &p);
        assert_eq!(ss.a[0][1], -1.0 / (2.0 * 230e-9));
        assert_eq!(ss.a[1][0], 1.0 / 10e-6);
        assert_eq!(ss.a[1][1], -1.0 / (10e-6 * 11.25));
        assert_eq!(ss.a[0][0], c.r_p / (2.0 * 230e-9));
        assert_eq!(ss.b1, [c.v_p / (2.0 * 230e-9), 0.0]);
        assert_eq!(ss.b2, [1.0 / (2.0 * 230e-9), 0.0]);
        assert_eq!(ss.b3, [0.0, 1.0 / 10e-6]);
        assert_eq!((ss.c, ss.d_sel), ([0.0, 1.0], [1.0, 0.0]));
    }

    #[test]
    fn undamped_lc_pair() {
        let p = ConverterParams::reference_design()
            .with_load(f64::INFINITY)
            .unwrap();
        let mut c = coefficients_analytic(&op(0.5, 0.0), &p).unwrap();
        c.r_p = 0.0;
        let ss = assemble_state_space(&c, &p);
        let w = 1.0 / (2.0 * 230e-9 * 10e-6_f64).sqrt();
        let [e1, e2] = ss.eigenvalues();
        assert_eq!(e1.re, 0.0);
        assert_relative_eq!(e1.im.abs(), w, max_relative = 1e-12);
        assert_relative_eq!(e2.im, -e1.im, max_relative = 1e-12);
        assert!(!ss.is_hurwitz());
    }

    #[test]
    fn loaded_model_is_hurwitz() {
        let p = ConverterParams::reference_design();
        for d1 in [0.15, 0.279, 0.5, 0.8] {
            let o = solve_operating_point(d1, 15.0, &p, DutyModel::Exact).unwrap();
            for c in [
                coefficients_analytic(&o, &p).unwrap(),
                coefficients_numeric(&o, &p, DEFAULT_STEP).unwrap(),
            ] {
                let ss = assemble_state_space(&c, &p);
                assert!(ss.is_hurwitz());
                assert!(ss.eigenvalues().iter().all(|e| e.re < 0.0));
            }
        }
    }
}
