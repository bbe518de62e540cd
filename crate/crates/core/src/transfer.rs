//! Open-loop transfer functions of the linearized converter.
//!
//! All three share the characteristic polynomial of the `(ĩ_L, ṽ_out)` pair:
//!
//! ```text
//! G_vd(s) = V_P            / (1 + s/(Q_p·ω_p) + s²/ω_p²)
//! G_vv(s) = D_P            / (1 + s/(Q_p·ω_p) + s²/ω_p²)
//! G_vi(s) = −R_P·(1 + s/ω_rz) / (1 + s/(Q_p·ω_p) + s²/ω_p²)
//! ```
//!
//! with `ω_p = 1/√(2·L_s·C_f)` and `ω_rz = −R_P/(2·L_s)`. These
//! [`ClosedForm::Printed`] expressions drop the load coupling factor
//! `κ = 1 − R_P/(R_L/N)`. Keeping it ([`ClosedForm::Loaded`]) divides each dc
//! gain by `κ` and moves the natural frequency to `ω_p·√κ`; `Q_p` is already
//! exact. The loaded forms equal `C·(sI − A)⁻¹·B` identically, and the two
//! coincide as `R_L → ∞`.

use crate::error::{Error, Result};
use crate::params::ConverterParams;
use crate::rational::RationalTransferFunction;
use crate::small_signal::{Input, SmallSignalCoefficients, StateSpaceModel};

/// Which algebraic form of the closed-form transfer functions to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClosedForm {
    /// Natural frequency `ω_p` and unscaled dc gains.
    #[default]
    Printed,
    /// Includes the load coupling factor `κ`; exact for the 2-state model.
    Loaded,
}

impl ClosedForm {
    pub fn as_str(self) -> &'static str {
        match self {
            ClosedForm::Printed => "printed",
            ClosedForm::Loaded => "loaded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonantParameters {
    /// `1/√(2·L_s·C_f)`, rad/s.
    pub omega_p: f64,
    /// Full quality-factor expression (not the small-load approximation).
    pub q_p: f64,
    /// `Q_p·ω_p`, the dominant low-frequency pole, rad/s.
    pub omega_o: f64,
    /// `−R_P/(2·L_s)`, the output-impedance zero, rad/s.
    pub omega_rz: f64,
    /// `√(2·L_s/C_f) / (−R_P)`, valid when the load barely damps the tank.
    pub q_p_approx: f64,
    /// `κ = 1 − R_P/(R_L/N)`.
    pub load_factor: f64,
    /// `ω_p·√κ`, the natural frequency including load coupling.
    pub omega_n: f64,
}

pub fn resonant_parameters(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
) -> Result<ResonantParameters> {
    let r_p = coeffs.r_p;
    if r_p.is_nan() || r_p >= 0.0 {
        return Err(Error::UndampedOperatingPoint(r_p));
    }
    let two_l = 2.0 * params.l_s();
    let c_f = params.c_f();
    let r_stage = params.per_stage_load();
    let tank = two_l * c_f;
    let kappa = 1.0 - r_p / r_stage;
    let damping = 1.0 / (c_f * r_stage) - r_p / two_l;
    let omega_p = 1.0 / tank.sqrt();
    let q_p = (tank * kappa).sqrt() / (tank * damping);
    Ok(ResonantParameters {
        omega_p,
        q_p,
        omega_o: q_p * omega_p,
        omega_rz: -r_p / two_l,
        q_p_approx: (two_l / c_f).sqrt() / -r_p,
        load_factor: kappa,
        omega_n: omega_p * kappa.sqrt(),
    })
}

impl ResonantParameters {
    /// Dominant low-frequency pole of the chosen form: `Q_p·ω_p` for
    /// [`ClosedForm::Printed`], `Q_p·ω_n` for [`ClosedForm::Loaded`].
    pub fn dominant_pole(&self, form: ClosedForm) -> f64 {
        match form {
            ClosedForm::Printed => self.omega_o,
            ClosedForm::Loaded => self.q_p * self.omega_n,
        }
    }
}

fn shared_denominator(res: &ResonantParameters, form: ClosedForm) -> (Vec<f64>, f64) {
    let (w, gain) = match form {
        ClosedForm::Printed => (res.omega_p, 1.0),
        ClosedForm::Loaded => (res.omega_n, 1.0 / res.load_factor),
    };
    (vec![1.0, 1.0 / (res.q_p * w), 1.0 / (w * w)], gain)
}

/// Control-to-output `ṽ_out / d̃1`.
pub fn gvd_closed_form(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
) -> Result<RationalTransferFunction> {
    gvd_closed_form_with(coeffs, params, ClosedForm::Printed)
}

pub fn gvd_closed_form_with(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
    form: ClosedForm,
) -> Result<RationalTransferFunction> {
    let res = resonant_parameters(coeffs, params)?;
    let (den, gain) = shared_denominator(&res, form);
    Ok(RationalTransferFunction::new(vec![coeffs.v_p * gain], den))
}

/// Audio susceptibility `ṽ_out / ṽ_dc`.
pub fn gvv_closed_form(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
) -> Result<RationalTransferFunction> {
    gvv_closed_form_with(coeffs, params, ClosedForm::Printed)
}

pub fn gvv_closed_form_with(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
    form: ClosedForm,
) -> Result<RationalTransferFunction> {
    let res = resonant_parameters(coeffs, params)?;
    let (den, gain) = shared_denominator(&res, form);
    Ok(RationalTransferFunction::new(vec![coeffs.d_p * gain], den))
}

/// Output impedance `ṽ_out / ĩ_z`.
pub fn gvi_closed_form(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
) -> Result<RationalTransferFunction> {
    gvi_closed_form_with(coeffs, params, ClosedForm::Printed)
}

pub fn gvi_closed_form_with(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
    form: ClosedForm,
) -> Result<RationalTransferFunction> {
    let res = resonant_parameters(coeffs, params)?;
    let (den, gain) = shared_denominator(&res, form);
    let k = -coeffs.r_p * gain;
    Ok(RationalTransferFunction::new(vec![k, k / res.omega_rz], den))
}

/// `V_P / (1 + s/ω_o)`: the quadratic with its high-frequency pole dropped.
pub fn gvd_first_order(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
) -> Result<RationalTransferFunction> {
    gvd_first_order_with(coeffs, params, ClosedForm::Printed)
}

/// Single-pole `G_vd` at the dominant pole of the chosen form.
pub fn gvd_first_order_with(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
    form: ClosedForm,
) -> Result<RationalTransferFunction> {
    let res = resonant_parameters(coeffs, params)?;
    if res.q_p >= 0.5 {
        return Err(Error::PolesNotSeparated(res.q_p));
    }
    let (_, gain) = shared_denominator(&res, form);
    Ok(RationalTransferFunction::new(
        vec![coeffs.v_p * gain],
        vec![1.0, 1.0 / res.dominant_pole(form)],
    ))
}

/// Symbolic `C·adj(sI − A)·B / det(sI − A)` for the two-state model.
pub fn tf_from_state_space(ssm: &StateSpaceModel, input: Input) -> RationalTransferFunction {
    let a = ssm.a;
    let b = ssm.input(input);
    let c = ssm.c;
    // adj(sI − A) = [[s − a11, a01], [a10, s − a00]]
    let s1 = c[0] * b[0] + c[1] * b[1];
    let s0 = -c[0] * b[0] * a[1][1] + c[0] * b[1] * a[0][1] + c[1] * b[0] * a[1][0] - c[1] * b[1] * a[0][0];
    RationalTransferFunction::new(vec![s0, s1], vec![ssm.determinant(), -ssm.trace(), 1.0])
}
