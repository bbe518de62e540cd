//! Discontinuous-conduction averaged model.
//!
//! In DCM each stage behaves, on average, like an ideal transformer whose
//! ratio `d_E = v_out / v_dc` depends on the commanded duty `d1` and on the
//! load. Both forms share the dimensionless load ratio
//! `x = 4·L_s·f_sw·I_out / (d1²·V_dc)`:
//!
//! * exact: `d_E = (1 − x) / (1 + x)`
//! * simplified (first order in `x`): `d_E = 1 − 2x`
//!
//! The averaged circuit is solved per stage: one stage feeds `R_L / N`, and the
//! series-connected output is `N` times the stage voltage.

use crate::error::{Error, Result};
use crate::params::ConverterParams;

/// Which equivalent-duty expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DutyModel {
    #[default]
    Exact,
    Simplified,
}

impl DutyModel {
    /// `d_E` as a function of the load ratio `x`, without range checks.
    pub fn ratio(self, x: f64) -> f64 {
        match self {
            DutyModel::Exact => (1.0 - x) / (1.0 + x),
            DutyModel::Simplified => 1.0 - 2.0 * x,
        }
    }

    /// `d(d_E)/dx`.
    pub fn ratio_slope(self, x: f64) -> f64 {
        match self {
            DutyModel::Exact => -2.0 / ((1.0 + x) * (1.0 + x)),
            DutyModel::Simplified => -2.0,
        }
    }

    /// Validated `d_E(d1, v_dc, i_out)`.
    pub fn equivalent_duty(self, d1: f64, v_dc: f64, i_out: f64, params: &ConverterParams) -> Result<f64> {
        Ok(self.ratio(dcm_load_ratio(d1, v_dc, i_out, params)?))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DutyModel::Exact => "exact",
            DutyModel::Simplified => "simplified",
        }
    }
}

/// Steady-state solution of the averaged circuit for one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub d1: f64,
    pub v_dc: f64,
    /// Averaged (rectified) inductor current.
    pub i_l: f64,
    pub v_out_stage: f64,
    /// Per-stage load current; equal to `i_l` at steady state.
    pub i_out: f64,
    pub d_e: f64,
    pub v_out_total: f64,
}

fn check_inputs(d1: f64, v_dc: f64, i_out: f64) -> Result<()> {
    if !(d1 > 0.0 && d1 <= 1.0) {
        return Err(Error::InvalidDuty(d1));
    }
    if !(v_dc > 0.0 && v_dc.is_finite()) {
        return Err(Error::InvalidSource(v_dc));
    }
    if i_out.is_nan() || i_out < 0.0 {
        return Err(Error::NegativeLoad(i_out));
    }
    Ok(())
}

/// Unchecked load ratio; used inside integrators where the inputs have
/// already been clamped.
pub(crate) fn load_ratio_raw(d1: f64, v_dc: f64, i_out: f64, params: &ConverterParams) -> f64 {
    4.0 * params.l_s() * params.f_sw() * i_out / (d1 * d1 * v_dc)
}

/// `x = 4·L_s·f_sw·I_out / (d1²·V_dc)`; the simplified model is accurate
/// while this stays small compared to one.
pub fn dcm_load_ratio(d1: f64, v_dc: f64, i_out: f64, params: &ConverterParams) -> Result<f64> {
    check_inputs(d1, v_dc, i_out)?;
    Ok(load_ratio_raw(d1, v_dc, i_out, params))
}

pub fn equivalent_duty_exact(d1: f64, v_dc: f64, i_out: f64, params: &ConverterParams) -> Result<f64> {
    DutyModel::Exact.equivalent_duty(d1, v_dc, i_out, params)
}

pub fn equivalent_duty_simplified(d1: f64, v_dc: f64, i_out: f64, params: &ConverterParams) -> Result<f64> {
    DutyModel::Simplified.equivalent_duty(d1, v_dc, i_out, params)
}

/// Solves `v = d_E(d1, v_dc, v / r_stage)·v_dc` for the per-stage output.
///
/// The residual is monotone in `v` on `[0, v_dc]`, so bisection always
/// brackets the root; a single Newton step polishes the result.
pub fn solve_operating_point(
    d1: f64,
    v_dc: f64,
    params: &ConverterParams,
    model: DutyModel,
) -> Result<OperatingPoint> {
    check_inputs(d1, v_dc, 0.0)?;
    let r_stage = params.per_stage_load();
    let dx_dv = 4.0 * params.l_s() * params.f_sw() / (d1 * d1 * v_dc * r_stage);
    let residual = |v: f64| v - model.ratio(dx_dv * v) * v_dc;

    let (mut lo, mut hi) = (0.0, v_dc);
    if residual(lo) > 0.0 || residual(hi) < 0.0 {
        return Err(Error::NoConvergence("fixed point not bracketed".into()));
    }
    let width = 1e-13 * v_dc;
    let mut iterations = 0;
    while hi - lo > width {
        iterations += 1;
        if iterations > 200 {
            return Err(Error::NoConvergence("bisection stalled".into()));
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut v = 0.5 * (lo + hi);
    let slope = 1.0 - model.ratio_slope(dx_dv * v) * dx_dv * v_dc;
    let polished = v - residual(v) / slope;
    if polished.is_finite() && residual(polished).abs() <= residual(v).abs() {
        v = polished;
    }
    if residual(v).abs() > 1e-12 * v_dc {
        return Err(Error::NoConvergence(format!(
            "residual {} exceeds tolerance",
            residual(v)
        )));
    }

    let i = if r_stage.is_infinite() { 0.0 } else { v / r_stage };
    Ok(OperatingPoint {
        d1,
        v_dc,
        i_l: i,
        v_out_stage: v,
        i_out: i,
        d_e: v / v_dc,
        v_out_total: v * f64::from(params.n_stages()),
    })
}

/// Finds the duty ratio that yields a requested total output voltage.
///
/// The duty is obtained in closed form by inverting the chosen `d_E`
/// expression and then confirmed with a forward [`solve_operating_point`].
/// At no load the only reachable target is `N·v_dc`, for which `d1 = 1` is
/// returned by convention.
pub fn solve_duty_for_target(
    v_out_total_target: f64,
    v_dc: f64,
    params: &ConverterParams,
    model: DutyModel,
) -> Result<OperatingPoint> {
    if !(v_dc > 0.0 && v_dc.is_finite()) {
        return Err(Error::InvalidSource(v_dc));
    }
    let n = f64::from(params.n_stages());
    let max = n * v_dc;
    let out_of_range = Error::TargetOutOfRange {
        target: v_out_total_target,
        max,
    };
    if !(v_out_total_target > 0.0 && v_out_total_target <= max) {
        return Err(out_of_range);
    }
    let r_stage = params.per_stage_load();
    if r_stage.is_infinite() {
        return if v_out_total_target == max {
            solve_operating_point(1.0, v_dc, params, model)
        } else {
            Err(out_of_range)
        };
    }
    if v_out_total_target == max {
        return Err(out_of_range);
    }

    let v_stage = v_out_total_target / n;
    let i = v_stage / r_stage;
    let d_e = v_stage / v_dc;
    let x = match model {
        DutyModel::Exact => (1.0 - d_e) / (1.0 + d_e),
        DutyModel::Simplified => 0.5 * (1.0 - d_e),
    };
    let d1 = (4.0 * params.l_s() * params.f_sw() * i / (x * v_dc)).sqrt();
    if d1 > 1.0 {
        return Err(Error::DutyOutOfRange(d1));
    }
    let op = solve_operating_point(d1, v_dc, params, model)?;
    if ((op.v_out_total - v_out_total_target) / v_out_total_target).abs() > 1e-9 {
        return Err(Error::NoConvergence(format!(
            "forward solve gives {} V for target {} V",
            op.v_out_total, v_out_total_target
        )));
    }
    Ok(op)
}
