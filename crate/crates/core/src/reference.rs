//! Comparison of computed dynamic and control parameters against the
//! published values for the 16-stage reference design.
//!
//! The report never asserts. Each published value is matched with its
//! computed counterpart from every coefficient source and, where the filter
//! capacitance enters, under both readings of `C_f` (per stage, and the
//! series stack `C_f/N`). Rows that differ by more than 1% are marked
//! `not reconciled`.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::averaged::{solve_duty_for_target, DutyModel, OperatingPoint};
use crate::error::Result;
use crate::fmt::num;
use crate::params::ConverterParams;
use crate::regulator::design_pi;
use crate::small_signal::{
    coefficients_analytic, coefficients_numeric_with, SmallSignalCoefficients, DEFAULT_STEP,
};
use crate::transfer::{gvd_closed_form_with, resonant_parameters, ClosedForm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceValue {
    pub symbol: &'static str,
    pub unit: &'static str,
    pub value: f64,
    /// Multiplier from SI to `unit`.
    pub scale: f64,
}

const fn rv(symbol: &'static str, unit: &'static str, value: f64, scale: f64) -> ReferenceValue {
    ReferenceValue {
        symbol,
        unit,
        value,
        scale,
    }
}

/// Published dynamic and control parameters of the 16-stage design.
pub const REFERENCE_DYNAMICS: [ReferenceValue; 12] = [
    rv("D_T", "-", 0.878, 1.0),
    rv("G_T", "mOhm^-1", 3.996, 1e3),
    rv("I_T", "A", 0.192, 1.0),
    rv("R_P", "Ohm", -0.899, 1.0),
    rv("D_P", "-", 0.998, 1.0),
    rv("V_P", "V", 2.873, 1.0),
    rv("omega_p/2pi", "kHz", 114.6, 1e-3 / (2.0 * PI)),
    rv("Q_p", "-", 0.372, 1.0),
    rv("omega_o/2pi", "kHz", 42.6, 1e-3 / (2.0 * PI)),
    rv("omega_rz/2pi", "kHz", 305.2, 1e-3 / (2.0 * PI)),
    rv("K_p", "mV^-1", 8.831, 1e3),
    rv("omega_c/2pi", "kHz", 41.83, 1e-3 / (2.0 * PI)),
];

/// Relative difference beyond which a row is marked `not reconciled`.
pub const RECONCILE_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub v_out_total: f64,
    pub v_dc: f64,
    /// Model used to solve the operating point.
    pub model: DutyModel,
    pub gcf_desired_hz: f64,
    pub form: ClosedForm,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            v_out_total: 176.0,
            v_dc: 15.0,
            model: DutyModel::Exact,
            gcf_desired_hz: 1000.0,
            form: ClosedForm::Printed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub symbol: &'static str,
    pub unit: &'static str,
    pub published: f64,
    pub source: &'static str,
    /// `per-stage`, `stack` (C_f/N) or `-` when C_f does not enter.
    pub c_f: &'static str,
    pub computed: f64,
}

impl ReportRow {
    pub fn abs_delta(&self) -> f64 {
        self.computed - self.published
    }

    pub fn rel_delta(&self) -> f64 {
        self.abs_delta() / self.published.abs()
    }

    pub fn reconciled(&self) -> bool {
        self.rel_delta().abs() <= RECONCILE_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpliedCrossover {
    pub source: &'static str,
    pub c_f: &'static str,
    /// Plant crossover, Hz.
    pub gcf_actual_hz: f64,
    /// Loop crossover that reproduces the published `K_p`, Hz.
    pub gcf_desired_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceReport {
    pub options: ReportOptions,
    pub op: OperatingPoint,
    pub rows: Vec<ReportRow>,
    pub implied: Vec<ImpliedCrossover>,
}

fn sources(op: &OperatingPoint, params: &ConverterParams) -> Result<[SmallSignalCoefficients; 3]> {
    Ok([
        coefficients_analytic(op, params)?,
        coefficients_numeric_with(op, params, DEFAULT_STEP, DutyModel::Simplified)?,
        coefficients_numeric_with(op, params, DEFAULT_STEP, DutyModel::Exact)?,
    ])
}

/// Builds the comparison at the operating point meeting `v_out_total`.
pub fn reference_report(params: &ConverterParams, options: ReportOptions) -> Result<ReferenceReport> {
    let op = solve_duty_for_target(options.v_out_total, options.v_dc, params, options.model)?;
    let n = f64::from(params.n_stages());
    let stack = ConverterParams::new(
        params.v_dc(),
        params.n_stages(),
        params.l_s(),
        params.c_s(),
        params.c_f() / n,
        params.r_l(),
        params.f_sw(),
    )
    .expect("scaled copy of valid parameters is valid");
    let gcf_desired = 2.0 * PI * options.gcf_desired_hz;
    let published = |sym: &str| REFERENCE_DYNAMICS.iter().find(|r| r.symbol == sym).unwrap();

    let mut rows = Vec::new();
    let mut implied = Vec::new();
    for coeffs in sources(&op, params)? {
        let source = coeffs.source.as_str();
        let mut push = |sym: &'static str, c_f: &'static str, si: f64| {
            let r = published(sym);
            rows.push(ReportRow {
                symbol: r.symbol,
                unit: r.unit,
                published: r.value,
                source,
                c_f,
                computed: si * r.scale,
            });
        };
        push("D_T", "-", coeffs.d_t);
        push("G_T", "-", coeffs.g_t);
        push("I_T", "-", coeffs.i_t);
        push("R_P", "-", coeffs.r_p);
        push("D_P", "-", coeffs.d_p);
        push("V_P", "-", coeffs.v_p);
        for (label, p) in [("per-stage", params), ("stack", &stack)] {
            let res = resonant_parameters(&coeffs, p)?;
            let omega_o = res.dominant_pole(options.form);
            let gvd = gvd_closed_form_with(&coeffs, p, options.form)?;
            let design = design_pi(&gvd, omega_o, gcf_desired)?;
            push("omega_p/2pi", label, res.omega_p);
            push("Q_p", label, res.q_p);
            push("omega_o/2pi", label, omega_o);
            push("K_p", label, design.controller.k_p);
            push("omega_c/2pi", label, design.controller.omega_c);
            implied.push(ImpliedCrossover {
                source,
                c_f: label,
                gcf_actual_hz: design.gcf_actual / (2.0 * PI),
                gcf_desired_hz: published("K_p").value / published("K_p").scale * design.gcf_actual
                    / (2.0 * PI),
            });
        }
        push("omega_rz/2pi", "-", -coeffs.r_p / (2.0 * params.l_s()));
    }
    let order = |sym: &str| REFERENCE_DYNAMICS.iter().position(|r| r.symbol == sym).unwrap();
    rows.sort_by_key(|r| order(r.symbol));
    Ok(ReferenceReport {
        options,
        op,
        rows,
        implied,
    })
}

impl ReferenceReport {
    /// Deterministic text rendering.
    pub fn render(&self) -> String {
        let o = &self.options;
        let mut s = String::new();
        let _ = writeln!(s, "# reference dynamic and control parameters");
        let _ = writeln!(
            s,
            "# operating point: v_out_total = {} V, v_dc = {} V, model = {}, d1 = {}, i_l = {} A",
            num(o.v_out_total),
            num(o.v_dc),
            o.model.as_str(),
            num(self.op.d1),
            num(self.op.i_l)
        );
        let _ = writeln!(
            s,
            "# transfer-function form = {}, designed loop crossover = {} Hz",
            o.form.as_str(),
            num(o.gcf_desired_hz)
        );
        let _ = writeln!(
            s,
            "symbol,unit,published,source,c_f,computed,abs_delta,rel_delta,status"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.symbol,
                r.unit,
                num(r.published),
                r.source,
                r.c_f,
                num(r.computed),
                num(r.abs_delta()),
                num(r.rel_delta()),
                if r.reconciled() {
                    "reconciled"
                } else {
                    "not reconciled"
                }
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "# loop crossover implied by the published K_p");
        let _ = writeln!(s, "source,c_f,plant_crossover_hz,implied_loop_crossover_hz");
        for i in &self.implied {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                i.source,
                i.c_f,
                num(i.gcf_actual_hz),
                num(i.gcf_desired_hz)
            );
        }
        s
    }
}
