//! Time-domain simulation of the nonlinear averaged model, open loop or
//! under the PI regulator.
//!
//! Per stage:
//!
//! ```text
//! 2·L_s·di/dt = d_E(d1, v_dc, i)·v_dc − v
//!   C_f·dv/dt = i − v/(R_L/N) + i_z
//! ```
//!
//! with `i ≥ 0` enforced by the rectifier. The regulator acts on the
//! per-stage error `v_ref/N − v`; its integrator is frozen while the duty
//! command is clamped to `[D1_MIN, 1]`.
//!
//! Integration is fixed-step RK4 on a uniform output grid. The current
//! equation is stiff at light duty (its eigenvalue is roughly
//! `−4·f_sw/d1²`), so each output step is split into as many internal
//! substeps as keep `|λ|·h ≤ 1`.

use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::averaged::{load_ratio_raw, solve_duty_for_target, DutyModel, OperatingPoint};
use crate::error::{Error, Result};
use crate::params::ConverterParams;
use crate::regulator::PIController;
use crate::small_signal::{
    assemble_state_space, coefficients_numeric_with, Input, SmallSignalCoefficients, DEFAULT_STEP,
};
use crate::trace::SimulationTrace;

/// Lower duty clamp; `d_E` is singular at `d1 = 0`.
pub const D1_MIN: f64 = 0.02;

/// A state more than this multiple of its reference scale is unstable.
const BLOWUP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// New source voltage, V.
    SourceStep(f64),
    /// New load current, A; realized as `r_l = v_ref_total / i_out`.
    LoadStep(f64),
    /// New total load resistance, Ω.
    LoadResistance(f64),
    /// New total output reference, V.
    ReferenceStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioEvent {
    pub t: f64,
    pub kind: EventKind,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SourceStep(_) => "source_step",
            EventKind::LoadStep(_) => "load_step",
            EventKind::LoadResistance(_) => "load_resistance",
            EventKind::ReferenceStep(_) => "reference_step",
        }
    }
}

/// Parses a scenario: one `t_s, kind, value` event per line, `#` comments,
/// an optional `t_s,kind,value` header. Fields may be separated by commas or
/// whitespace.
pub fn parse_scenario(text: &str) -> Result<Vec<ScenarioEvent>> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields == ["t_s", "kind", "value"] {
            continue;
        }
        let bad = || Error::InvalidSetup(format!("scenario line {}: {raw:?}", idx + 1));
        let [t, kind, value] = fields[..] else {
            return Err(bad());
        };
        let t = f64::from_str(t).map_err(|_| bad())?;
        let value = f64::from_str(value).map_err(|_| bad())?;
        let kind = match kind {
            "source_step" => EventKind::SourceStep(value),
            "load_step" => EventKind::LoadStep(value),
            "load_resistance" => EventKind::LoadResistance(value),
            "reference_step" => EventKind::ReferenceStep(value),
            _ => return Err(bad()),
        };
        if !(t >= 0.0 && t.is_finite() && value.is_finite()) {
            return Err(bad());
        }
        events.push(ScenarioEvent { t, kind });
    }
    check_order(&events)?;
    Ok(events)
}

fn check_order(events: &[ScenarioEvent]) -> Result<()> {
    if events.windows(2).any(|w| !(w[0].t < w[1].t)) {
        return Err(Error::InvalidSetup(
            "scenario events must be strictly time-ordered".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopConfig {
    pub t_end: f64,
    /// Output step; `None` selects `t_sw/10`. Must not exceed `t_sw`.
    pub dt: Option<f64>,
    pub model: DutyModel,
    pub record_decimation: usize,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            t_end: 50e-3,
            dt: None,
            model: DutyModel::Simplified,
            record_decimation: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Control {
    Open(f64),
    Pi(PIController),
}

#[derive(Debug, Clone, Copy)]
struct Inputs {
    v_dc: f64,
    r_l: f64,
    v_ref_total: f64,
    i_z: f64,
}

struct Averaged<'a> {
    params: &'a ConverterParams,
    model: DutyModel,
    control: Control,
    inputs: Inputs,
    n: f64,
}

impl Averaged<'_> {
    fn duty(&self, y: &[f64; 3]) -> (f64, bool) {
        match self.control {
            Control::Open(d1) => (d1, false),
            Control::Pi(pi) => {
                let u = pi.k_p * (self.inputs.v_ref_total / self.n - y[1]) + y[2];
                (u.clamp(D1_MIN, 1.0), !(D1_MIN..=1.0).contains(&u))
            }
        }
    }

    fn d_e(&self, d1: f64, i: f64) -> f64 {
        self.model
            .ratio(load_ratio_raw(d1, self.inputs.v_dc, i.max(0.0), self.params))
    }

    fn deriv(&self, y: &[f64; 3]) -> [f64; 3] {
        let (d1, clamped) = self.duty(y);
        let v_dc = self.inputs.v_dc;
        let r_stage = self.inputs.r_l / self.n;
        let mut di = (self.d_e(d1, y[0]) * v_dc - y[1]) / (2.0 * self.params.l_s());
        if y[0] <= 0.0 && di < 0.0 {
            di = 0.0;
        }
        let i_load = if r_stage.is_infinite() {
            0.0
        } else {
            y[1] / r_stage
        };
        let dv = (y[0] - i_load + self.inputs.i_z) / self.params.c_f();
        let dz = match self.control {
            Control::Pi(pi) if !clamped => pi.k_p * pi.omega_c * (self.inputs.v_ref_total / self.n - y[1]),
            _ => 0.0,
        };
        [di, dv, dz]
    }

    /// Magnitude of the current equation's eigenvalue.
    fn stiffness(&self, y: &[f64; 3]) -> f64 {
        let (d1, _) = self.duty(y);
        let x = load_ratio_raw(d1, self.inputs.v_dc, y[0].max(0.0), self.params);
        self.model.ratio_slope(x).abs() * 2.0 * self.params.f_sw() / (d1 * d1)
    }

    fn rk4(&self, y: &[f64; 3], h: f64) -> [f64; 3] {
        let add = |a: &[f64; 3], k: &[f64; 3], s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2]];
        let k1 = self.deriv(y);
        let k2 = self.deriv(&add(y, &k1, 0.5 * h));
        let k3 = self.deriv(&add(y, &k2, 0.5 * h));
        let k4 = self.deriv(&add(y, &k3, h));
        let mut out = [0.0; 3];
        for j in 0..3 {
            out[j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        out[0] = out[0].max(0.0);
        out
    }

    fn step(&self, y: &[f64; 3], dt: f64) -> [f64; 3] {
        let substeps = (self.stiffness(y) * dt).ceil().clamp(1.0, 1e6) as usize;
        let h = dt / substeps as f64;
        let mut cur = *y;
        for _ in 0..substeps {
            cur = self.rk4(&cur, h);
        }
        cur
    }

    fn apply(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::SourceStep(v) => {
                if !(v > 0.0) {
                    return Err(Error::InvalidSource(v));
                }
                self.inputs.v_dc = v;
            }
            EventKind::LoadStep(i) => {
                if !(i >= 0.0) {
                    return Err(Error::NegativeLoad(i));
                }
                self.inputs.r_l = self.inputs.v_ref_total / i;
            }
            EventKind::LoadResistance(r) => {
                if !(r > 0.0) {
                    return Err(Error::NegativeLoad(r));
                }
                self.inputs.r_l = r;
            }
            EventKind::ReferenceStep(v) => self.inputs.v_ref_total = v,
        }
        Ok(())
    }

    fn check_reference(&self, t: f64) -> Result<()> {
        let max = self.n * self.inputs.v_dc;
        let v_ref = self.inputs.v_ref_total;
        if matches!(self.control, Control::Pi(_)) && !(v_ref > 0.0 && v_ref < max) {
            return Err(Error::InvalidReference { v_ref, max, t });
        }
        Ok(())
    }

    fn record(&self, trace: &mut SimulationTrace, t: f64, y: &[f64; 3]) {
        let (d1, _) = self.duty(y);
        let d_e = self.d_e(d1, y[0]);
        trace.push(
            t,
            d_e * self.inputs.v_dc,
            self.n * d_e * y[0],
            y[0],
            y[1],
            self.n * y[1],
            d1,
            Some(self.inputs.v_ref_total),
        );
    }

    fn run(
        &mut self,
        y0: [f64; 3],
        events: &[ScenarioEvent],
        t_end: f64,
        dt: f64,
        decimation: usize,
    ) -> Result<SimulationTrace> {
        let mut trace = SimulationTrace::new(dt * decimation as f64, self.params.t_sw(), true);
        let steps = (t_end / dt).round() as usize;
        let v_scale = (self.inputs.v_ref_total.abs() / self.n).max(self.inputs.v_dc);
        let r_min = self.params.per_stage_load().min(self.inputs.r_l / self.n);
        let i_scale = (v_scale / r_min).max(1e-3);
        let mut y = y0;
        let mut next_event = 0;
        for step in 0..=steps {
            let t = step as f64 * dt;
            while next_event < events.len() && events[next_event].t <= t + 1e-3 * dt {
                self.apply(events[next_event].kind)?;
                self.check_reference(events[next_event].t)?;
                next_event += 1;
            }
            if step % decimation == 0 {
                self.record(&mut trace, t, &y);
            }
            if step == steps {
                break;
            }
            y = self.step(&y, dt);
            let t_next = (step + 1) as f64 * dt;
            if y.iter().any(|x| !x.is_finite()) {
                return Err(Error::Instability(t_next));
            }
            if y[0].abs() > BLOWUP * i_scale || y[1].abs() > BLOWUP * v_scale || y[2].abs() > BLOWUP {
                return Err(Error::Instability(t_next));
            }
        }
        Ok(trace)
    }
}

fn output_step(params: &ConverterParams, dt: Option<f64>) -> Result<f64> {
    let dt = dt.unwrap_or(params.t_sw() / 10.0);
    if !(dt > 0.0 && dt <= params.t_sw()) {
        return Err(Error::InvalidStep(dt));
    }
    Ok(dt)
}

/// Runs the regulated averaged model through a scenario, starting from the
/// operating point that meets `v_ref_total` after any `t = 0` events.
pub fn simulate_closed_loop(
    params: &ConverterParams,
    pi: &PIController,
    v_ref_total: f64,
    events: &[ScenarioEvent],
    cfg: &ClosedLoopConfig,
) -> Result<SimulationTrace> {
    check_order(events)?;
    let dt = output_step(params, cfg.dt)?;
    if cfg.record_decimation == 0 {
        return Err(Error::InvalidSetup("record_decimation must be at least 1".into()));
    }
    let mut sim = Averaged {
        params,
        model: cfg.model,
        control: Control::Pi(*pi),
        inputs: Inputs {
            v_dc: params.v_dc(),
            r_l: params.r_l(),
            v_ref_total,
            i_z: 0.0,
        },
        n: f64::from(params.n_stages()),
    };
    let split = events.partition_point(|e| e.t <= 0.0);
    for e in &events[..split] {
        sim.apply(e.kind)?;
    }
    sim.check_reference(0.0)?;
    let loaded = params
        .with_load(sim.inputs.r_l)
        .map_err(|_| Error::NegativeLoad(sim.inputs.r_l))?;
    let op = solve_duty_for_target(sim.inputs.v_ref_total, sim.inputs.v_dc, &loaded, cfg.model)?;
    sim.run(
        [op.i_l, op.v_out_stage, op.d1],
        &events[split..],
        cfg.t_end,
        dt,
        cfg.record_decimation,
    )
}

/// Eigenvalues of the linearized regulated loop, states `(i, v, z)`.
pub fn linearized_closed_loop_poles(
    coeffs: &SmallSignalCoefficients,
    params: &ConverterParams,
    pi: &PIController,
) -> Vec<Complex64> {
    let ss = assemble_state_space(coeffs, params);
    let b = ss.b1;
    #[rustfmt::skip]
    let a = Matrix3::new(
        ss.a[0][0], ss.a[0][1] - b[0] * pi.k_p, b[0],
        ss.a[1][0], ss.a[1][1] - b[1] * pi.k_p, b[1],
        0.0, -pi.k_p * pi.omega_c, 0.0,
    );
    a.complex_eigenvalues().iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub input: Input,
    /// Step size as a fraction of the operating value. Steps above 0.01
    /// leave the small-signal range and are flagged in the report.
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// Largest |Δv_nonlinear − Δv_linear| over the run, per stage, V.
    pub max_deviation: f64,
    /// Largest |Δv_linear|, V.
    pub amplitude: f64,
    /// `max_deviation / amplitude` (0 when both vanish).
    pub relative_deviation: f64,
    /// The step exceeded 1% of the operating value.
    pub beyond_small_signal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyConfig {
    pub t_end: f64,
    pub dt: Option<f64>,
    pub model: DutyModel,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            t_end: 2e-3,
            dt: None,
            model: DutyModel::Simplified,
        }
    }
}

/// Compares the nonlinear response to a small step with the linear
/// state-space response built from coefficients of the same `d_E` model.
/// `pi = None` runs open loop at the operating duty.
pub fn small_signal_consistency(
    params: &ConverterParams,
    pi: Option<&PIController>,
    op: &OperatingPoint,
    perturbation: Perturbation,
    cfg: &ConsistencyConfig,
) -> Result<ConsistencyReport> {
    let size = perturbation.size;
    if !size.is_finite() {
        return Err(Error::InvalidSetup(format!("perturbation size {size}")));
    }
    let beyond_small_signal = size.abs() > 0.01;
    if beyond_small_signal {
        log::warn!("a {:.1}% step is outside the small-signal range", 100.0 * size);
    }
    let dt = output_step(params, cfg.dt)?;
    let d_e = cfg.model.ratio(load_ratio_raw(op.d1, op.v_dc, op.i_l, params));
    if (d_e * op.v_dc - op.v_out_stage).abs() > 1e-9 * op.v_dc {
        return Err(Error::InvalidSetup(format!(
            "operating point is not an equilibrium of the {} model",
            cfg.model.as_str()
        )));
    }
    let coeffs = coefficients_numeric_with(op, params, DEFAULT_STEP, cfg.model)?;
    let ss = assemble_state_space(&coeffs, params);
    let n = f64::from(params.n_stages());

    let control = match pi {
        Some(pi) => Control::Pi(*pi),
        None => Control::Open(op.d1),
    };
    let mut sim = Averaged {
        params,
        model: cfg.model,
        control,
        inputs: Inputs {
            v_dc: op.v_dc,
            r_l: params.r_l(),
            v_ref_total: op.v_out_total,
            i_z: 0.0,
        },
        n,
    };
    let (delta, column) = match perturbation.input {
        Input::Duty => (size * op.d1, ss.b1),
        Input::Source => (size * op.v_dc, ss.b2),
        Input::LoadCurrent => (size * op.i_out, ss.b3),
    };
    match perturbation.input {
        Input::Duty => {
            sim.control = match sim.control {
                Control::Open(d) => Control::Open(d + delta),
                Control::Pi(_) => {
                    return Err(Error::InvalidSetup("duty perturbation requires open loop".into()));
                }
            }
        }
        Input::Source => sim.inputs.v_dc += delta,
        Input::LoadCurrent => sim.inputs.i_z = delta,
    }
    let trace = sim.run([op.i_l, op.v_out_stage, op.d1], &[], cfg.t_end, dt, 1)?;

    // Linear response by exact discretization of the augmented system.
    let dim = if pi.is_some() { 3 } else { 2 };
    let mut aug = DMatrix::<f64>::zeros(dim + 1, dim + 1);
    for r in 0..2 {
        for c in 0..2 {
            aug[(r, c)] = ss.a[r][c];
        }
        aug[(r, dim)] = column[r] * delta;
    }
    if let Some(pi) = pi {
        for r in 0..2 {
            aug[(r, 1)] -= ss.b1[r] * pi.k_p;
            aug[(r, 2)] = ss.b1[r];
        }
        aug[(2, 1)] = -pi.k_p * pi.omega_c;
    }
    let phi = (aug * dt).exp();
    let mut x = nalgebra::DVector::<f64>::zeros(dim + 1);
    x[dim] = 1.0;
    let (mut max_deviation, mut amplitude) = (0.0f64, 0.0f64);
    for k in 0..trace.len() {
        let linear = x[1];
        let nonlinear = trace.v_out_stage[k] - op.v_out_stage;
        max_deviation = max_deviation.max((nonlinear - linear).abs());
        amplitude = amplitude.max(linear.abs());
        x = &phi * x;
    }
    let relative_deviation = if max_deviation == 0.0 {
        0.0
    } else {
        max_deviation / amplitude
    };
    Ok(ConsistencyReport {
        max_deviation,
        amplitude,
        relative_deviation,
        beyond_small_signal,
    })
}
