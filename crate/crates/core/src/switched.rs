//! Switching-level simulation of the converter.
//!
//! Each stage is a series inductor and coupling capacitor driven by the shared
//! inverter, feeding an ideal diode bridge and its own filter capacitor. The
//! filter capacitors are stacked in series across the load. Because the two ac
//! lines each carry one `L_s`/`C_s` branch, a stage's series path is `2·L_s`
//! in series with `C_s/2`.
//!
//! The inverter applies `±v_dc` during a pulse of width `d1·t_sw/2` centered
//! in each half cycle, alternating polarity. Between pulses all switches are
//! off: while the link carries current its body diodes clamp it to
//! `−sgn(i_ac)·v_dc` (returning energy to the source), and once the current
//! has died out the link floats. Every stage is therefore in one of three
//! intervals: charging, discharging, or idle.
//!
//! The network is linear between events. It is advanced with fixed-step RK4
//! on a grid of `steps_per_cycle` points per period, with pulse edges as extra
//! breakpoints and diode commutations located by bisection to `dt·1e-6`. A
//! dense trapezoidal integrator is available for cross-checking.

use nalgebra::{DMatrix, DVector};

use crate::averaged::OperatingPoint;
use crate::closed_loop::D1_MIN;
use crate::error::{Error, Result};
use crate::params::ConverterParams;
use crate::regulator::PIController;
use crate::trace::{CycleRecord, SimulationTrace};

/// Piecewise-constant function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    initial: f64,
    steps: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Self {
            initial: value,
            steps: Vec::new(),
        }
    }

    /// `initial` until the first step, then each `(t, value)` from `t` on.
    /// Step times must be strictly increasing.
    pub fn new(initial: f64, steps: Vec<(f64, f64)>) -> Result<Self> {
        if steps.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidSetup(
                "schedule steps must be strictly time-ordered".into(),
            ));
        }
        Ok(Self { initial, steps })
    }

    pub fn at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|(ts, _)| *ts <= t)
            .last()
            .map_or(self.initial, |(_, v)| *v)
    }
}

/// Source of the duty command, latched at the start of each half cycle.
#[derive(Debug, Clone, PartialEq)]
pub enum DutyCommand {
    Schedule(Schedule),
    /// PI on the per-stage output error, sampled once per half cycle.
    Regulated {
        controller: PIController,
        v_ref_total: f64,
        /// Starting integrator state (the duty before any error builds up).
        initial_duty: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CcmPolicy {
    /// Stop with `CcmDetected` when a half cycle ends with current flowing.
    #[default]
    Reject,
    /// Count such half cycles and continue.
    Allow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Rk4,
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interval {
    Charging,
    Discharging,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageState {
    pub i_ls: f64,
    pub v_cs: f64,
    pub v_cf: f64,
    /// Bridge polarity: +1 or −1 while conducting, 0 when idle.
    pub conduction: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedState {
    pub t: f64,
    pub stages: Vec<StageState>,
}

impl SwitchedState {
    /// All states zero.
    pub fn cold(params: &ConverterParams) -> Self {
        Self {
            t: 0.0,
            stages: vec![StageState::default(); params.n_stages() as usize],
        }
    }

    /// Filter capacitors at the averaged operating point, coupling
    /// capacitors at the start of their positive-half-cycle swing.
    pub fn from_operating_point(op: &OperatingPoint, params: &ConverterParams) -> Self {
        let c_e = params.c_s() / 2.0;
        let stage = StageState {
            i_ls: 0.0,
            v_cs: -op.i_l * params.t_sw() / (4.0 * c_e),
            v_cf: op.v_out_stage,
            conduction: 0,
        };
        Self {
            t: 0.0,
            stages: vec![stage; params.n_stages() as usize],
        }
    }

    /// Interval of stage `k` for a given link voltage.
    pub fn interval(&self, k: usize, v_ac: f64) -> Interval {
        let st = &self.stages[k];
        if st.conduction == 0 {
            return Interval::Idle;
        }
        let s = st.conduction as f64;
        if s * (v_ac - st.v_cs) - st.v_cf > 0.0 {
            Interval::Charging
        } else {
            Interval::Discharging
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedConfig {
    pub t_end: f64,
    /// Even, at least 100.
    pub steps_per_cycle: usize,
    /// Must divide `steps_per_cycle`.
    pub record_decimation: usize,
    /// Samples and cycle records start at this cycle.
    pub record_from_cycle: usize,
    /// Series resistance per stage path, for conditioning experiments.
    pub r_series: f64,
    pub ccm: CcmPolicy,
    pub integrator: Integrator,
    /// Cold start when `None`.
    pub initial: Option<SwitchedState>,
}

impl Default for SwitchedConfig {
    fn default() -> Self {
        Self {
            t_end: 1e-3,
            steps_per_cycle: 200,
            record_decimation: 1,
            record_from_cycle: 0,
            r_series: 0.0,
            ccm: CcmPolicy::Reject,
            integrator: Integrator::Rk4,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedRun {
    pub trace: SimulationTrace,
    pub final_state: SwitchedState,
    /// Half cycles that ended with current still flowing (only nonzero
    /// under [`CcmPolicy::Allow`]).
    pub ccm_half_cycles: usize,
}

/// Runs the switched model and returns its trace.
pub fn simulate_switched(
    params: &ConverterParams,
    d1: &DutyCommand,
    v_dc: &Schedule,
    load: &Schedule,
    cfg: &SwitchedConfig,
) -> Result<SimulationTrace> {
    run_switched(params, d1, v_dc, load, cfg).map(|r| r.trace)
}

/// Like [`simulate_switched`], also returning the final state.
pub fn run_switched(
    params: &ConverterParams,
    d1: &DutyCommand,
    v_dc: &Schedule,
    load: &Schedule,
    cfg: &SwitchedConfig,
) -> Result<SwitchedRun> {
    let m = cfg.steps_per_cycle;
    if m < 100 || !m.is_multiple_of(2) {
        return Err(Error::InvalidSetup(format!(
            "steps_per_cycle must be even and at least 100, got {m}"
        )));
    }
    if cfg.record_decimation == 0 || !m.is_multiple_of(cfg.record_decimation) {
        return Err(Error::InvalidSetup(format!(
            "record_decimation {} must divide steps_per_cycle {m}",
            cfg.record_decimation
        )));
    }
    if !(cfg.t_end > 0.0 && cfg.t_end.is_finite()) {
        return Err(Error::InvalidSetup(format!(
            "t_end must be positive, got {}",
            cfg.t_end
        )));
    }
    if !(cfg.r_series >= 0.0) {
        return Err(Error::InvalidSetup(format!(
            "r_series must be non-negative, got {}",
            cfg.r_series
        )));
    }
    let initial = cfg.initial.clone().unwrap_or_else(|| SwitchedState::cold(params));
    if initial.stages.len() != params.n_stages() as usize {
        return Err(Error::InvalidSetup(format!(
            "initial state has {} stages, params have {}",
            initial.stages.len(),
            params.n_stages()
        )));
    }
    Simulator::new(params, cfg, &initial).run(d1, v_dc, load)
}

const ACCUMULATORS: usize = 5;
const E_IN: usize = 0;
const E_OUT: usize = 1;
const E_LOSS: usize = 2;
const INT_ABS_I: usize = 3;
const INT_V_CF: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    Driven(f64),
    /// Body-diode clamp at `v`, entered with net current sign `sigma`.
    Clamp {
        v: f64,
        sigma: f64,
    },
    Float,
}

/// Mode key, LU of `I − h/2·J`, `I + h/2·J` and the affine term.
type TrapezoidalStep = (
    Vec<u64>,
    nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    DMatrix<f64>,
    DVector<f64>,
);

struct Simulator {
    n: usize,
    l_e: f64,
    c_e: f64,
    c_f: f64,
    r_s: f64,
    t_sw: f64,
    dt: f64,
    cfg: SwitchedConfig,
    // Per-substep context.
    v_dc: f64,
    r_load: f64,
    link: Link,
    s: Vec<i8>,
    // State: [i, v_cs, v_cf] per stage, then accumulators.
    y: Vec<f64>,
    work: [Vec<f64>; 6],
    trap_cache: Option<TrapezoidalStep>,
}

impl Simulator {
    fn new(params: &ConverterParams, cfg: &SwitchedConfig, init: &SwitchedState) -> Self {
        let n = params.n_stages() as usize;
        let dim = 3 * n + ACCUMULATORS;
        let mut y = vec![0.0; dim];
        let mut s = vec![0; n];
        for (k, st) in init.stages.iter().enumerate() {
            y[3 * k] = st.i_ls;
            y[3 * k + 1] = st.v_cs;
            y[3 * k + 2] = st.v_cf;
            s[k] = if st.conduction != 0 && st.i_ls != 0.0 {
                st.i_ls.signum() as i8
            } else {
                0
            };
            if s[k] == 0 {
                y[3 * k] = 0.0;
            }
        }
        Self {
            n,
            l_e: 2.0 * params.l_s(),
            c_e: params.c_s() / 2.0,
            c_f: params.c_f(),
            r_s: cfg.r_series,
            t_sw: params.t_sw(),
            dt: params.t_sw() / cfg.steps_per_cycle as f64,
            cfg: cfg.clone(),
            v_dc: 0.0,
            r_load: f64::INFINITY,
            link: Link::Float,
            s,
            y,
            work: std::array::from_fn(|_| vec![0.0; dim]),
            trap_cache: None,
        }
    }

    fn circuit_dim(&self) -> usize {
        3 * self.n
    }

    fn v_total(&self, y: &[f64]) -> f64 {
        (0..self.n).map(|k| y[3 * k + 2]).sum()
    }

    fn i_ac(&self, y: &[f64]) -> f64 {
        (0..self.n).map(|k| y[3 * k]).sum()
    }

    fn stored_energy(&self, y: &[f64]) -> f64 {
        (0..self.n)
            .map(|k| {
                0.5 * self.l_e * y[3 * k].powi(2)
                    + 0.5 * self.c_e * y[3 * k + 1].powi(2)
                    + 0.5 * self.c_f * y[3 * k + 2].powi(2)
            })
            .sum()
    }

    /// Link voltage for the current mode and state.
    fn v_ac(&self, y: &[f64]) -> f64 {
        match self.link {
            Link::Driven(v) | Link::Clamp { v, .. } => v,
            Link::Float => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for k in 0..self.n {
                    if self.s[k] != 0 {
                        let s = self.s[k] as f64;
                        sum += y[3 * k + 1] + s * y[3 * k + 2] + self.r_s * y[3 * k];
                        count += 1;
                    }
                }
                if count == 0 {
                    0.0
                } else {
                    sum / count as f64
                }
            }
        }
    }

    fn load_current(&self, y: &[f64]) -> f64 {
        if self.r_load.is_infinite() {
            0.0
        } else {
            self.v_total(y) / self.r_load
        }
    }

    fn deriv(&self, y: &[f64], dy: &mut [f64]) {
        let i_load = self.load_current(y);
        let v_ac = self.v_ac(y);
        let mut i_ac = 0.0;
        let mut loss = 0.0;
        for k in 0..self.n {
            let (i, v_cs, v_cf) = (y[3 * k], y[3 * k + 1], y[3 * k + 2]);
            if self.s[k] != 0 {
                let s = self.s[k] as f64;
                dy[3 * k] = (v_ac - v_cs - s * v_cf - self.r_s * i) / self.l_e;
                dy[3 * k + 1] = i / self.c_e;
                dy[3 * k + 2] = (s * i - i_load) / self.c_f;
                i_ac += i;
                loss += self.r_s * i * i;
            } else {
                dy[3 * k] = 0.0;
                dy[3 * k + 1] = 0.0;
                dy[3 * k + 2] = -i_load / self.c_f;
            }
        }
        let base = self.circuit_dim();
        dy[base + E_IN] = v_ac * i_ac;
        dy[base + E_OUT] = self.v_total(y) * i_load;
        dy[base + E_LOSS] = loss;
        dy[base + INT_ABS_I] = y[0].abs();
        dy[base + INT_V_CF] = y[2];
    }

    /// State after `h` seconds from `y0` under the current mode, into `out`.
    fn advance(&mut self, y0: &[f64], h: f64, out: &mut Vec<f64>) {
        match self.cfg.integrator {
            Integrator::Rk4 => self.advance_rk4(y0, h, out),
            Integrator::Trapezoidal => self.advance_trapezoidal(y0, h, out),
        }
    }

    fn advance_rk4(&mut self, y0: &[f64], h: f64, out: &mut Vec<f64>) {
        let mut w = std::mem::take(&mut self.work);
        let [k1, k2, k3, k4, tmp, _] = &mut w;
        let dim = y0.len();
        self.deriv(y0, k1);
        for j in 0..dim {
            tmp[j] = y0[j] + 0.5 * h * k1[j];
        }
        self.deriv(tmp, k2);
        for j in 0..dim {
            tmp[j] = y0[j] + 0.5 * h * k2[j];
        }
        self.deriv(tmp, k3);
        for j in 0..dim {
            tmp[j] = y0[j] + h * k3[j];
        }
        self.deriv(tmp, k4);
        out.clear();
        out.extend((0..dim).map(|j| y0[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])));
        self.work = w;
    }

    fn mode_key(&self, h: f64) -> Vec<u64> {
        let (tag, v) = match self.link {
            Link::Driven(v) => (0, v),
            Link::Clamp { v, .. } => (1, v),
            Link::Float => (2, 0.0),
        };
        let mut key = vec![tag, v.to_bits(), self.r_load.to_bits(), h.to_bits()];
        key.extend(self.s.iter().map(|s| *s as u64));
        key
    }

    /// Trapezoidal rule on the (affine) circuit equations; accumulators use
    /// the trapezoid of their endpoint integrands.
    fn advance_trapezoidal(&mut self, y0: &[f64], h: f64, out: &mut Vec<f64>) {
        let nc = self.circuit_dim();
        let dim = y0.len();
        let key = self.mode_key(h);
        if self.trap_cache.as_ref().is_none_or(|(k, ..)| *k != key) {
            let mut dy = vec![0.0; dim];
            let mut probe = vec![0.0; dim];
            self.deriv(&probe, &mut dy);
            let u = DVector::from_iterator(nc, dy[..nc].iter().copied());
            let mut a = DMatrix::zeros(nc, nc);
            for j in 0..nc {
                probe[j] = 1.0;
                self.deriv(&probe, &mut dy);
                for i in 0..nc {
                    a[(i, j)] = dy[i] - u[i];
                }
                probe[j] = 0.0;
            }
            let eye = DMatrix::<f64>::identity(nc, nc);
            let lhs = &eye - &a * (0.5 * h);
            let rhs_mat = &eye + &a * (0.5 * h);
            self.trap_cache = Some((key, lhs.lu(), rhs_mat, u * h));
        }
        let (_, lu, rhs_mat, hu) = self.trap_cache.as_ref().unwrap();
        let x0 = DVector::from_iterator(nc, y0[..nc].iter().copied());
        let x1 = lu
            .solve(&(rhs_mat * x0 + hu))
            .expect("trapezoidal matrix is nonsingular");
        let mut d0 = vec![0.0; dim];
        let mut d1 = vec![0.0; dim];
        self.deriv(y0, &mut d0);
        out.clear();
        out.extend(x1.iter().copied());
        out.extend(y0[nc..].iter().copied());
        self.deriv(out, &mut d1);
        for j in nc..dim {
            out[j] = y0[j] + 0.5 * h * (d0[j] + d1[j]);
        }
    }

    fn set_link(&mut self, pulse: Option<f64>) {
        self.link = match pulse {
            Some(v) => Link::Driven(v),
            None => {
                let i_ac = self.i_ac(&self.y);
                let total: f64 = (0..self.n).map(|k| self.y[3 * k].abs()).sum();
                if total > 0.0 && i_ac.abs() > 1e-4 * total {
                    let sigma = i_ac.signum();
                    Link::Clamp {
                        v: -sigma * self.v_dc,
                        sigma,
                    }
                } else {
                    Link::Float
                }
            }
        };
    }

    /// Idle stages forward-biased at the current instant start conducting.
    fn start_conduction(&mut self) {
        let v = match self.link {
            Link::Driven(v) | Link::Clamp { v, .. } => v,
            Link::Float => return,
        };
        for k in 0..self.n {
            if self.s[k] == 0 {
                let drive = v - self.y[3 * k + 1];
                let margin = drive.abs() - self.y[3 * k + 2];
                if margin > 0.0 {
                    self.s[k] = drive.signum() as i8;
                } else if margin == 0.0 && drive != 0.0 {
                    log::debug!("stage {k}: bridge exactly at its conduction threshold");
                }
            }
        }
    }

    fn triggered(&self, y: &[f64]) -> bool {
        let v = match self.link {
            Link::Driven(v) | Link::Clamp { v, .. } => Some(v),
            Link::Float => None,
        };
        for k in 0..self.n {
            if self.s[k] != 0 {
                if self.s[k] as f64 * y[3 * k] <= 0.0 {
                    return true;
                }
            } else if let Some(v) = v {
                if (v - y[3 * k + 1]).abs() - y[3 * k + 2] > 0.0 {
                    return true;
                }
            }
        }
        if let Link::Clamp { sigma, .. } = self.link {
            if sigma * self.i_ac(y) <= 0.0 {
                return true;
            }
        }
        false
    }

    /// Stages whose current has reached zero go idle.
    fn end_conduction(&mut self) {
        for k in 0..self.n {
            if self.s[k] != 0 && self.s[k] as f64 * self.y[3 * k] <= 0.0 {
                self.s[k] = 0;
                self.y[3 * k] = 0.0;
            }
        }
    }

    /// Integrates from `t` to `t_stop` with the pulse state fixed.
    fn integrate_span(&mut self, mut t: f64, t_stop: f64, pulse: Option<f64>) -> Result<()> {
        let tol = self.dt * 1e-6;
        let mut y1 = Vec::with_capacity(self.y.len());
        let mut events = 0usize;
        while t < t_stop {
            self.set_link(pulse);
            self.start_conduction();
            let h = t_stop - t;
            let y0 = self.y.clone();
            self.advance(&y0, h, &mut y1);
            if !self.triggered(&y1) {
                std::mem::swap(&mut self.y, &mut y1);
                return Ok(());
            }
            events += 1;
            if events > 10_000 {
                return Err(Error::NoConvergence(format!(
                    "diode commutations chatter near t = {t}"
                )));
            }
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                self.advance(&y0, mid, &mut y1);
                if self.triggered(&y1) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            self.advance(&y0, hi, &mut y1);
            std::mem::swap(&mut self.y, &mut y1);
            self.end_conduction();
            t = if hi == h { t_stop } else { t + hi };
        }
        Ok(())
    }

    fn snapshot(&self, t: f64) -> SwitchedState {
        SwitchedState {
            t,
            stages: (0..self.n)
                .map(|k| StageState {
                    i_ls: self.y[3 * k],
                    v_cs: self.y[3 * k + 1],
                    v_cf: self.y[3 * k + 2],
                    conduction: self.s[k],
                })
                .collect(),
        }
    }

    fn run(mut self, duty: &DutyCommand, v_dc: &Schedule, load: &Schedule) -> Result<SwitchedRun> {
        let m = self.cfg.steps_per_cycle;
        let half = m / 2;
        let dec = self.cfg.record_decimation;
        let total_steps = (self.cfg.t_end / self.dt).round() as usize;
        let record_from = self.cfg.record_from_cycle * m;
        let nc = self.circuit_dim();
        let n_f = self.n as f64;

        let with_ref = matches!(duty, DutyCommand::Regulated { .. });
        let mut trace = SimulationTrace::new(self.dt * dec as f64, self.t_sw, with_ref);
        trace.first_cycle = self.cfg.record_from_cycle;
        let mut ccm_half_cycles = 0usize;
        let mut integrator_state = match duty {
            DutyCommand::Regulated { initial_duty, .. } => *initial_duty,
            DutyCommand::Schedule(_) => 0.0,
        };
        let mut d1 = 0.0;
        let mut edges = (0.0, 0.0);
        let mut polarity = 1.0;
        let mut v_ref_total = f64::NAN;
        let mut cycle_start_stored = 0.0;
        let mut cycle_start_vcs = 0.0;

        for step in 0..=total_steps {
            let t = step as f64 * self.dt;
            if step % m == 0 {
                if step >= record_from + m {
                    let acc = &self.y[nc..];
                    trace.cycles.push(CycleRecord {
                        e_in: acc[E_IN],
                        e_out: acc[E_OUT],
                        e_loss: acc[E_LOSS],
                        stored_start: cycle_start_stored,
                        stored_end: self.stored_energy(&self.y),
                        v_cs_start: cycle_start_vcs,
                        v_cs_end: self.y[1],
                        mean_abs_i_ls: acc[INT_ABS_I] / self.t_sw,
                        mean_v_out_stage: acc[INT_V_CF] / self.t_sw,
                    });
                }
                for a in &mut self.y[nc..] {
                    *a = 0.0;
                }
                cycle_start_stored = self.stored_energy(&self.y);
                cycle_start_vcs = self.y[1];
            }
            if step % half == 0 {
                let half_index = step / half;
                if step > 0 && self.s.iter().any(|s| *s != 0) {
                    let cycle = (half_index - 1) / 2;
                    match self.cfg.ccm {
                        CcmPolicy::Reject => return Err(Error::CcmDetected { cycle }),
                        CcmPolicy::Allow => ccm_half_cycles += 1,
                    }
                }
                self.v_dc = v_dc.at(t);
                if !(self.v_dc > 0.0 && self.v_dc.is_finite()) {
                    return Err(Error::InvalidSource(self.v_dc));
                }
                d1 = match duty {
                    DutyCommand::Schedule(s) => s.at(t),
                    DutyCommand::Regulated {
                        controller,
                        v_ref_total: vr,
                        ..
                    } => {
                        v_ref_total = *vr;
                        let e = vr / n_f - self.y[2];
                        let u = controller.k_p * e + integrator_state;
                        if (D1_MIN..=1.0).contains(&u) {
                            integrator_state += controller.k_p * controller.omega_c * e * self.t_sw / 2.0;
                        }
                        u.clamp(D1_MIN, 1.0)
                    }
                };
                if !(d1 > 0.0 && d1 <= 1.0) {
                    return Err(Error::InvalidDuty(d1));
                }
                polarity = if half_index.is_multiple_of(2) { 1.0 } else { -1.0 };
                edges = (t + (1.0 - d1) * self.t_sw / 4.0, t + (1.0 + d1) * self.t_sw / 4.0);
            }
            self.r_load = load.at(t);
            if !(self.r_load > 0.0) {
                return Err(Error::NegativeLoad(self.r_load));
            }

            let pulse_at = |tt: f64| (edges.0 <= tt && tt < edges.1).then_some(polarity);
            if step >= record_from && (step - record_from).is_multiple_of(dec) {
                self.set_link(pulse_at(t).map(|p| p * self.v_dc));
                let v_tot = self.v_total(&self.y);
                trace.push(
                    t,
                    self.v_ac(&self.y),
                    self.i_ac(&self.y),
                    self.y[0],
                    self.y[2],
                    v_tot,
                    d1,
                    with_ref.then_some(v_ref_total),
                );
            }
            if step == total_steps {
                break;
            }

            let t_next = (step + 1) as f64 * self.dt;
            let mut t_cur = t;
            let mut cuts = [edges.0, edges.1, t_next];
            cuts.sort_by(f64::total_cmp);
            for cut in cuts {
                if cut > t_cur && cut <= t_next {
                    let p = pulse_at(t_cur).map(|p| p * self.v_dc);
                    self.integrate_span(t_cur, cut, p)?;
                    t_cur = cut;
                }
            }
            if let Some(bad) = self.y[..nc].iter().find(|x| !x.is_finite()) {
                let _ = bad;
                return Err(Error::NonFiniteState(t_next));
            }
        }
        let t_final = total_steps as f64 * self.dt;
        Ok(SwitchedRun {
            trace,
            final_state: self.snapshot(t_final),
            ccm_half_cycles,
        })
    }
}
