//! PI regulator synthesis and the closed-loop responses it produces.
//!
//! The regulator is `G_c(s) = K_p·(1 + ω_c/s)`. Its inverted zero `ω_c` sits
//! on the plant's dominant pole `ω_o`, and `K_p = GCF_d / GCF_a` rescales the
//! plant's own 0 dB crossover `GCF_a` to the desired one. With the zero
//! cancelling the dominant pole, the loop gain is close to an integrator
//! crossing 0 dB at `GCF_d`.

use crate::error::{Error, Result};
use crate::rational::{crossover_frequency, lowest_root_log, RationalTransferFunction};

/// Range (rad/s) searched for the plant and loop-gain crossovers.
pub const CROSSOVER_SEARCH: (f64, f64) = (1e-3, 1e11);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PIController {
    /// Proportional gain, per volt of per-stage error.
    pub k_p: f64,
    /// Inverted-zero corner, rad/s.
    pub omega_c: f64,
}

/// How the plant crossover used for the gain was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcfSource {
    /// Lowest 0 dB crossing of the uncompensated plant.
    Crossover,
    /// `ω_o·|G_vd(0)|`, used when the plant never reaches 0 dB.
    FirstOrderAsymptote,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiDesign {
    pub controller: PIController,
    /// rad/s
    pub gcf_actual: f64,
    /// rad/s
    pub gcf_desired: f64,
    pub gcf_source: GcfSource,
}

/// Places the zero at `omega_o` and scales the gain so the compensated loop
/// crosses 0 dB near `gcf_desired`.
pub fn design_pi(gvd: &RationalTransferFunction, omega_o: f64, gcf_desired: f64) -> Result<PiDesign> {
    if !(omega_o > 0.0 && gcf_desired > 0.0) {
        return Err(Error::InvalidSetup(format!(
            "omega_o = {omega_o} and gcf_desired = {gcf_desired} must be positive"
        )));
    }
    let (gcf_actual, gcf_source) = match crossover_frequency(gvd, CROSSOVER_SEARCH) {
        Ok(w) => (w, GcfSource::Crossover),
        Err(Error::NoCrossover) => {
            let dc = gvd.dc_gain().abs();
            if !(dc.is_finite() && dc > 0.0) {
                return Err(Error::NoCrossover);
            }
            log::warn!(
                "plant never reaches 0 dB; using ω_o·|G_vd(0)| = {} rad/s as its crossover",
                omega_o * dc
            );
            (omega_o * dc, GcfSource::FirstOrderAsymptote)
        }
        Err(e) => return Err(e),
    };
    Ok(PiDesign {
        controller: PIController {
            k_p: gcf_desired / gcf_actual,
            omega_c: omega_o,
        },
        gcf_actual,
        gcf_desired,
        gcf_source,
    })
}

/// `K_p·(s + ω_c)/s`.
pub fn pi_transfer_function(pi: &PIController) -> RationalTransferFunction {
    RationalTransferFunction::new(vec![pi.k_p * pi.omega_c, pi.k_p], vec![0.0, 1.0])
}

/// `G_c·G_vd`.
pub fn loop_gain(pi: &PIController, gvd: &RationalTransferFunction) -> RationalTransferFunction {
    pi_transfer_function(pi).mul(gvd)
}

/// `G_vv / (1 + G_lg)`.
pub fn closed_loop_audio(
    gvv: &RationalTransferFunction,
    lg: &RationalTransferFunction,
) -> RationalTransferFunction {
    gvv.feedback(lg)
}

/// `G_vi / (1 + G_lg)`.
pub fn closed_loop_output_impedance(
    gvi: &RationalTransferFunction,
    lg: &RationalTransferFunction,
) -> RationalTransferFunction {
    gvi.feedback(lg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Finite(f64),
    Infinite,
}

impl Margin {
    pub fn value(self) -> f64 {
        match self {
            Margin::Finite(v) => v,
            Margin::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityMargins {
    pub gain_margin_db: Margin,
    pub phase_margin_deg: f64,
    /// 0 dB crossover of the loop gain, rad/s.
    pub gain_crossover: f64,
    /// −180° crossing, rad/s.
    pub phase_crossover: Option<f64>,
}

/// Continuous phase (degrees) sampled on a log grid from `lo` to `hi`.
struct PhaseSweep {
    omegas: Vec<f64>,
    phases: Vec<f64>,
}

impl PhaseSweep {
    fn new(lg: &RationalTransferFunction, lo: f64, hi: f64) -> Self {
        let n = (((hi / lo).log10() * 200.0).ceil() as usize).max(2);
        let ratio = (hi / lo).powf(1.0 / n as f64);
        let mut omegas = Vec::with_capacity(n + 1);
        let mut phases: Vec<f64> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let w = if k == n { hi } else { lo * ratio.powi(k as i32) };
            let raw = lg.at(w).arg().to_degrees();
            let phase = match phases.last() {
                Some(prev) => unwrap_near(raw, *prev),
                None => raw,
            };
            omegas.push(w);
            phases.push(phase);
        }
        Self { omegas, phases }
    }

    /// Continuous phase at an arbitrary `w` inside the sweep.
    fn at(&self, lg: &RationalTransferFunction, w: f64) -> f64 {
        let idx = self.omegas.partition_point(|x| *x <= w).saturating_sub(1);
        unwrap_near(lg.at(w).arg().to_degrees(), self.phases[idx])
    }
}

fn unwrap_near(raw: f64, reference: f64) -> f64 {
    raw + 360.0 * ((reference - raw) / 360.0).round()
}

/// Phase margin at the 0 dB crossover and gain margin at the −180° crossing.
/// A loop whose phase never crosses −180° has an infinite gain margin.
pub fn stability_margins(lg: &RationalTransferFunction) -> Result<StabilityMargins> {
    let (lo, hi) = CROSSOVER_SEARCH;
    let gain_crossover = crossover_frequency(lg, (lo, hi))?;
    let sweep = PhaseSweep::new(lg, lo, hi);
    let phase_margin_deg = 180.0 + sweep.at(lg, gain_crossover);

    let mut phase_crossover = None;
    for k in 1..sweep.omegas.len() {
        let (p0, p1) = (sweep.phases[k - 1] + 180.0, sweep.phases[k] + 180.0);
        if (p0 > 0.0 && p1 < 0.0) || (p0 < 0.0 && p1 > 0.0) || p1 == 0.0 {
            let (a, b) = (sweep.omegas[k - 1], sweep.omegas[k]);
            let reference = sweep.phases[k - 1];
            phase_crossover = lowest_root_log(a, b, |w| {
                unwrap_near(lg.at(w).arg().to_degrees(), reference) + 180.0
            })
            .or(Some(b));
            break;
        }
    }
    let gain_margin_db = match phase_crossover {
        Some(w) => Margin::Finite(-20.0 * lg.at(w).norm().log10()),
        None => Margin::Infinite,
    };
    Ok(StabilityMargins {
        gain_margin_db,
        phase_margin_deg,
        gain_crossover,
        phase_crossover,
    })
}
