//! Uniformly sampled simulation output and the per-cycle post-processing
//! applied to it.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::fmt::num;

/// Columns of a [`SimulationTrace`]. `ILsAbs` is derived from `ILs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Time,
    VAc,
    IAc,
    ILs,
    ILsAbs,
    VOutStage,
    VOutTotal,
    D1,
    VRef,
}

/// Exact per-cycle bookkeeping kept by the switched simulator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleRecord {
    /// Energy delivered by the inverter, ∫v_ac·i_ac dt.
    pub e_in: f64,
    /// Energy dissipated in the load, ∫v_out_total²/r_l dt.
    pub e_out: f64,
    /// Energy dissipated in the series resistance, if any.
    pub e_loss: f64,
    /// Energy in all reactive elements at the cycle start.
    pub stored_start: f64,
    /// Energy in all reactive elements at the cycle end.
    pub stored_end: f64,
    /// Coupling-capacitor voltage of the recorded stage at the cycle start.
    pub v_cs_start: f64,
    pub v_cs_end: f64,
    /// Exact cycle mean of |i_ls| for the recorded stage.
    pub mean_abs_i_ls: f64,
    /// Exact cycle mean of the recorded stage's output voltage.
    pub mean_v_out_stage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAudit {
    pub e_in: f64,
    pub e_out: f64,
    pub delta_stored: f64,
}

impl EnergyAudit {
    /// `e_in − e_out − delta_stored`.
    pub fn imbalance(&self) -> f64 {
        self.e_in - self.e_out - self.delta_stored
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub dt: f64,
    pub t_sw: f64,
    pub time: Vec<f64>,
    pub v_ac: Vec<f64>,
    pub i_ac: Vec<f64>,
    pub i_ls: Vec<f64>,
    pub v_out_stage: Vec<f64>,
    pub v_out_total: Vec<f64>,
    pub d1: Vec<f64>,
    pub v_ref: Option<Vec<f64>>,
    /// Cycle index of `cycles[0]`.
    pub first_cycle: usize,
    pub cycles: Vec<CycleRecord>,
}

impl SimulationTrace {
    pub fn new(dt: f64, t_sw: f64, with_reference: bool) -> Self {
        Self {
            dt,
            t_sw,
            v_ref: with_reference.then(Vec::new),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push(
        &mut self,
        time: f64,
        v_ac: f64,
        i_ac: f64,
        i_ls: f64,
        v_out_stage: f64,
        v_out_total: f64,
        d1: f64,
        v_ref: Option<f64>,
    ) {
        self.time.push(time);
        self.v_ac.push(v_ac);
        self.i_ac.push(i_ac);
        self.i_ls.push(i_ls);
        self.v_out_stage.push(v_out_stage);
        self.v_out_total.push(v_out_total);
        self.d1.push(d1);
        if let (Some(col), Some(v)) = (self.v_ref.as_mut(), v_ref) {
            col.push(v);
        }
    }

    /// Sample `k` of `column`, or `None` past the end or for an absent column.
    pub fn value(&self, column: Column, k: usize) -> Option<f64> {
        match column {
            Column::Time => self.time.get(k).copied(),
            Column::VAc => self.v_ac.get(k).copied(),
            Column::IAc => self.i_ac.get(k).copied(),
            Column::ILs => self.i_ls.get(k).copied(),
            Column::ILsAbs => self.i_ls.get(k).map(|x| x.abs()),
            Column::VOutStage => self.v_out_stage.get(k).copied(),
            Column::VOutTotal => self.v_out_total.get(k).copied(),
            Column::D1 => self.d1.get(k).copied(),
            Column::VRef => self.v_ref.as_ref().and_then(|c| c.get(k).copied()),
        }
    }

    /// Number of whole switching periods covered by the samples.
    pub fn cycles_spanned(&self) -> usize {
        match (self.time.first(), self.time.last()) {
            (Some(a), Some(b)) => ((b + self.dt - a) / self.t_sw + 1e-9).floor() as usize,
            _ => 0,
        }
    }

    fn cycle_range(&self, cycle: usize) -> Result<std::ops::Range<usize>> {
        let t0 = *self.time.first().ok_or(Error::OutOfRange(cycle))?;
        let index = |t: f64| ((t - t0) / self.dt - 1e-9).ceil();
        let start = index(cycle as f64 * self.t_sw);
        let end = index((cycle + 1) as f64 * self.t_sw);
        if start < 0.0 || end > self.len() as f64 || end <= start {
            return Err(Error::OutOfRange(cycle));
        }
        Ok(start as usize..end as usize)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = String::from("time_s,v_ac_v,i_ac_a,i_ls_a,v_out_stage_v,v_out_total_v,d1");
        if self.v_ref.is_some() {
            header.push_str(",v_ref_v");
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            write!(
                w,
                "{},{},{},{},{},{},{}",
                num(self.time[k]),
                num(self.v_ac[k]),
                num(self.i_ac[k]),
                num(self.i_ls[k]),
                num(self.v_out_stage[k]),
                num(self.v_out_total[k]),
                num(self.d1[k]),
            )?;
            if let Some(r) = &self.v_ref {
                write!(w, ",{}", num(r[k]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Arithmetic mean of `column` over the samples in `[k·t_sw, (k+1)·t_sw)`.
pub fn cycle_average(trace: &SimulationTrace, column: Column, cycle_index: usize) -> Result<f64> {
    let range = trace.cycle_range(cycle_index)?;
    let n = range.len() as f64;
    let mut sum = 0.0;
    for k in range {
        sum += trace.value(column, k).ok_or(Error::OutOfRange(cycle_index))?;
    }
    Ok(sum / n)
}

/// Default relative tolerance of [`detect_steady_state`].
pub const STEADY_STATE_TOL: f64 = 1e-4;

const SETTLING_COLUMNS: [Column; 3] = [Column::ILsAbs, Column::VOutStage, Column::VOutTotal];

/// First cycle whose averages of |i_ls|, v_out_stage and v_out_total all
/// differ from the previous cycle's by less than `tol_rel`.
pub fn detect_steady_state(trace: &SimulationTrace, tol_rel: f64) -> Result<usize> {
    let first = trace
        .time
        .first()
        .map(|t| (t / trace.t_sw - 1e-9).ceil() as usize)
        .unwrap_or(0);
    let count = trace.cycles_spanned();
    if count < 10 {
        return Err(Error::InvalidSetup(format!(
            "steady-state detection needs at least 10 cycles, trace spans {count}"
        )));
    }
    let averages = |k: usize| -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (o, c) in out.iter_mut().zip(SETTLING_COLUMNS) {
            *o = cycle_average(trace, c, k)?;
        }
        Ok(out)
    };
    let mut prev = averages(first)?;
    for k in first + 1..first + count {
        let Ok(cur) = averages(k) else { break };
        let settled = prev.iter().zip(&cur).all(|(a, b)| {
            let scale = a.abs().max(b.abs());
            (a - b).abs() <= tol_rel * scale
        });
        if settled {
            return Ok(k);
        }
        prev = cur;
    }
    Err(Error::NotSettled)
}

/// Energy balance terms for one recorded switching cycle.
pub fn energy_audit(trace: &SimulationTrace, cycle_index: usize) -> Result<EnergyAudit> {
    let rec = cycle_index
        .checked_sub(trace.first_cycle)
        .and_then(|k| trace.cycles.get(k))
        .ok_or(Error::OutOfRange(cycle_index))?;
    Ok(EnergyAudit {
        e_in: rec.e_in,
        e_out: rec.e_out + rec.e_loss,
        delta_stored: rec.stored_end - rec.stored_start,
    })
}
