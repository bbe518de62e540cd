//! Real-coefficient rational functions of `s`, stored as explicit coefficient
//! lists in ascending powers. No pole/zero factorization is kept, so two
//! transfer functions can be compared coefficient by coefficient.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

fn trim(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && p.last() == Some(&0.0) {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
    p
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Quotient of `a / b` when `b` divides `a` to within roundoff.
fn poly_div_exact(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let b = trim(b.to_vec());
    let mut r = trim(a.to_vec());
    if b.len() > r.len() {
        return None;
    }
    let lead = *b.last().unwrap();
    let scale = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut q = vec![0.0; r.len() - b.len() + 1];
    for k in (0..q.len()).rev() {
        let c = r[k + b.len() - 1] / lead;
        q[k] = c;
        for (j, bj) in b.iter().enumerate() {
            r[k + j] -= c * bj;
        }
    }
    let rem = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (rem <= 1e-12 * scale).then_some(q)
}

pub(crate) fn poly_eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Roots of a polynomial given in ascending powers: eigenvalues of its
/// companion matrix, each polished by Newton steps on the polynomial.
pub fn poly_roots(p: &[f64]) -> Vec<Complex64> {
    let p = trim(p.to_vec());
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = p[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -p[i] / lead;
    }
    let dp: Vec<f64> = (1..=n).map(|k| k as f64 * p[k]).collect();
    m.complex_eigenvalues()
        .iter()
        .map(|&z0| {
            let mut z = z0;
            let mut best = poly_eval(&p, z).norm();
            for _ in 0..4 {
                let d = poly_eval(&dp, z);
                if d.norm() == 0.0 {
                    break;
                }
                let next = z - poly_eval(&p, z) / d;
                let r = poly_eval(&p, next).norm();
                if !(r < best) {
                    break;
                }
                z = next;
                best = r;
            }
            z
        })
        .collect()
}

impl RationalTransferFunction {
    /// Builds `num(s) / den(s)` from ascending coefficients. The denominator
    /// is scaled so that its lowest-order nonzero coefficient is one, which
    /// is `den[0] = 1` whenever there is no pole at the origin.
    ///
    /// # Panics
    ///
    /// If the denominator is identically zero.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Self {
        let num = trim(num);
        let den = trim(den);
        let scale = *den
            .iter()
            .find(|c| **c != 0.0)
            .expect("denominator polynomial is identically zero");
        Self {
            num: num.iter().map(|c| c / scale).collect(),
            den: den.iter().map(|c| c / scale).collect(),
        }
    }

    pub fn constant(k: f64) -> Self {
        Self::new(vec![k], vec![1.0])
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|c| *c == 0.0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    /// Value on the imaginary axis, `H(jω)`.
    pub fn at(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    /// `num[0] / den[0]`; infinite when there is a pole at the origin.
    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly_roots(&self.num)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly_roots(&self.den)
    }

    /// Number of finite zeros (numerator degree).
    pub fn zero_count(&self) -> usize {
        self.num.len() - 1
    }

    /// Product of two rational functions; no cancellation is attempted.
    pub fn mul(&self, other: &Self) -> Self {
        Self::new(poly_mul(&self.num, &other.num), poly_mul(&self.den, &other.den))
    }

    /// `self / (1 + loop_gain)`, the closed-loop response of a disturbance
    /// path under negative feedback. When this path's denominator divides the
    /// loop gain's (as when both share the plant's characteristic
    /// polynomial), that factor is divided out, leaving the roots of
    /// `1 + loop_gain` as the poles. Otherwise full degree is kept. Powers of
    /// `s` common to numerator and denominator are removed exactly.
    pub fn feedback(&self, loop_gain: &Self) -> Self {
        let return_difference = poly_add(&loop_gain.den, &loop_gain.num);
        let (num, den) = match poly_div_exact(&loop_gain.den, &self.den) {
            Some(q) => (poly_mul(&self.num, &q), return_difference),
            None => (
                poly_mul(&self.num, &loop_gain.den),
                poly_mul(&self.den, &return_difference),
            ),
        };
        Self::cancel_origin(num, den)
    }

    fn cancel_origin(mut num: Vec<f64>, mut den: Vec<f64>) -> Self {
        while num.len() > 1 && den.len() > 1 && num[0] == 0.0 && den[0] == 0.0 {
            num.remove(0);
            den.remove(0);
        }
        Self::new(num, den)
    }
}

impl fmt::Display for RationalTransferFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let poly = |p: &[f64]| {
            p.iter()
                .enumerate()
                .map(|(k, c)| match k {
                    0 => format!("{c:e}"),
                    1 => format!("{c:e}·s"),
                    _ => format!("{c:e}·s^{k}"),
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        write!(f, "({}) / ({})", poly(&self.num), poly(&self.den))
    }
}

/// One point of a Bode sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPoint {
    /// rad/s
    pub omega: f64,
    pub value: Complex64,
    pub magnitude_db: f64,
    pub phase_deg: f64,
}

impl FrequencyPoint {
    pub fn freq_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

/// `n` log-spaced angular frequencies covering `[f_lo, f_hi]` hertz.
pub fn log_grid_hz(f_lo: f64, f_hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (f_lo.log10(), f_hi.log10());
    (0..n)
        .map(|k| {
            let t = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
            2.0 * PI * 10f64.powf(a + (b - a) * t)
        })
        .collect()
}

/// Evaluates `tf` over a strictly increasing grid. The phase is unwrapped
/// along the sweep so that consecutive points never jump by more than 180°.
pub fn frequency_response(tf: &RationalTransferFunction, omegas: &[f64]) -> Result<Vec<FrequencyPoint>> {
    if omegas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if omegas[0] <= 0.0 || omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid);
    }
    let mut out: Vec<FrequencyPoint> = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let value = tf.at(omega);
        let mut phase = value.arg().to_degrees();
        if let Some(prev) = out.last() {
            phase += 360.0 * ((prev.phase_deg - phase) / 360.0).round();
        }
        out.push(FrequencyPoint {
            omega,
            value,
            magnitude_db: 20.0 * value.norm().log10(),
            phase_deg: phase,
        });
    }
    Ok(out)
}

/// Points per decade used when scanning for sign changes.
const SCAN_DENSITY: f64 = 200.0;

/// Scans `g` over a log grid on `[lo, hi]` and refines the lowest strict sign
/// change by bisection in `log ω` to a relative bracket of `1e-10`.
pub(crate) fn lowest_root_log(lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> Option<f64> {
    if !(lo > 0.0 && hi > lo) {
        return None;
    }
    let decades = (hi / lo).log10();
    let n = ((decades * SCAN_DENSITY).ceil() as usize).max(2);
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let mut w0 = lo;
    let mut g0 = g(w0);
    for k in 1..=n {
        let w1 = if k == n { hi } else { lo * ratio.powi(k as i32) };
        let g1 = g(w1);
        if g0 == 0.0 {
            return Some(w0);
        }
        if (g0 > 0.0 && g1 < 0.0) || (g0 < 0.0 && g1 > 0.0) {
            let (mut a, mut b) = (w0, w1);
            let ga = g0;
            while b / a - 1.0 > 1e-10 {
                let m = (a * b).sqrt();
                let gm = g(m);
                if gm == 0.0 {
                    return Some(m);
                }
                if (gm > 0.0) == (ga > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some((a * b).sqrt());
        }
        w0 = w1;
        g0 = g1;
    }
    None
}

/// Lowest frequency in `range` (rad/s) where `|tf(jω)| = 1`.
///
/// Only strict sign changes of `|tf| − 1` count, so a response that merely
/// touches 0 dB at the edge of the range has no crossover.
pub fn crossover_frequency(tf: &RationalTransferFunction, range: (f64, f64)) -> Result<f64> {
    lowest_root_log(range.0, range.1, |w| tf.at(w).norm() - 1.0).ok_or(Error::NoCrossover)
}
