//! Orbit iteration and Lyapunov estimation.
//!
//! The base map `x -> bx (mod 1)` is iterated on exact base-`b` digit
//! streams: `x_j` is the j-th shift of the stream, so there is no accumulated
//! base-map rounding. Explicit starting points are held as exact rationals
//! (decimal strings, `p/q`, or a high-precision dyadic realization of
//! `1/(k pi)`); Lebesgue-random starts are i.i.d. uniform digit streams from
//! a seeded generator. The fibre coordinate is iterated in double precision.

use crate::circle::{wrap, ArcUnion, CirclePoint};
use crate::maps::{sl2_step, Matrix2, SchrodingerParams, SkewProduct};
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid base point: {0}")]
    InvalidBasePoint(String),
}

/// `pi * 2^bits`, truncated. Machin's formula evaluated in integer
/// fixed-point; the guard bits absorb the per-term truncation error.
pub(crate) fn pi_fixed(bits: u64) -> BigUint {
    let guard = 32u64;
    let work = bits + guard;
    let p = (atan_inv_fixed(5, work) << 4u32) - (atan_inv_fixed(239, work) << 2u32);
    p >> guard
}

/// `atan(1/x) * 2^bits`, truncated.
fn atan_inv_fixed(x: u64, bits: u64) -> BigUint {
    let mut power = (BigUint::one() << bits) / x; // 1/x^(2k+1), scaled
    let x2 = BigUint::from(x * x);
    let mut sum = power.clone();
    let mut k = 1u64;
    let mut negative = true;
    loop {
        power /= &x2;
        if power.is_zero() {
            break;
        }
        let term = &power / (2 * k + 1);
        if negative {
            sum -= term;
        } else {
            sum += term;
        }
        negative = !negative;
        k += 1;
    }
    sum
}

enum Source {
    /// Exact rational in [0,1): digits by long division of `num/den`.
    Exact { num: BigUint, den: BigUint },
    /// I.i.d. uniform digits from a seeded generator.
    Random(ChaCha8Rng),
}

/// A base-`b` orbit of the expanding map, realized as a digit stream.
pub struct BaseTrajectory {
    b: u32,
    digits: Vec<u32>,
    source: Source,
    lookahead: usize,
    descriptor: String,
    precision_bits: Option<u64>,
}

impl BaseTrajectory {
    fn lookahead_for(b: u32) -> usize {
        (64.0 / (b as f64).log2()).ceil() as usize + 2
    }

    fn from_exact(num: BigUint, den: BigUint, b: u32, descriptor: String, bits: Option<u64>) -> Self {
        BaseTrajectory {
            b,
            digits: Vec::new(),
            source: Source::Exact { num, den },
            lookahead: Self::lookahead_for(b),
            descriptor,
            precision_bits: bits,
        }
    }

    /// Exact rational start `p/q` in `[0,1)`.
    pub fn from_rational(p: u64, q: u64, b: u32) -> Result<Self, DynamicsError> {
        if q == 0 || p >= q {
            return Err(DynamicsError::InvalidBasePoint(format!(
                "rational {p}/{q} not in [0,1)"
            )));
        }
        Ok(Self::from_exact(
            BigUint::from(p),
            BigUint::from(q),
            b,
            format!("{p}/{q}"),
            None,
        ))
    }

    /// Exact decimal start, e.g. `"0.0625"`.
    pub fn from_decimal(s: &str, b: u32) -> Result<Self, DynamicsError> {
        let stripped = s
            .strip_prefix("0.")
            .or_else(|| s.strip_prefix("."))
            .ok_or_else(|| DynamicsError::InvalidBasePoint(format!("expected 0.<digits>, got {s:?}")))?;
        if stripped.is_empty() || !stripped.bytes().all(|c| c.is_ascii_digit()) {
            return Err(DynamicsError::InvalidBasePoint(format!(
                "expected 0.<digits>, got {s:?}"
            )));
        }
        let num: BigUint = stripped.parse().expect("digit string");
        let den = BigUint::from(10u32).pow(stripped.len() as u32);
        Ok(Self::from_exact(num, den, b, s.to_string(), None))
    }

    /// Lebesgue-random start: an i.i.d. uniform digit stream.
    pub fn random(b: u32, seed: u64) -> Self {
        BaseTrajectory {
            b,
            digits: Vec::new(),
            source: Source::Random(ChaCha8Rng::seed_from_u64(seed)),
            lookahead: Self::lookahead_for(b),
            descriptor: format!("random(seed={seed})"),
            precision_bits: None,
        }
    }

    /// The irrational constant `1/(mult * pi)`, realized as a dyadic rational
    /// with enough working precision for `n_hint` exact digits
    /// (`>= n_hint log2(b) + 64` bits, floor `min_bits`).
    pub fn inv_pi_multiple(mult: u32, b: u32, n_hint: usize, min_bits: u64) -> Self {
        assert!(mult > 0);
        let lookahead = Self::lookahead_for(b);
        let needed = ((n_hint + lookahead + 8) as f64 * (b as f64).log2()).ceil() as u64 + 64;
        let bits = min_bits.max(needed);
        let pi = pi_fixed(bits);
        let num = (BigUint::one() << (2 * bits)) / (pi * mult);
        Self::from_exact(
            num,
            BigUint::one() << bits,
            b,
            format!("1/({mult}*pi)"),
            Some(bits),
        )
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn precision_bits(&self) -> Option<u64> {
        self.precision_bits
    }

    fn ensure_digits(&mut self, n: usize) {
        while self.digits.len() < n {
            match &mut self.source {
                Source::Exact { num, den } => {
                    *num *= self.b;
                    let (d, r) = num.div_rem(den);
                    self.digits.push(d.to_u32().expect("digit < b"));
                    *num = r;
                }
                Source::Random(rng) => {
                    self.digits.push(rng.gen_range(0..self.b));
                }
            }
        }
    }

    /// The j-th digit (0-indexed) of the base-`b` expansion, in `0..b`.
    pub fn digit(&mut self, j: usize) -> u32 {
        self.ensure_digits(j + 1);
        self.digits[j]
    }

    /// First `n` digits; the corresponding depth-`n` cylinder word uses
    /// branch indices `digit + 1`.
    pub fn digit_prefix(&mut self, n: usize) -> Vec<u32> {
        self.ensure_digits(n);
        self.digits[..n].to_vec()
    }

    /// `x_j`, read off the digit stream with a 64-bit lookahead window.
    pub fn point(&mut self, j: usize) -> CirclePoint {
        self.ensure_digits(j + self.lookahead);
        let mut x = 0.0f64;
        for i in (j..j + self.lookahead).rev() {
            x = (x + self.digits[i] as f64) / self.b as f64;
        }
        wrap(x)
    }
}

/// An orbit with its fibre-derivative logs.
#[derive(Clone, Debug)]
pub struct OrbitRecord {
    /// `(x_j, y_j)` for `j = 0..=n` (shorter if truncated).
    pub points: Vec<(CirclePoint, CirclePoint)>,
    /// `log |df/dy (x_j, y_j)|` for `j = 0..n`.
    pub log_dy: Vec<f64>,
    /// `y_j in G` flags, when a region was supplied.
    pub in_g: Option<Vec<bool>>,
    /// Step at which a derivative singularity truncated the orbit.
    pub truncated_at: Option<usize>,
}

/// Iterate the skew product for `n` steps over the exact base stream.
pub fn iterate_orbit(
    m: &SkewProduct,
    base: &mut BaseTrajectory,
    y0: CirclePoint,
    n: usize,
    g: Option<&ArcUnion>,
) -> OrbitRecord {
    assert!(n >= 1);
    assert_eq!(base.b(), m.b(), "base stream and skew product disagree on b");
    let fibre = m.fibre();
    let mut points = Vec::with_capacity(n + 1);
    let mut log_dy = Vec::with_capacity(n);
    let mut in_g = g.map(|_| Vec::with_capacity(n));
    let mut truncated_at = None;
    let mut y = y0;
    for j in 0..n {
        let x = base.point(j);
        points.push((x, y));
        if fibre.is_singular(y) {
            truncated_at = Some(j);
            break;
        }
        log_dy.push(fibre.dy(x, y).abs().ln());
        if let (Some(flags), Some(region)) = (in_g.as_mut(), g) {
            flags.push(region.contains(y));
        }
        y = fibre.eval(x, y);
    }
    if truncated_at.is_none() {
        points.push((base.point(n), y));
    }
    OrbitRecord {
        points,
        log_dy,
        in_g,
        truncated_at,
    }
}

/// Finite-time fibered Lyapunov estimate with its running-average trace.
#[derive(Clone, Debug)]
pub struct LyapunovEstimate {
    /// Achieved number of summands (equals the requested `n` unless truncated).
    pub n: usize,
    /// `(1/n) sum log |df/dy|`.
    pub value: f64,
    /// Decimated `(j, running average)` trace.
    pub partials: Vec<(usize, f64)>,
    pub truncated: bool,
}

pub fn fibered_lyapunov(
    m: &SkewProduct,
    base: &mut BaseTrajectory,
    y0: CirclePoint,
    n: usize,
) -> LyapunovEstimate {
    let orbit = iterate_orbit(m, base, y0, n, None);
    lyapunov_from_logs(&orbit.log_dy, orbit.truncated_at.is_some())
}

pub(crate) fn lyapunov_from_logs(log_dy: &[f64], truncated: bool) -> LyapunovEstimate {
    let n = log_dy.len();
    let stride = (n / 200).max(1);
    let mut partials = Vec::with_capacity(n / stride + 1);
    let mut acc = 0.0;
    for (j, v) in log_dy.iter().enumerate() {
        acc += v;
        if (j + 1) % stride == 0 || j + 1 == n {
            partials.push((j + 1, acc / (j + 1) as f64));
        }
    }
    LyapunovEstimate {
        n,
        value: if n == 0 { f64::NAN } else { acc / n as f64 },
        partials,
        truncated,
    }
}

/// `(1/n) log ||A^n(x)||` for the Schrödinger cocycle, spectral norm, with
/// the running product rescaled to unit norm every step so no overflow
/// occurs.
pub fn max_lyapunov_sl2(p: &SchrodingerParams, base: &mut BaseTrajectory, n: usize) -> f64 {
    assert!(n >= 1);
    assert_eq!(base.b(), p.b, "base stream and cocycle disagree on b");
    let mut prod = Matrix2::identity();
    let mut acc = 0.0f64;
    for j in 0..n {
        let x = base.point(j);
        prod = sl2_step(p, x).mul(&prod);
        let s = prod.spectral_norm();
        prod = prod.scale(1.0 / s);
        acc += s.ln();
    }
    acc / n as f64
}

/// Smallest-enclosing-arc length of a point set: `1 - (largest gap between
/// cyclically sorted points)`. Zero for fewer than two points; equals the
/// metric distance for two points.
pub fn circular_diameter(points: &[CirclePoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut vals: Vec<f64> = points.iter().map(|p| p.value()).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut max_gap = vals[0] + 1.0 - vals[vals.len() - 1];
    for w in vals.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    1.0 - max_gap
}

/// Track the circular diameter of a family of fibre points driven by one
/// base trajectory. Returns `n + 1` values including the initial diameter.
pub fn sync_diameter(
    m: &SkewProduct,
    base: &mut BaseTrajectory,
    ys: &[CirclePoint],
    n: usize,
) -> Vec<f64> {
    assert!(!ys.is_empty());
    assert_eq!(base.b(), m.b());
    let fibre = m.fibre();
    let mut current = ys.to_vec();
    let mut out = Vec::with_capacity(n + 1);
    out.push(circular_diameter(&current));
    for j in 0..n {
        let x = base.point(j);
        for y in current.iter_mut() {
            *y = fibre.eval(x, *y);
        }
        out.push(circular_diameter(&current));
    }
    out
}
