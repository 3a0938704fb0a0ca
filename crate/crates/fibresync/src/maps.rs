//! Fibre-map descriptors and the built-in map families.
//!
//! A [`FibreMap`] bundles `f(x,y)` with both partial derivatives, a certified
//! `C^1` bound and the Lipschitz data the certification grids need. Built-in
//! families:
//!
//! * [`example1_map`] — `F(x,y) = (7x, g(x) + h(y))` with
//!   `g(x) = (1 - cos(3 pi x))/2` and the piecewise `C^1` circle
//!   diffeomorphism [`example1_h`];
//! * [`additive_map`] — `(x,y) -> (bx, g(x) + h(y))` composed from a fixed
//!   catalog of `g` and `h` pieces;
//! * [`schrodinger_projective`] — the projective action of the Schrödinger
//!   cocycle on `T x S`, `S = [-pi/2, pi/2]/~` rescaled affinely onto `[0,1)`.

use crate::circle::{wrap, CirclePoint};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

type EvalFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type DerivFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type SupFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// An evaluatable fibre map `f_x(y)` with partial derivatives and certified
/// derivative bounds.
///
/// `r_bound` realizes the `C^1` norm as `max(1, sup|df/dx|, sup|df/dy|)`;
/// `dy_sup_ball` gives the family-exact supremum of `|df/dy|` over a metric
/// ball on the fibre (uniform in `x`), which is what the Lipschitz-grid
/// certification uses in place of a generic modulus of variation.
pub struct FibreMap {
    eval: EvalFn,
    dx: DerivFn,
    dy: DerivFn,
    r_bound: f64,
    dx_sup: f64,
    dy_sup_ball: SupFn,
    smooth_except: Vec<CirclePoint>,
}

impl FibreMap {
    pub fn eval(&self, x: CirclePoint, y: CirclePoint) -> CirclePoint {
        wrap((self.eval)(x.value(), y.value()))
    }

    /// `df/dx` at a smooth point.
    pub fn dx(&self, x: CirclePoint, y: CirclePoint) -> f64 {
        (self.dx)(x.value(), y.value())
    }

    /// `df/dy` at a smooth point.
    pub fn dy(&self, x: CirclePoint, y: CirclePoint) -> f64 {
        (self.dy)(x.value(), y.value())
    }

    /// Certified bound for `max(1, sup|df/dx|, sup|df/dy|)`.
    pub fn r_bound(&self) -> f64 {
        self.r_bound
    }

    /// Uniform bound for `|df/dx|` (the x-Lipschitz constant of every
    /// `x -> f_x(y)`).
    pub fn dx_sup(&self) -> f64 {
        self.dx_sup
    }

    /// `sup_x sup_{y' in B_r(y)} |df/dy(x, y')|`.
    pub fn dy_sup_ball(&self, y: CirclePoint, r: f64) -> f64 {
        (self.dy_sup_ball)(y.value(), r)
    }

    pub fn dy_sup_global(&self) -> f64 {
        (self.dy_sup_ball)(0.0, 0.5)
    }

    /// Fibre points where `C^1` regularity may fail; derivative-based
    /// estimates exclude these.
    pub fn smooth_except(&self) -> &[CirclePoint] {
        &self.smooth_except
    }

    pub fn is_singular(&self, y: CirclePoint) -> bool {
        self.smooth_except.iter().any(|p| p.dist(y) < 1e-12)
    }
}

/// `F(x,y) = (bx, f(x,y))` with integer `b >= 2`.
pub struct SkewProduct {
    b: u32,
    fibre: FibreMap,
}

impl SkewProduct {
    pub fn new(b: u32, fibre: FibreMap) -> Result<Self, MapError> {
        if b < 2 {
            return Err(MapError::InvalidParameter(format!("b must be >= 2, got {b}")));
        }
        Ok(SkewProduct { b, fibre })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn fibre(&self) -> &FibreMap {
        &self.fibre
    }
}

/// One application of the skew product: `(wrap(b x), f_x(y))`.
pub fn eval_f(m: &SkewProduct, x: CirclePoint, y: CirclePoint) -> (CirclePoint, CirclePoint) {
    (
        wrap(m.b as f64 * x.value()),
        m.fibre.eval(x, y),
    )
}

// ---------------------------------------------------------------------------
// Example 1: F_eps(x,y) = (7x, g(x) + h_eps(y))
// ---------------------------------------------------------------------------

/// Parameters of the piecewise fibre diffeomorphism `h`.
///
/// `h` is monotone of degree 1 with `h(0) = 0`: slope `c0` on the long arc
/// `(0.5 + 2e, 0.5 - 2e)` through 0, slope `c1` on `(0.5 - e, 0.5 + e)`, and
/// quadratic ramps (linear slope interpolation) on the two transition arcs.
/// The winding-number normalization `c0 (1 - 3e) + 3e c1 = 1` forces the
/// inner slope `c1`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Example1Params {
    pub eps_tilde: f64,
    pub c0: f64,
    #[serde(skip)]
    c1: f64,
}

impl Example1Params {
    pub fn new(eps_tilde: f64, c0: f64) -> Result<Self, MapError> {
        if !(eps_tilde > 0.0 && eps_tilde < 0.125) {
            return Err(MapError::InvalidParameter(format!(
                "eps_tilde out of (0, 1/8): {eps_tilde}"
            )));
        }
        if !(c0 > 0.0 && c0 <= 0.18) {
            return Err(MapError::InvalidParameter(format!(
                "c0 out of (0, 0.18]: {c0}"
            )));
        }
        let c1 = (1.0 - c0 * (1.0 - 3.0 * eps_tilde)) / (3.0 * eps_tilde);
        if c1 <= 1.0 {
            return Err(MapError::InvalidParameter(format!(
                "degenerate inner slope c1 = {c1}"
            )));
        }
        Ok(Example1Params { eps_tilde, c0, c1 })
    }

    /// Inner slope forced by the degree-1 normalization.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    fn breakpoints(&self) -> [f64; 4] {
        let e = self.eps_tilde;
        [0.5 - 2.0 * e, 0.5 - e, 0.5 + e, 0.5 + 2.0 * e]
    }

    fn h_raw(&self, y: f64) -> f64 {
        let [a1, a2, a3, a4] = self.breakpoints();
        let (e, c0, c1) = (self.eps_tilde, self.c0, self.c1);
        let h1 = c0 * a1;
        let h2 = h1 + (c0 + c1) * 0.5 * e;
        let h3 = h2 + c1 * 2.0 * e;
        let h4 = h3 + (c1 + c0) * 0.5 * e;
        if y < a1 {
            c0 * y
        } else if y < a2 {
            let t = y - a1;
            h1 + c0 * t + (c1 - c0) * t * t / (2.0 * e)
        } else if y < a3 {
            h2 + c1 * (y - a2)
        } else if y < a4 {
            let t = y - a3;
            h3 + c1 * t + (c0 - c1) * t * t / (2.0 * e)
        } else {
            h4 + c0 * (y - a4)
        }
    }

    fn h_deriv(&self, y: f64) -> f64 {
        let [a1, a2, a3, a4] = self.breakpoints();
        let (e, c0, c1) = (self.eps_tilde, self.c0, self.c1);
        if y < a1 || y >= a4 {
            c0
        } else if y < a2 {
            c0 + (c1 - c0) * (y - a1) / e
        } else if y < a3 {
            c1
        } else {
            c1 + (c0 - c1) * (y - a3) / e
        }
    }

    /// `sup |h'|` over the wrapped interval `[y - r, y + r]`. `h'` is
    /// unimodal with peak `c1` on the plateau `[0.5 - e, 0.5 + e]`; an arc
    /// avoiding the plateau attains its maximum at an endpoint.
    fn h_deriv_sup_ball(&self, y: f64, r: f64) -> f64 {
        if r >= 0.5 {
            return self.c1;
        }
        let lo = wrap(y - r);
        let [_, a2, a3, _] = self.breakpoints();
        if arcs_meet(lo, 2.0 * r, wrap(a2), a3 - a2) {
            return self.c1;
        }
        self.h_deriv(lo.value()).max(self.h_deriv(wrap(y + r).value()))
    }
}

/// Closed-arc intersection test: `[s1, s1 + l1]` meets `[s2, s2 + l2]`.
fn arcs_meet(s1: CirclePoint, l1: f64, s2: CirclePoint, l2: f64) -> bool {
    s1.gap_to(s2) <= l1 || s2.gap_to(s1) <= l2
}

/// The fibre diffeomorphism `h` with `h(0) = 0`.
pub fn example1_h(p: &Example1Params, y: CirclePoint) -> CirclePoint {
    wrap(p.h_raw(y.value()))
}

pub fn example1_h_deriv(p: &Example1Params, y: CirclePoint) -> f64 {
    p.h_deriv(y.value())
}

/// `F(x,y) = (7x, g(x) + h(y))` with `g(x) = (1 - cos(3 pi x))/2`.
pub fn example1_map(p: Example1Params) -> SkewProduct {
    additive_map(7, GPiece::RaisedCos { amp: 1.0 }, HPiece::Example1(p)).expect("valid by construction")
}

// ---------------------------------------------------------------------------
// Additive family: (x,y) -> (bx, g(x) + h(y)) from a fixed catalog of pieces
// ---------------------------------------------------------------------------

/// Base-coupling catalog for the additive family.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GPiece {
    /// `g = 0`
    Zero,
    /// `g(x) = amp * sin(2 pi x)`
    Sine { amp: f64 },
    /// `g(x) = amp * (1 - cos(3 pi x))/2`
    RaisedCos { amp: f64 },
}

impl GPiece {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            GPiece::Zero => 0.0,
            GPiece::Sine { amp } => amp * (2.0 * PI * x).sin(),
            GPiece::RaisedCos { amp } => amp * (1.0 - (3.0 * PI * x).cos()) / 2.0,
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        match *self {
            GPiece::Zero => 0.0,
            GPiece::Sine { amp } => amp * 2.0 * PI * (2.0 * PI * x).cos(),
            GPiece::RaisedCos { amp } => amp * 1.5 * PI * (3.0 * PI * x).sin(),
        }
    }

    fn deriv_sup(&self) -> f64 {
        match *self {
            GPiece::Zero => 0.0,
            GPiece::Sine { amp } => amp.abs() * 2.0 * PI,
            GPiece::RaisedCos { amp } => amp.abs() * 1.5 * PI,
        }
    }

    fn validate(&self) -> Result<(), MapError> {
        let amp = match *self {
            GPiece::Zero => return Ok(()),
            GPiece::Sine { amp } | GPiece::RaisedCos { amp } => amp,
        };
        if !amp.is_finite() {
            return Err(MapError::InvalidParameter("g amplitude must be finite".into()));
        }
        Ok(())
    }
}

/// Fibre catalog for the additive family.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HPiece {
    /// `h(y) = y` — the isometric null model.
    Identity,
    /// `h(y) = offset + amp * sin(2 pi y)`; maps the fibre into a short arc.
    Sine { offset: f64, amp: f64 },
    /// `h(y) = y + amp * sin(2 pi y)`, a degree-1 near-isometry
    /// (requires `2 pi |amp| < 1`).
    Perturbed { amp: f64 },
    /// The piecewise diffeomorphism of Example 1.
    Example1(Example1Params),
}

impl HPiece {
    fn eval(&self, y: f64) -> f64 {
        match *self {
            HPiece::Identity => y,
            HPiece::Sine { offset, amp } => offset + amp * (2.0 * PI * y).sin(),
            HPiece::Perturbed { amp } => y + amp * (2.0 * PI * y).sin(),
            HPiece::Example1(p) => p.h_raw(y),
        }
    }

    fn deriv(&self, y: f64) -> f64 {
        match *self {
            HPiece::Identity => 1.0,
            HPiece::Sine { amp, .. } => amp * 2.0 * PI * (2.0 * PI * y).cos(),
            HPiece::Perturbed { amp } => 1.0 + amp * 2.0 * PI * (2.0 * PI * y).cos(),
            HPiece::Example1(p) => p.h_deriv(y),
        }
    }

    fn deriv_sup_ball(&self, y: f64, r: f64) -> f64 {
        // cos(2 pi y) peaks at 0 and troughs at 1/2, monotone in between, so
        // extrema over an arc sit at the endpoints unless the arc meets a peak
        let cos_max_over = |y: f64, r: f64| -> f64 {
            if r >= 0.5 || arcs_meet(wrap(y - r), 2.0 * r, wrap(0.0), 0.0) {
                1.0
            } else {
                (2.0 * PI * (y - r)).cos().max((2.0 * PI * (y + r)).cos())
            }
        };
        let cos_min_over = |y: f64, r: f64| -> f64 {
            if r >= 0.5 || arcs_meet(wrap(y - r), 2.0 * r, wrap(0.5), 0.0) {
                -1.0
            } else {
                (2.0 * PI * (y - r)).cos().min((2.0 * PI * (y + r)).cos())
            }
        };
        match *self {
            HPiece::Identity => 1.0,
            HPiece::Sine { amp, .. } => {
                let hi = cos_max_over(y, r).abs();
                let lo = cos_min_over(y, r).abs();
                amp.abs() * 2.0 * PI * hi.max(lo)
            }
            HPiece::Perturbed { amp } => {
                let a = amp * 2.0 * PI;
                let hi = 1.0 + a * cos_max_over(y, r);
                let lo = 1.0 + a * cos_min_over(y, r);
                hi.abs().max(lo.abs())
            }
            HPiece::Example1(p) => p.h_deriv_sup_ball(y, r),
        }
    }

    fn deriv_sup(&self) -> f64 {
        match *self {
            HPiece::Identity => 1.0,
            HPiece::Sine { amp, .. } => amp.abs() * 2.0 * PI,
            HPiece::Perturbed { amp } => 1.0 + amp.abs() * 2.0 * PI,
            HPiece::Example1(p) => p.c1,
        }
    }

    fn validate(&self) -> Result<(), MapError> {
        match *self {
            HPiece::Identity => Ok(()),
            HPiece::Sine { offset, amp } => {
                if !offset.is_finite() || !amp.is_finite() {
                    Err(MapError::InvalidParameter("h parameters must be finite".into()))
                } else {
                    Ok(())
                }
            }
            HPiece::Perturbed { amp } => {
                if !(amp.is_finite() && 2.0 * PI * amp.abs() < 1.0) {
                    Err(MapError::InvalidParameter(format!(
                        "perturbed h needs 2 pi |amp| < 1, got amp = {amp}"
                    )))
                } else {
                    Ok(())
                }
            }
            HPiece::Example1(p) => Example1Params::new(p.eps_tilde, p.c0).map(|_| ()),
        }
    }
}

/// Build `(x,y) -> (bx, g(x) + h(y))` from catalog pieces.
pub fn additive_map(b: u32, g: GPiece, h: HPiece) -> Result<SkewProduct, MapError> {
    g.validate()?;
    h.validate()?;
    let dx_sup = g.deriv_sup();
    let dy_sup = h.deriv_sup();
    let r_bound = 1.0f64.max(dx_sup).max(dy_sup);
    let fibre = FibreMap {
        eval: Box::new(move |x, y| g.eval(x) + h.eval(y)),
        dx: Box::new(move |x, _| g.deriv(x)),
        dy: Box::new(move |_, y| h.deriv(y)),
        r_bound,
        dx_sup,
        dy_sup_ball: Box::new(move |y, r| h.deriv_sup_ball(y, r)),
        smooth_except: Vec::new(),
    };
    SkewProduct::new(b, fibre)
}

// ---------------------------------------------------------------------------
// Example 2: the Schrödinger cocycle and its projective skew product
// ---------------------------------------------------------------------------

/// Named analytic potential `v(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `v(x) = cos(2 pi x)` (default)
    Cos,
    /// `v(x) = 1` — constant; useful for cocycle oracles, not in the map class.
    One,
}

impl Potential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Cos => (2.0 * PI * x).cos(),
            Potential::One => 1.0,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Potential::Cos => -2.0 * PI * (2.0 * PI * x).sin(),
            Potential::One => 0.0,
        }
    }

    fn abs_sup(&self) -> f64 {
        1.0
    }

    fn deriv_sup(&self) -> f64 {
        match self {
            Potential::Cos => 2.0 * PI,
            Potential::One => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SchrodingerParams {
    pub lambda: f64,
    pub energy: f64,
    #[serde(default = "default_potential")]
    pub potential: Potential,
    pub b: u32,
}

fn default_potential() -> Potential {
    Potential::Cos
}

impl SchrodingerParams {
    pub fn new(lambda: f64, energy: f64, potential: Potential, b: u32) -> Result<Self, MapError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(MapError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        if !energy.is_finite() {
            return Err(MapError::InvalidParameter("energy must be finite".into()));
        }
        if b < 2 {
            return Err(MapError::InvalidParameter(format!("b must be >= 2, got {b}")));
        }
        Ok(SchrodingerParams { lambda, energy, potential, b })
    }

    fn c_range(&self) -> (f64, f64) {
        let m = self.lambda * self.potential.abs_sup();
        match self.potential {
            Potential::Cos => (-m - self.energy, m - self.energy),
            Potential::One => (self.lambda - self.energy, self.lambda - self.energy),
        }
    }

    /// The designated contraction region `{y in S : |tan y| > sqrt(lambda)}`
    /// under the affine parameterization of `S` onto `[0,1)`: a single arc
    /// around the circle point 0.
    pub fn designated_region(&self) -> crate::circle::ArcUnion {
        let t = (1.0 / self.lambda.sqrt()).atan() / PI;
        crate::circle::ArcUnion::single(1.0 - t, 2.0 * t)
    }
}

/// 2x2 real matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub fn identity() -> Self {
        Matrix2([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn mul(&self, rhs: &Matrix2) -> Matrix2 {
        let a = &self.0;
        let b = &rhs.0;
        Matrix2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (
            self.0[0][0] * v.0 + self.0[0][1] * v.1,
            self.0[1][0] * v.0 + self.0[1][1] * v.1,
        )
    }

    pub fn scale(&self, s: f64) -> Matrix2 {
        Matrix2([
            [self.0[0][0] * s, self.0[0][1] * s],
            [self.0[1][0] * s, self.0[1][1] * s],
        ])
    }

    /// Spectral norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        let m = &self.0;
        let t = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
        let d = self.det();
        let disc = (t * t - 4.0 * d * d).max(0.0);
        ((t + disc.sqrt()) / 2.0).sqrt()
    }
}

/// One cocycle step `A(x) = [[0, 1], [-1, lambda v(x) - E]]`; det is exactly 1.
pub fn sl2_step(p: &SchrodingerParams, x: CirclePoint) -> Matrix2 {
    let c = p.lambda * p.potential.eval(x.value()) - p.energy;
    Matrix2([[0.0, 1.0], [-1.0, c]])
}

fn angle_of(p: CirclePoint) -> f64 {
    PI * p.value() - PI / 2.0
}

fn circle_of_angle(a: f64) -> f64 {
    // normalize to [-pi/2, pi/2), identify the endpoints
    let mut a = a;
    while a >= PI / 2.0 {
        a -= PI;
    }
    while a < -PI / 2.0 {
        a += PI;
    }
    (a + PI / 2.0) / PI
}

/// Projective skew product of the Schrödinger cocycle on `T x S`, with the
/// fibre `S` rescaled affinely onto `[0,1)`. The fibre map realizes
/// `y -> arctan(lambda v(x) - E - 1/tan y)` through the matrix action on
/// directions, which also yields `df/dy = 1/|A(x) u_y|^2` (the formula's
/// apparent singularity at `y = 0` is recorded in `smooth_except`).
pub fn schrodinger_projective(p: SchrodingerParams) -> Result<SkewProduct, MapError> {
    let p = SchrodingerParams::new(p.lambda, p.energy, p.potential, p.b)?;
    let (cmin, cmax) = p.c_range();
    let dx_sup = p.lambda * p.potential.deriv_sup() / PI;
    let dy_sup = sup_f_over_t(f64::NEG_INFINITY, f64::INFINITY, cmin, cmax);
    let r_bound = 1.0f64.max(dx_sup).max(dy_sup);
    let pc = p;
    let eval = move |x: f64, y: f64| {
        let c = pc.lambda * pc.potential.eval(x) - pc.energy;
        let a = angle_of(CirclePoint::wrap(y));
        let (u0, u1) = (a.cos(), a.sin());
        let w = (u1, -u0 + c * u1);
        if w.0 == 0.0 {
            return 0.0; // image angle is +-pi/2, identified with circle point 0
        }
        circle_of_angle((w.1 / w.0).atan())
    };
    let dyf = move |x: f64, y: f64| {
        let c = pc.lambda * pc.potential.eval(x) - pc.energy;
        let a = angle_of(CirclePoint::wrap(y));
        let (u0, u1) = (a.cos(), a.sin());
        let w = (u1, -u0 + c * u1);
        1.0 / (w.0 * w.0 + w.1 * w.1)
    };
    let dxf = move |x: f64, y: f64| {
        let c = pc.lambda * pc.potential.eval(x) - pc.energy;
        let a = angle_of(CirclePoint::wrap(y));
        let (u0, u1) = (a.cos(), a.sin());
        let w = (u1, -u0 + c * u1);
        let n2 = w.0 * w.0 + w.1 * w.1;
        pc.lambda * pc.potential.deriv(x) * (w.0 * w.0 / n2) / PI
    };
    let sup = move |y: f64, r: f64| {
        if r >= 0.5 {
            return sup_f_over_t(f64::NEG_INFINITY, f64::INFINITY, cmin, cmax);
        }
        let lo = y - r;
        let hi = y + r;
        // singular fibre point is 0.5; t(y) = -tan(pi y) is monotone
        // decreasing on the circle cut at 0.5
        let cut = |t: f64| {
            let mut t = t - t.floor();
            if t >= 0.5 {
                t -= 1.0;
            }
            t // in [-0.5, 0.5)
        };
        let (clo, chi) = (cut(lo), cut(hi));
        if clo > chi || (lo - hi).abs() >= 1.0 {
            // ball spans the singular point: t covers all of R
            return sup_f_over_t(f64::NEG_INFINITY, f64::INFINITY, cmin, cmax);
        }
        let t_hi = -(PI * clo).tan();
        let t_lo = -(PI * chi).tan();
        sup_f_over_t(t_lo, t_hi, cmin, cmax)
    };
    let fibre = FibreMap {
        eval: Box::new(eval),
        dx: Box::new(dxf),
        dy: Box::new(dyf),
        r_bound,
        dx_sup,
        dy_sup_ball: Box::new(sup),
        smooth_except: vec![wrap(0.5)],
    };
    SkewProduct::new(p.b, fibre)
}

/// `sup_{t in [tlo, thi]} (1 + t^2) / (1 + dist(t, [cmin, cmax])^2)`.
///
/// This is `sup_x |df/dy|` expressed through `t = cot(angle)`; piecewise
/// maxima occur at interval endpoints, at the clamped range ends, or at the
/// analytic critical points of the off-range branches.
fn sup_f_over_t(tlo: f64, thi: f64, cmin: f64, cmax: f64) -> f64 {
    let f = |t: f64| -> f64 {
        if !t.is_finite() {
            return 1.0;
        }
        let d = (cmin - t).max(t - cmax).max(0.0);
        (1.0 + t * t) / (1.0 + d * d)
    };
    let mut cands = vec![tlo, thi];
    let upper_crit = (cmax + (cmax * cmax + 4.0).sqrt()) / 2.0;
    let lower_crit = (cmin - (cmin * cmin + 4.0).sqrt()) / 2.0;
    for c in [cmin, cmax, upper_crit, lower_crit] {
        if c >= tlo && c <= thi {
            cands.push(c);
        }
    }
    cands.into_iter().map(f).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::wrap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p120() -> Example1Params {
        Example1Params::new(0.05, 0.15).unwrap()
    }

    #[test]
    fn c1_normalization() {
        let p = p120();
        assert!((p.c1() - (1.0 - 0.15 * 0.85) / 0.15).abs() < 1e-12);
        assert!((p.c1() - 5.816_666_666_666_666).abs() < 1e-12);
    }

    #[test]
    fn h_anchored_and_degree_one() {
        let p = p120();
        assert_eq!(example1_h(&p, wrap(0.0)).value(), 0.0);
        // lift winds exactly once: raw value at 1 is 1
        assert!((p.h_raw(1.0) - 1.0).abs() < 1e-12);
        // winding by piecewise-exact quadrature of h' (Simpson per piece,
        // exact for the linear slope profile)
        let [a1, a2, a3, a4] = p.breakpoints();
        let mut total = 0.0;
        for (lo, hi) in [(0.0, a1), (a1, a2), (a2, a3), (a3, a4), (a4, 1.0)] {
            let mid = 0.5 * (lo + hi);
            total += (hi - lo) / 6.0
                * (p.h_deriv(lo) + 4.0 * p.h_deriv(mid) + p.h_deriv(hi - 1e-15));
        }
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn h_strictly_increasing_with_bounded_slope() {
        let p = p120();
        let mut prev = -1.0;
        for i in 0..=10_000 {
            let y = i as f64 / 10_001.0;
            let v = p.h_raw(y);
            assert!(v > prev);
            prev = v;
            let d = p.h_deriv(y);
            assert!(d >= p.c0 - 1e-12 && d <= p.c1() + 1e-12);
        }
        // slope is exactly c0 outside [0.5 - 2e, 0.5 + 2e]
        assert_eq!(p.h_deriv(0.1), 0.15);
        assert_eq!(p.h_deriv(0.9), 0.15);
        assert_eq!(p.h_deriv(0.5), p.c1());
    }

    #[test]
    fn h_deriv_continuous_at_junctions() {
        let p = p120();
        for a in p.breakpoints() {
            let l = p.h_deriv(a - 1e-9);
            let r = p.h_deriv(a + 1e-9);
            assert!((l - r).abs() < 1e-5, "slope jump at {a}: {l} vs {r}");
        }
    }

    #[test]
    fn example1_fixed_points() {
        let m = example1_map(p120());
        let (x, y) = eval_f(&m, wrap(0.0), wrap(0.0));
        assert_eq!((x.value(), y.value()), (0.0, 0.0));

        let (x, y) = eval_f(&m, wrap(1.0 / 3.0), wrap(0.0));
        assert!(x.dist(wrap(1.0 / 3.0)) < 1e-12);
        assert!(y.dist(wrap(0.0)) < 1e-12);

        let (x, y) = eval_f(&m, wrap(0.5), wrap(0.0));
        assert!(x.dist(wrap(0.5)) < 1e-12);
        assert!(y.dist(wrap(0.5)) < 1e-12);
    }

    #[test]
    fn example1_g_is_c1_on_torus() {
        let g = GPiece::RaisedCos { amp: 1.0 };
        assert_eq!(g.eval(0.0), 0.0);
        assert!((g.eval(1.0) - 1.0).abs() < 1e-12); // = 0 mod 1
        assert!(g.deriv(0.0).abs() < 1e-12);
        assert!(g.deriv(1.0).abs() < 1e-12);
    }

    #[test]
    fn example1_r_bound() {
        let p = p120();
        let m = example1_map(p);
        assert!((m.fibre().r_bound() - p.c1()).abs() < 1e-12); // c1 > 3 pi / 2 here
        let p6000 = Example1Params::new(1.0 / 6000.0, 0.15).unwrap();
        assert!((p6000.c1() - 1700.15).abs() < 1e-9);
    }

    #[test]
    fn contraction_slope_on_long_arc() {
        let p = p120();
        let m = example1_map(p);
        for y in [0.0, 0.1, 0.2, 0.3, 0.39, 0.61, 0.8, 0.99] {
            let d = m.fibre().dy(wrap(0.123), wrap(y));
            assert!((d - 0.15).abs() < 1e-12);
            assert!(d < 0.2, "|dy f| = {d} must stay below C = 0.2 on G");
        }
    }

    fn fd_check(m: &SkewProduct, n: usize, seed: u64, tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = m.fibre();
        let h = 1e-6;
        let mut checked = 0;
        while checked < n {
            let x = wrap(rng.gen::<f64>());
            let y = wrap(rng.gen::<f64>());
            // keep clear of non-smooth fibre points and piecewise junctions
            if f.smooth_except().iter().any(|s| s.dist(y) < 1e-3) {
                continue;
            }
            let signed = |a: CirclePoint, b: CirclePoint| -> f64 {
                let mut d = a.value() - b.value();
                if d > 0.5 {
                    d -= 1.0;
                }
                if d < -0.5 {
                    d += 1.0;
                }
                d
            };
            let fdx = signed(f.eval(wrap(x.value() + h), y), f.eval(wrap(x.value() - h), y)) / (2.0 * h);
            let fdy = signed(f.eval(x, wrap(y.value() + h)), f.eval(x, wrap(y.value() - h))) / (2.0 * h);
            let dx = f.dx(x, y);
            let dy = f.dy(x, y);
            // centered differences straddling a slope junction are only
            // first-order; allow the family slack
            if (fdx - dx).abs() > tol || (fdy - dy).abs() > tol {
                let near_junction = (0..5).any(|k| {
                    let a = 0.5 + (k as f64 - 2.0) * 0.05;
                    (y.value() - a).abs() < 2.0 * h
                });
                assert!(
                    near_junction,
                    "FD mismatch at ({}, {}): dx {dx} vs {fdx}, dy {dy} vs {fdy}",
                    x.value(),
                    y.value()
                );
            }
            assert!(dx.abs() <= f.r_bound() + 1e-9);
            assert!(dy.abs() <= f.r_bound() + 1e-9);
            checked += 1;
        }
    }

    #[test]
    fn derivative_consistency_all_families() {
        fd_check(&example1_map(p120()), 10_000, 1, 1e-5);
        fd_check(
            &additive_map(5, GPiece::Sine { amp: 0.06 }, HPiece::Sine { offset: 0.25, amp: 0.005 }).unwrap(),
            10_000,
            2,
            1e-5,
        );
        fd_check(
            &schrodinger_projective(SchrodingerParams::new(4.0, 0.3, Potential::Cos, 5).unwrap()).unwrap(),
            10_000,
            3,
            1e-4,
        );
    }

    #[test]
    fn r_bound_dominates_grid() {
        for m in [
            example1_map(p120()),
            additive_map(3, GPiece::Sine { amp: 0.06 }, HPiece::Sine { offset: 0.25, amp: 0.005 }).unwrap(),
            schrodinger_projective(SchrodingerParams::new(7.0, 0.0, Potential::Cos, 4).unwrap()).unwrap(),
        ] {
            let f = m.fibre();
            let mut sup: f64 = 0.0;
            for i in 0..100 {
                for j in 0..100 {
                    let x = wrap((i as f64 + 0.5) / 100.0);
                    let y = wrap((j as f64 + 0.37) / 100.0);
                    if f.is_singular(y) {
                        continue;
                    }
                    sup = sup.max(f.dx(x, y).abs()).max(f.dy(x, y).abs());
                }
            }
            assert!(sup <= f.r_bound() + 1e-9, "grid sup {sup} > r_bound {}", f.r_bound());
        }
    }

    #[test]
    fn dy_sup_ball_dominates_samples() {
        let maps = [
            example1_map(p120()),
            additive_map(3, GPiece::Sine { amp: 0.06 }, HPiece::Sine { offset: 0.25, amp: 0.005 }).unwrap(),
            schrodinger_projective(SchrodingerParams::new(6.0, 0.5, Potential::Cos, 4).unwrap()).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in &maps {
            let f = m.fibre();
            for _ in 0..500 {
                let y0 = wrap(rng.gen::<f64>());
                let r = rng.gen::<f64>() * 0.2;
                let bound = f.dy_sup_ball(y0, r);
                for _ in 0..40 {
                    let y = wrap(y0.value() + (rng.gen::<f64>() * 2.0 - 1.0) * r);
                    let x = wrap(rng.gen::<f64>());
                    if f.is_singular(y) {
                        continue;
                    }
                    let d = f.dy(x, y).abs();
                    assert!(d <= bound + 1e-9, "|dy|={d} exceeds ball bound {bound} (y0={}, r={r})", y0.value());
                }
            }
        }
    }

    #[test]
    fn schrodinger_point_examples() {
        // x = 0 gives v = 1; lambda = 1, E = 0, so c = 1
        let p = SchrodingerParams::new(1.0, 0.0, Potential::Cos, 2).unwrap();
        let m = schrodinger_projective(p).unwrap();
        // fibre endpoint (angle +-pi/2, circle 0): 1/tan = 0 -> arctan(1) = pi/4
        let img = m.fibre().eval(wrap(0.0), wrap(0.0));
        assert!(img.dist(wrap((PI / 4.0 + PI / 2.0) / PI)) < 1e-12);
        // angle pi/4 (circle 3/4), c = 1: arctan(1 - 1) = 0 -> circle 1/2
        let img = m.fibre().eval(wrap(0.0), wrap(0.75));
        assert!(img.dist(wrap(0.5)) < 1e-12);
        // y -> 0+ in angle (circle 0.5 + tiny): image tends to -pi/2 ~ circle 0
        let img = m.fibre().eval(wrap(0.0), wrap(0.5 + 1e-9));
        assert!(img.dist(wrap(0.0)) < 1e-6);
    }

    #[test]
    fn sl2_step_examples() {
        let p = SchrodingerParams::new(2.0, 0.5, Potential::One, 2).unwrap();
        let m = sl2_step(&p, wrap(0.9));
        assert_eq!(m.0, [[0.0, 1.0], [-1.0, 1.5]]);
        assert!((m.det() - 1.0).abs() < 1e-15);
        // lambda v - E = 0: rotation
        let p0 = SchrodingerParams::new(1.0, 1.0, Potential::One, 2).unwrap();
        let r = sl2_step(&p0, wrap(0.1));
        assert_eq!(r.0, [[0.0, 1.0], [-1.0, 0.0]]);
        let p = SchrodingerParams::new(3.3, -0.7, Potential::Cos, 5).unwrap();
        for x in [0.0, 0.21, 0.77] {
            assert!((sl2_step(&p, wrap(x)).det() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projective_consistency_with_matrix_action() {
        let p = SchrodingerParams::new(5.0, 1.2, Potential::Cos, 3).unwrap();
        let m = schrodinger_projective(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2_000 {
            let x = wrap(rng.gen::<f64>());
            let v = (rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
            if v.0.abs() + v.1.abs() < 1e-3 {
                continue;
            }
            let ang = (v.1 / v.0).atan(); // direction mod pi
            let yc = wrap(circle_of_angle(ang));
            let w = sl2_step(&p, x).apply(v);
            let expect = wrap(circle_of_angle((w.1 / w.0).atan()));
            let got = m.fibre().eval(x, yc);
            assert!(got.dist(expect) < 1e-9, "x={} v={v:?}", x.value());
        }
    }

    #[test]
    fn designated_region_matches_tan_threshold() {
        let p = SchrodingerParams::new(25.0, 0.0, Potential::Cos, 3).unwrap();
        let g = p.designated_region();
        assert_eq!(g.components(), 1);
        for i in 0..1000 {
            let y = wrap(i as f64 / 1000.0);
            let ang = angle_of(y);
            let in_tan = ang.tan().abs() > 5.0 && ang != 0.0;
            if (ang.tan().abs() - 5.0).abs() < 1e-3 {
                continue; // boundary
            }
            assert_eq!(g.contains(y), in_tan, "y = {}", y.value());
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(Example1Params::new(0.2, 0.15).is_err());
        assert!(Example1Params::new(0.05, 0.0).is_err());
        assert!(Example1Params::new(0.05, 0.5).is_err());
        assert!(SchrodingerParams::new(0.0, 0.0, Potential::Cos, 3).is_err());
        assert!(SchrodingerParams::new(1.0, 0.0, Potential::Cos, 1).is_err());
        assert!(additive_map(1, GPiece::Zero, HPiece::Identity).is_err());
    }
}
