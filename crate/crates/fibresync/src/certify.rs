//! Membership certification for the map class and the proof-constants ledger.
//!
//! The pipeline finds (or verifies) a contraction region `G` with rate
//! `C < 1`, measures the worst-case escape sets over the fibre (the pair
//! `(s, eps)`), checks `eps` against its admissible bound, and computes the
//! derived constants `l`, `eps'`, a certified fattening radius `delta`, and
//! the base-expansion threshold `b0`.
//!
//! Grid verdicts are Lipschitz-certified (sampled value plus a family-exact
//! modulus over the cell), not interval arithmetic; reports carry a
//! `certified` flag so downstream consumers can tell certified from
//! sampled-only results. Contraction regions are inner approximations,
//! escape sets outer approximations, so refinement only sharpens them.

use crate::circle::{wrap, Arc, ArcUnion, CirclePoint};
use crate::dynamics::OrbitRecord;
use crate::maps::FibreMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("contraction region is empty at C = {c}")]
    EmptyContractionRegion { c: f64 },
    #[error("explicit G is not certified: |df/dy| < C fails on it")]
    ExplicitRegionNotContracting,
    #[error("escape bound violated: eps = {eps} >= {bound}")]
    EpsilonBoundViolated { eps: f64, bound: f64 },
    #[error("eps' = {eps_prime} outside ({eps}, {bound})")]
    EpsPrimeOutOfRange { eps_prime: f64, eps: f64, bound: f64 },
    #[error("no delta candidate passes; worst y0 = {worst_y}: {components} components, measure {measure}")]
    DeltaSearchFailed { worst_y: f64, components: usize, measure: f64 },
    #[error("b0 search failed: {0}")]
    B0Unsatisfiable(String),
    #[error("certificate invalid: {0}")]
    InvalidCertificate(String),
}

/// An escape (or sublevel) set with its component count and measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SublevelReport {
    pub set: ArcUnion,
    pub components: usize,
    pub measure: f64,
    /// True when the grid + Lipschitz certification succeeded (outer cover),
    /// false for sampling-only results.
    pub certified: bool,
}

/// Worst-case escape statistics over the whole fibre.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EscapeSupremum {
    /// Max component count over sampled (fattened) fibre points.
    pub s: usize,
    /// Max escape measure.
    pub eps: f64,
    pub certified: bool,
}

/// The full constants ledger of a class membership proof.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassCertificate {
    pub g: ArcUnion,
    pub c: f64,
    pub s: u32,
    pub eps: f64,
    pub eps_prime: f64,
    pub r: f64,
    pub l: f64,
    pub delta: f64,
    pub b0: u64,
    pub certified: bool,
}

impl ClassCertificate {
    /// The bad-children cap `q(b) = 2(s+1) + floor(eps' b)`.
    pub fn q_of_b(&self, b: u64) -> u64 {
        compute_q(self.s, self.eps_prime, b)
    }

    /// `floor(b / (4(l+1)))`, the cap `q` must stay below.
    pub fn q_cap(&self, b: u64) -> u64 {
        (b as f64 / (4.0 * (self.l + 1.0))).floor() as u64
    }

    /// Re-validate every stored inequality (used on load).
    pub fn validate(&self) -> Result<(), CertifyError> {
        let err = |m: String| Err(CertifyError::InvalidCertificate(m));
        if !(self.c > 0.0 && self.c < 1.0) {
            return err(format!("C = {} not in (0,1)", self.c));
        }
        if self.r < 1.0 {
            return err(format!("R = {} < 1", self.r));
        }
        if self.r * self.c.powf(self.l) > 1.0 + 1e-9 {
            return err(format!("R C^l = {} > 1", self.r * self.c.powf(self.l)));
        }
        let bound = 1.0 / (6.0 * (self.l + 1.0));
        if !(self.eps < self.eps_prime && self.eps_prime < bound) {
            return err(format!(
                "need eps < eps' < 1/(6(l+1)): {} / {} / {bound}",
                self.eps, self.eps_prime
            ));
        }
        if self.s < 1 {
            return err("s must be >= 1".into());
        }
        let geo = |b: u64| b as f64 > self.r && self.r / (b as f64 - self.r) < self.delta;
        let qcond = |b: u64| self.q_of_b(b) < self.q_cap(b);
        if !(geo(self.b0) && qcond(self.b0)) {
            return err(format!("b0 = {} does not satisfy both inequalities", self.b0));
        }
        if self.b0 > 3 {
            let prev = self.b0 - 1;
            if geo(prev) && qcond(prev) {
                return err(format!("b0 = {} is not minimal", self.b0));
            }
        }
        Ok(())
    }
}

/// Inner approximation of `{y : sup_x |df/dy(x,y)| < C}`: the union of grid
/// cells whose family-exact derivative supremum over the cell stays below
/// `C`. Empty output signals that `C` is at or below the family's slope
/// floor.
pub fn find_contraction_region(fm: &FibreMap, c: f64, grid_n: usize) -> ArcUnion {
    assert!(c > 0.0 && c < 1.0, "C must lie in (0,1)");
    assert!(grid_n >= 16);
    let h = 1.0 / grid_n as f64;
    let mut cells = Vec::new();
    for i in 0..grid_n {
        let mid = wrap((i as f64 + 0.5) * h);
        if fm.dy_sup_ball(mid, h / 2.0) < c {
            cells.push(Arc::new(wrap(i as f64 * h), h));
        }
    }
    ArcUnion::from_arcs(cells)
}

/// Outer approximation of `{x : f_x(y) not in G}`: a coarse `x`-grid pass
/// with Lipschitz-certified cell verdicts, plus bisection of undecided
/// boundary cells so the over-inclusion shrinks to the bisection floor.
/// `extra` fattens the target (used for fibre-ball sweeps): a point counts
/// as escaping unless its margin into `G` certifiably exceeds `extra`.
pub fn escape_set_fattened(
    fm: &FibreMap,
    g: &ArcUnion,
    y: CirclePoint,
    grid_n: usize,
    extra: f64,
) -> SublevelReport {
    assert!(grid_n >= 16);
    let h = 1.0 / grid_n as f64;
    let lip = fm.dx_sup().max(1e-300);
    // bisect boundary cells until their width is negligible next to a cell
    let max_extra_depth = 18;
    let mut spans: Vec<(f64, f64)> = Vec::new(); // [lo, hi) escaping-possible
    let push_span = |spans: &mut Vec<(f64, f64)>, lo: f64, hi: f64| {
        match spans.last_mut() {
            Some((_, e)) if *e >= lo => *e = hi.max(*e),
            _ => spans.push((lo, hi)),
        }
    };
    // in-order recursion keeps spans sorted
    fn walk(
        fm: &FibreMap,
        g: &ArcUnion,
        y: CirclePoint,
        extra: f64,
        lip: f64,
        lo: f64,
        width: f64,
        depth: usize,
        out: &mut dyn FnMut(f64, f64),
    ) {
        let mid = wrap(lo + width / 2.0);
        let margin = g.margin(fm.eval(mid, y)) - extra;
        let radius = lip * width / 2.0;
        if margin > radius {
            return; // certainly inside G throughout the cell
        }
        if margin < -radius || depth == 0 {
            out(lo, lo + width);
            return;
        }
        walk(fm, g, y, extra, lip, lo, width / 2.0, depth - 1, out);
        walk(fm, g, y, extra, lip, lo + width / 2.0, width / 2.0, depth - 1, out);
    }
    for i in 0..grid_n {
        let lo = i as f64 * h;
        walk(fm, g, y, extra, lip, lo, h, max_extra_depth, &mut |a, b| {
            push_span(&mut spans, a, b)
        });
    }
    let set = ArcUnion::from_arcs(
        spans
            .into_iter()
            .map(|(a, b)| Arc::new(wrap(a), (b - a).min(1.0)))
            .collect(),
    );
    SublevelReport {
        components: set.components(),
        measure: set.measure(),
        set,
        certified: true,
    }
}

pub fn escape_set(fm: &FibreMap, g: &ArcUnion, y: CirclePoint, grid_n: usize) -> SublevelReport {
    escape_set_fattened(fm, g, y, grid_n, 0.0)
}

/// Worst case over the fibre of the escape-set pair `(components, measure)`.
///
/// The fibre is covered adaptively: a cell of radius `r` around `y` accounts
/// for every fibre point in it through the fattening `dy_sup_ball(y, r) * r`;
/// cells are split until the fattening drops to `tol`, so stiff families
/// (Example 1 at small eps, with fibre slopes in the thousands) stay
/// certifiable at a tractable cell count.
pub fn sup_escape_over_fibre(
    fm: &FibreMap,
    g: &ArcUnion,
    y_grid_n: usize,
    x_grid_n: usize,
) -> EscapeSupremum {
    sup_escape_over_fibre_with_tol(fm, g, y_grid_n, x_grid_n, default_tol(fm, x_grid_n))
}

fn default_tol(fm: &FibreMap, x_grid_n: usize) -> f64 {
    fm.dx_sup().max(1.0) / x_grid_n as f64
}

pub fn sup_escape_over_fibre_with_tol(
    fm: &FibreMap,
    g: &ArcUnion,
    y_grid_n: usize,
    x_grid_n: usize,
    tol: f64,
) -> EscapeSupremum {
    use rayon::prelude::*;
    assert!(y_grid_n >= 16 && tol > 0.0);
    let budget = 2_000_000usize;
    let mut spent = 0usize;
    let mut wave: Vec<(f64, f64)> = (0..y_grid_n)
        .map(|i| (i as f64 / y_grid_n as f64, 1.0 / y_grid_n as f64))
        .collect();
    let mut worst = EscapeSupremum { s: 0, eps: 0.0, certified: true };
    while !wave.is_empty() {
        let force_final = spent >= budget;
        let results: Vec<(bool, usize, f64, (f64, f64))> = wave
            .par_iter()
            .map(|&(lo, width)| {
                let r = width / 2.0;
                let mid = wrap(lo + r);
                let fat = fm.dy_sup_ball(mid, r) * r;
                let tight = fat <= tol || width <= 1e-9;
                if tight || force_final {
                    let rep = escape_set_fattened(fm, g, mid, x_grid_n, fat);
                    (true, rep.components, rep.measure, (lo, width))
                } else {
                    (false, 0, 0.0, (lo, width))
                }
            })
            .collect();
        let mut next = Vec::new();
        for (done, comps, meas, (lo, width)) in results {
            if done {
                spent += 1;
                worst.s = worst.s.max(comps);
                worst.eps = worst.eps.max(meas);
                if force_final && fm.dy_sup_ball(wrap(lo + width / 2.0), width / 2.0) * width / 2.0 > tol {
                    worst.certified = false;
                }
            } else {
                next.push((lo, width / 2.0));
                next.push((lo + width / 2.0, width / 2.0));
            }
        }
        wave = next;
    }
    worst
}

struct SweepFailure {
    worst_y: f64,
    components: usize,
    measure: f64,
}

/// Admissibility of a fibre-ball fattening `delta`: every `y` cell, fattened
/// by `dy_sup_ball(y, r + delta) (r + delta)`, must keep its escape set
/// within `(s_cap, eps_cap)`. Failing cells are refined down to `delta`
/// scale before the candidate is rejected.
fn delta_admissible(
    fm: &FibreMap,
    g: &ArcUnion,
    y_grid_n: usize,
    x_grid_n: usize,
    tol: f64,
    delta: f64,
    s_cap: usize,
    eps_cap: f64,
) -> Result<(), SweepFailure> {
    use rayon::prelude::*;
    let width_min = delta.max(1e-12);
    let budget = 2_000_000usize;
    let mut spent = 0usize;
    let mut wave: Vec<(f64, f64)> = (0..y_grid_n)
        .map(|i| (i as f64 / y_grid_n as f64, 1.0 / y_grid_n as f64))
        .collect();
    while !wave.is_empty() {
        let results: Vec<(bool, bool, usize, f64, (f64, f64))> = wave
            .par_iter()
            .map(|&(lo, width)| {
                let r = width / 2.0;
                let mid = wrap(lo + r);
                let fat = fm.dy_sup_ball(mid, r + delta) * (r + delta);
                let tight = fat <= tol || width <= width_min;
                let rep = escape_set_fattened(fm, g, mid, x_grid_n, fat);
                let pass = rep.components <= s_cap && rep.measure <= eps_cap;
                (tight, pass, rep.components, rep.measure, (lo, width))
            })
            .collect();
        let mut next = Vec::new();
        for (tight, pass, comps, meas, (lo, width)) in results {
            spent += 1;
            if pass {
                continue;
            }
            if tight || spent >= budget {
                return Err(SweepFailure {
                    worst_y: lo + width / 2.0,
                    components: comps,
                    measure: meas,
                });
            }
            next.push((lo, width / 2.0));
            next.push((lo + width / 2.0, width / 2.0));
        }
        wave = next;
    }
    Ok(())
}

/// `true` iff `eps < log(1/C) / (6 log(R/C))`, the admissibility bound of
/// the class definition (equal to `1/(6(l+1))` for `l = log R / log(1/C)`).
pub fn check_epsilon_bound(r: f64, c: f64, eps: f64) -> bool {
    assert!(r >= 1.0 && c > 0.0 && c < 1.0);
    eps < (1.0 / c).ln() / (6.0 * (r / c).ln())
}

/// `l = log R / log(1/C)`, the smallest exponent with `R C^l <= 1`.
pub fn compute_l(r: f64, c: f64) -> f64 {
    assert!(r >= 1.0 && c > 0.0 && c < 1.0);
    let l = r.ln() / (1.0 / c).ln();
    debug_assert!(r * c.powf(l) <= 1.0 + 1e-9);
    l
}

/// `q = 2(s+1) + floor(eps' b)`.
pub fn compute_q(s: u32, eps_prime: f64, b: u64) -> u64 {
    assert!(s >= 1 && eps_prime > 0.0 && eps_prime < 1.0 && b >= 2);
    2 * (s as u64 + 1) + (eps_prime * b as f64).floor() as u64
}

/// Largest `delta` from a geometric candidate ladder (ratio 1/2 from 1/2)
/// such that for every fibre point the `delta`-fattened escape set keeps at
/// most `s` components and measure at most `eps'`.
pub fn estimate_delta(
    fm: &FibreMap,
    g: &ArcUnion,
    s_cap: usize,
    eps: f64,
    eps_prime: f64,
    y_grid_n: usize,
    x_grid_n: usize,
) -> Result<f64, CertifyError> {
    estimate_delta_with_tol(fm, g, s_cap, eps, eps_prime, y_grid_n, x_grid_n, default_tol(fm, x_grid_n))
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_delta_with_tol(
    fm: &FibreMap,
    g: &ArcUnion,
    s_cap: usize,
    eps: f64,
    eps_prime: f64,
    y_grid_n: usize,
    x_grid_n: usize,
    tol: f64,
) -> Result<f64, CertifyError> {
    assert!(eps_prime > eps, "pre: eps' > measured eps");
    let mut last_fail = None;
    let mut delta = 0.5f64;
    while delta > 2.0f64.powi(-40) {
        match delta_admissible(fm, g, y_grid_n, x_grid_n, tol, delta, s_cap, eps_prime) {
            Ok(()) => return Ok(delta),
            Err(f) => last_fail = Some(f),
        }
        delta /= 2.0;
    }
    let f = last_fail.unwrap();
    Err(CertifyError::DeltaSearchFailed {
        worst_y: f.worst_y,
        components: f.components,
        measure: f.measure,
    })
}

/// Smallest integer `b > max(2, R)` with `R/(b - R) < delta` (the closed form
/// of `sum_i (R/b)^i < delta`) and `q(b) < floor(b / (4(l+1)))`.
pub fn compute_b0(r: f64, delta: f64, l: f64, s: u32, eps_prime: f64) -> Result<u64, CertifyError> {
    assert!(r >= 1.0 && l >= 0.0 && s >= 1);
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(CertifyError::B0Unsatisfiable(format!("delta = {delta}")));
    }
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(CertifyError::B0Unsatisfiable(format!("eps' = {eps_prime}")));
    }
    let cap = 1u64 << 60;
    // geometric condition: b > R + R/delta
    let geo_floor = r + r / delta;
    if geo_floor >= cap as f64 {
        return Err(CertifyError::B0Unsatisfiable(
            "geometric condition needs b > 2^60 (delta too small)".into(),
        ));
    }
    let start = 3u64.max(r.floor() as u64 + 1).max(geo_floor.floor() as u64 + 1);
    let rate = 1.0 / (4.0 * (l + 1.0)) - eps_prime;
    let end = if rate > 0.0 {
        cap.min(start + ((2.0 * s as f64 + 3.0) / rate).ceil() as u64 + 8 * (l as u64 + 2))
    } else {
        cap.min(start + 10_000_000)
    };
    for b in start..=end {
        let geo = b as f64 > r && r / (b as f64 - r) < delta;
        let q = compute_q(s, eps_prime, b);
        let qcap = (b as f64 / (4.0 * (l + 1.0))).floor() as u64;
        if geo && q < qcap {
            return Ok(b);
        }
    }
    Err(CertifyError::B0Unsatisfiable(format!(
        "no b in [{start}, {end}] satisfies both inequalities (eps' >= 1/(6(l+1)) or delta too small)"
    )))
}

/// Outcome of checking one orbit against the counting bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountingOutcome {
    /// `m < N/(2(l+1))` held; `bound_ok` records whether
    /// `sum log|df/dy| < (N/2) log C` (it must, when `G` is certified).
    Held { bound_ok: bool },
    /// Hypothesis false: nothing asserted.
    NotHeld,
}

/// Check the counting bound on an orbit carrying `in G` flags: if the number
/// `m` of steps outside `G` satisfies `m < N/(2(l+1))`, the derivative
/// product must be below `C^{N/2}`.
pub fn counting_bound_check(orbit: &OrbitRecord, c: f64, l: f64) -> CountingOutcome {
    let flags = orbit
        .in_g
        .as_ref()
        .expect("counting_bound_check requires in-G flags");
    let n = orbit.log_dy.len();
    assert_eq!(flags.len(), n);
    let m = flags.iter().filter(|&&inside| !inside).count();
    if (m as f64) < n as f64 / (2.0 * (l + 1.0)) {
        let sum: f64 = orbit.log_dy.iter().sum();
        let bound_ok = sum < (n as f64 / 2.0) * c.ln();
        debug_assert!(bound_ok, "counting bound violated: {sum} vs {}", (n as f64 / 2.0) * c.ln());
        CountingOutcome::Held { bound_ok }
    } else {
        CountingOutcome::NotHeld
    }
}

/// Options for assembling a certificate.
#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub c: f64,
    /// Explicit contraction region; any valid `(G, C)` pair is admissible,
    /// and a designated sub-region is needed when the derivative condition
    /// alone would certify the whole fibre.
    pub explicit_g: Option<ArcUnion>,
    pub region_grid_n: usize,
    pub y_grid_n: usize,
    pub x_grid_n: usize,
    /// Target for the fibre-ball fattening of the adaptive sweeps; defaults
    /// to the x-grid Lipschitz scale. Families with near-tangent escape
    /// boundaries need it tightened below the geometry's margin.
    pub y_fatten_tol: Option<f64>,
    /// Override for `eps'`; default is the geometric mean of `eps` and
    /// `1/(6(l+1))`, clamped to the open interval.
    pub eps_prime: Option<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            c: 0.2,
            explicit_g: None,
            region_grid_n: 1 << 15,
            y_grid_n: 4096,
            x_grid_n: 4096,
            y_fatten_tol: None,
            eps_prime: None,
        }
    }
}

/// The class-membership stage: `G`, `C`, the worst-case `(s, eps)` and the
/// admissibility of `eps`. Enough to back theorem-level surveys.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MembershipReport {
    pub g: ArcUnion,
    pub c: f64,
    pub s: u32,
    pub eps: f64,
    pub eps_bound: f64,
    pub r: f64,
    pub l: f64,
    pub certified: bool,
}

pub fn certify_membership(fm: &FibreMap, opts: &CertifyOptions) -> Result<MembershipReport, CertifyError> {
    let region = find_contraction_region(fm, opts.c, opts.region_grid_n);
    let g = match &opts.explicit_g {
        Some(exp) => {
            if !region.covers(exp) {
                return Err(CertifyError::ExplicitRegionNotContracting);
            }
            exp.clone()
        }
        None => region,
    };
    if g.is_empty() {
        return Err(CertifyError::EmptyContractionRegion { c: opts.c });
    }
    let tol = opts.y_fatten_tol.unwrap_or_else(|| default_tol(fm, opts.x_grid_n));
    let sup = sup_escape_over_fibre_with_tol(fm, &g, opts.y_grid_n, opts.x_grid_n, tol);
    let r = fm.r_bound();
    let bound = (1.0 / opts.c).ln() / (6.0 * (r / opts.c).ln());
    if !check_epsilon_bound(r, opts.c, sup.eps) {
        return Err(CertifyError::EpsilonBoundViolated { eps: sup.eps, bound });
    }
    Ok(MembershipReport {
        g,
        c: opts.c,
        s: sup.s.max(1) as u32,
        eps: sup.eps,
        eps_bound: bound,
        r,
        l: compute_l(r, opts.c),
        certified: sup.certified,
    })
}

/// Assemble the full constants ledger for a fibre map.
pub fn build_certificate(fm: &FibreMap, opts: &CertifyOptions) -> Result<ClassCertificate, CertifyError> {
    let membership = certify_membership(fm, opts)?;
    let MembershipReport { g, s, eps, eps_bound: bound, r, l, .. } = membership.clone();
    let eps_prime = match opts.eps_prime {
        Some(e) => e,
        None if eps == 0.0 => bound / 2.0,
        None => (eps * bound).sqrt(),
    };
    if !(eps_prime > eps && eps_prime < bound) {
        return Err(CertifyError::EpsPrimeOutOfRange { eps_prime, eps, bound });
    }
    let tol = opts.y_fatten_tol.unwrap_or_else(|| default_tol(fm, opts.x_grid_n));
    let delta = estimate_delta_with_tol(
        fm,
        &g,
        s as usize,
        eps,
        eps_prime,
        opts.y_grid_n,
        opts.x_grid_n,
        tol,
    )?;
    let b0 = compute_b0(r, delta, l, s, eps_prime)?;
    let cert = ClassCertificate {
        g,
        c: opts.c,
        s,
        eps,
        eps_prime,
        r,
        l,
        delta,
        b0,
        certified: membership.certified,
    };
    cert.validate()?;
    Ok(cert)
}
