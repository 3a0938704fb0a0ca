//! Base-`b` cylinder intervals, inverse branches, and the good/bad audit
//! machinery.
//!
//! A depth-`n` cylinder word `(j_1, ..., j_n)` (branch indices in `1..=b`)
//! names the half-open interval of base points whose first `n` digits match.
//! The fibre image of `y_0` over a cylinder, reparameterized over the whole
//! circle through the inverse branches, is the curve `phi_w`; its slope is
//! bounded by `sum_i (R/b)^i`, which is what makes grid classification
//! certifiable.
//!
//! Exact badness is undecidable by sampling; verdicts are three-valued with
//! Lipschitz-certified margins, and audits count `unknown` as bad so the
//! direction of the per-parent cap `q` is preserved. Classification grids
//! are nested under `grid_n` doubling (samples at multiples of `h/2`, plus
//! the two one-sided limits at the discontinuity point 0), so refinement
//! can only move verdicts `unknown -> {good, bad}`.

use crate::certify::ClassCertificate;
use crate::circle::{wrap, ArcUnion, CirclePoint};
use crate::maps::SkewProduct;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CylinderError {
    #[error("invalid cylinder word: {0}")]
    InvalidWord(String),
    #[error("limit slope bound requires b > R (got b = {b}, R = {r})")]
    LimitRequiresExpansion { b: u32, r: f64 },
}

/// A digit word naming one cylinder of the depth-`n` partition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CylinderWord {
    b: u32,
    digits: Vec<u32>,
}

impl CylinderWord {
    /// Branch indices are 1-based: `1 <= j_i <= b`.
    pub fn new(b: u32, digits: Vec<u32>) -> Result<Self, CylinderError> {
        if b < 2 {
            return Err(CylinderError::InvalidWord(format!("b = {b} < 2")));
        }
        if digits.is_empty() {
            return Err(CylinderError::InvalidWord("empty word".into()));
        }
        if let Some(&d) = digits.iter().find(|&&d| d < 1 || d > b) {
            return Err(CylinderError::InvalidWord(format!("digit {d} outside 1..={b}")));
        }
        Ok(CylinderWord { b, digits })
    }

    /// From 0-based base-`b` digits (e.g. a [`crate::dynamics::BaseTrajectory`] prefix).
    pub fn from_base_digits(b: u32, digits: &[u32]) -> Result<Self, CylinderError> {
        Self::new(b, digits.iter().map(|&d| d + 1).collect())
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn child(&self, j: u32) -> CylinderWord {
        assert!((1..=self.b).contains(&j));
        let mut digits = self.digits.clone();
        digits.push(j);
        CylinderWord { b: self.b, digits }
    }

    pub fn prefix(&self, n: usize) -> CylinderWord {
        assert!(n >= 1 && n <= self.depth());
        CylinderWord {
            b: self.b,
            digits: self.digits[..n].to_vec(),
        }
    }

    /// Exact interval data: `(index, b^n)` with the interval
    /// `[index / b^n, (index + 1) / b^n)`.
    pub fn interval_exact(&self) -> (u128, u128) {
        let mut idx: u128 = 0;
        for &j in &self.digits {
            idx = idx * self.b as u128 + (j - 1) as u128;
        }
        (idx, (self.b as u128).pow(self.depth() as u32))
    }

    pub fn label(&self) -> String {
        self.digits
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// `(left, width)` of the half-open cylinder interval: `left = sum (j_i - 1) b^-i`,
/// `width = b^-n`.
pub fn cylinder_interval(w: &CylinderWord) -> (f64, f64) {
    let (idx, den) = w.interval_exact();
    (idx as f64 / den as f64, 1.0 / den as f64)
}

/// The inverse branch onto `I_j`: `x -> (x + j - 1)/b`.
pub fn inverse_branch(j: u32, x: CirclePoint, b: u32) -> CirclePoint {
    assert!((1..=b).contains(&j), "branch index {j} outside 1..={b}");
    wrap((x.value() + (j - 1) as f64) / b as f64)
}

/// The reparameterized fibre-image curve, by its defining recursion:
/// `phi_{j1..jn}(x) = pi_2 F(T_{jn}^{-1} x, phi_{j1..j(n-1)}(T_{jn}^{-1} x))`.
pub fn phi_eval(m: &SkewProduct, y0: CirclePoint, w: &CylinderWord, x: CirclePoint) -> CirclePoint {
    assert_eq!(m.b(), w.b());
    let n = w.depth();
    if n == 1 {
        let u = inverse_branch(w.digits[0], x, m.b());
        return m.fibre().eval(u, y0);
    }
    let jn = w.digits[n - 1];
    let u = inverse_branch(jn, x, m.b());
    let parent = w.prefix(n - 1);
    let inner = phi_eval(m, y0, &parent, u);
    m.fibre().eval(u, inner)
}

/// Iterative evaluator used by grid classification: the branch pullbacks
/// collapse to `x_k = (x + tail_k) / b^{n-k}` with integer digit tails, and
/// the fibre coordinate is pushed forward through the orbit.
fn phi_eval_tails(w: &CylinderWord) -> (Vec<u64>, Vec<f64>) {
    let n = w.depth();
    let b = w.b() as u64;
    // tails[k] = sum_{i > k} (j_i - 1) b^{n - i}, powers[k] = b^{n-k}
    let mut tails = vec![0u64; n];
    let mut acc = 0u64;
    for k in (0..n).rev() {
        tails[k] = acc;
        acc += (w.digits[k] as u64 - 1) * b.pow((n - 1 - k) as u32);
    }
    // tails[k] for k in 0..n uses digits j_{k+1}..j_n; recompute directly:
    let mut tails = vec![0u64; n];
    for k in 0..n {
        let mut t = 0u64;
        for i in (k + 1)..=n {
            t += (w.digits[i - 1] as u64 - 1) * b.pow((n - i) as u32);
        }
        tails[k] = t;
    }
    let powers: Vec<f64> = (0..n).map(|k| (b as f64).powi((n - k) as i32)).collect();
    (tails, powers)
}

fn phi_eval_prepared(
    m: &SkewProduct,
    y0: CirclePoint,
    tails: &[u64],
    powers: &[f64],
    x: f64,
) -> CirclePoint {
    let fibre = m.fibre();
    let mut y = y0;
    for k in 0..tails.len() {
        let xk = wrap((x + tails[k] as f64) / powers[k]);
        y = fibre.eval(xk, y);
    }
    y
}

/// `sum_{i=1..n} (R/b)^i`, the slope bound for depth-`n` curves.
pub fn phi_lipschitz_bound(n: usize, r: f64, b: u32) -> f64 {
    let ratio = r / b as f64;
    let mut sum = 0.0;
    let mut term = 1.0;
    for _ in 0..n {
        term *= ratio;
        sum += term;
    }
    sum
}

/// Limit variant `R/(b - R)`; requires `b > R`.
pub fn phi_lipschitz_limit(r: f64, b: u32) -> Result<f64, CylinderError> {
    if (b as f64) <= r {
        return Err(CylinderError::LimitRequiresExpansion { b, r });
    }
    Ok(r / (b as f64 - r))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Good,
    Bad,
    Unknown,
}

/// Certified classification of one cylinder.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BadnessVerdict {
    pub status: Status,
    /// Certified distance into/out of `G` at the worst sample, net of the
    /// Lipschitz radius (positive exactly for `good`).
    pub margin: f64,
    /// A sample with `phi(x)` outside `G`, present exactly for `bad`.
    pub witness: Option<CirclePoint>,
}

/// Sample `phi_w` on a nested grid (spacing `h/2`, plus the two one-sided
/// limits at 0) and certify with radius `Lip(phi_w) h / 2`.
pub fn classify_cylinder(
    m: &SkewProduct,
    y0: CirclePoint,
    w: &CylinderWord,
    g: &ArcUnion,
    grid_n: usize,
) -> BadnessVerdict {
    assert!(grid_n >= 16, "grid_n >= 16 required");
    let (tails, powers) = phi_eval_tails(w);
    let radius = phi_lipschitz_bound(w.depth(), m.fibre().r_bound(), m.b()) / (2.0 * grid_n as f64);
    let mut min_margin = f64::INFINITY;
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let steps = 2 * grid_n;
    let mut probe = |x: f64| {
        let v = phi_eval_prepared(m, y0, &tails, &powers, x);
        let mg = g.margin(v);
        min_margin = min_margin.min(mg);
        if mg <= 0.0 && mg < worst {
            worst = mg;
            witness = Some(wrap(x));
        }
    };
    for i in 0..steps {
        probe(i as f64 / steps as f64);
    }
    probe(1.0 - 2.0f64.powi(-40)); // left limit at the discontinuity point
    if let Some(x) = witness {
        return BadnessVerdict {
            status: Status::Bad,
            margin: worst,
            witness: Some(x),
        };
    }
    if min_margin > radius {
        BadnessVerdict {
            status: Status::Good,
            margin: min_margin - radius,
            witness: None,
        }
    } else {
        BadnessVerdict {
            status: Status::Unknown,
            margin: min_margin - radius,
            witness: None,
        }
    }
}

/// Audit of the `b` children of one parent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChildAudit {
    pub bad: u32,
    pub unknown: u32,
    /// `q(b) = 2(s+1) + floor(eps' b)` from the certificate.
    pub q: u64,
    /// `floor(b / (4(l+1)))`, the proof's cap on `q`.
    pub q_cap: u64,
    /// `bad + unknown <= q`, unknowns counted conservatively as bad.
    pub within_q: bool,
    /// Audited base below the certified threshold: counts are reported but
    /// the lemma is not asserted.
    pub b_below_b0: bool,
}

/// Classify all `b` children of `w` (the root when `w` is `None`) and compare
/// the conservative bad count against the certificate's `q`.
pub fn audit_children(
    m: &SkewProduct,
    y0: CirclePoint,
    w: Option<&CylinderWord>,
    g: &ArcUnion,
    cert: &ClassCertificate,
    grid_n: usize,
) -> ChildAudit {
    let b = m.b();
    let mut bad = 0u32;
    let mut unknown = 0u32;
    for j in 1..=b {
        let child = match w {
            Some(parent) => parent.child(j),
            None => CylinderWord::new(b, vec![j]).unwrap(),
        };
        match classify_cylinder(m, y0, &child, g, grid_n).status {
            Status::Bad => bad += 1,
            Status::Unknown => unknown += 1,
            Status::Good => {}
        }
    }
    let q = cert.q_of_b(b as u64);
    ChildAudit {
        bad,
        unknown,
        q,
        q_cap: cert.q_cap(b as u64),
        within_q: (bad + unknown) as u64 <= q,
        b_below_b0: (b as u64) <= cert.b0,
    }
}

/// Breadth-first audit of every parent up to child depth `depth`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    /// Deepest child level classified.
    pub depth: usize,
    pub parents_audited: u64,
    pub max_bad_children: u32,
    /// Max unknown children over a single parent.
    pub unknown_children: u32,
    pub max_bad_plus_unknown: u32,
    pub q: u64,
    pub q_cap: u64,
    pub b_below_b0: bool,
    /// Parents with `bad + unknown > q` (unknowns counted as bad).
    pub violations: Vec<CylinderWord>,
    /// Classifications performed; capped by the work budget.
    pub classifications: u64,
    /// True when the requested depth fit in the work budget.
    pub complete: bool,
}

/// Run [`audit_children`] over all parents of depth `< depth`, fanning out
/// over sibling subtrees. Enumeration stops when the classification budget
/// is exhausted.
pub fn audit_partition(
    m: &SkewProduct,
    y0: CirclePoint,
    g: &ArcUnion,
    cert: &ClassCertificate,
    depth: usize,
    grid_n: usize,
    budget: u64,
) -> AuditReport {
    assert!(depth >= 1);
    let b = m.b() as u64;
    let mut report = AuditReport {
        depth: 0,
        parents_audited: 0,
        max_bad_children: 0,
        unknown_children: 0,
        max_bad_plus_unknown: 0,
        q: cert.q_of_b(b),
        q_cap: cert.q_cap(b),
        b_below_b0: b <= cert.b0,
        violations: Vec::new(),
        classifications: 0,
        complete: true,
    };
    for level in 0..depth {
        let parents = b.pow(level as u32);
        if report.classifications + parents * b > budget {
            report.complete = false;
            break;
        }
        let level_results: Vec<(u32, u32, Option<CylinderWord>)> = (0..parents)
            .into_par_iter()
            .map(|idx| {
                let word = word_from_index(m.b(), level, idx);
                let audit = audit_children(m, y0, word.as_ref(), g, cert, grid_n);
                let viol = if (audit.bad + audit.unknown) as u64 > audit.q {
                    Some(word.unwrap_or_else(|| CylinderWord::new(m.b(), vec![1]).unwrap()))
                } else {
                    None
                };
                (audit.bad, audit.unknown, viol)
            })
            .collect();
        for (bad, unknown, viol) in level_results {
            report.max_bad_children = report.max_bad_children.max(bad);
            report.unknown_children = report.unknown_children.max(unknown);
            report.max_bad_plus_unknown = report.max_bad_plus_unknown.max(bad + unknown);
            if let Some(v) = viol {
                if report.violations.len() < 1000 {
                    report.violations.push(v);
                }
            }
        }
        report.parents_audited += parents;
        report.classifications += parents * b;
        report.depth = level + 1;
    }
    report
}

fn word_from_index(b: u32, depth: usize, mut idx: u64) -> Option<CylinderWord> {
    if depth == 0 {
        return None;
    }
    let mut digits = vec![1u32; depth];
    for k in (0..depth).rev() {
        digits[k] = (idx % b as u64) as u32 + 1;
        idx /= b as u64;
    }
    Some(CylinderWord::new(b, digits).unwrap())
}

/// `C(n,m) q^m (b-q)^{n-m} / b^n`, evaluated in log space.
pub fn binomial_bad_measure(n: u64, m: u64, q: u64, b: u64) -> f64 {
    assert!(m <= n && q <= b && b >= 1);
    if q == 0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if q == b {
        return if m == n { 1.0 } else { 0.0 };
    }
    let (nf, mf) = (n as f64, m as f64);
    let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(mf + 1.0) - ln_gamma(nf - mf + 1.0);
    let ln_p = ln_choose + mf * (q as f64).ln() + (nf - mf) * ((b - q) as f64).ln()
        - nf * (b as f64).ln();
    ln_p.exp()
}

/// Exact tail `P(X > threshold)` for `X ~ Binomial(n, q/b)`.
pub fn binomial_exact_tail(n: u64, threshold: u64, q: u64, b: u64) -> f64 {
    (threshold + 1..=n).map(|m| binomial_bad_measure(n, m, q, b)).sum()
}

/// Empirical tail statistics for the count of bad nested prefixes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailStats {
    pub n: usize,
    pub q: u64,
    pub b: u64,
    pub samples: usize,
    /// `floor(2 (q/b) n)`, the tail threshold.
    pub threshold: u64,
    /// Empirical measure of `{x : more than threshold bad prefixes}`.
    pub empirical_tail: f64,
    /// One-sided Hoeffding bound `exp(-2 n (q/b)^2)`.
    pub hoeffding_bound: f64,
    /// Exact i.i.d. binomial tail at rate `q/b` (the lemma's dominating law).
    pub exact_tail: f64,
    /// Binomial sampling error of the empirical estimate.
    pub sigma: f64,
    /// Whether `empirical <= hoeffding + 3 sigma` was asserted (only done
    /// when the per-parent `q` bound is certified for this configuration).
    pub asserted: bool,
}

fn tail_stats_from_counts(
    n: usize,
    q: u64,
    b: u64,
    bad_counts: &[u64],
    assert_bound: bool,
) -> TailStats {
    let threshold = (2.0 * q as f64 / b as f64 * n as f64).floor() as u64;
    let over = bad_counts.iter().filter(|&&c| c > threshold).count();
    let empirical = over as f64 / bad_counts.len() as f64;
    let hoeffding = (-2.0 * n as f64 * (q as f64 / b as f64).powi(2)).exp();
    let exact = binomial_exact_tail(n as u64, threshold, q, b);
    let sigma = (exact * (1.0 - exact) / bad_counts.len() as f64).sqrt();
    let asserted = assert_bound;
    if assert_bound {
        assert!(
            empirical <= hoeffding + 3.0 * sigma,
            "empirical tail {empirical} above Hoeffding bound {hoeffding} + 3 sigma"
        );
    }
    TailStats {
        n,
        q,
        b,
        samples: bad_counts.len(),
        threshold,
        empirical_tail: empirical,
        hoeffding_bound: hoeffding,
        exact_tail: exact,
        sigma,
        asserted,
    }
}

/// Synthetic i.i.d. badness at rate `q/b`: the dominating Bernoulli model of
/// the per-level counting argument.
pub fn synthetic_tail_statistics(n: usize, q: u64, b: u64, samples: usize, seed: u64) -> TailStats {
    assert!(q <= b && n >= 1 && samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = q as f64 / b as f64;
    let counts: Vec<u64> = (0..samples)
        .map(|_| (0..n).filter(|_| rng.gen::<f64>() < p).count() as u64)
        .collect();
    tail_stats_from_counts(n, q, b, &counts, true)
}

/// Draw `sample_count` uniform base points, classify their nested prefix
/// cylinders to depth `depth_n`, and report the tail of the bad-prefix count
/// against the Hoeffding bound. Unknown verdicts count as bad. The bound is
/// asserted only when the audit certified the `q` cap at this base.
pub fn bad_prefix_statistics(
    m: &SkewProduct,
    y0: CirclePoint,
    g: &ArcUnion,
    cert: &ClassCertificate,
    depth_n: usize,
    sample_count: usize,
    seed: u64,
    grid_n: usize,
    q_certified: bool,
) -> TailStats {
    assert!(depth_n >= 4, "depth_n >= 4 required");
    let b = m.b();
    let mut memo: HashMap<CylinderWord, Status> = HashMap::new();
    let mut counts = Vec::with_capacity(sample_count);
    for i in 0..sample_count {
        let mut base = crate::dynamics::BaseTrajectory::random(b, seed.wrapping_add(i as u64));
        let digits = base.digit_prefix(depth_n);
        let word = CylinderWord::from_base_digits(b, &digits).unwrap();
        let mut bad = 0u64;
        for d in 1..=depth_n {
            let prefix = word.prefix(d);
            let status = *memo
                .entry(prefix.clone())
                .or_insert_with(|| classify_cylinder(m, y0, &prefix, g, grid_n).status);
            if status != Status::Good {
                bad += 1;
            }
        }
        counts.push(bad);
    }
    tail_stats_from_counts(depth_n, cert.q_of_b(b as u64), b as u64, &counts, q_certified)
}
