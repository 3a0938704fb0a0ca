//! Circle arithmetic on `T = R/Z`.
//!
//! Points carry their canonical representative in `[0,1)`. Arcs are *open*
//! counterclockwise intervals; endpoint membership always resolves to "not
//! contained". Arc unions are kept normalized: components pairwise disjoint,
//! sorted by start, abutting components merged.

use serde::{Deserialize, Serialize};

/// A point on the circle, stored as its representative in `[0,1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CirclePoint(f64);

/// Canonical projection `R -> [0,1)`. Panics on non-finite input.
pub fn wrap(t: f64) -> CirclePoint {
    CirclePoint::wrap(t)
}

impl CirclePoint {
    pub fn wrap(t: f64) -> Self {
        assert!(t.is_finite(), "cannot wrap non-finite value {t}");
        let r = t - t.floor();
        // t - floor(t) rounds up to exactly 1.0 for tiny negative t
        CirclePoint(if r >= 1.0 { 0.0 } else { r })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The natural metric on the circle: `min(|a-b|, 1-|a-b|)`, in `[0, 1/2]`.
    pub fn dist(self, other: Self) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(1.0 - d)
    }

    /// Counterclockwise gap from `self` to `other`, in `[0,1)`.
    pub fn gap_to(self, other: Self) -> f64 {
        let d = other.0 - self.0;
        if d < 0.0 {
            d + 1.0
        } else {
            d
        }
    }
}

/// Shorthand for [`CirclePoint::dist`].
pub fn circ_dist(a: CirclePoint, b: CirclePoint) -> f64 {
    a.dist(b)
}

/// An open arc traversed counterclockwise from `start`; length 1 is the full
/// circle. Wraparound across 0 is permitted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: CirclePoint,
    pub length: f64,
}

impl Arc {
    pub fn new(start: CirclePoint, length: f64) -> Self {
        assert!(
            length > 0.0 && length <= 1.0 && length.is_finite(),
            "arc length must lie in (0,1], got {length}"
        );
        Arc { start, length }
    }

    pub fn from_endpoints(start: f64, end: f64) -> Self {
        let s = CirclePoint::wrap(start);
        let len = CirclePoint::wrap(start).gap_to(CirclePoint::wrap(end));
        Arc::new(s, if len == 0.0 { 1.0 } else { len })
    }

    /// Open-arc membership.
    pub fn contains(&self, p: CirclePoint) -> bool {
        if self.length >= 1.0 {
            return true;
        }
        let d = self.start.gap_to(p);
        d > 0.0 && d < self.length
    }

    pub fn end(&self) -> CirclePoint {
        CirclePoint::wrap(self.start.0 + self.length)
    }
}

/// A finite union of pairwise-disjoint open arcs, sorted by start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcUnion {
    #[serde(deserialize_with = "deserialize_arcs")]
    arcs: Vec<Arc>,
}

fn deserialize_arcs<'de, D>(d: D) -> Result<Vec<Arc>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw = Vec::<Arc>::deserialize(d)?;
    Ok(normalize(raw).arcs)
}

/// Merge an arbitrary list of arcs into the canonical disjoint sorted form.
/// Abutting components are merged; a cover of the whole circle collapses to
/// the canonical full-circle arc.
pub fn normalize(raw: Vec<Arc>) -> ArcUnion {
    if raw.is_empty() {
        return ArcUnion { arcs: Vec::new() };
    }
    if raw.iter().any(|a| a.length >= 1.0) {
        return ArcUnion::full();
    }
    // Unwrap to [s, s+len) in [0, 2) and sweep-merge.
    let mut spans: Vec<(f64, f64)> = raw
        .iter()
        .map(|a| (a.start.0, a.start.0 + a.length))
        .collect();
    spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match merged.last_mut() {
            Some((_, le)) if s <= *le => *le = le.max(e),
            _ => merged.push((s, e)),
        }
    }
    // Fold the part of the last span that reaches or crosses 1 back onto the
    // front (components abutting at the identification point merge too).
    if let Some(&(_, e_last)) = merged.last() {
        if e_last >= 1.0 {
            let tail = e_last - 1.0;
            merged.last_mut().unwrap().1 = 1.0;
            let mut absorbed_up_to = tail;
            while let Some(&(s0, e0)) = merged.first() {
                if s0 <= absorbed_up_to {
                    absorbed_up_to = absorbed_up_to.max(e0);
                    merged.remove(0);
                } else {
                    break;
                }
            }
            if merged.is_empty() || absorbed_up_to >= merged.last().unwrap().0 {
                return ArcUnion::full();
            }
            // Reattach as a wrapped arc ending at absorbed_up_to.
            let last = merged.len() - 1;
            merged[last].1 = 1.0 + absorbed_up_to;
        }
    }
    let arcs = merged
        .into_iter()
        .map(|(s, e)| Arc::new(CirclePoint::wrap(s), (e - s).min(1.0)))
        .collect();
    ArcUnion { arcs }
}

impl ArcUnion {
    pub fn empty() -> Self {
        ArcUnion { arcs: Vec::new() }
    }

    /// Canonical full circle: a single arc of length 1 starting at 0.
    pub fn full() -> Self {
        ArcUnion {
            arcs: vec![Arc {
                start: CirclePoint(0.0),
                length: 1.0,
            }],
        }
    }

    pub fn from_arcs(raw: Vec<Arc>) -> Self {
        normalize(raw)
    }

    pub fn single(start: f64, length: f64) -> Self {
        normalize(vec![Arc::new(CirclePoint::wrap(start), length)])
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn components(&self) -> usize {
        self.arcs.len()
    }

    pub fn measure(&self) -> f64 {
        self.arcs.iter().map(|a| a.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.arcs.len() == 1 && self.arcs[0].length >= 1.0
    }

    pub fn contains(&self, p: CirclePoint) -> bool {
        self.arcs.iter().any(|a| a.contains(p))
    }

    /// Signed distance encoding membership: positive distance to the
    /// complement when `p` is inside, minus the distance to the union when
    /// outside (0 on a boundary). Capped at the metric diameter 1/2; an empty
    /// union returns -1/2.
    pub fn margin(&self, p: CirclePoint) -> f64 {
        if self.is_full() {
            return 0.5;
        }
        if self.is_empty() {
            return -0.5;
        }
        for a in &self.arcs {
            let d = a.start.gap_to(p);
            if d > 0.0 && d < a.length {
                return d.min(a.length - d);
            }
        }
        let mut dist = f64::INFINITY;
        for a in &self.arcs {
            let to_start = p.dist(a.start);
            let to_end = p.dist(a.end());
            dist = dist.min(to_start).min(to_end);
        }
        -dist
    }

    /// Complement as an arc union (open arcs between components; boundary
    /// points belong to neither, which does not affect measure).
    pub fn complement(&self) -> ArcUnion {
        if self.is_empty() {
            return ArcUnion::full();
        }
        if self.is_full() {
            return ArcUnion::empty();
        }
        let mut out = Vec::with_capacity(self.arcs.len());
        for (i, a) in self.arcs.iter().enumerate() {
            let next = &self.arcs[(i + 1) % self.arcs.len()];
            let gap = a.end().gap_to(next.start);
            let gap = if self.arcs.len() == 1 { 1.0 - a.length } else { gap };
            if gap > 0.0 {
                out.push(Arc::new(a.end(), gap));
            }
        }
        normalize(out)
    }

    /// Shrink every component by `r` on both sides, dropping components of
    /// length `<= 2r`. The full circle is invariant under erosion.
    pub fn erode(&self, r: f64) -> ArcUnion {
        assert!(r >= 0.0);
        if self.is_full() || r == 0.0 {
            return self.clone();
        }
        let arcs = self
            .arcs
            .iter()
            .filter(|a| a.length > 2.0 * r)
            .map(|a| Arc::new(CirclePoint::wrap(a.start.0 + r), a.length - 2.0 * r))
            .collect();
        ArcUnion { arcs }
    }

    /// Exact intersection via endpoint sweep in unwrapped coordinates.
    pub fn intersect(&self, other: &ArcUnion) -> ArcUnion {
        if self.is_empty() || other.is_empty() {
            return ArcUnion::empty();
        }
        if self.is_full() {
            return other.clone();
        }
        if other.is_full() {
            return self.clone();
        }
        let mut out = Vec::new();
        for a in &self.arcs {
            let (as_, ae) = (a.start.0, a.start.0 + a.length);
            for b in &other.arcs {
                // try both unwrapped placements of b against a
                for shift in [0.0, 1.0, -1.0] {
                    let (bs, be) = (b.start.0 + shift, b.start.0 + b.length + shift);
                    let lo = as_.max(bs);
                    let hi = ae.min(be);
                    if hi > lo {
                        out.push(Arc::new(CirclePoint::wrap(lo), hi - lo));
                    }
                }
            }
        }
        normalize(out)
    }

    /// True when every point of `other` lies in `self` (up to open-endpoint
    /// bookkeeping: component interiors are compared).
    pub fn covers(&self, other: &ArcUnion) -> bool {
        let inter = self.intersect(other);
        (inter.measure() - other.measure()).abs() < 1e-12
            && other
                .arcs
                .iter()
                .all(|a| self.contains(CirclePoint::wrap(a.start.0 + a.length / 2.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(1.25).value(), 0.25);
        assert!((wrap(-0.3).value() - 0.7).abs() < 1e-15);
        assert_eq!(wrap(1.0).value(), 0.0);
        assert_eq!(wrap(-1e-18).value(), 0.0);
        assert_eq!(wrap(0.0).value(), 0.0);
    }

    #[test]
    #[should_panic]
    fn wrap_rejects_non_finite() {
        wrap(f64::NAN);
    }

    #[test]
    fn circ_dist_examples() {
        assert!((circ_dist(wrap(0.1), wrap(0.9)) - 0.2).abs() < 1e-15);
        assert_eq!(circ_dist(wrap(0.37), wrap(0.37)), 0.0);
        assert_eq!(circ_dist(wrap(0.0), wrap(0.5)), 0.5);
    }

    #[test]
    fn normalize_merges_overlap() {
        let u = normalize(vec![
            Arc::new(wrap(0.1), 0.2),
            Arc::new(wrap(0.25), 0.1),
        ]);
        assert_eq!(u.components(), 1);
        assert!((u.arcs()[0].start.value() - 0.1).abs() < 1e-15);
        assert!((u.arcs()[0].length - 0.25).abs() < 1e-15);
    }

    #[test]
    fn normalize_merges_abutting() {
        let u = normalize(vec![Arc::new(wrap(0.1), 0.2), Arc::new(wrap(0.3), 0.1)]);
        assert_eq!(u.components(), 1);
        assert!((u.measure() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn normalize_wrapped_arc() {
        let u = normalize(vec![Arc::new(wrap(0.9), 0.2)]);
        assert_eq!(u.components(), 1);
        assert!(u.contains(wrap(0.95)));
        assert!(u.contains(wrap(0.05)));
        assert!(!u.contains(wrap(0.5)));
        assert!((u.measure() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn normalize_empty() {
        let u = normalize(vec![]);
        assert!(u.is_empty());
        assert_eq!(u.measure(), 0.0);
    }

    #[test]
    fn normalize_wrap_merge_to_full() {
        let u = normalize(vec![Arc::new(wrap(0.5), 0.6), Arc::new(wrap(0.05), 0.5)]);
        assert!(u.is_full());
        assert_eq!(u.measure(), 1.0);
    }

    #[test]
    fn margin_examples() {
        let u = ArcUnion::single(0.2, 0.6);
        assert!((u.margin(wrap(0.5)) - 0.3).abs() < 1e-15);
        assert!((u.margin(wrap(0.1)) + 0.1).abs() < 1e-15);
        assert_eq!(ArcUnion::full().margin(wrap(0.123)), 0.5);
        assert_eq!(ArcUnion::empty().margin(wrap(0.123)), -0.5);
        // boundary point of the open arc is not inside
        assert!(u.margin(wrap(0.2)) <= 0.0);
    }

    #[test]
    fn complement_component_count_and_measure() {
        let u = normalize(vec![Arc::new(wrap(0.1), 0.2), Arc::new(wrap(0.6), 0.1)]);
        let c = u.complement();
        assert!(c.components() <= u.components());
        assert!((c.measure() - (1.0 - u.measure())).abs() < 1e-12);
        assert!(c.contains(wrap(0.5)));
        assert!(!c.contains(wrap(0.15)));
    }

    #[test]
    fn erode_shrinks() {
        let u = ArcUnion::single(0.25, 0.5);
        let e = u.erode(0.05);
        assert!((e.measure() - 0.4).abs() < 1e-12);
        assert!(e.contains(wrap(0.5)));
        assert!(!e.contains(wrap(0.27)));
        assert!(u.erode(0.25).is_empty());
        assert!(ArcUnion::full().erode(0.3).is_full());
    }

    #[test]
    fn intersect_and_covers() {
        let a = ArcUnion::single(0.1, 0.5);
        let b = ArcUnion::single(0.4, 0.4);
        let i = a.intersect(&b);
        assert!((i.measure() - 0.2).abs() < 1e-12);
        assert!(a.covers(&ArcUnion::single(0.2, 0.1)));
        assert!(!a.covers(&b));
        // wrapped case
        let w = ArcUnion::single(0.9, 0.2);
        let i2 = w.intersect(&ArcUnion::single(0.95, 0.3));
        assert!((i2.measure() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn serde_roundtrip() {
        let u = normalize(vec![Arc::new(wrap(0.9), 0.2), Arc::new(wrap(0.3), 0.1)]);
        let s = serde_json::to_string(&u).unwrap();
        let back: ArcUnion = serde_json::from_str(&s).unwrap();
        assert_eq!(u, back);
    }

    // Oracle: measure of a union of intervals by sorting unwrapped endpoints,
    // independent of the sweep-merge in `normalize`.
    fn sweep_measure(raw: &[Arc]) -> f64 {
        if raw.is_empty() {
            return 0.0;
        }
        let mut pts: Vec<(f64, i32)> = Vec::new();
        for a in raw {
            let s = a.start.value();
            let e = s + a.length;
            if e <= 1.0 {
                pts.push((s, 1));
                pts.push((e, -1));
            } else {
                pts.push((s, 1));
                pts.push((1.0, -1));
                pts.push((0.0, 1));
                pts.push((e - 1.0, -1));
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut depth = 0;
        let mut covered = 0.0;
        let mut last = 0.0;
        for (t, d) in pts {
            if depth > 0 {
                covered += t - last;
            }
            depth += d;
            last = t;
        }
        covered.min(1.0)
    }

    proptest! {
        #[test]
        fn wrap_idempotent(t in -1e6..1e6f64) {
            let w = wrap(t);
            prop_assert_eq!(wrap(w.value()).value(), w.value());
        }

        #[test]
        fn dist_symmetry_triangle(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
            let (pa, pb, pc) = (wrap(a), wrap(b), wrap(c));
            prop_assert!((circ_dist(pa, pb) - circ_dist(pb, pa)).abs() < 1e-15);
            prop_assert!(circ_dist(pa, pc) <= circ_dist(pa, pb) + circ_dist(pb, pc) + 1e-12);
            prop_assert!(circ_dist(pa, pb) <= 0.5);
        }

        #[test]
        fn normalize_idempotent_and_measure(
            raw in proptest::collection::vec((0.0..1.0f64, 0.001..0.9f64), 0..8)
        ) {
            let arcs: Vec<Arc> = raw.iter().map(|&(s, l)| Arc::new(wrap(s), l)).collect();
            let u = normalize(arcs.clone());
            let again = normalize(u.arcs().to_vec());
            prop_assert_eq!(&u, &again);
            prop_assert!((u.measure() - sweep_measure(&arcs)).abs() < 1e-12);
            // sorted and strictly disjoint
            for w in u.arcs().windows(2) {
                prop_assert!(w[0].start.value() < w[1].start.value());
            }
            let comp = u.complement();
            prop_assert!(comp.components() <= u.components().max(1));
            prop_assert!((comp.measure() - (1.0 - u.measure())).abs() < 1e-12);
        }
    }
}
