use std::cmp::Ordering;
use std::fmt;

/// A real interval with independently open or closed ends. Infinite ends are
/// always open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    pub const ALL: Interval = Interval { lo: f64::NEG_INFINITY, lo_closed: false, hi: f64::INFINITY, hi_closed: false };

    pub fn new(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Self {
        Interval { lo, lo_closed: lo_closed && lo.is_finite(), hi, hi_closed: hi_closed && hi.is_finite() }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval::new(lo, true, hi, true)
    }

    pub fn point(x: f64) -> Self {
        Interval::closed(x, x)
    }

    pub fn below(hi: f64, closed: bool) -> Self {
        Interval::new(f64::NEG_INFINITY, false, hi, closed)
    }

    pub fn above(lo: f64, closed: bool) -> Self {
        Interval::new(lo, closed, f64::INFINITY, false)
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let hi_ok = if self.hi_closed { x <= self.hi } else { x < self.hi };
        lo_ok && hi_ok
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = match self.lo.partial_cmp(&other.lo) {
            Some(Ordering::Greater) => (self.lo, self.lo_closed),
            Some(Ordering::Less) => (other.lo, other.lo_closed),
            _ => (self.lo, self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Less) => (self.hi, self.hi_closed),
            Some(Ordering::Greater) => (other.hi, other.hi_closed),
            _ => (self.hi, self.hi_closed && other.hi_closed),
        };
        Interval { lo, lo_closed, hi, hi_closed }
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        !self.intersect(other).is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

/// Sub-ranges of the real line left uncovered by `parts`. Assumes the parts
/// are pairwise disjoint.
pub fn coverage_gaps(parts: &[Interval]) -> Vec<Interval> {
    let mut sorted: Vec<Interval> = parts.iter().copied().filter(|i| !i.is_empty()).collect();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(b.lo_closed.cmp(&a.lo_closed)));
    let mut gaps = Vec::new();
    // Everything strictly below `reach` (or up to and including it when
    // `reach_closed`) is covered.
    let mut reach = f64::NEG_INFINITY;
    let mut reach_closed = false;
    let mut started = false;
    for part in sorted {
        let gap_start = !started && part.lo > f64::NEG_INFINITY;
        let gap_mid = started && (part.lo > reach || (part.lo == reach && !reach_closed && !part.lo_closed));
        if gap_start || gap_mid {
            gaps.push(Interval::new(reach, !reach_closed && started, part.lo, !part.lo_closed));
        }
        started = true;
        if part.hi > reach || (part.hi == reach && part.hi_closed) {
            reach = part.hi;
            reach_closed = part.hi_closed;
        }
    }
    if !started {
        gaps.push(Interval::ALL);
    } else if reach < f64::INFINITY {
        gaps.push(Interval::new(reach, !reach_closed, f64::INFINITY, false));
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersection_and_containment() {
        let a = Interval::below(13.0, false);
        let b = Interval::above(12.0, true);
        let c = a.intersect(&b);
        assert!(c.contains(12.0) && !c.contains(13.0));
        assert!(Interval::below(12.0, false).intersect(&Interval::above(12.0, false)).is_empty());
        assert!(!Interval::below(12.0, true).intersect(&Interval::above(12.0, true)).is_empty());
    }

    #[test]
    fn gaps() {
        let full = [Interval::below(12.0, false), Interval::new(12.0, true, 13.0, false), Interval::above(13.0, true)];
        assert!(coverage_gaps(&full).is_empty());
        let g = coverage_gaps(&[Interval::below(12.0, false)]);
        assert_eq!(g, vec![Interval::above(12.0, true)]);
        let g = coverage_gaps(&[Interval::below(5.0, false), Interval::above(5.0, false)]);
        assert_eq!(g, vec![Interval::point(5.0)]);
        let g = coverage_gaps(&[Interval::below(5.0, false), Interval::point(5.0), Interval::above(5.0, false)]);
        assert!(g.is_empty());
        assert_eq!(coverage_gaps(&[]), vec![Interval::ALL]);
    }
}
