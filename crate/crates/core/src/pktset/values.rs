use super::layout::width_max;
use super::PktSetError;

/// A set of field values: a union of inclusive ranges, optionally
/// complemented. Ranges are kept sorted, disjoint and non-adjacent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueSet {
    ranges: Vec<(u64, u64)>,
    negated: bool,
}

impl ValueSet {
    pub fn new(ranges: impl IntoIterator<Item = (u64, u64)>, negated: bool) -> Self {
        let mut ranges: Vec<(u64, u64)> = ranges
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        ranges.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match merged.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        ValueSet {
            ranges: merged,
            negated,
        }
    }

    pub fn single(v: u64) -> Self {
        Self::new([(v, v)], false)
    }

    pub fn range(lo: u64, hi: u64) -> Self {
        Self::new([(lo, hi)], false)
    }

    pub fn full() -> Self {
        Self::new([], true)
    }

    pub fn empty() -> Self {
        Self::new([], false)
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    pub fn negate(&self) -> Self {
        ValueSet {
            ranges: self.ranges.clone(),
            negated: !self.negated,
        }
    }

    pub fn contains(&self, v: u64) -> bool {
        let inside = self.ranges.iter().any(|&(lo, hi)| lo <= v && v <= hi);
        inside != self.negated
    }

    /// Fails if any range endpoint does not fit in `width` bits.
    pub fn check_width(&self, field: &str, width: u32) -> Result<(), PktSetError> {
        let max = width_max(width);
        match self.ranges.iter().find(|r| r.1 > max) {
            Some(&(_, hi)) => Err(PktSetError::RangeExceedsWidth {
                field: field.to_string(),
                value: hi,
                width,
            }),
            None => Ok(()),
        }
    }

    /// The set as positive ranges within a field of `width` bits.
    pub fn positive_ranges(&self, width: u32) -> Vec<(u64, u64)> {
        if !self.negated {
            return self.ranges.clone();
        }
        complement_ranges(&self.ranges, width_max(width))
    }

    pub fn is_empty_in(&self, width: u32) -> bool {
        self.positive_ranges(width).is_empty()
    }

    pub fn is_full_in(&self, width: u32) -> bool {
        self.positive_ranges(width) == [(0, width_max(width))]
    }

    pub fn count_in(&self, width: u32) -> u128 {
        self.positive_ranges(width)
            .iter()
            .map(|&(lo, hi)| (hi - lo) as u128 + 1)
            .sum()
    }

    /// Same set, expressed without negation.
    pub fn normalized(&self, width: u32) -> Self {
        Self::new(self.positive_ranges(width), false)
    }

    /// Every member in increasing order.
    pub fn values(&self, width: u32) -> impl Iterator<Item = u64> {
        self.positive_ranges(width)
            .into_iter()
            .flat_map(|(lo, hi)| lo..=hi)
    }
}

pub(crate) fn complement_ranges(ranges: &[(u64, u64)], max: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(ranges.len() + 1);
    let mut next = 0u64;
    let mut done = false;
    for &(lo, hi) in ranges {
        if lo > max {
            break;
        }
        if lo > next {
            out.push((next, lo - 1));
        }
        if hi >= max {
            done = true;
            break;
        }
        next = hi + 1;
    }
    if !done {
        out.push((next, max));
    }
    out
}

/// A value set attached to a named field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldValueSet {
    pub field: String,
    pub set: ValueSet,
}

impl FieldValueSet {
    pub fn new(field: impl Into<String>, set: ValueSet) -> Self {
        FieldValueSet {
            field: field.into(),
            set,
        }
    }
}
