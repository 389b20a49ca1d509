use std::fmt;

use serde::{Deserialize, Serialize};

use super::PktSetError;

/// A concrete header. Fields are packed in layout order, the first field in
/// the most significant position, so numeric order equals lexicographic order
/// over header bits.
pub type Header = u128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub width: u32,
}

/// The header fields and their bit positions. Bit variable `i` of a formula
/// is header bit `i`, counted from the most significant bit of the first
/// field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderLayout {
    fields: Vec<FieldSpec>,
    offsets: Vec<u32>,
    total: u32,
}

impl HeaderLayout {
    pub const MAX_BITS: u32 = 128;
    pub const MAX_FIELD_BITS: u32 = 64;
    pub const MAX_FIELDS: usize = 64;

    pub fn new<S: Into<String>>(
        fields: impl IntoIterator<Item = (S, u32)>,
    ) -> Result<Self, PktSetError> {
        let fields: Vec<FieldSpec> = fields
            .into_iter()
            .map(|(name, width)| FieldSpec {
                name: name.into(),
                width,
            })
            .collect();
        if fields.is_empty() {
            return Err(PktSetError::InvalidLayout("layout has no fields".into()));
        }
        if fields.len() > Self::MAX_FIELDS {
            return Err(PktSetError::InvalidLayout(format!(
                "at most {} fields are supported",
                Self::MAX_FIELDS
            )));
        }
        let mut offsets = Vec::with_capacity(fields.len());
        let mut total = 0u32;
        for (i, f) in fields.iter().enumerate() {
            if f.width == 0 || f.width > Self::MAX_FIELD_BITS {
                return Err(PktSetError::InvalidLayout(format!(
                    "field `{}` has width {}; widths must be 1..={}",
                    f.name,
                    f.width,
                    Self::MAX_FIELD_BITS
                )));
            }
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(PktSetError::InvalidLayout(format!(
                    "duplicate field `{}`",
                    f.name
                )));
            }
            offsets.push(total);
            total += f.width;
        }
        if total > Self::MAX_BITS {
            return Err(PktSetError::InvalidLayout(format!(
                "header has {total} bits; at most {} are supported",
                Self::MAX_BITS
            )));
        }
        Ok(HeaderLayout {
            fields,
            offsets,
            total,
        })
    }

    /// Source and destination addresses, 32 bits each.
    pub fn addr2() -> Self {
        Self::new([("s", 32), ("d", 32)]).unwrap()
    }

    /// Addresses plus 16-bit ports.
    pub fn ipv4lite() -> Self {
        Self::new([("s", 32), ("sp", 16), ("d", 32), ("dp", 16)]).unwrap()
    }

    /// Total header bits (`pkSz`).
    pub fn pk_size(&self) -> u32 {
        self.total
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    /// Width of the widest field (`fldSz`).
    pub fn max_field_width(&self) -> u32 {
        self.fields.iter().map(|f| f.width).max().unwrap_or(0)
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn field_ids(&self) -> impl Iterator<Item = FieldId> + '_ {
        (0..self.fields.len()).map(FieldId)
    }

    pub fn field_id(&self, name: &str) -> Result<FieldId, PktSetError> {
        self.fields
            .iter()
            .position(|f| f.name == name)
            .map(FieldId)
            .ok_or_else(|| PktSetError::UnknownField(name.to_string()))
    }

    pub fn name(&self, f: FieldId) -> &str {
        &self.fields[f.0].name
    }

    pub fn width(&self, f: FieldId) -> u32 {
        self.fields[f.0].width
    }

    /// Index of the first (most significant) bit variable of the field.
    pub fn offset(&self, f: FieldId) -> u32 {
        self.offsets[f.0]
    }

    /// Largest value the field can hold.
    pub fn field_max(&self, f: FieldId) -> u64 {
        width_max(self.width(f))
    }

    fn shift(&self, f: FieldId) -> u32 {
        self.total - self.offsets[f.0] - self.width(f)
    }

    pub fn field_value(&self, h: Header, f: FieldId) -> u64 {
        ((h >> self.shift(f)) & self.field_max(f) as u128) as u64
    }

    pub fn with_field(&self, h: Header, f: FieldId, value: u64) -> Header {
        let shift = self.shift(f);
        let mask = (self.field_max(f) as u128) << shift;
        (h & !mask) | (((value & self.field_max(f)) as u128) << shift)
    }

    pub fn header(&self, values: &[u64]) -> Header {
        assert_eq!(values.len(), self.n_fields(), "one value per field");
        self.field_ids()
            .fold(0, |h, f| self.with_field(h, f, values[f.0]))
    }

    /// Bit mask (over header bits, as packed in a [`Header`]) covering the
    /// fields selected by `mask`.
    pub fn header_bits(&self, mask: FieldMask) -> Header {
        mask.iter().fold(0, |acc, f| {
            acc | ((self.field_max(f) as u128) << self.shift(f))
        })
    }

    /// Bit mask over formula variables covering one field.
    pub(crate) fn var_mask(&self, f: FieldId) -> u128 {
        let w = self.width(f);
        let ones = if w == 128 {
            u128::MAX
        } else {
            (1u128 << w) - 1
        };
        ones << self.offsets[f.0]
    }

    pub(crate) fn vars_of(&self, mask: FieldMask) -> u128 {
        mask.iter().fold(0, |acc, f| acc | self.var_mask(f))
    }

    pub fn all_fields(&self) -> FieldMask {
        FieldMask::all(self.n_fields())
    }

    /// Renders a concrete header as `name=value` pairs.
    pub fn describe(&self, h: Header) -> String {
        self.field_ids()
            .map(|f| format!("{}={}", self.name(f), self.field_value(h, f)))
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub(crate) fn width_max(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// One bit per header field; bit `i` refers to field `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldMask(pub u64);

impl FieldMask {
    pub const EMPTY: FieldMask = FieldMask(0);

    pub fn all(n_fields: usize) -> Self {
        if n_fields >= 64 {
            FieldMask(u64::MAX)
        } else {
            FieldMask((1u64 << n_fields) - 1)
        }
    }

    pub fn single(f: FieldId) -> Self {
        FieldMask(1 << f.0)
    }

    pub fn contains(self, f: FieldId) -> bool {
        self.0 >> f.0 & 1 == 1
    }

    pub fn with(self, f: FieldId) -> Self {
        FieldMask(self.0 | 1 << f.0)
    }

    pub fn union(self, other: FieldMask) -> Self {
        FieldMask(self.0 | other.0)
    }

    pub fn complement(self, n_fields: usize) -> Self {
        FieldMask(!self.0 & Self::all(n_fields).0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = FieldId> {
        (0..64).filter(move |i| self.0 >> i & 1 == 1).map(FieldId)
    }

    /// Bit string in field order, e.g. `01` when only the second of two fields
    /// is set.
    pub fn bits(self, n_fields: usize) -> String {
        (0..n_fields)
            .map(|i| if self.0 >> i & 1 == 1 { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Display for FieldMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_puts_first_field_high() {
        let l = HeaderLayout::new([("a", 2), ("b", 2)]).unwrap();
        let h = l.header(&[2, 1]);
        assert_eq!(h, 0b1001);
        assert_eq!(l.field_value(h, FieldId(0)), 2);
        assert_eq!(l.field_value(h, FieldId(1)), 1);
        assert_eq!(l.with_field(h, FieldId(0), 0), 0b0001);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(HeaderLayout::new(Vec::<(String, u32)>::new()).is_err());
        assert!(HeaderLayout::new([("a", 0)]).is_err());
        assert!(HeaderLayout::new([("a", 3), ("a", 3)]).is_err());
        assert!(HeaderLayout::new([("a", 64), ("b", 64), ("c", 1)]).is_err());
    }

    #[test]
    fn mask_bits_follow_field_order() {
        assert_eq!(FieldMask::single(FieldId(1)).bits(2), "01");
        assert_eq!(FieldMask::all(3).bits(3), "111");
    }
}
