//! Value-set literals used in configuration files and printed results.
//!
//! ```text
//! 10.192.29.5                 single address
//! 10.192.29.1-255             last-octet range
//! 10.192.29.[1-255]           same, bracket form
//! 10.0.0.0-10.0.3.255         full range
//! 10.0.0.0/22                 prefix
//! 7, 9-12                     integers (any field width)
//! {a, b}  !a,b  ¬{a, b}       unions and complements
//! true  *  any                every value
//! false none {}               no value
//! ```

use crate::pktset::ValueSet;

pub fn parse_value_set(text: &str, width: u32) -> Result<ValueSet, String> {
    let mut s = text.trim();
    let mut negated = false;
    if let Some(rest) = s.strip_prefix('!').or_else(|| s.strip_prefix('¬')) {
        negated = true;
        s = rest.trim();
    }
    if let Some(inner) = s.strip_prefix('{') {
        s = inner
            .strip_suffix('}')
            .ok_or_else(|| format!("unbalanced braces in `{text}`"))?
            .trim();
    }
    let mut ranges = Vec::new();
    let mut full = false;
    if !s.is_empty() {
        for item in s.split(',') {
            let item = item.trim();
            match item {
                "" => return Err(format!("empty list item in `{text}`")),
                "true" | "*" | "any" => full = true,
                "false" | "none" => {}
                _ => ranges.push(parse_item(item)?),
            }
        }
    }
    let max = crate::pktset::width_max(width);
    if let Some(&(_, hi)) = ranges.iter().find(|r| r.1 > max) {
        return Err(format!("value {hi} in `{text}` exceeds {width} bits"));
    }
    if full {
        ranges = vec![(0, max)];
    }
    Ok(ValueSet::new(ranges, negated))
}

fn parse_item(item: &str) -> Result<(u64, u64), String> {
    if let Some((addr, bits)) = item.split_once('/') {
        let base = parse_dotted(addr.trim()).ok_or_else(|| format!("bad prefix `{item}`"))?;
        let bits: u32 = bits
            .trim()
            .parse()
            .ok()
            .filter(|b| *b <= 32)
            .ok_or_else(|| format!("bad prefix length in `{item}`"))?;
        let host = if bits == 32 { 0 } else { u32::MAX >> bits };
        let lo = base & !host;
        return Ok((lo as u64, (lo | host) as u64));
    }
    if let Some(open) = item.find('[') {
        let prefix = &item[..open];
        let body = item[open + 1..]
            .strip_suffix(']')
            .ok_or_else(|| format!("unbalanced bracket in `{item}`"))?;
        let (a, b) = body.split_once('-').unwrap_or((body, body));
        let lo = parse_dotted(&format!("{prefix}{}", a.trim()));
        let hi = parse_dotted(&format!("{prefix}{}", b.trim()));
        return match (lo, hi) {
            (Some(lo), Some(hi)) if lo <= hi => Ok((lo as u64, hi as u64)),
            _ => Err(format!("bad bracket range `{item}`")),
        };
    }
    if let Some((a, b)) = item.split_once('-') {
        let (a, b) = (a.trim(), b.trim());
        let lo = parse_scalar(a)?;
        let hi = if a.contains('.') && !b.contains('.') {
            let octet: u8 = b
                .parse()
                .map_err(|_| format!("bad last-octet bound in `{item}`"))?;
            (lo & !0xff) | octet as u64
        } else {
            parse_scalar(b)?
        };
        if lo > hi {
            return Err(format!("empty range `{item}`"));
        }
        return Ok((lo, hi));
    }
    let v = parse_scalar(item)?;
    Ok((v, v))
}

fn parse_scalar(s: &str) -> Result<u64, String> {
    if s.contains('.') {
        return parse_dotted(s)
            .map(u64::from)
            .ok_or_else(|| format!("bad address `{s}`"));
    }
    let parsed = match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| format!("bad value `{s}`"))
}

fn parse_dotted(s: &str) -> Option<u32> {
    let mut out = 0u32;
    let mut parts = 0;
    for p in s.split('.') {
        let o: u8 = p.trim().parse().ok()?;
        out = out << 8 | o as u32;
        parts += 1;
    }
    (parts == 4).then_some(out)
}

pub fn format_value(v: u64, width: u32) -> String {
    if width == 32 {
        let v = v as u32;
        format!(
            "{}.{}.{}.{}",
            v >> 24,
            v >> 16 & 0xff,
            v >> 8 & 0xff,
            v & 0xff
        )
    } else {
        v.to_string()
    }
}

fn format_range(lo: u64, hi: u64, width: u32) -> String {
    if lo == hi {
        format_value(lo, width)
    } else if width == 32 && lo >> 8 == hi >> 8 {
        format!("{}-{}", format_value(lo, width), hi & 0xff)
    } else {
        format!("{}-{}", format_value(lo, width), format_value(hi, width))
    }
}

/// Shortest of the positive and complemented forms; ties print positive.
pub fn format_value_set(set: &ValueSet, width: u32) -> String {
    let pos = set.positive_ranges(width);
    if pos.is_empty() {
        return "false".into();
    }
    let neg = set.negate().positive_ranges(width);
    if neg.is_empty() {
        return "true".into();
    }
    let list = |rs: &[(u64, u64)]| {
        rs.iter()
            .map(|&(lo, hi)| format_range(lo, hi, width))
            .collect::<Vec<_>>()
            .join(", ")
    };
    if neg.len() < pos.len() {
        format!("¬{{{}}}", list(&neg))
    } else if pos.len() == 1 {
        list(&pos)
    } else {
        format!("{{{}}}", list(&pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> u64 {
        parse_dotted(s).unwrap() as u64
    }

    #[test]
    fn shorthand_forms_agree() {
        let a = parse_value_set("10.192.29.[1-255]", 32).unwrap();
        let b = parse_value_set("10.192.29.1-255", 32).unwrap();
        let c = parse_value_set("10.192.29.1-10.192.29.255", 32).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(a.ranges(), &[(ip("10.192.29.1"), ip("10.192.29.255"))]);
    }

    #[test]
    fn cidr_and_lists() {
        let v = parse_value_set("10.0.0.0/24, 10.0.1.7", 32).unwrap();
        assert_eq!(
            v.ranges(),
            &[
                (ip("10.0.0.0"), ip("10.0.0.255")),
                (ip("10.0.1.7"), ip("10.0.1.7"))
            ]
        );
        let n = parse_value_set("!{1, 3-4}", 4).unwrap();
        assert!(n.is_negated());
        assert!(!n.contains(3) && n.contains(2));
        assert_eq!(parse_value_set("¬{1, 3-4}", 4).unwrap(), n);
    }

    #[test]
    fn constants() {
        assert!(parse_value_set("true", 4).unwrap().is_full_in(4));
        assert!(parse_value_set("*", 32).unwrap().is_full_in(32));
        assert!(parse_value_set("{}", 4).unwrap().is_empty_in(4));
        assert!(parse_value_set("none", 4).unwrap().is_empty_in(4));
        assert!(parse_value_set("¬true", 4).unwrap().is_empty_in(4));
    }

    #[test]
    fn errors() {
        assert!(parse_value_set("16", 4).is_err());
        assert!(parse_value_set("1.2.3", 32).is_err());
        assert!(parse_value_set("5-2", 4).is_err());
        assert!(parse_value_set("{1,", 4).is_err());
        assert!(parse_value_set("1,,2", 4).is_err());
        assert!(parse_value_set("10.0.0.0/40", 32).is_err());
    }

    #[test]
    fn formats_like_the_result_tables() {
        let z4 = parse_value_set(
            "!10.192.28.1-255, 10.192.29.1-255, 209.85.153.85, 202.65.23.2",
            32,
        )
        .unwrap();
        assert_eq!(
            format_value_set(&z4, 32),
            "¬{10.192.28.1-255, 10.192.29.1-255, 202.65.23.2, 209.85.153.85}"
        );
        let two = parse_value_set("202.65.23.2, 209.85.153.85", 32).unwrap();
        assert_eq!(format_value_set(&two, 32), "{202.65.23.2, 209.85.153.85}");
        assert_eq!(format_value_set(&ValueSet::full(), 32), "true");
        assert_eq!(format_value_set(&ValueSet::range(2, 5), 4), "2-5");
    }

    #[test]
    fn formatted_sets_reparse() {
        for text in ["1, 4-6, 9", "¬{0, 15}", "true", "false", "7"] {
            let v = parse_value_set(text, 4).unwrap();
            let back = parse_value_set(&format_value_set(&v, 4), 4).unwrap();
            assert_eq!(v.normalized(4), back.normalized(4), "{text}");
        }
    }
}
