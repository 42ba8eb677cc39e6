//! Field normalization for SSNs and dates of birth.

/// Digits-only SSN in `XXX-XX-XXXX` form, or `None` when the input does not
/// hold exactly nine digits or falls in a never-issued class (area 000, 666
/// or 900-999, group 00, serial 0000).
pub fn normalize_ssn(s: &str) -> Option<String> {
    let digits: Vec<u8> = s.bytes().filter(u8::is_ascii_digit).collect();
    if digits.len() != 9 {
        return None;
    }
    let num = |r: std::ops::Range<usize>| {
        digits[r]
            .iter()
            .fold(0u32, |acc, d| acc * 10 + u32::from(d - b'0'))
    };
    let (area, group, serial) = (num(0..3), num(3..5), num(5..9));
    if area == 0 || area == 666 || area >= 900 || group == 0 || serial == 0 {
        return None;
    }
    Some(format!("{area:03}-{group:02}-{serial:04}"))
}

pub fn is_leap(year: u32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: u32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

fn parse_parts(parts: &[&str]) -> Option<Vec<u32>> {
    parts
        .iter()
        .map(|p| {
            let p = p.trim();
            if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                None
            } else {
                p.parse().ok()
            }
        })
        .collect()
}

/// Parse `M/D/YYYY`, `YYYY-MM-DD` or `MM-DD-YYYY` into `(year, month, day)`.
pub fn parse_dob(s: &str) -> Option<(u32, u32, u32)> {
    let s = s.trim();
    let (y, m, d) = if s.contains('/') {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 3 || parts[2].trim().len() != 4 {
            return None;
        }
        let v = parse_parts(&parts)?;
        (v[2], v[0], v[1])
    } else if s.contains('-') {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 {
            return None;
        }
        let v = parse_parts(&parts)?;
        if parts[0].trim().len() == 4 {
            (v[0], v[1], v[2])
        } else if parts[2].trim().len() == 4 {
            (v[2], v[0], v[1])
        } else {
            return None;
        }
    } else {
        return None;
    };
    if !(1800..=2100).contains(&y) || !(1..=12).contains(&m) || d == 0 || d > days_in_month(y, m) {
        return None;
    }
    Some((y, m, d))
}

/// Zero-padded `MM/DD/YYYY`, or `None` for unparseable or impossible dates.
pub fn normalize_dob(s: &str) -> Option<String> {
    parse_dob(s).map(|(y, m, d)| format!("{m:02}/{d:02}/{y:04}"))
}

/// Lowercased, trimmed name with inner whitespace collapsed; `None` if empty.
pub fn normalize_name(s: &str) -> Option<String> {
    let n = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    (!n.is_empty()).then_some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ssn_examples() {
        assert_eq!(normalize_ssn("123456789").as_deref(), Some("123-45-6789"));
        assert_eq!(normalize_ssn("12-345-6789 ").as_deref(), Some("123-45-6789"));
        assert_eq!(normalize_ssn("000-12-3456"), None);
        assert_eq!(normalize_ssn("666-12-3456"), None);
        assert_eq!(normalize_ssn("912-12-3456"), None);
        assert_eq!(normalize_ssn("123-00-3456"), None);
        assert_eq!(normalize_ssn("123-45-0000"), None);
        assert_eq!(normalize_ssn("12345678"), None);
        assert_eq!(normalize_ssn("1234567890"), None);
    }

    #[test]
    fn dob_examples() {
        assert_eq!(normalize_dob("1/2/1990").as_deref(), Some("01/02/1990"));
        assert_eq!(normalize_dob("1990-01-02").as_deref(), Some("01/02/1990"));
        assert_eq!(normalize_dob("01-02-1990").as_deref(), Some("01/02/1990"));
        assert_eq!(normalize_dob("02/30/1990"), None);
        assert_eq!(normalize_dob("02/29/2000").as_deref(), Some("02/29/2000"));
        assert_eq!(normalize_dob("02/29/1900"), None);
        assert_eq!(normalize_dob("13/01/1990"), None);
        assert_eq!(normalize_dob("1/2/90"), None);
        assert_eq!(normalize_dob("yesterday"), None);
    }

    #[test]
    fn names() {
        assert_eq!(normalize_name("  Mary  Ann ").as_deref(), Some("mary ann"));
        assert_eq!(normalize_name("   "), None);
    }
}
