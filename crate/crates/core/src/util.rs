//! Small shared helpers: canonical number formatting and numeric-token
//! extraction. Both sides of the grounding check (tool observations and
//! final answers) format values through [`fmt_num`] so that identical
//! quantities produce identical tokens.

/// Format a float for human-facing text: integers print without a decimal
/// point, everything else with up to six decimals, trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == x.trunc() && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    let mut s = format!("{x:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

/// A numeric literal found in free text.
#[derive(Debug, Clone, PartialEq)]
pub struct NumToken {
    pub text: String,
    pub value: f64,
}

/// Extract maximal numeric literals from text. A token is `[-]digits[.digits]`
/// where the surrounding characters are not alphanumeric, so digit runs
/// embedded in identifiers or hex strings are not picked up. A leading minus
/// only counts when it is not glued to a preceding word or number (keeps
/// "2012-2022" as two positive years).
pub fn extract_numbers(text: &str) -> Vec<NumToken> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if !c.is_ascii_digit() {
            i += 1;
            continue;
        }
        // Reject digits glued to a word character or a decimal tail.
        if i > 0 {
            let p = bytes[i - 1] as char;
            if p.is_ascii_alphanumeric() || p == '_' || p == '.' {
                // Skip the rest of this run.
                while i < bytes.len() && is_token_char(bytes[i] as char) {
                    i += 1;
                }
                continue;
            }
        }
        let mut start = i;
        // Optional sign, only when the sign itself is not glued to a word.
        if i > 0 && bytes[i - 1] as char == '-' {
            let sign_ok = i < 2 || {
                let pp = bytes[i - 2] as char;
                !(pp.is_ascii_alphanumeric() || pp == '_' || pp == '.')
            };
            if sign_ok {
                start = i - 1;
            }
        }
        let mut j = i;
        while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
            j += 1;
        }
        if j < bytes.len()
            && bytes[j] as char == '.'
            && j + 1 < bytes.len()
            && (bytes[j + 1] as char).is_ascii_digit()
        {
            j += 1;
            while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                j += 1;
            }
        }
        // Reject when the run continues into a word ("50x50", hex ids).
        if j < bytes.len() {
            let n = bytes[j] as char;
            if n.is_ascii_alphanumeric() || n == '_' {
                i = j;
                while i < bytes.len() && is_token_char(bytes[i] as char) {
                    i += 1;
                }
                continue;
            }
        }
        let tok = &text[start..j];
        if let Ok(v) = tok.parse::<f64>() {
            out.push(NumToken {
                text: tok.to_string(),
                value: v,
            });
        }
        i = j;
    }
    out
}

fn is_token_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

/// Relative/absolute closeness used when matching numeric tokens.
pub fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    let diff = (a - b).abs();
    diff <= rel || diff <= rel * a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_integers_and_fractions() {
        assert_eq!(fmt_num(4.0), "4");
        assert_eq!(fmt_num(-12.0), "-12");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(36.42), "36.42");
    }

    #[test]
    fn extracts_plain_numbers_and_ranges() {
        let toks = extract_numbers("between 2012 and 2022 there were 143 sites (-0.45 r)");
        let vals: Vec<f64> = toks.iter().map(|t| t.value).collect();
        assert_eq!(vals, vec![2012.0, 2022.0, 143.0, -0.45]);
    }

    #[test]
    fn year_range_with_dash_stays_positive() {
        let toks = extract_numbers("2012-2022");
        let vals: Vec<f64> = toks.iter().map(|t| t.value).collect();
        assert_eq!(vals, vec![2012.0, 2022.0]);
    }

    #[test]
    fn skips_digits_inside_identifiers() {
        let toks = extract_numbers("file d3f2a9.csv and 550e8400-e29b grid 50x50");
        assert!(toks.is_empty(), "got {toks:?}");
    }

    #[test]
    fn decimal_tokens_are_maximal() {
        let toks = extract_numbers("lon 114.3 not 143");
        let vals: Vec<f64> = toks.iter().map(|t| t.value).collect();
        assert_eq!(vals, vec![114.3, 143.0]);
    }
}
