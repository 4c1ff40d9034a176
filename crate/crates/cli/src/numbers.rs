//! Parsing of exact numbers given on the command line.

use std::str::FromStr;

use trinet::scalar::format_rational;
use trinet::Rational;

use crate::CliError;

/// Parses an integer, a fraction `p/q` or a plain decimal `-0.125` exactly.
pub fn parse_exact(s: &str) -> Result<Rational, CliError> {
    let s = s.trim();
    let bad = || CliError::Usage(format!("malformed number {s:?}"));
    if s.contains('/') {
        let r = Rational::from_str(s).map_err(|_| bad())?;
        return Ok(r);
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{sign}{}{frac}", if int.is_empty() { "0" } else { int });
    let denom = format!("1{}", "0".repeat(frac.len()));
    Rational::from_str(&format!("{digits}/{denom}")).map_err(|_| bad())
}

/// Parses exactly `len` comma-separated exact numbers.
pub fn parse_tuple(s: &str, len: usize) -> Result<Vec<Rational>, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != len {
        return Err(CliError::Usage(format!("expected {len} comma-separated numbers, got {s:?}")));
    }
    parts.into_iter().map(parse_exact).collect()
}

pub fn exact(r: &Rational) -> String {
    format_rational(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trinet::scalar::rat;

    #[test]
    fn decimals_and_fractions() {
        assert_eq!(parse_exact("0.125").unwrap(), rat(1, 8));
        assert_eq!(parse_exact("-.5").unwrap(), rat(-1, 2));
        assert_eq!(parse_exact("1/48").unwrap(), rat(1, 48));
        assert_eq!(parse_exact("3").unwrap(), rat(3, 1));
        for bad in ["", ".", "1.2.3", "abc", "1e-3", "1/0x"] {
            assert!(parse_exact(bad).is_err(), "{bad}");
        }
        assert!(parse_tuple("1,2", 3).is_err());
    }
}
