//! Exact probability literals: `p/q` fractions and finite decimals.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use reachrl_core::Rational;

/// Parses `p/q`, `12`, `0.125`, `.5`, `1e-3` or `2.5E+1` into an exact rational.
/// Returns `None` for anything else, including `q = 0` and signs.
pub fn parse_probability(s: &str) -> Option<Rational> {
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_digits(p)?;
        let q = parse_digits(q)?;
        if q.is_zero() {
            return None;
        }
        return Some(Rational::new(p, q));
    }
    parse_decimal(s)
}

/// Exact value of a finite decimal with optional exponent.
pub fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], parse_exponent(&s[i + 1..])?),
        None => (s, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let all_digits = |x: &str| x.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int) || !all_digits(frac) {
        return None;
    }
    let digits: String = [int, frac].concat();
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let scale = exponent - frac.len() as i64;
    let ten = BigInt::from(10u8);
    let pow = |e: i64| num_traits::pow::pow(ten.clone(), e.unsigned_abs() as usize);
    Some(if scale >= 0 {
        Rational::from_integer(numer * pow(scale))
    } else {
        Rational::new(numer, pow(scale))
    })
}

fn parse_digits(s: &str) -> Option<BigInt> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn parse_exponent(s: &str) -> Option<i64> {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || digits.len() > 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// `p/q` in lowest terms, or just `p` when `q = 1`.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Terminating decimal expansion if the denominator is `2^a·5^b`, otherwise `p/q`.
pub fn format_exact(r: &Rational) -> String {
    let mut d = r.denom().clone();
    let (two, five) = (BigInt::from(2u8), BigInt::from(5u8));
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format_rational(r);
    }
    let places = twos.max(fives);
    if places == 0 {
        return r.numer().to_string();
    }
    let scaled = r * Rational::from_integer(num_traits::pow::pow(BigInt::from(10u8), places));
    let digits = scaled.to_integer().magnitude().to_string();
    let sign = if r.numer() < &BigInt::zero() { "-" } else { "" };
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (int, frac) = padded.split_at(padded.len() - places);
    format!("{sign}{int}.{frac}")
}
