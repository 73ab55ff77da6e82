//! Shared text-container plumbing: lossless hex-float numbers, FNV-1a
//! hashing, and the checksummed line-oriented files used by every
//! on-disk format in this crate.
//!
//! Every container ends with a trailer line `checksum <16 hex digits>`
//! holding the FNV-1a hash of all bytes that precede the trailer.

use std::fmt::Write as _;

use thiserror::Error;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Errors raised while reading one of the text containers.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity error: stored checksum {stored:016x}, recomputed {computed:016x}")]
    Integrity { stored: u64, computed: u64 },
}

impl FormatError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Incremental 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(FNV_OFFSET)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::new();
    h.update(bytes);
    h.finish()
}

/// Formats an `f64` as C99 `%a`-style hexadecimal text (`0x1.8p+1`).
///
/// The output round-trips bit-exactly through [`parse_hex_f64`],
/// including signed zero, subnormals, infinities and NaN (NaN payloads
/// are not preserved).
pub fn format_hex_f64(value: f64) -> String {
    if value.is_nan() {
        return "nan".to_string();
    }
    let sign = if value.is_sign_negative() { "-" } else { "" };
    if value.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = value.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let mantissa = bits & 0x000f_ffff_ffff_ffff;
    if biased == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 {
        (0, -1022)
    } else {
        (1, biased - 1023)
    };
    let mut frac = format!("{mantissa:013x}");
    while frac.ends_with('0') {
        frac.pop();
    }
    let exp_sign = if exp < 0 { '-' } else { '+' };
    if frac.is_empty() {
        format!("{sign}0x{lead}p{exp_sign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{frac}p{exp_sign}{}", exp.abs())
    }
}

/// Parses hexadecimal floating-point text as produced by
/// [`format_hex_f64`]. Inputs carrying more than 53 significant bits
/// are rejected rather than rounded.
pub fn parse_hex_f64(text: &str) -> Result<f64, String> {
    let (negative, body) = match text.as_bytes().first() {
        Some(b'-') => (true, &text[1..]),
        Some(b'+') => (false, &text[1..]),
        _ => (false, text),
    };
    let signed = |v: f64| if negative { -v } else { v };
    match body {
        "inf" => return Ok(signed(f64::INFINITY)),
        "nan" => return Ok(f64::NAN),
        _ => {}
    }
    let body = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))
        .ok_or_else(|| format!("missing 0x prefix in {text:?}"))?;
    let (digits, exp_text) = body
        .split_once(['p', 'P'])
        .ok_or_else(|| format!("missing binary exponent in {text:?}"))?;
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("no hex digits in {text:?}"));
    }
    let exp: i64 = exp_text
        .parse()
        .map_err(|_| format!("bad exponent in {text:?}"))?;

    let mut mant: u128 = 0;
    let mut shift: i64 = 0;
    for (i, c) in int_part.chars().chain(frac_part.chars()).enumerate() {
        let d = c
            .to_digit(16)
            .ok_or_else(|| format!("bad hex digit {c:?} in {text:?}"))?;
        if mant >> 120 != 0 {
            return Err(format!("too many digits in {text:?}"));
        }
        mant = (mant << 4) | u128::from(d);
        if i >= int_part.len() {
            shift -= 4;
        }
    }
    if mant == 0 {
        return Ok(signed(0.0));
    }
    let mut e = exp + shift;
    while mant & 1 == 0 {
        mant >>= 1;
        e += 1;
    }
    if mant >> 53 != 0 {
        return Err(format!("more than 53 significant bits in {text:?}"));
    }
    Ok(signed(ldexp(mant as u64, e)))
}

/// Assembles `mant * 2^e` directly from bits; `mant` has at most 53 bits.
fn ldexp(mant: u64, e: i64) -> f64 {
    let nbits = 64 - i64::from(mant.leading_zeros());
    let top = e + nbits - 1;
    if top > 1023 {
        return f64::INFINITY;
    }
    if top >= -1022 {
        let sig = mant << (53 - nbits);
        let biased = (top + 1023) as u64;
        return f64::from_bits((biased << 52) | (sig & 0x000f_ffff_ffff_ffff));
    }
    // Subnormal: express as k * 2^-1074, rounding half to even.
    let shift = -1074 - e;
    if shift <= 0 {
        return f64::from_bits(mant << (-shift));
    }
    if shift >= 54 {
        return 0.0;
    }
    let kept = mant >> shift;
    let rem = mant & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    let rounded = if rem > half || (rem == half && kept & 1 == 1) {
        kept + 1
    } else {
        kept
    };
    f64::from_bits(rounded)
}

/// Appends space-separated hex floats to `out`.
pub fn push_hex_values(out: &mut String, values: &[f64]) {
    for v in values {
        out.push(' ');
        out.push_str(&format_hex_f64(*v));
    }
}

/// Builds a checksummed text container line by line.
#[derive(Debug, Default)]
pub struct ContainerWriter {
    body: String,
}

impl ContainerWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line(&mut self, line: &str) {
        self.body.push_str(line);
        self.body.push('\n');
    }

    pub fn finish(mut self) -> String {
        let sum = fnv1a(self.body.as_bytes());
        let _ = writeln!(self.body, "checksum {sum:016x}");
        self.body
    }
}

/// One body line of a container with its 1-based line number.
#[derive(Debug, Clone, Copy)]
pub struct Line<'a> {
    pub number: usize,
    pub text: &'a str,
}

impl<'a> Line<'a> {
    pub fn error(&self, message: impl Into<String>) -> FormatError {
        FormatError::parse(self.number, message)
    }

    pub fn fields(&self) -> Fields<'a> {
        Fields {
            line: self.number,
            inner: self.text.split_ascii_whitespace(),
        }
    }
}

/// Whitespace field cursor with typed accessors that report the line.
pub struct Fields<'a> {
    line: usize,
    inner: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Fields<'a> {
    pub fn next_str(&mut self, what: &str) -> Result<&'a str, FormatError> {
        self.inner
            .next()
            .ok_or_else(|| FormatError::parse(self.line, format!("missing {what}")))
    }

    pub fn expect(&mut self, keyword: &str) -> Result<(), FormatError> {
        let got = self.next_str(keyword)?;
        if got == keyword {
            Ok(())
        } else {
            Err(FormatError::parse(
                self.line,
                format!("expected {keyword:?}, found {got:?}"),
            ))
        }
    }

    pub fn next_usize(&mut self, what: &str) -> Result<usize, FormatError> {
        let s = self.next_str(what)?;
        s.parse()
            .map_err(|_| FormatError::parse(self.line, format!("bad {what}: {s:?}")))
    }

    pub fn next_hex_u64(&mut self, what: &str) -> Result<u64, FormatError> {
        let s = self.next_str(what)?;
        u64::from_str_radix(s, 16)
            .map_err(|_| FormatError::parse(self.line, format!("bad {what}: {s:?}")))
    }

    pub fn next_f64(&mut self, what: &str) -> Result<f64, FormatError> {
        let s = self.next_str(what)?;
        parse_hex_f64(s).map_err(|m| FormatError::parse(self.line, m))
    }

    pub fn hex_values(&mut self, count: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        (0..count).map(|_| self.next_f64(what)).collect()
    }

    pub fn finish(mut self) -> Result<(), FormatError> {
        match self.inner.next() {
            None => Ok(()),
            Some(extra) => Err(FormatError::parse(
                self.line,
                format!("unexpected trailing field {extra:?}"),
            )),
        }
    }
}

/// Verifies the trailer checksum and returns the body lines.
pub fn read_container(text: &str) -> Result<Vec<Line<'_>>, FormatError> {
    let total_lines = text.lines().count();
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let (body, trailer) = match trimmed.rfind('\n') {
        Some(pos) => (&text[..=pos], &trimmed[pos + 1..]),
        None => ("", trimmed),
    };
    let stored = trailer.strip_prefix("checksum ").ok_or_else(|| {
        FormatError::parse(
            total_lines.max(1),
            "missing checksum trailer (truncated file?)",
        )
    })?;
    let stored = u64::from_str_radix(stored.trim(), 16)
        .map_err(|_| FormatError::parse(total_lines, "malformed checksum trailer"))?;
    let computed = fnv1a(body.as_bytes());
    if stored != computed {
        return Err(FormatError::Integrity { stored, computed });
    }
    Ok(body
        .lines()
        .enumerate()
        .map(|(i, text)| Line {
            number: i + 1,
            text,
        })
        .collect())
}
