//! Plain-text filter banks.
//!
//! ```text
//! filters 2
//! extents 9 15
//! kernel 16 even
//! <9 lines of 15 coefficients>
//! kernel 16 odd
//! ...
//! ```
//!
//! Coefficients use Rust's shortest round-trip formatting, so a bank read back
//! encodes exactly like the one written. Lines starting with `#` are ignored.

use std::path::Path;

use thiserror::Error;

use crate::codec::{CodecError, FilterBank, GaborKernel, Phase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BankFileError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("{0}")]
    Io(String),
}

pub fn bank_to_text(bank: &FilterBank) -> String {
    let (kh, kw) = bank.extents();
    let mut out = format!("filters {}\nextents {kh} {kw}\n", bank.len());
    for k in bank.kernels() {
        out.push_str(&format!("kernel {} {}\n", k.wavelength, k.phase.name()));
        for row in k.coefficients.chunks(kw) {
            let line: Vec<String> = row.iter().map(|c| format!("{c:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn bank_from_text(text: &str) -> Result<FilterBank, BankFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = |line: usize, reason: String| BankFileError::Parse { line, reason };
    let mut header = |key: &str, fields: usize| -> Result<(usize, Vec<usize>), BankFileError> {
        let (n, l) = lines.next().ok_or_else(|| err(0, format!("missing `{key}` line")))?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != fields + 1 || parts[0] != key {
            return Err(err(n, format!("expected `{key}` with {fields} value(s)")));
        }
        let values = parts[1..]
            .iter()
            .map(|p| p.parse().map_err(|_| err(n, format!("bad integer `{p}`"))))
            .collect::<Result<_, _>>()?;
        Ok((n, values))
    };
    let (_, f) = header("filters", 1)?;
    let (ext_line, e) = header("extents", 2)?;
    let (kh, kw) = (e[0], e[1]);
    if kh == 0 || kw == 0 {
        return Err(err(ext_line, "zero kernel extent".into()));
    }
    let mut kernels = Vec::with_capacity(f[0]);
    for _ in 0..f[0] {
        let (n, l) = lines.next().ok_or_else(|| err(0, "missing `kernel` line".into()))?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "kernel" {
            return Err(err(n, "expected `kernel <wavelength> <even|odd>`".into()));
        }
        let wavelength: f64 = parts[1]
            .parse()
            .map_err(|_| err(n, format!("bad wavelength `{}`", parts[1])))?;
        let phase = match parts[2] {
            "even" => Phase::Even,
            "odd" => Phase::Odd,
            other => return Err(err(n, format!("unknown phase `{other}`"))),
        };
        let mut coefficients = Vec::with_capacity(kh * kw);
        for _ in 0..kh {
            let (n, l) = lines.next().ok_or_else(|| err(0, "missing coefficient row".into()))?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|p| p.parse().map_err(|_| err(n, format!("bad coefficient `{p}`"))))
                .collect::<Result<_, _>>()?;
            if row.len() != kw {
                return Err(err(n, format!("expected {kw} coefficients, found {}", row.len())));
            }
            coefficients.extend(row);
        }
        kernels.push(GaborKernel {
            wavelength,
            phase,
            coefficients,
        });
    }
    if let Some((n, _)) = lines.next() {
        return Err(err(n, "unexpected content after the last kernel".into()));
    }
    Ok(FilterBank::from_kernels(kh, kw, kernels)?)
}

pub fn write_bank(path: &Path, bank: &FilterBank) -> Result<(), BankFileError> {
    super::write_file(path, bank_to_text(bank).as_bytes()).map_err(BankFileError::Io)
}

pub fn read_bank(path: &Path) -> Result<FilterBank, BankFileError> {
    let bytes = super::read_file(path).map_err(BankFileError::Io)?;
    let text = String::from_utf8(bytes).map_err(|_| BankFileError::Io(format!("{}: not UTF-8", path.display())))?;
    bank_from_text(&text)
}
