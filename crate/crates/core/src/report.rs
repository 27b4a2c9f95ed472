//! Report emission: JSON lines or CSV.

use std::io::Write;

use crate::error::Result;
use crate::theorems::VerificationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

pub const CSV_HEADER: &str = "case,L,trial,lhs,rhs,ratio";

/// `%.12g`-style rendering.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_row(r: &VerificationReport) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.case,
        r.depth,
        r.trial.unwrap_or(0),
        sig12(r.lhs),
        sig12(r.rhs),
        r.ratio.map(sig12).unwrap_or_default()
    )
}

pub fn write_reports<W: Write>(out: &mut W, reports: &[VerificationReport], format: Format) -> Result<()> {
    match format {
        Format::Json => {
            for r in reports {
                writeln!(out, "{}", serde_json::to_string(r)?)?;
            }
        }
        Format::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in reports {
                writeln!(out, "{}", csv_row(r))?;
            }
        }
    }
    Ok(())
}
