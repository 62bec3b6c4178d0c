//! Text output: PFS and density CSVs, report JSON.

use std::io::Write;

use serde::Serialize;

use crate::experiment::DensityBin;
use crate::pfs::PfsRecord;
use crate::scalar::Scalar;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const PFS_HEADER: &str = "respondent_id,source,r,G,G_star,U3,ZU3,valid";
pub const DENSITY_HEADER: &str = "measure,group,bin_left,bin_right,count";

/// Formats `x` like C's `%g` with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    const P: i32 = 6;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // exponent after rounding to P significant digits
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..P).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// File-name token for a pollution level: four decimals, trailing zeros trimmed.
pub fn level_token(level: f64) -> String {
    trim_zeros(&format!("{level:.4}")).to_string()
}

fn opt_cell<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| fmt_sig6(x.as_f64()))
}

pub fn write_pfs_csv<T: Scalar, W: Write>(records: &[PfsRecord<T>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{PFS_HEADER}")?;
    for rec in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            rec.respondent_id,
            rec.source,
            rec.r,
            rec.g,
            opt_cell(rec.g_star),
            opt_cell(rec.u3),
            opt_cell(rec.zu3),
            rec.valid
        )?;
    }
    w.flush()
}

/// Bin edges use the shortest representation that reads back exactly.
pub fn write_density_csv<W: Write>(bins: &[DensityBin], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{DENSITY_HEADER}")?;
    for b in bins {
        writeln!(
            w,
            "{},{},{},{},{}",
            b.measure, b.group, b.bin_left, b.bin_right, b.count
        )?;
    }
    w.flush()
}

/// Top-level JSON document written by the pipelines.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub tool_version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub report: &'a R,
}

impl<'a, C: Serialize, R: Serialize> Envelope<'a, C, R> {
    pub fn new(command: &'a str, config: &'a C, report: &'a R) -> Self {
        Self {
            tool_version: TOOL_VERSION,
            command,
            config,
            report,
        }
    }
}

/// Pretty JSON with a trailing newline. Field order follows the struct
/// definitions, so equal values always give equal bytes.
pub fn to_json<S: Serialize>(value: &S) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfs::Measure;
    use crate::response::Source;

    #[test]
    fn sig6_matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (1.0 / 3.0, "0.333333"),
            (2.0 / 3.0, "0.666667"),
            (-1.519_109_8, "-1.51911"),
            (123_456.0, "123456"),
            (1_234_567.0, "1.23457e+06"),
            (0.000_123_456_7, "0.000123457"),
            (0.000_012_345_67, "1.23457e-05"),
            (999_999.5, "1e+06"),
            (0.1, "0.1"),
            (100.0, "100"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_sig6(x), s, "{x}");
        }
    }

    #[test]
    fn level_tokens() {
        assert_eq!(level_token(0.05), "0.05");
        assert_eq!(level_token(0.1), "0.1");
        assert_eq!(level_token(0.25), "0.25");
        assert_eq!(level_token(45.0 / 976.0), "0.0461");
    }

    #[test]
    fn pfs_csv_leaves_undefined_cells_empty() {
        let recs = vec![
            PfsRecord::<f64> {
                respondent_id: "h1".into(),
                source: Source::Human,
                r: 2,
                g: 1,
                g_star: Some(0.25),
                u3: Some(1.0 / 3.0),
                zu3: Some(-0.5),
                valid: true,
            },
            PfsRecord::<f64> {
                respondent_id: "a1".into(),
                source: Source::Agent("x".into()),
                r: 0,
                g: 0,
                g_star: None,
                u3: None,
                zu3: None,
                valid: false,
            },
        ];
        let mut out = Vec::new();
        write_pfs_csv(&recs, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "respondent_id,source,r,G,G_star,U3,ZU3,valid\n\
             h1,human,2,1,0.25,0.333333,-0.5,true\n\
             a1,agent:x,0,0,,,,false\n"
        );
    }

    #[test]
    fn density_csv_rows() {
        let bins = vec![DensityBin {
            measure: Measure::GStar,
            group: "human".into(),
            bin_left: 0.0,
            bin_right: 0.125,
            count: 3,
        }];
        let mut out = Vec::new();
        write_density_csv(&bins, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "measure,group,bin_left,bin_right,count\nG_star,human,0,0.125,3\n"
        );
    }
}
