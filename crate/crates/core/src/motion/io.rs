//! Plain-text motion files.
//!
//! ```text
//! mmdm-motion v1 <T> <J> <d>
//! <t> <j> <v0> ... <v(d-1)> <m>
//! ```
//!
//! One line per cell, frame-major. Values carry 17 significant digits so the
//! round trip is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{MotionError, MotionSequence, Result};

const MAGIC: &str = "mmdm-motion";
const VERSION: &str = "v1";

pub fn write_motion(m: &MotionSequence) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION} {} {} {}", m.frames(), m.joints(), m.dim());
    for t in 0..m.frames() {
        for j in 0..m.joints() {
            let _ = write!(s, "{t} {j}");
            for v in m.cell(t, j) {
                let _ = write!(s, " {v:.16e}");
            }
            let _ = writeln!(s, " {}", u8::from(m.is_masked(t, j)));
        }
    }
    s
}

fn format_err(line: usize, reason: impl Into<String>) -> MotionError {
    MotionError::Format {
        line,
        reason: reason.into(),
    }
}

fn parse_count(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| format_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| format_err(line, format!("invalid {what} `{tok}`")))
}

pub fn parse_motion(text: &str) -> Result<MotionSequence> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format_err(1, "empty file"))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some(MAGIC) {
        return Err(format_err(1, "missing mmdm-motion header"));
    }
    match tok.next() {
        Some(VERSION) => {}
        Some(v) => return Err(format_err(1, format!("unsupported version `{v}`"))),
        None => return Err(format_err(1, "missing version")),
    }
    let frames = parse_count(tok.next(), 1, "frame count")?;
    let joints = parse_count(tok.next(), 1, "joint count")?;
    let dim = parse_count(tok.next(), 1, "feature dimension")?;
    if tok.next().is_some() {
        return Err(format_err(1, "trailing header fields"));
    }
    if frames == 0 || joints == 0 || dim == 0 {
        return Err(format_err(1, "dimensions must be positive"));
    }
    let cells = frames * joints;
    let mut values = Vec::with_capacity(cells * dim);
    let mut mask = Vec::with_capacity(cells);
    for k in 0..cells {
        let line_no = k + 2;
        let line = lines
            .next()
            .ok_or_else(|| format_err(line_no, format!("truncated: expected {cells} records")))?;
        let mut tok = line.split_whitespace();
        let t = parse_count(tok.next(), line_no, "frame index")?;
        let j = parse_count(tok.next(), line_no, "joint index")?;
        if (t, j) != (k / joints, k % joints) {
            return Err(format_err(
                line_no,
                format!("expected record {} {}, found {t} {j}", k / joints, k % joints),
            ));
        }
        for _ in 0..dim {
            let v = tok
                .next()
                .ok_or_else(|| format_err(line_no, "too few values"))?;
            let v: f64 = v
                .parse()
                .map_err(|_| format_err(line_no, format!("invalid value `{v}`")))?;
            if !v.is_finite() {
                return Err(format_err(line_no, "non-finite value"));
            }
            values.push(v);
        }
        match tok.next() {
            Some("0") => mask.push(false),
            Some("1") => mask.push(true),
            Some(other) => return Err(format_err(line_no, format!("invalid mask bit `{other}`"))),
            None => return Err(format_err(line_no, "missing mask bit")),
        }
        if tok.next().is_some() {
            return Err(format_err(line_no, "too many values"));
        }
    }
    if let Some((i, _)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(format_err(cells + 2 + i, "unexpected trailing data"));
    }
    MotionSequence::with_mask(frames, joints, dim, values, mask)
}

pub fn save_motion(m: &MotionSequence, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_motion(m))?;
    Ok(())
}

pub fn load_motion(path: impl AsRef<Path>) -> Result<MotionSequence> {
    let text = std::fs::read_to_string(path)?;
    parse_motion(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_parses() {
        let mut text = String::from("mmdm-motion v1 10 17 3\n");
        for t in 0..10 {
            for j in 0..17 {
                text.push_str(&format!("{t} {j} 0.5 -1 2e-3 0\n"));
            }
        }
        let m = parse_motion(&text).unwrap();
        assert_eq!(m.shape(), (10, 17, 3));
        assert_eq!(m.cell(3, 4), &[0.5, -1.0, 0.002]);
    }

    #[test]
    fn truncation_reports_line() {
        let m = MotionSequence::zeros(2, 3, 2).unwrap();
        let text = write_motion(&m);
        let cut: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        match parse_motion(&cut) {
            Err(MotionError::Format { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header() {
        assert!(matches!(parse_motion(""), Err(MotionError::Format { line: 1, .. })));
        assert!(matches!(
            parse_motion("mmdm-motion v2 1 1 1\n"),
            Err(MotionError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn extreme_values_round_trip() {
        let vals = vec![f64::MIN_POSITIVE, -f64::MAX, 1.0 / 3.0, -0.0, 5e-324, 0.1 + 0.2];
        let mut m = MotionSequence::new(1, 6, 1, vals).unwrap();
        m.set_mask(vec![true, false, true, false, false, true]).unwrap();
        let back = parse_motion(&write_motion(&m)).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.values().iter().zip(m.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
