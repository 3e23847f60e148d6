//! State-matrix CSV interchange: rows are A ports, cells are complex
//! amplitudes written as `re+imj` (e.g. `0.5-0.25j`).

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use schmidt_mesh_core::{ComplexMatrix, StateMatrix};

pub fn matrix_to_csv(m: &ComplexMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|z| format_complex(*z)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn format_complex(z: Complex64) -> String {
    if z.im >= 0.0 || z.im.is_nan() {
        format!("{}+{}j", z.re, z.im)
    } else {
        format!("{}{}j", z.re, z.im)
    }
}

pub fn matrix_from_csv(text: &str) -> Result<ComplexMatrix> {
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let z = parse_complex(cell.trim())
                .with_context(|| format!("line {}: bad cell {cell:?}", lineno + 1))?;
            row.push(z);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!(
                    "line {}: {} cells, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("empty state CSV");
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(ComplexMatrix::from_entries(r, c, rows.into_iter().flatten().collect()).expect("sized"))
}

pub fn state_from_csv(text: &str) -> Result<StateMatrix> {
    let m = matrix_from_csv(text)?;
    StateMatrix::normalized(m).map_err(|e| anyhow::anyhow!("invalid state: {e}"))
}

/// Parses `re+imj` / `re-imj`, tolerating exponent notation in both parts.
pub fn parse_complex(cell: &str) -> Result<Complex64> {
    let body = cell
        .strip_suffix('j')
        .with_context(|| format!("{cell:?} does not end in 'j'"))?;
    // The imaginary part starts at the last sign that is not an exponent sign
    // and not the leading sign of the real part.
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let b = bytes[i];
        if (b == b'+' || b == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
            split = Some(i);
            break;
        }
    }
    let split = split.with_context(|| format!("{cell:?} has no imaginary part"))?;
    let re: f64 = body[..split]
        .parse()
        .with_context(|| format!("bad real part in {cell:?}"))?;
    let im: f64 = body[split..]
        .parse()
        .with_context(|| format!("bad imaginary part in {cell:?}"))?;
    Ok(Complex64::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_exponent_forms() {
        assert_eq!(parse_complex("0.5+0.25j").unwrap(), Complex64::new(0.5, 0.25));
        assert_eq!(parse_complex("-1-2j").unwrap(), Complex64::new(-1.0, -2.0));
        assert_eq!(
            parse_complex("1.5e-3-2.5e-4j").unwrap(),
            Complex64::new(1.5e-3, -2.5e-4)
        );
        assert!(parse_complex("1.0").is_err());
        assert!(parse_complex("j").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let m = ComplexMatrix::from_fn(3, 2, |i, j| {
            Complex64::new(
                (i as f64 - 1.3) * 0.7137129,
                (j as f64 + 0.11) * -1.9e-7,
            )
        });
        let text = matrix_to_csv(&m);
        let back = matrix_from_csv(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(matrix_from_csv("1+0j,2+0j\n3+0j\n").is_err());
    }
}
