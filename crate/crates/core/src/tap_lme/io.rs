use std::fmt::Write as _;

use super::{PoolingParams, TokenMatrix};
use crate::error::{Error, Result};

/// One token per line, comma-separated. Blank lines and `#` comments are
/// skipped; errors report the 1-based line number.
pub fn parse_tokens_csv(text: &str) -> Result<TokenMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                match f.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(Error::parse(line_no, format!("non-finite value '{f}'"))),
                    Err(_) => Err(Error::parse(line_no, format!("'{f}' is not a number"))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    line_no,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("token file contains no rows".into()));
    }
    TokenMatrix::from_rows(&rows)
}

pub fn tokens_csv(t: &TokenMatrix) -> String {
    let mut out = String::new();
    for tok in t.tokens() {
        out.push_str(&join(tok, ","));
        out.push('\n');
    }
    out
}

fn join(values: &[f64], sep: &str) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(sep)
}

/// Section headers `W`, `b`, `w`, `lambda_raw`, each followed by its values
/// (one row of `W` per line).
pub fn format_params(p: &PoolingParams) -> String {
    let g = p.width();
    let mut out = String::from("W\n");
    for row in p.weight.chunks_exact(g.max(1)) {
        out.push_str(&join(row, " "));
        out.push('\n');
    }
    let _ = writeln!(out, "b\n{}", join(&p.bias, " "));
    let _ = writeln!(out, "w\n{}", join(&p.score, " "));
    let _ = writeln!(out, "lambda_raw\n{}", p.lambda_raw);
    out
}

pub fn parse_params(text: &str) -> Result<PoolingParams> {
    let mut section: Option<&str> = None;
    let mut weight_rows: Vec<Vec<f64>> = Vec::new();
    let mut bias = None;
    let mut score = None;
    let mut lambda_raw = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if matches!(line, "W" | "b" | "w" | "lambda_raw") {
            section = Some(line);
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("'{f}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match section {
            Some("W") => weight_rows.push(values),
            Some("b") if bias.is_none() => bias = Some(values),
            Some("w") if score.is_none() => score = Some(values),
            Some("lambda_raw") if lambda_raw.is_none() && values.len() == 1 => {
                lambda_raw = Some(values[0])
            }
            Some(s) => return Err(Error::parse(line_no, format!("unexpected data in section '{s}'"))),
            None => return Err(Error::parse(line_no, "data before any section header")),
        }
    }
    let missing = |name: &str| Error::parse(last_line + 1, format!("missing section '{name}'"));
    let bias = bias.ok_or_else(|| missing("b"))?;
    let score = score.ok_or_else(|| missing("w"))?;
    let lambda_raw = lambda_raw.ok_or_else(|| missing("lambda_raw"))?;
    let g = bias.len();
    if weight_rows.len() != g || weight_rows.iter().any(|r| r.len() != g) || score.len() != g {
        return Err(Error::DimensionMismatch(format!(
            "W must be {g}x{g} and w of length {g} to match b"
        )));
    }
    Ok(PoolingParams {
        weight: weight_rows.concat(),
        bias,
        score,
        lambda_raw,
    })
}

pub fn loss_curve_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{e},{l}");
    }
    out
}
