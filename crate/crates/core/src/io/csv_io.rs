//! CSV tables: strategy paths, indifference curves, certification reports.
//!
//! Numbers carry 12 significant digits, lines end in LF, and non-finite
//! values are written as `NA`.

use std::io::{Read, Write};

use crate::error::{GdaError, Result};
use crate::market::StrategyPath;
use crate::surface::{CurvePoint, SurfacePoint};
use crate::verify::CertificationRow;

/// 12 significant digits in scientific notation; `NA` when not finite.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        "NA".to_string()
    }
}

fn parse_number(s: &str, row: usize, col: &str) -> Result<f64> {
    let s = s.trim();
    if s == "NA" {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| GdaError::Parse(format!("row {row}, column {col}: '{s}' is not a number")))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn csv_err(e: csv::Error) -> GdaError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => GdaError::Io(io),
            other => GdaError::Parse(format!("{other:?}")),
        }
    } else {
        GdaError::Parse(e.to_string())
    }
}

/// Header `t,a_1..a_d,pi_1..pi_d,v,y,m,residual` for dimension `d`.
pub fn strategy_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=d).map(|i| format!("a_{i}")));
    h.extend((1..=d).map(|i| format!("pi_{i}")));
    h.extend(["v", "y", "m", "residual"].map(String::from));
    h
}

pub fn write_strategy_csv<W: Write>(w: W, path: &StrategyPath) -> Result<()> {
    let d = path.dim();
    let mut wr = writer(w);
    wr.write_record(strategy_header(d)).map_err(csv_err)?;
    for i in 0..path.len() {
        let mut rec = Vec::with_capacity(2 * d + 5);
        rec.push(format_number(path.grid[i]));
        rec.extend(path.a[i].iter().map(|&x| format_number(x)));
        rec.extend(path.pi[i].iter().map(|&x| format_number(x)));
        for x in [path.v[i], path.y[i], path.m[i], path.residual[i]] {
            rec.push(format_number(x));
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a strategy table written by [`write_strategy_csv`]. The horizon is
/// not stored in the file; it is set to the last time plus the last step,
/// and the caller may overwrite it.
pub fn read_strategy_csv<R: Read>(r: R) -> Result<StrategyPath> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 7 || !(header.len() - 5).is_multiple_of(2) {
        return Err(GdaError::Parse(format!("unexpected strategy header with {} columns", header.len())));
    }
    let d = (header.len() - 5) / 2;
    if header != strategy_header(d) {
        return Err(GdaError::Parse(format!("unexpected strategy header: {}", header.join(","))));
    }
    let mut p = StrategyPath {
        horizon: f64::NAN,
        grid: Vec::new(),
        a: Vec::new(),
        pi: Vec::new(),
        v: Vec::new(),
        y: Vec::new(),
        m: Vec::new(),
        residual: Vec::new(),
        terminal_a: None,
        diagnostics: None,
    };
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(GdaError::Parse(format!("row {} has {} fields, expected {}", row + 1, rec.len(), header.len())));
        }
        let vals: Vec<f64> =
            rec.iter().zip(&header).map(|(s, h)| parse_number(s, row + 1, h)).collect::<Result<_>>()?;
        // Everything but the residual must be a finite number.
        if let Some(k) = vals[..vals.len() - 1].iter().position(|x| !x.is_finite()) {
            return Err(GdaError::Parse(format!("row {}, column {}: value must be finite", row + 1, header[k])));
        }
        let t = vals[0];
        if let Some(&prev) = p.grid.last() {
            if !(t > prev) {
                return Err(GdaError::Parse(format!("row {}: times must increase", row + 1)));
            }
        }
        p.grid.push(t);
        p.a.push(vals[1..=d].to_vec());
        p.pi.push(vals[d + 1..=2 * d].to_vec());
        p.v.push(vals[2 * d + 1]);
        p.y.push(vals[2 * d + 2]);
        p.m.push(vals[2 * d + 3]);
        p.residual.push(vals[2 * d + 4]);
    }
    if p.grid.is_empty() {
        return Err(GdaError::Parse("strategy table has no rows".into()));
    }
    let n = p.grid.len();
    let step = if n > 1 { p.grid[n - 1] - p.grid[n - 2] } else { 1.0 };
    p.horizon = p.grid[n - 1] + step;
    Ok(p)
}

pub fn write_curve_csv<W: Write>(w: W, curve: &[CurvePoint]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["v", "y", "mrs"]).map_err(csv_err)?;
    for c in curve {
        wr.write_record([c.v, c.y, c.mrs].map(format_number)).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_surface_csv<W: Write>(w: W, points: &[SurfacePoint]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["v", "y", "g", "h", "h_x", "h_y", "g_v", "g_y", "m"]).map_err(csv_err)?;
    for p in points {
        wr.write_record([p.x * p.x, p.y, p.g, p.h, p.h_x, p.h_y, p.g_v, p.g_y, p.m].map(format_number))
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_report_csv<W: Write>(w: W, rows: &[CertificationRow]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["t", "k_index", "first_order_coeff", "pass"]).map_err(csv_err)?;
    for r in rows {
        wr.write_record([
            format_number(r.t),
            r.k_index.to_string(),
            format_number(r.report.first_order_coeff),
            r.report.pass.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// `(t, π)` series for one dimension-1 figure curve.
pub fn write_series_csv<W: Write>(w: W, label: &str, path: &StrategyPath) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["series", "t", "pi"]).map_err(csv_err)?;
    for i in 0..path.len() {
        wr.write_record([label.to_string(), format_number(path.grid[i]), format_number(path.pi[i][0])])
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}
