//! CSV and JSON writers. Every float is written with 12 significant digits.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::Serialize;
use serde_json::Value;

use crate::backtest::{BacktestResult, WindowSchedule};
use crate::error::{Error, Result};
use crate::frontier::FrontierPoint;
use crate::metrics::{Metric, MetricsReport, RankTable};
use crate::scalar::{to_f64, Scalar};

/// Rounds to 12 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Shortest decimal form of `v` rounded to 12 significant digits.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        let r = round_sig(v);
        if r == 0.0 {
            "0".into()
        } else if (1e-5..1e15).contains(&r.abs()) {
            format!("{r}")
        } else {
            format!("{r:e}")
        }
    }
}

fn fmt<T: Scalar>(v: T) -> String {
    format_value(to_f64(v))
}

fn fmt_opt<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_owned(), fmt)
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().unwrap_or(f64::NAN);
            serde_json::Number::from_f64(round_sig(f)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => {
            Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect())
        }
        other => other,
    }
}

/// Serialises `v` to JSON with every float rounded; non-finite values become `null`.
pub fn to_json<S: Serialize>(v: &S) -> Result<Value> {
    Ok(round_value(serde_json::to_value(v)?))
}

pub fn write_json<W: Write, S: Serialize>(mut w: W, v: &S) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, &to_json(v)?)?;
    writeln!(w)?;
    Ok(())
}

fn weights_json<T: Scalar>(w: &[T]) -> String {
    let parts: Vec<String> = w.iter().map(|&v| fmt(v)).collect();
    format!("[{}]", parts.join(","))
}

pub fn write_surface_csv<W: Write, T: Scalar>(w: W, points: &[FrontierPoint<T>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "alpha",
        "beta",
        "eta",
        "z",
        "variance",
        "var_risk",
        "exp_return",
        "n_assets",
        "weights",
    ])?;
    for p in points {
        out.write_record([
            format_value(p.alpha),
            format_value(p.beta),
            fmt(p.eta),
            fmt(p.z),
            fmt(p.variance),
            fmt(p.var_risk),
            fmt(p.exp_return),
            p.n_assets.to_string(),
            weights_json(&p.weights),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Wide table: one row per dataset row covered, one column per strategy;
/// cells of missing windows are left empty.
pub fn write_series_csv<W: Write, T: Scalar>(w: W, results: &[BacktestResult<T>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["row".to_owned()];
    header.extend(results.iter().map(|r| r.strategy_id.clone()));
    out.write_record(&header)?;
    let rows: BTreeSet<usize> = results
        .iter()
        .flat_map(|r| r.oos_rows.iter().copied())
        .collect();
    let mut cursors = vec![0usize; results.len()];
    for row in rows {
        let mut rec = vec![row.to_string()];
        for (r, c) in results.iter().zip(cursors.iter_mut()) {
            if r.oos_rows.get(*c) == Some(&row) {
                rec.push(fmt(r.oos_returns[*c]));
                *c += 1;
            } else {
                rec.push(String::new());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Long table of target weights: strategy, window, first holding row, one column per asset.
pub fn write_weights_csv<W: Write, T: Scalar>(
    w: W,
    results: &[BacktestResult<T>],
    asset_names: &[String],
    schedule: &WindowSchedule,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "strategy".to_owned(),
        "window".to_owned(),
        "rebalance_row".to_owned(),
    ];
    header.extend(asset_names.iter().cloned());
    out.write_record(&header)?;
    for r in results {
        let held = r
            .solve_diagnostics
            .iter()
            .filter(|d| d.status != crate::backtest::WindowStatus::Missing)
            .map(|d| d.window);
        for (win, weights) in held.zip(&r.weight_history) {
            let mut rec = vec![
                r.strategy_id.clone(),
                win.to_string(),
                schedule.windows[win].out_start.to_string(),
            ];
            rec.extend(weights.iter().map(|&v| fmt(v)));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Metrics as rows, strategies as columns; undefined values are written as `NA`.
pub fn write_metrics_csv<W: Write, T: Scalar>(
    w: W,
    reports: &[(String, MetricsReport<T>)],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["metric".to_owned()];
    header.extend(reports.iter().map(|(id, _)| id.clone()));
    out.write_record(&header)?;
    for m in Metric::ALL {
        let mut rec = vec![m.name().to_owned()];
        rec.extend(reports.iter().map(|(_, r)| fmt_opt(m.value(r))));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ranks_csv<W: Write>(w: W, table: &RankTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["metric".to_owned()];
    header.extend(table.strategies.iter().cloned());
    out.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![row.metric.name().to_owned()];
        rec.extend(row.ranks.iter().map(|r| r.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a series table as written by [`write_series_csv`]. A leading `row`
/// column is ignored and empty cells are skipped.
pub fn read_series_csv<T: Scalar, R: Read>(r: R) -> Result<Vec<(String, Vec<T>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let skip = usize::from(
        header
            .first()
            .is_some_and(|h| h.eq_ignore_ascii_case("row")),
    );
    let mut cols: Vec<(String, Vec<T>)> = header[skip..]
        .iter()
        .map(|h| (h.clone(), Vec::new()))
        .collect();
    if cols.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            message: "no strategy columns".into(),
        });
    }
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (j, cell) in rec.iter().enumerate().skip(skip) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: i + 2,
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            let v = T::from_f64(v)
                .ok_or_else(|| Error::Domain(format!("value {v} not representable")))?;
            cols[j - skip].1.push(v);
        }
    }
    Ok(cols)
}
