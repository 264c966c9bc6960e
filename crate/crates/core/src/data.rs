//! Return datasets: CSV ingestion, validation and sample statistics.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Matrix};
use crate::scalar::{lit, Scalar};

/// Sampling frequency of a return panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodKind {
    Weekly,
    Daily,
}

impl PeriodKind {
    /// Rows per financial month: 4 weeks or 20 trading days.
    pub fn month_len(self) -> usize {
        match self {
            PeriodKind::Weekly => 4,
            PeriodKind::Daily => 20,
        }
    }

    /// Default in-sample length: 2 years of weeks or 10 months of days.
    pub fn default_in_sample(self) -> usize {
        match self {
            PeriodKind::Weekly => 104,
            PeriodKind::Daily => 200,
        }
    }
}

impl FromStr for PeriodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weekly" => Ok(PeriodKind::Weekly),
            "daily" => Ok(PeriodKind::Daily),
            other => Err(Error::Domain(format!(
                "unknown period kind `{other}` (expected weekly or daily)"
            ))),
        }
    }
}

impl fmt::Display for PeriodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeriodKind::Weekly => "weekly",
            PeriodKind::Daily => "daily",
        })
    }
}

/// Raw parsed table: header plus numeric rows, before panel validation.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnTable<T> {
    pub asset_names: Vec<String>,
    pub rows: Vec<Vec<T>>,
}

/// Parses a return CSV without enforcing the scenario-matrix invariants.
///
/// A leading column whose header is `date` is dropped. Cells must be plain
/// decimals; rows must be complete.
pub fn parse_return_table<T: Scalar, R: Read>(reader: R) -> Result<ReturnTable<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => {
            return Err(Error::Parse {
                row: 1,
                column: 0,
                message: "missing header row".into(),
            })
        }
    };
    let has_date = header.get(0).is_some_and(|h| {
        h.trim_start_matches('\u{feff}')
            .eq_ignore_ascii_case("date")
    });
    let skip = usize::from(has_date);
    let asset_names: Vec<String> = header.iter().skip(skip).map(str::to_owned).collect();
    if asset_names.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 0,
            message: "header has no asset columns".into(),
        });
    }
    let mut rows = Vec::new();
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != asset_names.len() + skip {
            return Err(Error::Parse {
                row: line,
                column: 0,
                message: format!(
                    "expected {} columns, found {}",
                    asset_names.len() + skip,
                    rec.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(asset_names.len());
        for (col, cell) in rec.iter().enumerate().skip(skip) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: col + 1,
                message: format!("`{cell}` is not a decimal number"),
            })?;
            row.push(T::from_f64(v).ok_or_else(|| Error::Parse {
                row: line,
                column: col + 1,
                message: "value not representable".into(),
            })?);
        }
        rows.push(row);
    }
    Ok(ReturnTable { asset_names, rows })
}

/// `T x n` panel of equally likely historical linear returns, oldest row first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScenarioMatrix<T> {
    returns: Matrix<T>,
    asset_names: Vec<String>,
    period_kind: PeriodKind,
}

impl<T: Scalar> ScenarioMatrix<T> {
    pub fn new(
        returns: Matrix<T>,
        asset_names: Vec<String>,
        period_kind: PeriodKind,
    ) -> Result<Self> {
        if returns.rows() < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 scenarios, got {}",
                returns.rows()
            )));
        }
        if returns.cols() < 1 {
            return Err(Error::Domain("need at least one asset".into()));
        }
        if asset_names.len() != returns.cols() {
            return Err(Error::Dimension(format!(
                "{} asset names for {} columns",
                asset_names.len(),
                returns.cols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &asset_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Domain(format!("duplicate asset name `{name}`")));
            }
        }
        for t in 0..returns.rows() {
            for (k, &v) in returns.row(t).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Domain(format!(
                        "non-finite return at scenario {t}, asset {k}"
                    )));
                }
                if v <= -T::one() {
                    return Err(Error::Domain(format!(
                        "return {v} at scenario {t}, asset {k} is a loss of 100% or more"
                    )));
                }
            }
        }
        Ok(Self {
            returns,
            asset_names,
            period_kind,
        })
    }

    /// Convenience constructor with generated asset names `A1..An`.
    pub fn from_rows(rows: &[Vec<T>], period_kind: PeriodKind) -> Result<Self> {
        let m = Matrix::from_rows(rows)
            .ok_or_else(|| Error::Dimension("ragged scenario rows".into()))?;
        let names = (1..=m.cols()).map(|k| format!("A{k}")).collect();
        Self::new(m, names, period_kind)
    }

    #[inline]
    pub fn num_scenarios(&self) -> usize {
        self.returns.rows()
    }

    #[inline]
    pub fn num_assets(&self) -> usize {
        self.returns.cols()
    }

    pub fn returns(&self) -> &Matrix<T> {
        &self.returns
    }

    pub fn scenario(&self, t: usize) -> &[T] {
        self.returns.row(t)
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn period_kind(&self) -> PeriodKind {
        self.period_kind
    }

    /// Rows `[start, end)` as a new panel.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.num_scenarios() {
            return Err(Error::Domain(format!(
                "window [{start}, {end}) outside 0..{}",
                self.num_scenarios()
            )));
        }
        let n = self.num_assets();
        let data = self.returns.as_slice()[start * n..end * n].to_vec();
        Self::new(
            Matrix::from_row_major(end - start, n, data),
            self.asset_names.clone(),
            self.period_kind,
        )
    }

    /// Writes the panel as CSV with shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.asset_names)?;
        for t in 0..self.num_scenarios() {
            w.write_record(self.scenario(t).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads and validates a return panel from a CSV file.
pub fn load_returns<T: Scalar>(
    path: impl AsRef<Path>,
    period_kind: PeriodKind,
) -> Result<ScenarioMatrix<T>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_returns(file, period_kind)
}

/// Reader-based variant of [`load_returns`].
pub fn read_returns<T: Scalar, R: Read>(
    reader: R,
    period_kind: PeriodKind,
) -> Result<ScenarioMatrix<T>> {
    let table = parse_return_table::<T, _>(reader)?;
    if table.rows.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 data rows, found {}",
            table.rows.len()
        )));
    }
    let m = Matrix::from_rows(&table.rows).expect("row widths checked during parsing");
    ScenarioMatrix::new(m, table.asset_names, period_kind)
}

/// Sample mean vector and population covariance of a scenario panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AssetStats<T> {
    pub mu: Vec<T>,
    pub sigma: Matrix<T>,
}

impl<T: Scalar> AssetStats<T> {
    pub fn num_assets(&self) -> usize {
        self.mu.len()
    }

    /// Portfolio variance `x' Sigma x`.
    pub fn variance(&self, x: &[T]) -> T {
        self.sigma.quad_form(x)
    }

    /// Portfolio expected return `mu' x`.
    pub fn expected_return(&self, x: &[T]) -> T {
        crate::scalar::dot(&self.mu, x)
    }

    pub fn max_mean(&self) -> T {
        self.mu.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_mean(&self) -> T {
        self.mu.iter().copied().fold(T::infinity(), T::min)
    }

    /// Checks symmetry (1e-12 absolute) and positive semidefiniteness
    /// (smallest eigenvalue at least `-1e-9 * trace`).
    pub fn check_psd(&self) -> Result<()> {
        check_psd(&self.sigma)
    }
}

pub(crate) fn check_psd<T: Scalar>(q: &Matrix<T>) -> Result<()> {
    if !q.is_square() {
        return Err(Error::Dimension("quadratic term is not square".into()));
    }
    let asym = q.asymmetry();
    if asym > lit(1e-12) {
        return Err(Error::Model(format!("matrix asymmetric by {asym}")));
    }
    if q.is_zero() {
        return Ok(());
    }
    let floor = -lit::<T>(1e-9) * q.trace().abs();
    let lmin = min_eigenvalue(q);
    if lmin < floor {
        return Err(Error::Model(format!(
            "matrix not positive semidefinite (smallest eigenvalue {lmin})"
        )));
    }
    Ok(())
}

/// Column means and divisor-`T` covariance of the scenario panel.
pub fn compute_stats<T: Scalar>(s: &ScenarioMatrix<T>) -> AssetStats<T> {
    let t_count = s.num_scenarios();
    let n = s.num_assets();
    let tt = T::from_usize(t_count).expect("scenario count fits scalar");
    let mut mu = vec![T::zero(); n];
    for t in 0..t_count {
        for (m, &r) in mu.iter_mut().zip(s.scenario(t)) {
            *m = *m + r;
        }
    }
    for m in &mut mu {
        *m = *m / tt;
    }
    let mut sigma = Matrix::zeros(n, n);
    for t in 0..t_count {
        let row = s.scenario(t);
        for k in 0..n {
            let dk = row[k] - mu[k];
            for j in k..n {
                sigma[(k, j)] = sigma[(k, j)] + dk * (row[j] - mu[j]);
            }
        }
    }
    for k in 0..n {
        for j in k..n {
            let v = sigma[(k, j)] / tt;
            sigma[(k, j)] = v;
            sigma[(j, k)] = v;
        }
    }
    AssetStats { mu, sigma }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_parses_to_one_by_one_table() {
        let t = parse_return_table::<f64, _>("A\n0.01".as_bytes()).unwrap();
        assert_eq!(t.asset_names, vec!["A"]);
        assert_eq!(t.rows, vec![vec![0.01]]);
        // one period is not a usable scenario panel
        assert!(matches!(
            read_returns::<f64, _>("A\n0.01".as_bytes(), PeriodKind::Weekly),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn two_by_two_transcription() {
        let s = read_returns::<f64, _>("A,B\n0.01,0.02\n-0.01,0.00".as_bytes(), PeriodKind::Daily)
            .unwrap();
        assert_eq!(s.num_scenarios(), 2);
        assert_eq!(s.scenario(0), &[0.01, 0.02]);
        assert_eq!(s.scenario(1), &[-0.01, 0.0]);
        assert_eq!(s.asset_names(), &["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn date_column_is_dropped() {
        let csv = "date,A,B\n2020-01-03,0.01,0.02\n2020-01-10,0.03,-0.02\n";
        let s = read_returns::<f64, _>(csv.as_bytes(), PeriodKind::Weekly).unwrap();
        assert_eq!(s.num_assets(), 2);
        assert_eq!(s.scenario(1), &[0.03, -0.02]);
    }

    #[test]
    fn parse_errors_name_row_and_column() {
        let err = read_returns::<f64, _>("A,B\n0.01,0.02\n0.01,x\n".as_bytes(), PeriodKind::Weekly)
            .unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let err = read_returns::<f64, _>("A,B\n0.01,0.02\n0.01\n".as_bytes(), PeriodKind::Weekly)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                row: 3,
                column: 0,
                ..
            }
        ));
    }

    #[test]
    fn total_loss_is_a_domain_error() {
        let err =
            read_returns::<f64, _>("A\n0.01\n-1.0\n".as_bytes(), PeriodKind::Weekly).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn duplicate_names_rejected() {
        let err =
            read_returns::<f64, _>("A,A\n0.01,0.02\n0.0,0.0\n".as_bytes(), PeriodKind::Weekly)
                .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn single_asset_mean_and_variance() {
        let s = ScenarioMatrix::<f64>::from_rows(&[vec![0.01], vec![0.03]], PeriodKind::Weekly)
            .unwrap();
        let st = compute_stats(&s);
        assert!((st.mu[0] - 0.02).abs() < 1e-15);
        // ((0.01-0.02)^2 + (0.03-0.02)^2) / 2
        assert!((st.sigma[(0, 0)] - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn identical_columns_share_covariance() {
        let s = ScenarioMatrix::from_rows(
            &[vec![0.01, 0.01], vec![-0.02, -0.02], vec![0.05, 0.05]],
            PeriodKind::Weekly,
        )
        .unwrap();
        let st = compute_stats(&s);
        assert_eq!(st.sigma[(0, 1)], st.sigma[(0, 0)]);
        st.check_psd().unwrap();
    }

    #[test]
    fn window_slices_rows() {
        let s = ScenarioMatrix::from_rows(
            &[vec![0.01], vec![0.02], vec![0.03], vec![0.04]],
            PeriodKind::Weekly,
        )
        .unwrap();
        let w = s.window(1, 3).unwrap();
        assert_eq!(w.returns().as_slice(), &[0.02, 0.03]);
        assert!(s.window(3, 5).is_err());
    }
}
