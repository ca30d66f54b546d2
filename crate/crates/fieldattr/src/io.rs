//! CSV formats for price panels and dated series.
//!
//! Price files are wide: a `date` column followed by one column per ticker,
//! with an empty cell for a missing close. Series files have two columns,
//! `date` and a value column whose header becomes the series label; rows with
//! an empty value are skipped. Dates are ISO `YYYY-MM-DD`.

use std::io::{Read, Write};
use std::path::Path;

use fieldattr_core::market::ReturnPanel;
use fieldattr_core::{Date, ObservableSeries};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub tickers: Vec<String>,
    pub dates: Vec<Date>,
    /// `prices[i][t]` for ticker `i` on `dates[t]`.
    pub prices: Vec<Vec<Option<f64>>>,
}

impl PriceTable {
    pub fn to_panel(&self) -> Result<ReturnPanel> {
        Ok(ReturnPanel::from_prices(self.tickers.clone(), self.dates.clone(), &self.prices)?)
    }
}

pub fn parse_date(s: &str) -> std::result::Result<Date, String> {
    Date::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

fn parse_value(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| format!("bad number {s:?}: {e}"))
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| AppError::input(path, e))
}

pub fn read_prices_from<R: Read>(reader: R) -> std::result::Result<PriceTable, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err("expected a `date` column followed by ticker columns".into());
    }
    let tickers: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut dates = Vec::new();
    let mut prices = vec![Vec::new(); tickers.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != header.len() {
            return Err(format!("row {}: expected {} fields, got {}", line + 2, header.len(), rec.len()));
        }
        dates.push(parse_date(&rec[0]).map_err(|e| format!("row {}: {e}", line + 2))?);
        for (i, cell) in rec.iter().skip(1).enumerate() {
            prices[i].push(parse_value(cell).map_err(|e| format!("row {}: {e}", line + 2))?);
        }
    }
    Ok(PriceTable { tickers, dates, prices })
}

pub fn read_prices(path: &Path) -> Result<PriceTable> {
    read_prices_from(open(path)?).map_err(|m| AppError::input(path, m))
}

pub fn write_prices_to<W: Write>(writer: W, tickers: &[String], dates: &[Date], prices: &[Vec<f64>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![String::from("date")];
    header.extend(tickers.iter().cloned());
    w.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut row = vec![d.to_string()];
        row.extend(prices.iter().map(|p| p[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn read_series_from<R: Read>(reader: R) -> std::result::Result<ObservableSeries, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.len() != 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err("expected two columns: `date` and a value column".into());
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let d = parse_date(&rec[0]).map_err(|e| format!("row {}: {e}", line + 2))?;
        if let Some(v) = parse_value(&rec[1]).map_err(|e| format!("row {}: {e}", line + 2))? {
            dates.push(d);
            values.push(v);
        }
    }
    ObservableSeries::new(dates, values, &header[1]).map_err(|e| e.to_string())
}

pub fn read_series(path: &Path) -> Result<ObservableSeries> {
    read_series_from(open(path)?).map_err(|m| AppError::input(path, m))
}

pub fn write_series_to<W: Write>(writer: W, series: &ObservableSeries) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", series.label.as_str()])?;
    for (d, v) in series.dates.iter().zip(&series.values) {
        w.write_record([d.to_string(), v.to_string()])?;
    }
    w.flush()
}

pub fn write_series(path: &Path, series: &ObservableSeries) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|source| AppError::Output { path: path.into(), source })?;
    write_series_to(f, series).map_err(|source| AppError::Output { path: path.into(), source })
}

pub fn write_prices(path: &Path, tickers: &[String], dates: &[Date], prices: &[Vec<f64>]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|source| AppError::Output { path: path.into(), source })?;
    write_prices_to(f, tickers, dates, prices).map_err(|source| AppError::Output { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prices_with_gap() {
        let text = "date,AAA,BBB\n2020-01-02,10,20\n2020-01-03,,21\n";
        let t = read_prices_from(text.as_bytes()).unwrap();
        assert_eq!(t.tickers, ["AAA", "BBB"]);
        assert_eq!(t.prices[0], [Some(10.0), None]);
        assert!(t.to_panel().is_err());
    }

    #[test]
    fn series_round_trip_is_exact() {
        let d = vec![parse_date("2020-01-02").unwrap(), parse_date("2020-01-03").unwrap()];
        let s = ObservableSeries::new(d, vec![0.1 + 0.2, 1e-17], "psi1").unwrap();
        let mut buf = Vec::new();
        write_series_to(&mut buf, &s).unwrap();
        assert_eq!(read_series_from(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn blank_values_are_skipped_and_bad_rows_reported() {
        let s = read_series_from("date,vix\n2020-01-02,12\n2020-01-03,\n2020-01-06,13\n".as_bytes()).unwrap();
        assert_eq!(s.values, [12.0, 13.0]);
        let e = read_series_from("date,vix\n2020-01-02,x\n".as_bytes()).unwrap_err();
        assert!(e.contains("row 2"));
        assert!(read_series_from("date,vix\n2020-01-03,1\n2020-01-02,2\n".as_bytes()).is_err());
    }
}
