use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use sha2::{Digest, Sha256};

use super::{Bar, BarSeries, Session};
use crate::error::{Error, Result};

const HEADER: [&str; 3] = ["ticker", "timestamp", "price"];

#[derive(Debug, Clone)]
pub struct LoadedBars {
    /// One series per ticker, ordered by ticker symbol.
    pub series: Vec<BarSeries>,
    /// Bars outside the session window that were discarded.
    pub dropped_out_of_session: usize,
    /// Hex SHA-256 of the raw file bytes.
    pub digest: String,
}

/// Loads a bars CSV (`ticker,timestamp,price`) and groups it per ticker.
pub fn load_bars(path: impl AsRef<Path>, session: Session) -> Result<LoadedBars> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_bars(bytes.as_slice(), session)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Like [`load_bars`] but from any reader. Row numbers in errors are file
/// line numbers (the header is line 1).
pub fn read_bars<R: Read>(mut reader: R, session: Session) -> Result<LoadedBars> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<reader>", e))?;
    let digest = sha256_hex(&bytes);

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("expected header `ticker,timestamp,price`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut grouped: BTreeMap<String, Vec<Bar>> = BTreeMap::new();
    let mut dropped = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let ticker = &rec[0];
        if ticker.is_empty() {
            return Err(Error::MalformedRow {
                row,
                message: "empty ticker".into(),
            });
        }
        let timestamp: DateTime<Utc> = rec[1].parse().map_err(|e| Error::MalformedRow {
            row,
            message: format!("bad timestamp `{}`: {e}", &rec[1]),
        })?;
        let price: f64 = rec[2].parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("unparseable price `{}`", &rec[2]),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::MalformedRow {
                row,
                message: format!("price must be positive and finite, got {price}"),
            });
        }
        let bars = grouped.entry(ticker.to_string()).or_default();
        if let Some(last) = bars.last() {
            if timestamp <= last.timestamp {
                return Err(Error::MalformedRow {
                    row,
                    message: format!("timestamp {} does not increase for ticker {ticker}", &rec[1]),
                });
            }
        }
        bars.push(Bar { timestamp, price });
    }

    let mut series = Vec::with_capacity(grouped.len());
    for (ticker, bars) in grouped {
        let before = bars.len();
        let kept: Vec<Bar> = bars.into_iter().filter(|b| session.contains(b.timestamp)).collect();
        dropped += before - kept.len();
        series.push(BarSeries {
            ticker,
            session,
            bars: kept,
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} bar(s) outside the session window");
    }
    Ok(LoadedBars {
        series,
        dropped_out_of_session: dropped,
        digest,
    })
}

pub fn write_bars_to<W: Write>(writer: W, series: &[BarSeries]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(HEADER)?;
    let mut ordered: Vec<&BarSeries> = series.iter().collect();
    ordered.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    for s in ordered {
        for b in &s.bars {
            wtr.write_record([
                s.ticker.as_str(),
                &b.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
                &b.price.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Writes the bars CSV format, rows sorted by (ticker, timestamp).
pub fn write_bars(path: impl AsRef<Path>, series: &[BarSeries]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_bars_to(BufWriter::new(file), series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedBars> {
        read_bars(text.as_bytes(), Session::default())
    }

    #[test]
    fn three_rows_one_ticker() {
        let out = load(
            "ticker,timestamp,price\n\
             AAPL,2019-09-30T13:35:00Z,100.0\n\
             AAPL,2019-09-30T13:40:00Z,100.5\n\
             AAPL,2019-09-30T13:45:00Z,101\n",
        )
        .unwrap();
        assert_eq!(out.series.len(), 1);
        assert_eq!(out.series[0].bars.len(), 3);
        assert_eq!(out.dropped_out_of_session, 0);
        assert_eq!(out.digest.len(), 64);
    }

    #[test]
    fn out_of_session_bar_is_dropped_and_counted() {
        // 21:00Z is 17:00 local
        let out = load(
            "ticker,timestamp,price\n\
             AAPL,2019-09-30T13:35:00Z,100.0\n\
             AAPL,2019-09-30T21:00:00Z,100.5\n",
        )
        .unwrap();
        assert_eq!(out.series[0].bars.len(), 1);
        assert_eq!(out.dropped_out_of_session, 1);
    }

    #[test]
    fn duplicate_timestamp_names_the_row() {
        let err = load(
            "ticker,timestamp,price\n\
             AAPL,2019-09-30T13:35:00Z,100.0\n\
             AAPL,2019-09-30T13:35:00Z,100.5\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 3, .. }), "{err}");
    }

    #[test]
    fn unparseable_price_and_short_rows() {
        let err = load("ticker,timestamp,price\nA,2019-09-30T13:35:00Z,abc\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }));
        let err = load("ticker,timestamp,price\nA,2019-09-30T13:35:00Z\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }));
        let err = load("ticker,timestamp,price\nA,2019-09-30T13:35:00Z,-1\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }));
        let err = load("sym,time,px\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }));
    }

    #[test]
    fn write_then_read_roundtrip() {
        let session = Session::default();
        let text = "ticker,timestamp,price\nB,2019-09-30T13:35:00Z,50.125\nA,2019-09-30T13:35:00Z,100.1\n";
        let first = load(text).unwrap();
        let mut buf = Vec::new();
        write_bars_to(&mut buf, &first.series).unwrap();
        let second = read_bars(buf.as_slice(), session).unwrap();
        assert_eq!(first.series, second.series);
    }
}
