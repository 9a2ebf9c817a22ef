//! JSON-lines metrics and the convergence report built from them.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Theta;

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub t: u64,
    pub objective: f64,
    /// `‖θ_t − θ⋆‖₂`, when a reference solution exists.
    pub dist_to_oracle: Option<f64>,
    /// Pushing node; `None` for server-side records.
    pub node_id: Option<usize>,
    pub simulated_time: f64,
    /// Cumulative over the run.
    pub bytes_on_wire: usize,
    /// Parameter checkpoint, logged every `max(1, T/100)` contacts and at the end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Theta>,
}

/// Line-buffered writer that flushes after every record, so a failed run
/// leaves every record written so far on disk.
pub struct MetricsWriter {
    out: BufWriter<File>,
    last_t: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self {
            out: BufWriter::new(File::create(path).map_err(|e| Error::io_at(path, e))?),
            last_t: None,
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        if self.last_t.is_some_and(|t| record.t <= t) {
            return Err(Error::invalid(format!("metrics t must increase, got {} after {:?}", record.t, self.last_t)));
        }
        self.last_t = Some(record.t);
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Parses a metrics file; malformed lines report their 1-based line number.
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    parse_metrics(BufReader::new(File::open(path).map_err(|e| Error::io_at(path, e))?))
}

pub fn parse_metrics(reader: impl BufRead) -> Result<Vec<MetricsRecord>> {
    let mut records: Vec<MetricsRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MetricsRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = records.last() {
            if record.t <= prev.t {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("t = {} does not increase (previous {})", record.t, prev.t),
                });
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::invalid("metrics file has no records"));
    }
    Ok(records)
}

/// Writes `t,objective,dist_to_oracle`, one row per record.
pub fn write_report_csv(records: &[MetricsRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "objective", "dist_to_oracle"])
        .map_err(csv_io)?;
    for r in records {
        let dist = r.dist_to_oracle.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([r.t.to_string(), r.objective.to_string(), dist])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// A fixed-width table of at most `max_rows` evenly spaced records,
/// always including the last one.
pub fn render_table(records: &[MetricsRecord], max_rows: usize) -> String {
    let stride = records.len().div_ceil(max_rows.max(1)).max(1);
    let mut picks: Vec<usize> = (0..records.len()).step_by(stride).collect();
    if picks.last() != Some(&(records.len() - 1)) {
        picks.push(records.len() - 1);
    }
    let mut s = format!("{:>10}  {:>14}  {:>14}  {:>12}  {:>12}\n", "t", "objective", "dist_oracle", "sim_time", "bytes");
    for &i in &picks {
        let r = &records[i];
        let dist = r.dist_to_oracle.map(|d| format!("{d:.6e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:>10}  {:>14.6e}  {:>14}  {:>12.3}  {:>12}",
            r.t, r.objective, dist, r.simulated_time, r.bytes_on_wire
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(t: u64) -> String {
        format!(r#"{{"t":{t},"objective":1.5,"dist_to_oracle":0.25,"node_id":0,"simulated_time":1.0,"bytes_on_wire":10}}"#)
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = parse_metrics("".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no records"));
    }

    #[test]
    fn three_records_three_rows() {
        let text = [line(1), line(2), line(3)].join("\n");
        let records = parse_metrics(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_report_csv(&records, &mut out).unwrap();
        let csv = String::from_utf8(out).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,1.5,0.25");
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = [line(1), "{oops".to_string(), line(3)].join("\n");
        match parse_metrics(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let text = [line(2), line(1)].join("\n");
        assert!(matches!(parse_metrics(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn table_keeps_last_row() {
        let text: Vec<String> = (1..=50).map(line).collect();
        let records = parse_metrics(text.join("\n").as_bytes()).unwrap();
        let table = render_table(&records, 7);
        assert!(table.lines().last().unwrap().trim_start().starts_with("50"));
        assert!(table.lines().count() <= 9);
    }
}
