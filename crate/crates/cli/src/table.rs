//! Headed CSV tables with a leading `# meta:` line, for the outputs that are
//! not trajectories.

use std::io::{self, BufRead, Write};

use netsir::Meta;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: Meta,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(meta: Meta, header: &[&str]) -> Self {
        Self {
            meta,
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn get(&self, row: usize, name: &str) -> Option<&str> {
        self.column(name).map(|c| self.rows[row][c].as_str())
    }

    pub fn get_f64(&self, row: usize, name: &str) -> Option<f64> {
        self.get(row, name)?.parse().ok()
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.meta.line())?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush()
    }

    pub fn read<R: BufRead>(mut reader: R) -> Result<Self, CliError> {
        let mut first = String::new();
        reader
            .read_line(&mut first)
            .map_err(|e| CliError::io("reading table", e))?;
        let meta_line = first
            .trim_end()
            .strip_prefix("# meta:")
            .ok_or_else(|| CliError::Config("table does not start with a `# meta:` line".into()))?;
        let meta = Meta::parse_line(meta_line);
        let mut csv = csv::Reader::from_reader(reader);
        let header = csv
            .headers()
            .map_err(|e| CliError::Config(format!("table header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = csv
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("table row: {e}")))?;
        Ok(Self { meta, header, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_commas_and_floats() {
        let mut t = Table::new(Meta::new().with("seed", 3), &["dist", "x"]);
        t.push(vec!["gamma:shape=3,rate=2".into(), (0.1f64 + 0.2).to_string()]);
        t.push(vec!["exp:rate=1".into(), 1e-300.to_string()]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = Table::read(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get_f64(0, "x"), Some(0.1 + 0.2));
    }
}
