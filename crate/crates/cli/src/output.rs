//! CSV artifacts: a header row, one `#` provenance line, then records.
//! Floats carry 17 significant digits.

use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub provenance: String,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str], provenance: impl Into<String>) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            provenance: provenance.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(&mut out);
            w.write_record(&self.header).map_err(csv_err)?;
            w.flush()?;
        }
        let comment = self.provenance.replace(['\r', '\n'], " ");
        out.extend_from_slice(format!("# {comment}\r\n").as_bytes());
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(&mut out);
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
            }
            w.flush()?;
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = self.render()?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(bytes)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_when_empty() {
        let t = CsvTable::new(&["x", "y"], "config=abc");
        assert_eq!(t.render().unwrap(), b"x,y\r\n# config=abc\r\n");
    }

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
        let mut t = CsvTable::new(&["a", "b"], "p");
        t.push(vec![Cell::from(1.0), Cell::from("q,r")]);
        assert_eq!(t.render().unwrap(), b"a,b\r\n# p\r\n1.0000000000000000e0,\"q,r\"\r\n");
    }
}
