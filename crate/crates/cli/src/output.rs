use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

/// Numeric table written as CSV or as a JSON array of row objects.
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                write!(s, "{v:?}").expect("write to string");
            }
            s.push('\n');
        }
        s
    }

    fn json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), serde_json::json!(v)))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Output directory plus table format.
pub struct Sink {
    pub dir: PathBuf,
    pub format: Format,
}

impl Sink {
    pub fn new(dir: &Path, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            format,
        })
    }

    /// Writes `<stem>.csv` or `<stem>.json` and returns the file name.
    pub fn table(&self, stem: &str, table: &Table) -> Result<String, CliError> {
        let (name, body) = match self.format {
            Format::Csv => (format!("{stem}.csv"), table.csv()),
            Format::Json => (format!("{stem}.json"), pretty(&table.json())?),
        };
        fs::write(self.dir.join(&name), body)?;
        Ok(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        fs::write(self.dir.join(name), pretty(value)?)?;
        Ok(())
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_layouts() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0, 0.5]);
        t.push(vec![-2.0, 1e-20]);
        assert_eq!(t.csv(), "a,b\n1.0,0.5\n-2.0,1e-20\n");
        let j = t.json();
        assert_eq!(j[1]["a"], serde_json::json!(-2.0));
        assert_eq!(j.as_array().unwrap().len(), 2);
    }
}
