use serde::{Deserialize, Serialize};

use mcrx::numerics::format_sig;

use crate::{CliError, CliResult};

/// Digits written per CSV cell.
pub const CSV_SIGNIFICANT_DIGITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Column-labelled numeric table; rows follow the sweep order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_sig(x, CSV_SIGNIFICANT_DIGITS)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite table serializes")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let t: Table = serde_json::from_str(text).map_err(|e| CliError::Config(format!("table json: {e}")))?;
        if let Some(bad) = t.rows.iter().position(|r| r.len() != t.columns.len()) {
            return Err(CliError::Config(format!("table json: row {bad} width differs from header")));
        }
        Ok(t)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    /// Non-finite cells cannot be written as JSON numbers.
    pub fn check_finite(&self) -> CliResult<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(CliError::Numeric(format!(
                    "row {i}, column `{}` is {}",
                    self.columns[j], row[j]
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(vec!["x".into(), "y".into()]);
        t.push(vec![0.1, 2.0217e-3]);
        t.push(vec![1.0 / 3.0, 123456789012.0]);
        t
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y");
        assert_eq!(lines[1], "0.1,0.0020217");
        assert_eq!(lines[2], "0.3333333333,1.23456789e+11");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = sample();
        assert_eq!(Table::from_json(&t.to_json()).unwrap(), t);
        assert!(Table::from_json(r#"{"columns":["a"],"rows":[[1,2]]}"#).is_err());
    }

    #[test]
    fn non_finite_cells_rejected() {
        let mut t = sample();
        t.push(vec![f64::NAN, 0.0]);
        assert!(matches!(t.check_finite(), Err(CliError::Numeric(_))));
    }
}
