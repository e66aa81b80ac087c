//! Rectangular result tables written as CSV.

use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Real(f64),
    Int(i64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            // `Display` for f64 prints the shortest string that parses back exactly.
            Cell::Real(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(o: Option<T>) -> Self {
        o.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(CliError::Table(format!("row has {} cells, table has {} columns", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Index of a named column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Real values of a column; non-numeric cells become `None`.
    pub fn reals(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.column(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Real(x) => Some(*x),
                    Cell::Int(n) => Some(*n as f64),
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| CliError::io(path, e))
    }

    /// Reads a CSV back. Cells that parse as integers or reals become numbers.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns: Vec<String> =
            r.headers().map_err(|e| CliError::Table(e.to_string()))?.iter().map(String::from).collect();
        let mut table = Self { columns, rows: Vec::new() };
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Table(e.to_string()))?;
            let row = rec
                .iter()
                .map(|s| {
                    if s.is_empty() {
                        Cell::Empty
                    } else if let Ok(i) = s.parse::<i64>() {
                        Cell::Int(i)
                    } else if let Ok(x) = s.parse::<f64>() {
                        Cell::Real(x)
                    } else {
                        Cell::Text(s.to_string())
                    }
                })
                .collect();
            table.push(row)?;
        }
        Ok(table)
    }
}
