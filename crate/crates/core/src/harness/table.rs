//! `n\T` grids of `mean(std)` cells, as CSV or markdown.

use serde::Serialize;

use super::config::Method;
use super::montecarlo::MonteCarloTable;
use crate::{Error, Result};

/// Marker for cells with too many failed replications.
pub const INVALID: &str = "−";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CellText {
    Value { mean: f64, std: f64 },
    Invalid,
    /// `(n, T)` not part of the experiment.
    Missing,
}

impl CellText {
    fn render(&self) -> String {
        match self {
            CellText::Value { mean, std } => format!("{mean:.3}({std:.3})"),
            CellText::Invalid => INVALID.to_string(),
            CellText::Missing => String::new(),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(CellText::Missing);
        }
        if s == INVALID {
            return Ok(CellText::Invalid);
        }
        let bad = || Error::Input(format!("malformed table cell {s:?}"));
        let (m, rest) = s.split_once('(').ok_or_else(bad)?;
        let sd = rest.strip_suffix(')').ok_or_else(bad)?;
        Ok(CellText::Value {
            mean: m.parse().map_err(|_| bad())?,
            std: sd.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderedTable {
    pub ns: Vec<usize>,
    pub ts: Vec<usize>,
    /// `cells[row of n][column of T]`.
    pub cells: Vec<Vec<CellText>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl RenderedTable {
    pub fn from_table(table: &MonteCarloTable, method: Method) -> Self {
        let cells = table
            .ns
            .iter()
            .map(|&n| {
                table
                    .ts
                    .iter()
                    .map(|&t| match table.cell(n, t, method) {
                        None => CellText::Missing,
                        Some(c) if !c.valid => CellText::Invalid,
                        Some(c) => CellText::Value {
                            mean: round3(c.mean.expect("valid cell has a mean")),
                            std: round3(c.std.expect("valid cell has a std")),
                        },
                    })
                    .collect()
            })
            .collect();
        Self {
            ns: table.ns.clone(),
            ts: table.ts.clone(),
            cells,
        }
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str("n\\T");
                for t in &self.ts {
                    out.push_str(&format!(",{t}"));
                }
                out.push('\n');
                for (n, row) in self.ns.iter().zip(&self.cells) {
                    out.push_str(&n.to_string());
                    for c in row {
                        out.push(',');
                        out.push_str(&c.render());
                    }
                    out.push('\n');
                }
            }
            Format::Markdown => {
                out.push_str("| n\\T |");
                for t in &self.ts {
                    out.push_str(&format!(" {t} |"));
                }
                out.push_str("\n|---|");
                out.push_str(&"---|".repeat(self.ts.len()));
                out.push('\n');
                for (n, row) in self.ns.iter().zip(&self.cells) {
                    out.push_str(&format!("| {n} |"));
                    for c in row {
                        out.push_str(&format!(" {} |", c.render()));
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Input("empty table".into()))?;
        let mut head = header.split(',');
        if head.next() != Some("n\\T") {
            return Err(Error::Input("table header must start with n\\T".into()));
        }
        let ts = head
            .map(|t| t.parse().map_err(|_| Error::Input(format!("bad T label {t:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        let (mut ns, mut cells) = (Vec::new(), Vec::new());
        for line in lines.filter(|l| !l.is_empty()) {
            let mut parts = line.split(',');
            let n = parts.next().unwrap_or("");
            ns.push(n.parse().map_err(|_| Error::Input(format!("bad n label {n:?}")))?);
            let row = parts.map(CellText::parse).collect::<Result<Vec<_>>>()?;
            if row.len() != ts.len() {
                return Err(Error::Input(format!("row for n = {n} has {} cells, expected {}", row.len(), ts.len())));
            }
            cells.push(row);
        }
        Ok(Self { ns, ts, cells })
    }
}

fn round3(x: f64) -> f64 {
    format!("{x:.3}").parse().expect("formatted float parses")
}

/// Renders one method's grid.
pub fn emit_table(table: &MonteCarloTable, method: Method, format: Format) -> String {
    RenderedTable::from_table(table, method).render(format)
}
