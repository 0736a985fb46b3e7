use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

/// `x` with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// A CSV table whose rows all carry `replica` and `substream` columns.
pub struct Table {
    header: Vec<String>,
    rows: Vec<String>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        let mut header = vec!["replica".to_string(), "substream".to_string()];
        header.extend(columns.iter().map(|c| c.as_ref().to_string()));
        Table { header, rows: vec![] }
    }

    pub fn push(&mut self, replica: &str, substream: &str, cells: &[Cell]) {
        assert_eq!(cells.len() + 2, self.header.len(), "row width");
        let mut line = vec![replica.to_string(), substream.to_string()];
        line.extend(cells.iter().map(Cell::render));
        self.rows.push(line.join(","));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(f, "{r}")?;
        }
        f.flush()
    }
}

pub enum Cell {
    F(f64),
    U(u64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::U(x) => x.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

pub fn floats(xs: &[f64]) -> Vec<Cell> {
    xs.iter().map(|x| Cell::F(*x)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }
}
