//! CSV, binary and JSON output.
//!
//! Floats are written in C `%.12e` style (`1.000000000000e+00`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridField};

const MAGIC: &[u8; 4] = b"KLGF";
const HEADER_LEN: usize = 32;

/// Formats `v` like C's `%.12e`.
pub fn fmt_e12(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

/// One cell of a results table.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(v) => fmt_e12(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Header row plus data rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Whitespace-separated columns with a `#` header, for gnuplot.
    pub fn to_dat(&self) -> String {
        let mut out = format!("# {}\n", self.header.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// `x,y,value` rows for the defined nodes of `fld`.
pub fn field_to_csv(fld: &GridField) -> String {
    let g = fld.grid();
    let mut out = String::from("x,y,value\n");
    for k in 0..g.len() {
        if let Some(v) = fld.get(k) {
            let p = g.point(k);
            out.push_str(&format!("{},{},{}\n", fmt_e12(p.x), fmt_e12(p.y), fmt_e12(v)));
        }
    }
    out
}

pub fn write_field_csv(fld: &GridField, path: &Path) -> Result<()> {
    fs::write(path, field_to_csv(fld))?;
    Ok(())
}

/// Binary dump: 32-byte header then `nx * ny` little-endian `f64` values, row-major
/// in `y`. Undefined nodes are written as NaN.
///
/// Header: `"KLGF"`, `nx` and `ny` as `u32`, then `hx`, `hy`, `x0`, `y0` as `f32`,
/// then four reserved zero bytes.
pub fn field_to_bytes(fld: &GridField) -> Vec<u8> {
    let g = fld.grid();
    let (x0, y0) = (g.x(0), g.y(0));
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    for v in [g.hx(), g.hy(), x0, y0] {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&[0u8; 4]);
    for k in 0..g.len() {
        let v = fld.get(k).unwrap_or(f64::NAN);
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_field_binary(fld: &GridField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&field_to_bytes(fld))?;
    w.flush()?;
    Ok(())
}

/// Reads a dump back onto a rectangle grid with the stored geometry.
pub fn field_from_bytes(bytes: &[u8]) -> Result<GridField> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(LabError::InvalidInput("not a KLGF dump".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    let (nx, ny) = (u32_at(4), u32_at(8));
    let (hx, hy, x0, y0) = (f32_at(12), f32_at(16), f32_at(20), f32_at(24));
    let n = nx
        .checked_mul(ny)
        .ok_or_else(|| LabError::InvalidInput("grid size overflows".into()))?;
    if bytes.len() != HEADER_LEN + 8 * n {
        return Err(LabError::InvalidInput(format!(
            "dump holds {} bytes, expected {}",
            bytes.len(),
            HEADER_LEN + 8 * n
        )));
    }
    let grid = Grid::with_geometry(nx, ny, hx, hy, x0, y0)?;
    let mut values = Vec::with_capacity(n);
    let mut defined = Vec::with_capacity(n);
    for c in bytes[HEADER_LEN..].chunks_exact(8) {
        let v = f64::from_le_bytes(c.try_into().unwrap());
        defined.push(!v.is_nan());
        values.push(if v.is_nan() { 0.0 } else { v });
    }
    GridField::from_parts(&grid, values, defined)
}

pub fn read_field_binary(path: &Path) -> Result<GridField> {
    field_from_bytes(&fs::read(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    #[test]
    fn c_style_exponent() {
        assert_eq!(fmt_e12(1.0), "1.000000000000e+00");
        assert_eq!(fmt_e12(-0.00123), "-1.230000000000e-03");
        assert_eq!(fmt_e12(6.02e123), "6.020000000000e+123");
        assert_eq!(fmt_e12(0.0), "0.000000000000e+00");
    }

    #[test]
    fn table_csv_layout() {
        let mut t = Table::new(&["n", "h", "gap"]);
        t.push(vec![33usize.into(), 0.0625.into(), 1e-5.into()]);
        assert_eq!(t.to_csv(), "n,h,gap\n33,6.250000000000e-02,1.000000000000e-05\n");
    }

    #[test]
    fn field_csv_rows() {
        let g = Grid::new(Rect::unit_square(), 3).unwrap();
        let csv = field_to_csv(&g.sample(|x, y| x + y));
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines[9], "1.000000000000e+00,1.000000000000e+00,2.000000000000e+00");
    }

    #[test]
    fn binary_round_trip() {
        let g = Grid::new(Rect::new(-1.0, 1.0, 0.0, 2.0).unwrap(), 5).unwrap();
        let mut f = g.sample(|x, y| x * y + 0.1);
        f.undefine(3);
        let bytes = field_to_bytes(&f);
        assert_eq!(bytes.len(), 32 + 8 * 25);
        let back = field_from_bytes(&bytes).unwrap();
        assert_eq!(back.grid().nx(), 5);
        assert!(!back.is_defined(3));
        for k in (0..25).filter(|&k| k != 3) {
            assert_eq!(back.values()[k], f.values()[k]);
        }
        assert_eq!(back.grid().x(0), -1.0);
    }

    #[test]
    fn rejects_foreign_bytes() {
        assert!(field_from_bytes(b"NOPE").is_err());
        let mut bytes = field_to_bytes(&Grid::new(Rect::unit_square(), 3).unwrap().sample(|_, _| 0.0));
        bytes.pop();
        assert!(field_from_bytes(&bytes).is_err());
    }
}
