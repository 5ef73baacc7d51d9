//! Ordered rows rendered as JSON lines or CSV, reals at 17 significant digits.

use brw_core::estimators::{sig17, Sig17};
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(Sig17),
    Nums(Vec<Sig17>),
    Int(u64),
    Ints(Vec<u32>),
    Text(String),
    Bool(bool),
    Shape { d: u32, n: u32 },
    Null(Option<()>),
}

impl Cell {
    pub fn num(x: f64) -> Self {
        Cell::Num(Sig17(x))
    }

    pub fn nums(xs: &[f64]) -> Self {
        Cell::Nums(xs.iter().map(|&x| Sig17(x)).collect())
    }

    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Null(None), Cell::num)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => sig17(x.0),
            Cell::Nums(xs) => xs.iter().map(|x| sig17(x.0)).collect::<Vec<_>>().join(";"),
            Cell::Int(i) => i.to_string(),
            Cell::Ints(is) => is.iter().map(u32::to_string).collect::<Vec<_>>().join(";"),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Shape { d, n } => format!("{d};{n}"),
            Cell::Null(_) => String::new(),
        }
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x.into())
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

/// Named cells in output order.
pub type Row = Vec<(&'static str, Cell)>;

struct Object<'a>(&'a Row);

impl Serialize for Object<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

pub fn json_line(row: &Row) -> String {
    serde_json::to_string(&Object(row)).expect("rows serialize") + "\n"
}

/// Header from the first row's names, then one line per row.
pub fn csv(rows: &[Row]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut out = first.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(",") + "\n";
    for row in rows {
        out.push_str(&(row.iter().map(|(_, c)| c.csv()).collect::<Vec<_>>().join(",") + "\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_formats() {
        let rows = vec![vec![("d", Cell::from(2u32)), ("x", Cell::num(0.5)), ("y", Cell::opt(None))]];
        assert_eq!(json_line(&rows[0]), "{\"d\":2,\"x\":5.0000000000000000e-1,\"y\":null}\n");
        assert_eq!(csv(&rows), "d,x,y\n2,5.0000000000000000e-1,\n");
    }
}
