//! Error metrics between a model field map and a reference map.
//!
//! Both maps are shifted so that their own peak sits at 0 dB, the reference
//! is resampled onto the model lattice, and the per-cell absolute dB
//! difference is averaged. The mean of `|dB|` is the geometric mean of the
//! linear magnitude ratios expressed in dB.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::fieldmap::{format_sig9, FieldGrid};
use crate::{Error, Result};

/// Relative spacing tolerance when checking that an axis is uniform.
const SPACING_TOLERANCE: f64 = 1e-6;

/// A field map on a regular lattice. Cells may be missing (masked), which is
/// how an excluded antenna cell comes back from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct DbMap {
    /// Ascending x coordinates, m.
    pub xs: Vec<f64>,
    /// Ascending y coordinates, m.
    pub ys: Vec<f64>,
    /// Row-major (y outer).
    pub mag_db: Vec<Option<f64>>,
    pub complex: Option<Vec<Option<Complex64>>>,
}

impl DbMap {
    fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.xs.len() + ix
    }

    pub fn cells(&self) -> usize {
        self.mag_db.len()
    }

    pub fn present(&self) -> usize {
        self.mag_db.iter().filter(|v| v.is_some()).count()
    }

    pub fn peak_db(&self) -> Option<f64> {
        self.mag_db.iter().flatten().copied().reduce(f64::max)
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.mag_db[self.index(ix, iy)]
    }

    /// Adds `offset_db` to every present cell.
    pub fn offset(&self, offset_db: f64) -> Self {
        let mut out = self.clone();
        for v in out.mag_db.iter_mut().flatten() {
            *v += offset_db;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        match self.complex {
            Some(_) => writeln!(w, "x_mm,y_mm,mag_db,re,im")?,
            None => writeln!(w, "x_mm,y_mm,mag_db")?,
        }
        for (iy, &y) in self.ys.iter().enumerate() {
            for (ix, &x) in self.xs.iter().enumerate() {
                let i = self.index(ix, iy);
                let Some(db) = self.mag_db[i] else { continue };
                write!(
                    w,
                    "{},{},{}",
                    format_sig9(x * 1e3),
                    format_sig9(y * 1e3),
                    format_sig9(db)
                )?;
                if let Some(c) = &self.complex {
                    let v = c[i].unwrap_or_default();
                    write!(w, ",{},{}", format_sig9(v.re), format_sig9(v.im))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

impl FieldGrid {
    pub fn to_db_map(&self) -> DbMap {
        let mask = |i: usize| !self.excluded[i];
        DbMap {
            xs: self.axis.clone(),
            ys: self.axis.clone(),
            mag_db: (0..self.len())
                .map(|i| mask(i).then(|| self.magnitudes_db[i]))
                .collect(),
            complex: Some(
                (0..self.len())
                    .map(|i| mask(i).then(|| self.values[i]))
                    .collect(),
            ),
        }
    }
}

/// Reads a field-map CSV (`x_mm,y_mm,mag_db[,re,im]`, any column order).
pub fn load_reference(path: &Path) -> Result<DbMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reference(&text, path)
}

pub fn parse_reference(text: &str, path: &Path) -> Result<DbMap> {
    let schema = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((_, header)) = lines.next() else {
        return Err(schema("file is empty".into()));
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let column = |name: &str| names.iter().position(|n| *n == name);
    for (i, n) in names.iter().enumerate() {
        if !matches!(*n, "x_mm" | "y_mm" | "mag_db" | "re" | "im") {
            return Err(schema(format!("unknown column `{n}`")));
        }
        if names[..i].contains(n) {
            return Err(schema(format!("duplicate column `{n}`")));
        }
    }
    let (Some(cx), Some(cy), Some(cm)) = (column("x_mm"), column("y_mm"), column("mag_db")) else {
        let missing: Vec<&str> = ["x_mm", "y_mm", "mag_db"]
            .into_iter()
            .filter(|n| column(n).is_none())
            .collect();
        return Err(schema(format!("missing column(s): {}", missing.join(", "))));
    };
    let complex_cols = match (column("re"), column("im")) {
        (Some(r), Some(i)) => Some((r, i)),
        (None, None) => None,
        _ => return Err(schema("columns `re` and `im` must appear together".into())),
    };

    struct Row {
        line: usize,
        x: f64,
        y: f64,
        db: f64,
        c: Option<Complex64>,
    }
    let mut rows = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", names.len(), fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            match fields[i].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(
                    line,
                    format!(
                        "`{}` in column `{}` is not a finite number",
                        fields[i], names[i]
                    ),
                )),
            }
        };
        rows.push(Row {
            line,
            x: num(cx)? * 1e-3,
            y: num(cy)? * 1e-3,
            db: num(cm)?,
            c: match complex_cols {
                Some((r, i)) => Some(Complex64::new(num(r)?, num(i)?)),
                None => None,
            },
        });
    }
    if rows.is_empty() {
        return Err(schema("no data rows".into()));
    }

    let axis = |vals: Vec<f64>, name: &str| -> Result<Vec<f64>> {
        let mut v = vals;
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.len() > 2 {
            let step = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
            if v.windows(2)
                .any(|w| ((w[1] - w[0]) - step).abs() > SPACING_TOLERANCE * step)
            {
                return Err(schema(format!(
                    "non-rectangular grid: {name} coordinates are not uniformly spaced"
                )));
            }
        }
        Ok(v)
    };
    let xs = axis(rows.iter().map(|r| r.x).collect(), "x")?;
    let ys = axis(rows.iter().map(|r| r.y).collect(), "y")?;

    let n = xs.len() * ys.len();
    let mut mag_db = vec![None; n];
    let mut complex = complex_cols.map(|_| vec![None; n]);
    let mut seen_at = vec![0usize; n];
    for r in &rows {
        let ix = xs.binary_search_by(|v| v.total_cmp(&r.x)).unwrap();
        let iy = ys.binary_search_by(|v| v.total_cmp(&r.y)).unwrap();
        let i = iy * xs.len() + ix;
        if mag_db[i].is_some() {
            return Err(parse_err(
                r.line,
                format!(
                    "duplicate coordinate ({}, {}) mm, first seen on line {}",
                    r.x * 1e3,
                    r.y * 1e3,
                    seen_at[i]
                ),
            ));
        }
        seen_at[i] = r.line;
        mag_db[i] = Some(r.db);
        if let Some(c) = complex.as_mut() {
            c[i] = r.c;
        }
    }
    Ok(DbMap {
        xs,
        ys,
        mag_db,
        complex,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    #[default]
    Nearest,
    Bilinear,
}

impl Alignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Alignment::Nearest => "nearest",
            Alignment::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Alignment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            other => Err(format!("expected nearest or bilinear, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Per model cell `|model_dB - reference_dB|`; `None` where not compared.
    pub error_map_db: Vec<Option<f64>>,
    pub geometric_mean_error_db: f64,
    pub max_error_db: f64,
    pub cells_compared: usize,
    pub alignment: Alignment,
}

impl ComparisonReport {
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# field map comparison")?;
        writeln!(
            w,
            "# geometric_mean_error_db: mean of |model_dB - reference_dB| over compared cells,"
        )?;
        writeln!(
            w,
            "# each map referenced to its own peak (= geometric mean of linear magnitude ratios, in dB)"
        )?;
        writeln!(
            w,
            "geometric_mean_error_db = {:.9}",
            self.geometric_mean_error_db
        )?;
        writeln!(w, "max_error_db = {:.9}", self.max_error_db)?;
        writeln!(w, "cells_compared = {}", self.cells_compared)?;
        writeln!(w, "alignment = {}", self.alignment)?;
        Ok(())
    }

    pub fn write_error_map<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x_mm,y_mm,error_db")?;
        for (iy, &y) in self.ys.iter().enumerate() {
            for (ix, &x) in self.xs.iter().enumerate() {
                if let Some(e) = self.error_map_db[iy * self.xs.len() + ix] {
                    writeln!(
                        w,
                        "{},{},{}",
                        format_sig9(x * 1e3),
                        format_sig9(y * 1e3),
                        format_sig9(e)
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Sample position of `v` on an ascending uniform axis.
fn nearest_index(axis: &[f64], v: f64) -> Option<usize> {
    let n = axis.len();
    if n == 1 {
        let tol = 1e-9;
        return ((v - axis[0]).abs() <= tol).then_some(0);
    }
    let step = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    let f = (v - axis[0]) / step;
    if f < -0.5 || f > (n - 1) as f64 + 0.5 {
        return None;
    }
    Some((f.round().max(0.0) as usize).min(n - 1))
}

/// Lower bracket index and weight of the upper node.
fn bracket(axis: &[f64], v: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if n == 1 {
        return nearest_index(axis, v).map(|i| (i, 0.0));
    }
    let step = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    let f = (v - axis[0]) / step;
    let eps = 1e-9;
    if f < -eps || f > (n - 1) as f64 + eps {
        return None;
    }
    let f = f.clamp(0.0, (n - 1) as f64);
    let i = (f.floor() as usize).min(n - 2);
    Some((i, f - i as f64))
}

fn sample(reference: &DbMap, x: f64, y: f64, alignment: Alignment) -> Option<f64> {
    match alignment {
        Alignment::Nearest => {
            let ix = nearest_index(&reference.xs, x)?;
            let iy = nearest_index(&reference.ys, y)?;
            reference.get(ix, iy)
        }
        Alignment::Bilinear => {
            let (ix, wx) = bracket(&reference.xs, x)?;
            let (iy, wy) = bracket(&reference.ys, y)?;
            let mut acc = 0.0;
            for (dx, fx) in [(0, 1.0 - wx), (1, wx)] {
                for (dy, fy) in [(0, 1.0 - wy), (1, wy)] {
                    let w = fx * fy;
                    if w == 0.0 {
                        continue;
                    }
                    acc += w * reference.get(ix + dx, iy + dy)?;
                }
            }
            Some(acc)
        }
    }
}

pub fn compare_maps(
    model: &DbMap,
    reference: &DbMap,
    alignment: Alignment,
) -> Result<ComparisonReport> {
    let (Some(model_peak), Some(ref_peak)) = (model.peak_db(), reference.peak_db()) else {
        return Err(Error::EmptyComparison);
    };
    let mut error_map_db = vec![None; model.cells()];
    let mut sum = 0.0;
    let mut max = 0.0_f64;
    let mut count = 0usize;
    for (iy, &y) in model.ys.iter().enumerate() {
        for (ix, &x) in model.xs.iter().enumerate() {
            let i = model.index(ix, iy);
            let Some(m) = model.mag_db[i] else { continue };
            let Some(r) = sample(reference, x, y, alignment) else {
                continue;
            };
            let e = ((m - model_peak) - (r - ref_peak)).abs();
            error_map_db[i] = Some(e);
            sum += e;
            max = max.max(e);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyComparison);
    }
    Ok(ComparisonReport {
        xs: model.xs.clone(),
        ys: model.ys.clone(),
        error_map_db,
        geometric_mean_error_db: sum / count as f64,
        max_error_db: max,
        cells_compared: count,
        alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("ref.csv")
    }

    fn small_map() -> DbMap {
        let xs = vec![-1e-3, 0.0, 1e-3];
        DbMap {
            xs: xs.clone(),
            ys: xs,
            mag_db: vec![
                Some(-6.0),
                Some(-3.0),
                Some(-6.0),
                Some(-3.0),
                None,
                Some(-3.0),
                Some(-6.5),
                Some(-3.0),
                Some(-6.0),
            ],
            complex: None,
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let m = small_map();
        let r = compare_maps(&m, &m, Alignment::Nearest).unwrap();
        assert_eq!(r.geometric_mean_error_db, 0.0);
        assert_eq!(r.max_error_db, 0.0);
        assert_eq!(r.cells_compared, 8);
    }

    #[test]
    fn single_cell_perturbation() {
        let m = small_map();
        let mut r = m.clone();
        r.mag_db[0] = Some(-4.0);
        let rep = compare_maps(&m, &r, Alignment::Nearest).unwrap();
        assert!((rep.geometric_mean_error_db - 2.0 / 8.0).abs() < 1e-12);
        assert!((rep.max_error_db - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_cancels() {
        let m = small_map();
        let rep = compare_maps(&m.offset(3.0), &m, Alignment::Bilinear).unwrap();
        assert!(rep.geometric_mean_error_db.abs() < 1e-12);
    }

    #[test]
    fn disjoint_maps_error() {
        let m = small_map();
        let mut far = m.clone();
        far.xs = far.xs.iter().map(|x| x + 1.0).collect();
        assert!(matches!(
            compare_maps(&m, &far, Alignment::Nearest),
            Err(Error::EmptyComparison)
        ));
    }

    #[test]
    fn bilinear_midpoint() {
        let reference = DbMap {
            xs: vec![0.0, 2e-3],
            ys: vec![0.0],
            mag_db: vec![Some(0.0), Some(-4.0)],
            complex: None,
        };
        let model = DbMap {
            xs: vec![0.0, 1e-3, 2e-3],
            ys: vec![0.0],
            mag_db: vec![Some(0.0), Some(-2.0), Some(-4.0)],
            complex: None,
        };
        let rep = compare_maps(&model, &reference, Alignment::Bilinear).unwrap();
        assert!(rep.max_error_db < 1e-12);
        assert_eq!(rep.cells_compared, 3);
        // nearest picks a node 4 dB or 0 dB away at the midpoint
        let rep = compare_maps(&model, &reference, Alignment::Nearest).unwrap();
        assert!((rep.max_error_db - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parse_descending_and_masked() {
        let text = "x_mm,y_mm,mag_db\n1,1,-1\n0,1,-2\n1,0,-3\n";
        let m = parse_reference(text, &p()).unwrap();
        assert_eq!(m.xs, vec![0.0, 1e-3]);
        assert_eq!(m.ys, vec![0.0, 1e-3]);
        assert_eq!(m.mag_db, vec![None, Some(-3.0), Some(-2.0), Some(-1.0)]);
    }

    #[test]
    fn parse_column_order_is_free() {
        let text = "mag_db,im,x_mm,re,y_mm\n-1,0.5,0,0.25,0\n";
        let m = parse_reference(text, &p()).unwrap();
        assert_eq!(m.complex.unwrap()[0], Some(Complex64::new(0.25, 0.5)));
    }

    #[test]
    fn parse_errors() {
        let missing = parse_reference("x_mm,y_mm,re,im\n0,0,1,1\n", &p());
        assert!(matches!(missing, Err(Error::Schema { .. })));
        let bad = parse_reference("x_mm,y_mm,mag_db\n0,0,-1\n1,0,abc\n", &p());
        assert!(matches!(bad, Err(Error::Parse { line: 3, .. })));
        let short = parse_reference("x_mm,y_mm,mag_db\n0,0\n", &p());
        assert!(matches!(short, Err(Error::Parse { line: 2, .. })));
        let dup = parse_reference("x_mm,y_mm,mag_db\n0,0,-1\n0,0,-2\n", &p());
        assert!(matches!(dup, Err(Error::Parse { line: 3, .. })));
        let ragged = parse_reference("x_mm,y_mm,mag_db\n0,0,-1\n1,0,-1\n3,0,-1\n", &p());
        assert!(matches!(ragged, Err(Error::Schema { .. })));
        let lonely_re = parse_reference("x_mm,y_mm,mag_db,re\n0,0,-1,1\n", &p());
        assert!(matches!(lonely_re, Err(Error::Schema { .. })));
        let unknown = parse_reference("x_mm,y_mm,mag_db,z\n0,0,-1,1\n", &p());
        assert!(matches!(unknown, Err(Error::Schema { .. })));
        assert!(matches!(
            parse_reference("", &p()),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_stable() {
        let text = "x_mm,y_mm,mag_db\n-1.00000000,0,-3.25000000\n0,0,0\n1.00000000,0,-3.25000000\n";
        let m = parse_reference(text, &p()).unwrap();
        assert_eq!(m.to_csv_string(), text);
    }
}
