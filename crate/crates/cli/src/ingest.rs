//! Event tables: CSV rows `t,x,y[,type]` grouped into one pattern per period.

use std::path::Path;

use pointcause::{Point, PointPattern, Window};
use serde::Serialize;

use crate::error::CliError;

/// An exact repeat of an earlier row. Both rows are kept as points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Duplicate {
    pub row: usize,
    pub first_row: usize,
    pub t: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DataQuality {
    pub path: String,
    pub rows: usize,
    pub kept: usize,
    pub duplicates: Vec<Duplicate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    /// Position `i` holds period `i + 1`; gaps are empty patterns.
    pub patterns: Vec<PointPattern>,
    pub quality: DataQuality,
}

/// Reads an event table. Rows may come in any order of `t`. Row numbers in
/// errors count the header as row 1.
pub fn ingest_patterns(path: &Path, window: Window, kind: Option<&str>) -> Result<Ingested, CliError> {
    let name = path.display().to_string();
    let bad = |row: usize, message: String| CliError::Data {
        path: name.clone(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {name}: {e}")))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| bad(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let typed = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["t", "x", "y"] => false,
        ["t", "x", "y", "type"] => true,
        _ => return Err(bad(1, format!("expected header t,x,y[,type], got {}", header.join(",")))),
    };
    if kind.is_some() && !typed {
        return Err(bad(1, "a type filter needs a type column".into()));
    }
    let width = if typed { 4 } else { 3 };
    let mut rows: Vec<(u32, Point, usize)> = Vec::new();
    let mut seen = std::collections::HashMap::new();
    let mut quality = DataQuality {
        path: name.clone(),
        ..Default::default()
    };
    let mut max_t = 0u32;
    let mut type_seen = false;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| bad(row, e.to_string()))?;
        quality.rows += 1;
        if rec.len() != width {
            return Err(bad(row, format!("expected {width} fields, found {}", rec.len())));
        }
        let t: u32 = rec[0]
            .parse()
            .ok()
            .filter(|t| *t > 0)
            .ok_or_else(|| bad(row, format!("t must be a positive integer, got {:?}", &rec[0])))?;
        let coord = |k: usize, what: &str| -> Result<f64, CliError> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(row, format!("{what} is not a number: {:?}", &rec[k])))
        };
        let (x, y) = (coord(1, "x")?, coord(2, "y")?);
        let p = Point::new(x, y);
        if !window.contains(p) {
            return Err(bad(row, format!("point ({x}, {y}) lies outside the window")));
        }
        max_t = max_t.max(t);
        if let Some(k) = kind {
            if &rec[3] != k {
                continue;
            }
            type_seen = true;
        }
        let key = (t, x.to_bits(), y.to_bits());
        match seen.get(&key) {
            Some(&first_row) => quality.duplicates.push(Duplicate {
                row,
                first_row,
                t,
                x,
                y,
            }),
            None => {
                seen.insert(key, row);
            }
        }
        rows.push((t, p, row));
    }
    if let Some(k) = kind {
        if !type_seen {
            let msg = format!("{name}: no rows of type {k:?}; every period is empty");
            log::warn!("{msg}");
            quality.warnings.push(msg);
        }
    }
    if !quality.duplicates.is_empty() {
        log::warn!("{name}: {} exact duplicate rows kept as distinct points", quality.duplicates.len());
    }
    // stable sort keeps file order within a period
    rows.sort_by_key(|r| r.0);
    quality.kept = rows.len();
    let mut groups: Vec<Vec<Point>> = vec![Vec::new(); max_t as usize];
    for (t, p, _) in rows {
        groups[t as usize - 1].push(p);
    }
    let patterns = groups
        .into_iter()
        .enumerate()
        .map(|(i, pts)| PointPattern::new(window, i as u32 + 1, pts))
        .collect::<Result<_, _>>()
        .map_err(CliError::other)?;
    Ok(Ingested { patterns, quality })
}

/// Pads the shorter series with empty periods.
pub fn align(a: &mut Vec<PointPattern>, b: &mut Vec<PointPattern>, window: Window) {
    let n = a.len().max(b.len());
    for s in [a, b] {
        while s.len() < n {
            let t = s.len() as u32 + 1;
            s.push(PointPattern::empty(window, t));
        }
    }
}
