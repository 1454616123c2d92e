//! Matrix files, label files and shot-event ingestion.
//!
//! Matrix file layout: a header line `p q n` followed by `n` blocks of `p`
//! lines, each holding `q` whitespace-separated values. Blank lines and lines
//! starting with `#` are ignored. Values are written with Rust's shortest
//! round-trip formatting, so save followed by load is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matnorm::RealMatrix;

/// Default offset inside `log(rate + epsilon)` when binning shots.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Court window in feet: `x` spans the 50 ft baseline, `y` runs 36 ft out.
pub const COURT_WIDTH_FT: f64 = 50.0;
pub const COURT_DEPTH_FT: f64 = 36.0;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Content lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_matrices(text: &str, path: &Path) -> Result<Vec<RealMatrix>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected header \"p q n\""))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, hline, format!("malformed header {header:?}")))?;
    let [p, q, n] = dims[..] else {
        return Err(parse_err(path, hline, format!("header must be \"p q n\", got {header:?}")));
    };
    if p == 0 || q == 0 || n == 0 {
        return Err(parse_err(path, hline, "header dimensions must be positive"));
    }

    let mut out = Vec::with_capacity(n);
    let mut row_buf = Vec::with_capacity(p * q);
    let mut last_line = hline;
    for (lineno, line) in lines {
        last_line = lineno;
        if out.len() == n {
            return Err(parse_err(path, lineno, format!("more than the declared {n} matrices")));
        }
        let start = row_buf.len();
        for tok in line.split_whitespace() {
            let x: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("not a number: {tok:?}")))?;
            if !x.is_finite() {
                return Err(parse_err(path, lineno, format!("non-finite value {tok:?}")));
            }
            row_buf.push(x);
        }
        if row_buf.len() - start != q {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {q} values, found {}", row_buf.len() - start),
            ));
        }
        if row_buf.len() == p * q {
            out.push(RealMatrix::new(DMatrix::from_row_slice(p, q, &row_buf))?);
            row_buf.clear();
        }
    }
    if out.len() != n || !row_buf.is_empty() {
        return Err(parse_err(
            path,
            last_line,
            format!("declared {n} matrices of {p}x{q}, found {} complete", out.len()),
        ));
    }
    Ok(out)
}

pub fn load_matrices(path: &Path) -> Result<Vec<RealMatrix>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrices(&text, path)
}

pub fn format_matrices(data: &[RealMatrix]) -> Result<String> {
    let first = data
        .first()
        .ok_or_else(|| Error::EmptyData("no matrices to write".into()))?;
    let (p, q) = first.shape();
    if data.iter().any(|y| y.shape() != (p, q)) {
        return Err(Error::DimensionMismatch("matrices differ in shape".into()));
    }
    let mut s = format!("{p} {q} {}\n", data.len());
    for y in data {
        for row in y.as_matrix().row_iter() {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
    }
    Ok(s)
}

pub fn save_matrices(path: &Path, data: &[RealMatrix]) -> Result<()> {
    let text = format_matrices(data)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One non-negative integer label per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = content_lines(&text)
        .map(|(lineno, l)| {
            l.parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("not a label: {l:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.is_empty() {
        return Err(parse_err(path, 1, "no labels"));
    }
    Ok(labels)
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ShotEvent {
    pub entity_id: String,
    pub x: f64,
    pub y: f64,
    pub games_played: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShotEventTable {
    pub events: Vec<ShotEvent>,
}

impl ShotEventTable {
    /// Reads a CSV with header `entity_id,x,y,games_played`. Shots taken more
    /// than 36 ft from the baseline are dropped; any other coordinate outside
    /// the window is an error.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut events = Vec::new();
        let mut dropped = 0usize;
        let mut seen = std::collections::BTreeSet::new();
        for (i, rec) in reader.deserialize::<ShotEvent>().enumerate() {
            // header is line 1
            let line = i + 2;
            let ev = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
            seen.insert(ev.entity_id.clone());
            if ev.y > COURT_DEPTH_FT {
                dropped += 1;
                continue;
            }
            ev.check().map_err(|msg| parse_err(path, line, msg))?;
            events.push(ev);
        }
        if dropped > 0 {
            log::info!("dropped {dropped} shots beyond {COURT_DEPTH_FT} ft");
            for ev in &events {
                seen.remove(&ev.entity_id);
            }
            for id in seen {
                log::warn!("entity {id:?} has no shots inside the window; skipped");
            }
        }
        Ok(ShotEventTable { events })
    }
}

impl ShotEvent {
    fn check(&self) -> std::result::Result<(), String> {
        if !(0.0..=COURT_WIDTH_FT).contains(&self.x) || !(0.0..=COURT_DEPTH_FT).contains(&self.y) {
            return Err(format!("shot ({}, {}) outside the court window", self.x, self.y));
        }
        if self.games_played == 0 {
            return Err(format!("entity {:?} has games_played = 0", self.entity_id));
        }
        Ok(())
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, 1, format!("{other:?}")),
    }
}

/// Half-open cell index with the last cell closed.
fn cell(coord: f64, extent: f64, cells: usize) -> usize {
    ((coord / extent * cells as f64).floor() as usize).min(cells - 1)
}

/// Per-entity shot grids. Rows split `x` into `p` cells, columns split `y`
/// into `q` cells. Each cell holds `log(count / games_played + epsilon)`.
/// Entities come out sorted by id.
pub fn bin_shots(
    events: &ShotEventTable,
    p: usize,
    q: usize,
    epsilon: f64,
) -> Result<(Vec<String>, Vec<RealMatrix>)> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut grids: BTreeMap<&str, (DMatrix<f64>, u32)> = BTreeMap::new();
    for ev in &events.events {
        ev.check().map_err(Error::InvalidParameter)?;
        let (grid, games) = grids
            .entry(ev.entity_id.as_str())
            .or_insert_with(|| (DMatrix::zeros(p, q), ev.games_played));
        if *games != ev.games_played {
            return Err(Error::InvalidParameter(format!(
                "entity {:?} has inconsistent games_played ({} vs {})",
                ev.entity_id, games, ev.games_played
            )));
        }
        grid[(cell(ev.x, COURT_WIDTH_FT, p), cell(ev.y, COURT_DEPTH_FT, q))] += 1.0;
    }

    let mut ids = Vec::with_capacity(grids.len());
    let mut out = Vec::with_capacity(grids.len());
    for (id, (counts, games)) in grids {
        let g = games as f64;
        let m = counts.map(|c| (c / g + epsilon).ln());
        match RealMatrix::new(m) {
            Ok(m) => {
                ids.push(id.to_string());
                out.push(m);
            }
            Err(_) => log::warn!("entity {id:?} has empty cells and epsilon = 0; skipped"),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyData("no entities with shots".into()));
    }
    Ok((ids, out))
}
