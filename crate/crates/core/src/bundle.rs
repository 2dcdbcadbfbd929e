//! CSV bundle for problem instances.
//!
//! A bundle is a directory holding
//!
//! * `K.csv`: the operator, one matrix row per line, comma separated;
//! * `g_obs.csv`: noisy data, one value per line;
//! * `u_true.csv`, `g_true.csv`: exact solution and data, when known;
//! * `meta.txt`: `key: value` lines with at least `n`, `m`, `delta`, `eps`,
//!   `seed`, plus the layout and grid.
//!
//! Numbers are written as `{:.16e}`, which round-trips every `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{Grid, Layout, Problem, Provenance};

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v.iter() {
        s.push_str(&fmt_num(*x));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)?;
    let vals = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(parse_num)
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut s = String::with_capacity(m.len() * 24);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&fmt_num(m[(i, j)]));
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        rows.push(line.split(',').map(|t| parse_num(t.trim())).collect::<Result<_>>()?);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("ragged matrix in {}", path.display())));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

fn parse_num(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse(format!("not a number: `{s}`")))
}

/// Parse `key: value` (or `key = value`) lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let split = line.find([':', '=']);
        if let Some(pos) = split {
            let (k, v) = line.split_at(pos);
            out.insert(k.trim().to_string(), v[1..].trim().to_string());
        }
    }
    out
}

fn layout_string(layout: Layout) -> String {
    match layout {
        Layout::Signal(n) => format!("signal {n}"),
        Layout::Image { rows, cols } => format!("image {rows}x{cols}"),
    }
}

fn parse_layout(s: &str) -> Result<Layout> {
    let bad = || Error::Parse(format!("bad layout `{s}`"));
    let (kind, dims) = s.split_once(' ').ok_or_else(bad)?;
    match kind {
        "signal" => Ok(Layout::Signal(dims.trim().parse().map_err(|_| bad())?)),
        "image" => {
            let (r, c) = dims.trim().split_once('x').ok_or_else(bad)?;
            Ok(Layout::Image {
                rows: r.parse().map_err(|_| bad())?,
                cols: c.parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

/// Write `problem` to `dir`, creating it if needed. `extra` lines are
/// appended to `meta.txt` (e.g. the penalty model).
pub fn write_bundle(problem: &Problem, dir: &Path, extra: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("K.csv"), problem.k())?;
    write_vector(&dir.join("g_obs.csv"), problem.g_obs())?;
    if let Some(u) = problem.u_true() {
        write_vector(&dir.join("u_true.csv"), u)?;
    }
    if let Some(g) = problem.g_true() {
        write_vector(&dir.join("g_true.csv"), g)?;
    }
    let grid = problem.grid();
    let mut meta = vec![
        ("n", problem.n().to_string()),
        ("m", problem.m().to_string()),
        ("delta", fmt_num(problem.delta())),
    ];
    match problem.provenance() {
        Some(p) => {
            meta.push(("eps", fmt_num(p.eps)));
            meta.push(("seed", p.seed.to_string()));
            meta.push(("example", p.example.clone()));
        }
        None => {
            meta.push(("eps", "none".into()));
            meta.push(("seed", "none".into()));
        }
    }
    meta.push(("layout", layout_string(problem.layout())));
    meta.push(("grid_a", fmt_num(grid.a)));
    meta.push(("grid_b", fmt_num(grid.b)));
    meta.push(("grid_h", fmt_num(grid.h)));
    let mut text = String::new();
    for (k, v) in meta.iter().chain(extra.iter()) {
        text.push_str(&format!("{k}: {v}\n"));
    }
    fs::write(dir.join("meta.txt"), text)?;
    Ok(())
}

/// Read a bundle written by [`write_bundle`] (or by hand). Returns the
/// problem and all `meta.txt` entries.
pub fn read_bundle(dir: &Path) -> Result<(Problem, BTreeMap<String, String>)> {
    let meta = parse_key_values(&fs::read_to_string(dir.join("meta.txt"))?);
    let k = read_matrix(&dir.join("K.csv"))?;
    let g_obs = read_vector(&dir.join("g_obs.csv"))?;
    let get = |key: &str| meta.get(key).map(String::as_str);
    let delta = parse_num(get("delta").ok_or_else(|| Error::Parse("meta.txt lacks delta".into()))?)?;
    let n = k.ncols();
    let layout = match get("layout") {
        Some(s) => parse_layout(s)?,
        None => Layout::Signal(n),
    };
    let grid = match (get("grid_a"), get("grid_b"), get("grid_h")) {
        (Some(a), Some(b), Some(h)) => Grid { a: parse_num(a)?, b: parse_num(b)?, h: parse_num(h)? },
        _ => Grid::unit(n),
    };
    for (key, actual) in [("n", n), ("m", k.nrows())] {
        if let Some(v) = get(key) {
            if v.parse::<usize>().ok() != Some(actual) {
                return Err(Error::Dimension(format!("meta {key}={v} but K gives {actual}")));
            }
        }
    }
    let mut problem = Problem::new(k, g_obs, delta, grid, layout)?;
    let u_path = dir.join("u_true.csv");
    if u_path.exists() {
        let g_path = dir.join("g_true.csv");
        let g_true = if g_path.exists() { Some(read_vector(&g_path)?) } else { None };
        problem = problem.with_truth(read_vector(&u_path)?, g_true)?;
    }
    if let (Some(ex), Some(eps), Some(seed)) = (get("example"), get("eps"), get("seed")) {
        if let (Ok(eps), Ok(seed)) = (eps.parse(), seed.parse()) {
            problem = problem.with_provenance(Provenance { example: ex.to_string(), eps, seed });
        }
    }
    Ok((problem, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_test_problem, Example};

    #[test]
    fn bundle_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = make_test_problem(Example::Ex42, Some(20), 5e-2, 4).unwrap();
        write_bundle(&p, dir.path(), &[("model", "elastic-net".into())]).unwrap();
        let (q, meta) = read_bundle(dir.path()).unwrap();
        assert_eq!(p.k(), q.k());
        assert_eq!(p.g_obs(), q.g_obs());
        assert_eq!(p.u_true(), q.u_true());
        assert_eq!(p.delta().to_bits(), q.delta().to_bits());
        assert_eq!(p.grid(), q.grid());
        assert_eq!(p.layout(), q.layout());
        assert_eq!(p.provenance(), q.provenance());
        assert_eq!(meta["model"], "elastic-net");
        assert_eq!(meta["seed"], "4");
    }

    #[test]
    fn key_value_parsing() {
        let kv = parse_key_values("a: 1\n# comment\nb = two # trailing\n\n c :3");
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two");
        assert_eq!(kv["c"], "3");
    }

    #[test]
    fn image_layout_roundtrip() {
        let l = Layout::Image { rows: 5, cols: 7 };
        assert_eq!(parse_layout(&layout_string(l)).unwrap(), l);
        assert!(parse_layout("cube 3").is_err());
    }
}
