//! Parsers for the compact command-line literals: comma vectors,
//! `rows;of;entries` matrices, `key=value` parameter lists, and region
//! specifications.

use std::collections::BTreeMap;

use finlyap_core::dynamics::Region;
use finlyap_core::DMatrix;

/// Parse `"a,b,c"` into a vector of floats.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    let entries: Result<Vec<f64>, String> = text
        .split(',')
        .map(|e| {
            e.trim()
                .parse::<f64>()
                .map_err(|_| format!("'{}' is not a number in '{text}'", e.trim()))
        })
        .collect();
    let entries = entries?;
    if entries.is_empty() {
        return Err(format!("empty vector literal '{text}'"));
    }
    Ok(entries)
}

/// Parse `"r11,r12;r21,r22"` into row-major nested arrays, requiring a
/// rectangular shape.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let rows: Result<Vec<Vec<f64>>, String> = text.split(';').map(parse_vector).collect();
    let rows = rows?;
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(format!("ragged matrix literal '{text}'"));
    }
    Ok(rows)
}

/// Convert nested row-major arrays (from a literal or a config file) into
/// a dense matrix.
pub fn to_dmatrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(String::from("empty matrix"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(String::from("ragged matrix"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), width, &flat))
}

/// Parse repeated `key=value` occurrences into a scalar parameter map.
pub fn parse_scalar_params(entries: &[String]) -> Result<BTreeMap<String, f64>, String> {
    let mut map = BTreeMap::new();
    for entry in entries {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| format!("parameter '{entry}' is not of the form key=value"))?;
        let parsed = value
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("parameter '{entry}' has a non-numeric value"))?;
        map.insert(key.trim().to_string(), parsed);
    }
    Ok(map)
}

/// Parse repeated `key=r11,r12;r21,r22` occurrences into a matrix
/// parameter map.
pub fn parse_matrix_params(entries: &[String]) -> Result<BTreeMap<String, Vec<Vec<f64>>>, String> {
    let mut map = BTreeMap::new();
    for entry in entries {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| format!("matrix parameter '{entry}' is not of the form key=rows"))?;
        map.insert(key.trim().to_string(), parse_matrix(value)?);
    }
    Ok(map)
}

/// Parse `"0,2,3"` into a list of coordinate indices.
pub fn parse_index_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|e| {
            e.trim()
                .parse::<usize>()
                .map_err(|_| format!("'{}' is not a coordinate index in '{text}'", e.trim()))
        })
        .collect()
}

fn parse_interval(text: &str) -> Result<(f64, f64), String> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("interval '{text}' is not of the form [a,b]"))?;
    let (lo, hi) = inner
        .split_once(',')
        .ok_or_else(|| format!("interval '{text}' needs two comma-separated bounds"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound in '{text}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound in '{text}'"))?;
    Ok((lo, hi))
}

/// Parse a region literal for a `dim`-dimensional state space:
/// `[a,b]` applies one interval to every coordinate, `[a,b]x[c,d]...`
/// gives one interval per coordinate, and `ball:R` is the origin-centered
/// ball of radius `R`.
pub fn parse_region(spec: &str, dim: usize) -> Result<Region, String> {
    let spec = spec.trim();
    if let Some(radius) = spec.strip_prefix("ball:") {
        let r: f64 = radius
            .trim()
            .parse()
            .map_err(|_| format!("ball radius '{}' is not a number", radius.trim()))?;
        return Region::ball(dim, r).map_err(|e| e.to_string());
    }
    let intervals: Result<Vec<(f64, f64)>, String> =
        spec.split(['x', 'X']).map(parse_interval).collect();
    let intervals = intervals?;
    let bounds = if intervals.len() == 1 {
        vec![intervals[0]; dim]
    } else if intervals.len() == dim {
        intervals
    } else {
        return Err(format!(
            "region '{spec}' has {} interval(s) for a {dim}-dimensional state",
            intervals.len()
        ));
    };
    Region::new_box(bounds).map_err(|e| e.to_string())
}
