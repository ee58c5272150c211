//! JSON weight-system files (`liftspec-ws-1`).
//!
//! ```json
//! { "version": "liftspec-ws-1", "r": 1, "d": 2, "star": [2, 1],
//!   "a0": [[[0.0, 0.0]]], "weights": [[[[1.0, 0.0]]], [[[1.0, 0.0]]]] }
//! ```
//!
//! `star` is 1-based, matrices are arrays of rows of `[re, im]` pairs. The
//! optional `symmetric` flag defaults to `true`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{validate, ModelError, WeightSystem};
use crate::numerics::CMat;
use crate::CMatrix;

pub const WS_FORMAT_VERSION: &str = "liftspec-ws-1";

type Rows = Vec<Vec<[f64; 2]>>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WsFile {
    version: String,
    r: usize,
    d: usize,
    star: Vec<usize>,
    a0: Rows,
    weights: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    symmetric: Option<bool>,
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

fn to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn from_rows(rows: &Rows, r: usize, field: &str) -> Result<CMatrix, ModelError> {
    if rows.len() != r {
        return Err(parse_err(field, format!("expected {r} rows, found {}", rows.len())));
    }
    let mut m = CMat::zeros(r, r);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != r {
            return Err(parse_err(
                format!("{field}[{i}]"),
                format!("expected {r} entries, found {}", row.len()),
            ));
        }
        for (j, &[re, im]) in row.iter().enumerate() {
            if !re.is_finite() || !im.is_finite() {
                return Err(parse_err(format!("{field}[{i}][{j}]"), "non-finite entry"));
            }
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

pub fn weight_system_to_json(ws: &WeightSystem) -> String {
    let file = WsFile {
        version: WS_FORMAT_VERSION.to_string(),
        r: ws.r,
        d: ws.d,
        star: ws.star.iter().map(|s| s + 1).collect(),
        a0: to_rows(&ws.a0),
        weights: ws.weights.iter().map(to_rows).collect(),
        symmetric: (!ws.symmetric).then_some(false),
    };
    serde_json::to_string_pretty(&file).expect("weight system serializes")
}

pub fn weight_system_from_json(text: &str) -> Result<WeightSystem, ModelError> {
    let file: WsFile = serde_json::from_str(text).map_err(|e| {
        parse_err(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    if file.version != WS_FORMAT_VERSION {
        return Err(parse_err(
            "version",
            format!("expected {WS_FORMAT_VERSION:?}, found {:?}", file.version),
        ));
    }
    if file.r == 0 {
        return Err(parse_err("r", "block size must be at least 1"));
    }
    if file.star.len() != file.d {
        return Err(parse_err("star", format!("expected {} entries, found {}", file.d, file.star.len())));
    }
    if file.weights.len() != file.d {
        return Err(parse_err(
            "weights",
            format!("expected {} matrices, found {}", file.d, file.weights.len()),
        ));
    }
    let mut star = Vec::with_capacity(file.d);
    for (i, &s) in file.star.iter().enumerate() {
        if s == 0 || s > file.d {
            return Err(parse_err(format!("star[{i}]"), format!("{s} outside 1..={}", file.d)));
        }
        star.push(s - 1);
    }
    for i in 0..file.d {
        if star[star[i]] != i {
            return Err(parse_err(format!("star[{i}]"), "star is not an involution"));
        }
    }
    let a0 = from_rows(&file.a0, file.r, "a0")?;
    let weights = file
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| from_rows(w, file.r, &format!("weights[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let ws = WeightSystem {
        r: file.r,
        d: file.d,
        star,
        a0,
        weights,
        symmetric: file.symmetric.unwrap_or(true),
    };
    let violations = validate(&ws);
    if let Some(v) = violations.first() {
        return Err(parse_err("weights", format!("{v:?}")));
    }
    Ok(ws)
}

pub fn load_weight_system(path: impl AsRef<Path>) -> Result<WeightSystem, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    weight_system_from_json(&text)
}

pub fn save_weight_system(ws: &WeightSystem, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, weight_system_to_json(ws)).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset;

    #[test]
    fn figure1_round_trip() {
        let ws = preset("figure1").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fig1.json");
        save_weight_system(&ws, &path).unwrap();
        assert_eq!(load_weight_system(&path).unwrap(), ws);
    }

    #[test]
    fn non_involutive_star_is_parse_error() {
        let text = r#"{"version":"liftspec-ws-1","r":1,"d":3,"star":[2,3,1],
            "a0":[[[0,0]]],"weights":[[[[1,0]]],[[[1,0]]],[[[1,0]]]]}"#;
        let err = weight_system_from_json(text).unwrap_err();
        assert!(matches!(err, ModelError::Parse { ref location, .. } if location.starts_with("star")), "{err}");
    }

    #[test]
    fn complex_entries_parse() {
        let text = r#"{"version":"liftspec-ws-1","r":1,"d":2,"star":[2,1],
            "a0":[[[0.5,0]]],"weights":[[[[1.5,-2.0]]],[[[1.5,2.0]]]]}"#;
        let ws = weight_system_from_json(text).unwrap();
        assert_eq!(ws.weights[0][(0, 0)], Complex64::new(1.5, -2.0));
        assert_eq!(ws.weights[1][(0, 0)], Complex64::new(1.5, 2.0));
        assert_eq!(ws.a0[(0, 0)], Complex64::new(0.5, 0.0));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let text = r#"{"version":"liftspec-ws-1","r":2,"d":0,"star":[],
            "a0":[[[0,0],[0,0]],[[0,0]]],"weights":[]}"#;
        let err = weight_system_from_json(text).unwrap_err().to_string();
        assert!(err.contains("a0[1]"), "{err}");
        let err = weight_system_from_json("{\"version\": 3}").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let text = r#"{"version":"liftspec-ws-1","r":1,"d":2,"star":[2,1],
            "a0":[[[0,0]]],"weights":[[[[1,0]]],[[[2,0]]]]}"#;
        assert!(weight_system_from_json(text).is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ws = preset("regular:3").unwrap();
        ws.weights[2][(0, 0)] = Complex64::new(0.1 + 0.2, 0.0);
        ws.a0[(0, 0)] = Complex64::new(std::f64::consts::PI, 0.0);
        let back = weight_system_from_json(&weight_system_to_json(&ws)).unwrap();
        assert_eq!(back, ws);
        assert_eq!(back.weights[2][(0, 0)].re.to_bits(), (0.1f64 + 0.2).to_bits());
    }
}
