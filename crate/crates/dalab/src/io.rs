//! File formats: the displacement field codec, model loading and small CSV helpers.

use crate::describe::ModelDescription;
use crate::error::{LabError, Result};
use crate::model::{DiffeoModel, ModelFile};
use crate::semiconj::{ConjugacyField, FieldHeader, FIELD_LAYOUT};
use std::path::Path;

/// Largest grid accepted by the decoder (4·128⁴ doubles is 2 GiB).
pub const MAX_FIELD_GRID: usize = 128;

/// Header JSON and little-endian payload of a solved field.
pub fn encode_field(field: &ConjugacyField, model: &DiffeoModel) -> Result<(String, Vec<u8>)> {
    let header = serde_json::to_string_pretty(&field.header()).map_err(|e| LabError::Parse(e.to_string()))?;
    let values = field.component_major(model);
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok((header, bytes))
}

pub fn decode_header(header_json: &str) -> Result<FieldHeader> {
    let h: FieldHeader = serde_json::from_str(header_json).map_err(|e| LabError::Parse(format!("field header: {e}")))?;
    if h.dim != 4 {
        return Err(LabError::Parse(format!("field dimension {} (expected 4)", h.dim)));
    }
    if h.layout != FIELD_LAYOUT {
        return Err(LabError::Parse(format!("unknown field layout {:?}", h.layout)));
    }
    if !(2..=MAX_FIELD_GRID).contains(&h.grid) {
        return Err(LabError::Parse(format!("field grid {} outside 2..={MAX_FIELD_GRID}", h.grid)));
    }
    if !(h.residual.is_finite() && h.residual >= 0.0) {
        return Err(LabError::Parse(format!("field residual {}", h.residual)));
    }
    Ok(h)
}

/// Validates a header against its payload and returns the component-major values.
pub fn decode_field(header_json: &str, bytes: &[u8]) -> Result<(FieldHeader, Vec<f64>)> {
    let h = decode_header(header_json)?;
    let expect = h.grid.pow(4) * 4 * 8;
    if bytes.len() != expect {
        return Err(LabError::Parse(format!("field payload has {} bytes, header implies {expect}", bytes.len())));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(LabError::Parse(format!("non-finite field value at index {i}")));
    }
    Ok((h, values))
}

pub fn read_field(model: &DiffeoModel, header_path: &Path, data_path: &Path) -> Result<ConjugacyField> {
    let text = std::fs::read_to_string(header_path)?;
    let bytes = std::fs::read(data_path)?;
    let (h, values) = decode_field(&text, &bytes)?;
    ConjugacyField::from_component_major(model, &h, &values)
}

/// A model file is either a built model (`.json`) or a description to build (anything else).
pub fn load_model(path: &Path) -> Result<DiffeoModel> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let f: ModelFile = serde_json::from_str(&text).map_err(|e| LabError::Parse(format!("model file: {e}")))?;
        DiffeoModel::from_file(&f)
    } else {
        ModelDescription::parse(&text)?.build()
    }
}

pub fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| LabError::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Comma-separated table with a header row.
pub fn csv_table<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.as_ref().join(","));
        s.push('\n');
    }
    s
}

/// Parses a table written by `csv_table` into its header and numeric rows.
pub fn parse_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| LabError::Parse("empty table".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = vec![];
    for (i, l) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = l
            .split(',')
            .map(|v| match v.trim() {
                "true" => Ok(1.0),
                "false" => Ok(0.0),
                t => t.parse::<f64>().map_err(|e| LabError::Parse(format!("row {}: {e}", i + 1))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(LabError::Parse(format!("row {} has {} fields, header has {}", i + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::describe::ModelDescription;
    use crate::semiconj::{solve_semiconjugacy, SolveOptions};

    #[test]
    fn field_round_trip_through_bytes() {
        let m = ModelDescription::theorem_c_default().build().unwrap();
        let f = solve_semiconjugacy(&m, 4, 1e-4, &SolveOptions { verify_samples: 64, ..Default::default() }).unwrap();
        let (h, b) = encode_field(&f, &m).unwrap();
        assert_eq!(b.len(), 4 * 4usize.pow(4) * 8);
        let (hd, vals) = decode_field(&h, &b).unwrap();
        assert_eq!(hd, f.header());
        let g = ConjugacyField::from_component_major(&m, &hd, &vals).unwrap();
        assert_eq!(g.component_major(&m).len(), vals.len());
        for (a, b) in g.component_major(&m).iter().zip(&vals) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn decoder_rejects_bad_inputs() {
        let m = ModelDescription::theorem_c_default().build().unwrap();
        let f = solve_semiconjugacy(&m, 4, 1e-4, &SolveOptions { verify_samples: 64, ..Default::default() }).unwrap();
        let (h, b) = encode_field(&f, &m).unwrap();
        assert!(decode_field(&h, &b[..b.len() - 8]).is_err());
        assert!(decode_field("{}", &b).is_err());
        assert!(decode_field(&h.replace("\"dim\": 4", "\"dim\": 3"), &b).is_err());
        assert!(decode_field(&h.replace("\"grid\": 4", "\"grid\": 100000"), &b).is_err());
        let mut nan = b.clone();
        nan[..8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_field(&h, &nan).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![vec!["1".to_string(), "2.5".to_string(), "true".to_string()]];
        let t = csv_table(&["a", "b", "c"], &rows);
        let (h, r) = parse_numeric_csv(&t).unwrap();
        assert_eq!(h, vec!["a", "b", "c"]);
        assert_eq!(r, vec![vec![1.0, 2.5, 1.0]]);
        assert!(parse_numeric_csv("a,b\n1\n").is_err());
    }
}
