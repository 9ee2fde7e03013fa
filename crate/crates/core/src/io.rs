//! Operator JSON.
//!
//! ```json
//! {"domain": {"p": "2", "blocks": [1, 1]},
//!  "codomain": {"p": "2", "blocks": [1, 1]},
//!  "entries": [{"i": 1, "j": 1, "matrix": [[1.0]]}, ...]}
//! ```
//!
//! Grid indices are one-based and every `(i, j)` pair appears exactly once.
//! Exponents are strings so that decimals such as `"1.5"` survive a round
//! trip unchanged. Errors name the offending field by its JSON path.

use ndarray::Array2;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::operators::BlockOperator;
use crate::spaces::{Exponent, SpaceSpec};

pub fn operator_from_json(text: &str) -> Result<BlockOperator> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::parse("operator", e.to_string()))?;
    let root = object(&root, "operator")?;
    for key in root.keys() {
        if !matches!(key.as_str(), "domain" | "codomain" | "entries") {
            return Err(Error::parse(key.clone(), "unknown field"));
        }
    }
    let domain = space(field(root, "domain", "")?, "domain")?;
    let codomain = space(field(root, "codomain", "")?, "codomain")?;
    let entries = field(root, "entries", "")?
        .as_array()
        .ok_or_else(|| Error::parse("entries", "expected an array"))?;

    let (m_out, m_in) = (codomain.num_blocks(), domain.num_blocks());
    let mut matrix = Array2::zeros((codomain.dim(), domain.dim()));
    let mut seen = vec![false; m_out * m_in];
    for (k, entry) in entries.iter().enumerate() {
        let path = format!("entries[{k}]");
        let entry = object(entry, &path)?;
        for key in entry.keys() {
            if !matches!(key.as_str(), "i" | "j" | "matrix") {
                return Err(Error::parse(format!("{path}.{key}"), "unknown field"));
            }
        }
        let i = grid_index(field(entry, "i", &path)?, &format!("{path}.i"), m_out)?;
        let j = grid_index(field(entry, "j", &path)?, &format!("{path}.j"), m_in)?;
        if std::mem::replace(&mut seen[i * m_in + j], true) {
            return Err(Error::parse(
                path,
                format!("duplicate entry for (i, j) = ({}, {})", i + 1, j + 1),
            ));
        }
        let rows_path = format!("{path}.matrix");
        let rows = field(entry, "matrix", &path)?
            .as_array()
            .ok_or_else(|| Error::parse(rows_path.clone(), "expected an array of rows"))?;
        let (n_out, n_in) = (codomain.block_dims()[i], domain.block_dims()[j]);
        if rows.len() != n_out {
            return Err(Error::parse(
                rows_path,
                format!("expected {n_out} rows, got {}", rows.len()),
            ));
        }
        let (r0, c0) = (codomain.block_range(i).start, domain.block_range(j).start);
        for (r, row) in rows.iter().enumerate() {
            let row_path = format!("{rows_path}[{r}]");
            let row = row
                .as_array()
                .ok_or_else(|| Error::parse(row_path.clone(), "expected an array of numbers"))?;
            if row.len() != n_in {
                return Err(Error::parse(
                    row_path,
                    format!("expected {n_in} columns, got {}", row.len()),
                ));
            }
            for (c, v) in row.iter().enumerate() {
                matrix[[r0 + r, c0 + c]] = v
                    .as_f64()
                    .ok_or_else(|| Error::parse(format!("{row_path}[{c}]"), "expected a number"))?;
            }
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::parse(
            "entries",
            format!(
                "missing entry for (i, j) = ({}, {})",
                missing / m_in + 1,
                missing % m_in + 1
            ),
        ));
    }
    BlockOperator::from_dense(domain, codomain, matrix)
}

pub fn operator_to_json(t: &BlockOperator) -> String {
    let (m_out, m_in) = (t.codomain().num_blocks(), t.domain().num_blocks());
    let mut entries = Vec::with_capacity(m_out * m_in);
    for i in 0..m_out {
        for j in 0..m_in {
            let block = t.block(i, j).expect("grid index in range");
            let rows: Vec<Vec<f64>> = block.rows().into_iter().map(|r| r.to_vec()).collect();
            entries.push(json!({"i": i + 1, "j": j + 1, "matrix": rows}));
        }
    }
    json!({
        "domain": space_json(t.domain()),
        "codomain": space_json(t.codomain()),
        "entries": entries,
    })
    .to_string()
}

pub fn read_operator(path: &std::path::Path) -> Result<BlockOperator> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    operator_from_json(&text)
}

fn space_json(s: &SpaceSpec) -> Value {
    json!({"p": s.outer().to_string(), "blocks": s.block_dims()})
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::parse(path.to_string(), "expected an object"))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    let full = if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    };
    obj.get(key).ok_or_else(|| Error::parse(full, "missing"))
}

fn space(v: &Value, path: &str) -> Result<SpaceSpec> {
    let obj = object(v, path)?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "p" | "blocks") {
            return Err(Error::parse(format!("{path}.{key}"), "unknown field"));
        }
    }
    let p_path = format!("{path}.p");
    let outer: Exponent = match field(obj, "p", path)? {
        Value::String(s) => s.parse(),
        Value::Number(n) => n.to_string().parse(),
        _ => {
            return Err(Error::parse(
                p_path,
                "expected a string such as \"1.5\" or \"inf\"",
            ))
        }
    }
    .map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(p_path.clone(), message),
        other => other,
    })?;
    let b_path = format!("{path}.blocks");
    let blocks = field(obj, "blocks", path)?
        .as_array()
        .ok_or_else(|| Error::parse(b_path.clone(), "expected an array of block dimensions"))?;
    if blocks.is_empty() {
        return Err(Error::parse(b_path, "at least one block is required"));
    }
    let dims = blocks
        .iter()
        .enumerate()
        .map(|(k, d)| match d.as_u64() {
            Some(n) if n >= 1 => Ok(n as usize),
            _ => Err(Error::parse(
                format!("{b_path}[{k}]"),
                format!("`{d}` is not a positive integer"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    SpaceSpec::new(outer, dims).map_err(|e| Error::parse(b_path, e.to_string()))
}

fn grid_index(v: &Value, path: &str, len: usize) -> Result<usize> {
    match v.as_u64() {
        Some(k) if k >= 1 && (k as usize) <= len => Ok(k as usize - 1),
        _ => Err(Error::parse(
            path.to_string(),
            format!("`{v}` is not a grid index in 1..={len}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const SCALAR_2X2: &str = r#"{"domain":{"p":"2","blocks":[1,1]},"codomain":{"p":"2","blocks":[1,1]},
        "entries":[{"i":1,"j":1,"matrix":[[1]]},{"i":1,"j":2,"matrix":[[2]]},
                   {"i":2,"j":1,"matrix":[[3]]},{"i":2,"j":2,"matrix":[[4]]}]}"#;

    #[test]
    fn parses_scalar_grid() {
        let t = operator_from_json(SCALAR_2X2).unwrap();
        assert_eq!(t.dense(), array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(t.domain().outer(), Exponent::TWO);
    }

    #[test]
    fn round_trip_is_exact() {
        let spec: SpaceSpec = "p=1.5;blocks=2,1".parse().unwrap();
        let codomain: SpaceSpec = "p=inf;blocks=1,1,1".parse().unwrap();
        let m = array![
            [0.1, 1.0 / 3.0, -2e-300],
            [5e300, -0.0, 7.25],
            [1e-5, 2.0, f64::MIN_POSITIVE]
        ];
        let t = BlockOperator::from_dense(spec, codomain, m).unwrap();
        let back = operator_from_json(&operator_to_json(&t)).unwrap();
        assert_eq!(back, t);
        for (a, b) in back.dense().iter().zip(t.dense().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    fn field_of(text: &str) -> String {
        match operator_from_json(text).unwrap_err() {
            Error::Parse { field, .. } => field,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of("[1]"), "operator");
        assert_eq!(field_of("{"), "operator");
        let bad_p = SCALAR_2X2.replacen(r#""p":"2""#, r#""p":"0.5""#, 1);
        assert_eq!(field_of(&bad_p), "domain.p");
        let bad_dim = SCALAR_2X2.replacen("[1,1]", "[1,1.5]", 1);
        assert_eq!(field_of(&bad_dim), "domain.blocks[1]");
        let empty = SCALAR_2X2.replacen("[1,1]", "[]", 1);
        assert_eq!(field_of(&empty), "domain.blocks");
        let dup = SCALAR_2X2.replace(r#""i":2,"j":2"#, r#""i":1,"j":1"#);
        assert_eq!(field_of(&dup), "entries[3]");
        let missing = SCALAR_2X2.replace(r#",{"i":2,"j":2,"matrix":[[4]]}"#, "");
        assert_eq!(field_of(&missing), "entries");
        let out_of_range = SCALAR_2X2.replace(r#""i":2,"j":2"#, r#""i":3,"j":2"#);
        assert_eq!(field_of(&out_of_range), "entries[3].i");
        let wrong_shape = SCALAR_2X2.replace("[[4]]", "[[4,5]]");
        assert_eq!(field_of(&wrong_shape), "entries[3].matrix[0]");
        let not_number = SCALAR_2X2.replace("[[4]]", r#"[["x"]]"#);
        assert_eq!(field_of(&not_number), "entries[3].matrix[0][0]");
        let extra = SCALAR_2X2.replacen(r#""entries""#, r#""extra":1,"entries""#, 1);
        assert_eq!(field_of(&extra), "extra");
    }

    #[test]
    fn bad_p_message() {
        let bad_p = SCALAR_2X2.replacen(r#""p":"2""#, r#""p":"0.5""#, 1);
        let msg = operator_from_json(&bad_p).unwrap_err().to_string();
        assert!(msg.contains("p must be ≥ 1"), "{msg}");
    }
}
