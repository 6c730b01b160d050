//! JSON model files.
//!
//! ```text
//! {"type": "pomdp", "actions": [..], "observations": [..],
//!  "T": {action: k×k}, "O": {action: {obs: [k diagonal entries]}}, "b0": [k]}
//! {"type": "pomdp", ..., "TO": {action: {obs: k×k}}, "b0": [k]}
//! {"type": "markov", ..., "order": n, "obs": {action: rows×|O|}}
//! {"type": "psr", ..., "core_tests": [..], "p0": [k],
//!  "m": {ao: [k]}, "M": {ao: k×k}}
//! ```
//!
//! Matrices are written as arrays of rows; a flat row-major array is also
//! accepted on input. Errors carry the JSON path of the offending field.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use super::pomdp::Emission;
use super::{DynamicalModel, LinearPsrModel, MarkovModel, Model, PomdpModel};
use crate::error::{Error, Result};
use crate::sequence::Alphabet;

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<Model> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema("$", "model file must be a JSON object"))?;
    let kind = field(obj, "type", "")?
        .as_str()
        .ok_or_else(|| Error::schema("type", "must be a string"))?;
    let alphabet = Alphabet::new(
        strings(field(obj, "actions", "")?, "actions")?,
        strings(field(obj, "observations", "")?, "observations")?,
    )?;
    match kind {
        "pomdp" => parse_pomdp(obj, alphabet).map(Model::Pomdp),
        "markov" => parse_markov(obj, alphabet).map(Model::Markov),
        "psr" => parse_psr(obj, alphabet).map(Model::Psr),
        other => Err(Error::schema("type", format!("unknown model type {other:?}"))),
    }
}

/// Serializes a model as pretty-printed JSON. Output is deterministic.
pub fn write_model(model: &Model) -> String {
    let value = match model {
        Model::Pomdp(m) => pomdp_json(m),
        Model::Markov(m) => markov_json(m),
        Model::Psr(m) => psr_json(m),
    };
    let mut s = serde_json::to_string_pretty(&value).expect("model JSON serializes");
    s.push('\n');
    s
}

fn parse_pomdp(obj: &Map<String, Value>, alphabet: Alphabet) -> Result<PomdpModel> {
    let b0 = DVector::from_vec(numbers(field(obj, "b0", "")?, "b0")?);
    let k = b0.len();
    if let Some(joint) = obj.get("TO") {
        if obj.contains_key("T") || obj.contains_key("O") {
            return Err(Error::schema("TO", "give either TO or T and O, not both"));
        }
        let per_action = keyed(joint, "TO", alphabet.actions())?;
        let mut ops = Vec::new();
        for (a, v) in per_action.into_iter().enumerate() {
            let path = format!("TO.{}", alphabet.actions()[a]);
            let per_obs = keyed(v, &path, alphabet.observations())?;
            let mut row = Vec::new();
            for (o, m) in per_obs.into_iter().enumerate() {
                let p = format!("{path}.{}", alphabet.observations()[o]);
                row.push(matrix(m, &p, k, Some(k))?);
            }
            ops.push(row);
        }
        return PomdpModel::from_operators(alphabet, ops, b0);
    }
    let t = keyed(field(obj, "T", "")?, "T", alphabet.actions())?;
    let transitions = t
        .into_iter()
        .enumerate()
        .map(|(a, v)| matrix(v, &format!("T.{}", alphabet.actions()[a]), k, Some(k)))
        .collect::<Result<Vec<_>>>()?;
    let o = keyed(field(obj, "O", "")?, "O", alphabet.actions())?;
    let mut diagonals = Vec::new();
    for (a, v) in o.into_iter().enumerate() {
        let path = format!("O.{}", alphabet.actions()[a]);
        let per_obs = keyed(v, &path, alphabet.observations())?;
        diagonals.push(
            per_obs
                .into_iter()
                .enumerate()
                .map(|(i, d)| {
                    let p = format!("{path}.{}", alphabet.observations()[i]);
                    numbers(d, &p).map(DVector::from_vec)
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    PomdpModel::new(alphabet, transitions, diagonals, b0)
}

fn parse_markov(obj: &Map<String, Value>, alphabet: Alphabet) -> Result<MarkovModel> {
    let order = field(obj, "order", "")?
        .as_u64()
        .ok_or_else(|| Error::schema("order", "must be a positive integer"))? as usize;
    let per_action = keyed(field(obj, "obs", "")?, "obs", alphabet.actions())?;
    let n_obs = alphabet.num_observations();
    let tables = per_action
        .into_iter()
        .enumerate()
        .map(|(a, v)| matrix(v, &format!("obs.{}", alphabet.actions()[a]), usize::MAX, Some(n_obs)))
        .collect::<Result<Vec<_>>>()?;
    MarkovModel::new(alphabet, order, tables)
}

fn parse_psr(obj: &Map<String, Value>, alphabet: Alphabet) -> Result<LinearPsrModel> {
    let step_keys: Vec<String> = alphabet.steps().map(|s| alphabet.render_step(s)).collect();
    for (i, key) in step_keys.iter().enumerate() {
        if step_keys[..i].contains(key) {
            return Err(Error::schema(
                "observations",
                format!("action-observation key {key:?} is ambiguous"),
            ));
        }
    }
    let core_tests = strings(field(obj, "core_tests", "")?, "core_tests")?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            alphabet.parse(s).map_err(|e| Error::schema(format!("core_tests[{i}]"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = core_tests.len();
    let p0 = DVector::from_vec(numbers(field(obj, "p0", "")?, "p0")?);
    let weights = keyed(field(obj, "m", "")?, "m", &step_keys)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| numbers(v, &format!("m.{}", step_keys[i])).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    let extensions = keyed(field(obj, "M", "")?, "M", &step_keys)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| matrix(v, &format!("M.{}", step_keys[i]), k, Some(k)))
        .collect::<Result<Vec<_>>>()?;
    LinearPsrModel::new(alphabet, core_tests, p0, weights, extensions)
}

fn pomdp_json(m: &PomdpModel) -> Value {
    let al = m.alphabet();
    let mut obj = header("pomdp", al);
    match m.emission() {
        Emission::Diagonal {
            transitions,
            diagonals,
        } => {
            let mut t = Map::new();
            let mut o = Map::new();
            for (a, name) in al.actions().iter().enumerate() {
                t.insert(name.clone(), matrix_json(&transitions[a]));
                let mut per_obs = Map::new();
                for (i, obs) in al.observations().iter().enumerate() {
                    per_obs.insert(obs.clone(), json!(diagonals[a][i].as_slice()));
                }
                o.insert(name.clone(), Value::Object(per_obs));
            }
            obj.insert("T".into(), Value::Object(t));
            obj.insert("O".into(), Value::Object(o));
        }
        Emission::Joint => {
            let mut to = Map::new();
            for (a, name) in al.actions().iter().enumerate() {
                let mut per_obs = Map::new();
                for (i, obs) in al.observations().iter().enumerate() {
                    per_obs.insert(obs.clone(), matrix_json(m.operator(a, i)));
                }
                to.insert(name.clone(), Value::Object(per_obs));
            }
            obj.insert("TO".into(), Value::Object(to));
        }
    }
    obj.insert("b0".into(), json!(m.initial_belief().as_slice()));
    Value::Object(obj)
}

fn markov_json(m: &MarkovModel) -> Value {
    let al = m.alphabet();
    let mut obj = header("markov", al);
    obj.insert("order".into(), json!(m.order()));
    let mut tables = Map::new();
    for (a, t) in m.tables_as_given().iter().enumerate() {
        tables.insert(al.actions()[a].clone(), matrix_json(t));
    }
    obj.insert("obs".into(), Value::Object(tables));
    Value::Object(obj)
}

fn psr_json(m: &LinearPsrModel) -> Value {
    let al = m.alphabet();
    let mut obj = header("psr", al);
    let core: Vec<String> = m.core_tests().iter().map(|q| al.render(q)).collect();
    obj.insert("core_tests".into(), json!(core));
    obj.insert("p0".into(), json!(m.initial_prediction().as_slice()));
    let mut weights = Map::new();
    let mut ext = Map::new();
    for step in al.steps() {
        let key = al.render_step(step);
        weights.insert(key.clone(), json!(m.one_step_weight(step).as_slice()));
        ext.insert(key, matrix_json(m.extension_matrix(step)));
    }
    obj.insert("m".into(), Value::Object(weights));
    obj.insert("M".into(), Value::Object(ext));
    Value::Object(obj)
}

fn header(kind: &str, al: &Alphabet) -> Map<String, Value> {
    let mut obj = Map::new();
    obj.insert("type".into(), json!(kind));
    obj.insert("actions".into(), json!(al.actions()));
    obj.insert("observations".into(), json!(al.observations()));
    obj
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| json!(m.row(i).iter().copied().collect::<Vec<f64>>()))
            .collect(),
    )
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, parent: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(join(parent, key), "missing field"))
}

/// Looks up one entry per name in a JSON object, rejecting unknown keys.
fn keyed<'a>(value: &'a Value, path: &str, names: &[String]) -> Result<Vec<&'a Value>> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema(path, "must be an object"))?;
    if let Some(extra) = obj.keys().find(|k| !names.contains(k)) {
        return Err(Error::schema(join(path, extra), "unknown key"));
    }
    names.iter().map(|n| field(obj, n, path)).collect()
}

fn strings(value: &Value, path: &str) -> Result<Vec<String>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::schema(path, "must be an array of strings"))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::schema(format!("{path}[{i}]"), "must be a string"))
        })
        .collect()
}

fn numbers(value: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::schema(path, "must be an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_f64()
                .ok_or_else(|| Error::schema(format!("{path}[{i}]"), "must be a number"))
        })
        .collect()
}

/// Reads a matrix given as rows or as a flat row-major array. `rows` may be
/// `usize::MAX` when only the column count is known.
fn matrix(value: &Value, path: &str, rows: usize, cols: Option<usize>) -> Result<DMatrix<f64>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::schema(path, "must be an array"))?;
    let nested = arr.first().map(Value::is_array).unwrap_or(false);
    let (data, nrows, ncols) = if nested {
        let mut data = Vec::new();
        let mut width = None;
        for (i, row) in arr.iter().enumerate() {
            let r = numbers(row, &format!("{path}[{i}]"))?;
            if *width.get_or_insert(r.len()) != r.len() {
                return Err(Error::schema(format!("{path}[{i}]"), "rows differ in length"));
            }
            data.extend(r);
        }
        (data, arr.len(), width.unwrap_or(0))
    } else {
        let data = numbers(value, path)?;
        let ncols = cols.unwrap_or(rows);
        if ncols == 0 || data.len() % ncols != 0 {
            return Err(Error::schema(path, format!("flat length {} is not a multiple of {ncols}", data.len())));
        }
        let nrows = data.len() / ncols;
        (data, nrows, ncols)
    };
    if rows != usize::MAX && nrows != rows {
        return Err(Error::schema(path, format!("expected {rows} rows, found {nrows}")));
    }
    if let Some(c) = cols {
        if ncols != c {
            return Err(Error::schema(path, format!("expected {c} columns, found {ncols}")));
        }
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::Test;

    const POMDP: &str = r#"{
        "type": "pomdp", "actions": ["a"], "observations": ["x", "y"],
        "T": {"a": [[0.5, 0.5], [0.0, 1.0]]},
        "O": {"a": {"x": [1.0, 0.25], "y": [0.0, 0.75]}},
        "b0": [1.0, 0.0]
    }"#;

    #[test]
    fn pomdp_round_trip() {
        let model = parse_model(POMDP).unwrap();
        let text = write_model(&model);
        let again = parse_model(&text).unwrap();
        assert_eq!(write_model(&again), text);
        let t = Test::single(0, 0);
        assert_eq!(model.predict(&t), again.predict(&t));
    }

    #[test]
    fn flat_matrices_accepted() {
        let text = POMDP.replace("[[0.5, 0.5], [0.0, 1.0]]", "[0.5, 0.5, 0.0, 1.0]");
        assert!(parse_model(&text).is_ok());
    }

    #[test]
    fn errors_name_the_field() {
        let bad = POMDP.replace("[[0.5, 0.5], [0.0, 1.0]]", "[[0.5, 0.6], [0.0, 1.0]]");
        let err = parse_model(&bad).unwrap_err().to_string();
        assert!(err.starts_with("T.a[0]:"), "{err}");

        let bad = POMDP.replace("\"y\": [0.0, 0.75]", "\"y\": [0.0, \"q\"]");
        let err = parse_model(&bad).unwrap_err().to_string();
        assert!(err.starts_with("O.a.y[1]:"), "{err}");

        let bad = POMDP.replace("\"b0\"", "\"b1\"");
        let err = parse_model(&bad).unwrap_err().to_string();
        assert!(err.starts_with("b0:"), "{err}");

        let bad = POMDP.replace("\"T\": {\"a\"", "\"T\": {\"z\": [], \"a\"");
        let err = parse_model(&bad).unwrap_err().to_string();
        assert!(err.starts_with("T.z:"), "{err}");
    }

    #[test]
    fn markov_and_psr_round_trip() {
        let markov = r#"{"type": "markov", "actions": ["a"], "observations": ["0", "1"],
            "order": 1, "obs": {"a": [[0.75, 0.25], [0.5, 0.5]]}}"#;
        let m = parse_model(markov).unwrap();
        assert_eq!(m.kind(), "markov");
        assert_eq!(write_model(&parse_model(&write_model(&m)).unwrap()), write_model(&m));

        let psr = r#"{"type": "psr", "actions": ["a"], "observations": ["h", "t"],
            "core_tests": ["ah"], "p0": [0.5],
            "m": {"ah": [1.0], "at": [1.0]}, "M": {"ah": [[1.0]], "at": [[1.0]]}}"#;
        let m = parse_model(psr).unwrap();
        assert_eq!(m.kind(), "psr");
        assert_eq!(write_model(&parse_model(&write_model(&m)).unwrap()), write_model(&m));
    }

    #[test]
    fn unknown_type_rejected() {
        let err = parse_model(r#"{"type": "hmm", "actions": ["a"], "observations": ["x"]}"#).unwrap_err();
        assert!(err.to_string().starts_with("type:"));
    }
}
