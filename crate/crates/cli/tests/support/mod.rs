#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shape(name: &str) -> String {
    root().join("shapes").join(name).display().to_string()
}

pub fn alf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alf")).args(args).output().expect("alf binary runs")
}

pub fn schema() -> Value {
    let text = std::fs::read_to_string(root().join("schema/alf-report.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const KNOWN: [&str; 15] = [
    "$schema", "$id", "title", "description", "$defs", "$ref", "type", "required", "properties", "items", "enum",
    "const", "minimum", "maximum", "oneOf",
];

/// Validates `doc` against the subset of JSON Schema the shipped schema
/// uses. Unknown keywords are an error so nothing is silently skipped.
pub fn validate(doc: &Value, schema: &Value) -> Result<(), String> {
    check(doc, schema, schema, "$")
}

fn resolve<'a>(root: &'a Value, reference: &str) -> Result<&'a Value, String> {
    let path = reference.strip_prefix("#/").ok_or_else(|| format!("unsupported $ref {reference}"))?;
    path.split('/').try_fold(root, |v, key| v.get(key).ok_or_else(|| format!("dangling $ref {reference}")))
}

fn type_ok(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        _ => false,
    }
}

fn check(v: &Value, s: &Value, root: &Value, at: &str) -> Result<(), String> {
    let obj = s.as_object().ok_or_else(|| format!("{at}: schema is not an object"))?;
    if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(format!("{at}: unsupported keyword {k}"));
    }
    if let Some(r) = obj.get("$ref") {
        check(v, resolve(root, r.as_str().unwrap())?, root, at)?;
    }
    if let Some(t) = obj.get("type") {
        let ok = match t {
            Value::String(t) => type_ok(v, t),
            Value::Array(ts) => ts.iter().any(|t| type_ok(v, t.as_str().unwrap())),
            _ => false,
        };
        if !ok {
            return Err(format!("{at}: expected type {t}, got {v}"));
        }
    }
    if let Some(c) = obj.get("const") {
        if v != c {
            return Err(format!("{at}: expected {c}, got {v}"));
        }
    }
    if let Some(Value::Array(options)) = obj.get("enum") {
        if !options.contains(v) {
            return Err(format!("{at}: {v} not in {options:?}"));
        }
    }
    if let (Some(min), Some(x)) = (obj.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            return Err(format!("{at}: {x} < {min}"));
        }
    }
    if let (Some(max), Some(x)) = (obj.get("maximum").and_then(Value::as_f64), v.as_f64()) {
        if x > max {
            return Err(format!("{at}: {x} > {max}"));
        }
    }
    if let (Some(Value::Array(req)), Some(map)) = (obj.get("required"), v.as_object()) {
        for key in req {
            if !map.contains_key(key.as_str().unwrap()) {
                return Err(format!("{at}: missing {key}"));
            }
        }
    }
    if let (Some(Value::Object(props)), Some(map)) = (obj.get("properties"), v.as_object()) {
        for (key, sub) in props {
            if let Some(child) = map.get(key) {
                check(child, sub, root, &format!("{at}.{key}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (obj.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            check(child, items, root, &format!("{at}[{i}]"))?;
        }
    }
    if let Some(Value::Array(options)) = obj.get("oneOf") {
        let matches = options.iter().filter(|o| check(v, o, root, at).is_ok()).count();
        if matches != 1 {
            return Err(format!("{at}: {matches} oneOf branches match"));
        }
    }
    Ok(())
}
