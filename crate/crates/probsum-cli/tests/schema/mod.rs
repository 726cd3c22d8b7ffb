//! Minimal JSON-Schema (draft-07 subset) validator for the round-trip
//! tests. Supports exactly the vocabulary the shipped schemas use: type,
//! enum, properties, required, additionalProperties (boolean), items,
//! minItems, minimum, maximum, oneOf, and $ref into #/definitions.

use serde_json::Value;

pub fn validate(value: &Value, schema: &Value) -> Result<(), Vec<String>> {
    let mut violations = Vec::new();
    check(value, schema, schema, "$", &mut violations);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn resolve<'a>(schema: &'a Value, root: &'a Value) -> &'a Value {
    if let Some(reference) = schema.get("$ref").and_then(Value::as_str) {
        let name = reference
            .strip_prefix("#/definitions/")
            .unwrap_or_else(|| panic!("unsupported $ref {reference}"));
        return root
            .get("definitions")
            .and_then(|d| d.get(name))
            .unwrap_or_else(|| panic!("unresolved $ref {reference}"));
    }
    schema
}

fn type_matches(value: &Value, ty: &str) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        "number" => value.is_number(),
        "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
        other => panic!("unsupported type keyword {other}"),
    }
}

fn check(value: &Value, schema: &Value, root: &Value, path: &str, out: &mut Vec<String>) {
    let schema = resolve(schema, root);

    if let Some(types) = schema.get("type") {
        let allowed: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
            _ => panic!("bad type keyword at {path}"),
        };
        if !allowed.iter().any(|ty| type_matches(value, ty)) {
            out.push(format!("{path}: expected type {allowed:?}, got {value}"));
            return;
        }
    }

    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            out.push(format!("{path}: {value} not in enum {options:?}"));
        }
    }

    if let Some(minimum) = schema.get("minimum").and_then(Value::as_f64) {
        if let Some(v) = value.as_f64() {
            if v < minimum {
                out.push(format!("{path}: {v} below minimum {minimum}"));
            }
        }
    }
    if let Some(maximum) = schema.get("maximum").and_then(Value::as_f64) {
        if let Some(v) = value.as_f64() {
            if v > maximum {
                out.push(format!("{path}: {v} above maximum {maximum}"));
            }
        }
    }

    if let Some(branches) = schema.get("oneOf").and_then(Value::as_array) {
        let matching = branches
            .iter()
            .filter(|branch| {
                let mut scratch = Vec::new();
                check(value, branch, root, path, &mut scratch);
                scratch.is_empty()
            })
            .count();
        if matching != 1 {
            out.push(format!(
                "{path}: {matching} oneOf branches matched (want exactly 1)"
            ));
        }
    }

    if let Value::Object(map) = value {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    out.push(format!("{path}: missing required property {key}"));
                }
            }
        }
        let properties = schema.get("properties").and_then(Value::as_object);
        if let Some(props) = properties {
            for (key, sub) in map {
                match props.get(key) {
                    Some(subschema) => check(sub, subschema, root, &format!("{path}.{key}"), out),
                    None => {
                        if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
                            out.push(format!("{path}: unexpected property {key}"));
                        }
                    }
                }
            }
        }
    }

    if let Value::Array(items) = value {
        if let Some(min_items) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min_items {
                out.push(format!("{path}: fewer than {min_items} items"));
            }
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(item, item_schema, root, &format!("{path}[{i}]"), out);
            }
        }
    }
}
