use std::path::Path;

use proptest::prelude::*;
use restora::{from_json_str, parse_feeder, to_json_string, FeederFile};
use restora_core::fixtures;
use serde_json::Value;

fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json")))
        .unwrap()
}

/// Structural equality with numbers compared to a relative tolerance.
fn close(a: &Value, b: &Value, path: &str) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300) {
                Ok(())
            } else {
                Err(format!("{path}: {x} vs {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            x.iter().zip(y).enumerate().try_for_each(|(i, (p, q))| close(p, q, &format!("{path}[{i}]")))
        }
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x.iter().try_for_each(|(k, v)| {
            y.get(k).ok_or(format!("{path}.{k} missing")).and_then(|w| close(v, w, &format!("{path}.{k}")))
        }),
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

fn scale(v: &mut Value, key: &str, factor: f64) {
    if let Some(x) = v.get_mut(key).and_then(|x| x.as_f64()) {
        v[key] = serde_json::json!(x * factor);
    }
}

#[test]
fn fixture_files_match_the_built_in_fixtures() {
    for &name in fixtures::NAMES {
        let (f, sc) = fixtures::by_name(name).unwrap();
        let file = from_json_str(&fixture_text(name)).unwrap();
        let a: Value = serde_json::from_str(&to_json_string(&file.feeder, file.scenario.as_ref())).unwrap();
        let b: Value = serde_json::from_str(&to_json_string(&f, Some(&sc))).unwrap();
        close(&a, &b, name).unwrap();
        assert_eq!(file.feeder.nodes().len(), f.nodes().len());
        assert_eq!(file.scenario.unwrap().faulted_lines, sc.faulted_lines, "{name}");
    }
}

#[test]
fn f6_file_shape() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/f6.json");
    let FeederFile { feeder, scenario } = parse_feeder(&dir).unwrap();
    assert_eq!(feeder.nodes().len(), 6);
    assert_eq!(feeder.lines().len(), 6);
    assert_eq!(feeder.loads().len(), 5);
    assert_eq!(scenario.unwrap().horizon, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feeder_round_trips_through_json(
        line_scale in proptest::collection::vec(0.2..5.0f64, 12),
        load_scale in proptest::collection::vec(0.1..3.0f64, 7),
        s_kva in 100.0..10_000.0f64,
        v_kv in 0.4..35.0f64,
    ) {
        let mut doc: Value = serde_json::from_str(&fixture_text("f13")).unwrap();
        doc["base"] = serde_json::json!({ "s_mva": s_kva / 1000.0, "v_kv": v_kv });
        for (l, k) in doc["lines"].as_array_mut().unwrap().iter_mut().zip(&line_scale) {
            scale(l, "r", *k);
            scale(l, "x", k.sqrt());
        }
        for (l, k) in doc["loads"].as_array_mut().unwrap().iter_mut().zip(&load_scale) {
            scale(l, "p_max", *k);
            scale(l, "q_max", *k);
        }
        let first = from_json_str(&doc.to_string()).unwrap();
        let text = to_json_string(&first.feeder, first.scenario.as_ref());
        let second = from_json_str(&text).unwrap();
        let a: Value = serde_json::from_str(&text).unwrap();
        let b: Value = serde_json::from_str(&to_json_string(&second.feeder, second.scenario.as_ref())).unwrap();
        prop_assert!(close(&a, &b, "$").is_ok(), "{:?}", close(&a, &b, "$"));
        prop_assert!(close(&doc, &a, "$").is_ok(), "{:?}", close(&doc, &a, "$"));
    }
}
