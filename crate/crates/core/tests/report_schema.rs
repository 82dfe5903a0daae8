//! Report documents conform to the published schemas.

mod common;

use common::toy_dataset;
use fcn_selaug::pipeline::{run_selective, sweep, ExperimentConfig, ExperimentData, Silent, ValidationSource};
use fcn_selaug::report::{ReportDocument, SweepDocument, REPORT_SCHEMA, SWEEP_SCHEMA};
use fcn_selaug::train::TrainConfig;
use serde_json::Value;

/// Validator for the keyword subset the schemas use. Unknown keywords are
/// an error, so the schemas cannot silently rely on something unchecked.
struct Validator {
    report: Value,
    sweep: Value,
}

impl Validator {
    fn new() -> Self {
        Self {
            report: serde_json::from_str(REPORT_SCHEMA).unwrap(),
            sweep: serde_json::from_str(SWEEP_SCHEMA).unwrap(),
        }
    }

    fn resolve(&self, reference: &str, current: &Value) -> Value {
        let (doc, pointer) = reference.split_once('#').unwrap();
        let root = match doc {
            "" => current,
            "report.schema.json" => &self.report,
            "sweep.schema.json" => &self.sweep,
            other => panic!("unknown schema document {other}"),
        };
        root.pointer(pointer)
            .unwrap_or_else(|| panic!("dangling $ref {reference}"))
            .clone()
    }

    fn check(&self, v: &Value, schema: &Value, root: &Value, path: &str) -> Result<(), String> {
        let obj = schema.as_object().expect("schema nodes are objects");
        if let Some(r) = obj.get("$ref") {
            let target = self.resolve(r.as_str().unwrap(), root);
            let next_root = if r.as_str().unwrap().starts_with('#') {
                root
            } else {
                &self.report
            };
            return self.check(v, &target, next_root, path);
        }
        for (key, rule) in obj {
            match key.as_str() {
                "$schema" | "$id" | "title" | "$defs" => {}
                "type" => {
                    let allowed: Vec<&str> = match rule {
                        Value::String(s) => vec![s.as_str()],
                        Value::Array(a) => a.iter().map(|t| t.as_str().unwrap()).collect(),
                        _ => panic!("bad type rule"),
                    };
                    if !allowed.iter().any(|t| type_matches(v, t)) {
                        return Err(format!("{path}: expected {allowed:?}, got {v}"));
                    }
                }
                "enum" => {
                    if !rule.as_array().unwrap().contains(v) {
                        return Err(format!("{path}: {v} not in {rule}"));
                    }
                }
                "required" => {
                    for name in rule.as_array().unwrap() {
                        let name = name.as_str().unwrap();
                        if v.get(name).is_none() {
                            return Err(format!("{path}: missing {name}"));
                        }
                    }
                }
                "properties" => {
                    if let Some(fields) = v.as_object() {
                        for (name, sub) in rule.as_object().unwrap() {
                            if let Some(fv) = fields.get(name) {
                                self.check(fv, sub, root, &format!("{path}.{name}"))?;
                            }
                        }
                    }
                }
                "additionalProperties" => {
                    assert_eq!(rule, &Value::Bool(false));
                    let known = obj["properties"].as_object().unwrap();
                    if let Some(fields) = v.as_object() {
                        if let Some(extra) = fields.keys().find(|k| !known.contains_key(*k)) {
                            return Err(format!("{path}: unexpected field {extra}"));
                        }
                    }
                }
                "items" => {
                    if let Some(items) = v.as_array() {
                        for (i, item) in items.iter().enumerate() {
                            self.check(item, rule, root, &format!("{path}[{i}]"))?;
                        }
                    }
                }
                "minimum" | "maximum" | "exclusiveMinimum" | "exclusiveMaximum" => {
                    if let Some(x) = v.as_f64() {
                        let bound = rule.as_f64().unwrap();
                        let ok = match key.as_str() {
                            "minimum" => x >= bound,
                            "maximum" => x <= bound,
                            "exclusiveMinimum" => x > bound,
                            _ => x < bound,
                        };
                        if !ok {
                            return Err(format!("{path}: {x} violates {key} {bound}"));
                        }
                    }
                }
                other => panic!("validator does not support keyword {other}"),
            }
        }
        Ok(())
    }

    fn report(&self, v: &Value) -> Result<(), String> {
        self.check(v, &self.report, &self.report, "$")
    }

    fn sweep(&self, v: &Value) -> Result<(), String> {
        self.check(v, &self.sweep, &self.sweep, "$")
    }
}

fn type_matches(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        other => panic!("unknown type {other}"),
    }
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        train: TrainConfig {
            epochs: 2,
            seed: 3,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn data() -> ExperimentData {
    ExperimentData::prepare(toy_dataset(16, 24, 1), toy_dataset(12, 24, 2)).unwrap()
}

#[test]
fn selective_and_baseline_reports_conform() {
    let v = Validator::new();
    let o = run_selective(&config(), &data(), 0.6, &Silent).unwrap();
    for stamp in [None, Some("2024-05-01T12:00:00Z".to_string())] {
        let doc = ReportDocument::new(o.report.clone(), stamp);
        let json: Value = serde_json::from_str(&doc.to_json()).unwrap();
        v.report(&json).unwrap();
    }
    let mut holdout = config();
    holdout.validation = ValidationSource::Holdout { fraction: 0.25 };
    let sweep = sweep(&holdout, &data(), &[0.1, 0.5], &Silent).unwrap();
    let json: Value = serde_json::from_str(&SweepDocument::new(&sweep, None).to_json()).unwrap();
    v.sweep(&json).unwrap();
    let base: Value = serde_json::from_str(&ReportDocument::new(sweep.baseline, None).to_json()).unwrap();
    v.report(&base).unwrap();
}

#[test]
fn nonconforming_documents_are_caught() {
    let v = Validator::new();
    let o = run_selective(&config(), &data(), 0.6, &Silent).unwrap();
    let good: Value = serde_json::from_str(&ReportDocument::new(o.report, None).to_json()).unwrap();

    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("loss");
    assert!(v.report(&missing).is_err());

    let mut extra = good.clone();
    extra["surprise"] = Value::from(1);
    assert!(v.report(&extra).is_err());

    let mut out_of_range = good.clone();
    out_of_range["alpha_threshold"] = Value::from(1.5);
    assert!(v.report(&out_of_range).is_err());

    let mut bad_mode = good;
    bad_mode["mode"] = Value::from("other");
    assert!(v.report(&bad_mode).is_err());
}
