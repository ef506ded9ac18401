//! Every emitted JSON document must validate against the schema shipped in
//! docs/schemas, and the schemas must actually constrain (negative
//! controls reject extra fields, wrong types, and missing fields).

use std::path::{Path, PathBuf};
use std::process::Command;

use jsonschema::Validator;
use serde_json::{json, Value};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn load_json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

fn compile_schema(name: &str) -> Validator {
    let schema = load_json(&repo_root().join("docs/schemas").join(name));
    jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("compiling {name}: {e}"))
}

fn assert_valid(validator: &Validator, instance: &Value, context: &str) {
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{context} failed schema validation: {errors:?}");
}

#[test]
fn all_shipped_schemas_compile() {
    for name in [
        "config.schema.json",
        "report-simulate.schema.json",
        "report-certify.schema.json",
        "report-mayer.schema.json",
        "report-transport.schema.json",
        "plan.schema.json",
    ] {
        compile_schema(name);
    }
}

/// Runs every shipped config and validates each emitted JSON document
/// against its schema — and each config against the config schema.
#[test]
fn shipped_runs_emit_schema_valid_json() {
    let root = repo_root();
    let config_schema = compile_schema("config.schema.json");
    let plan_schema = compile_schema("plan.schema.json");

    let mut entries: Vec<PathBuf> = std::fs::read_dir(root.join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    assert_eq!(entries.len(), 8, "expected the eight shipped configs");

    for config_path in entries {
        let file_name = config_path.file_stem().unwrap().to_str().unwrap().to_string();
        let subcommand = file_name.split('_').next().unwrap().to_string();

        assert_valid(&config_schema, &load_json(&config_path), &format!("config {file_name}"));

        let out = tempfile::tempdir().unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_reachcert"))
            .arg(&subcommand)
            .arg("--config")
            .arg(&config_path)
            .arg("--out")
            .arg(out.path())
            .status()
            .unwrap();
        assert!(status.success(), "{file_name} exited with {status}");

        let report = load_json(&out.path().join("report.json"));
        let report_schema = compile_schema(&format!("report-{subcommand}.schema.json"));
        assert_valid(&report_schema, &report, &format!("report of {file_name}"));

        if subcommand == "transport" {
            let plan = load_json(&out.path().join("plan.json"));
            assert_valid(&plan_schema, &plan, &format!("plan of {file_name}"));
        }
    }
}

/// The schemas must reject malformed documents: an accept-everything
/// schema would make the validation test above meaningless.
#[test]
fn schemas_reject_malformed_documents() {
    let transport_schema = compile_schema("report-transport.schema.json");
    let good = json!({
        "command": "transport",
        "scenario": "example1",
        "source_atoms": 2,
        "target_atoms": 2,
        "cost": 1.0,
        "w2": 1.0,
        "is_map": true,
        "support": 2,
        "pass": true
    });
    assert_valid(&transport_schema, &good, "well-formed transport report");

    let mut extra_field = good.clone();
    extra_field["debug_note"] = json!("should not be here");
    assert!(!transport_schema.is_valid(&extra_field), "extra field must be rejected");

    let mut wrong_type = good.clone();
    wrong_type["cost"] = json!("1.0");
    assert!(!transport_schema.is_valid(&wrong_type), "string cost must be rejected");

    let mut missing_field = good.clone();
    missing_field.as_object_mut().unwrap().remove("pass");
    assert!(!transport_schema.is_valid(&missing_field), "missing pass must be rejected");

    let mut wrong_command = good;
    wrong_command["command"] = json!("simulate");
    assert!(!transport_schema.is_valid(&wrong_command), "wrong command tag must be rejected");

    let plan_schema = compile_schema("plan.schema.json");
    let good_plan = json!({
        "source": { "points": [[1.0, 0.0]], "weights": [1.0], "dim": 2 },
        "target": { "points": [[0.0, 0.0]], "weights": [1.0], "dim": 2 },
        "matrix": [1.0],
        "cost": 1.0,
        "optimal": true
    });
    assert_valid(&plan_schema, &good_plan, "well-formed plan");
    let mut negative_mass = good_plan.clone();
    negative_mass["matrix"] = json!([-0.5]);
    assert!(!plan_schema.is_valid(&negative_mass), "negative plan entry must be rejected");

    let config_schema = compile_schema("config.schema.json");
    assert!(config_schema.is_valid(&json!({ "scenario": "example1" })));
    assert!(
        !config_schema.is_valid(&json!({ "scenario": "example1", "T": 1.0, "t_total": 1.0 })),
        "both horizon spellings at once must be rejected"
    );
    assert!(
        !config_schema.is_valid(&json!({ "scenario": "example1", "tolerances": { "hji": 0.0 } })),
        "nonpositive tolerance must be rejected"
    );
    assert!(
        !config_schema.is_valid(&json!({ "budget": 100 })),
        "missing scenario must be rejected"
    );
}
