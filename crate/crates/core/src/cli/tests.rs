use serde_json::json;

use super::*;

fn toy_value() -> Value {
    json!({ "dataset": { "toy": { "seed": 1 } } })
}

#[test]
fn overrides_parse_json_then_fall_back_to_strings() {
    let (path, v) = parse_override("train.weights.lambda_d=0").unwrap();
    assert_eq!(path, ["train", "weights", "lambda_d"]);
    assert_eq!(v, json!(0));
    assert_eq!(
        parse_override("train.ablation=wo_Ld").unwrap().1,
        json!("wo_Ld")
    );
    assert_eq!(parse_override("train.epochs=null").unwrap().1, Value::Null);
    assert!(parse_override("train.seed").is_err());
    assert!(parse_override("train..seed=1").is_err());
}

#[test]
fn overrides_create_missing_objects() {
    let mut v = toy_value();
    let (p, x) = parse_override("train.weights.lambda_d=0.5").unwrap();
    apply_override(&mut v, &p, x).unwrap();
    let cfg = RunConfig::from_value(v).unwrap();
    assert_eq!(cfg.train.weights.lambda_d, 0.5);
    assert_eq!(cfg.train.weights.lambda1, 2.0);

    let mut scalar = json!({ "train": 3 });
    let (p, x) = parse_override("train.seed=1").unwrap();
    assert!(apply_override(&mut scalar, &p, x).is_err());
}

#[test]
fn defaults_pass_the_schema() {
    let cfg = RunConfig::toy(ToySpec::default());
    let v = serde_json::to_value(&cfg).unwrap();
    check_schema(&v).unwrap();
    assert_eq!(RunConfig::from_value(v).unwrap(), cfg);
    check_schema(&json!({ "dataset": { "path": "/data/cub" } })).unwrap();
}

fn object_keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            let path = format!("{prefix}/{k}");
            out.push(path.clone());
            object_keys(child, &path, out);
        }
    }
}

#[test]
fn schema_declares_every_serialized_field() {
    let v = serde_json::to_value(RunConfig::toy(ToySpec::default())).unwrap();
    let mut keys = Vec::new();
    object_keys(&v, "", &mut keys);
    for key in keys {
        // removing any one field keeps the config valid; renaming it does not
        let mut renamed = v.clone();
        let (parent, leaf) = key.rsplit_once('/').unwrap();
        let obj = if parent.is_empty() {
            renamed.as_object_mut().unwrap()
        } else {
            renamed
                .pointer_mut(parent)
                .unwrap()
                .as_object_mut()
                .unwrap()
        };
        let val = obj.remove(leaf).unwrap();
        obj.insert(format!("{leaf}_x"), val);
        assert!(
            check_schema(&renamed).is_err(),
            "schema accepts unknown sibling of {key}"
        );
    }
}

#[test]
fn schema_rejects_bad_values() {
    for bad in [
        json!({}),
        json!({ "dataset": { "toy": {} }, "bogus": 1 }),
        json!({ "dataset": { "toy": {} }, "train": { "lr_main": 0 } }),
        json!({ "dataset": { "toy": {} }, "train": { "n_critic": 0 } }),
        json!({ "dataset": { "toy": {} }, "train": { "ablation": "nope" } }),
        json!({ "dataset": { "toy": {} }, "train": { "weights": { "lambda_d": -1 } } }),
        json!({ "dataset": { "toy": {} }, "eval": { "classifier": "svm" } }),
        json!({ "dataset": { "toy": {}, "path": "x" } }),
    ] {
        let err = RunConfig::from_value(bad.clone()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
    }
}

#[test]
fn variant_lists() {
    assert_eq!(
        parse_variants("full, wo_Ld").unwrap(),
        [Ablation::Full, Ablation::WoLd]
    );
    let all = Ablation::ALL
        .iter()
        .map(|a| a.name())
        .collect::<Vec<_>>()
        .join(",");
    assert_eq!(parse_variants(&all).unwrap().len(), 9);
    let empty = parse_variants(" , ").unwrap_err().to_string();
    assert!(empty.contains("wo_D_test"), "{empty}");
    let unknown = parse_variants("full,wo_X").unwrap_err().to_string();
    assert!(unknown.contains("shared_R"), "{unknown}");
}

#[test]
fn sweep_values_and_grids() {
    assert_eq!(
        parse_sweep_values(SweepParam::LambdaD, "0,0.5,1").unwrap(),
        [0.0, 0.5, 1.0]
    );
    assert!(parse_sweep_values(SweepParam::LambdaD, "0,abc").is_err());
    assert!(parse_sweep_values(SweepParam::NPerClass, "100,2.5").is_err());
    assert!(parse_sweep_values(SweepParam::Lambda1, "").is_err());
    let grid = SweepParam::Lambda1.default_grid();
    assert!(grid.contains(&0.2) && grid.contains(&2.0));
    assert_eq!(
        SweepParam::NPerClass.default_grid(),
        [100.0, 200.0, 400.0, 600.0]
    );
    for name in SweepParam::NAMES {
        assert_eq!(SweepParam::from_str(name).unwrap().name(), name);
    }
    assert!(SweepParam::from_str("lambda3").is_err());
}

#[test]
fn error_kinds_map_to_exit_codes() {
    assert_eq!(Failure::from(Error::numeric("L_d")).code, EXIT_NUMERIC);
    assert_eq!(
        Failure::from(Error::Version {
            found: 2,
            expected: 1
        })
        .code,
        EXIT_ARTIFACT
    );
    assert_eq!(
        Failure::from(Error::Checkpoint("x".into())).code,
        EXIT_ARTIFACT
    );
    assert_eq!(Failure::from(Error::Config("x".into())).code, EXIT_USAGE);
    assert_eq!(Failure::from(Error::Argument("x".into())).code, EXIT_USAGE);
}
