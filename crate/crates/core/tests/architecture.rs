//! Full-size (56 × 924) architecture dumps against hand-derived descriptors.

use csiloc::models::{ModelId, ModelSpec};
use serde_json::Value;

fn dims(v: &Value) -> String {
    let d: Vec<String> = v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap().to_string()).collect();
    d.join("x")
}

/// One line per layer: `stage kind details -> output_shape (params)`.
fn render(model: ModelId) -> Vec<String> {
    let json = ModelSpec::full_size(model).architecture().unwrap().to_json();
    let dump: Value = serde_json::from_str(&json).unwrap();
    let mut lines = Vec::new();
    for stage in dump["stages"].as_array().unwrap() {
        let name = stage["name"].as_str().unwrap();
        for l in stage["layers"].as_array().unwrap() {
            let kind = l["kind"].as_str().unwrap();
            let detail = match kind {
                "dense" => format!(" {}->{}", l["in_features"], l["out_features"]),
                "conv2d" => format!(
                    " {}->{} k{} s{} p{}",
                    l["in_channels"],
                    l["out_channels"],
                    dims(&l["kernel"]),
                    l["stride"],
                    l["padding"]
                ),
                "conv_transpose2d" => format!(
                    " {}->{} k{} s{} adj{}",
                    l["in_channels"],
                    l["out_channels"],
                    dims(&l["kernel"]),
                    l["stride"],
                    dims(&l["output_adjust"])
                ),
                _ => String::new(),
            };
            lines.push(format!("{name} {kind}{detail} -> {} ({})", dims(&l["output_shape"]), l["param_count"]));
        }
    }
    lines
}

fn golden(model: ModelId) -> Vec<String> {
    let text = match model {
        ModelId::M1 => include_str!("golden/m1.txt"),
        ModelId::M2 => include_str!("golden/m2.txt"),
        ModelId::M3 => include_str!("golden/m3.txt"),
        ModelId::M4 => include_str!("golden/m4.txt"),
    };
    text.lines().map(str::to_string).collect()
}

#[test]
fn dumps_match_goldens() {
    for model in ModelId::ALL {
        assert_eq!(render(model), golden(model), "{model}");
    }
}

#[test]
fn m4_latent_is_64_by_13_by_230() {
    let dump = ModelSpec::full_size(ModelId::M4).architecture().unwrap();
    assert_eq!(dump.latent_shape, vec![64, 13, 230]);
    assert_eq!(dump.stage("encoder").unwrap().layers.last().unwrap().output_shape, vec![64, 13, 230]);
}

#[test]
fn pretrained_heads_match_supervised_heads() {
    let tail = |m| {
        let d = ModelSpec::full_size(m).architecture().unwrap();
        let h = d.stage("head").unwrap().layers.clone();
        h[h.len() - 5..].iter().map(|l| l.output_shape.clone()).collect::<Vec<_>>()
    };
    assert_eq!(tail(ModelId::M2), tail(ModelId::M4));
    assert_eq!(tail(ModelId::M1), tail(ModelId::M3));
}

#[test]
fn totals_add_up() {
    for m in ModelId::ALL {
        let d = ModelSpec::full_size(m).architecture().unwrap();
        let per_stage: usize = d.stages.iter().map(|s| s.param_count).sum();
        assert_eq!(per_stage, d.total_params, "{m}");
        for s in &d.stages {
            assert_eq!(s.layers.iter().map(|l| l.param_count).sum::<usize>(), s.param_count);
        }
    }
}
