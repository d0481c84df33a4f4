//! Evaluation reports.
//!
//! Output is byte-stable: object keys are sorted, floats are rounded to nine
//! significant digits, and there is no whitespace variation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sentstruct_core::train::EvalMetrics;

/// Minimal JSON tree with ordered keys and controlled float formatting.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(BTreeMap<String, Json>),
}

impl Json {
    pub fn obj<K: Into<String>>(pairs: impl IntoIterator<Item = (K, Json)>) -> Self {
        Json::Obj(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        self.write(&mut s);
        s
    }

    fn write(&self, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => write!(out, "{i}").unwrap(),
            Json::Num(x) => out.push_str(&format_float(*x)),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).expect("string serialises")),
            Json::Arr(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    v.write(out);
                }
                out.push(']');
            }
            Json::Obj(map) => {
                out.push('{');
                for (i, (k, v)) in map.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).expect("string serialises"));
                    out.push(':');
                    v.write(out);
                }
                out.push('}');
            }
        }
    }
}

/// Nine significant digits, printed without an exponent. Non-finite values
/// become `null`.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("round trip");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

pub fn metrics_json(m: &EvalMetrics) -> Json {
    Json::obj([
        ("n", Json::Int(m.n as i64)),
        ("tp", Json::Int(m.tp as i64)),
        ("fp", Json::Int(m.fp as i64)),
        ("tn", Json::Int(m.tn as i64)),
        ("fn", Json::Int(m.fn_ as i64)),
        ("accuracy", Json::Num(m.accuracy)),
        ("precision", Json::Num(m.precision)),
        ("recall", Json::Num(m.recall)),
        ("f1", Json::Num(m.f1)),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub tasks: BTreeMap<String, EvalMetrics>,
    /// Domain name to metrics. Empty unless a per-domain breakdown was asked for.
    pub per_domain: BTreeMap<String, EvalMetrics>,
    pub config: BTreeMap<String, Json>,
}

impl EvalReport {
    pub fn to_json(&self) -> Json {
        let metrics = |m: &BTreeMap<String, EvalMetrics>| {
            Json::Obj(m.iter().map(|(k, v)| (k.clone(), metrics_json(v))).collect())
        };
        Json::obj([
            ("model_id", Json::Str(self.model_id.clone())),
            ("tasks", metrics(&self.tasks)),
            ("per_domain", metrics(&self.per_domain)),
            ("config", Json::Obj(self.config.clone())),
        ])
    }

    /// Rendered report followed by a newline.
    pub fn render(&self) -> String {
        let mut s = self.to_json().render();
        s.push('\n');
        s
    }
}
