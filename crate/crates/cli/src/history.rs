//! Training history as JSON lines: one `"kind":"step"` record per optimiser
//! step, then one `"kind":"epoch"` record per epoch.

use std::io::{self, Write};

use sentstruct_core::train::{EpochRecord, StepRecord, TrainHistory};
use serde_json::{json, Value};

use crate::report::metrics_json;

pub fn step_json(s: &StepRecord) -> Value {
    json!({
        "kind": "step",
        "step": s.step,
        "epoch": s.epoch,
        "loss": s.loss,
        "bce": s.bce,
        "nie": s.nie,
        "de": s.de,
        "grad_norm": s.grad_norm,
        "clipped_norm": s.clipped_norm,
        "no_partner": s.no_partner,
    })
}

pub fn epoch_json(e: &EpochRecord) -> Value {
    let val = e
        .val
        .as_ref()
        .map(|m| serde_json::from_str::<Value>(&metrics_json(m).render()).expect("valid json"));
    json!({
        "kind": "epoch",
        "epoch": e.epoch,
        "mean_loss": e.mean_loss,
        "train_accuracy": e.train_accuracy,
        "val": val,
    })
}

pub fn write_history(mut out: impl Write, history: &TrainHistory) -> io::Result<()> {
    for s in &history.steps {
        writeln!(out, "{}", step_json(s))?;
    }
    for e in &history.epochs {
        writeln!(out, "{}", epoch_json(e))?;
    }
    Ok(())
}
