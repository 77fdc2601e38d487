//! Append-only metric stream: one JSON object per line, machine-readable
//! for plotting, with non-finite values serialized as explicit nulls.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::CliError;

pub struct MetricWriter {
    file: File,
    start: Instant,
    last_step: Option<u64>,
}

impl MetricWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::Config(format!("cannot open metrics file: {e}")))?;
        Ok(Self {
            file,
            start: Instant::now(),
            last_step: None,
        })
    }

    /// Append one record; steps must be monotone within a run.
    pub fn record(&mut self, step: u64, metrics: &[(&str, f64)]) -> Result<(), CliError> {
        if let Some(last) = self.last_step {
            assert!(step >= last, "metric steps must be monotone");
        }
        self.last_step = Some(step);
        let mut map = BTreeMap::new();
        for (name, value) in metrics {
            let v = if value.is_finite() {
                serde_json::json!(value)
            } else {
                serde_json::Value::Null
            };
            map.insert((*name).to_string(), v);
        }
        let line = serde_json::json!({
            "step": step,
            "wall_time": self.start.elapsed().as_secs_f64(),
            "metrics": map,
        });
        writeln!(self.file, "{line}")
            .map_err(|e| CliError::Config(format!("cannot append metric record: {e}")))
    }
}
