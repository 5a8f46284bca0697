use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    /// Mean minibatch Huber loss of this step.
    pub loss: f64,
    /// Learning rate used for this step's update.
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_rmse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub entries: Vec<HistoryEntry>,
    /// Step of the best dev evaluation (earliest on ties).
    pub best_step: Option<u64>,
    pub best_dev_rmse: Option<f64>,
}

impl TrainHistory {
    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.loss)
    }

    /// `(step, dev RMSE)` of every evaluation, in step order.
    pub fn dev_evals(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().filter_map(|e| e.dev_rmse.map(|r| (e.step, r)))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("history entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<HistoryEntry>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    what: format!("history line {}", i + 1),
                    msg: e.to_string(),
                })
            })
            .collect()
    }
}
