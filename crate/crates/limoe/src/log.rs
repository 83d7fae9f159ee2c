//! Training log rows and per-epoch means.

use std::fmt::Write as _;

pub const LOG_HEADER: &str = "step,stage,term,value";

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub stage: String,
    pub term: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMean {
    pub stage: String,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    pub epochs: Vec<EpochMean>,
}

impl TrainLog {
    pub fn push(&mut self, step: usize, stage: &str, term: &str, value: f64) {
        self.entries.push(LogEntry {
            step,
            stage: stage.into(),
            term: term.into(),
            value,
        });
    }

    pub fn push_epoch(&mut self, stage: &str, epoch: usize, loss: f64) {
        self.epochs.push(EpochMean {
            stage: stage.into(),
            epoch,
            loss,
        });
    }

    pub fn append(&mut self, other: &TrainLog) {
        self.entries.extend(other.entries.iter().cloned());
        self.epochs.extend(other.epochs.iter().cloned());
    }

    /// Mean loss of every epoch of `stage`, in order.
    pub fn epoch_losses(&self, stage: &str) -> Vec<f64> {
        self.epochs
            .iter()
            .filter(|e| e.stage == stage)
            .map(|e| e.loss)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{}", e.step, e.stage, e.term, e.value);
        }
        s
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("stage,epoch,loss\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{}", e.stage, e.epoch, e.loss);
        }
        s
    }
}
