//! Step-size schedule files:
//! `{"I": layers, "J": [steps per layer], "gammaB": [[..]], "gammaA": [[..]], "meta": {..}}`.

use std::path::Path;

use ipnb_core::kddd::StepSizeSchedule;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::{read_json, write_json};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "J")]
    pub j: Vec<usize>,
    #[serde(rename = "gammaB")]
    pub gamma_b: Vec<Vec<f64>>,
    #[serde(rename = "gammaA")]
    pub gamma_a: Vec<Vec<f64>>,
    #[serde(default)]
    pub meta: Map<String, Value>,
}

impl ScheduleFile {
    pub fn new(s: &StepSizeSchedule, meta: Map<String, Value>) -> Self {
        Self { i: s.layers(), j: s.inner(), gamma_b: s.gamma_b.clone(), gamma_a: s.gamma_a.clone(), meta }
    }

    /// Checks `I` and `J` against the step lists.
    pub fn schedule(&self) -> Result<StepSizeSchedule> {
        let s = StepSizeSchedule::new(self.gamma_b.clone(), self.gamma_a.clone())?;
        if s.layers() != self.i || s.inner() != self.j {
            return Err(Error::Config(format!("schedule declares I={} J={:?} but lists I={} J={:?}", self.i, self.j, s.layers(), s.inner())));
        }
        Ok(s)
    }
}

pub fn read_schedule(path: &Path) -> Result<StepSizeSchedule> {
    read_json::<ScheduleFile>(path)?.schedule()
}

pub fn write_schedule(path: &Path, s: &StepSizeSchedule, meta: Map<String, Value>) -> Result<()> {
    write_json(path, &ScheduleFile::new(s, meta))
}
