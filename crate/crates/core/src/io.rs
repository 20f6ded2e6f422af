//! File formats: trace JSON documents, trajectory CSV, and atomic writes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InteractionSchedule, OpinionState, OutcomeTrace};
use crate::numeric::fmt_f64;
use crate::simulator::{replay, SimulationConfig, StateStorage, Trace, Trajectory};

/// Writes a file through a temporary sibling and renames it into place, so a
/// failure never leaves a partial file at `path`.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// On-disk form of a trace. States are not stored; they are recomputed by
/// replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub config: SimulationConfig,
    pub schedule: Vec<[usize; 2]>,
    pub outcomes: String,
    pub x0: Vec<f64>,
}

impl TraceDocument {
    pub fn from_trace(trace: &Trace) -> Self {
        TraceDocument {
            config: trace.config.clone(),
            schedule: trace.schedule.pairs().iter().map(|&(i, j)| [i, j]).collect(),
            outcomes: trace.outcomes.to_bit_string(),
            x0: trace.x0.opinions.clone(),
        }
    }

    /// Validated components `(x0, schedule, outcomes)`.
    pub fn parts(&self) -> Result<(OpinionState, InteractionSchedule, OutcomeTrace)> {
        self.config.validate()?;
        let x0 = OpinionState::new(self.x0.clone())?;
        if x0.num_agents() != self.config.num_agents {
            return Err(Error::Shape(format!(
                "x0 has {} opinions but config says {} agents",
                x0.num_agents(),
                self.config.num_agents
            )));
        }
        let schedule = InteractionSchedule::new(
            self.config.num_agents,
            self.schedule.iter().map(|&[i, j]| (i, j)).collect(),
        )?;
        let outcomes = OutcomeTrace::from_bit_string(&self.outcomes)?;
        if schedule.len() != outcomes.len() || schedule.len() != self.config.num_steps {
            return Err(Error::Shape(format!(
                "schedule has {} entries, outcomes {}, config num_steps {}",
                schedule.len(),
                outcomes.len(),
                self.config.num_steps
            )));
        }
        Ok((x0, schedule, outcomes))
    }

    /// Rebuilds the full trace, replaying states with the config's `mu`.
    pub fn into_trace(self, storage: StateStorage) -> Result<Trace> {
        let (x0, schedule, outcomes) = self.parts()?;
        let trajectory = replay(&x0, &schedule, &outcomes, self.config.params.mu, storage)?;
        Ok(Trace {
            config: self.config,
            x0,
            schedule,
            outcomes,
            trajectory,
        })
    }
}

pub fn write_trace_json(path: &Path, trace: &Trace) -> Result<()> {
    let doc = TraceDocument::from_trace(trace);
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &doc)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn read_trace_json(path: &Path) -> Result<TraceDocument> {
    let reader = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(reader)?)
}

/// Long-form trajectory CSV with columns `t,agent_id,opinion`.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory, stride: usize) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "t,agent_id,opinion")?;
        let mut result = Ok(());
        trajectory.for_each_opinion(stride, |t, a, x| {
            if result.is_ok() {
                result = writeln!(w, "{t},{a},{}", fmt_f64(x));
            }
        });
        Ok(result?)
    })
}
