//! Line-delimited JSON run logs.
//!
//! A log is one `header` record, then for each iteration its `step` records
//! in time order followed by one `iteration` record. Field names are frozen in
//! `docs/run-log-schema.md`; bump [`SCHEMA_VERSION`] on any change.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::CycleDiagnostics;
use crate::dynamics::{self, Input, State};
use crate::runner::{IterationResult, RunResult, StepDiagnostics};
use crate::scenario::{Scenario, ScenarioError, ScenarioFile};

pub const SCHEMA_VERSION: &str = "i2lqr-runlog/1";

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported schema {0:?} (expected {SCHEMA_VERSION:?})")]
    Schema(String),
    #[error("header scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Record {
    Header {
        schema: String,
        scenario: ScenarioFile,
    },
    Step {
        iteration: usize,
        t: usize,
        state: State,
        input: Input,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        controller: Option<StepRecord>,
    },
    Iteration {
        iteration: usize,
        completed: bool,
        steps: usize,
        seconds: f64,
        final_state: State,
        collision_free: bool,
        inputs_admissible: bool,
        min_clearance: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub cycles_used: usize,
    /// `[iteration, time]` of the selected terminal candidate.
    pub selected: [usize; 2],
    pub selected_cost_to_go: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<Vec<CycleRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleRecord {
    pub guide: State,
    pub sources: Vec<[usize; 2]>,
    pub costs_to_go: Vec<u32>,
    pub selection_costs: Vec<f64>,
    pub solve_costs: Vec<f64>,
    pub best: usize,
}

impl From<&CycleDiagnostics> for CycleRecord {
    fn from(c: &CycleDiagnostics) -> Self {
        Self {
            guide: c.guide,
            sources: c.sources.iter().map(|s| [s.iteration, s.time]).collect(),
            costs_to_go: c.costs_to_go.clone(),
            selection_costs: c.selection_costs.clone(),
            solve_costs: c.solve_costs.clone(),
            best: c.best,
        }
    }
}

impl From<&StepDiagnostics> for StepRecord {
    fn from(d: &StepDiagnostics) -> Self {
        Self {
            cycles_used: d.cycles_used,
            selected: [d.selected.iteration, d.selected.time],
            selected_cost_to_go: d.selected_cost_to_go,
            cycles: d.cycles.as_ref().map(|cs| cs.iter().map(CycleRecord::from).collect()),
        }
    }
}

fn write_record(out: &mut impl Write, record: &Record) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record).map_err(io::Error::from)?;
    out.write_all(b"\n")
}

pub fn write_header(out: &mut impl Write, scenario: &Scenario) -> io::Result<()> {
    write_record(out, &Record::Header { schema: SCHEMA_VERSION.into(), scenario: ScenarioFile::from(scenario) })
}

pub fn write_iteration(out: &mut impl Write, it: &IterationResult, dt: f64) -> io::Result<()> {
    for (t, input) in it.inputs.iter().enumerate() {
        write_record(
            out,
            &Record::Step {
                iteration: it.iteration,
                t,
                state: it.states[t],
                input: *input,
                controller: it.diagnostics.get(t).map(StepRecord::from),
            },
        )?;
    }
    write_record(
        out,
        &Record::Iteration {
            iteration: it.iteration,
            completed: it.completed,
            steps: it.steps(),
            seconds: it.steps() as f64 * dt,
            final_state: *it.states.last().expect("non-empty trajectory"),
            collision_free: it.collision_free,
            inputs_admissible: it.inputs_admissible,
            min_clearance: it.min_clearance,
        },
    )
}

/// Write a complete log for `result`.
pub fn write_run_log(out: &mut impl Write, scenario: &Scenario, result: &RunResult) -> io::Result<()> {
    write_header(out, scenario)?;
    for it in &result.iterations {
        write_iteration(out, it, scenario.model.dt)?;
    }
    Ok(())
}

/// A parsed log: resolved scenario plus per-iteration trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub scenario: Scenario,
    pub iterations: Vec<LoggedIteration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedIteration {
    pub iteration: usize,
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
    pub completed: bool,
    pub seconds: f64,
    pub collision_free: bool,
    pub inputs_admissible: bool,
    pub min_clearance: Option<f64>,
}

/// Parse a log from text. Checks record order and indices but not dynamics;
/// see [`replay`].
pub fn parse_run_log(text: &str) -> Result<RunLog, RunLogError> {
    read_run_log(text.as_bytes())
}

pub fn read_run_log(reader: impl BufRead) -> Result<RunLog, RunLogError> {
    let mut scenario = None;
    let mut iterations = Vec::new();
    let mut pending: Option<(usize, Vec<State>, Vec<Input>)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| RunLogError::Parse { line: lineno, message: e.to_string() })?;
        let structure = |message: String| RunLogError::Structure { line: lineno, message };
        match record {
            Record::Header { schema, scenario: file } => {
                if scenario.is_some() {
                    return Err(structure("duplicate header".into()));
                }
                if schema != SCHEMA_VERSION {
                    return Err(RunLogError::Schema(schema));
                }
                let s = file.resolve()?;
                s.validate()?;
                scenario = Some(s);
            }
            _ if scenario.is_none() => return Err(structure("record before header".into())),
            Record::Step { iteration, t, state, input, .. } => {
                let expected_iteration = iterations.len();
                let (it, states, inputs) = pending.get_or_insert_with(|| (iteration, Vec::new(), Vec::new()));
                if *it != iteration || iteration != expected_iteration {
                    return Err(structure(format!("step for iteration {iteration} while expecting {expected_iteration}")));
                }
                if t != inputs.len() {
                    return Err(structure(format!("step t = {t} out of order (expected {})", inputs.len())));
                }
                states.push(state);
                inputs.push(input);
            }
            Record::Iteration {
                iteration,
                completed,
                steps,
                seconds,
                final_state,
                collision_free,
                inputs_admissible,
                min_clearance,
            } => {
                let expected_iteration = iterations.len();
                let (it, mut states, inputs) = pending.take().unwrap_or((iteration, Vec::new(), Vec::new()));
                if it != iteration || iteration != expected_iteration {
                    return Err(structure(format!("summary for iteration {iteration} while expecting {expected_iteration}")));
                }
                if steps != inputs.len() {
                    return Err(structure(format!("summary claims {steps} steps but {} were logged", inputs.len())));
                }
                states.push(final_state);
                iterations.push(LoggedIteration {
                    iteration,
                    states,
                    inputs,
                    completed,
                    seconds,
                    collision_free,
                    inputs_admissible,
                    min_clearance,
                });
            }
        }
    }
    if pending.is_some() {
        return Err(RunLogError::Structure { line: 0, message: "log ends inside an iteration".into() });
    }
    let scenario = scenario.ok_or(RunLogError::Structure { line: 0, message: "missing header".into() })?;
    Ok(RunLog { scenario, iterations })
}

/// First divergence found by [`replay`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub iteration: usize,
    pub t: usize,
    pub logged: State,
    pub recomputed: State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub iterations: usize,
    pub steps: usize,
    pub mismatches: Vec<ReplayMismatch>,
    /// Iterations containing an input outside the actuator bounds.
    pub inadmissible: Vec<usize>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty() && self.inadmissible.is_empty()
    }
}

/// Re-simulate every logged input sequence and compare states bit for bit.
pub fn replay(log: &RunLog) -> ReplayReport {
    let s = &log.scenario;
    let mut mismatches = Vec::new();
    let mut inadmissible = Vec::new();
    let mut steps = 0;
    for it in &log.iterations {
        steps += it.inputs.len();
        let recomputed = dynamics::rollout(s.x0, &it.inputs, &s.model);
        if let Some(t) = recomputed.iter().zip(&it.states).position(|(a, b)| a != b) {
            mismatches.push(ReplayMismatch { iteration: it.iteration, t, logged: it.states[t], recomputed: recomputed[t] });
        }
        if !it.inputs.iter().all(Input::is_admissible) {
            inadmissible.push(it.iteration);
        }
    }
    ReplayReport { iterations: log.iterations.len(), steps, mismatches, inadmissible }
}

/// One row per executed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iteration: usize,
    pub seconds: f64,
    pub completed: bool,
    pub min_clearance: Option<f64>,
}

pub fn summary_table(log: &RunLog) -> Vec<SummaryRow> {
    log.iterations
        .iter()
        .map(|it| SummaryRow {
            iteration: it.iteration,
            seconds: it.seconds,
            completed: it.completed,
            min_clearance: it.min_clearance,
        })
        .collect()
}

/// CSV rendering of the summary table.
pub fn write_summary_csv(out: &mut impl Write, rows: &[SummaryRow]) -> io::Result<()> {
    writeln!(out, "iteration,completion_time_s,completed,min_clearance_m")?;
    for r in rows {
        let clearance = r.min_clearance.map(|c| format!("{c:.3}")).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.iteration, r.seconds, r.completed, clearance)?;
    }
    Ok(())
}

/// Fixed-width rendering for terminals.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!("{:>9}  {:>8}  {:>9}  {:>13}\n", "iteration", "time [s]", "completed", "clearance [m]");
    for r in rows {
        let clearance = r.min_clearance.map(|c| format!("{c:.2}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:>9}  {:>8}  {:>9}  {:>13}\n",
            r.iteration,
            r.seconds,
            if r.completed { "yes" } else { "NO" },
            clearance
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    fn fake_result(scenario: &Scenario) -> RunResult {
        let inputs = vec![Input::new(2.0, 0.1), Input::new(0.3, -0.05), Input::new(-1.0, 0.0)];
        let states = dynamics::rollout(scenario.x0, &inputs, &scenario.model);
        RunResult {
            iterations: vec![IterationResult {
                iteration: 0,
                states,
                inputs,
                completed: true,
                diagnostics: Vec::new(),
                collision_free: true,
                inputs_admissible: true,
                replay_exact: true,
                min_clearance: None,
            }],
            wall_clock: Default::default(),
        }
    }

    #[test]
    fn written_log_parses_and_replays() {
        let scenario = bundled::load("no_obstacle").unwrap();
        let mut buf = Vec::new();
        write_run_log(&mut buf, &scenario, &fake_result(&scenario)).unwrap();
        let log = parse_run_log(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(log.scenario, scenario);
        assert_eq!(log.iterations.len(), 1);
        assert!(replay(&log).is_exact());
        assert_eq!(summary_table(&log)[0].seconds, 3.0);
    }

    #[test]
    fn tampered_state_is_detected() {
        let scenario = bundled::load("no_obstacle").unwrap();
        let mut result = fake_result(&scenario);
        result.iterations[0].states[2].x += 1e-12;
        let mut buf = Vec::new();
        write_run_log(&mut buf, &scenario, &result).unwrap();
        let log = parse_run_log(std::str::from_utf8(&buf).unwrap()).unwrap();
        let report = replay(&log);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].t, 2);
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse_run_log(""), Err(RunLogError::Structure { .. })));
        let step = r#"{"type":"step","iteration":0,"t":0,"state":[0,0,0,0],"input":[0,0]}"#;
        assert!(matches!(parse_run_log(step), Err(RunLogError::Structure { line: 1, .. })));
        assert!(matches!(parse_run_log("{nope"), Err(RunLogError::Parse { line: 1, .. })));
        let header = r#"{"type":"header","schema":"other/9","scenario":{}}"#;
        assert!(matches!(parse_run_log(header), Err(RunLogError::Schema(_))));
    }
}
