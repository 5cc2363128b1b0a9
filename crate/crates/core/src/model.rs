//! Core domain types shared by every other module: workers, tasks, state
//! variables, tokens, flexible timelines, synergy coefficients, and the
//! two-objective cost vector.
//!
//! All values here are immutable after construction and safe to share
//! across concurrent readers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Errors raised by model-level operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    /// No worker can implement the task, so no process duration exists.
    #[error("task `{0}` has no capable worker")]
    NoCapableWorker(String),
    /// A synergy lookup referenced a task that was never declared.
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    /// An interval with `min > max` or a negative bound was supplied.
    #[error("invalid duration interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
}

/// A closed duration interval `[min, max]` in time units, `0 <= min <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationInterval {
    min: f64,
    max: f64,
}

impl DurationInterval {
    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        if !(0.0 <= min && min <= max) || !min.is_finite() || !max.is_finite() {
            return Err(ModelError::InvalidInterval(min, max));
        }
        Ok(Self { min, max })
    }

    /// Zero-width interval at `value`.
    pub fn exact(value: f64) -> Result<Self, ModelError> {
        Self::new(value, value)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// Collapse to the zero-width interval at the midpoint.
    pub fn collapsed(&self) -> Self {
        let mid = self.midpoint();
        Self { min: mid, max: mid }
    }
}

/// Who decides the start and end of a task occurrence: the system (both),
/// the system only at the start, or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllabilityTag {
    Controllable,
    PartiallyControllable,
    Uncontrollable,
}

/// The worker set is fixed: one human and one robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerId {
    Human,
    Robot,
}

impl WorkerId {
    pub const ALL: [WorkerId; 2] = [WorkerId::Human, WorkerId::Robot];

    pub fn name(&self) -> &'static str {
        match self {
            WorkerId::Human => "human",
            WorkerId::Robot => "robot",
        }
    }
}

impl core::fmt::Display for WorkerId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A production step with no geometry attached. Duration is per worker;
/// robot-executable tasks reference the action template that realizes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDef {
    pub id: String,
    /// The production value this task contributes to (e.g. a `DoRow_k`).
    pub production_target: String,
    pub allowed_workers: BTreeSet<WorkerId>,
    pub per_worker_duration: BTreeMap<WorkerId, DurationInterval>,
    /// Required for every robot-allowed task.
    pub action_template_ref: Option<String>,
    /// Scene labels the action resolves against (e.g. "blue_cube", "slot_A1").
    pub goal_labels: BTreeSet<String>,
}

impl TaskDef {
    pub fn duration_for(&self, worker: WorkerId) -> Option<DurationInterval> {
        self.per_worker_duration.get(&worker).copied()
    }
}

/// A state variable: the values a domain feature ranges over, with their
/// transition, duration, and controllability functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVariable {
    pub id: String,
    pub values: Vec<String>,
    pub transitions: BTreeMap<String, BTreeSet<String>>,
    pub durations: BTreeMap<String, DurationInterval>,
    pub controllability: BTreeMap<String, ControllabilityTag>,
}

impl StateVariable {
    pub fn declares(&self, value: &str) -> bool {
        self.values.iter().any(|v| v == value)
    }

    /// Whether `from -> to` is a legal consecutive pair on this timeline.
    pub fn allows_transition(&self, from: &str, to: &str) -> bool {
        self.transitions
            .get(from)
            .map(|succ| succ.contains(to))
            .unwrap_or(false)
    }
}

/// One timed occurrence of a state-variable value. `end_interval` is the
/// flexible end-time window; `duration_interval` the flexible duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub id: u32,
    pub state_variable: String,
    pub value: String,
    pub end_interval: (f64, f64),
    pub duration_interval: DurationInterval,
    pub tag: ControllabilityTag,
}

impl Token {
    /// Latest start consistent with the flexible windows: `e' - d`.
    pub fn latest_start(&self) -> f64 {
        self.end_interval.1 - self.duration_interval.min()
    }

    /// Earliest start consistent with the flexible windows: `e - d'`.
    pub fn earliest_start(&self) -> f64 {
        self.end_interval.0 - self.duration_interval.max()
    }
}

/// The ordered token sequence of one state variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexibleTimeline {
    pub state_variable: String,
    pub tokens: Vec<Token>,
}

/// Pairwise coupling of concurrent robot/human tasks: a finite duration
/// increment (positive = interference) or decrement (negative = good
/// synergy), or `Incompatible` for pairs that must never run concurrently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Synergy {
    Coefficient(f64),
    Incompatible,
}

impl Synergy {
    pub fn coefficient(&self) -> Option<f64> {
        match self {
            Synergy::Coefficient(s) => Some(*s),
            Synergy::Incompatible => None,
        }
    }
}

/// The synergy matrix, indexed `(robot task, human task)`.
///
/// Pairs without a stored coefficient are `Incompatible`; the diagonal
/// `(t, t)` is always `Incompatible` regardless of stored entries, so it can
/// never leak into cost sums.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynergyMatrix {
    robot_tasks: BTreeSet<String>,
    human_tasks: BTreeSet<String>,
    entries: BTreeMap<(String, String), f64>,
}

impl SynergyMatrix {
    pub fn new(robot_tasks: BTreeSet<String>, human_tasks: BTreeSet<String>) -> Self {
        Self {
            robot_tasks,
            human_tasks,
            entries: BTreeMap::new(),
        }
    }

    /// Store a finite coefficient. Diagonal pairs are rejected silently:
    /// they stay `Incompatible` by definition.
    pub fn set(&mut self, robot_task: &str, human_task: &str, s: f64) {
        if robot_task == human_task {
            return;
        }
        self.entries
            .insert((String::from(robot_task), String::from(human_task)), s);
    }

    pub fn robot_tasks(&self) -> &BTreeSet<String> {
        &self.robot_tasks
    }

    pub fn human_tasks(&self) -> &BTreeSet<String> {
        &self.human_tasks
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.entries
            .iter()
            .map(|((r, h), s)| (r.as_str(), h.as_str(), *s))
    }

    /// The stored coupling for `(robot_task, human_task)`, or
    /// `Incompatible` when absent or diagonal.
    pub fn lookup(&self, robot_task: &str, human_task: &str) -> Result<Synergy, ModelError> {
        if !self.robot_tasks.contains(robot_task) {
            return Err(ModelError::UnknownTask(String::from(robot_task)));
        }
        if !self.human_tasks.contains(human_task) {
            return Err(ModelError::UnknownTask(String::from(human_task)));
        }
        if robot_task == human_task {
            return Ok(Synergy::Incompatible);
        }
        Ok(self
            .entries
            .get(&(String::from(robot_task), String::from(human_task)))
            .map(|s| Synergy::Coefficient(*s))
            .unwrap_or(Synergy::Incompatible))
    }

    /// The matrix restricted to the given task sets; entries outside them
    /// are dropped.
    pub fn restricted(
        &self,
        robot_tasks: BTreeSet<String>,
        human_tasks: BTreeSet<String>,
    ) -> Self {
        let entries = self
            .entries
            .iter()
            .filter(|((r, h), _)| robot_tasks.contains(r) && human_tasks.contains(h))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        Self {
            robot_tasks,
            human_tasks,
            entries,
        }
    }

    /// Worst (largest) finite coefficient of a robot task's row, if any
    /// finite pairing exists at all.
    pub fn worst_row_coefficient(&self, robot_task: &str) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for ((r, _), s) in self.entries.iter() {
            if r == robot_task {
                worst = Some(match worst {
                    Some(w) if w >= *s => w,
                    _ => *s,
                });
            }
        }
        worst
    }
}

/// Lookup of the synergy coefficient for a concurrent pair.
pub fn synergy_lookup(
    matrix: &SynergyMatrix,
    robot_task: &str,
    human_task: &str,
) -> Result<Synergy, ModelError> {
    matrix.lookup(robot_task, human_task)
}

/// The two objectives of plan optimization: duration (makespan-style) and
/// synergy. `f_s` may be negative when concurrency saves time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    pub f_d: f64,
    pub f_s: f64,
}

impl CostVector {
    pub fn new(f_d: f64, f_s: f64) -> Self {
        Self { f_d, f_s }
    }
}

/// Temporal relations available in synchronization rules. `Contains` places
/// the required token inside the trigger's span, `Before` ends it before the
/// trigger starts, `Meets` ends it exactly at the trigger's start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalRelation {
    Contains,
    Before,
    Meets,
}

/// One requirement of a synchronization rule. When `state_variable` is
/// `None` the supporting token may live on any state variable declaring the
/// value; the planner branches over the task's capable workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub state_variable: Option<String>,
    pub value: String,
    pub relation: TemporalRelation,
}

/// Trigger-to-requirements synchronization rule: whenever a token with the
/// trigger value appears, every requirement must be supported by a token in
/// the stated temporal relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynchronizationRule {
    pub trigger: (String, String),
    pub requirements: Vec<Requirement>,
}

/// Process-level duration of a task from the per-worker intervals: the
/// elementwise envelope `[min over workers of d_min, max over workers of
/// d_max]`. Empty map means nobody can do the task.
pub fn derive_process_duration(
    task: &str,
    workers: &BTreeMap<WorkerId, DurationInterval>,
) -> Result<DurationInterval, ModelError> {
    if workers.is_empty() {
        return Err(ModelError::NoCapableWorker(String::from(task)));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in workers.values() {
        lo = lo.min(d.min());
        hi = hi.max(d.max());
    }
    DurationInterval::new(lo, hi)
}
