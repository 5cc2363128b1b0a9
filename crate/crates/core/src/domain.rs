//! Problem construction: the cross-checked problem specification shared by
//! planner and simulator, and the mosaic benchmark generator.
//!
//! A mosaic problem has one production state variable (`DoRow_k` per row),
//! two behavior state variables (`robot`, `human`) whose values are the
//! pick-and-place tasks each worker may do, and one containment rule per
//! row tying the row to its tasks. Allocation constraints follow cube
//! color: orange cubes are robot-only, white cubes human-only, blue cubes
//! either.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    ControllabilityTag, DurationInterval, Requirement, StateVariable, SynchronizationRule,
    SynergyMatrix, TaskDef, TemporalRelation, WorkerId,
};
use crate::motion::{
    refine_task_to_motion, ActionTemplate, Cell, Configuration, PlanningMode, Scene, Workspace,
};

pub const ROBOT_SV: &str = "robot";
pub const HUMAN_SV: &str = "human";
pub const PROCESS_SV: &str = "process";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("infeasible specification: {0}")]
    InfeasibleSpec(String),
}

/// A fully cross-checked problem: state variables, tasks, rules, synergy,
/// the workspace it refers to, and the planning horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub state_variables: Vec<StateVariable>,
    pub tasks: Vec<TaskDef>,
    pub rules: Vec<SynchronizationRule>,
    pub synergy: SynergyMatrix,
    pub workspace_ref: String,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn state_variable(&self, id: &str) -> Option<&StateVariable> {
        self.state_variables.iter().find(|sv| sv.id == id)
    }

    pub fn task(&self, id: &str) -> Option<&TaskDef> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn worker_sv(&self, worker: WorkerId) -> Option<&StateVariable> {
        self.state_variable(match worker {
            WorkerId::Robot => ROBOT_SV,
            WorkerId::Human => HUMAN_SV,
        })
    }

    /// The production state variable: the one whose values are exactly the
    /// tasks' production targets.
    pub fn production_sv(&self) -> Option<&StateVariable> {
        let targets: BTreeSet<&str> = self
            .tasks
            .iter()
            .map(|t| t.production_target.as_str())
            .collect();
        self.state_variables.iter().find(|sv| {
            sv.id != ROBOT_SV
                && sv.id != HUMAN_SV
                && !sv.values.is_empty()
                && sv.values.iter().map(|v| v.as_str()).collect::<BTreeSet<_>>() == targets
        })
    }

    pub fn task_ids_for(&self, worker: WorkerId) -> Vec<&str> {
        self.tasks
            .iter()
            .filter(|t| t.allowed_workers.contains(&worker))
            .map(|t| t.id.as_str())
            .collect()
    }

    pub fn with_synergy(mut self, synergy: SynergyMatrix) -> Self {
        self.synergy = synergy;
        self
    }

    /// Restrict the problem to `remaining` tasks: rows whose tasks are all
    /// done disappear, rules lose their satisfied requirements, and the
    /// synergy matrix is carried over. Used for replanning.
    pub fn residual(&self, remaining: &BTreeSet<String>) -> ProblemSpec {
        let tasks: Vec<TaskDef> = self
            .tasks
            .iter()
            .filter(|t| remaining.contains(&t.id))
            .cloned()
            .collect();
        let remaining_targets: BTreeSet<String> =
            tasks.iter().map(|t| t.production_target.clone()).collect();
        let task_ids: BTreeSet<String> = tasks.iter().map(|t| t.id.clone()).collect();
        let production = self.production_sv().map(|sv| sv.id.clone());

        let state_variables = self
            .state_variables
            .iter()
            .map(|sv| {
                let keep = |v: &String| {
                    if Some(&sv.id) == production.as_ref() {
                        remaining_targets.contains(v)
                    } else if sv.id == ROBOT_SV || sv.id == HUMAN_SV {
                        task_ids.contains(v)
                    } else {
                        true
                    }
                };
                let values: Vec<String> = sv.values.iter().filter(|v| keep(v)).cloned().collect();
                let vset: BTreeSet<&String> = values.iter().collect();
                StateVariable {
                    id: sv.id.clone(),
                    transitions: sv
                        .transitions
                        .iter()
                        .filter(|(v, _)| vset.contains(v))
                        .map(|(v, succ)| {
                            (
                                v.clone(),
                                succ.iter().filter(|s| vset.contains(s)).cloned().collect(),
                            )
                        })
                        .collect(),
                    durations: sv
                        .durations
                        .iter()
                        .filter(|(v, _)| vset.contains(v))
                        .map(|(v, d)| (v.clone(), *d))
                        .collect(),
                    controllability: sv
                        .controllability
                        .iter()
                        .filter(|(v, _)| vset.contains(v))
                        .map(|(v, c)| (v.clone(), *c))
                        .collect(),
                    values,
                }
            })
            .collect();

        let rules = self
            .rules
            .iter()
            .filter(|r| remaining_targets.contains(&r.trigger.1))
            .map(|r| SynchronizationRule {
                trigger: r.trigger.clone(),
                requirements: r
                    .requirements
                    .iter()
                    .filter(|req| {
                        task_ids.contains(&req.value) || remaining_targets.contains(&req.value)
                    })
                    .cloned()
                    .collect(),
            })
            .collect();

        let robot_capable: BTreeSet<String> = tasks
            .iter()
            .filter(|t| t.allowed_workers.contains(&WorkerId::Robot))
            .map(|t| t.id.clone())
            .collect();
        let human_capable: BTreeSet<String> = tasks
            .iter()
            .filter(|t| t.allowed_workers.contains(&WorkerId::Human))
            .map(|t| t.id.clone())
            .collect();
        ProblemSpec {
            state_variables,
            tasks,
            rules,
            synergy: self.synergy.restricted(robot_capable, human_capable),
            workspace_ref: self.workspace_ref.clone(),
            horizon: self.horizon,
        }
    }

    /// Full cross-reference check. Errors name the offending symbol.
    pub fn validate(&self) -> Result<(), DomainError> {
        let fail = |msg: String| Err(DomainError::Validation(msg));
        if !(self.horizon > 0.0) {
            return fail("horizon must be positive".to_string());
        }
        if self.tasks.is_empty() {
            return fail("task list is empty".to_string());
        }
        let mut sv_ids = BTreeSet::new();
        for sv in &self.state_variables {
            if !sv_ids.insert(sv.id.as_str()) {
                return fail(format!("duplicate state variable `{}`", sv.id));
            }
            let values: BTreeSet<&str> = sv.values.iter().map(|v| v.as_str()).collect();
            if values.len() != sv.values.len() {
                return fail(format!("state variable `{}` repeats a value", sv.id));
            }
            for (v, succ) in &sv.transitions {
                if !values.contains(v.as_str()) {
                    return fail(format!(
                        "transition from undeclared value `{v}` in `{}`",
                        sv.id
                    ));
                }
                for s in succ {
                    if !values.contains(s.as_str()) {
                        return fail(format!(
                            "transition to undeclared value `{s}` in `{}`",
                            sv.id
                        ));
                    }
                }
            }
            for v in &sv.values {
                if !sv.durations.contains_key(v) {
                    return fail(format!("value `{v}` of `{}` has no duration", sv.id));
                }
                if !sv.controllability.contains_key(v) {
                    return fail(format!(
                        "value `{v}` of `{}` has no controllability tag",
                        sv.id
                    ));
                }
            }
        }
        for worker_sv in [ROBOT_SV, HUMAN_SV] {
            if !sv_ids.contains(worker_sv) {
                return fail(format!("missing behavior state variable `{worker_sv}`"));
            }
        }
        let production = self
            .production_sv()
            .ok_or_else(|| {
                DomainError::Validation(
                    "no production state variable matches the tasks' production targets"
                        .to_string(),
                )
            })?
            .id
            .clone();

        let mut task_ids = BTreeSet::new();
        for t in &self.tasks {
            if !task_ids.insert(t.id.as_str()) {
                return fail(format!("duplicate task `{}`", t.id));
            }
            if t.allowed_workers.is_empty() {
                return fail(format!("task `{}` has no allowed worker", t.id));
            }
            for w in &t.allowed_workers {
                if t.duration_for(*w).is_none() {
                    return fail(format!("task `{}` lacks a duration for {w}", t.id));
                }
                let sv = self
                    .worker_sv(*w)
                    .expect("worker state variables checked above");
                if !sv.declares(&t.id) {
                    return fail(format!(
                        "task `{}` is allowed for {w} but `{}` does not declare it",
                        t.id, sv.id
                    ));
                }
            }
            if t.allowed_workers.contains(&WorkerId::Robot) {
                match &t.action_template_ref {
                    None => {
                        return fail(format!(
                            "robot-allowed task `{}` has no action template",
                            t.id
                        ))
                    }
                    Some(name) if ActionTemplate::by_name(name).is_none() => {
                        return fail(format!("unknown action template `{name}`"));
                    }
                    _ => {}
                }
            }
        }
        for w in WorkerId::ALL {
            let sv = self.worker_sv(w).expect("checked above");
            for v in &sv.values {
                match self.task(v) {
                    Some(t) if t.allowed_workers.contains(&w) => {}
                    Some(_) => {
                        return fail(format!("`{}` declares `{v}` but {w} may not do it", sv.id))
                    }
                    None => return fail(format!("`{}` declares unknown task `{v}`", sv.id)),
                }
            }
        }

        let mut triggered: BTreeSet<&str> = BTreeSet::new();
        for rule in &self.rules {
            let (sv_id, value) = (&rule.trigger.0, &rule.trigger.1);
            let sv = self.state_variable(sv_id).ok_or_else(|| {
                DomainError::Validation(format!(
                    "rule triggers on undeclared state variable `{sv_id}`"
                ))
            })?;
            if !sv.declares(value) {
                return fail(format!("rule trigger value `{value}` not in `{sv_id}`"));
            }
            if *sv_id == production {
                triggered.insert(value.as_str());
            }
            for req in &rule.requirements {
                match &req.state_variable {
                    Some(rsv) => {
                        let sv = self.state_variable(rsv).ok_or_else(|| {
                            DomainError::Validation(format!(
                                "rule requirement references undeclared state variable `{rsv}`"
                            ))
                        })?;
                        if !sv.declares(&req.value) {
                            return fail(format!(
                                "rule requirement value `{}` not in `{rsv}`",
                                req.value
                            ));
                        }
                    }
                    None => {
                        if !task_ids.contains(req.value.as_str()) {
                            return fail(format!(
                                "rule requirement references unknown task `{}`",
                                req.value
                            ));
                        }
                    }
                }
            }
        }
        let production_values = &self.production_sv().expect("checked").values;
        for v in production_values {
            if !triggered.contains(v.as_str()) {
                return fail(format!("production value `{v}` triggers no rule"));
            }
        }

        let robot_capable: BTreeSet<String> = self
            .task_ids_for(WorkerId::Robot)
            .into_iter()
            .map(String::from)
            .collect();
        let human_capable: BTreeSet<String> = self
            .task_ids_for(WorkerId::Human)
            .into_iter()
            .map(String::from)
            .collect();
        if *self.synergy.robot_tasks() != robot_capable
            || *self.synergy.human_tasks() != human_capable
        {
            return fail("synergy matrix task sets do not match the capable task sets".to_string());
        }
        Ok(())
    }

    /// Checks that every goal label resolves in the workspace and that the
    /// consumable pools cover the demand.
    pub fn validate_against_workspace(&self, ws: &Workspace) -> Result<(), DomainError> {
        ws.validate()
            .map_err(|e| DomainError::Validation(e.to_string()))?;
        let mut demand: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &self.tasks {
            for label in &t.goal_labels {
                if ws.resolve(label).is_none() {
                    return Err(DomainError::Validation(format!(
                        "goal label `{label}` of task `{}` does not resolve in the workspace",
                        t.id
                    )));
                }
                if label.ends_with("_cube") {
                    *demand.entry(label.as_str()).or_insert(0) += 1;
                }
            }
        }
        for (label, needed) in demand {
            let got = ws.resolve(label).map(|c| c.len()).unwrap_or(0);
            if got < needed {
                return Err(DomainError::Validation(format!(
                    "pool `{label}` has {got} objects but {needed} tasks need one"
                )));
            }
        }
        Ok(())
    }
}

/// Cube colors of the mosaic domain and who may move them.
pub fn color_workers(color: &str) -> Option<BTreeSet<WorkerId>> {
    match color {
        "blue" => Some([WorkerId::Human, WorkerId::Robot].into_iter().collect()),
        "orange" => Some([WorkerId::Robot].into_iter().collect()),
        "white" => Some([WorkerId::Human].into_iter().collect()),
        _ => None,
    }
}

/// A mosaic to assemble: colored cells on a rows x cols board plus the
/// available cube counts per color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicSpec {
    pub rows: u32,
    pub cols: u32,
    /// Cell label ("A1") to color ("blue" | "orange" | "white").
    pub cells: BTreeMap<String, String>,
    #[serde(rename = "cubes")]
    pub available_cubes: BTreeMap<String, u32>,
}

pub fn cell_label(col: u32, row: u32) -> String {
    let letter = (b'A' + col as u8) as char;
    format!("{letter}{}", row + 1)
}

impl MosaicSpec {
    /// Board with exactly the needed cube counts. Layout strings are one
    /// per row, characters `b`/`o`/`w` per column.
    pub fn from_layout(layout: &[&str]) -> Self {
        let rows = layout.len() as u32;
        let cols = layout.first().map(|r| r.len()).unwrap_or(0) as u32;
        let mut cells = BTreeMap::new();
        let mut cubes: BTreeMap<String, u32> = BTreeMap::new();
        for (r, line) in layout.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                let color = match ch {
                    'b' => "blue",
                    'o' => "orange",
                    'w' => "white",
                    other => panic!("unknown color code {other:?}"),
                };
                cells.insert(cell_label(c as u32, r as u32), color.to_string());
                *cubes.entry(color.to_string()).or_insert(0) += 1;
            }
        }
        Self {
            rows,
            cols,
            cells,
            available_cubes: cubes,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(DomainError::Validation("empty mosaic".to_string()));
        }
        if self.cols > 26 {
            return Err(DomainError::Validation("more than 26 columns".to_string()));
        }
        let mut needed: BTreeMap<&str, u32> = BTreeMap::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let label = cell_label(c, r);
                let color = self
                    .cells
                    .get(&label)
                    .ok_or_else(|| DomainError::Validation(format!("missing cell `{label}`")))?;
                *needed.entry(color.as_str()).or_insert(0) += 1;
            }
        }
        if self.cells.len() as u32 != self.rows * self.cols {
            return Err(DomainError::Validation(format!(
                "expected {} cells, found {}",
                self.rows * self.cols,
                self.cells.len()
            )));
        }
        for (color, n) in needed {
            let have = self.available_cubes.get(color).copied().unwrap_or(0);
            if have < n {
                return Err(DomainError::Validation(format!(
                    "{n} `{color}` cells but only {have} cubes"
                )));
            }
        }
        Ok(())
    }

    pub fn color_of(&self, label: &str) -> Option<&str> {
        self.cells.get(label).map(|c| c.as_str())
    }
}

/// Calibrated human duration midpoints for the benchmark boards, used in
/// place of distance-derived defaults where a board needs a clear-cut
/// optimal allocation. Only the 4-cube board ships one.
pub fn preset_human_table(cubes: u32) -> BTreeMap<String, f64> {
    let table: &[(&str, f64)] = match cubes {
        4 => &[
            ("PickPlace_A1", 12.0),
            ("PickPlace_B1", 7.0),
            ("PickPlace_B2", 6.0),
        ],
        _ => &[],
    };
    table
        .iter()
        .map(|(k, v)| (String::from(*k), *v))
        .collect()
}

/// Generator configuration of the shipped benchmark boards.
pub fn preset_config(cubes: u32, midpoint_durations: bool) -> GenerationConfig {
    GenerationConfig {
        midpoint_durations,
        human_table: preset_human_table(cubes),
        ..GenerationConfig::default()
    }
}

/// The benchmark family: 4, 9, 16, and 50 cube boards. Cell colors are a
/// versioned data table, not derived at run time.
pub fn mosaic_preset(cubes: u32) -> Option<MosaicSpec> {
    let layout: &[&str] = match cubes {
        4 => &["bw", "ob"],
        9 => &["bbw", "obw", "obb"],
        16 => &["obwb", "bbwb", "obwb", "obbw"],
        50 => &[
            "ooobwbbbwb",
            "obbbwbwbwb",
            "ooobwbwbwb",
            "bbobbwbwbb",
            "ooobbwbwbb",
        ],
        _ => return None,
    };
    Some(MosaicSpec::from_layout(layout))
}

/// Knobs of the mosaic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    /// Robot grid speed in cells per time unit.
    pub robot_speed: f64,
    /// Human effective speed used to derive human duration midpoints.
    pub human_speed: f64,
    /// Half-width of human duration intervals in time units.
    pub human_spread: f64,
    /// Relative half-width of robot duration intervals.
    pub robot_spread_frac: f64,
    /// Emit Before-rules chaining DoRow_k after DoRow_{k-1}.
    pub row_precedence: bool,
    /// Collapse every task duration interval to its midpoint.
    pub midpoint_durations: bool,
    pub safety_radius: f64,
    pub slowdown_factor: f64,
    pub horizon_override: Option<f64>,
    /// Human duration midpoint overrides per task id.
    pub human_table: BTreeMap<String, f64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            robot_speed: 2.0,
            human_speed: 2.0,
            human_spread: 5.0,
            robot_spread_frac: 0.10,
            row_precedence: false,
            midpoint_durations: false,
            safety_radius: 2.0,
            slowdown_factor: 0.5,
            horizon_override: None,
            human_table: BTreeMap::new(),
        }
    }
}

/// A generated benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProblem {
    pub problem: ProblemSpec,
    pub workspace: Workspace,
}

/// Round up a non-negative float without the std math intrinsics.
fn ceil_pos(x: f64) -> f64 {
    let truncated = x as u64 as f64;
    if truncated < x {
        truncated + 1.0
    } else {
        truncated
    }
}

fn build_workspace(spec: &MosaicSpec, config: &GenerationConfig, seed: u64) -> Workspace {
    let rows = spec.rows as i32;
    let cols = spec.cols as i32;
    let total_cubes: u32 = spec.available_cubes.values().sum();
    // Wide, shallow tray: cubes spread across the full bench so each
    // worker has nearer stock on its own side.
    let per_row = total_cubes.min(8).max(1) as i32;
    let tray_rows = (total_cubes as i32 + per_row - 1) / per_row;
    let mut width = (cols + 10).max(4 + 2 * per_row);
    // Same parity as cols: slots sit mirror-symmetric between the homes,
    // so each worker's journeys mirror the other's exactly.
    if (width - cols) % 2 != 0 {
        width += 1;
    }
    let slot_x0 = (width - cols) / 2;
    let slot_y0 = 1;
    let gap_y = slot_y0 + rows;
    let divider_y = gap_y + 1;
    let tray_y0 = divider_y + 1;
    let height = tray_y0 + 2 * tray_rows;

    // Fixture rail between board and tray, with mirror-placed
    // pass-throughs next to each home column.
    let mut obstacles = BTreeSet::new();
    let mut gaps = BTreeSet::from([2, width - 3]);
    if width >= 24 {
        gaps.insert(width / 2);
    }
    for x in 1..width - 1 {
        if !gaps.contains(&x) {
            obstacles.insert(Cell(x, divider_y));
        }
    }

    let mut locations: BTreeMap<String, Vec<Cell>> = BTreeMap::new();
    for r in 0..rows {
        for c in 0..cols {
            let label = cell_label(c as u32, r as u32);
            locations.insert(
                format!("slot_{label}"),
                vec![Cell(slot_x0 + c, slot_y0 + r)],
            );
        }
    }

    // Tray positions mirror-symmetric about the bench axis, filled row by
    // row from the outside in; sorted by x afterwards so the orange block
    // sits left (robot side), blue centered, white right (human side).
    let mut positions: Vec<Cell> = Vec::new();
    let mut remaining = total_cubes as i32;
    let mut y = tray_y0;
    while remaining > 0 {
        let m = remaining.min(per_row);
        for k in 0..m / 2 {
            positions.push(Cell(2 + 2 * k, y));
            positions.push(Cell(width - 3 - 2 * k, y));
        }
        if m % 2 == 1 {
            positions.push(Cell(width / 2, y));
        }
        remaining -= m;
        y += 2;
    }
    positions.sort();
    let n_orange = spec.available_cubes.get("orange").copied().unwrap_or(0) as usize;
    let n_white = spec.available_cubes.get("white").copied().unwrap_or(0) as usize;
    let n_blue = positions.len() - n_orange - n_white;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orange: Vec<Cell> = positions[..n_orange].to_vec();
    let mut blue: Vec<Cell> = positions[n_orange..n_orange + n_blue].to_vec();
    let mut white: Vec<Cell> = positions[n_orange + n_blue..].to_vec();
    orange.shuffle(&mut rng);
    blue.shuffle(&mut rng);
    white.shuffle(&mut rng);
    for (color, cells) in [("orange", orange), ("blue", blue), ("white", white)] {
        if !cells.is_empty() {
            locations.insert(format!("{color}_cube"), cells);
        }
    }
    locations.insert("robot_home".to_string(), vec![Cell(1, slot_y0)]);
    locations.insert("human_home".to_string(), vec![Cell(width - 2, slot_y0)]);

    Workspace {
        width,
        height,
        obstacles,
        locations,
        safety_radius: config.safety_radius,
        robot_speed: config.robot_speed,
        slowdown_factor: config.slowdown_factor,
    }
}

/// Shortest travel cost of a worker's pick-and-place journey
/// (home -> best cube of the color -> slot), used for duration midpoints.
fn journey_cost(ws: &Workspace, home: Cell, color: &str, slot: Cell) -> Option<u32> {
    let mut ws_probe = ws.clone();
    ws_probe
        .locations
        .insert("probe_slot".to_string(), vec![slot]);
    let cubes = ws.resolve(&format!("{color}_cube"))?.to_vec();
    let scene = Scene {
        workspace: &ws_probe,
        available: [(format!("{color}_cube"), cubes)].into_iter().collect(),
        robot_config: Configuration::at(home),
    };
    let task = TaskDef {
        id: "probe".to_string(),
        production_target: "probe".to_string(),
        allowed_workers: [WorkerId::Robot].into_iter().collect(),
        per_worker_duration: [(WorkerId::Robot, DurationInterval::new(0.0, 0.0).unwrap())]
            .into_iter()
            .collect(),
        action_template_ref: Some("pick_and_place".to_string()),
        goal_labels: [format!("{color}_cube"), "probe_slot".to_string()]
            .into_iter()
            .collect(),
    };
    refine_task_to_motion(
        &scene,
        ActionTemplate::PickAndPlace,
        &task,
        scene.robot_config,
        PlanningMode::Exact,
    )
    .ok()
    .map(|r| r.total_cost)
}

/// Generate the full benchmark problem for a mosaic.
///
/// Robot durations derive from the exact motion cost of each task's action
/// from the robot home at nominal speed, widened by `robot_spread_frac`;
/// human durations use the override table or the same journey costs at
/// `human_speed`, widened by `human_spread`. Human values are
/// uncontrollable, robot values partially controllable. The synergy matrix
/// starts with zero coefficients for every co-assignable pair; estimate it
/// with the simulator to get real couplings.
pub fn generate_mosaic(
    spec: &MosaicSpec,
    config: &GenerationConfig,
    seed: u64,
) -> Result<GeneratedProblem, DomainError> {
    spec.validate()?;
    for (label, color) in &spec.cells {
        if color_workers(color).is_none() {
            return Err(DomainError::InfeasibleSpec(format!(
                "cell `{label}` has color `{color}` with no capable worker"
            )));
        }
    }
    let workspace = build_workspace(spec, config, seed);
    let robot_home = workspace.resolve("robot_home").unwrap()[0];
    let human_home = workspace.resolve("human_home").unwrap()[0];

    let mut tasks = Vec::new();
    let mut row_tasks: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let label = cell_label(c, r);
            let color = spec.color_of(&label).expect("validated").to_string();
            let workers = color_workers(&color).expect("validated");
            let slot = workspace.resolve(&format!("slot_{label}")).unwrap()[0];

            let mut per_worker_duration = BTreeMap::new();
            if workers.contains(&WorkerId::Robot) {
                let cost = journey_cost(&workspace, robot_home, &color, slot).ok_or_else(|| {
                    DomainError::InfeasibleSpec(format!("robot cannot reach cell `{label}`"))
                })?;
                let nominal = cost as f64 / config.robot_speed;
                let spread = if config.midpoint_durations {
                    0.0
                } else {
                    nominal * config.robot_spread_frac
                };
                per_worker_duration.insert(
                    WorkerId::Robot,
                    DurationInterval::new(nominal - spread, nominal + spread)
                        .map_err(|e| DomainError::Validation(e.to_string()))?,
                );
            }
            if workers.contains(&WorkerId::Human) {
                let nominal = match config.human_table.get(&format!("PickPlace_{label}")) {
                    Some(v) => *v,
                    None => {
                        let cost = journey_cost(&workspace, human_home, &color, slot)
                            .ok_or_else(|| {
                                DomainError::InfeasibleSpec(format!(
                                    "human cannot reach cell `{label}`"
                                ))
                            })?;
                        cost as f64 / config.human_speed
                    }
                };
                let spread = if config.midpoint_durations {
                    0.0
                } else {
                    config.human_spread.min(nominal)
                };
                per_worker_duration.insert(
                    WorkerId::Human,
                    DurationInterval::new(nominal - spread, nominal + spread)
                        .map_err(|e| DomainError::Validation(e.to_string()))?,
                );
            }

            let task = TaskDef {
                id: format!("PickPlace_{label}"),
                production_target: format!("DoRow_{}", r + 1),
                allowed_workers: workers.clone(),
                per_worker_duration,
                action_template_ref: workers
                    .contains(&WorkerId::Robot)
                    .then(|| "pick_and_place".to_string()),
                goal_labels: [format!("{color}_cube"), format!("slot_{label}")]
                    .into_iter()
                    .collect(),
            };
            row_tasks.entry(r + 1).or_default().push(task.id.clone());
            tasks.push(task);
        }
    }

    let horizon = config.horizon_override.unwrap_or_else(|| {
        let serial: f64 = tasks
            .iter()
            .map(|t| {
                t.per_worker_duration
                    .values()
                    .fold(0.0f64, |acc, d| acc.max(d.max()))
            })
            .sum();
        ceil_pos(1.3 * serial + 30.0)
    });

    let complete = |values: &[String]| -> BTreeMap<String, BTreeSet<String>> {
        values
            .iter()
            .map(|v| {
                (
                    v.clone(),
                    values.iter().filter(|o| *o != v).cloned().collect(),
                )
            })
            .collect()
    };

    let production_values: Vec<String> = (1..=spec.rows).map(|r| format!("DoRow_{r}")).collect();
    let production_transitions = if config.row_precedence {
        production_values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let succ: BTreeSet<String> =
                    production_values.get(i + 1).cloned().into_iter().collect();
                (v.clone(), succ)
            })
            .collect()
    } else {
        complete(&production_values)
    };
    let production_sv = StateVariable {
        id: PROCESS_SV.to_string(),
        transitions: production_transitions,
        durations: production_values
            .iter()
            .map(|v| (v.clone(), DurationInterval::new(0.0, horizon).unwrap()))
            .collect(),
        controllability: production_values
            .iter()
            .map(|v| (v.clone(), ControllabilityTag::Controllable))
            .collect(),
        values: production_values.clone(),
    };

    let worker_sv = |worker: WorkerId, tag: ControllabilityTag| -> StateVariable {
        let values: Vec<String> = tasks
            .iter()
            .filter(|t| t.allowed_workers.contains(&worker))
            .map(|t| t.id.clone())
            .collect();
        StateVariable {
            id: match worker {
                WorkerId::Robot => ROBOT_SV.to_string(),
                WorkerId::Human => HUMAN_SV.to_string(),
            },
            transitions: complete(&values),
            durations: values
                .iter()
                .map(|v| {
                    let t = tasks.iter().find(|t| &t.id == v).expect("own task");
                    (v.clone(), t.duration_for(worker).expect("capable"))
                })
                .collect(),
            controllability: values.iter().map(|v| (v.clone(), tag)).collect(),
            values,
        }
    };
    let robot_sv = worker_sv(WorkerId::Robot, ControllabilityTag::PartiallyControllable);
    let human_sv = worker_sv(WorkerId::Human, ControllabilityTag::Uncontrollable);

    let mut rules = Vec::new();
    for r in 1..=spec.rows {
        let mut requirements: Vec<Requirement> = row_tasks
            .get(&r)
            .into_iter()
            .flatten()
            .map(|task| Requirement {
                state_variable: None,
                value: task.clone(),
                relation: TemporalRelation::Contains,
            })
            .collect();
        if config.row_precedence && r > 1 {
            requirements.push(Requirement {
                state_variable: Some(PROCESS_SV.to_string()),
                value: format!("DoRow_{}", r - 1),
                relation: TemporalRelation::Before,
            });
        }
        rules.push(SynchronizationRule {
            trigger: (PROCESS_SV.to_string(), format!("DoRow_{r}")),
            requirements,
        });
    }

    let robot_capable: BTreeSet<String> = tasks
        .iter()
        .filter(|t| t.allowed_workers.contains(&WorkerId::Robot))
        .map(|t| t.id.clone())
        .collect();
    let human_capable: BTreeSet<String> = tasks
        .iter()
        .filter(|t| t.allowed_workers.contains(&WorkerId::Human))
        .map(|t| t.id.clone())
        .collect();
    let mut synergy = SynergyMatrix::new(robot_capable.clone(), human_capable.clone());
    for r in &robot_capable {
        for h in &human_capable {
            if r != h {
                synergy.set(r, h, 0.0);
            }
        }
    }

    let problem = ProblemSpec {
        state_variables: vec![production_sv, robot_sv, human_sv],
        tasks,
        rules,
        synergy,
        workspace_ref: String::new(),
        horizon,
    };
    problem.validate()?;
    problem.validate_against_workspace(&workspace)?;
    Ok(GeneratedProblem { problem, workspace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_4_matches_the_benchmark_board() {
        let spec = mosaic_preset(4).unwrap();
        assert_eq!(spec.color_of("A1"), Some("blue"));
        assert_eq!(spec.color_of("B1"), Some("white"));
        assert_eq!(spec.color_of("A2"), Some("orange"));
        assert_eq!(spec.color_of("B2"), Some("blue"));
        spec.validate().unwrap();
    }

    #[test]
    fn generated_4_cube_problem_has_expected_allocation() {
        let spec = mosaic_preset(4).unwrap();
        let generated = generate_mosaic(&spec, &GenerationConfig::default(), 0).unwrap();
        let p = &generated.problem;
        assert_eq!(p.tasks.len(), 4);
        let a2 = p.task("PickPlace_A2").unwrap();
        assert_eq!(a2.allowed_workers, [WorkerId::Robot].into_iter().collect());
        let b1 = p.task("PickPlace_B1").unwrap();
        assert_eq!(b1.allowed_workers, [WorkerId::Human].into_iter().collect());
        for blue in ["PickPlace_A1", "PickPlace_B2"] {
            assert_eq!(p.task(blue).unwrap().allowed_workers.len(), 2);
        }
        let process = p.production_sv().unwrap();
        assert_eq!(process.values, ["DoRow_1", "DoRow_2"]);
        assert_eq!(p.rules.len(), 2);
    }

    #[test]
    fn every_generated_human_value_is_uncontrollable() {
        let spec = mosaic_preset(9).unwrap();
        let generated = generate_mosaic(&spec, &GenerationConfig::default(), 1).unwrap();
        let human = generated.problem.worker_sv(WorkerId::Human).unwrap();
        assert!(!human.values.is_empty());
        assert!(human
            .controllability
            .values()
            .all(|c| *c == ControllabilityTag::Uncontrollable));
        let robot = generated.problem.worker_sv(WorkerId::Robot).unwrap();
        assert!(robot
            .controllability
            .values()
            .all(|c| *c == ControllabilityTag::PartiallyControllable));
    }

    #[test]
    fn fifty_cube_board_matches_the_published_feasible_range() {
        let spec = mosaic_preset(50).unwrap();
        assert_eq!(spec.rows * spec.cols, 50);
        let generated = generate_mosaic(&spec, &GenerationConfig::default(), 2).unwrap();
        let p = &generated.problem;
        assert_eq!(p.tasks.len(), 50);
        let human_capable = p.task_ids_for(WorkerId::Human).len();
        let white_only = p
            .tasks
            .iter()
            .filter(|t| t.allowed_workers == [WorkerId::Human].into_iter().collect())
            .count();
        // Human may do whites and blues; the feasible human share spans
        // [white, white + blue] = [12, 39] on this board.
        assert_eq!(human_capable, 39);
        assert_eq!(white_only, 12);
        assert_eq!(spec.available_cubes["orange"], 11);
    }

    #[test]
    fn blue_cells_have_two_workers_others_one() {
        let spec = mosaic_preset(16).unwrap();
        let generated = generate_mosaic(&spec, &GenerationConfig::default(), 3).unwrap();
        for task in &generated.problem.tasks {
            let label = task.id.strip_prefix("PickPlace_").unwrap();
            let expected = match spec.color_of(label).unwrap() {
                "blue" => 2,
                _ => 1,
            };
            assert_eq!(task.allowed_workers.len(), expected, "task {}", task.id);
        }
    }

    #[test]
    fn empty_task_list_fails_validation() {
        let spec = mosaic_preset(4).unwrap();
        let mut generated = generate_mosaic(&spec, &GenerationConfig::default(), 0).unwrap();
        generated.problem.tasks.clear();
        assert!(matches!(
            generated.problem.validate(),
            Err(DomainError::Validation(_))
        ));
    }

    #[test]
    fn dangling_rule_reference_names_the_symbol() {
        let spec = mosaic_preset(4).unwrap();
        let mut generated = generate_mosaic(&spec, &GenerationConfig::default(), 0).unwrap();
        generated.problem.rules[0].trigger.0 = "ghost".to_string();
        match generated.problem.validate() {
            Err(DomainError::Validation(msg)) => assert!(msg.contains("ghost")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_color_is_infeasible() {
        let mut spec = mosaic_preset(4).unwrap();
        spec.cells.insert("A1".to_string(), "green".to_string());
        spec.available_cubes.insert("green".to_string(), 1);
        assert!(matches!(
            generate_mosaic(&spec, &GenerationConfig::default(), 0),
            Err(DomainError::InfeasibleSpec(_))
        ));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = mosaic_preset(9).unwrap();
        let a = generate_mosaic(&spec, &GenerationConfig::default(), 42).unwrap();
        let b = generate_mosaic(&spec, &GenerationConfig::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = generate_mosaic(&spec, &GenerationConfig::default(), 43).unwrap();
        assert_ne!(
            a.workspace.locations["blue_cube"],
            c.workspace.locations["blue_cube"]
        );
    }

    #[test]
    fn midpoint_flag_collapses_task_durations() {
        let spec = mosaic_preset(4).unwrap();
        let config = GenerationConfig {
            midpoint_durations: true,
            ..GenerationConfig::default()
        };
        let generated = generate_mosaic(&spec, &config, 0).unwrap();
        for t in &generated.problem.tasks {
            for d in t.per_worker_duration.values() {
                assert_eq!(d.width(), 0.0);
            }
        }
    }

    #[test]
    fn residual_problem_drops_finished_rows() {
        let spec = mosaic_preset(4).unwrap();
        let generated = generate_mosaic(&spec, &GenerationConfig::default(), 0).unwrap();
        let remaining: BTreeSet<String> = ["PickPlace_A2".to_string(), "PickPlace_B2".to_string()]
            .into_iter()
            .collect();
        let residual = generated.problem.residual(&remaining);
        residual.validate().unwrap();
        assert_eq!(residual.tasks.len(), 2);
        let process = residual.production_sv().unwrap();
        assert_eq!(process.values, ["DoRow_2"]);
        assert_eq!(residual.rules.len(), 1);
    }
}
