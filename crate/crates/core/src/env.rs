//! Bandit and tabular gridworld environments.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{sample_action, PolicyParams};
use crate::rng::RandomStream;
use crate::scalar::Scalar;

const FOUR_ROOMS_JSON: &str = include_str!("../configs/four_rooms.json");
const GRIDWORLD_5X5_JSON: &str = include_str!("../configs/gridworld_5x5.json");

/// Reward distribution of one arm. Support is always bounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArmDistribution {
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ArmDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            ArmDistribution::Deterministic { value } => value,
            ArmDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// `(lo, hi)` of the support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ArmDistribution::Deterministic { value } => (value, value),
            ArmDistribution::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        let (lo, hi) = self.support();
        lo == hi
    }

    fn validate(&self, index: usize) -> Result<()> {
        let (lo, hi) = self.support();
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::field(
                &format!("arms[{index}]"),
                format!("support [{lo}, {hi}] must be finite with lo <= hi"),
            ));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        match *self {
            ArmDistribution::Deterministic { value } => value,
            ArmDistribution::Uniform { lo, hi } => rng.uniform_in(lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BanditSerde", into = "BanditSerde")]
pub struct BanditSpec {
    arms: Vec<ArmDistribution>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BanditSerde {
    arms: Vec<ArmDistribution>,
}

impl TryFrom<BanditSerde> for BanditSpec {
    type Error = Error;
    fn try_from(raw: BanditSerde) -> Result<Self> {
        BanditSpec::new(raw.arms)
    }
}

impl From<BanditSpec> for BanditSerde {
    fn from(spec: BanditSpec) -> Self {
        BanditSerde { arms: spec.arms }
    }
}

impl BanditSpec {
    pub fn new(arms: Vec<ArmDistribution>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::field("arms", "a bandit needs at least two arms"));
        }
        for (i, arm) in arms.iter().enumerate() {
            arm.validate(i)?;
        }
        Ok(Self { arms })
    }

    /// Bandit whose arms pay fixed rewards.
    pub fn deterministic(rewards: &[f64]) -> Result<Self> {
        Self::new(
            rewards
                .iter()
                .map(|&value| ArmDistribution::Deterministic { value })
                .collect(),
        )
    }

    pub fn arms(&self) -> &[ArmDistribution] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(ArmDistribution::mean).collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.arms.iter().all(ArmDistribution::is_deterministic)
    }

    /// Index of the arm with the strictly largest mean, if unique.
    pub fn optimal_arm(&self) -> Option<usize> {
        let means = self.means();
        let (best, &top) = means.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        let ties = means.iter().filter(|&&m| m == top).count();
        (ties == 1).then_some(best)
    }

    /// Largest and second-largest mean reward.
    pub fn top_two_means(&self) -> (f64, f64) {
        let mut means = self.means();
        means.sort_by(|a, b| b.total_cmp(a));
        (means[0], means[1])
    }

    /// Largest absolute reward any arm can pay.
    pub fn reward_bound(&self) -> f64 {
        self.arms
            .iter()
            .map(|a| {
                let (lo, hi) = a.support();
                lo.abs().max(hi.abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn pull(&self, arm: usize, rng: &mut RandomStream) -> Result<f64> {
        let dist = self.arms.get(arm).ok_or(Error::ArmOutOfRange {
            arm,
            arms: self.arms.len(),
        })?;
        Ok(dist.sample(rng))
    }
}

/// Samples a reward from `arm`.
pub fn bandit_pull(spec: &BanditSpec, arm: usize, rng: &mut RandomStream) -> Result<f64> {
    spec.pull(arm, rng)
}

/// `sum_i pi_i mu_i`.
pub fn expected_return_exact<T: Scalar>(spec: &BanditSpec, probs: &[T]) -> T {
    spec.arms
        .iter()
        .zip(probs)
        .map(|(arm, &p)| p * T::lit(arm.mean()))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(Error::ActionOutOfRange {
                action: index,
                actions: 4,
            })
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Deterministic 4-action grid. Cells are numbered row-major; moves into walls
/// or off the grid leave the agent in place; entering a goal pays its reward
/// and ends the episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridLayout", into = "GridLayout")]
pub struct GridworldSpec {
    width: usize,
    height: usize,
    walls: BTreeSet<usize>,
    start: usize,
    goals: BTreeMap<usize, f64>,
    discount: f64,
    horizon: usize,
}

/// JSON form: one whitespace-separated token per cell, `.` open, `#` wall,
/// `S` start and `G:<reward>` goal.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridLayout {
    rows: Vec<String>,
    discount: f64,
    #[serde(default = "default_horizon")]
    horizon: usize,
}

fn default_horizon() -> usize {
    200
}

impl TryFrom<GridLayout> for GridworldSpec {
    type Error = Error;
    fn try_from(layout: GridLayout) -> Result<Self> {
        GridworldSpec::from_rows(&layout.rows, layout.discount, layout.horizon)
    }
}

impl From<GridworldSpec> for GridLayout {
    fn from(spec: GridworldSpec) -> Self {
        GridLayout {
            rows: spec.to_rows(),
            discount: spec.discount,
            horizon: spec.horizon,
        }
    }
}

impl GridworldSpec {
    pub fn from_rows<S: AsRef<str>>(rows: &[S], discount: f64, horizon: usize) -> Result<Self> {
        let height = rows.len();
        if height == 0 {
            return Err(Error::InvalidLayout("no rows".into()));
        }
        let mut width = None;
        let mut walls = BTreeSet::new();
        let mut goals = BTreeMap::new();
        let mut start = None;
        for (r, row) in rows.iter().enumerate() {
            let tokens: Vec<&str> = row.as_ref().split_whitespace().collect();
            match width {
                None => width = Some(tokens.len()),
                Some(w) if w != tokens.len() => {
                    return Err(Error::InvalidLayout(format!(
                        "row {r} has {} cells, expected {w}",
                        tokens.len()
                    )))
                }
                _ => {}
            }
            let w = tokens.len();
            for (c, tok) in tokens.iter().enumerate() {
                let cell = r * w + c;
                match *tok {
                    "." => {}
                    "#" => {
                        walls.insert(cell);
                    }
                    "S" => {
                        if start.replace(cell).is_some() {
                            return Err(Error::InvalidLayout("more than one start".into()));
                        }
                    }
                    t if t.starts_with("G:") => {
                        let reward: f64 = t[2..].parse().map_err(|_| {
                            Error::InvalidLayout(format!("bad goal reward `{t}` at ({r}, {c})"))
                        })?;
                        if !reward.is_finite() {
                            return Err(Error::InvalidLayout(format!("non-finite goal `{t}`")));
                        }
                        goals.insert(cell, reward);
                    }
                    other => {
                        return Err(Error::InvalidLayout(format!(
                            "unknown token `{other}` at ({r}, {c})"
                        )))
                    }
                }
            }
        }
        let width = width.unwrap_or(0);
        if width == 0 {
            return Err(Error::InvalidLayout("empty rows".into()));
        }
        let start = start.ok_or_else(|| Error::InvalidLayout("missing start `S`".into()))?;
        let spec = Self {
            width,
            height,
            walls,
            start,
            goals,
            discount,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::field("discount", "must lie in (0, 1)"));
        }
        if self.goals.is_empty() {
            return Err(Error::InvalidLayout("no goal cells".into()));
        }
        let dist = self.distances_from_start();
        let farthest = self
            .goals
            .keys()
            .map(|&g| {
                dist[g].ok_or_else(|| {
                    Error::InvalidLayout(format!("goal cell {g} unreachable from start"))
                })
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(0);
        if self.horizon < farthest {
            return Err(Error::field(
                "horizon",
                format!(
                    "{} is shorter than the farthest goal distance {farthest}",
                    self.horizon
                ),
            ));
        }
        Ok(())
    }

    pub fn four_rooms() -> Self {
        serde_json::from_str::<EnvSpec>(FOUR_ROOMS_JSON)
            .ok()
            .and_then(|e| e.into_gridworld())
            .expect("shipped four-rooms layout is valid")
    }

    pub fn five_by_five() -> Self {
        serde_json::from_str::<EnvSpec>(GRIDWORLD_5X5_JSON)
            .ok()
            .and_then(|e| e.into_gridworld())
            .expect("shipped 5x5 layout is valid")
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn goals(&self) -> &BTreeMap<usize, f64> {
        &self.goals
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.walls.contains(&cell)
    }

    pub fn is_goal(&self, cell: usize) -> bool {
        self.goals.contains_key(&cell)
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    fn neighbour(&self, cell: usize, mv: Move) -> usize {
        let (r, c) = self.coords(cell);
        let target = match mv {
            Move::Up if r > 0 => Some((r - 1, c)),
            Move::Down if r + 1 < self.height => Some((r + 1, c)),
            Move::Left if c > 0 => Some((r, c - 1)),
            Move::Right if c + 1 < self.width => Some((r, c + 1)),
            _ => None,
        };
        match target {
            Some((r, c)) if !self.is_wall(self.cell(r, c)) => self.cell(r, c),
            _ => cell,
        }
    }

    /// One deterministic transition: `(next, reward, done)`.
    pub fn step(&self, state: usize, action: usize) -> Result<(usize, f64, bool)> {
        if state >= self.num_cells() || self.is_wall(state) {
            return Err(Error::StateOutOfRange {
                state,
                states: self.num_cells(),
            });
        }
        if self.is_goal(state) {
            return Err(Error::TerminalState(state));
        }
        let next = self.neighbour(state, Move::from_index(action)?);
        match self.goals.get(&next) {
            Some(&reward) => Ok((next, reward, true)),
            None => Ok((next, 0.0, false)),
        }
    }

    /// Breadth-first move counts from the start cell (`None` if unreachable).
    pub fn distances_from_start(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_cells()];
        dist[self.start] = Some(0);
        let mut queue = VecDeque::from([self.start]);
        while let Some(cell) = queue.pop_front() {
            if self.is_goal(cell) {
                continue;
            }
            let d = dist[cell].unwrap_or(0);
            for mv in Move::ALL {
                let next = self.neighbour(cell, mv);
                if dist[next].is_none() {
                    dist[next] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }

    pub fn to_rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|r| {
                (0..self.width)
                    .map(|c| {
                        let cell = self.cell(r, c);
                        if self.is_wall(cell) {
                            "#".to_string()
                        } else if cell == self.start {
                            "S".to_string()
                        } else if let Some(g) = self.goals.get(&cell) {
                            format!("G:{g}")
                        } else {
                            ".".to_string()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }
}

/// Deterministic gridworld transition.
pub fn gridworld_step(
    spec: &GridworldSpec,
    state: usize,
    action: usize,
) -> Result<(usize, f64, bool)> {
    spec.step(state, action)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Bandit(BanditSpec),
    Gridworld(GridworldSpec),
}

impl EnvSpec {
    pub fn num_states(&self) -> usize {
        match self {
            EnvSpec::Bandit(_) => 1,
            EnvSpec::Gridworld(g) => g.num_cells(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvSpec::Bandit(b) => b.num_arms(),
            EnvSpec::Gridworld(_) => 4,
        }
    }

    pub fn discount(&self) -> f64 {
        match self {
            EnvSpec::Bandit(_) => 1.0,
            EnvSpec::Gridworld(g) => g.discount(),
        }
    }

    pub fn as_bandit(&self) -> Option<&BanditSpec> {
        match self {
            EnvSpec::Bandit(b) => Some(b),
            EnvSpec::Gridworld(_) => None,
        }
    }

    pub fn as_gridworld(&self) -> Option<&GridworldSpec> {
        match self {
            EnvSpec::Gridworld(g) => Some(g),
            EnvSpec::Bandit(_) => None,
        }
    }

    pub fn into_gridworld(self) -> Option<GridworldSpec> {
        match self {
            EnvSpec::Gridworld(g) => Some(g),
            EnvSpec::Bandit(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    steps: Vec<Step>,
    discount: f64,
    discounted_return: f64,
    reached_goal: Option<usize>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, discount: f64, reached_goal: Option<usize>) -> Self {
        let discounted_return = discounted_return(&steps, discount);
        Self {
            steps,
            discount,
            discounted_return,
            reached_goal,
        }
    }

    /// Single-step bandit trajectory.
    pub fn bandit(arm: usize, reward: f64) -> Self {
        Self::new(
            vec![Step {
                state: 0,
                action: arm,
                reward,
            }],
            1.0,
            None,
        )
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn discounted_return(&self) -> f64 {
        self.discounted_return
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Goal cell the episode ended in, if any.
    pub fn reached_goal(&self) -> Option<usize> {
        self.reached_goal
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trajectory(len={}, return={})",
            self.steps.len(),
            self.discounted_return
        )
    }
}

/// `sum_t gamma^t r_t`, accumulated front to back.
pub fn discounted_return(steps: &[Step], discount: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for s in steps {
        total += weight * s.reward;
        weight *= discount;
    }
    total
}

/// Samples one episode from `policy`.
pub fn rollout<T: Scalar>(
    env: &EnvSpec,
    policy: &PolicyParams<T>,
    rng: &mut RandomStream,
) -> Result<Trajectory> {
    check_dimensions(env, policy)?;
    match env {
        EnvSpec::Bandit(bandit) => {
            let probs = policy.action_probs(0)?;
            let arm = sample_action(&probs, rng);
            let reward = bandit.pull(arm, rng)?;
            Ok(Trajectory::bandit(arm, reward))
        }
        EnvSpec::Gridworld(grid) => {
            let mut probs = vec![T::zero(); 4];
            let mut steps = Vec::new();
            let mut state = grid.start();
            let mut reached = None;
            for _ in 0..grid.horizon() {
                policy.action_probs_into(state, &mut probs)?;
                let action = sample_action(&probs, rng);
                let (next, reward, done) = grid.step(state, action)?;
                steps.push(Step {
                    state,
                    action,
                    reward,
                });
                state = next;
                if done {
                    reached = Some(next);
                    break;
                }
            }
            Ok(Trajectory::new(steps, grid.discount(), reached))
        }
    }
}

pub(crate) fn check_dimensions<T: Scalar>(env: &EnvSpec, policy: &PolicyParams<T>) -> Result<()> {
    if policy.num_states() != env.num_states() || policy.num_actions() != env.num_actions() {
        return Err(Error::DimensionMismatch {
            policy_states: policy.num_states(),
            policy_actions: policy.num_actions(),
            env_states: env.num_states(),
            env_actions: env.num_actions(),
        });
    }
    Ok(())
}
