//! Decentralized spectrum sharing between base stations.
//!
//! Each station serves one user and decides every slot whether to transmit
//! (action 1) or stay silent (action 0). Its user's SINR counts every other
//! transmitting station as interference; the Shannon rate feeds an
//! exponentially averaged rate `X̄`, and the per-slot reward
//! `ln((1 − 1/B)(1 + R/((B − 1) X̄)))` telescopes to the proportional
//! fairness utility `Σ_i ln X̄_i`.
//!
//! As a networked agent, station `i` tracks its own averaged rate and those
//! of its backhaul neighbors, snapped to a finite grid, plus the shared
//! channel state when fading is enabled. Stations outside its neighborhood
//! are assumed to transmit. Observations are the new averaged rate together
//! with the signal and interference levels of the slot, over the exact
//! finite set of values those quantities can take.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{Belief, StateSpace};
use crate::error::{Error, Result};
use crate::frame::NetFrame;
use crate::ipomdp::{InteractiveFrame, InteractiveStateSpace, ModelConfig, ModelFrame, ModelSet, ObsKernel};
use crate::net::{validate_graph, CommGraph, MessageKind};
use crate::solver::{NetAgent, Scenario, SimulationConfig, TabularEnv};

pub const SILENT: usize = 0;
pub const TRANSMIT: usize = 1;

/// Two-state Markov fading: the channel alternates between the configured
/// gains and `gains`, flipping with probability `flip` before each slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fading {
    pub gains: Vec<Vec<f64>>,
    pub flip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub stations: usize,
    /// Bandwidth W in Hz.
    pub bandwidth: f64,
    /// Transmit power in W.
    pub power: f64,
    /// Noise power at the user in W.
    pub noise: f64,
    /// `gains[j][i]`: gain from station `j` to the user of station `i`.
    pub gains: Vec<Vec<f64>>,
    /// Averaging parameter B > 1.
    pub averaging: f64,
    /// Averaged-rate grid, strictly increasing and positive.
    pub grid: Vec<f64>,
    /// Backhaul links between stations.
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub fading: Option<Fading>,
    /// Largest accepted |ln snap(X̄) − ln X̄| over one update.
    #[serde(default = "default_grid_error_bound")]
    pub grid_error_bound: f64,
    /// Grid index of every station's initial averaged rate.
    #[serde(default)]
    pub initial_rate: usize,
}

fn default_grid_error_bound() -> f64 {
    1.0
}

impl SpectrumConfig {
    pub fn graph(&self) -> CommGraph {
        CommGraph::new(self.stations, self.edges.iter().copied())
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.stations;
        if n == 0 {
            out.push("domain.stations must be at least 1".into());
            return out;
        }
        if !(self.averaging > 1.0) {
            out.push(format!("domain.averaging must exceed 1, got {}", self.averaging));
        }
        for (name, x) in [("bandwidth", self.bandwidth), ("power", self.power), ("noise", self.noise)] {
            if !(x > 0.0 && x.is_finite()) {
                out.push(format!("domain.{name} must be positive, got {x}"));
            }
        }
        let mut check_gains = |name: &str, g: &[Vec<f64>]| {
            if g.len() != n || g.iter().any(|row| row.len() != n) {
                out.push(format!("domain.{name} must be a {n}×{n} matrix"));
            } else if g.iter().flatten().any(|x| !(*x >= 0.0 && x.is_finite())) {
                out.push(format!("domain.{name} entries must be nonnegative"));
            }
        };
        check_gains("gains", &self.gains);
        if let Some(f) = &self.fading {
            check_gains("fading.gains", &f.gains);
            if !(0.0..=1.0).contains(&f.flip) {
                out.push(format!("domain.fading.flip must lie in [0, 1], got {}", f.flip));
            }
        }
        if self.grid.is_empty() {
            out.push("domain.grid must not be empty".into());
        }
        if self.grid.first().is_some_and(|x| !(*x > 0.0)) {
            out.push("domain.grid points must be positive".into());
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            out.push("domain.grid must be strictly increasing".into());
        }
        if self.initial_rate >= self.grid.len().max(1) {
            out.push(format!("domain.initial_rate {} is off the grid", self.initial_rate));
        }
        if let Err(e) = validate_graph(&self.graph()) {
            out.push(e.to_string());
        }
        out
    }

    fn channels(&self) -> usize {
        if self.fading.is_some() {
            2
        } else {
            1
        }
    }

    fn gain(&self, channel: usize, from: usize, to: usize) -> f64 {
        match (channel, &self.fading) {
            (1, Some(f)) => f.gains[from][to],
            _ => self.gains[from][to],
        }
    }

    /// `Pr(c' | c)` of the shared channel.
    fn channel_step(&self, c: usize, c2: usize) -> f64 {
        match &self.fading {
            None => 1.0,
            Some(f) if c == c2 => 1.0 - f.flip,
            Some(f) => f.flip,
        }
    }

    fn signal(&self, channel: usize, i: usize, actions: &[usize]) -> f64 {
        self.gain(channel, i, i) * self.power * actions[i] as f64
    }

    fn interference(&self, channel: usize, i: usize, actions: &[usize]) -> f64 {
        (0..self.stations)
            .filter(|&j| j != i)
            .map(|j| self.gain(channel, j, i) * self.power * actions[j] as f64)
            .sum()
    }

    fn rate(&self, channel: usize, i: usize, actions: &[usize]) -> f64 {
        let s = self.signal(channel, i, actions);
        shannon_rate(s / (self.noise + self.interference(channel, i, actions)), self.bandwidth)
    }
}

/// `h_ii P a_i / (σ² + Σ_{j≠i} h_ji P a_j)` under the configured static
/// gains; actions are 0 (silent) or 1 (transmit).
pub fn sinr(i: usize, actions: &[usize], cfg: &SpectrumConfig) -> f64 {
    cfg.signal(0, i, actions) / (cfg.noise + cfg.interference(0, i, actions))
}

/// `W log₂(1 + SINR)`.
pub fn shannon_rate(sinr: f64, bandwidth: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}

/// `(1 − 1/B) X̄ + R/B`, without snapping.
pub fn avg_rate_update(avg: f64, rate: f64, averaging: f64) -> f64 {
    (1.0 - 1.0 / averaging) * avg + rate / averaging
}

/// Index of the grid point nearest to `x`, ties to the lower point.
pub fn snap_to_grid(x: f64, grid: &[f64]) -> usize {
    let mut best = 0;
    for (k, g) in grid.iter().enumerate().skip(1) {
        if (g - x).abs() < (grid[best] - x).abs() {
            best = k;
        }
    }
    best
}

/// `ln((1 − 1/B)(1 + R/((B − 1) X̄)))`.
pub fn pf_step_reward(avg: f64, rate: f64, averaging: f64) -> Result<f64> {
    if !(avg > 0.0) {
        return Err(Error::DegenerateAverage { value: avg });
    }
    Ok(((1.0 - 1.0 / averaging) * (1.0 + rate / ((averaging - 1.0) * avg))).ln())
}

/// `points` log-spaced values from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    let (lo, hi) = (min.ln(), max.ln());
    (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// An unsnapped rate trajectory with its per-slot rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTrajectory {
    pub initial: Vec<f64>,
    /// `rewards[t][i]`.
    pub rewards: Vec<Vec<f64>>,
    pub finals: Vec<f64>,
}

/// Runs the exact averaging recursion under the static gains for the given
/// per-slot action vectors.
pub fn exact_trajectory(cfg: &SpectrumConfig, initial: &[f64], actions: &[Vec<usize>]) -> Result<RateTrajectory> {
    let mut avg = initial.to_vec();
    let mut rewards = Vec::with_capacity(actions.len());
    for a in actions {
        let mut slot = Vec::with_capacity(cfg.stations);
        let mut next = avg.clone();
        for i in 0..cfg.stations {
            let r = cfg.rate(0, i, a);
            slot.push(pf_step_reward(avg[i], r, cfg.averaging)?);
            next[i] = avg_rate_update(avg[i], r, cfg.averaging);
        }
        avg = next;
        rewards.push(slot);
    }
    Ok(RateTrajectory {
        initial: initial.to_vec(),
        rewards,
        finals: avg,
    })
}

/// `|Σ_i ln X̄_i(T) − Σ_i ln X̄_i(0) − Σ_t Σ_i r_i(t)|`.
pub fn pf_utility_check(trajectory: &RateTrajectory) -> f64 {
    let utility = |x: &[f64]| x.iter().map(|v| v.ln()).sum::<f64>();
    let rewards: f64 = trajectory.rewards.iter().flatten().sum();
    (utility(&trajectory.finals) - utility(&trajectory.initial) - rewards).abs()
}

/// Largest `|ln snap(X̄') − ln X̄'|` over grid points, stations, channels and
/// action profiles.
pub fn grid_error(cfg: &SpectrumConfig) -> f64 {
    let mut worst = 0.0f64;
    for profile in profiles(cfg.stations) {
        for c in 0..cfg.channels() {
            for i in 0..cfg.stations {
                let r = cfg.rate(c, i, &profile);
                for x in &cfg.grid {
                    let x2 = avg_rate_update(*x, r, cfg.averaging);
                    let snapped = cfg.grid[snap_to_grid(x2, &cfg.grid)];
                    worst = worst.max((snapped.ln() - x2.ln()).abs());
                }
            }
        }
    }
    worst
}

fn profiles(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..1usize << n).map(move |x| (0..n).map(|i| (x >> (n - 1 - i)) & 1).collect())
}

/// Exact distinct values of a station's signal and interference.
#[derive(Debug, Clone)]
struct Levels {
    signal: Vec<f64>,
    interference: Vec<f64>,
}

fn distinct(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

fn position(levels: &[f64], x: f64) -> usize {
    levels.iter().position(|v| *v == x).expect("level was enumerated")
}

impl Levels {
    fn of(cfg: &SpectrumConfig, i: usize) -> Self {
        let mut signal = Vec::new();
        let mut interference = Vec::new();
        for profile in profiles(cfg.stations) {
            for c in 0..cfg.channels() {
                signal.push(cfg.signal(c, i, &profile));
                interference.push(cfg.interference(c, i, &profile));
            }
        }
        Self {
            signal: distinct(signal),
            interference: distinct(interference),
        }
    }

    fn count(&self, grid: usize) -> usize {
        grid * self.signal.len() * self.interference.len()
    }

    /// Observation index of (new rate, signal, interference).
    fn observation(&self, x: usize, signal: f64, interference: f64) -> usize {
        (x * self.signal.len() + position(&self.signal, signal)) * self.interference.len()
            + position(&self.interference, interference)
    }
}

/// A station's local view: itself first, then its neighbors ascending.
struct View<'a> {
    cfg: &'a SpectrumConfig,
    members: Vec<usize>,
}

impl<'a> View<'a> {
    fn new(cfg: &'a SpectrumConfig, i: usize) -> Self {
        let mut members = vec![i];
        members.extend(cfg.graph().neighbors(i));
        Self { cfg, members }
    }

    fn grid(&self) -> usize {
        self.cfg.grid.len()
    }

    fn num_states(&self) -> usize {
        self.grid().pow(self.members.len() as u32) * self.cfg.channels()
    }

    fn decode(&self, s: usize) -> (Vec<usize>, usize) {
        let c = s % self.cfg.channels();
        let mut rest = s / self.cfg.channels();
        let mut xs = vec![0; self.members.len()];
        for k in (0..self.members.len()).rev() {
            xs[k] = rest % self.grid();
            rest /= self.grid();
        }
        (xs, c)
    }

    fn encode(&self, xs: &[usize], c: usize) -> usize {
        xs.iter().fold(0, |acc, x| acc * self.grid() + x) * self.cfg.channels() + c
    }

    /// Full action profile: own action, neighbor actions, everyone else
    /// transmitting.
    fn profile(&self, a: usize, neighbors: &[usize]) -> Vec<usize> {
        let mut p = vec![TRANSMIT; self.cfg.stations];
        p[self.members[0]] = a;
        for (k, &j) in self.members[1..].iter().enumerate() {
            p[j] = neighbors[k];
        }
        p
    }

    /// Deterministic successor rates of the view's members under channel `c2`.
    fn next_rates(&self, xs: &[usize], c2: usize, profile: &[usize]) -> Vec<usize> {
        self.members
            .iter()
            .zip(xs)
            .map(|(&v, &x)| {
                let r = self.cfg.rate(c2, v, profile);
                snap_to_grid(avg_rate_update(self.cfg.grid[x], r, self.cfg.averaging), &self.cfg.grid)
            })
            .collect()
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

/// Station `i`'s frame: transitions, observations and rewards over its view.
///
/// States enumerate the grid indices of station `i` and then of its
/// neighbors in ascending order, followed by the channel state, row-major
/// with the channel fastest. The joint neighbor action is the neighbors'
/// on/off bits, first neighbor most significant.
pub fn station_frame(cfg: &SpectrumConfig, i: usize, discount: f64) -> Result<NetFrame> {
    let view = View::new(cfg, i);
    let d = view.members.len() - 1;
    let ns = view.num_states();
    let nn = 1usize << d;
    let levels = Levels::of(cfg, i);
    let no = levels.count(view.grid());
    let mut t = vec![0.0; ns * 2 * nn * ns];
    let mut o = vec![0.0; ns * 2 * nn * no];
    let mut r = vec![0.0; ns * 2 * nn];
    for s in 0..ns {
        let (xs, c) = view.decode(s);
        for a in 0..2 {
            for n in 0..nn {
                let neighbors: Vec<usize> = (0..d).map(|k| (n >> (d - 1 - k)) & 1).collect();
                let profile = view.profile(a, &neighbors);
                let row = (s * 2 + a) * nn + n;
                for c2 in 0..cfg.channels() {
                    let p = cfg.channel_step(c, c2);
                    if p == 0.0 {
                        continue;
                    }
                    let s2 = view.encode(&view.next_rates(&xs, c2, &profile), c2);
                    t[row * ns + s2] += p;
                    r[row] += p * pf_step_reward(cfg.grid[xs[0]], cfg.rate(c2, i, &profile), cfg.averaging)?;
                }
            }
        }
    }
    for s2 in 0..ns {
        let (xs, c2) = view.decode(s2);
        for a in 0..2 {
            for n in 0..nn {
                let neighbors: Vec<usize> = (0..d).map(|k| (n >> (d - 1 - k)) & 1).collect();
                let profile = view.profile(a, &neighbors);
                let obs = levels.observation(xs[0], cfg.signal(c2, i, &profile), cfg.interference(c2, i, &profile));
                o[((s2 * 2 + a) * nn + n) * no + obs] = 1.0;
            }
        }
    }
    NetFrame::new(ns, labels("a", 2), labels("o", no), vec![2; d], t, o, r, discount)
}

/// Neighbor `j`'s observation expressed over station `i`'s view.
fn neighbor_kernel(cfg: &SpectrumConfig, i: usize, j: usize) -> ObsKernel {
    let view = View::new(cfg, i);
    let d = view.members.len() - 1;
    let nn = 1usize << d;
    let levels = Levels::of(cfg, j);
    let no = levels.count(view.grid());
    let slot = view.members.iter().position(|&v| v == j).expect("j neighbors i");
    let mut data = vec![0.0; view.num_states() * 2 * nn * no];
    for s2 in 0..view.num_states() {
        let (xs, c2) = view.decode(s2);
        for a in 0..2 {
            for n in 0..nn {
                let neighbors: Vec<usize> = (0..d).map(|k| (n >> (d - 1 - k)) & 1).collect();
                let profile = view.profile(a, &neighbors);
                let obs = levels.observation(xs[slot], cfg.signal(c2, j, &profile), cfg.interference(c2, j, &profile));
                data[((s2 * 2 + a) * nn + n) * no + obs] = 1.0;
            }
        }
    }
    ObsKernel::new(no, data)
}

fn initial_state(view: &View<'_>) -> usize {
    view.encode(&vec![view.cfg.initial_rate; view.members.len()], 0)
}

/// The networked scenario: one level-1 agent per station whose neighbor
/// models are level-0 stations that average over their own neighbors'
/// actions uniformly.
pub fn build_spectrum_model(cfg: &SpectrumConfig, sim: &SimulationConfig) -> Result<Scenario> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v.join("; ")));
    }
    if sim.message_type == MessageKind::Belief {
        return Err(Error::InvalidConfig(
            "spectrum scenarios exchange action or observation messages".into(),
        ));
    }
    let error = grid_error(cfg);
    if error > cfg.grid_error_bound {
        return Err(Error::GridTooCoarse {
            error,
            bound: cfg.grid_error_bound,
        });
    }
    let graph = cfg.graph();
    // Mixed neighbor-action beliefs never close, so candidates stop at the
    // expansion depth.
    let model_cfg = ModelConfig {
        depth: sim.model_depth.min(sim.expansion_depth),
        ..sim.model_config()
    };
    let frames: Vec<NetFrame> = (0..cfg.stations)
        .map(|i| station_frame(cfg, i, sim.discount))
        .collect::<Result<_>>()?;
    let mut level0: HashMap<usize, Arc<ModelSet>> = HashMap::new();
    let mut agents = Vec::with_capacity(cfg.stations);
    for i in 0..cfg.stations {
        let neighbors = graph.neighbors(i);
        let mut sets = Vec::with_capacity(neighbors.len());
        for &j in &neighbors {
            let set = match level0.entry(j) {
                Entry::Occupied(e) => e.get().clone(),
                Entry::Vacant(e) => {
                    let f = &frames[j];
                    let uniform = vec![1.0 / f.joint_neighbor_actions() as f64; f.joint_neighbor_actions()];
                    let pomdp = Arc::new(f.marginalize_neighbors(&uniform)?);
                    let start = Belief::point(f.num_states(), initial_state(&View::new(cfg, j)));
                    let set = ModelSet::build(vec![(ModelFrame::Pomdp(pomdp), vec![start])], &model_cfg)?;
                    e.insert(Arc::new(set)).clone()
                }
            };
            sets.push(set);
        }
        let view = View::new(cfg, i);
        let space = InteractiveStateSpace::product(StateSpace::new(labels("s", view.num_states()))?, sets);
        let kernels = neighbors.iter().map(|&j| neighbor_kernel(cfg, i, j)).collect();
        let frame = InteractiveFrame::new(frames[i].clone(), space, kernels)?;
        let belief = Belief::point(frame.space().len(), frame.space().index(initial_state(&view), &vec![0; neighbors.len()]));
        agents.push(NetAgent {
            frame: Arc::new(frame),
            belief,
            neighbors,
        });
    }
    Ok(Scenario {
        graph,
        agents,
        env: spectrum_env(cfg)?,
    })
}

/// The true joint system over every station's averaged rate and the channel.
pub fn spectrum_env(cfg: &SpectrumConfig) -> Result<TabularEnv> {
    let n = cfg.stations;
    let g = cfg.grid.len();
    let channels = cfg.channels();
    let ns = g.pow(n as u32) * channels;
    let nj = 1usize << n;
    let decode = |s: usize| {
        let mut rest = s / channels;
        let mut xs = vec![0; n];
        for k in (0..n).rev() {
            xs[k] = rest % g;
            rest /= g;
        }
        (xs, s % channels)
    };
    let encode = |xs: &[usize], c: usize| xs.iter().fold(0, |acc, x| acc * g + x) * channels + c;
    let levels: Vec<Levels> = (0..n).map(|i| Levels::of(cfg, i)).collect();
    let mut t = vec![0.0; ns * nj * ns];
    let mut obs: Vec<(usize, Vec<f64>)> = levels
        .iter()
        .map(|l| (l.count(g), vec![0.0; ns * nj * l.count(g)]))
        .collect();
    let mut rewards = vec![vec![0.0; ns * nj]; n];
    let all: Vec<Vec<usize>> = profiles(n).collect();
    for s in 0..ns {
        let (xs, c) = decode(s);
        for (j, profile) in all.iter().enumerate() {
            for c2 in 0..channels {
                let p = cfg.channel_step(c, c2);
                if p == 0.0 {
                    continue;
                }
                let next: Vec<usize> = (0..n)
                    .map(|i| {
                        let r = cfg.rate(c2, i, profile);
                        snap_to_grid(avg_rate_update(cfg.grid[xs[i]], r, cfg.averaging), &cfg.grid)
                    })
                    .collect();
                t[(s * nj + j) * ns + encode(&next, c2)] += p;
                for i in 0..n {
                    rewards[i][s * nj + j] += p * pf_step_reward(cfg.grid[xs[i]], cfg.rate(c2, i, profile), cfg.averaging)?;
                }
            }
        }
    }
    for s2 in 0..ns {
        let (xs, c2) = decode(s2);
        for (j, profile) in all.iter().enumerate() {
            for i in 0..n {
                let o = levels[i].observation(xs[i], cfg.signal(c2, i, profile), cfg.interference(c2, i, profile));
                let (no, data) = &mut obs[i];
                data[(s2 * nj + j) * *no + o] = 1.0;
            }
        }
    }
    let mut initial = vec![0.0; ns];
    initial[encode(&vec![cfg.initial_rate; n], 0)] = 1.0;
    TabularEnv::new(ns, vec![2; n], t, obs, rewards, initial)
}
