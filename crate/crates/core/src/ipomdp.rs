//! Bounded-nesting interactive POMDPs.
//!
//! An agent's interactive state pairs a physical state with one model of each
//! neighbor, `IS = S × M_1 × … × M_k`, enumerated physical-state-major. Models
//! are intentional: a belief plus a frame, where a level-0 frame is a plain
//! POMDP and a level-l frame is itself an [`InteractiveFrame`] over level l−1
//! models.
//!
//! Candidate model sets are finite: the closure of declared initial model
//! beliefs under the models' own belief updates, up to a configured depth.
//! Each candidate's optimal actions are solved once when the set is built, so
//! `Pr(a_j | θ_j)` (uniform over the optimal set) and the model-transition
//! indicator τ are table lookups during filtering.
//!
//! The interactive update for a prior `b`, own action `a_i` and observation
//! `o_i` is
//!
//! ```text
//! b'(s', m') = β Σ_{s,m} b(s,m) Σ_{a_∂} Π_k w_k(a_k | m_k) · T(s,a_i,a_∂,s') · O_i(s',a_i,a_∂,o_i)
//!                                   · Π_k ν_k(m'_k | m_k, a_k, s', a_i, a_∂)
//! ```
//!
//! where without evidence `w_k = Pr(a_k | m_k)` and
//! `ν_k = Σ_{o_k} τ(m_k, a_k, o_k, m'_k) · O_k(s', a_i, a_∂, o_k)`. Message
//! evidence replaces one of those factors (see [`Evidence`]). τ is 1 only for
//! candidates of the same frame group, so the frame of every neighbor model
//! is preserved by construction.

use std::collections::HashMap;
use std::sync::Arc;

use crate::belief::{Belief, BeliefKey, StateSpace};
use crate::error::{Error, Result};
use crate::frame::{NetFrame, PomdpFrame, STOCHASTIC_TOLERANCE};
use crate::pomdp;
use crate::value::{self, argmax_set, BackupPlan, BeliefModel, Domain, Lookup, MessageKey, ValueTable, TIE_EPSILON};

/// Controls for building and solving candidate model sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Closure depth of candidate model beliefs.
    pub depth: usize,
    /// Highest nesting level a model may have.
    pub nesting_bound: usize,
    /// Sweep-to-sweep tolerance when solving a model's value function.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// How a model update that leaves the candidate set is resolved:
    /// [`Lookup::Exact`] drops it, [`Lookup::Nearest`] moves it to the
    /// nearest candidate of the same group in L1 distance.
    pub frontier: Lookup,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            nesting_bound: 2,
            tolerance: 1e-10,
            max_iterations: 100_000,
            frontier: Lookup::Exact,
        }
    }
}

/// The frame part of a neighbor model.
#[derive(Debug, Clone)]
pub enum ModelFrame {
    Pomdp(Arc<PomdpFrame>),
    Interactive(Arc<InteractiveFrame>),
}

impl ModelFrame {
    pub fn level(&self) -> usize {
        match self {
            ModelFrame::Pomdp(_) => 0,
            ModelFrame::Interactive(f) => f.level(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            ModelFrame::Pomdp(f) => f.num_actions(),
            ModelFrame::Interactive(f) => f.frame().num_actions(),
        }
    }

    pub fn num_observations(&self) -> usize {
        match self {
            ModelFrame::Pomdp(f) => f.num_observations(),
            ModelFrame::Interactive(f) => f.frame().num_observations(),
        }
    }

    /// Size of the support of beliefs held under this frame.
    pub fn belief_size(&self) -> usize {
        match self {
            ModelFrame::Pomdp(f) => f.num_states(),
            ModelFrame::Interactive(f) => f.space().len(),
        }
    }

    pub fn num_physical_states(&self) -> usize {
        match self {
            ModelFrame::Pomdp(f) => f.num_states(),
            ModelFrame::Interactive(f) => f.space().physical().size(),
        }
    }

    /// The model's own belief update.
    pub fn update(&self, b: &Belief, a: usize, o: usize) -> Result<Belief> {
        match self {
            ModelFrame::Pomdp(f) => pomdp::se_pomdp(b, a, o, f),
            ModelFrame::Interactive(f) => se_ipomdp(b, a, o, f),
        }
    }

    /// Marginal of a belief held under this frame over physical states.
    pub fn physical_marginal(&self, b: &Belief) -> Vec<f64> {
        match self {
            ModelFrame::Pomdp(_) => b.mass().to_vec(),
            ModelFrame::Interactive(f) => f.space().physical_marginal(b),
        }
    }

    fn as_model(&self) -> &dyn BeliefModel {
        match self {
            ModelFrame::Pomdp(f) => f.as_ref(),
            ModelFrame::Interactive(f) => f.as_ref(),
        }
    }

    fn same_as(&self, other: &ModelFrame) -> bool {
        match (self, other) {
            (ModelFrame::Pomdp(a), ModelFrame::Pomdp(b)) => Arc::ptr_eq(a, b) || a == b,
            (ModelFrame::Interactive(a), ModelFrame::Interactive(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// A model of an agent: a belief paired with a frame.
#[derive(Debug, Clone)]
pub struct AgentType {
    pub belief: Belief,
    pub frame: ModelFrame,
}

impl AgentType {
    pub fn new(belief: Belief, frame: ModelFrame) -> Result<Self> {
        if belief.support_size() != frame.belief_size() {
            return Err(Error::InvalidBelief(format!(
                "belief has {} entries, frame expects {}",
                belief.support_size(),
                frame.belief_size()
            )));
        }
        Ok(Self { belief, frame })
    }

    /// 0 for a belief over physical states, l for a belief over level-l
    /// interactive states.
    pub fn level(&self) -> usize {
        self.frame.level()
    }
}

/// Index of the belief closest to `key` in L1 distance, lowest index on
/// ties.
fn nearest(beliefs: &[Belief], key: &BeliefKey) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in beliefs.iter().enumerate() {
        let d = b.key().l1_distance(key);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Candidates sharing one frame.
#[derive(Debug, Clone)]
struct ModelGroup {
    frame: ModelFrame,
    beliefs: Vec<Belief>,
    index: HashMap<BeliefKey, usize>,
    /// `[member][a * |Ω| + o]` → member reached by the model's own update.
    successors: Vec<Vec<Option<usize>>>,
    opt: Vec<Vec<usize>>,
    action_dist: Vec<Vec<f64>>,
}

impl ModelGroup {
    fn from_beliefs(frame: ModelFrame, beliefs: Vec<Belief>, frontier: Lookup) -> Result<Self> {
        let mut index = HashMap::new();
        let mut unique = Vec::new();
        for b in beliefs {
            if b.support_size() != frame.belief_size() {
                return Err(Error::InvalidBelief(format!(
                    "candidate belief has {} entries, frame expects {}",
                    b.support_size(),
                    frame.belief_size()
                )));
            }
            let key = b.key();
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(key) {
                e.insert(unique.len());
                unique.push(b);
            }
        }
        if unique.is_empty() {
            return Err(Error::InvalidConfig("model group has no beliefs".into()));
        }
        let (na, no) = (frame.num_actions(), frame.num_observations());
        let mut successors = Vec::with_capacity(unique.len());
        for b in &unique {
            let mut row = vec![None; na * no];
            for a in 0..na {
                for o in 0..no {
                    row[a * no + o] = match frame.update(b, a, o) {
                        Ok(b2) => {
                            let key = b2.key();
                            match (index.get(&key), frontier) {
                                (Some(&j), _) => Some(j),
                                (None, Lookup::Exact) => None,
                                (None, Lookup::Nearest) => nearest(&unique, &key),
                            }
                        }
                        Err(Error::ImpossibleObservation { .. }) => None,
                        Err(e) => return Err(e),
                    };
                }
            }
            successors.push(row);
        }
        Ok(Self {
            frame,
            beliefs: unique,
            index,
            successors,
            opt: Vec::new(),
            action_dist: Vec::new(),
        })
    }

    /// Solves the group's value function over its own members and records the
    /// optimal-action sets.
    fn solve(&mut self, cfg: &ModelConfig) -> Result<()> {
        let mut domain = Domain::new();
        for b in &self.beliefs {
            domain.insert(b.clone(), MessageKey::none());
        }
        let model = self.frame.as_model();
        let plan = BackupPlan::compile(model, &domain, Lookup::Nearest)?;
        let fp = value::iterate_to_fixed_point(&plan, vec![0.0; domain.len()], cfg.tolerance, cfg.max_iterations)?;
        self.opt = (0..domain.len())
            .map(|i| argmax_set(&plan.q_values(i, &fp.values), TIE_EPSILON))
            .collect();
        self.action_dist = self.opt.iter().map(|opt| uniform_over(opt, model.num_actions())).collect();
        Ok(())
    }

    fn set_policies(&mut self, dists: Vec<Vec<f64>>) -> Result<()> {
        if dists.len() != self.beliefs.len() {
            return Err(Error::InvalidConfig(format!(
                "{} action distributions for {} candidates",
                dists.len(),
                self.beliefs.len()
            )));
        }
        let na = self.frame.num_actions();
        for d in &dists {
            let total: f64 = d.iter().sum();
            if d.len() != na || d.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::InvalidConfig(format!("invalid action distribution {d:?}")));
            }
        }
        self.opt = dists
            .iter()
            .map(|d| (0..na).filter(|a| d[*a] > 0.0).collect())
            .collect();
        self.action_dist = dists;
        Ok(())
    }
}

fn uniform_over(set: &[usize], n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for a in set {
        d[*a] = 1.0 / set.len() as f64;
    }
    d
}

/// A finite set of candidate models of one neighbor.
#[derive(Debug, Clone)]
pub struct ModelSet {
    level: usize,
    groups: Vec<ModelGroup>,
    offsets: Vec<usize>,
    len: usize,
}

impl ModelSet {
    /// Closes each group's initial beliefs under the group frame's update to
    /// `cfg.depth`, then solves every candidate's optimal actions.
    pub fn build(groups: Vec<(ModelFrame, Vec<Belief>)>, cfg: &ModelConfig) -> Result<Self> {
        let mut built = Vec::with_capacity(groups.len());
        for (frame, initial) in groups {
            if frame.level() > cfg.nesting_bound {
                return Err(Error::RecursionDepthExceeded {
                    level: frame.level(),
                    bound: cfg.nesting_bound,
                });
            }
            let seeds: Vec<_> = initial.into_iter().map(|b| (b, MessageKey::none())).collect();
            let domain = Domain::closure(frame.as_model(), &seeds, cfg.depth)?;
            let beliefs = domain.points().iter().map(|(b, _)| b.clone()).collect();
            let mut group = ModelGroup::from_beliefs(frame, beliefs, cfg.frontier)?;
            group.solve(cfg)?;
            built.push(group);
        }
        Self::assemble(built)
    }

    /// Candidates with explicitly given action distributions (no closure, no
    /// solving). Optimal sets are the supports of the distributions.
    pub fn with_policies(frame: ModelFrame, beliefs: Vec<Belief>, action_dists: Vec<Vec<f64>>) -> Result<Self> {
        let mut group = ModelGroup::from_beliefs(frame, beliefs, Lookup::Exact)?;
        group.set_policies(action_dists)?;
        Self::assemble(vec![group])
    }

    /// Concatenates the groups of several sets, in order.
    pub fn union(sets: Vec<ModelSet>) -> Result<Self> {
        Self::assemble(sets.into_iter().flat_map(|s| s.groups).collect())
    }

    fn assemble(groups: Vec<ModelGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidConfig("model set must not be empty".into()));
        }
        let (na, no) = (groups[0].frame.num_actions(), groups[0].frame.num_observations());
        if groups
            .iter()
            .any(|g| g.frame.num_actions() != na || g.frame.num_observations() != no)
        {
            return Err(Error::InvalidConfig(
                "all candidate frames must share action and observation spaces".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(groups.len());
        let mut len = 0;
        for g in &groups {
            offsets.push(len);
            len += g.beliefs.len();
        }
        Ok(Self {
            level: groups.iter().map(|g| g.frame.level()).max().unwrap_or(0),
            groups,
            offsets,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Highest nesting level among the candidates.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn num_actions(&self) -> usize {
        self.groups[0].frame.num_actions()
    }

    pub fn num_observations(&self) -> usize {
        self.groups[0].frame.num_observations()
    }

    #[inline]
    fn locate(&self, m: usize) -> (usize, usize) {
        let g = match self.offsets.binary_search(&m) {
            Ok(g) => g,
            Err(g) => g - 1,
        };
        (g, m - self.offsets[g])
    }

    pub fn group_of(&self, m: usize) -> usize {
        self.locate(m).0
    }

    pub fn belief(&self, m: usize) -> &Belief {
        let (g, i) = self.locate(m);
        &self.groups[g].beliefs[i]
    }

    pub fn frame(&self, m: usize) -> &ModelFrame {
        &self.groups[self.locate(m).0].frame
    }

    pub fn agent_type(&self, m: usize) -> AgentType {
        AgentType {
            belief: self.belief(m).clone(),
            frame: self.frame(m).clone(),
        }
    }

    /// `Pr(a | θ)`: uniform over the candidate's optimal actions.
    pub fn action_dist(&self, m: usize) -> &[f64] {
        let (g, i) = self.locate(m);
        &self.groups[g].action_dist[i]
    }

    pub fn opt(&self, m: usize) -> &[usize] {
        let (g, i) = self.locate(m);
        &self.groups[g].opt[i]
    }

    /// Candidate reached by the model's own update, if tabulated.
    #[inline]
    pub fn successor(&self, m: usize, a: usize, o: usize) -> Option<usize> {
        let (g, i) = self.locate(m);
        let group = &self.groups[g];
        group.successors[i][a * group.frame.num_observations() + o].map(|j| self.offsets[g] + j)
    }

    /// Candidate of `frame`'s group whose belief key equals `belief`'s.
    pub fn find(&self, frame: &ModelFrame, belief: &Belief) -> Option<usize> {
        let key = belief.key();
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.frame.same_as(frame))
            .find_map(|(gi, g)| g.index.get(&key).map(|i| self.offsets[gi] + i))
    }

    pub fn physical_marginal(&self, m: usize) -> Vec<f64> {
        self.frame(m).physical_marginal(self.belief(m))
    }
}

/// `1` when the model's own update of its belief under `(a, o)` has the same
/// key as `target`, `0` otherwise (including impossible observations).
pub fn tau_indicator(model: &AgentType, a: usize, o: usize, target: &Belief) -> Result<u8> {
    match model.frame.update(&model.belief, a, o) {
        Ok(b2) => Ok(u8::from(b2.key() == target.key())),
        Err(Error::ImpossibleObservation { .. }) => Ok(0),
        Err(e) => Err(e),
    }
}

/// `Pr(a | θ)` for a single model, solving its problem on the closure of its
/// own belief.
pub fn model_action_dist(model: &AgentType, cfg: &ModelConfig) -> Result<Vec<f64>> {
    let set = ModelSet::build(vec![(model.frame.clone(), vec![model.belief.clone()])], cfg)?;
    Ok(set.action_dist(0).to_vec())
}

/// Product of a physical state space with one candidate set per neighbor.
#[derive(Debug, Clone)]
pub struct InteractiveStateSpace {
    physical: StateSpace,
    models: Vec<Arc<ModelSet>>,
    strides: Vec<usize>,
    per_state: usize,
}

/// `S × M` for a single neighbor at nesting level `level`.
pub fn build_interactive_space(
    physical: StateSpace,
    candidates: Arc<ModelSet>,
    level: usize,
) -> Result<InteractiveStateSpace> {
    if level == 0 {
        return Err(Error::LevelMismatch { expected: 1, found: 0 });
    }
    if candidates.level() != level - 1 {
        return Err(Error::LevelMismatch {
            expected: level - 1,
            found: candidates.level(),
        });
    }
    Ok(InteractiveStateSpace::product(physical, vec![candidates]))
}

impl InteractiveStateSpace {
    pub fn product(physical: StateSpace, models: Vec<Arc<ModelSet>>) -> Self {
        let mut strides = vec![0; models.len()];
        let mut acc = 1;
        for (k, m) in models.iter().enumerate().rev() {
            strides[k] = acc;
            acc *= m.len();
        }
        Self {
            physical,
            models,
            strides,
            per_state: acc,
        }
    }

    pub fn physical(&self) -> &StateSpace {
        &self.physical
    }

    pub fn models(&self) -> &[Arc<ModelSet>] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.physical.size() * self.per_state
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn models_per_state(&self) -> usize {
        self.per_state
    }

    pub fn index(&self, s: usize, models: &[usize]) -> usize {
        s * self.per_state + models.iter().zip(&self.strides).map(|(m, st)| m * st).sum::<usize>()
    }

    /// Physical state and per-neighbor model indices of a point.
    pub fn point(&self, idx: usize) -> (usize, Vec<usize>) {
        let mut ms = vec![0; self.models.len()];
        self.decode_into(idx, &mut ms);
        (idx / self.per_state, ms)
    }

    #[inline]
    fn decode_into(&self, idx: usize, out: &mut [usize]) -> usize {
        let mut rest = idx % self.per_state;
        for (k, st) in self.strides.iter().enumerate() {
            out[k] = rest / st;
            rest %= st;
        }
        idx / self.per_state
    }

    pub fn physical_marginal(&self, b: &Belief) -> Vec<f64> {
        let mut out = vec![0.0; self.physical.size()];
        for (i, p) in b.mass().iter().enumerate() {
            out[i / self.per_state] += p;
        }
        out
    }
}

/// A neighbor's observation function expressed over the observing agent's
/// states and actions, indexed `(s', a_i, a_∂, o_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsKernel {
    num_obs: usize,
    data: Vec<f64>,
}

impl ObsKernel {
    pub fn new(num_obs: usize, data: Vec<f64>) -> Self {
        Self { num_obs, data }
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    fn row(&self, frame: &NetFrame, s2: usize, a: usize, n: usize) -> &[f64] {
        let nn = frame.joint_neighbor_actions();
        let start = ((s2 * frame.num_actions() + a) * nn + n) * self.num_obs;
        &self.data[start..start + self.num_obs]
    }
}

/// What an incoming message reveals about one neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evidence {
    /// No message: the neighbor's action and observation are marginalized.
    Unobserved,
    /// The neighbor's previous action.
    Action(usize),
    /// The neighbor's current observation.
    Observation(usize),
    /// The neighbor's belief, already projected onto this candidate index.
    Model(usize),
}

/// An agent frame together with its interactive state space and its
/// neighbors' observation functions.
#[derive(Debug, Clone)]
pub struct InteractiveFrame {
    frame: NetFrame,
    space: InteractiveStateSpace,
    neighbor_obs: Vec<ObsKernel>,
}

impl InteractiveFrame {
    pub fn new(frame: NetFrame, space: InteractiveStateSpace, neighbor_obs: Vec<ObsKernel>) -> Result<Self> {
        let f = Self {
            frame,
            space,
            neighbor_obs,
        };
        let v = f.violations();
        if v.is_empty() {
            Ok(f)
        } else {
            Err(Error::InvalidFrame(v.join("; ")))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = self.frame.violations();
        let f = &self.frame;
        if f.num_states() != self.space.physical().size() {
            out.push(format!(
                "frame has {} states, interactive space has {}",
                f.num_states(),
                self.space.physical().size()
            ));
        }
        if f.num_neighbors() != self.space.models().len() || f.num_neighbors() != self.neighbor_obs.len() {
            out.push(format!(
                "{} neighbor action spaces, {} model sets, {} neighbor observation kernels",
                f.num_neighbors(),
                self.space.models().len(),
                self.neighbor_obs.len()
            ));
            return out;
        }
        let rows = f.num_states() * f.num_actions() * f.joint_neighbor_actions();
        for (k, (models, kernel)) in self.space.models().iter().zip(&self.neighbor_obs).enumerate() {
            if models.num_actions() != f.neighbor_actions()[k] {
                out.push(format!(
                    "neighbor {k}: models have {} actions, frame expects {}",
                    models.num_actions(),
                    f.neighbor_actions()[k]
                ));
            }
            if models.num_observations() != kernel.num_obs {
                out.push(format!(
                    "neighbor {k}: models have {} observations, kernel has {}",
                    models.num_observations(),
                    kernel.num_obs
                ));
            }
            if kernel.data.len() != rows * kernel.num_obs {
                out.push(format!(
                    "neighbor {k}: observation kernel has {} entries, expected {}",
                    kernel.data.len(),
                    rows * kernel.num_obs
                ));
                continue;
            }
            for (r, row) in kernel.data.chunks(kernel.num_obs).enumerate() {
                let total: f64 = row.iter().sum();
                if row.iter().any(|x| *x < 0.0 || !x.is_finite()) || (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    let nn = f.joint_neighbor_actions();
                    out.push(format!(
                        "neighbor {k}: observation kernel[s'={}, a={}, n={}] sums to {total}",
                        r / (f.num_actions() * nn),
                        (r / nn) % f.num_actions(),
                        r % nn
                    ));
                }
            }
        }
        out
    }

    pub fn frame(&self) -> &NetFrame {
        &self.frame
    }

    pub fn space(&self) -> &InteractiveStateSpace {
        &self.space
    }

    pub fn neighbor_obs(&self) -> &[ObsKernel] {
        &self.neighbor_obs
    }

    pub fn num_neighbors(&self) -> usize {
        self.frame.num_neighbors()
    }

    pub fn level(&self) -> usize {
        1 + self.space.models().iter().map(|m| m.level()).max().unwrap_or(0)
    }

    fn check(&self, b: &Belief, a_i: usize, evidence: &[Evidence]) -> Result<()> {
        if b.support_size() != self.space.len() {
            return Err(Error::InvalidBelief(format!(
                "belief has {} entries, interactive space has {}",
                b.support_size(),
                self.space.len()
            )));
        }
        if a_i >= self.frame.num_actions() {
            return Err(Error::InvalidConfig(format!("action {a_i} out of range")));
        }
        if evidence.len() != self.num_neighbors() {
            return Err(Error::InvalidConfig(format!(
                "{} evidence entries for {} neighbors",
                evidence.len(),
                self.num_neighbors()
            )));
        }
        for (k, ev) in evidence.iter().enumerate() {
            let models = &self.space.models()[k];
            let ok = match *ev {
                Evidence::Unobserved => true,
                Evidence::Action(a) => a < models.num_actions(),
                Evidence::Observation(o) => o < models.num_observations(),
                Evidence::Model(m) => m < models.len(),
            };
            if !ok {
                return Err(Error::InvalidConfig(format!("neighbor {k}: evidence {ev:?} out of range")));
            }
        }
        Ok(())
    }

    /// Weight of neighbor action `a` under model `m` given the evidence.
    #[inline]
    fn action_weight(&self, k: usize, m: usize, a: usize, ev: Evidence) -> f64 {
        match ev {
            Evidence::Action(shown) => f64::from(u8::from(a == shown)),
            _ => self.space.models()[k].action_dist(m)[a],
        }
    }

    /// Expected immediate reward of a single interactive state.
    pub fn point_reward(&self, point: usize, a_i: usize, evidence: &[Evidence]) -> f64 {
        let (s, ms) = self.space.point(point);
        let mut total = 0.0;
        for n in 0..self.frame.joint_neighbor_actions() {
            let acts = self.frame.split_joint(n);
            let w: f64 = (0..acts.len())
                .map(|k| self.action_weight(k, ms[k], acts[k], evidence[k]))
                .product();
            if w != 0.0 {
                total += w * self.frame.r(s, a_i, n);
            }
        }
        total
    }

    /// `Σ_is b(is) ER(is, a_i)`.
    pub fn expected_reward(&self, b: &Belief, a_i: usize, evidence: &[Evidence]) -> Result<f64> {
        self.check(b, a_i, evidence)?;
        Ok(b.mass()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(i, p)| p * self.point_reward(i, a_i, evidence))
            .sum())
    }

    /// Observation probabilities and unnormalized posteriors. When `only` is
    /// set, posteriors are computed for that observation alone (the other
    /// rows are left empty).
    pub fn update_all(&self, b: &Belief, a_i: usize, evidence: &[Evidence], only: Option<usize>) -> Result<UpdateMasses> {
        self.check(b, a_i, evidence)?;
        let f = &self.frame;
        let (ns, no, nn) = (f.num_states(), f.num_observations(), f.joint_neighbor_actions());
        let k_count = self.num_neighbors();
        let per_state = self.space.models_per_state();
        let mut obs_prob = vec![0.0; no];
        let mut post: Vec<Vec<f64>> = (0..no)
            .map(|o| {
                if only.is_none_or(|x| x == o) {
                    vec![0.0; self.space.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        let mut ms = vec![0usize; k_count];
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k_count];
        let joint: Vec<Vec<usize>> = (0..nn).map(|n| f.split_joint(n)).collect();
        for (idx, &p) in b.mass().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = self.space.decode_into(idx, &mut ms);
            for (n, acts) in joint.iter().enumerate() {
                let mut w = p;
                for k in 0..k_count {
                    w *= self.action_weight(k, ms[k], acts[k], evidence[k]);
                }
                if w == 0.0 {
                    continue;
                }
                for s2 in 0..ns {
                    let t = f.t(s, a_i, n, s2);
                    if t == 0.0 {
                        continue;
                    }
                    let base = w * t;
                    for (o, op) in obs_prob.iter_mut().enumerate() {
                        *op += base * f.o(s2, a_i, n, o);
                    }
                    if !self.neighbor_lists(s2, a_i, n, &ms, acts, evidence, &mut lists) {
                        continue;
                    }
                    for_each_combination(&lists, &self.space.strides, |offset, nu| {
                        let target = s2 * per_state + offset;
                        for (o, row) in post.iter_mut().enumerate() {
                            if row.is_empty() {
                                continue;
                            }
                            let oi = f.o(s2, a_i, n, o);
                            if oi != 0.0 {
                                row[target] += base * oi * nu;
                            }
                        }
                    });
                }
            }
        }
        Ok(UpdateMasses { obs_prob, posterior: post })
    }

    /// Per-neighbor successor-model weights ν_k; returns false if any list is
    /// empty (no successor mass).
    #[allow(clippy::too_many_arguments)]
    fn neighbor_lists(
        &self,
        s2: usize,
        a_i: usize,
        n: usize,
        ms: &[usize],
        acts: &[usize],
        evidence: &[Evidence],
        lists: &mut [Vec<(usize, f64)>],
    ) -> bool {
        for (k, list) in lists.iter_mut().enumerate() {
            list.clear();
            let models = &self.space.models()[k];
            let (m, a_k) = (ms[k], acts[k]);
            match evidence[k] {
                Evidence::Model(target) => {
                    if models.group_of(target) == models.group_of(m) {
                        list.push((target, 1.0));
                    }
                }
                Evidence::Observation(o_k) => {
                    let q = self.neighbor_obs[k].row(&self.frame, s2, a_i, n)[o_k];
                    if q != 0.0 {
                        if let Some(m2) = models.successor(m, a_k, o_k) {
                            list.push((m2, q));
                        }
                    }
                }
                Evidence::Unobserved | Evidence::Action(_) => {
                    let row = self.neighbor_obs[k].row(&self.frame, s2, a_i, n);
                    for (o_k, q) in row.iter().enumerate() {
                        if *q == 0.0 {
                            continue;
                        }
                        if let Some(m2) = models.successor(m, a_k, o_k) {
                            match list.iter_mut().find(|(x, _)| *x == m2) {
                                Some(entry) => entry.1 += q,
                                None => list.push((m2, *q)),
                            }
                        }
                    }
                }
            }
            if list.is_empty() {
                return false;
            }
        }
        true
    }

    /// Normalized update for one observation.
    pub fn update(&self, b: &Belief, a_i: usize, o_i: usize, evidence: &[Evidence]) -> Result<Belief> {
        if o_i >= self.frame.num_observations() {
            return Err(Error::InvalidConfig(format!("observation {o_i} out of range")));
        }
        let mut masses = self.update_all(b, a_i, evidence, Some(o_i))?;
        Belief::normalized(std::mem::take(&mut masses.posterior[o_i]))
    }

    /// Observation-weighted successors under the given evidence.
    pub fn successors_with(&self, b: &Belief, a_i: usize, evidence: &[Evidence]) -> Result<Vec<(f64, Option<Belief>)>> {
        let masses = self.update_all(b, a_i, evidence, None)?;
        Ok(masses
            .obs_prob
            .into_iter()
            .zip(masses.posterior)
            .map(|(p, post)| {
                if p <= 0.0 {
                    return (p, None);
                }
                (p, Belief::normalized(post).ok())
            })
            .collect())
    }

    fn unobserved(&self) -> Vec<Evidence> {
        vec![Evidence::Unobserved; self.num_neighbors()]
    }
}

/// Observation probabilities `Pr(o_i | a_i, b)` and unnormalized posteriors.
#[derive(Debug, Clone)]
pub struct UpdateMasses {
    pub obs_prob: Vec<f64>,
    pub posterior: Vec<Vec<f64>>,
}

/// Calls `f(offset, weight)` for every combination of one entry per list.
fn for_each_combination(lists: &[Vec<(usize, f64)>], strides: &[usize], mut f: impl FnMut(usize, f64)) {
    match lists.len() {
        0 => f(0, 1.0),
        1 => {
            for (m, q) in &lists[0] {
                f(m * strides[0], *q);
            }
        }
        _ => {
            let mut pos = vec![0usize; lists.len()];
            loop {
                let mut offset = 0;
                let mut weight = 1.0;
                for (k, list) in lists.iter().enumerate() {
                    let (m, q) = list[pos[k]];
                    offset += m * strides[k];
                    weight *= q;
                }
                f(offset, weight);
                let mut k = lists.len();
                loop {
                    if k == 0 {
                        return;
                    }
                    k -= 1;
                    pos[k] += 1;
                    if pos[k] < lists[k].len() {
                        break;
                    }
                    pos[k] = 0;
                }
            }
        }
    }
}

/// Interactive belief update with neighbor actions and observations
/// marginalized through the candidate models.
pub fn se_ipomdp(b: &Belief, a_i: usize, o_i: usize, frame: &InteractiveFrame) -> Result<Belief> {
    frame.update(b, a_i, o_i, &frame.unobserved())
}

/// `ER(is, a_i) = Σ_{a_∂} R(s, a_i, a_∂) Π_k Pr(a_k | m_k)`.
pub fn er_reward(point: usize, a_i: usize, frame: &InteractiveFrame) -> f64 {
    frame.point_reward(point, a_i, &frame.unobserved())
}

impl BeliefModel for InteractiveFrame {
    fn num_actions(&self) -> usize {
        self.frame.num_actions()
    }

    fn num_observations(&self) -> usize {
        self.frame.num_observations()
    }

    fn discount(&self) -> f64 {
        self.frame.discount()
    }

    fn expected_reward(&self, b: &Belief, _message: &MessageKey, a: usize) -> Result<f64> {
        InteractiveFrame::expected_reward(self, b, a, &self.unobserved())
    }

    fn successors(&self, b: &Belief, _message: &MessageKey, a: usize) -> Result<Vec<(f64, Option<Belief>)>> {
        self.successors_with(b, a, &self.unobserved())
    }
}

/// Backs up `table` at each interactive belief in `points`.
pub fn ipomdp_value_backup(
    table: &ValueTable,
    points: &[Belief],
    frame: &InteractiveFrame,
    lookup: Lookup,
) -> Result<ValueTable> {
    let none = MessageKey::none();
    let mut out = ValueTable::new();
    for b in points {
        let best = value::q_values(frame, b, &none, table, lookup)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        out.insert(value::TableKey::new(b, &none), best);
    }
    Ok(out)
}

/// Optimal actions of an interactive type under `table`.
pub fn ipomdp_opt(theta: &AgentType, table: &ValueTable, lookup: Lookup) -> Result<Vec<usize>> {
    match &theta.frame {
        ModelFrame::Interactive(f) => value::optimal_actions(f.as_ref(), &theta.belief, &MessageKey::none(), table, lookup),
        ModelFrame::Pomdp(f) => pomdp::pomdp_opt(&theta.belief, table, f, lookup),
    }
}
