//! Tabulated value functions over (belief, message) keys and the Bellman-style
//! backup shared by the single-agent, interactive and networked layers.
//!
//! A [`BeliefModel`] supplies, for a belief, an incoming message and an
//! action, the expected immediate reward and the observation-indexed
//! successor beliefs. Everything else here is generic over that trait:
//! reachable-set closure ([`Domain::closure`]), one-step lookahead values
//! ([`q_value`]), optimal-action sets and compiled backup sweeps
//! ([`BackupPlan`]).
//!
//! Successors that are not tabulated either raise [`Error::MissingEntry`]
//! ([`Lookup::Exact`]) or resolve to the nearest tabulated belief with the same
//! message key in L1 distance ([`Lookup::Nearest`]). Both keep the backup a
//! monotone γ-contraction: every backed-up entry is a max over actions of a
//! reward plus a nonnegative combination of table entries with total weight at
//! most γ.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{Belief, BeliefKey};
use crate::error::{Error, Result};

/// Actions within this margin of the best value are all optimal.
pub const TIE_EPSILON: f64 = 1e-9;

/// Incoming message payload indices, one per neighbor; empty without neighbors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MessageKey(pub Vec<u32>);

impl MessageKey {
    pub fn none() -> Self {
        MessageKey(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableKey {
    pub belief: BeliefKey,
    pub message: MessageKey,
}

impl TableKey {
    pub fn new(belief: &Belief, message: &MessageKey) -> Self {
        Self {
            belief: belief.key(),
            message: message.clone(),
        }
    }
}

/// How a successor belief without an exact table entry is valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookup {
    Exact,
    #[default]
    Nearest,
}

/// A tabulated value function.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValueTable {
    entries: BTreeMap<TableKey, f64>,
}

impl ValueTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: TableKey, value: f64) {
        self.entries.insert(key, value);
    }

    pub fn get(&self, key: &TableKey) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TableKey, &f64)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &TableKey> {
        self.entries.keys()
    }

    pub fn map(&self, f: impl Fn(&TableKey, f64) -> f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), f(k, *v))).collect(),
        }
    }

    /// Exact entry, or the nearest entry carrying the same message key.
    pub fn lookup(&self, key: &TableKey, mode: Lookup) -> Result<f64> {
        if let Some(v) = self.entries.get(key) {
            return Ok(*v);
        }
        let missing = || Error::MissingEntry {
            message: key.message.0.clone(),
        };
        if mode == Lookup::Exact {
            return Err(missing());
        }
        let mut best: Option<(f64, f64)> = None;
        for (k, v) in &self.entries {
            if k.message != key.message || k.belief.0.len() != key.belief.0.len() {
                continue;
            }
            let d = k.belief.l1_distance(&key.belief);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, *v));
            }
        }
        best.map(|(_, v)| v).ok_or_else(missing)
    }

    /// Largest absolute entrywise difference; both tables must share keys.
    pub fn sup_norm(&self, other: &ValueTable) -> Result<f64> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::KeyMismatch);
        }
        let mut sup = 0.0f64;
        for ((ka, va), (kb, vb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb {
                return Err(Error::KeyMismatch);
            }
            sup = sup.max((va - vb).abs());
        }
        Ok(sup)
    }
}

/// Free function form of [`ValueTable::sup_norm`].
pub fn sup_norm(u: &ValueTable, v: &ValueTable) -> Result<f64> {
    u.sup_norm(v)
}

/// Belief dynamics and rewards seen by a value backup.
pub trait BeliefModel: Sync {
    fn num_actions(&self) -> usize;
    fn num_observations(&self) -> usize;
    fn discount(&self) -> f64;

    /// Expected immediate reward of `action` under `belief` and `message`.
    fn expected_reward(&self, belief: &Belief, message: &MessageKey, action: usize) -> Result<f64>;

    /// For each observation: its probability and the updated belief, or
    /// `None` when the update is impossible.
    fn successors(&self, belief: &Belief, message: &MessageKey, action: usize) -> Result<Vec<(f64, Option<Belief>)>>;
}

/// One-step lookahead value of `action`: expected reward plus the discounted,
/// observation-weighted value of the successors.
pub fn q_value<M: BeliefModel + ?Sized>(
    model: &M,
    belief: &Belief,
    message: &MessageKey,
    action: usize,
    table: &ValueTable,
    lookup: Lookup,
) -> Result<f64> {
    let mut cont = 0.0;
    for (p, succ) in model.successors(belief, message, action)? {
        if let Some(b2) = succ {
            if p > 0.0 {
                cont += p * table.lookup(&TableKey::new(&b2, message), lookup)?;
            }
        }
    }
    Ok(model.expected_reward(belief, message, action)? + model.discount() * cont)
}

/// Lookahead value of every action.
pub fn q_values<M: BeliefModel + ?Sized>(
    model: &M,
    belief: &Belief,
    message: &MessageKey,
    table: &ValueTable,
    lookup: Lookup,
) -> Result<Vec<f64>> {
    (0..model.num_actions())
        .map(|a| q_value(model, belief, message, a, table, lookup))
        .collect()
}

/// Indices within `tie_epsilon` of the maximum, in ascending order.
pub fn argmax_set(values: &[f64], tie_epsilon: f64) -> Vec<usize> {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= best - tie_epsilon)
        .map(|(i, _)| i)
        .collect()
}

/// The set of optimal actions under the one-step lookahead.
pub fn optimal_actions<M: BeliefModel + ?Sized>(
    model: &M,
    belief: &Belief,
    message: &MessageKey,
    table: &ValueTable,
    lookup: Lookup,
) -> Result<Vec<usize>> {
    Ok(argmax_set(&q_values(model, belief, message, table, lookup)?, TIE_EPSILON))
}

/// Finite set of tabulated (belief, message) points, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Domain {
    points: Vec<(Belief, MessageKey)>,
    keys: Vec<TableKey>,
    index: HashMap<TableKey, usize>,
}

impl Domain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts the point unless its key is present; returns the index and
    /// whether it was new.
    pub fn insert(&mut self, belief: Belief, message: MessageKey) -> (usize, bool) {
        let key = TableKey::new(&belief, &message);
        if let Some(i) = self.index.get(&key) {
            return (*i, false);
        }
        let i = self.points.len();
        self.index.insert(key.clone(), i);
        self.keys.push(key);
        self.points.push((belief, message));
        (i, true)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> (&Belief, &MessageKey) {
        let (b, m) = &self.points[i];
        (b, m)
    }

    pub fn points(&self) -> &[(Belief, MessageKey)] {
        &self.points
    }

    pub fn key(&self, i: usize) -> &TableKey {
        &self.keys[i]
    }

    pub fn position(&self, key: &TableKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Nearest point with the same message key (L1 over belief keys), ties to
    /// the lowest index. Returns the index and the distance.
    pub fn nearest(&self, key: &TableKey) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, k) in self.keys.iter().enumerate() {
            if k.message != key.message || k.belief.0.len() != key.belief.0.len() {
                continue;
            }
            let d = k.belief.l1_distance(&key.belief);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    /// All points reachable from `initial` in at most `depth` updates.
    pub fn closure<M: BeliefModel + ?Sized>(
        model: &M,
        initial: &[(Belief, MessageKey)],
        depth: usize,
    ) -> Result<Self> {
        let mut domain = Domain::new();
        let mut layer = Vec::new();
        for (b, m) in initial {
            let (i, new) = domain.insert(b.clone(), m.clone());
            if new {
                layer.push(i);
            }
        }
        for _ in 0..depth {
            if layer.is_empty() {
                break;
            }
            let expanded: Vec<Vec<Belief>> = layer
                .par_iter()
                .map(|&i| {
                    let (b, m) = domain.point(i);
                    let mut out = Vec::new();
                    for a in 0..model.num_actions() {
                        for (p, succ) in model.successors(b, m, a)? {
                            if let (true, Some(b2)) = (p > 0.0, succ) {
                                out.push(b2);
                            }
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            let mut next = Vec::new();
            for (&i, succs) in layer.iter().zip(expanded) {
                let message = domain.point(i).1.clone();
                for b2 in succs {
                    let (j, new) = domain.insert(b2, message.clone());
                    if new {
                        next.push(j);
                    }
                }
            }
            layer = next;
        }
        Ok(domain)
    }

    pub fn zero_table(&self) -> ValueTable {
        self.table(&vec![0.0; self.len()])
    }

    /// Table pairing each point's key with the value at the same index.
    pub fn table(&self, values: &[f64]) -> ValueTable {
        ValueTable {
            entries: self.keys.iter().cloned().zip(values.iter().copied()).collect(),
        }
    }

    /// Values aligned with this domain; every key must be present.
    pub fn values(&self, table: &ValueTable) -> Result<Vec<f64>> {
        self.keys
            .iter()
            .map(|k| {
                table.get(k).ok_or_else(|| Error::MissingEntry {
                    message: k.message.0.clone(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct ActionPlan {
    reward: f64,
    successors: Vec<(f64, usize)>,
}

/// A successor resolved to a nearest neighbor rather than its own key.
#[derive(Debug, Clone)]
struct Approximate {
    entry: usize,
    action: usize,
    slot: usize,
    key: TableKey,
    distance: f64,
}

/// Backup sweep compiled over a [`Domain`]: rewards and successor indices are
/// computed once, after which each sweep is pure arithmetic.
#[derive(Debug, Clone)]
pub struct BackupPlan {
    discount: f64,
    lookup: Lookup,
    entries: Vec<Vec<ActionPlan>>,
    approximate: Vec<Approximate>,
}

impl BackupPlan {
    pub fn compile<M: BeliefModel + ?Sized>(model: &M, domain: &Domain, lookup: Lookup) -> Result<Self> {
        let compiled: Vec<(Vec<ActionPlan>, Vec<Approximate>)> = (0..domain.len())
            .into_par_iter()
            .map(|i| compile_entry(model, domain, lookup, i))
            .collect::<Result<_>>()?;
        let mut entries = Vec::with_capacity(compiled.len());
        let mut approximate = Vec::new();
        for (e, a) in compiled {
            entries.push(e);
            approximate.extend(a);
        }
        Ok(Self {
            discount: model.discount(),
            lookup,
            entries,
            approximate,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of successors valued through a nearest neighbor.
    pub fn approximate_successors(&self) -> usize {
        self.approximate.len()
    }

    /// Compiles entries appended to `domain` since the last compile and
    /// re-resolves approximate successors against them.
    pub fn extend<M: BeliefModel + ?Sized>(&mut self, model: &M, domain: &Domain) -> Result<()> {
        let start = self.entries.len();
        for i in start..domain.len() {
            let (e, a) = compile_entry(model, domain, self.lookup, i)?;
            self.entries.push(e);
            self.approximate.extend(a);
        }
        let mut kept = Vec::with_capacity(self.approximate.len());
        for mut ap in std::mem::take(&mut self.approximate) {
            let mut target = None;
            for j in start..domain.len() {
                let k = domain.key(j);
                if k.message != ap.key.message {
                    continue;
                }
                let d = k.belief.l1_distance(&ap.key.belief);
                if *k == ap.key {
                    target = Some((j, 0.0));
                    break;
                }
                if d < ap.distance && target.is_none_or(|(_, bd)| d < bd) {
                    target = Some((j, d));
                }
            }
            if let Some((j, d)) = target {
                self.entries[ap.entry][ap.action].successors[ap.slot].1 = j;
                ap.distance = d;
            }
            if ap.distance > 0.0 {
                kept.push(ap);
            }
        }
        self.approximate = kept;
        Ok(())
    }

    fn entry_value(&self, i: usize, values: &[f64]) -> f64 {
        self.entries[i]
            .iter()
            .map(|ap| ap.reward + self.discount * ap.successors.iter().map(|(p, j)| p * values[*j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One backup sweep over values aligned with the compiled domain.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.entries.len(), "values must align with the plan");
        (0..self.entries.len())
            .into_par_iter()
            .map(|i| self.entry_value(i, values))
            .collect()
    }

    /// Lookahead value of every action at entry `i`.
    pub fn q_values(&self, i: usize, values: &[f64]) -> Vec<f64> {
        self.entries[i]
            .iter()
            .map(|ap| ap.reward + self.discount * ap.successors.iter().map(|(p, j)| p * values[*j]).sum::<f64>())
            .collect()
    }

    /// Table form of [`BackupPlan::apply`].
    pub fn apply_table(&self, domain: &Domain, table: &ValueTable) -> Result<ValueTable> {
        let values = domain.values(table)?;
        Ok(domain.table(&self.apply(&values)))
    }
}

fn compile_entry<M: BeliefModel + ?Sized>(
    model: &M,
    domain: &Domain,
    lookup: Lookup,
    i: usize,
) -> Result<(Vec<ActionPlan>, Vec<Approximate>)> {
    let (b, m) = domain.point(i);
    let mut plans = Vec::with_capacity(model.num_actions());
    let mut approx = Vec::new();
    for a in 0..model.num_actions() {
        let reward = model.expected_reward(b, m, a)?;
        let mut successors = Vec::new();
        for (p, succ) in model.successors(b, m, a)? {
            let Some(b2) = succ else { continue };
            if p <= 0.0 {
                continue;
            }
            let key = TableKey::new(&b2, m);
            match domain.position(&key) {
                Some(j) => successors.push((p, j)),
                None => {
                    let missing = Error::MissingEntry { message: m.0.clone() };
                    if lookup == Lookup::Exact {
                        return Err(missing);
                    }
                    let (j, distance) = domain.nearest(&key).ok_or(missing)?;
                    approx.push(Approximate {
                        entry: i,
                        action: a,
                        slot: successors.len(),
                        key,
                        distance,
                    });
                    successors.push((p, j));
                }
            }
        }
        plans.push(ActionPlan { reward, successors });
    }
    Ok((plans, approx))
}

/// Result of iterating a backup plan to its fixed point.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm change of every sweep, in order.
    pub deltas: Vec<f64>,
}

/// Iterates `plan` from `initial` until a sweep changes no entry by `epsilon`
/// or more.
pub fn iterate_to_fixed_point(plan: &BackupPlan, initial: Vec<f64>, epsilon: f64, cap: usize) -> Result<FixedPoint> {
    let mut values = initial;
    let mut deltas = Vec::new();
    for it in 1..=cap {
        let next = plan.apply(&values);
        let delta = values
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        values = next;
        deltas.push(delta);
        if delta < epsilon {
            return Ok(FixedPoint {
                values,
                iterations: it,
                deltas,
            });
        }
    }
    Err(Error::IterationCapExceeded {
        cap,
        delta: deltas.last().copied().unwrap_or(f64::INFINITY),
    })
}
