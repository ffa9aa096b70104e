//! Finite single-agent POMDP primitives: belief filtering, observation
//! likelihoods, value backup and optimal-action extraction.
//!
//! The filter is the usual Bayes update
//!
//! ```text
//! b'(s') = β · O(s', a, o) · Σ_s b(s) · T(s, a, s')
//! ```
//!
//! and the value of a belief is the max over actions of expected immediate
//! reward plus the discounted, likelihood-weighted value of the updated
//! beliefs.

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::frame::PomdpFrame;
use crate::value::{self, BackupPlan, BeliefModel, Domain, Lookup, MessageKey, ValueTable};

fn check_inputs(b: &Belief, a: usize, f: &PomdpFrame) -> Result<()> {
    if b.support_size() != f.num_states() {
        return Err(Error::InvalidBelief(format!(
            "belief has {} entries, frame has {} states",
            b.support_size(),
            f.num_states()
        )));
    }
    if a >= f.num_actions() {
        return Err(Error::InvalidConfig(format!("action {a} out of range")));
    }
    Ok(())
}

/// Predicted state distribution after `a`, before observing.
fn predict(b: &Belief, a: usize, f: &PomdpFrame) -> Vec<f64> {
    let n = f.num_states();
    let mut out = vec![0.0; n];
    for (s, p) in b.mass().iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        for (s2, q) in out.iter_mut().enumerate() {
            *q += p * f.t(s, a, s2);
        }
    }
    out
}

/// Unnormalized posterior masses `O(s',a,o) Σ_s b(s) T(s,a,s')`.
pub fn se_pomdp_unnormalized(b: &Belief, a: usize, o: usize, f: &PomdpFrame) -> Result<Vec<f64>> {
    check_inputs(b, a, f)?;
    if o >= f.num_observations() {
        return Err(Error::InvalidConfig(format!("observation {o} out of range")));
    }
    let mut pred = predict(b, a, f);
    for (s2, q) in pred.iter_mut().enumerate() {
        *q *= f.o(s2, a, o);
    }
    Ok(pred)
}

/// Bayes-filter update of `b` after taking `a` and observing `o`.
pub fn se_pomdp(b: &Belief, a: usize, o: usize, f: &PomdpFrame) -> Result<Belief> {
    Belief::normalized(se_pomdp_unnormalized(b, a, o, f)?)
}

/// `Pr(o | a, b)` for every observation.
pub fn obs_likelihood(b: &Belief, a: usize, f: &PomdpFrame) -> Result<Vec<f64>> {
    check_inputs(b, a, f)?;
    let pred = predict(b, a, f);
    Ok((0..f.num_observations())
        .map(|o| pred.iter().enumerate().map(|(s2, q)| q * f.o(s2, a, o)).sum())
        .collect())
}

impl BeliefModel for PomdpFrame {
    fn num_actions(&self) -> usize {
        PomdpFrame::num_actions(self)
    }

    fn num_observations(&self) -> usize {
        PomdpFrame::num_observations(self)
    }

    fn discount(&self) -> f64 {
        PomdpFrame::discount(self)
    }

    fn expected_reward(&self, b: &Belief, _message: &MessageKey, a: usize) -> Result<f64> {
        check_inputs(b, a, self)?;
        Ok(b.mass().iter().enumerate().map(|(s, p)| p * self.r(s, a)).sum())
    }

    fn successors(&self, b: &Belief, _message: &MessageKey, a: usize) -> Result<Vec<(f64, Option<Belief>)>> {
        let likelihood = obs_likelihood(b, a, self)?;
        likelihood
            .into_iter()
            .enumerate()
            .map(|(o, p)| {
                if p <= 0.0 {
                    return Ok((p, None));
                }
                match se_pomdp(b, a, o, self) {
                    Ok(b2) => Ok((p, Some(b2))),
                    Err(Error::ImpossibleObservation { .. }) => Ok((p, None)),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }
}

/// Backs up `table` at every belief in `points`.
pub fn pomdp_value_backup(table: &ValueTable, points: &[Belief], f: &PomdpFrame, lookup: Lookup) -> Result<ValueTable> {
    let mut out = ValueTable::new();
    let none = MessageKey::none();
    for b in points {
        let q = value::q_values(f, b, &none, table, lookup)?;
        let best = q.into_iter().fold(f64::NEG_INFINITY, f64::max);
        out.insert(value::TableKey::new(b, &none), best);
    }
    Ok(out)
}

/// Every action within the tie margin of the best backed-up value.
pub fn pomdp_opt(b: &Belief, table: &ValueTable, f: &PomdpFrame, lookup: Lookup) -> Result<Vec<usize>> {
    value::optimal_actions(f, b, &MessageKey::none(), table, lookup)
}

/// Beliefs reachable from `initial` within `depth` updates.
pub fn reachable_beliefs(initial: &[Belief], f: &PomdpFrame, depth: usize) -> Result<Domain> {
    let seeds: Vec<_> = initial.iter().map(|b| (b.clone(), MessageKey::none())).collect();
    Domain::closure(f, &seeds, depth)
}

/// Value iteration on the reachable set until successive sweeps differ by
/// less than `epsilon`.
pub fn solve(f: &PomdpFrame, domain: &Domain, epsilon: f64, cap: usize) -> Result<(BackupPlan, Vec<f64>)> {
    let plan = BackupPlan::compile(f, domain, Lookup::Nearest)?;
    let fp = value::iterate_to_fixed_point(&plan, vec![0.0; domain.len()], epsilon, cap)?;
    Ok((plan, fp.values))
}
