use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::STOCHASTIC_TOLERANCE;

/// The true joint system the agents act in.
///
/// Joint actions are mixed-radix indices with agent 0 most significant.
/// Tensors are indexed `(s, joint, s')` for transitions, `(s', joint, o)` per
/// agent for observations and `(s, joint)` per agent for rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularEnv {
    num_states: usize,
    actions: Vec<usize>,
    transition: Vec<f64>,
    observations: Vec<(usize, Vec<f64>)>,
    rewards: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvState {
    pub state: usize,
    pub slot: usize,
}

impl TabularEnv {
    pub fn new(
        num_states: usize,
        actions: Vec<usize>,
        transition: Vec<f64>,
        observations: Vec<(usize, Vec<f64>)>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let env = Self {
            num_states,
            actions,
            transition,
            observations,
            rewards,
            initial,
        };
        let v = env.violations();
        if v.is_empty() {
            Ok(env)
        } else {
            Err(Error::InvalidFrame(v.join("; ")))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ns = self.num_states;
        let nj = self.num_joint();
        let n = self.actions.len();
        if n == 0 || ns == 0 {
            out.push("environment needs at least one agent and one state".into());
            return out;
        }
        if self.observations.len() != n || self.rewards.len() != n {
            out.push(format!(
                "environment has {n} agents but {} observation and {} reward tensors",
                self.observations.len(),
                self.rewards.len()
            ));
            return out;
        }
        let mut check_rows = |name: &str, data: &[f64], width: usize, expected: usize| {
            if data.len() != expected {
                out.push(format!("{name} has {} entries, expected {expected}", data.len()));
                return;
            }
            for (r, row) in data.chunks(width).enumerate() {
                let total: f64 = row.iter().sum();
                if row.iter().any(|x| *x < 0.0 || !x.is_finite()) || (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    out.push(format!("{name}[row {r}] sums to {total}"));
                }
            }
        };
        check_rows("environment transition", &self.transition, ns, ns * nj * ns);
        for (i, (no, data)) in self.observations.iter().enumerate() {
            check_rows(&format!("environment observation[agent {i}]"), data, (*no).max(1), ns * nj * no);
        }
        check_rows("environment initial distribution", &self.initial, ns, ns);
        for (i, r) in self.rewards.iter().enumerate() {
            if r.len() != ns * nj {
                out.push(format!("environment reward[agent {i}] has {} entries, expected {}", r.len(), ns * nj));
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_observations(&self, agent: usize) -> usize {
        self.observations[agent].0
    }

    pub fn num_joint(&self) -> usize {
        self.actions.iter().product()
    }

    pub fn joint_index(&self, joint: &[usize]) -> usize {
        joint.iter().zip(&self.actions).fold(0, |acc, (a, n)| acc * n + a)
    }

    pub fn t(&self, s: usize, joint: usize, s2: usize) -> f64 {
        self.transition[(s * self.num_joint() + joint) * self.num_states + s2]
    }

    pub fn o(&self, agent: usize, s2: usize, joint: usize, o: usize) -> f64 {
        let (no, data) = &self.observations[agent];
        data[(s2 * self.num_joint() + joint) * no + o]
    }

    pub fn r(&self, agent: usize, s: usize, joint: usize) -> f64 {
        self.rewards[agent][s * self.num_joint() + joint]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn sample_initial(&self, rng: &mut impl Rng) -> EnvState {
        EnvState {
            state: sample(&self.initial, rng),
            slot: 0,
        }
    }
}

fn sample(weights: &[f64], rng: &mut impl Rng) -> usize {
    WeightedIndex::new(weights)
        .expect("validated rows have positive mass")
        .sample(rng)
}

/// Samples the successor state, then each agent's observation in agent order;
/// rewards are read at the pre-transition state.
pub fn env_step(
    state: &EnvState,
    joint: &[usize],
    env: &TabularEnv,
    rng: &mut impl Rng,
) -> Result<(EnvState, Vec<usize>, Vec<f64>)> {
    if joint.len() != env.num_agents() || joint.iter().zip(&env.actions).any(|(a, n)| a >= n) {
        return Err(Error::InvalidConfig(format!("invalid joint action {joint:?}")));
    }
    let j = env.joint_index(joint);
    let ns = env.num_states;
    let row = &env.transition[(state.state * env.num_joint() + j) * ns..][..ns];
    let s2 = sample(row, rng);
    let obs = (0..env.num_agents())
        .map(|i| {
            let no = env.num_observations(i);
            let row = &env.observations[i].1[(s2 * env.num_joint() + j) * no..][..no];
            sample(row, rng)
        })
        .collect();
    let rewards = (0..env.num_agents()).map(|i| env.r(i, state.state, j)).collect();
    Ok((
        EnvState {
            state: s2,
            slot: state.slot + 1,
        },
        obs,
        rewards,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain() -> TabularEnv {
        TabularEnv::new(
            2,
            vec![1],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![(2, vec![1.0, 0.0, 0.0, 1.0])],
            vec![vec![1.0, -1.0]],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_tensors_force_outcomes() {
        let env = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = env.sample_initial(&mut rng);
        let (s1, o, r) = env_step(&s, &[0], &env, &mut rng).unwrap();
        assert_eq!((s1.state, s1.slot, o, r), (1, 1, vec![1], vec![1.0]));
        let (s2, o, r) = env_step(&s1, &[0], &env, &mut rng).unwrap();
        assert_eq!((s2.state, o, r), (0, vec![0], vec![-1.0]));
    }

    #[test]
    fn joint_index_is_agent_zero_major() {
        let env = TabularEnv::new(
            1,
            vec![2, 3],
            vec![1.0; 6],
            vec![(1, vec![1.0; 6]), (1, vec![1.0; 6])],
            vec![vec![0.0; 6], vec![0.0; 6]],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(env.joint_index(&[1, 2]), 5);
        assert_eq!(env.joint_index(&[0, 1]), 1);
    }

    #[test]
    fn bad_rows_reported() {
        let err = TabularEnv::new(1, vec![1], vec![0.9], vec![(1, vec![1.0])], vec![vec![0.0]], vec![1.0]).unwrap_err();
        assert!(err.to_string().contains("transition[row 0] sums to 0.9"));
    }
}
