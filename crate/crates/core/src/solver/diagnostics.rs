//! Randomized checks of the backup operator: monotonicity, γ-contraction and
//! uniqueness of the fixed point.

use rand::Rng;
use serde::Serialize;

use crate::domains::spectrum::{exact_trajectory, pf_utility_check};
use crate::error::Result;
use crate::ipomdp::InteractiveFrame;
use crate::net::{MessageKind, NetModel};
use crate::random::{random_domain, random_instance, random_schedule, random_spectrum, InstanceShape};
use crate::value::{iterate_to_fixed_point, BackupPlan, Domain, Lookup, ValueTable};

/// Slack allowed on every inequality checked here.
pub const SLACK: f64 = 1e-9;

/// Largest accepted telescoping residual of a proportional-fairness
/// trajectory.
pub const PF_RESIDUAL_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub name: String,
    pub trials: usize,
    pub violations: Vec<String>,
    /// Largest observed `‖HV − HU‖ / ‖V − U‖` for contraction checks, the
    /// largest residual for the utility check.
    pub max_ratio: Option<f64>,
}

impl DiagnosticReport {
    fn new(name: &str, trials: usize) -> Self {
        Self {
            name: name.into(),
            trials,
            violations: Vec::new(),
            max_ratio: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const KINDS: [MessageKind; 3] = [MessageKind::Action, MessageKind::Belief, MessageKind::Observation];

struct Trial {
    frame: InteractiveFrame,
    kind: MessageKind,
    domain: Domain,
    plan: BackupPlan,
}

fn random_trial(rng: &mut impl Rng, discount: f64) -> Result<Trial> {
    let shape = InstanceShape {
        states: rng.gen_range(2..=3),
        actions: rng.gen_range(1..=3),
        observations: rng.gen_range(1..=3),
        neighbor_actions: rng.gen_range(1..=3),
        neighbor_observations: rng.gen_range(1..=3),
        models: rng.gen_range(1..=3),
        discount,
    };
    let frame = random_instance(rng, &shape)?;
    let kind = KINDS[rng.gen_range(0..KINDS.len())];
    let domain = random_domain(rng, &frame, kind, 2, 2)?;
    let plan = BackupPlan::compile(&NetModel::new(&frame, kind), &domain, Lookup::Nearest)?;
    Ok(Trial {
        frame,
        kind,
        domain,
        plan,
    })
}

fn describe(trial: &Trial, index: usize, v: &[f64], u: &[f64]) -> String {
    format!(
        "trial {index}: message {} over {} points, frame {:?}, models {}, V = {v:?}, U = {u:?}",
        trial.kind,
        trial.domain.len(),
        trial.frame.frame(),
        trial.frame.space().models_per_state(),
    )
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// For random `V ≤ U`, checks `HV ≤ HU` pointwise.
pub fn check_monotonicity(trials: usize, rng: &mut impl Rng, discount: f64) -> Result<DiagnosticReport> {
    let mut report = DiagnosticReport::new("monotonicity", trials);
    for t in 0..trials {
        let trial = random_trial(rng, discount)?;
        let n = trial.domain.len();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let u: Vec<f64> = v
            .iter()
            .map(|x| if rng.gen_bool(0.2) { *x } else { x + rng.gen_range(0.0..5.0) })
            .collect();
        let (hv, hu) = (trial.plan.apply(&v), trial.plan.apply(&u));
        if let Some(i) = (0..n).find(|&i| hv[i] > hu[i] + SLACK) {
            report.violations.push(format!(
                "{}; entry {i}: HV = {} > HU = {}",
                describe(&trial, t, &v, &u),
                hv[i],
                hu[i]
            ));
        }
    }
    Ok(report)
}

/// For random `V, U`, checks `‖HV − HU‖ ≤ γ‖V − U‖` and records the largest
/// ratio.
pub fn check_contraction(trials: usize, rng: &mut impl Rng, discount: f64) -> Result<DiagnosticReport> {
    let mut report = DiagnosticReport::new("contraction", trials);
    let mut max_ratio = 0.0f64;
    for t in 0..trials {
        let trial = random_trial(rng, discount)?;
        let n = trial.domain.len();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let before = sup(&v, &u);
        let after = sup(&trial.plan.apply(&v), &trial.plan.apply(&u));
        if before > 0.0 {
            max_ratio = max_ratio.max(after / before);
        }
        if after > discount * before + SLACK {
            report.violations.push(format!(
                "{}; ‖HV − HU‖ = {after} > γ‖V − U‖ = {}",
                describe(&trial, t, &v, &u),
                discount * before
            ));
        }
    }
    report.max_ratio = (trials > 0).then_some(max_ratio);
    Ok(report)
}

/// Iterates the backup from `initial` until a sweep changes no entry by
/// `epsilon` or more; returns the final table and the sweep count.
pub fn fixed_point_iterate(
    plan: &BackupPlan,
    domain: &Domain,
    initial: &ValueTable,
    epsilon: f64,
    cap: usize,
) -> Result<(ValueTable, usize)> {
    let fp = iterate_to_fixed_point(plan, domain.values(initial)?, epsilon, cap)?;
    Ok((domain.table(&fp.values), fp.iterations))
}

/// From two random initializations, the iterates must land within
/// `2ε/(1−γ)` of each other and every sweep's change must shrink by at
/// least γ.
pub fn fixed_point_uniqueness(trials: usize, rng: &mut impl Rng, discount: f64, epsilon: f64) -> Result<DiagnosticReport> {
    let mut report = DiagnosticReport::new("fixed point", trials);
    let cap = 100_000;
    for t in 0..trials {
        let trial = random_trial(rng, discount)?;
        let n = trial.domain.len();
        let init = |rng: &mut dyn rand::RngCore| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect() };
        let (v0, u0) = (init(rng), init(rng));
        let a = iterate_to_fixed_point(&trial.plan, v0.clone(), epsilon, cap)?;
        let b = iterate_to_fixed_point(&trial.plan, u0.clone(), epsilon, cap)?;
        let bound = 2.0 * epsilon / (1.0 - discount);
        let dist = sup(&a.values, &b.values);
        if dist > bound {
            report
                .violations
                .push(format!("{}; fixed points differ by {dist} > {bound}", describe(&trial, t, &v0, &u0)));
        }
        for deltas in [&a.deltas, &b.deltas] {
            if let Some(w) = deltas.windows(2).find(|w| w[1] > discount * w[0] + SLACK) {
                report.violations.push(format!(
                    "{}; sweep change {} after {} exceeds the contraction rate",
                    describe(&trial, t, &v0, &u0),
                    w[1],
                    w[0]
                ));
            }
        }
    }
    Ok(report)
}

/// On random static-channel trajectories of `slots` slots and `stations`
/// stations, the per-slot rewards must telescope to the change in
/// `Σ ln X̄` within [`PF_RESIDUAL_BOUND`]. `max_ratio` holds the largest
/// residual.
pub fn check_pf_utility(trials: usize, rng: &mut impl Rng, stations: usize, slots: usize) -> Result<DiagnosticReport> {
    let mut report = DiagnosticReport::new("pf utility", trials);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let cfg = random_spectrum(rng, stations);
        let initial: Vec<f64> = (0..stations).map(|_| rng.gen_range(0.1..5.0)).collect();
        let schedule = random_schedule(rng, stations, slots);
        let residual = pf_utility_check(&exact_trajectory(&cfg, &initial, &schedule)?);
        worst = worst.max(residual);
        if !(residual <= PF_RESIDUAL_BOUND) {
            report.violations.push(format!(
                "trial {t}: residual {residual} > {PF_RESIDUAL_BOUND}; config {cfg:?}, initial {initial:?}, schedule {schedule:?}"
            ));
        }
    }
    report.max_ratio = (trials > 0).then_some(worst);
    Ok(report)
}
