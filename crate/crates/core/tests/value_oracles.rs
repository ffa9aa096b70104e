//! Backups and fixed points against independent computations.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::HashMap;

use common::{joint_update, random_prior, to_belief, RawInstance, Told};
use netpomdp_core::belief::{Belief, StateSpace};
use netpomdp_core::domains::tiger::{single_agent_tiger, LISTEN};
use netpomdp_core::frame::{NetFrame, PomdpFrame};
use netpomdp_core::ipomdp::{InteractiveFrame, InteractiveStateSpace};
use netpomdp_core::net::{h_eval, net_backup, MessageKind, NetModel};
use netpomdp_core::pomdp::{pomdp_value_backup, reachable_beliefs, solve};
use netpomdp_core::random::random_pomdp;
use netpomdp_core::value::{
    iterate_to_fixed_point, sup_norm, BackupPlan, Domain, Lookup, MessageKey, TableKey, ValueTable,
};
use netpomdp_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn told(kind: MessageKind, x: usize) -> Told {
    match kind {
        MessageKind::Action => Told::Action(x),
        MessageKind::Observation => Told::Observation(x),
        MessageKind::Belief => Told::Model(x),
    }
}

/// `h` written out term by term: expected reward under the message, plus γ
/// times the sum over own observations of the observation probability
/// (neighbor-model weights excluded) and the table value at the enumerated
/// successor.
#[test]
fn lookahead_matches_term_by_term_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let kinds = [MessageKind::Action, MessageKind::Observation, MessageKind::Belief];
    for trial in 0..150 {
        let raw = RawInstance::random(&mut rng, 2, 2, 2, 2, 2, 2);
        let frame = raw.frame();
        let kind = kinds[trial % 3];
        let model = NetModel::new(&frame, kind);
        let x = rng.gen_range(0..2);
        let key = MessageKey(vec![x as u32]);
        let prior = random_prior(&mut rng, &raw);
        let b = to_belief(&frame, &prior);
        let domain = Domain::closure(&model, &[(b.clone(), key.clone())], 1).unwrap();
        let mut table = ValueTable::new();
        for (p, m) in domain.points() {
            table.insert(TableKey::new(p, m), rng.gen_range(-5.0..5.0));
        }
        for a in 0..raw.a {
            let mut reward = 0.0;
            let mut obs_prob = vec![0.0; raw.o];
            for s in 0..raw.s {
                for m in 0..raw.candidates.len() {
                    for aj in 0..raw.aj {
                        let w = match kind {
                            MessageKind::Action => f64::from(u8::from(aj == x)),
                            _ => raw.policies[m][aj],
                        };
                        reward += prior[s][m] * w * raw.r_i(s, a, aj);
                        for s2 in 0..raw.s {
                            for (o, p) in obs_prob.iter_mut().enumerate() {
                                *p += prior[s][m] * w * raw.t_i(s, a, aj, s2) * raw.o_i(s2, a, aj, o);
                            }
                        }
                    }
                }
            }
            let mut cont = 0.0;
            for (o, p) in obs_prob.iter().enumerate() {
                if let Some(next) = joint_update(&raw, &prior, a, o, told(kind, x)) {
                    let v = table.get(&TableKey::new(&to_belief(&frame, &next), &key)).unwrap();
                    cont += p * v;
                }
            }
            let want = reward + raw.discount * cont;
            let got = h_eval(&model, &b, a, &key, &table, Lookup::Exact).unwrap();
            assert!((got - want).abs() <= TOL, "trial {trial} {kind}: {got} vs {want}");
        }
    }
}

/// `k`-horizon expectimax over the belief tree, computed recursively.
fn expectimax(f: &PomdpFrame, b: &[f64], k: usize, memo: &mut HashMap<(Vec<i64>, usize), f64>) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let key = (common::round_key(b), k);
    if let Some(v) = memo.get(&key) {
        return *v;
    }
    let ns = f.num_states();
    let mut best = f64::NEG_INFINITY;
    for a in 0..f.num_actions() {
        let mut q: f64 = (0..ns).map(|s| b[s] * f.r(s, a)).sum();
        for o in 0..f.num_observations() {
            let joint: Vec<f64> = (0..ns)
                .map(|s2| f.o(s2, a, o) * (0..ns).map(|s| b[s] * f.t(s, a, s2)).sum::<f64>())
                .collect();
            let p: f64 = joint.iter().sum();
            if p > 1e-12 {
                let next: Vec<f64> = joint.iter().map(|x| x / p).collect();
                q += f.discount() * p * expectimax(f, &next, k - 1, memo);
            }
        }
        best = best.max(q);
    }
    memo.insert(key, best);
    best
}

#[test]
fn value_iteration_matches_finite_horizon_tree() {
    // The tiger belief closure is finite, so exact lookups never miss.
    let f = single_agent_tiger(0.85, 0.9).unwrap();
    let domain = reachable_beliefs(&[Belief::uniform(2)], &f, 64).unwrap();
    let points: Vec<Belief> = domain.points().iter().map(|(b, _)| b.clone()).collect();
    let mut table = domain.zero_table();
    let mut memo = HashMap::new();
    for k in 1..=12 {
        table = pomdp_value_backup(&table, &points, &f, Lookup::Exact).unwrap();
        for b in &points {
            let want = expectimax(&f, b.mass(), k, &mut memo);
            let got = table.get(&TableKey::new(b, &MessageKey::none())).unwrap();
            assert!((got - want).abs() <= 1e-9, "horizon {k}: {got} vs {want}");
        }
    }
    // Listening is optimal at the uniform belief for long horizons.
    let q: Vec<f64> = (0..3)
        .map(|a| netpomdp_core::value::q_value(&f, &Belief::uniform(2), &MessageKey::none(), a, &table, Lookup::Exact).unwrap())
        .collect();
    assert!(q[LISTEN] > q[1] && q[LISTEN] > q[2]);
}

#[test]
fn empty_neighbor_set_reproduces_single_agent_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let f = random_pomdp(&mut rng, 3, 2, 2, 0.9).unwrap();
        let b0 = common::distribution(&mut rng, 3);
        let single = reachable_beliefs(&[Belief::new(b0.clone()).unwrap()], &f, 3).unwrap();
        let (_, v_single) = solve(&f, &single, 1e-12, 100_000).unwrap();

        let space = InteractiveStateSpace::product(StateSpace::indexed(3).unwrap(), Vec::new());
        let frame = InteractiveFrame::new(NetFrame::from_pomdp(&f), space, Vec::new()).unwrap();
        let model = NetModel::new(&frame, MessageKind::Action);
        let net = Domain::closure(&model, &[(Belief::new(b0).unwrap(), MessageKey::none())], 3).unwrap();
        let plan = BackupPlan::compile(&model, &net, Lookup::Nearest).unwrap();
        let fp = iterate_to_fixed_point(&plan, vec![0.0; net.len()], 1e-12, 100_000).unwrap();

        let single_table = single.table(&v_single);
        let net_table = net.table(&fp.values);
        let mut shared = 0;
        for (key, v) in net_table.iter() {
            if let Some(w) = single_table.get(key) {
                shared += 1;
                assert!((v - w).abs() <= TOL, "{v} vs {w}");
            }
        }
        // Summation order can flip the last rounded digit of a belief key;
        // every single-agent key must be shared or within a few rounding
        // units of a networked key.
        for (key, _) in single_table.iter() {
            if net_table.get(key).is_none() {
                let close = net_table.keys().any(|k| {
                    k.belief.0.iter().zip(&key.belief.0).map(|(x, y)| (x - y).abs()).sum::<i64>() <= 4
                });
                assert!(close, "single-agent key {key:?} has no networked counterpart");
            }
        }
        assert!(shared * 10 >= single.len() * 9, "{shared} of {} keys shared", single.len());
    }
}

#[test]
fn scalar_chain_reaches_its_geometric_sum() {
    let f = PomdpFrame::new(1, vec!["stay".into()], vec!["none".into()], vec![1.0], vec![1.0], vec![1.0], 0.5).unwrap();
    let domain = reachable_beliefs(&[Belief::uniform(1)], &f, 1).unwrap();
    let plan = BackupPlan::compile(&f, &domain, Lookup::Exact).unwrap();
    let fp = iterate_to_fixed_point(&plan, vec![0.0], 1e-6, 25).unwrap();
    assert!((fp.values[0] - 2.0).abs() <= 1e-6);
    assert!(fp.iterations <= 25);
}

#[test]
fn zero_rewards_converge_in_one_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_pomdp(&mut rng, 2, 2, 2, 0.9).unwrap().map_rewards(|_| 0.0);
    let domain = reachable_beliefs(&[Belief::uniform(2)], &f, 2).unwrap();
    let plan = BackupPlan::compile(&f, &domain, Lookup::Nearest).unwrap();
    let fp = iterate_to_fixed_point(&plan, vec![0.0; domain.len()], 1e-6, 10).unwrap();
    assert_eq!(fp.iterations, 1);
    assert!(fp.values.iter().all(|v| *v == 0.0));
}

#[test]
fn compiled_plan_matches_direct_backup() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for kind in [MessageKind::Action, MessageKind::Observation, MessageKind::Belief] {
        let raw = RawInstance::random(&mut rng, 2, 2, 2, 2, 2, 3);
        let frame = raw.frame();
        let model = NetModel::new(&frame, kind);
        let b = to_belief(&frame, &random_prior(&mut rng, &raw));
        let domain = Domain::closure(&model, &[(b, MessageKey(vec![1]))], 2).unwrap();
        let values: Vec<f64> = (0..domain.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let table = domain.table(&values);
        let plan = BackupPlan::compile(&model, &domain, Lookup::Nearest).unwrap();
        let direct = net_backup(&model, &table, &domain, Lookup::Nearest).unwrap();
        let compiled = domain.table(&plan.apply(&values));
        assert!(sup_norm(&direct, &compiled).unwrap() <= TOL);
    }
}

#[test]
fn sup_norm_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let keys: Vec<TableKey> = (0..20)
        .map(|i| TableKey::new(&Belief::new(common::distribution(&mut rng, 3)).unwrap(), &MessageKey(vec![i % 3])))
        .collect();
    let (mut u, mut v, mut w) = (ValueTable::new(), ValueTable::new(), ValueTable::new());
    let mut scan = 0.0f64;
    for k in &keys {
        let (x, y) = (rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0));
        u.insert(k.clone(), x);
        v.insert(k.clone(), y);
        w.insert(k.clone(), x + 3.0);
        scan = scan.max((x - y).abs());
    }
    assert_eq!(sup_norm(&u, &v).unwrap(), scan);
    assert_eq!(sup_norm(&v, &u).unwrap(), scan);
    assert_eq!(sup_norm(&u, &u).unwrap(), 0.0);
    assert!((sup_norm(&u, &w).unwrap() - 3.0).abs() <= 1e-12);
    let mut short = u.clone();
    short.insert(TableKey::new(&Belief::uniform(2), &MessageKey::none()), 0.0);
    assert_eq!(sup_norm(&u, &short), Err(Error::KeyMismatch));
}

#[test]
fn shifted_tables_back_up_within_discounted_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let raw = RawInstance::random(&mut rng, 2, 2, 2, 2, 2, 2);
        let frame = raw.frame();
        let model = NetModel::new(&frame, MessageKind::Action);
        let b = to_belief(&frame, &random_prior(&mut rng, &raw));
        let domain = Domain::closure(&model, &[(b, MessageKey(vec![0]))], 2).unwrap();
        let plan = BackupPlan::compile(&model, &domain, Lookup::Nearest).unwrap();
        let v: Vec<f64> = (0..domain.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c = rng.gen_range(0.0..4.0);
        let u: Vec<f64> = v.iter().map(|x| x + c).collect();
        let (hv, hu) = (plan.apply(&v), plan.apply(&u));
        for (x, y) in hv.iter().zip(&hu) {
            assert!(*y - *x <= raw.discount * c + TOL && *x <= *y + TOL);
        }
        assert_eq!(plan.apply(&v), hv);
    }
}
