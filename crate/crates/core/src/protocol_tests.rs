use std::cell::RefCell;

use super::*;
use crate::env::{SeqDesignConfig, SeqEnv};
use crate::exec::Execution;
use crate::gfn::TrainConfig;
use crate::policy::PolicyModel;

fn seq(a: usize, l: usize) -> SeqEnv {
    SeqEnv::new(SeqDesignConfig {
        alphabet: a,
        length: l,
        peaks: vec!["A".repeat(l), "C".repeat(l)],
        scale: 1.0,
        mode_radius: 0,
    })
    .unwrap()
}

fn trainer(e: &SeqEnv) -> Trainer<Vec<u8>> {
    let cfg = TrainConfig { batch_size: 4, beta: 1.0, epsilon: 0.05, eval_epsilon: None, lr: 0.01, z_lr: 0.05 };
    Trainer::new(PolicyModel::tabular(e, 100_000).unwrap(), cfg, Execution::Sequential)
}

fn proto_cfg(strategy: Strategy) -> ProtocolConfig {
    ProtocolConfig {
        rounds: 60,
        interval: 5,
        eval_samples: 8,
        strategy,
        k: 2,
        window: 5,
        alpha: 0.1,
        lambda: 0.5,
        ..ProtocolConfig::default()
    }
}

#[test]
fn plain_tb_matches_unrestricted_training() {
    let e = seq(3, 4);
    let mut p = Protocol::new(&e, proto_cfg(Strategy::PlainTb), trainer(&e), 7).unwrap();
    p.run().unwrap();
    let mut t = trainer(&e);
    let all = Restriction::all(ArmSpace::new(3, 1).unwrap());
    let direct: Vec<f64> = (0..60).map(|r| t.train_round(&e, &all, round_seed(7, r)).unwrap().0.loss).collect();
    let via: Vec<f64> = p.records.iter().flat_map(|r| r.losses.clone()).collect();
    assert_eq!(direct, via);
    assert!(p.records.iter().all(|r| r.super_arm == SuperArm::All && r.arm_rewards.is_empty()));
    assert_eq!(p.trainer.counters.eval_sampled, 0);
    assert!(p.arm_rows.is_empty());
}

#[test]
fn runs_are_deterministic() {
    let e = seq(4, 4);
    let run = || {
        let mut p = Protocol::new(&e, proto_cfg(Strategy::CucbGreedy), trainer(&e), 3).unwrap();
        p.run().unwrap();
        p.records
            .iter()
            .map(|r| (r.super_arm.label(), r.losses.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), r.modes))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn warmup_then_clock() {
    let e = seq(2, 4);
    let mut p = Protocol::new(&e, proto_cfg(Strategy::CucbGreedy), trainer(&e), 1).unwrap();
    p.step_epoch().unwrap();
    assert!(p.records[0].warmup);
    assert_eq!(p.records[0].t, 1);
    assert!(p.stats.is_warm());
    let w = p.warmup_epochs();
    p.run().unwrap();
    assert_eq!(p.records[w as usize].t, w + 1);
    assert!(!p.records[w as usize].warmup);
    for pair in p.records.windows(2) {
        assert_eq!(pair[1].t, pair[0].t + 1);
    }
    assert_eq!(p.rounds_done(), 60);
    assert_eq!(p.records.len(), 12);
}

#[test]
fn training_respects_selected_super_arm() {
    let e = seq(4, 5);
    let seen = RefCell::new(Vec::new());
    let space = ArmSpace::new(4, 1).unwrap();
    {
        let mut p = Protocol::new(&e, proto_cfg(Strategy::Random), trainer(&e), 5).unwrap();
        p.inspect_batches(|b| {
            seen.borrow_mut().push(b.iter().map(|t| (t.provenance, t.arms(&space))).collect::<Vec<_>>())
        });
        p.run().unwrap();
        let batches = seen.borrow();
        assert_eq!(batches.len(), 60);
        for (i, b) in batches.iter().enumerate() {
            let arm = &p.records[i / 5].super_arm;
            for (prov, arms) in b {
                assert_eq!(*prov, Provenance::Train);
                assert!(arms.iter().all(|&a| arm.contains(a)));
            }
        }
        assert_eq!(p.trainer.counters.eval_in_gradient, 0);
        assert!(p.trainer.counters.eval_sampled > 0);
    }
}

#[test]
fn composite_warmup_can_stall() {
    let e = seq(4, 4);
    let cfg = ProtocolConfig { arm_group: 2, eval_samples: 1, warmup_cap: 1, k: 3, ..proto_cfg(Strategy::CucbGreedy) };
    let mut p = Protocol::new(&e, cfg, trainer(&e), 2).unwrap();
    p.step_epoch().unwrap();
    match p.step_epoch() {
        Err(Error::WarmupStall(cold)) => assert!(cold.len() >= 14),
        other => panic!("expected a stall, got {:?}", other.map(|r| r.epoch)),
    }
}

#[test]
fn validation() {
    let e = seq(3, 3);
    let bad_k = ProtocolConfig { k: 4, ..proto_cfg(Strategy::CucbGreedy) };
    assert!(matches!(bad_k.validate(&e), Err(Error::KTooLarge { k: 4, n: 3 })));
    let bad_i = ProtocolConfig { interval: 100, ..proto_cfg(Strategy::Random) };
    assert!(bad_i.validate(&e).is_err());
    let keep = ProtocolConfig { hard_prune_keep: Some(vec![0, 0]), ..proto_cfg(Strategy::HardPrune) };
    assert!(keep.validate(&e).is_err());
    assert!(proto_cfg(Strategy::HardPrune).validate(&e).is_ok());
}

#[test]
fn hard_prune_keeps_one_set() {
    let e = seq(4, 4);
    let mut p = Protocol::new(&e, proto_cfg(Strategy::HardPrune), trainer(&e), 9).unwrap();
    p.run().unwrap();
    let keep = SuperArm::subset(p.hard_prune_keep().to_vec());
    assert!(p.records.iter().filter(|r| !r.warmup).all(|r| r.super_arm == keep));
    assert!(p.records.iter().filter(|r| !r.warmup).all(|r| r.regret_term.is_some()));
}

#[test]
fn elbo_is_scheduled() {
    let e = seq(2, 3);
    let cfg = ProtocolConfig { elbo_every: 5, elbo_samples: 16, ..proto_cfg(Strategy::CucbGreedy) };
    let mut p = Protocol::new(&e, cfg, trainer(&e), 4).unwrap();
    p.run().unwrap();
    let with: Vec<u64> = p.records.iter().filter(|r| r.elbo.is_some()).map(|r| r.epoch).collect();
    assert_eq!(with, vec![4, 9, 11]);
}
