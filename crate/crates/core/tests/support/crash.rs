//! Random operation sequences against a session that is dropped and
//! reopened after every step.

#![allow(dead_code)]

use std::path::Path;

use nucleus_core::session::{Direction, Session};
use nucleus_core::{AnnotationRecord, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub enum Op {
    Adjust(usize, i32),
    Accept(usize),
    Fail(usize),
    Navigate(Direction),
    AcceptCurrent,
    AdjustCurrent(i32),
}

pub fn random_ops(rng: &mut ChaCha8Rng, images: usize) -> Vec<Op> {
    let len = rng.random_range(1..=12);
    (0..len)
        .map(|_| match rng.random_range(0..6) {
            0 => Op::Adjust(rng.random_range(0..images), rng.random_range(-40..=40)),
            1 => Op::Accept(rng.random_range(0..images)),
            2 => Op::Fail(rng.random_range(0..images)),
            3 => Op::Navigate(if rng.random_bool(0.5) { Direction::Next } else { Direction::Prev }),
            4 => Op::AcceptCurrent,
            _ => Op::AdjustCurrent(if rng.random_bool(0.5) { 1 } else { -5 }),
        })
        .collect()
}

fn apply(s: &mut Session, ids: &[String], op: &Op) -> bool {
    match op {
        Op::Adjust(i, d) => s.adjust_threshold(&ids[*i], *d).is_ok(),
        Op::Accept(i) => s.accept(&ids[*i]).is_ok(),
        Op::Fail(i) => s.mark_failed(&ids[*i]).is_ok(),
        Op::Navigate(d) => {
            s.navigate(*d);
            true
        }
        Op::AcceptCurrent => s.accept_current().is_ok(),
        Op::AdjustCurrent(d) => s.adjust_current(*d).is_ok(),
    }
}

/// Outcome of one sequence: `Err` describes the first divergence.
pub fn run_sequence(root: &Path, images: &[(String, RgbImage)], ops: &[Op], alpha: f64) -> Result<(), String> {
    for (name, img) in images {
        img.save_png(root.join(name)).map_err(|e| e.to_string())?;
    }
    let ids: Vec<String> = images.iter().map(|(n, _)| n.clone()).collect();
    let mut session = Session::open(root, alpha).map_err(|e| e.to_string())?;
    for (step, op) in ops.iter().enumerate() {
        let before: Vec<AnnotationRecord> = session.records().to_vec();
        let ok = apply(&mut session, &ids, op);
        let expected = session.records().to_vec();
        if !ok && expected != before {
            return Err(format!("step {step} {op:?} failed but changed state"));
        }
        drop(session);

        session = Session::open(root, alpha).map_err(|e| e.to_string())?;
        if session.records() != &expected[..] {
            return Err(format!("step {step} {op:?}: reopened records differ"));
        }
        if session.default_alpha() != alpha {
            return Err(format!("step {step} {op:?}: default alpha differs"));
        }
        let issues = session.audit();
        if !issues.is_empty() {
            return Err(format!("step {step} {op:?}: audit {issues:?}"));
        }
    }
    Ok(())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
