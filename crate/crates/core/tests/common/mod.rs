#![allow(dead_code)]

use proptest::prelude::*;
use rvheal_core::ltl::{Letter, LassoWord, LtlFormula, Verdict};

pub const ATOMS: [&str; 2] = ["a", "b"];

/// Random formulas over `a`, `b` with at most `depth` nested operators.
pub fn formula(depth: u32) -> impl Strategy<Value = LtlFormula> {
    let leaf = prop_oneof![
        Just(LtlFormula::True),
        Just(LtlFormula::False),
        Just(LtlFormula::atom("a")),
        Just(LtlFormula::atom("b")),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(LtlFormula::not),
            inner.clone().prop_map(LtlFormula::next),
            inner.clone().prop_map(LtlFormula::globally),
            inner.clone().prop_map(LtlFormula::finally),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| LtlFormula::and(x, y)),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| LtlFormula::or(x, y)),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| LtlFormula::implies(x, y)),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| LtlFormula::until(x, y)),
            (inner.clone(), inner).prop_map(|(x, y)| LtlFormula::release(x, y)),
        ]
    })
}

pub fn letter() -> impl Strategy<Value = Letter> {
    (0usize..4).prop_map(mask_letter)
}

pub fn mask_letter(mask: usize) -> Letter {
    ATOMS
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, a)| *a)
        .collect()
}

pub fn all_letters() -> Vec<Letter> {
    (0..4).map(mask_letter).collect()
}

pub fn trace(max: usize) -> impl Strategy<Value = Vec<Letter>> {
    prop::collection::vec(letter(), 0..=max)
}

pub fn lasso(max_stem: usize, max_cycle: usize) -> impl Strategy<Value = LassoWord> {
    (trace(max_stem), prop::collection::vec(letter(), 1..=max_cycle))
        .prop_map(|(stem, cycle)| LassoWord::new(stem, cycle).unwrap())
}

pub fn flip(v: Verdict) -> Verdict {
    match v {
        Verdict::Top => Verdict::Bottom,
        Verdict::Bottom => Verdict::Top,
        Verdict::Inconclusive => Verdict::Inconclusive,
    }
}

/// Drops atoms `f` does not mention.
pub fn project(trace: &[Letter], f: &LtlFormula) -> Vec<Letter> {
    let names: Vec<String> = f.atoms().iter().map(|p| p.to_string()).collect();
    trace
        .iter()
        .map(|x| x.iter().filter(|a| names.iter().any(|n| n == a)).collect())
        .collect()
}

pub fn project_lasso(w: &LassoWord, f: &LtlFormula) -> LassoWord {
    LassoWord::new(project(&w.stem, f), project(&w.cycle, f)).unwrap()
}
