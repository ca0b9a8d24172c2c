//! Hand-evaluated metric cases. Each expected value is written as the
//! arithmetic of its derivation.

#![allow(dead_code)]

use entgen::corpus::tokenize;
use entgen::metrics::{bleu1, cider, dice, meteor_exact, pearson, stopword_set, BleuMode, EvalInstance};

pub const TOL: f64 = 1e-6;
pub const TOL_EXACT: f64 = 1e-9;

/// Case count and a description of every mismatch.
pub type Outcome = (usize, Vec<String>);

fn toks(s: &str) -> Vec<String> {
    tokenize(s)
}

fn instances(corpus: &[(&str, Vec<&str>)]) -> Vec<EvalInstance> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, (c, refs))| EvalInstance::from_text(&i.to_string(), c, refs))
        .collect()
}

fn compare(failures: &mut Vec<String>, name: &str, got: f64, expected: f64, tol: f64) {
    if got.is_nan() || (got - expected).abs() > tol {
        failures.push(format!("{name}: got {got}, expected {expected}"));
    }
}

pub fn check_bleu() -> Outcome {
    let cases = bleu_cases();
    let mut failures = Vec::new();
    for c in &cases {
        let inst = instances(&c.corpus);
        let cands: Vec<Vec<String>> = inst.iter().map(|i| i.candidate.clone()).collect();
        let refs: Vec<Vec<Vec<String>>> = inst.iter().map(|i| i.references.clone()).collect();
        match bleu1(&cands, &refs, c.mode) {
            Ok(v) => compare(&mut failures, c.name, v, c.expected, TOL),
            Err(e) => failures.push(format!("{}: {e}", c.name)),
        }
    }
    (cases.len(), failures)
}

pub fn check_meteor() -> Outcome {
    let cases = meteor_cases();
    let mut failures = Vec::new();
    for c in &cases {
        let refs: Vec<Vec<String>> = c.references.iter().map(|r| toks(r)).collect();
        compare(&mut failures, c.name, meteor_exact(&toks(c.candidate), &refs), c.expected, TOL);
    }
    (cases.len(), failures)
}

pub fn check_cider() -> Outcome {
    let cases = cider_cases();
    let mut failures = Vec::new();
    for c in &cases {
        match cider(&instances(&c.corpus)) {
            Ok(s) => {
                for (k, (&got, &want)) in s.per_instance.iter().zip(&c.per_instance).enumerate() {
                    compare(&mut failures, &format!("{}[{k}]", c.name), got, want, TOL);
                }
                let mean = c.per_instance.iter().sum::<f64>() / c.per_instance.len() as f64;
                compare(&mut failures, &format!("{} corpus", c.name), s.corpus, mean, TOL);
            }
            Err(e) => failures.push(format!("{}: {e}", c.name)),
        }
    }
    (cases.len(), failures)
}

pub fn check_dice() -> Outcome {
    let cases = dice_cases();
    let sw = stopword_set();
    let mut failures = Vec::new();
    for c in &cases {
        let (p, q) = (toks(c.premise), toks(c.reference));
        let name = format!("{:?} / {:?}", c.premise, c.reference);
        compare(&mut failures, &name, dice(&p, &q, &sw), c.expected, TOL_EXACT);
        compare(&mut failures, &format!("{name} swapped"), dice(&q, &p, &sw), c.expected, TOL_EXACT);
    }
    (cases.len(), failures)
}

pub fn check_pearson() -> Outcome {
    let cases = pearson_cases();
    let mut failures = Vec::new();
    for (k, c) in cases.iter().enumerate() {
        match pearson(&c.xs, &c.ys) {
            Ok(r) => compare(&mut failures, &format!("case {k}"), r, c.expected, TOL_EXACT),
            Err(e) => failures.push(format!("case {k}: {e}")),
        }
    }
    (cases.len(), failures)
}

pub struct BleuCase {
    pub name: &'static str,
    pub mode: BleuMode,
    /// `(candidate, references)` per instance.
    pub corpus: Vec<(&'static str, Vec<&'static str>)>,
    pub expected: f64,
}

pub fn bleu_cases() -> Vec<BleuCase> {
    use BleuMode::*;
    let e = |x: f64| x.exp();
    vec![
        BleuCase { name: "identity", mode: MultiRef, corpus: vec![("the cat sat", vec!["the cat sat"])], expected: 1.0 },
        // clipped 1/3, c=3 > r=2
        BleuCase { name: "clipping", mode: MultiRef, corpus: vec![("the the the", vec!["the cat"])], expected: 1.0 / 3.0 },
        // p=1, c=2, r=4: exp(1 - 4/2)
        BleuCase { name: "brevity", mode: MultiRef, corpus: vec![("a cat", vec!["a cat is here"])], expected: e(-1.0) },
        // lengths 2 and 6 tie at distance 2, shorter wins so BP=1
        BleuCase { name: "tie_shorter", mode: MultiRef, corpus: vec![("a b c d", vec!["a b", "a b c d e f"])], expected: 1.0 },
        BleuCase { name: "disjoint", mode: MultiRef, corpus: vec![("x y z", vec!["a b c"])], expected: 0.0 },
        // matches 2 + 1 over 5 tokens, r = 3 + 2
        BleuCase {
            name: "corpus_sum",
            mode: MultiRef,
            corpus: vec![("a a b", vec!["a b c"]), ("d e", vec!["d f"])],
            expected: 3.0 / 5.0,
        },
        // a clipped at max count 2 over references, b 1; closest length 3
        BleuCase { name: "multi_clip", mode: MultiRef, corpus: vec![("a a a b", vec!["a b", "a a c"])], expected: 3.0 / 4.0 },
        // closest reference length 3 for c=2: exp(1 - 3/2)
        BleuCase { name: "closest_len", mode: MultiRef, corpus: vec![("a b", vec!["a b c", "a b c d e"])], expected: e(-0.5) },
        // p = 4/4, c = 4, r = 4 + 2: exp(1 - 6/4)
        BleuCase {
            name: "corpus_bp",
            mode: MultiRef,
            corpus: vec![("a b c", vec!["a b c d"]), ("e", vec!["e f"])],
            expected: e(-0.5),
        },
        // lengths 3 and 5 tie for c=4; taking 5 would give exp(-0.25)
        BleuCase { name: "tie_bp", mode: MultiRef, corpus: vec![("a b c x", vec!["a b c", "a b c d e"])], expected: 3.0 / 4.0 },
        // slot 0 scores 1, slot 1 scores 1/2
        BleuCase { name: "single_mean", mode: SingleRefMean, corpus: vec![("a b", vec!["a b", "a c"])], expected: 0.75 },
        // slot 0 covers both instances (4/4), slot 1 only the first (1/2)
        BleuCase {
            name: "single_ragged",
            mode: SingleRefMean,
            corpus: vec![("a b", vec!["a b", "a c"]), ("c d", vec!["c d"])],
            expected: 0.75,
        },
    ]
}

pub struct MeteorCase {
    pub name: &'static str,
    pub candidate: &'static str,
    pub references: Vec<&'static str>,
    pub expected: f64,
}

pub fn meteor_cases() -> Vec<MeteorCase> {
    let c = |name, candidate, references: Vec<&'static str>, expected| MeteorCase { name, candidate, references, expected };
    vec![
        // F=1, penalty 0.5/27
        c("identity", "a b c", vec!["a b c"], 1.0 - 0.5 / 27.0),
        c("reversed", "c b a", vec!["a b c"], 0.5),
        c("disjoint", "x y", vec!["a b c"], 0.0),
        // P=1, R=1/2, F=5/9.5, penalty 0.5/8
        c("short_cand", "a b", vec!["a b c d"], (10.0 / 19.0) * (15.0 / 16.0)),
        // P=1/2, R=1, F=5/5.5
        c("long_cand", "a b c d", vec!["a b"], (10.0 / 11.0) * (15.0 / 16.0)),
        // P=2/3, R=1, F=20/21, two chunks of two matches
        c("gap", "a x b", vec!["a b"], (20.0 / 21.0) * 0.5),
        c("swap", "b a", vec!["a b"], 0.5),
        // best alignment keeps "the cat" and "the dog" as two chunks
        c("repeats", "the cat the dog", vec!["the dog the cat"], 1.0 - 0.5 / 8.0),
        c("best_ref", "a b c", vec!["x y", "a b c"], 1.0 - 0.5 / 27.0),
        // P=4/5, R=1, F=8/8.2, chunks 2 of 4
        c("insert", "a b x c d", vec!["a b c d"], (40.0 / 41.0) * (15.0 / 16.0)),
        c("empty", "", vec!["a b"], 0.0),
    ]
}

pub struct CiderCase {
    pub name: &'static str,
    pub corpus: Vec<(&'static str, Vec<&'static str>)>,
    pub per_instance: Vec<f64>,
}

pub fn cider_cases() -> Vec<CiderCase> {
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let m = (3.0f64 / 2.0).ln();
    let t = 3f64.ln();
    let c = |name, corpus, per_instance| CiderCase { name, corpus, per_instance };
    vec![
        c("identity_4grams", vec![("a man is sleeping", vec!["a man is sleeping"]), ("two dogs run fast", vec!["two dogs run fast"])], vec![1.0, 1.0]),
        c("disjoint", vec![("zz yy", vec!["a man is sleeping"]), ("two dogs run fast", vec!["two dogs run fast"])], vec![0.0, 1.0]),
        // only n = 1, 2 exist
        c("short_identity", vec![("a b", vec!["a b"]), ("c d", vec!["c d"])], vec![0.5, 0.5]),
        // "x" occurs in both reference sets: idf 0, zero candidate vector
        c("zero_idf", vec![("x", vec!["x a"]), ("x b", vec!["x b"])], vec![0.0, 0.5]),
        // unigram cosine 1/2; second: unigram 2/(√2·2), bigram 1/√3
        c(
            "partial",
            vec![("a b", vec!["a c"]), ("d e", vec!["d e f g"])],
            vec![0.5 / 4.0, (1.0 / s2 + 1.0 / s3) / 4.0],
        ),
        // counts: unigram (2,1)·(1,2)/5, bigram 1/2
        c("term_counts", vec![("a a b", vec!["a b b"]), ("c d", vec!["c d"])], vec![(0.8 + 0.5) / 4.0, 0.5]),
        // references averaged: 1 and 0 at n = 1, 2
        c("ref_mean", vec![("a b", vec!["a b", "c d"]), ("e f", vec!["e f"])], vec![0.25, 0.5]),
        // idf(a) = ln(3/2), idf(b) = ln 3
        c(
            "uneven_idf",
            vec![("a", vec!["a b"]), ("a c", vec!["a c"]), ("d e", vec!["d e"])],
            vec![m / (m * m + t * t).sqrt() / 4.0, 0.5, 0.5],
        ),
        // "z" unseen in references keeps idf ln 2
        c("unseen_ngram", vec![("a z", vec!["a"]), ("b c", vec!["b c"])], vec![(1.0 / s2) / 4.0, 0.5]),
        c("repeated", vec![("a a a a", vec!["a a a a"]), ("b c d e", vec!["b c d e"])], vec![1.0, 1.0]),
        // n=1: 3/4, n=2: 2/3, n=3: 1/2, n=4: 0
        c("graded", vec![("a b c d", vec!["a b c e"]), ("f g", vec!["f g"])], vec![(0.75 + 2.0 / 3.0 + 0.5) / 4.0, 0.5]),
    ]
}

pub struct DiceCase {
    pub premise: &'static str,
    pub reference: &'static str,
    pub expected: f64,
}

pub fn dice_cases() -> Vec<DiceCase> {
    let c = |premise, reference, expected| DiceCase { premise, reference, expected };
    vec![
        c("a dog runs", "a dog runs", 1.0),
        c("cat", "dog", 0.0),
        c("red ball game", "ball game field", 2.0 / 3.0),
        c("the a of", "is are", 0.0),
        c("dog , cat .", "dog cat", 1.0),
        c("dog dog dog cat", "dog", 2.0 / 3.0),
        c("man woman child dog", "man", 2.0 / 5.0),
        c("the", "dog", 0.0),
        c("A Dog runs.", "dog RUNS", 1.0),
        c("men playing soccer field", "people playing sport field", 0.5),
        c("the man is on the horse", "a man rides a horse", 0.8),
    ]
}

pub struct PearsonCase {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub expected: f64,
}

pub fn pearson_cases() -> Vec<PearsonCase> {
    let c = |xs: &[f64], ys: &[f64], expected| PearsonCase { xs: xs.to_vec(), ys: ys.to_vec(), expected };
    vec![
        c(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0], 1.0),
        c(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0], -1.0),
        // sxy = 1, sxx = syy = 2
        c(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0], 0.5),
        // sxy = 3, sxx = syy = 5
        c(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0], 0.6),
        c(&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 0.0, 1.0], 0.0),
        // sxy = 1, sxx = 2, syy = 2/3
        c(&[1.0, 2.0, 3.0], &[2.0, 2.0, 3.0], 3f64.sqrt() / 2.0),
        // sxy = 60, sxx = 10, syy = 374
        c(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 4.0, 9.0, 16.0, 25.0], 60.0 / 3740f64.sqrt()),
        c(&[10.0, 20.0, 30.0], &[1.0, 3.0, 2.0], 0.5),
        // sxy = 3/2, sxx = 5, syy = 3/4
        c(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 1.0, 2.0], 15f64.sqrt() / 5.0),
        c(&[-1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], 0.0),
        c(&[0.1, 0.2, 0.3, 0.4], &[0.4, 0.3, 0.2, 0.1], -1.0),
    ]
}
