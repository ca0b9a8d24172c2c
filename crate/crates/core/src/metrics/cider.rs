//! CIDEr: IDF-weighted n-gram cosine similarity, n = 1..4, without the ×10
//! scaling and without the CIDEr-D length penalty.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::EvalInstance;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const CIDER_MAX_N: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct CiderScores {
    pub corpus: f64,
    pub per_instance: Vec<f64>,
}

type Vector<'a> = BTreeMap<&'a [String], f64>;

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn weighted<'a>(tokens: &'a [String], n: usize, idf: &dyn Fn(&[String]) -> f64) -> Vector<'a> {
    ngram_counts(tokens, n)
        .into_iter()
        .map(|(g, c)| (g, c as f64 * idf(g)))
        .collect()
}

fn cosine(a: &Vector, b: &Vector) -> f64 {
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Document frequency of every n-gram over the instances' reference sets.
fn document_frequencies(instances: &[EvalInstance]) -> HashMap<&[String], usize> {
    let mut df: HashMap<&[String], usize> = HashMap::new();
    for inst in instances {
        let mut seen: HashSet<&[String]> = HashSet::new();
        for r in &inst.references {
            for n in 1..=CIDER_MAX_N {
                if r.len() >= n {
                    seen.extend(r.windows(n));
                }
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    df
}

pub fn cider(instances: &[EvalInstance]) -> Result<CiderScores> {
    cider_with(instances, Execution::default())
}

pub fn cider_with(instances: &[EvalInstance], exec: Execution) -> Result<CiderScores> {
    if instances.len() < 2 {
        return Err(Error::Contract(format!(
            "CIDEr needs at least 2 instances for IDF, got {}",
            instances.len()
        )));
    }
    if let Some(i) = instances.iter().find(|i| i.references.is_empty()) {
        return Err(Error::Contract(format!("instance {} has no references", i.pair_id)));
    }
    let df = document_frequencies(instances);
    let n_docs = instances.len() as f64;
    let idf = |g: &[String]| (n_docs / df.get(g).copied().unwrap_or(0).max(1) as f64).ln();

    let per_instance = par::map(exec, instances, |inst| {
        let mut total = 0.0;
        for n in 1..=CIDER_MAX_N {
            let cv = weighted(&inst.candidate, n, &idf);
            let s: f64 = inst
                .references
                .iter()
                .map(|r| cosine(&cv, &weighted(r, n, &idf)))
                .sum();
            total += s / inst.references.len() as f64;
        }
        total / CIDER_MAX_N as f64
    });
    let corpus = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
    Ok(CiderScores {
        corpus,
        per_instance,
    })
}
