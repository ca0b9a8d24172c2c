//! Group-respecting train/dev/test partitioning.
//!
//! Triples that share an image, or share premise text, end up in the same
//! group (connected components over both keys), and whole groups are assigned
//! to partitions. Test is carved first, then dev, and the rest is train.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::triples::Triple;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
            seed: 13,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.dev, self.test];
        if f.iter().any(|&x| !x.is_finite() || x <= 0.0) {
            return Err(Error::Config(format!("split fractions must be positive: {f:?}")));
        }
        let s: f64 = f.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {s}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Triple>,
    pub dev: Vec<Triple>,
    pub test: Vec<Triple>,
    /// Group counts per partition, (train, dev, test).
    pub group_counts: (usize, usize, usize),
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Indices of triples, grouped; each group is keyed by its smallest image_id
/// and groups are returned in key order.
pub fn group_triples(triples: &[Triple]) -> Vec<(String, Vec<usize>)> {
    let mut uf = UnionFind::new(triples.len());
    let mut by_image: HashMap<&str, usize> = HashMap::new();
    let mut by_premise: HashMap<&str, usize> = HashMap::new();
    for (i, t) in triples.iter().enumerate() {
        if let Some(&j) = by_image.get(t.image_id.as_str()) {
            uf.union(i, j);
        } else {
            by_image.insert(&t.image_id, i);
        }
        if let Some(&j) = by_premise.get(t.premise.as_str()) {
            uf.union(i, j);
        } else {
            by_premise.insert(&t.premise, i);
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..triples.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut keyed: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (_, members) in groups {
        let key = members
            .iter()
            .map(|&i| triples[i].image_id.as_str())
            .min()
            .unwrap_or_default()
            .to_string();
        keyed.insert(key, members);
    }
    keyed.into_iter().collect()
}

/// Take groups (in order) whose addition brings the partition size closer to
/// `target`; returns the taken positions.
fn fill(order: &[usize], sizes: &[usize], taken: &mut [bool], target: f64) -> Vec<usize> {
    let mut count = 0usize;
    let mut out = Vec::new();
    for &g in order {
        if taken[g] {
            continue;
        }
        let with = (count + sizes[g]) as f64;
        if (with - target).abs() < (count as f64 - target).abs() {
            taken[g] = true;
            count += sizes[g];
            out.push(g);
        }
    }
    out
}

pub fn group_and_split(triples: &[Triple], spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    if let Some(t) = triples.iter().find(|t| t.image_id.is_empty()) {
        return Err(Error::Data(format!("pair {} has no image_id", t.pair_id)));
    }
    let groups = group_triples(triples);
    let sizes: Vec<usize> = groups.iter().map(|(_, m)| m.len()).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let n = triples.len() as f64;
    let mut taken = vec![false; groups.len()];
    let test = fill(&order, &sizes, &mut taken, spec.test * n);
    let dev = fill(&order, &sizes, &mut taken, spec.dev * n);
    let train: Vec<usize> = order.iter().copied().filter(|&g| !taken[g]).collect();

    let collect = |gs: &[usize]| -> Vec<Triple> {
        let mut idx: Vec<usize> = gs.iter().flat_map(|&g| groups[g].1.iter().copied()).collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| triples[i].clone()).collect()
    };
    Ok(Splits {
        train: collect(&train),
        dev: collect(&dev),
        test: collect(&test),
        group_counts: (train.len(), dev.len(), test.len()),
    })
}
