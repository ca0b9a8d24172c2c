//! Latin-square human evaluation design and response tallies.
//!
//! Items are shuffled into one block per condition. Participant `p` belongs to
//! group `p mod C` and sees block `b` under condition `(b + g) mod C`, so every
//! participant judges every item once and each condition covers `items / C` of
//! them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONDITIONS: [&str; 3] = ["text_only", "image_only", "text_image"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub item: String,
    pub condition: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalDesign {
    pub items: Vec<String>,
    pub conditions: Vec<String>,
    /// Item blocks in shuffled order; block `b` holds its presentation order.
    pub blocks: Vec<Vec<String>>,
    /// Per participant, trials in presentation order.
    pub assignment: Vec<Vec<Trial>>,
}

impl EvalDesign {
    pub fn groups(&self) -> usize {
        self.conditions.len()
    }

    pub fn participants(&self) -> usize {
        self.assignment.len()
    }

    pub fn group_of(&self, participant: usize) -> usize {
        participant % self.groups()
    }

    /// Condition under which `participant` sees `item`.
    pub fn condition_for(&self, participant: usize, item: &str) -> Option<&str> {
        self.assignment
            .get(participant)?
            .iter()
            .find(|t| t.item == item)
            .map(|t| t.condition.as_str())
    }
}

fn check_distinct(what: &str, xs: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for x in xs {
        if !seen.insert(x) {
            return Err(Error::Design(format!("duplicate {what} {x:?}")));
        }
    }
    Ok(())
}

pub fn design(items: &[String], conditions: &[String], participants: usize, seed: u64) -> Result<EvalDesign> {
    let c = conditions.len();
    if c == 0 || items.is_empty() || participants == 0 {
        return Err(Error::Design("items, conditions and participants must be non-empty".into()));
    }
    check_distinct("item", items)?;
    check_distinct("condition", conditions)?;
    if !items.len().is_multiple_of(c) {
        return Err(Error::Design(format!(
            "{} items cannot be split evenly over {c} conditions",
            items.len()
        )));
    }
    if !participants.is_multiple_of(c) {
        return Err(Error::Design(format!(
            "{participants} participants cannot be split evenly over {c} groups"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = items.to_vec();
    order.shuffle(&mut rng);
    let size = items.len() / c;
    let blocks: Vec<Vec<String>> = order.chunks(size).map(<[String]>::to_vec).collect();

    let assignment = (0..participants)
        .map(|p| {
            let g = p % c;
            // present blocks grouped by condition, in condition order
            let mut trials = Vec::with_capacity(items.len());
            for (k, cond) in conditions.iter().enumerate() {
                let b = (k + c - g) % c;
                trials.extend(blocks[b].iter().map(|item| Trial {
                    item: item.clone(),
                    condition: cond.clone(),
                }));
            }
            trials
        })
        .collect();
    Ok(EvalDesign {
        items: items.to_vec(),
        conditions: conditions.to_vec(),
        blocks,
        assignment,
    })
}

/// Design export: `participant group position item condition`.
pub fn write_design<W: Write>(mut w: W, header: &[String], d: &EvalDesign) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# fields: participant\tgroup\tposition\titem\tcondition")?;
    for (p, trials) in d.assignment.iter().enumerate() {
        for (pos, t) in trials.iter().enumerate() {
            writeln!(w, "{p}\t{}\t{pos}\t{}\t{}", d.group_of(p), t.item, t.condition)?;
        }
    }
    Ok(())
}

/// Read a design export back. Conditions and blocks are recovered from
/// participant 0, who sees block `k` under condition `k`; `items` comes back
/// in that participant's presentation order.
pub fn read_design<R: BufRead>(r: R) -> Result<EvalDesign> {
    let mut assignment: Vec<Vec<(usize, Trial)>> = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Data(format!("design row {}: {what}", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        let p: usize = f[0].parse().map_err(|_| bad("bad participant"))?;
        let pos: usize = f[2].parse().map_err(|_| bad("bad position"))?;
        if assignment.len() <= p {
            assignment.resize_with(p + 1, Vec::new);
        }
        assignment[p].push((pos, Trial { item: f[3].to_string(), condition: f[4].to_string() }));
    }
    if assignment.is_empty() || assignment.iter().any(Vec::is_empty) {
        return Err(Error::Data("design file has no rows for some participant".into()));
    }
    let assignment: Vec<Vec<Trial>> = assignment
        .into_iter()
        .map(|mut ts| {
            ts.sort_by_key(|t| t.0);
            ts.into_iter().map(|t| t.1).collect()
        })
        .collect();
    let mut conditions: Vec<String> = Vec::new();
    let mut blocks: Vec<Vec<String>> = Vec::new();
    for t in &assignment[0] {
        if conditions.last() != Some(&t.condition) {
            conditions.push(t.condition.clone());
            blocks.push(Vec::new());
        }
        blocks.last_mut().unwrap().push(t.item.clone());
    }
    Ok(EvalDesign {
        items: blocks.concat(),
        conditions,
        blocks,
        assignment,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Totally,
    Partly,
    NotClear,
    NotAtAll,
}

impl Response {
    pub const ALL: [Response; 4] = [
        Response::Totally,
        Response::Partly,
        Response::NotClear,
        Response::NotAtAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Response::Totally => "totally",
            Response::Partly => "partly",
            Response::NotClear => "not_clear",
            Response::NotAtAll => "not_at_all",
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Response {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Response::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown response category {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub participant: usize,
    pub item: String,
    pub condition: String,
    pub response: Response,
}

/// Response import: `participant item condition response`, tab-separated.
pub fn read_responses<R: BufRead>(r: R) -> Result<Vec<ResponseRow>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim_end_matches(['\r', '\n']);
        if t.trim().is_empty() || t.starts_with('#') {
            continue;
        }
        let row = n + 1;
        let f: Vec<&str> = t.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::Validation(format!(
                "responses row {row}: expected 4 tab-separated fields, got {}",
                f.len()
            )));
        }
        let participant = f[0]
            .parse()
            .map_err(|_| Error::Validation(format!("responses row {row}: bad participant {:?}", f[0])))?;
        let response = f[3]
            .parse()
            .map_err(|e| Error::Validation(format!("responses row {row}: {e}")))?;
        rows.push(ResponseRow {
            participant,
            item: f[1].to_string(),
            condition: f[2].to_string(),
            response,
        });
    }
    Ok(rows)
}

pub fn write_responses<W: Write>(mut w: W, header: &[String], rows: &[ResponseRow]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# fields: participant\titem\tcondition\tresponse")?;
    for r in rows {
        writeln!(w, "{}\t{}\t{}\t{}", r.participant, r.item, r.condition, r.response)?;
    }
    Ok(())
}

/// Check uniqueness of `(participant, item)` and agreement with `design`.
pub fn validate_responses(design: &EvalDesign, rows: &[ResponseRow]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, r) in rows.iter().enumerate() {
        if !seen.insert((r.participant, r.item.as_str())) {
            return Err(Error::Validation(format!(
                "response {}: participant {} judged item {} twice",
                i + 1,
                r.participant,
                r.item
            )));
        }
        match design.condition_for(r.participant, &r.item) {
            None => {
                return Err(Error::Validation(format!(
                    "response {}: participant {} / item {} not in the design",
                    i + 1,
                    r.participant,
                    r.item
                )))
            }
            Some(c) if c != r.condition => {
                return Err(Error::Validation(format!(
                    "response {}: item {} was assigned condition {c}, not {}",
                    i + 1,
                    r.item,
                    r.condition
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionTally {
    pub condition: String,
    pub total: usize,
    /// Counts in `Response::ALL` order.
    pub counts: [usize; 4],
    pub proportions: [f64; 4],
    pub totally: usize,
    pub rest: usize,
    pub totally_proportion: f64,
}

/// Per-condition category proportions and the totally/rest recode, sorted by
/// condition name.
pub fn tally(rows: &[ResponseRow]) -> Vec<ConditionTally> {
    let mut counts: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for r in rows {
        counts.entry(&r.condition).or_default()[r.response as usize] += 1;
    }
    counts
        .into_iter()
        .map(|(cond, c)| {
            let total: usize = c.iter().sum();
            let n = total as f64;
            ConditionTally {
                condition: cond.to_string(),
                total,
                counts: c,
                proportions: c.map(|k| k as f64 / n),
                totally: c[0],
                rest: total - c[0],
                totally_proportion: c[0] as f64 / n,
            }
        })
        .collect()
}

pub fn write_tally<W: Write>(mut w: W, header: &[String], t: &[ConditionTally]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    write!(w, "condition\ttotal")?;
    for r in Response::ALL {
        write!(w, "\t{r}")?;
    }
    writeln!(w, "\ttotally_count\trest_count\ttotally_proportion")?;
    for c in t {
        write!(w, "{}\t{}", c.condition, c.total)?;
        for p in c.proportions {
            write!(w, "\t{p:.6}")?;
        }
        writeln!(w, "\t{}\t{}\t{:.6}", c.totally, c.rest, c.totally_proportion)?;
    }
    Ok(())
}
