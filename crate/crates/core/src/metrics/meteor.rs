//! METEOR restricted to exact unigram matches.

/// Node budget for the alignment search; past it the best alignment found so
/// far is used.
const SEARCH_BUDGET: usize = 200_000;

/// Matches and minimum chunk count of a maximum exact alignment.
pub fn align(candidate: &[String], reference: &[String]) -> (usize, usize) {
    let mut search = Search::new(candidate, reference);
    if search.m == 0 {
        return (0, 0);
    }
    search.run(0, None, 0);
    (search.m, search.best)
}

struct Search<'a> {
    cand: &'a [String],
    /// Reference positions per candidate position.
    options: Vec<Vec<usize>>,
    /// Matches still owed per candidate position's word class.
    need: Vec<usize>,
    /// Word class of each candidate position.
    class: Vec<usize>,
    /// Occurrences of each class at or after each candidate position.
    remaining: Vec<Vec<usize>>,
    used: Vec<bool>,
    m: usize,
    best: usize,
    nodes: usize,
}

impl<'a> Search<'a> {
    fn new(cand: &'a [String], reference: &'a [String]) -> Self {
        let mut words: Vec<&str> = Vec::new();
        let class: Vec<usize> = cand
            .iter()
            .map(|w| match words.iter().position(|x| *x == w) {
                Some(i) => i,
                None => {
                    words.push(w);
                    words.len() - 1
                }
            })
            .collect();
        let mut need = vec![0; words.len()];
        for (k, w) in words.iter().enumerate() {
            let cc = cand.iter().filter(|x| x == w).count();
            let rc = reference.iter().filter(|x| x == w).count();
            need[k] = cc.min(rc);
        }
        let m = need.iter().sum();
        let options = cand
            .iter()
            .map(|w| (0..reference.len()).filter(|&j| reference[j] == *w).collect())
            .collect();
        let mut remaining = vec![vec![0; words.len()]; cand.len() + 1];
        for i in (0..cand.len()).rev() {
            remaining[i] = remaining[i + 1].clone();
            remaining[i][class[i]] += 1;
        }
        Search {
            cand,
            options,
            need,
            class,
            remaining,
            used: vec![false; reference.len()],
            m,
            best: usize::MAX,
            nodes: 0,
        }
    }

    /// `last` is the (candidate, reference) position of the previous match.
    fn run(&mut self, i: usize, last: Option<(usize, usize)>, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best {
            return;
        }
        if i == self.cand.len() {
            self.best = chunks;
            return;
        }
        if self.nodes > SEARCH_BUDGET && self.best != usize::MAX {
            return;
        }
        let c = self.class[i];
        if self.need[c] > 0 {
            let mut opts: Vec<usize> = self.options[i].iter().copied().filter(|&j| !self.used[j]).collect();
            // try extending the current chunk first
            if let Some((li, lj)) = last {
                if li + 1 == i {
                    if let Some(p) = opts.iter().position(|&j| j == lj + 1) {
                        opts.swap(0, p);
                    }
                }
            }
            for j in opts {
                let continues = matches!(last, Some((li, lj)) if li + 1 == i && lj + 1 == j);
                self.used[j] = true;
                self.need[c] -= 1;
                self.run(i + 1, Some((i, j)), chunks + usize::from(!continues));
                self.need[c] += 1;
                self.used[j] = false;
            }
        }
        // leave unmatched only if later occurrences can still pay what is owed
        if self.remaining[i + 1][c] >= self.need[c] {
            self.run(i + 1, last, chunks);
        }
    }
}

fn score_single(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let (m, chunks) = align(candidate, reference);
    if m == 0 {
        return 0.0;
    }
    let m = m as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    f * (1.0 - penalty)
}

/// Best score over the references.
pub fn meteor_exact(candidate: &[String], references: &[Vec<String>]) -> f64 {
    references
        .iter()
        .map(|r| score_single(candidate, r))
        .fold(0.0, f64::max)
}
