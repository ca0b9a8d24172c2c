use std::collections::HashSet;

use crate::corpus::is_punctuation_token;
use crate::error::{Error, Result};

/// Identifier written into reports next to Dice values.
pub const STOPWORDS_VERSION: &str = "en-127-v1";

/// Frozen English stopword list (the classic 127-word NLTK set).
pub const STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
    "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
    "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
    "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
    "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can",
    "will", "just", "don", "should", "now",
];

pub fn stopword_set() -> HashSet<&'static str> {
    STOPWORDS.iter().copied().collect()
}

/// Word types left after dropping stopwords and punctuation.
pub fn content_set<'a>(tokens: &'a [String], stopwords: &HashSet<&str>) -> HashSet<&'a str> {
    tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !stopwords.contains(t) && !is_punctuation_token(t))
        .collect()
}

/// `2|P ∩ Q| / (|P| + |Q|)` over content-word sets; 0 when both are empty.
pub fn dice(premise: &[String], reference: &[String], stopwords: &HashSet<&str>) -> f64 {
    let p = content_set(premise, stopwords);
    let q = content_set(reference, stopwords);
    let denom = p.len() + q.len();
    if denom == 0 {
        return 0.0;
    }
    2.0 * p.intersection(&q).count() as f64 / denom as f64
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::dim("pearson", &[xs.len()], &[ys.len()]));
    }
    if xs.len() < 3 {
        return Err(Error::Contract(format!(
            "pearson needs at least 3 pairs, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
