//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/golden/mod.rs"]
mod golden;
#[path = "../../core/tests/gradcases/mod.rs"]
mod gradcases;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use entgen::analysis::{overlap_report, records_from_scores, DEFAULT_DICE_THRESHOLD};
use entgen::corpus::{
    build_vocab, encode_example, group_and_split, load_image_features, read_triples, EncodedExample, FeatureStore,
    SplitSpec, Triple, BOS, EOS, PAD,
};
use entgen::decode::{beam_generate, greedy_generate};
use entgen::evalharness::design;
use entgen::metrics::{bleu1, metric_report, perplexity, BleuMode, EvalInstance};
use entgen::models::{model_input, train, Model, ModelConfig, ModelInput, Schedule, Variant};
use entgen::numcore::AdamConfig;
use entgen::par::Execution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn gradient_suite() -> Verdict {
    let t = Instant::now();
    let (ops, mut failures) = gradcases::check_ops(20, 2024);
    let (models, f2) = gradcases::check_variants(3, 77);
    failures.extend(f2);
    let el = t.elapsed();
    let ok = failures.is_empty() && el < Duration::from_secs(60);
    (
        ok,
        format!(
            "{ops} op checks over 15 ops and {models} full-model checks at rel error < {:e}, {} failures, {} (limit 60 s){}",
            gradcases::TOL,
            failures.len(),
            secs(el),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn overfit_suite() -> Verdict {
    let t = Instant::now();
    let triples = read_triples(fs::read(fixture("overfit20.jsonl")).unwrap().as_slice()).unwrap();
    let feats = load_image_features(fs::File::open(fixture("overfit20.egft")).unwrap()).unwrap();
    let vocab = build_vocab(&triples, 1).unwrap();
    let data: Vec<EncodedExample> = triples.iter().map(|t| encode_example(t, &vocab)).collect();
    let schedule = Schedule {
        epochs: 300,
        batch_size: 5,
        adam: AdamConfig { lr: 5e-3, ..AdamConfig::default() },
        seed: 7,
        ..Schedule::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for variant in Variant::ALL {
        let config = ModelConfig {
            variant,
            embed_dim: 32,
            hidden_dim: 64,
            image_dim: feats.dim(),
            image_proj_dim: 32,
            vocab_size: vocab.len(),
            max_decode_len: 20,
        };
        let out = train::<f32>(&data, None, Some(&feats), config, &schedule).unwrap();
        let first = out.log.iter().find(|l| l.train_perplexity < 1.1).map(|l| l.epoch);
        let hits = data
            .iter()
            .filter(|ex| {
                let input = model_input(ex, Some(&feats), variant).unwrap();
                let src = out.model.encode(&input).unwrap();
                greedy_generate(&out.model, &src, 20).unwrap().tokens == ex.hypotheses[0][1..]
            })
            .count();
        ok &= first.is_some() && hits >= 18;
        let first = first.map_or("never".into(), |e| format!("epoch {e}"));
        parts.push(format!("{variant} ppl<1.1 at {first}, {hits}/20"));
    }
    let el = t.elapsed();
    ok &= el < Duration::from_secs(300);
    (ok, format!("{}; {} (limit 300 s)", parts.join(", "), secs(el)))
}

const COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "black", "white", "orange", "purple"];
const NOUNS: [&str; 10] = ["man", "woman", "dog", "child", "girl", "boy", "cat", "horse", "player", "worker"];
const VERBS: [&str; 6] = ["stands", "sits", "runs", "waits", "walks", "plays"];

/// 500 triples whose hypothesis names a color that only the image encodes.
fn grounding_corpus() -> (Vec<Triple>, FeatureStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut feats = FeatureStore::new(16);
    let triples = (0..500)
        .map(|i| {
            let class = rng.random_range(0..COLORS.len());
            let mut v: Vec<f32> = (0..16).map(|_| rng.random_range(-0.1..0.1)).collect();
            v[class] += 1.0;
            let id = format!("syn{i:03}");
            feats.insert(&id, &v).unwrap();
            let (a, b) = (NOUNS[rng.random_range(0..NOUNS.len())], NOUNS[rng.random_range(0..NOUNS.len())]);
            let verb = VERBS[rng.random_range(0..VERBS.len())];
            Triple {
                pair_id: format!("s{i:03}"),
                premise: format!("a {a} {verb} near the {b}"),
                hypotheses: vec![format!("the {} one is here", COLORS[class])],
                image_id: id,
            }
        })
        .collect();
    (triples, feats)
}

fn synthetic_grounding() -> Verdict {
    let t = Instant::now();
    let (triples, feats) = grounding_corpus();
    let (train_t, test_t) = triples.split_at(400);
    let vocab = build_vocab(train_t, 1).unwrap();
    let enc = |ts: &[Triple]| -> Vec<EncodedExample> { ts.iter().map(|t| encode_example(t, &vocab)).collect() };
    let (train_set, test_set) = (enc(train_t), enc(test_t));
    let schedule = Schedule {
        epochs: 30,
        batch_size: 16,
        adam: AdamConfig { lr: 5e-3, ..AdamConfig::default() },
        seed: 5,
        ..Schedule::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for variant in Variant::ALL {
        let config = ModelConfig {
            variant,
            embed_dim: 16,
            hidden_dim: 32,
            image_dim: 16,
            image_proj_dim: 16,
            vocab_size: vocab.len(),
            max_decode_len: 8,
        };
        let model = train::<f32>(&train_set, None, Some(&feats), config, &schedule).unwrap().model;
        // target is BOS the COLOR one is here EOS, so position 1 scores the color
        let nll: f64 = test_set
            .iter()
            .map(|ex| {
                let input = model_input(ex, Some(&feats), variant).unwrap();
                -model.target_log_probs(&input, &ex.hypotheses[0]).unwrap()[1]
            })
            .sum();
        let ppl = (nll / test_set.len() as f64).exp();
        ok &= match variant {
            Variant::Unimodal => ppl >= 6.0,
            _ => ppl <= 2.0,
        };
        parts.push(format!("{variant} {ppl:.3}"));
    }
    let el = t.elapsed();
    ok &= el < Duration::from_secs(600);
    (
        ok,
        format!(
            "color-position test perplexity {} (need unimodal >= 6.0, others <= 2.0); {} (limit 600 s)",
            parts.join(", "),
            secs(el)
        ),
    )
}

fn metric_oracles() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, (n, failures)) in [
        ("bleu1", golden::check_bleu()),
        ("meteor", golden::check_meteor()),
        ("cider", golden::check_cider()),
        ("dice", golden::check_dice()),
        ("pearson", golden::check_pearson()),
    ] {
        ok &= n >= 10 && failures.is_empty();
        parts.push(format!("{name} {}/{n}", n - failures.len()));
    }
    let mut worst: f64 = 0.0;
    for v in [5usize, 7, 10, 50, 1000] {
        let config = ModelConfig {
            variant: Variant::Unimodal,
            embed_dim: 2,
            hidden_dim: 3,
            image_dim: 1,
            image_proj_dim: 1,
            vocab_size: v,
            max_decode_len: 5,
        };
        let model = Model::<f32>::zeros(config).unwrap();
        let data: Vec<EncodedExample> = (0..4)
            .map(|i| EncodedExample {
                pair_id: format!("u{i}"),
                image_id: String::new(),
                premise: vec![BOS, 4, EOS],
                hypotheses: vec![vec![BOS, 4, EOS], vec![BOS, 4, 4, 4, EOS]],
            })
            .collect();
        let p = perplexity(&model, &data, None, 9).unwrap();
        worst = worst.max((p - v as f64).abs() / v as f64);
    }
    ok &= worst <= 1e-12;
    (
        ok,
        format!(
            "golden cases passing: {}; uniform predictor perplexity vs V: max rel error {worst:.1e} (tolerance 1e-12)",
            parts.join(", ")
        ),
    )
}

/// Exhaustive argmax over every EOS-terminated sequence of at most `max_len`
/// tokens (PAD and BOS are never emitted).
fn brute_force(model: &Model<f64>, src: &entgen::models::SourceRepresentation<f64>, max_len: usize) -> (Vec<usize>, f64) {
    fn go(
        model: &Model<f64>,
        src: &entgen::models::SourceRepresentation<f64>,
        state: &entgen::numcore::Tensor<f64>,
        prev: usize,
        prefix: &mut Vec<usize>,
        score: f64,
        left: usize,
        best: &mut (Vec<usize>, f64),
    ) {
        let (next, lp) = model.decoder_step(state, prev, src).unwrap();
        for tok in 0..lp.len() {
            if tok == PAD || tok == BOS {
                continue;
            }
            let s = score + lp[tok];
            prefix.push(tok);
            if tok == EOS {
                if s > best.1 {
                    *best = (prefix.clone(), s);
                }
            } else if left > 1 {
                go(model, src, &next, tok, prefix, s, left - 1, best);
            }
            prefix.pop();
        }
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(model, src, &model.decoder_initial_state(), BOS, &mut Vec::new(), 0.0, max_len, &mut best);
    best
}

fn beam_brute_force() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut mismatches = Vec::new();
    let mut widths = BTreeMap::new();
    for case in 0..100 {
        let vocab = 5;
        let max_len = rng.random_range(1..=4);
        let variant = Variant::ALL[rng.random_range(0..4)];
        let config = ModelConfig {
            variant,
            embed_dim: rng.random_range(1..=4),
            hidden_dim: rng.random_range(1..=4),
            image_dim: 3,
            image_proj_dim: 2,
            vocab_size: vocab,
            max_decode_len: max_len,
        };
        let model = Model::<f64>::init(config, 1.5, rng.random()).unwrap();
        let premise = vec![BOS, rng.random_range(3..vocab), EOS];
        let image: Vec<f32> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let input = ModelInput { pair_id: "b", premise: &premise, image: Some(&image) };
        let src = model.encode(&input).unwrap();
        let width = vocab.pow(max_len as u32);
        *widths.entry(width).or_insert(0) += 1;
        let beam = beam_generate(&model, &src, width, max_len).unwrap();
        let (tokens, score) = brute_force(&model, &src, max_len);
        if beam.tokens != tokens || (beam.logprob - score).abs() > 1e-9 {
            mismatches.push(format!("case {case}: beam {:?} {:.6} vs {:?} {:.6}", beam.tokens, beam.logprob, tokens, score));
        }
    }
    (
        mismatches.is_empty(),
        format!(
            "100 random models (vocab 5, max_len 1..=4, width = vocab^max_len, widths {:?}), {} mismatches{}",
            widths,
            mismatches.len(),
            mismatches.first().map(|m| format!("; first: {m}")).unwrap_or_default()
        ),
    )
}

/// Candidates with three references each.
const MULTI_REF: &[(&str, [&str; 3])] = &[
    ("a man is playing a guitar", ["a man plays music", "a person is playing an instrument", "the guy has a guitar"]),
    ("two dogs run in the grass", ["dogs are outside", "two animals are running", "the dogs play on a lawn"]),
    ("a woman is cooking food", ["a person cooks", "a woman is in a kitchen", "someone prepares a meal"]),
    ("children are playing soccer", ["kids play a game", "the children are outdoors", "some kids kick a ball"]),
    ("a boy jumps into a pool", ["a child is swimming", "the boy is wet", "a kid is in the water"]),
    ("people are waiting for a bus", ["a group stands outside", "people wait", "some people are at a bus stop"]),
    ("a cyclist rides down a hill", ["a person is on a bike", "someone rides a bicycle", "a cyclist is outside"]),
    ("a girl is reading a book", ["a girl reads", "a child holds a book", "someone is reading"]),
];

fn multi_vs_single_ref() -> Verdict {
    let cands: Vec<Vec<String>> = MULTI_REF.iter().map(|(c, _)| entgen::corpus::tokenize(c)).collect();
    let refs: Vec<Vec<Vec<String>>> = MULTI_REF
        .iter()
        .map(|(_, rs)| rs.iter().map(|r| entgen::corpus::tokenize(r)).collect())
        .collect();
    let multi = bleu1(&cands, &refs, BleuMode::MultiRef).unwrap();
    let single = bleu1(&cands, &refs, BleuMode::SingleRefMean).unwrap();
    (
        multi >= single,
        format!("{} premises x 3 references: multi_ref {multi:.4} >= single_ref_mean {single:.4}", MULTI_REF.len()),
    )
}

const POOL: [&str; 40] = [
    "man", "woman", "dog", "child", "street", "park", "ball", "car", "shirt", "hat", "water", "beach", "tree",
    "bike", "table", "food", "music", "crowd", "field", "snow", "red", "blue", "small", "old", "young", "tall",
    "runs", "sits", "holds", "wears", "plays", "walks", "looks", "rides", "throws", "eats", "climbs", "jumps",
    "smiles", "waits",
];

/// Copy baseline: the generation is the premise itself. References keep a
/// per-instance fraction of the premise's content words and replace the rest.
fn copy_baseline() -> (Vec<EvalInstance>, Vec<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut insts = Vec::new();
    let mut premises = Vec::new();
    for i in 0..300 {
        let words: Vec<&str> = POOL.choose_multiple(&mut rng, 7).copied().collect();
        let premise = format!("a {} {} the {} {} in a {} {} {}", words[0], words[1], words[2], words[3], words[4], words[5], words[6]);
        let keep: f64 = rng.random_range(0.0..0.7);
        let refs: Vec<String> = (0..3)
            .map(|_| {
                let len = rng.random_range(4..=7);
                let kept: Vec<&str> = words[..len]
                    .iter()
                    .map(|w| if rng.random_bool(keep) { *w } else { POOL[rng.random_range(0..POOL.len())] })
                    .collect();
                format!("the {}", kept.join(" "))
            })
            .collect();
        let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
        insts.push(EvalInstance::from_text(&format!("c{i:03}"), &premise, &refs));
        premises.push(entgen::corpus::tokenize(&premise));
    }
    (insts, premises)
}

fn overlap_analysis() -> Verdict {
    let (insts, premises) = copy_baseline();
    let report = metric_report(&insts, Some(&premises), BleuMode::MultiRef, None, Execution::Parallel).unwrap();
    let th = DEFAULT_DICE_THRESHOLD;
    let records = records_from_scores(&report.per_instance, th).unwrap();
    let rep = overlap_report(&records, th).unwrap();
    let (lo, hi) = (&rep.low, &rep.high);
    let means = lo.mean_cider.zip(hi.mean_cider);
    let rs = lo.pearson_r.zip(hi.pearson_r);
    let ok = means.is_some_and(|(l, h)| h > l) && rs.is_some_and(|(l, h)| h > l);
    let fmt = |x: Option<f64>| x.map_or("NA".into(), |v| format!("{v:.4}"));
    (
        ok,
        format!(
            "copy baseline, {} instances, threshold {th}: low n={} mean CIDEr {} r {}; high n={} mean CIDEr {} r {}",
            records.len(),
            lo.count,
            fmt(lo.mean_cider),
            fmt(lo.pearson_r),
            hi.count,
            fmt(hi.mean_cider),
            fmt(hi.pearson_r)
        ),
    )
}

fn split_integrity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut leaks = 0;
    let mut lost = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let (np, ni) = (rng.random_range(1..60), rng.random_range(1..80));
        let triples: Vec<Triple> = (0..n)
            .map(|i| Triple {
                pair_id: format!("t{i}"),
                premise: format!("premise {}", rng.random_range(0..np)),
                hypotheses: vec![format!("h{i}")],
                image_id: format!("img{}", rng.random_range(0..ni)),
            })
            .collect();
        let spec = SplitSpec { seed: rng.random(), ..SplitSpec::default() };
        let s = group_and_split(&triples, &spec).unwrap();
        if s.train.len() + s.dev.len() + s.test.len() != n {
            lost += 1;
        }
        let parts = [&s.train, &s.dev, &s.test];
        for a in 0..3 {
            let prem: HashSet<&str> = parts[a].iter().map(|t| t.premise.as_str()).collect();
            let imgs: HashSet<&str> = parts[a].iter().map(|t| t.image_id.as_str()).collect();
            for b in parts.iter().skip(a + 1) {
                leaks += b
                    .iter()
                    .filter(|t| prem.contains(t.premise.as_str()) || imgs.contains(t.image_id.as_str()))
                    .count();
            }
        }
    }
    (
        leaks == 0 && lost == 0,
        format!("1000 random corpora: {leaks} cross-partition premise/image overlaps, {lost} runs losing triples"),
    )
}

fn latin_square() -> Verdict {
    let mut designs = 0;
    let mut bad = Vec::new();
    for c in 1..=3usize {
        let conds: Vec<String> = (0..c).map(|k| format!("c{k}")).collect();
        for items in (c..=90).step_by(c) {
            let names: Vec<String> = (0..items).map(|i| format!("i{i}")).collect();
            for participants in (c..=30).step_by(c) {
                designs += 1;
                let d = design(&names, &conds, participants, (items * 31 + participants) as u64).unwrap();
                let mut cells: BTreeMap<(&str, &str), usize> = BTreeMap::new();
                let mut each_once = true;
                for trials in &d.assignment {
                    let seen: HashSet<&str> = trials.iter().map(|t| t.item.as_str()).collect();
                    each_once &= trials.len() == items && seen.len() == items;
                    for t in trials {
                        *cells.entry((t.item.as_str(), t.condition.as_str())).or_default() += 1;
                    }
                }
                let equal = cells.len() == items * c && cells.values().all(|&k| k == participants / c);
                if !(each_once && equal) {
                    bad.push(format!("({items}, {c}, {participants})"));
                }
            }
        }
    }
    (
        bad.is_empty(),
        format!(
            "{designs} divisible (items, conditions, participants) up to (90, 3, 30): {} unbalanced{}",
            bad.len(),
            bad.first().map(|b| format!("; first: {b}")).unwrap_or_default()
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_entgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pipeline(dir: &Path, extra: &[&str]) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let triples = fixture("overfit20.jsonl");
    let feats = fixture("overfit20.egft");
    let (t, f) = (triples.to_str().unwrap(), feats.to_str().unwrap());
    fs::write(
        dir.join("cfg.toml"),
        "[model]\nembed_dim = 16\nhidden_dim = 24\nimage_proj_dim = 8\n[train]\nlr = 5e-3\nbatch_size = 4\n",
    )
    .map_err(|e| e.to_string())?;
    let cfg = ["--config", "cfg.toml"];
    let steps: [Vec<&str>; 4] = [
        vec!["prepare", "--triples", t, "--features", f, "--out", "out/data", "--min-freq", "1", "--seed", "21"],
        vec!["train", "--data", "out/data", "--features", f, "--out", "out/run", "--variant", "merge", "--seed", "4", "--epochs", "60"],
        vec!["generate", "--run", "out/run", "--data", "out/data", "--features", f, "--beam", "3"],
        vec!["evaluate", "--run", "out/run", "--data", "out/data", "--features", f],
    ];
    for step in steps {
        run_cli(dir, &[&cfg[..], extra, &step].concat())?;
    }
    Ok(files_under(&dir.join("out")))
}

fn determinism() -> Verdict {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let runs: Result<Vec<_>, String> = dirs
        .iter()
        .zip([&[][..], &[][..], &["--sequential"][..]])
        .map(|(d, extra)| pipeline(d.path(), extra))
        .collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return (false, format!("pipeline failed: {e}")),
    };
    let diff = |a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>| -> Vec<String> {
        let names: HashSet<&PathBuf> = a.keys().chain(b.keys()).collect();
        let mut d: Vec<String> = names
            .into_iter()
            .filter(|k| a.get(*k) != b.get(*k))
            .map(|k| k.display().to_string())
            .collect();
        d.sort();
        d
    };
    let same_seed = diff(&runs[0], &runs[1]);
    let sequential = diff(&runs[0], &runs[2]);
    (
        same_seed.is_empty() && sequential.is_empty() && !runs[0].is_empty(),
        format!(
            "prepare -> train -> generate -> evaluate twice: {} files, differing {:?}; sequential rerun differing {:?}",
            runs[0].len(),
            same_seed,
            sequential
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("gradient suite", gradient_suite),
        ("overfit suite", overfit_suite),
        ("synthetic grounding ablation", synthetic_grounding),
        ("metric oracles", metric_oracles),
        ("beam/brute-force equivalence", beam_brute_force),
        ("multi- vs single-reference BLEU", multi_vs_single_ref),
        ("overlap analysis", overlap_analysis),
        ("split integrity", split_integrity),
        ("latin-square balance", latin_square),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (ok, detail) = check();
        failed += usize::from(!ok);
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
