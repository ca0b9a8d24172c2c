use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use entgen::analysis::{overlap_report, records_from_scores, write_plot_data, write_report};
use entgen::corpus::{
    build_vocab, encode_example, group_and_split, merge_references, read_triples, tokenize, write_triples,
    EncodedExample, FeatureStore, SplitSpec, Triple, Vocabulary,
};
use entgen::decode::{generate_all, read_generations, write_generations, GenerationRecord};
use entgen::evalharness::{read_design, read_responses, tally as tally_rows, validate_responses, write_design, write_tally};
use entgen::metrics::{metric_report, perplexity_with_seed, BleuMode, EvalInstance, MetricReport, STOPWORDS_VERSION};
use entgen::models::{check_features, train as train_model, Model, ModelConfig, Schedule, Variant};
use entgen::numcore::{parse_checkpoint, write_checkpoint, AdamConfig};
use entgen::par::Execution;
use entgen::{Error, Result};
use serde_json::json;

use crate::settings::{sha256_hex, Settings, TOOL};

pub const GENERATIONS: &str = "generations.jsonl";
const VOCAB: &str = "vocab.tsv";
const MANIFEST: &str = "manifest.json";
const CHECKPOINT: &str = "model.egck";
const RUN_META: &str = "run.json";

/// Read a prerequisite, turning "not found" into an error that says which
/// artifact is missing and how to produce it.
fn read_artifact(path: &Path, what: &str, hint: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Data(format!("missing {what} {} ({hint})", path.display())),
        _ => Error::Data(format!("cannot read {what} {}: {e}", path.display())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Invariant(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn header_lines(w: &mut impl Write, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

fn load_features(path: Option<&Path>) -> Result<Option<(FeatureStore, String)>> {
    let Some(path) = path else { return Ok(None) };
    let bytes = read_artifact(path, "image feature file", "pass the file given to prepare with --features")?;
    Ok(Some((FeatureStore::parse(&bytes)?, sha256_hex(&bytes))))
}

fn load_split(data: &Path, split: &str) -> Result<(Vec<Triple>, String)> {
    if !["train", "dev", "test"].contains(&split) {
        return Err(Error::Config(format!("unknown split {split:?} (expected train, dev or test)")));
    }
    let path = data.join(format!("{split}.jsonl"));
    let bytes = read_artifact(&path, &format!("{split} split"), "run `entgen prepare` first")?;
    Ok((read_triples(bytes.as_slice())?, sha256_hex(&bytes)))
}

fn load_vocab(data: &Path) -> Result<(Vocabulary, String)> {
    let path = data.join(VOCAB);
    let bytes = read_artifact(&path, "vocabulary", "run `entgen prepare` first")?;
    Ok((Vocabulary::read(bytes.as_slice())?, sha256_hex(&bytes)))
}

fn require_features(variant: Variant, features: &Option<(FeatureStore, String)>) -> Result<Option<&FeatureStore>> {
    match features {
        Some((f, _)) => Ok(Some(f)),
        None if variant.uses_image() => Err(Error::Config(format!(
            "the {variant} variant needs image features: pass --features"
        ))),
        None => Ok(None),
    }
}

fn load_model(run: &Path) -> Result<Model<f32>> {
    let hint = "run `entgen train` first";
    let meta = read_artifact(&run.join(RUN_META), "run metadata", hint)?;
    let meta: serde_json::Value =
        serde_json::from_slice(&meta).map_err(|e| Error::Data(format!("{}: {e}", run.join(RUN_META).display())))?;
    let config: ModelConfig = serde_json::from_value(meta["model"].clone())
        .map_err(|e| Error::Data(format!("{}: bad model section: {e}", run.join(RUN_META).display())))?;
    let params = parse_checkpoint(&read_artifact(&run.join(CHECKPOINT), "checkpoint", hint)?)?;
    Model::from_params(config, &params)
}

fn run_name(run: &Path) -> String {
    run.file_name().map_or_else(|| run.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn prepare(s: &Settings, triples: &Path, features: Option<&Path>, out: &Path) -> Result<()> {
    let spec = SplitSpec {
        train: s.data.train_fraction,
        dev: s.data.dev_fraction,
        test: s.data.test_fraction,
        seed: s.data.split_seed,
    };
    spec.validate()?;
    let raw = read_artifact(triples, "triples file", "check the --triples path")?;
    let mut all = read_triples(raw.as_slice())?;
    let mut inputs = BTreeMap::new();
    inputs.insert("triples", sha256_hex(&raw));
    if let Some((store, hash)) = load_features(features)? {
        let missing: BTreeSet<&str> = all
            .iter()
            .map(|t| t.image_id.as_str())
            .filter(|id| !store.contains(id))
            .collect();
        if !missing.is_empty() {
            let list: Vec<&str> = missing.into_iter().collect();
            return Err(Error::Data(format!(
                "{} image id(s) have no features: {}",
                list.len(),
                list.join(", ")
            )));
        }
        inputs.insert("features", hash);
    }
    let input_records = all.len();
    if s.data.merge_references {
        all = merge_references(&all);
    }
    let splits = group_and_split(&all, &spec)?;
    let vocab = build_vocab(&splits.train, s.data.min_freq)?;

    fs::create_dir_all(out)?;
    let header = s.header();
    let mut files = BTreeMap::new();
    for (name, part) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let mut buf = Vec::new();
        header_lines(&mut buf, &header)?;
        write_triples(&mut buf, None, part)?;
        let file = format!("{name}.jsonl");
        files.insert(file.clone(), sha256_hex(&buf));
        fs::write(out.join(file), buf)?;
    }
    let mut buf = Vec::new();
    vocab.write(&mut buf, &header.join("; "))?;
    files.insert(VOCAB.to_string(), sha256_hex(&buf));
    fs::write(out.join(VOCAB), buf)?;

    let (g_train, g_dev, g_test) = splits.group_counts;
    let manifest = json!({
        "tool": TOOL,
        "config_hash": format!("sha256:{}", s.hash()),
        "config": s,
        "inputs": inputs,
        "counts": {
            "input_records": input_records,
            "reference_groups": all.len(),
            "train": { "triples": splits.train.len(), "groups": g_train },
            "dev": { "triples": splits.dev.len(), "groups": g_dev },
            "test": { "triples": splits.test.len(), "groups": g_test },
            "vocab_size": vocab.len(),
        },
        "files": files,
    });
    write_json(&out.join(MANIFEST), &manifest)?;
    println!(
        "prepared {} groups: train {} / dev {} / test {} triples, vocabulary {}",
        g_train + g_dev + g_test,
        splits.train.len(),
        splits.dev.len(),
        splits.test.len(),
        vocab.len()
    );
    Ok(())
}

pub fn train(s: &Settings, data: &Path, features: Option<&Path>, out: &Path, exec: Execution) -> Result<()> {
    let (vocab, vocab_hash) = load_vocab(data)?;
    let (train_t, train_hash) = load_split(data, "train")?;
    let (dev_t, dev_hash) = load_split(data, "dev")?;
    let feats = load_features(features)?;
    let store = require_features(s.model.variant, &feats)?;
    let config = ModelConfig {
        variant: s.model.variant,
        embed_dim: s.model.embed_dim,
        hidden_dim: s.model.hidden_dim,
        image_dim: feats.as_ref().map_or(0, |f| f.0.dim()),
        image_proj_dim: s.model.image_proj_dim,
        vocab_size: vocab.len(),
        max_decode_len: s.model.max_decode_len,
    };
    config.validate()?;
    let encode = |ts: &[Triple]| -> Vec<EncodedExample> { ts.iter().map(|t| encode_example(t, &vocab)).collect() };
    let (train_set, dev_set) = (encode(&train_t), encode(&dev_t));
    let schedule = Schedule {
        epochs: s.train.epochs,
        batch_size: s.train.batch_size,
        adam: AdamConfig { lr: s.train.lr, ..AdamConfig::default() },
        seed: s.train.seed,
        init_scale: s.train.init_scale,
        execution: exec,
    };
    let dev = (s.train.select_best_dev && !dev_set.is_empty()).then_some(dev_set.as_slice());
    let outcome = train_model::<f32>(&train_set, dev, store, config, &schedule)?;
    for l in &outcome.log {
        match l.dev_perplexity {
            Some(d) => eprintln!("epoch {:>3}  train ppl {:.4}  dev ppl {:.4}", l.epoch, l.train_perplexity, d),
            None => eprintln!("epoch {:>3}  train ppl {:.4}", l.epoch, l.train_perplexity),
        }
    }

    fs::create_dir_all(out)?;
    let mut ckpt = Vec::new();
    write_checkpoint(outcome.model.params(), &mut ckpt)?;
    fs::write(out.join(CHECKPOINT), &ckpt)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("vocab", vocab_hash);
    inputs.insert("train", train_hash);
    inputs.insert("dev", dev_hash);
    if let Some((_, h)) = &feats {
        inputs.insert("features", h.clone());
    }
    let meta = json!({
        "tool": TOOL,
        "config_hash": format!("sha256:{}", s.hash()),
        "config": s,
        "model": config,
        "schedule": schedule,
        "inputs": inputs,
        "best_epoch": outcome.best_epoch,
        "log": outcome.log,
        "checkpoint_sha256": sha256_hex(&ckpt),
    });
    write_json(&out.join(RUN_META), &meta)?;
    println!("trained {} for {} epochs, kept epoch {}", config.variant, schedule.epochs, outcome.best_epoch);
    Ok(())
}

pub fn generate(
    s: &Settings,
    run: &Path,
    data: &Path,
    features: Option<&Path>,
    split: &str,
    out: &Path,
    exec: Execution,
) -> Result<()> {
    let model = load_model(run)?;
    let (vocab, _) = load_vocab(data)?;
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Data(format!(
            "vocabulary in {} has {} entries but the model expects {}",
            data.display(),
            vocab.len(),
            model.config().vocab_size
        )));
    }
    let (triples, _) = load_split(data, split)?;
    let feats = load_features(features)?;
    let store = require_features(model.config().variant, &feats)?;
    let examples: Vec<EncodedExample> = triples.iter().map(|t| encode_example(t, &vocab)).collect();
    let results = generate_all(&model, &examples, store, s.decode.strategy(), s.decode.max_len, exec)?;
    let records: Vec<GenerationRecord> = examples
        .iter()
        .zip(&results)
        .map(|(ex, r)| GenerationRecord::new(&ex.pair_id, r, &vocab))
        .collect();
    let mut header = s.header();
    header.push(format!("split={split} strategy={:?} max_len={}", s.decode.strategy(), s.decode.max_len));
    let mut w = create(out)?;
    write_generations(&mut w, &header, &records)?;
    w.flush()?;
    println!("wrote {} generations to {}", records.len(), out.display());
    Ok(())
}

/// Aligned evaluation instances and tokenized premises for `split`.
fn instances(run: &Path, gens: &[GenerationRecord], triples: &[Triple]) -> Result<(Vec<EvalInstance>, Vec<Vec<String>>)> {
    let by_id: HashMap<&str, &GenerationRecord> = gens.iter().map(|g| (g.pair_id.as_str(), g)).collect();
    let mut insts = Vec::with_capacity(triples.len());
    let mut premises = Vec::with_capacity(triples.len());
    for t in triples {
        let g = by_id.get(t.pair_id.as_str()).ok_or_else(|| {
            Error::Data(format!(
                "{} has no generation for pair {} (regenerate for this split)",
                run.join(GENERATIONS).display(),
                t.pair_id
            ))
        })?;
        let refs: Vec<&str> = t.hypotheses.iter().map(String::as_str).collect();
        insts.push(EvalInstance::from_text(&t.pair_id, &g.text, &refs));
        premises.push(tokenize(&t.premise));
    }
    Ok((insts, premises))
}

fn load_generations(run: &Path) -> Result<Vec<GenerationRecord>> {
    let path = run.join(GENERATIONS);
    let bytes = read_artifact(&path, "generations", "run `entgen generate` first")?;
    read_generations(BufReader::new(bytes.as_slice()))
}

fn scores(
    s: &Settings,
    run: &Path,
    triples: &[Triple],
    perplexity: Option<f64>,
    exec: Execution,
) -> Result<MetricReport> {
    let gens = load_generations(run)?;
    let (insts, premises) = instances(run, &gens, triples)?;
    if insts.is_empty() {
        return Err(Error::Data("nothing to evaluate: the split is empty".into()));
    }
    let mode = if s.eval.single_ref {
        BleuMode::SingleRefMean
    } else {
        BleuMode::MultiRef
    };
    metric_report(&insts, Some(&premises), mode, perplexity, exec)
}

pub fn evaluate(
    s: &Settings,
    runs: &[std::path::PathBuf],
    data: &Path,
    features: Option<&Path>,
    split: &str,
    out: &Path,
    exec: Execution,
) -> Result<()> {
    let (vocab, _) = load_vocab(data)?;
    let (triples, _) = load_split(data, split)?;
    let examples: Vec<EncodedExample> = triples.iter().map(|t| encode_example(t, &vocab)).collect();
    let feats = load_features(features)?;
    let mut rows = Vec::new();
    for run in runs {
        let model = load_model(run)?;
        let store = require_features(model.config().variant, &feats)?;
        check_features(&examples, store, model.config().variant)?;
        let ppl = perplexity_with_seed(&model, &examples, store, s.eval.perplexity_seed, exec)?;
        let report = scores(s, run, &triples, Some(ppl), exec)?;

        let mut header = s.header();
        header.push(format!("run={} split={split}", run_name(run)));
        let mut w = create(&run.join("scores.tsv"))?;
        header_lines(&mut w, &header)?;
        writeln!(w, "pair_id\tcider\tmeteor\tdice")?;
        for i in &report.per_instance {
            writeln!(w, "{}\t{:.6}\t{:.6}\t{:.6}", i.pair_id, i.cider, i.meteor, i.dice.unwrap_or(f64::NAN))?;
        }
        w.flush()?;
        rows.push((model.config().variant, run_name(run), report));
    }

    let mut w = create(out)?;
    let mut header = s.header();
    header.push(format!(
        "split={split} instances={} bleu1_mode={} stopwords={STOPWORDS_VERSION} perplexity_seed={}",
        triples.len(),
        if s.eval.single_ref { "single_ref_mean" } else { "multi_ref" },
        s.eval.perplexity_seed
    ));
    header_lines(&mut w, &header)?;
    writeln!(w, "variant\trun\tbleu1\tmeteor\tcider\tperplexity")?;
    for (variant, name, r) in &rows {
        writeln!(
            w,
            "{variant}\t{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.bleu1,
            r.meteor,
            r.cider,
            r.perplexity.unwrap_or(f64::NAN)
        )?;
        println!(
            "{variant:<12} BLEU-1 {:.4}  METEOR {:.4}  CIDEr {:.4}  perplexity {:.4}",
            r.bleu1,
            r.meteor,
            r.cider,
            r.perplexity.unwrap_or(f64::NAN)
        );
    }
    w.flush()?;
    Ok(())
}

pub fn analyze(s: &Settings, run: &Path, data: &Path, split: &str, out: &Path, exec: Execution) -> Result<()> {
    let th = s.eval.dice_threshold;
    if !(0.0..=1.0).contains(&th) {
        return Err(Error::Config(format!("dice threshold {th} is outside [0, 1]")));
    }
    let (triples, _) = load_split(data, split)?;
    let report = scores(s, run, &triples, None, exec)?;
    let records = records_from_scores(&report.per_instance, th)?;
    let overlap = overlap_report(&records, th)?;
    let mut header = s.header();
    header.push(format!("run={} split={split} stopwords={STOPWORDS_VERSION}", run_name(run)));

    fs::create_dir_all(out)?;
    let mut w = create(&out.join("overlap_report.tsv"))?;
    write_report(&mut w, &header, &overlap)?;
    w.flush()?;
    let mut w = create(&out.join("overlap_plot.tsv"))?;
    write_plot_data(&mut w, &header, &overlap, &records)?;
    w.flush()?;
    for warning in &overlap.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "dice threshold {th}: low bucket {} instances, high bucket {} instances",
        overlap.low.count, overlap.high.count
    );
    Ok(())
}

pub fn design(s: &Settings, items: Option<&Path>, num_items: Option<usize>, out: &Path) -> Result<()> {
    let items: Vec<String> = match (items, num_items) {
        (Some(p), _) => String::from_utf8_lossy(&read_artifact(p, "item list", "one item id per line")?)
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect(),
        (None, Some(n)) => (0..n).map(|i| format!("item{i:03}")).collect(),
        (None, None) => return Err(Error::Config("design needs --items or --num-items".into())),
    };
    let d = entgen::evalharness::design(&items, &s.design.conditions, s.design.participants, s.design.seed)?;
    let mut w = create(out)?;
    write_design(&mut w, &s.header(), &d)?;
    w.flush()?;
    println!(
        "{} participants in {} groups, {} items each",
        d.participants(),
        d.groups(),
        items.len()
    );
    Ok(())
}

pub fn tally(s: &Settings, responses: &Path, design: Option<&Path>, out: &Path) -> Result<()> {
    let rows = read_responses(read_artifact(responses, "responses file", "check the --responses path")?.as_slice())?;
    if let Some(p) = design {
        let d = read_design(read_artifact(p, "design file", "run `entgen design` first")?.as_slice())?;
        validate_responses(&d, &rows)?;
    }
    let t = tally_rows(&rows);
    let mut w = create(out)?;
    write_tally(&mut w, &s.header(), &t)?;
    w.flush()?;
    for c in &t {
        println!("{}: {} of {} totally entailed ({:.3})", c.condition, c.totally, c.total, c.totally_proportion);
    }
    Ok(())
}
