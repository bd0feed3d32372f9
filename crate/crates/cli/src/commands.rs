use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use zonofair::dataprep::{
    augment_synonyms, balanced_split, income_label, read_tabular_csv, row_to_sentence,
    write_dataset, SynonymMap,
};
use zonofair::embed::{
    load_pairs, pair_distance, train_embedding, ContrastiveConfig, EmbeddingTable, Norm, WordPair,
};
use zonofair::io::{read_word_list, write_json, write_text};
use zonofair::lm::{
    encode_dataset, load_dataset, load_model, save_model, train_model, Example, TransformerModel,
};
use zonofair::verify::{
    brute_force_certify, certified, certify_corpus, compute_threshold, count_combinations,
    write_radar_csv, FairnessReport, PositionSelection, PropagationConfig,
};
use zonofair::vocab::{basic_tokenize, Vocab};

use crate::config::RunConfig;

/// Fails early when an input is missing.
pub fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        ensure!(p.is_file(), "input file not found: {}", p.display());
    }
    Ok(())
}

/// Creates the parent directory of each output up front.
pub fn prepare_outputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        ensure!(!p.is_dir(), "output path is a directory: {}", p.display());
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create directory {}", dir.display()))?;
        }
    }
    Ok(())
}

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn selection(positions: Option<usize>, list: Option<Vec<usize>>) -> PositionSelection {
    match (positions, list) {
        (_, Some(v)) => PositionSelection::Explicit(v),
        (Some(n), None) => PositionSelection::FirstN(n),
        (None, None) => PositionSelection::All,
    }
}

fn load_sentences(path: &Path, vocab: &Vocab, max_seq: usize, limit: Option<usize>) -> Result<Vec<Example>> {
    let raw = load_dataset(path)?;
    let mut set = encode_dataset(vocab, &raw, max_seq);
    if let Some(n) = limit {
        set.truncate(n);
    }
    ensure!(!set.is_empty(), "no sentences in {}", path.display());
    Ok(set)
}

#[derive(Serialize)]
struct PhaseHistory {
    phase: &'static str,
    config: ContrastiveConfig,
    losses: Vec<f64>,
}

#[derive(Serialize)]
struct PretrainHistory {
    vocab_size: usize,
    phases: Vec<PhaseHistory>,
}

pub struct PretrainArgs {
    pub cluster: Option<PathBuf>,
    pub general: Option<PathBuf>,
    pub corpus: Vec<PathBuf>,
    pub words: Vec<PathBuf>,
    pub out: PathBuf,
    pub history: Option<PathBuf>,
}

/// Clustering phase, then the general phase, on one table.
pub fn pretrain(a: PretrainArgs, cfg: &RunConfig, seed: u64) -> Result<()> {
    ensure!(
        a.cluster.is_some() || a.general.is_some(),
        "at least one of --cluster and --general is required"
    );
    let phases: Vec<(&'static str, &Path)> = [("cluster", &a.cluster), ("general", &a.general)]
        .into_iter()
        .filter_map(|(n, p)| p.as_deref().map(|p| (n, p)))
        .collect();
    require_inputs(phases.iter().map(|(_, p)| *p).chain(a.corpus.iter().map(PathBuf::as_path)).chain(a.words.iter().map(PathBuf::as_path)))?;
    let history_path = a.history.clone().unwrap_or_else(|| sibling(&a.out, "history.json"));
    prepare_outputs([a.out.as_path(), history_path.as_path()])?;

    let mut raw_phases = Vec::new();
    let mut words: Vec<String> = Vec::new();
    for (name, path) in &phases {
        let raw = load_pairs(path)?;
        ensure!(!raw.is_empty(), "no pairs in {}", path.display());
        for p in &raw {
            words.extend(basic_tokenize(&p.left));
            words.extend(basic_tokenize(&p.right));
        }
        raw_phases.push((*name, *path, raw));
    }
    for path in &a.corpus {
        for ex in load_dataset(path)? {
            words.extend(basic_tokenize(&ex.text));
        }
    }
    for path in &a.words {
        for w in read_word_list(path)? {
            words.extend(basic_tokenize(&w));
        }
    }
    let vocab = Vocab::from_words(words);
    let mut table = EmbeddingTable::random(vocab.clone(), cfg.pretrain.dim, seed)?;
    let mut history = PretrainHistory { vocab_size: vocab.len(), phases: Vec::new() };
    for (name, path, raw) in raw_phases {
        let pairs = raw
            .iter()
            .map(|r| WordPair::from_raw(&vocab, r))
            .collect::<zonofair::Result<Vec<_>>>()
            .with_context(|| format!("in {}", path.display()))?;
        let phase_cfg = match name {
            "cluster" => cfg.pretrain.cluster.apply(ContrastiveConfig::gender_phase(), seed),
            _ => cfg.pretrain.general.apply(ContrastiveConfig::general_phase(0.5), seed),
        };
        let (trained, losses) = train_embedding(&pairs, &phase_cfg, table)
            .with_context(|| format!("{name} phase"))?;
        table = trained;
        eprintln!(
            "{name}: {} pairs, {} epochs, final loss {:.6e}",
            pairs.len(),
            losses.len(),
            losses.last().copied().unwrap_or(f64::NAN)
        );
        history.phases.push(PhaseHistory { phase: name, config: phase_cfg, losses });
    }
    table.save(&a.out)?;
    write_json(&history_path, &history)?;
    println!("table={}", a.out.display());
    Ok(())
}

pub struct TrainArgs {
    pub table: PathBuf,
    pub train: PathBuf,
    pub val: PathBuf,
    pub out: PathBuf,
    pub history: Option<PathBuf>,
    pub epochs: Option<usize>,
}

pub fn train(a: TrainArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<()> {
    require_inputs([a.table.as_path(), a.train.as_path(), a.val.as_path()])?;
    let history_path = a.history.clone().unwrap_or_else(|| sibling(&a.out, "history.json"));
    prepare_outputs([a.out.as_path(), history_path.as_path()])?;

    let table = EmbeddingTable::load(&a.table)?;
    let hyper = cfg.model.apply(table.dim());
    let mut tc = cfg.train.clone();
    if let Some(s) = seed {
        tc.seed = s;
    }
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    let train = load_sentences(&a.train, table.vocab(), hyper.max_seq, None)?;
    let val = load_sentences(&a.val, table.vocab(), hyper.max_seq, None)?;
    let model = TransformerModel::new(hyper, table, tc.seed)?;
    let (model, history) = train_model(model, &train, &val, &tc)?;
    save_model(&model, &a.out)?;
    write_json(&history_path, &history)?;
    let best = &history.epochs[history.best_epoch];
    println!(
        "best_epoch={} val_loss={} val_accuracy={}",
        best.epoch, best.val_loss, best.val_accuracy
    );
    Ok(())
}

pub fn distances(table: &Path, pairs: &Path, norm: Norm, out: Option<&Path>) -> Result<()> {
    require_inputs([table, pairs])?;
    if let Some(o) = out {
        prepare_outputs([o])?;
    }
    let table = EmbeddingTable::load(table)?;
    let mut text = String::from("left\tright\tlabel\tdistance\n");
    for r in load_pairs(pairs)? {
        let pair = WordPair::from_raw(table.vocab(), &r)
            .with_context(|| format!("{}:{}", pairs.display(), r.line))?;
        let d = pair_distance(&table, &pair, norm)?;
        writeln!(text, "{}\t{}\t{}\t{d:e}", r.left, r.right, r.label).unwrap();
    }
    match out {
        Some(o) => write_text(o, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn anchor_list(file: Option<&Path>, inline: &[String]) -> Result<Vec<String>> {
    let mut anchors = inline.to_vec();
    if let Some(f) = file {
        anchors.extend(read_word_list(f)?);
    }
    ensure!(!anchors.is_empty(), "no anchors given");
    Ok(anchors)
}

pub fn neighbors(table: &Path, anchors_file: Option<&Path>, anchors: &[String], k: usize, out: Option<&Path>) -> Result<()> {
    require_inputs([table].into_iter().chain(anchors_file))?;
    if let Some(o) = out {
        prepare_outputs([o])?;
    }
    let table = EmbeddingTable::load(table)?;
    let report = compute_threshold(&table, &anchor_list(anchors_file, anchors)?, k)?;
    if let Some(o) = out {
        write_json(o, &report)?;
    } else {
        for a in &report.anchors {
            let list: Vec<String> = a.neighbors.iter().map(|(t, d)| format!("{t}:{d:e}")).collect();
            println!("{}\t{}", a.anchor, list.join(" "));
        }
    }
    println!("threshold={:e}", report.threshold);
    Ok(())
}

pub enum Threshold {
    Fixed(f64),
    Anchors { file: Option<PathBuf>, inline: Vec<String>, k: usize },
}

pub struct VerifyArgs {
    pub model: PathBuf,
    pub dataset: PathBuf,
    pub threshold: Threshold,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
    pub positions: PositionSelection,
    pub limit: Option<usize>,
}

pub fn verify(a: VerifyArgs, cfg: &RunConfig) -> Result<()> {
    let anchor_file = match &a.threshold {
        Threshold::Anchors { file, .. } => file.as_deref(),
        Threshold::Fixed(_) => None,
    };
    require_inputs([a.model.as_path(), a.dataset.as_path()].into_iter().chain(anchor_file))?;
    let csv_path = a.csv.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    prepare_outputs([a.out.as_path(), csv_path.as_path()])?;

    let model = load_model(&a.model)?;
    let d = match &a.threshold {
        Threshold::Fixed(d) => *d,
        Threshold::Anchors { file, inline, k } => {
            compute_threshold(model.embedding(), &anchor_list(file.as_deref(), inline)?, *k)?.threshold
        }
    };
    let set = load_sentences(&a.dataset, model.embedding().vocab(), model.hyper.max_seq, a.limit)?;
    let sentences: Vec<Vec<usize>> = set.into_iter().map(|e| e.ids).collect();
    let report = certify_corpus(&model, &sentences, d, &a.positions, &cfg.search, &PropagationConfig::default())?;
    report.save(&a.out)?;
    write_radar_csv(&report, &csv_path)?;
    let failures = report.sentences.iter().filter(|s| s.error.is_some()).count();
    if failures > 0 {
        eprintln!("{failures} sentence(s) failed and count as uncertified; see the report");
    }
    println!("threshold_D={d:e}");
    println!("fairness_score={}", report.psi);
    Ok(())
}

pub struct BruteForceArgs {
    pub model: PathBuf,
    pub dataset: PathBuf,
    pub synonyms: PathBuf,
    pub positions: PositionSelection,
    pub cap: u64,
    pub limit: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn brute_force(a: BruteForceArgs) -> Result<()> {
    require_inputs([a.model.as_path(), a.dataset.as_path(), a.synonyms.as_path()])?;
    if let Some(o) = &a.out {
        prepare_outputs([o.as_path()])?;
    }
    let model = load_model(&a.model)?;
    let map = SynonymMap::load(&a.synonyms)?;
    let vocab = model.embedding().vocab();
    let set = load_sentences(&a.dataset, vocab, model.hyper.max_seq, a.limit)?;
    let mut text = String::from("sentence_index\tcombinations\trobust\n");
    let (mut robust, mut skipped) = (0usize, 0usize);
    for (i, ex) in set.iter().enumerate() {
        let positions = a
            .positions
            .resolve(&ex.ids)
            .unwrap_or_else(|| TransformerModel::active_positions(&ex.ids));
        let mut subs = vec![Vec::new(); ex.ids.len()];
        for p in positions {
            ensure!(p < ex.ids.len(), "position {p} out of range in sentence {i}");
            let token = vocab.token(ex.ids[p]).unwrap_or_default();
            for alt in map.get(token).unwrap_or_default() {
                match vocab.id(alt) {
                    Some(id) => subs[p].push(id),
                    None => skipped += 1,
                }
            }
        }
        let combos = count_combinations(&model, &ex.ids, &subs)?;
        let ok = brute_force_certify(&model, &ex.ids, &subs, a.cap)
            .with_context(|| format!("sentence {i}"))?;
        robust += ok as usize;
        writeln!(text, "{i}\t{combos}\t{ok}").unwrap();
    }
    if skipped > 0 {
        eprintln!("{skipped} synonym candidate(s) outside the vocabulary were skipped");
    }
    match &a.out {
        Some(o) => write_text(o, &text)?,
        None => print!("{text}"),
    }
    println!("robust={robust}/{}", set.len());
    Ok(())
}

pub struct AblateArgs {
    pub models: Vec<PathBuf>,
    pub ks: Vec<usize>,
    pub dataset: PathBuf,
    pub anchors: PathBuf,
    pub out_dir: PathBuf,
    pub positions: PositionSelection,
    pub limit: Option<usize>,
}

/// Ψ and ε_max over (model × k). Radii depend only on the model, so each
/// model is verified once and rescored per `k`.
pub fn ablate(a: AblateArgs, cfg: &RunConfig) -> Result<()> {
    ensure!(!a.models.is_empty() && !a.ks.is_empty(), "need at least one model and one k");
    require_inputs(a.models.iter().map(PathBuf::as_path).chain([a.dataset.as_path(), a.anchors.as_path()]))?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("cannot create directory {}", a.out_dir.display()))?;
    let anchors = read_word_list(&a.anchors)?;
    let models = a
        .models
        .iter()
        .map(|p| load_model(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = String::from("model\tblocks\tk\tthreshold_D\tpsi\tcertified\tn\tmean_eps_max\terror\n");
    let mut radii = String::from("model\tsentence_index\teps_max\terror\n");
    for (path, model) in a.models.iter().zip(&models) {
        let name = path.display();
        let blocks = model.hyper.blocks;
        let set = load_sentences(&a.dataset, model.embedding().vocab(), model.hyper.max_seq, a.limit)?;
        let sentences: Vec<Vec<usize>> = set.into_iter().map(|e| e.ids).collect();
        let base: FairnessReport =
            certify_corpus(model, &sentences, 0.0, &a.positions, &cfg.search, &PropagationConfig::default())?;
        for s in &base.sentences {
            writeln!(radii, "{name}\t{}\t{:e}\t{}", s.index, s.eps_max, s.error.as_deref().unwrap_or("")).unwrap();
        }
        let mean = base.sentences.iter().map(|s| s.eps_max).sum::<f64>() / base.n as f64;
        for &k in &a.ks {
            match compute_threshold(model.embedding(), &anchors, k) {
                Ok(t) => {
                    let hits = base
                        .sentences
                        .iter()
                        .filter(|s| s.error.is_none() && certified(s.eps_max, t.threshold))
                        .count();
                    let psi = hits as f64 / base.n as f64;
                    writeln!(cells, "{name}\t{blocks}\t{k}\t{:e}\t{psi}\t{hits}\t{}\t{mean:e}\t", t.threshold, base.n).unwrap();
                }
                Err(e) => {
                    writeln!(cells, "{name}\t{blocks}\t{k}\t\t\t\t{}\t{mean:e}\t{e}", base.n).unwrap();
                }
            }
        }
    }
    write_text(&a.out_dir.join("ablation.tsv"), &cells)?;
    write_text(&a.out_dir.join("radii.tsv"), &radii)?;
    print!("{cells}");
    Ok(())
}

pub fn prepare_tabular(csv: &Path, out_dir: &Path, ratios: [f64; 3], seed: u64) -> Result<()> {
    require_inputs([csv])?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create directory {}", out_dir.display()))?;
    let rows = read_tabular_csv(csv)?;
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let label = income_label(row).with_context(|| format!("{} record {}", csv.display(), i + 1))?;
        records.push((label, row_to_sentence(row)?));
    }
    if records.is_empty() {
        bail!("no records in {}", csv.display());
    }
    let split = balanced_split(&records, |r| r.0, ratios, seed)?;
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        write_dataset(&out_dir.join(format!("{name}.tsv")), part)?;
        println!("{name}={}", part.len());
    }
    Ok(())
}

/// Sentence `i` uses seed `seed + i`.
pub fn prepare_augment(dataset: &Path, synonyms: &Path, p: f64, out: &Path, seed: u64) -> Result<()> {
    require_inputs([dataset, synonyms])?;
    prepare_outputs([out])?;
    let map = SynonymMap::load(synonyms)?;
    let mut records = Vec::new();
    for (i, ex) in load_dataset(dataset)?.into_iter().enumerate() {
        let text = augment_synonyms(&ex.text, &map, p, seed.wrapping_add(i as u64))?;
        records.push((ex.label, text));
    }
    write_dataset(out, &records)?;
    println!("records={}", records.len());
    Ok(())
}
