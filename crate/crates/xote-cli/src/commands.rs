//! Subcommand implementations.

use crate::config::ExperimentConfig;
use crate::output::{atomic_write, atomic_write_json};
use serde_json::json;
use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use xote::align::{
    dictionary_matrices, procrustes_align, translation_precision, write_xprj, BilingualDictionary,
};
use xote::embeddings::{load_vectors, EmbeddingSet, EmbeddingTable};
use xote::error::{Error, Result};
use xote::ingest::{
    dataset_stats, export_conll, ingest_semeval_xml, load_corpus_file, oov_rate, tokenize, Split,
};
use xote::model::{load_checkpoint, predict_spans, save_checkpoint, ModelConfig};
use xote::trainer::{
    evaluate, learning_curve, leave_one_out, train, zero_shot_grid, LanguageData, RunRecord,
    DEFAULT_CURVE_SIZES,
};

/// Load one embedding table, picking the reader by extension (.xemb binary
/// cache, anything else fastText .vec text) and applying the optional
/// projection.
fn load_table(
    lang: &str,
    path: &Path,
    cap: usize,
    projection: Option<&Path>,
    lowercase_fallback: bool,
) -> Result<EmbeddingTable> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let mut table = if ext.eq_ignore_ascii_case("xemb") {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        EmbeddingTable::read_xemb(&mut BufReader::new(file))?
    } else {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        load_vectors(BufReader::new(file), lang, cap)?
    };
    if let Some(proj_path) = projection {
        let file = std::fs::File::open(proj_path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", proj_path.display())))?;
        let (_src, _tgt, w) = xote::align::read_xprj(&mut BufReader::new(file))?;
        table = table.apply_projection(&w)?;
    }
    table.lowercase_fallback = lowercase_fallback;
    Ok(table)
}

/// Everything an experiment needs in memory.
struct Resources {
    data: BTreeMap<String, LanguageData>,
    embeddings: EmbeddingSet,
}

fn load_resources(cfg: &ExperimentConfig, languages: &[String]) -> Result<Resources> {
    let mut data = BTreeMap::new();
    let mut embeddings = EmbeddingSet::new();
    for lang in languages {
        let emb_path = cfg.embeddings.get(lang).ok_or_else(|| {
            Error::Config(format!("no embeddings configured for language {lang:?}"))
        })?;
        let table = load_table(
            lang,
            emb_path,
            cfg.cap,
            cfg.projections.get(lang).map(PathBuf::as_path),
            !cfg.no_lowercase_fallback,
        )?;
        embeddings.insert(table)?;

        let mut lang_data = LanguageData::default();
        if let Some(paths) = cfg.data.get(lang) {
            if let Some(train_path) = &paths.train {
                lang_data.train = load_corpus_file(train_path, lang, Split::Train)?.sentences;
            }
            if let Some(test_path) = &paths.test {
                lang_data.test = load_corpus_file(test_path, lang, Split::Test)?.sentences;
            }
        }
        data.insert(lang.clone(), lang_data);
    }
    Ok(Resources { data, embeddings })
}

fn run_dir(base: &Path, experiment: &str, src: &str, tgt: &str, seed: u64) -> PathBuf {
    base.join(experiment)
        .join("runs")
        .join(format!("{src}-{tgt}-seed{seed}"))
}

fn write_records(base: &Path, experiment: &str, records: &[RunRecord]) -> Result<()> {
    for record in records {
        let src = record.source_langs.join("+");
        let tgt = record.target_lang.as_deref().unwrap_or("none");
        let dir = run_dir(base, experiment, &src, tgt, record.seed);
        atomic_write_json(&dir.join("record.json"), record)?;
    }
    atomic_write(
        &base.join(experiment).join("runs.csv"),
        xote::trainer::records_to_csv(records).as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_ingest(
    xml_path: &Path,
    lang: &str,
    split: Split,
    out_dir: &Path,
    embeddings: &[(String, PathBuf)],
    cap: usize,
) -> Result<()> {
    let xml = std::fs::read_to_string(xml_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", xml_path.display())))?;
    let (corpus, mut report) = ingest_semeval_xml(&xml, lang, split)?;
    for (table_lang, path) in embeddings {
        let table = load_table(table_lang, path, cap, None, true)?;
        report.oov.push(xote::ingest::oov_stats(&corpus, &table));
    }
    let (sentences, tokens, targets) = dataset_stats(&corpus);

    let split_name = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    let mut conll = Vec::new();
    export_conll(&corpus, &mut conll)?;
    atomic_write(&out_dir.join(format!("{lang}-{split_name}.conll")), &conll)?;
    atomic_write_json(
        &out_dir.join(format!("{lang}-{split_name}-report.json")),
        &report,
    )?;

    println!(
        "{}",
        json!({
            "language": lang,
            "split": split_name,
            "sentences": sentences,
            "tokens": tokens,
            "targets": targets,
            "excluded": report.excluded.len(),
        })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_align(
    src_lang: &str,
    src_vec: &Path,
    tgt_lang: &str,
    tgt_vec: &Path,
    dict_path: &Path,
    test_dict_path: Option<&Path>,
    out: &Path,
    cap: usize,
    normalize: bool,
) -> Result<()> {
    let src = load_table(src_lang, src_vec, cap, None, true)?;
    let tgt = load_table(tgt_lang, tgt_vec, cap, None, true)?;

    let open = |p: &Path| -> Result<std::fs::File> {
        std::fs::File::open(p)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))
    };
    let train_pairs = BilingualDictionary::parse_pairs(BufReader::new(open(dict_path)?))?;
    let dict = match test_dict_path {
        Some(p) => BilingualDictionary::from_train(train_pairs)
            .with_test(BilingualDictionary::parse_pairs(BufReader::new(open(p)?))?),
        // Without a held-out dictionary the training pairs double as the
        // diagnostic set.
        None => {
            let test = train_pairs.clone();
            BilingualDictionary::from_train(train_pairs).with_test(test)
        }
    };

    let dm = dictionary_matrices(&src, &tgt, &dict.train, normalize)?;
    let w = procrustes_align(&dm.x, &dm.y)?;
    let mut buf = Vec::new();
    write_xprj(&mut buf, src_lang, tgt_lang, &w)?;
    atomic_write(out, &buf)?;

    let projected = src.apply_projection(&w)?;
    let p1 = translation_precision(&projected, &tgt, &dict.test, 1)?;
    let p5 = translation_precision(&projected, &tgt, &dict.test, 5)?;
    println!(
        "{}",
        json!({
            "source": src_lang,
            "target": tgt_lang,
            "pairs_used": dm.used,
            "pairs_dropped_oov": dm.dropped,
            "orthogonality_defect": xote::align::orthogonality_defect(&w),
            "precision_at_1": p1.precision,
            "precision_at_5": p5.precision,
            "projection": out.display().to_string(),
        })
    );
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, sources: &[String], seed: Option<u64>) -> Result<()> {
    for lang in sources {
        if !cfg.languages.contains(lang) {
            return Err(Error::Config(format!(
                "source language {lang:?} not in config"
            )));
        }
    }
    let resources = load_resources(cfg, sources)?;
    let seed = seed.unwrap_or(cfg.train.seeds[0]);
    let train_sets: Vec<(String, Vec<xote::ingest::Sentence>)> = sources
        .iter()
        .map(|lang| (lang.clone(), resources.data[lang].train.clone()))
        .collect();
    if train_sets.iter().all(|(_, s)| s.is_empty()) {
        return Err(Error::Config(
            "no training data for the requested sources".into(),
        ));
    }

    let outcome = train(
        &cfg.model,
        &cfg.train,
        seed,
        &train_sets,
        &resources.embeddings,
    )?;

    let dir = cfg
        .output_dir
        .join(format!("train-{}-seed{seed}", sources.join("+")));
    let metadata = vec![
        ("seed".to_string(), seed.to_string()),
        ("sources".to_string(), sources.join("+")),
    ];
    let mut ck = Vec::new();
    save_checkpoint(&mut ck, &outcome.params, &cfg.model, &metadata)?;
    atomic_write(&dir.join("checkpoint.xote"), &ck)?;
    atomic_write_json(&dir.join("record.json"), &outcome.record)?;

    println!(
        "{}",
        json!({
            "sources": sources,
            "seed": seed,
            "epochs_trained": outcome.record.epochs_trained,
            "best_val_f1": outcome.record.best_val_f1,
            "failure": outcome.record.failure,
            "checkpoint": dir.join("checkpoint.xote").display().to_string(),
        })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    checkpoint_path: &Path,
    data_path: &Path,
    lang: &str,
    embeddings: &[(String, PathBuf)],
    projections: &[(String, PathBuf)],
    cap: usize,
    out: Option<&Path>,
) -> Result<()> {
    let file = std::fs::File::open(checkpoint_path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", checkpoint_path.display())))?;
    let ck = load_checkpoint(&mut BufReader::new(file))?;

    let emb_path = embeddings
        .iter()
        .find(|(l, _)| l == lang)
        .map(|(_, p)| p.clone())
        .ok_or_else(|| Error::Config(format!("no --embeddings given for language {lang:?}")))?;
    let projection = projections
        .iter()
        .find(|(l, _)| l == lang)
        .map(|(_, p)| p.as_path());
    let table = load_table(lang, &emb_path, cap, projection, true)?;
    let mut set = EmbeddingSet::new();
    set.insert(table)?;

    let corpus = load_corpus_file(data_path, lang, Split::Test)?;
    let report = evaluate(&ck.params, &ck.config, &set, lang, &corpus.sentences)?;
    println!("{}", report.tsv_line());
    if let Some(out) = out {
        atomic_write_json(out, &report)?;
    }
    Ok(())
}

pub fn cmd_zero_shot(cfg: &ExperimentConfig, workers: usize) -> Result<()> {
    let resources = load_resources(cfg, &cfg.languages)?;
    let grid = zero_shot_grid(
        &cfg.model,
        &cfg.train,
        &resources.data,
        &resources.embeddings,
        workers,
    )?;
    let base = &cfg.output_dir;
    atomic_write(
        &base.join("zero_shot").join("grid.csv"),
        grid.to_csv().as_bytes(),
    )?;
    atomic_write_json(&base.join("zero_shot").join("grid.json"), &grid)?;
    write_records(base, "zero_shot", &grid.records)?;
    print!("{}", grid.to_csv());
    Ok(())
}

pub fn cmd_leave_one_out(cfg: &ExperimentConfig, workers: usize) -> Result<()> {
    let resources = load_resources(cfg, &cfg.languages)?;
    let loo = leave_one_out(
        &cfg.model,
        &cfg.train,
        &resources.data,
        &resources.embeddings,
        workers,
    )?;
    let base = &cfg.output_dir;
    atomic_write(
        &base.join("leave_one_out").join("loo.csv"),
        loo.to_csv().as_bytes(),
    )?;
    atomic_write_json(&base.join("leave_one_out").join("loo.json"), &loo)?;
    write_records(base, "leave_one_out", &loo.records)?;
    print!("{}", loo.to_csv());
    Ok(())
}

pub fn cmd_curve(
    cfg: &ExperimentConfig,
    source: &str,
    target: &str,
    sizes: Option<Vec<usize>>,
    workers: usize,
) -> Result<()> {
    let resources = load_resources(cfg, &cfg.languages)?;
    let target_train = resources
        .data
        .get(target)
        .map(|d| d.train.len())
        .unwrap_or(0);
    let sizes = match sizes {
        Some(s) => s,
        None => {
            // Default anchors capped by the available data, plus the full size.
            let mut s: Vec<usize> = DEFAULT_CURVE_SIZES
                .iter()
                .copied()
                .filter(|&s| s < target_train)
                .collect();
            s.push(target_train);
            s
        }
    };
    let curve = learning_curve(
        &cfg.model,
        &cfg.train,
        source,
        target,
        &sizes,
        &resources.data,
        &resources.embeddings,
        workers,
    )?;
    let base = &cfg.output_dir;
    let dir = format!("curve-{source}-{target}");
    atomic_write(
        &base.join(&dir).join("curve.csv"),
        curve.to_csv().as_bytes(),
    )?;
    atomic_write_json(&base.join(&dir).join("curve.json"), &curve)?;
    write_records(base, &dir, &curve.records)?;
    print!("{}", curve.to_csv());
    Ok(())
}

pub fn cmd_predict(
    checkpoint_path: &Path,
    input: &Path,
    lang: &str,
    embeddings: &[(String, PathBuf)],
    projections: &[(String, PathBuf)],
    cap: usize,
) -> Result<()> {
    let file = std::fs::File::open(checkpoint_path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", checkpoint_path.display())))?;
    let ck = load_checkpoint(&mut BufReader::new(file))?;
    let emb_path = embeddings
        .iter()
        .find(|(l, _)| l == lang)
        .map(|(_, p)| p.clone())
        .ok_or_else(|| Error::Config(format!("no --embeddings given for language {lang:?}")))?;
    let projection = projections
        .iter()
        .find(|(l, _)| l == lang)
        .map(|(_, p)| p.as_path());
    let table = load_table(lang, &emb_path, cap, projection, true)?;

    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens = tokenize(line);
        let sentence = xote::ingest::Sentence {
            id: format!("line-{i}"),
            language: lang.to_string(),
            text: line.to_string(),
            tokens,
            targets: vec![],
        };
        let spans = if sentence.tokens.is_empty() {
            vec![]
        } else {
            predict_spans(&ck.params, &ck.config, &table, &sentence)?
        };
        println!(
            "{}",
            json!({
                "line": i,
                "text": line,
                "spans": spans.iter().map(|s| json!({
                    "start": s.start,
                    "end": s.end,
                    "surface": s.surface,
                })).collect::<Vec<_>>(),
            })
        );
    }
    Ok(())
}

/// Build an XEMB cache from a .vec file (convenience for repeated runs).
pub fn cmd_cache(lang: &str, vec_path: &Path, out: &Path, cap: usize) -> Result<()> {
    let table = load_table(lang, vec_path, cap, None, true)?;
    let mut buf = Vec::new();
    table.write_xemb(&mut buf)?;
    atomic_write(out, &buf)?;
    println!(
        "{}",
        json!({
            "language": lang,
            "words": table.len(),
            "dim": table.dim(),
            "cache": out.display().to_string(),
        })
    );
    Ok(())
}

/// Report the out-of-vocabulary rate of a corpus under a table (part of the
/// ingest diagnostics).
pub fn cmd_oov(data_path: &Path, lang: &str, vec_path: &Path, cap: usize) -> Result<()> {
    let table = load_table(lang, vec_path, cap, None, true)?;
    let corpus = load_corpus_file(data_path, lang, Split::Train)?;
    println!(
        "{}",
        json!({
            "language": lang,
            "sentences": corpus.sentences.len(),
            "oov_rate": oov_rate(&corpus, &table),
        })
    );
    Ok(())
}

/// Reference copy of the default model hyperparameters, printed by
/// `xote config-template`.
pub fn cmd_config_template() -> Result<()> {
    let template = ExperimentConfig {
        schema_version: crate::config::SCHEMA_VERSION,
        languages: vec!["en".into(), "es".into()],
        data: [
            (
                "en".to_string(),
                crate::config::DataPaths {
                    train: Some(PathBuf::from("data/en-train.xml")),
                    test: Some(PathBuf::from("data/en-test.xml")),
                },
            ),
            (
                "es".to_string(),
                crate::config::DataPaths {
                    train: Some(PathBuf::from("data/es-train.xml")),
                    test: Some(PathBuf::from("data/es-test.xml")),
                },
            ),
        ]
        .into_iter()
        .collect(),
        embeddings: [
            ("en".to_string(), PathBuf::from("embeddings/wiki.en.vec")),
            ("es".to_string(), PathBuf::from("embeddings/wiki.es.vec")),
        ]
        .into_iter()
        .collect(),
        projections: BTreeMap::new(),
        cap: xote::embeddings::DEFAULT_VOCAB_CAP,
        model: ModelConfig::default(),
        train: xote::trainer::TrainConfig::default(),
        output_dir: PathBuf::from("runs"),
        no_lowercase_fallback: false,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&template)
            .map_err(|e| Error::Format(format!("template serialization: {e}")))?
    );
    Ok(())
}
