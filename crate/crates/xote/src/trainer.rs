//! Training loop and experiment drivers.
//!
//! Training runs Adam over token cross-entropy with early stopping on the
//! exact-span F1 of a 20% validation split drawn from the (concatenated)
//! source-language data - never from the target language, so zero-shot
//! epochs are tuned on source data only. The drivers reproduce the three
//! experimental protocols: the single-source zero-shot grid, multi-source
//! leave-one-out, and target-data learning curves.

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::eval::{exact_span_f1, EvalReport, SentenceSpans};
use crate::ingest::Sentence;
use crate::iob::Tag;
use crate::model::{
    apply_adam, init_model, loss_and_gradients, optimizer_states, predict_spans, BatchItem,
    ModelConfig, ModelParams,
};
use crate::rng::{substream, STREAM_DROPOUT, STREAM_SHUFFLE_BASE, STREAM_SPLIT, STREAM_SUBSAMPLE};
use crate::tensor::AdamConfig;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The ten documented default seeds for score averaging.
pub const DEFAULT_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive epochs without validation improvement before stopping.
    pub patience: usize,
    /// Fraction of the training data held out for validation.
    pub val_fraction: f64,
    pub seeds: Vec<u64>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            val_fraction: 0.2,
            seeds: DEFAULT_SEEDS.to_vec(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(0.0 < self.val_fraction && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must be in (0,1), got {}",
                self.val_fraction
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience must be <= max_epochs".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.adam.validate()
    }
}

/// Loss and validation score of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

/// Everything recorded about one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub source_langs: Vec<String>,
    pub target_lang: Option<String>,
    pub seed: u64,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub test_f1: Option<f64>,
    /// Set when the run was aborted (e.g. diverged); scores then refer to
    /// the best state seen before the abort.
    pub failure: Option<String>,
    pub history: Vec<EpochRecord>,
}

/// Uniform random index split without replacement, deterministic per seed.
/// The validation part gets `round(n * fraction)` items.
pub fn split_train_val(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 5 {
        return Err(Error::Contract(format!(
            "dataset of {n} sentences is too small to split"
        )));
    }
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must be in (0,1), got {fraction}"
        )));
    }
    let val_n = (n as f64 * fraction).round() as usize;
    if val_n == 0 || val_n == n {
        return Err(Error::Config(format!(
            "fraction {fraction} yields an empty split for {n} sentences"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, STREAM_SPLIT);
    indices.shuffle(&mut rng);
    let mut val: Vec<usize> = indices[..val_n].to_vec();
    let mut train: Vec<usize> = indices[val_n..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

struct Example<'a> {
    language: &'a str,
    sentence: &'a Sentence,
    tags: Vec<Tag>,
}

/// The trained model together with its run record.
pub struct TrainOutcome {
    pub params: ModelParams,
    pub record: RunRecord,
}

/// Train one tagger on the concatenated source datasets.
///
/// The 20% validation split is drawn from the concatenated source data; the
/// loop stops once validation span-F1 has failed to improve for `patience`
/// consecutive epochs (or at `max_epochs`) and restores the best-validation
/// parameters. Source listing order does not matter: examples are put into
/// a canonical (language, id) order before the seeded shuffle. A numeric
/// divergence aborts the run and is recorded in the RunRecord instead of
/// being raised.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    sources: &[(String, Vec<Sentence>)],
    embeddings: &EmbeddingSet,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let source_langs: Vec<String> = {
        let mut langs: Vec<String> = sources.iter().map(|(l, _)| l.clone()).collect();
        langs.sort();
        langs.dedup();
        langs
    };

    // Canonical example order, independent of source listing order.
    let mut examples: Vec<Example<'_>> = Vec::new();
    for (lang, sentences) in sources {
        for sentence in sentences {
            examples.push(Example {
                language: lang,
                sentence,
                tags: sentence.gold_tags()?,
            });
        }
    }
    if examples.is_empty() {
        return Err(Error::Contract("no training sentences".into()));
    }
    examples.sort_by(|a, b| (a.language, &a.sentence.id).cmp(&(b.language, &b.sentence.id)));

    let embed_dim = embeddings
        .dim()
        .ok_or_else(|| Error::Config("no embedding tables loaded".into()))?;
    for lang in &source_langs {
        embeddings.get(lang)?;
    }

    let (train_idx, val_idx) = split_train_val(examples.len(), train_cfg.val_fraction, seed)?;
    let mut params = init_model(model_cfg, embed_dim, seed)?;
    let mut states = optimizer_states(&params);
    let mut dropout_rng = substream(seed, STREAM_DROPOUT);

    let mut record = RunRecord {
        source_langs,
        target_lang: None,
        seed,
        epochs_trained: 0,
        best_epoch: 0,
        best_val_f1: f64::NEG_INFINITY,
        test_f1: None,
        failure: None,
        history: Vec::new(),
    };
    let mut best_params = params.clone();
    let mut epochs_without_improvement = 0usize;

    'training: for epoch in 1..=train_cfg.max_epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut substream(seed, STREAM_SHUFFLE_BASE + epoch as u64));

        let mut loss_weighted = 0.0;
        let mut tokens_seen = 0usize;
        for batch_idx in order.chunks(train_cfg.batch_size) {
            let mut batch = Vec::with_capacity(batch_idx.len());
            for &i in batch_idx {
                let ex = &examples[i];
                batch.push(BatchItem {
                    table: embeddings.get(ex.language)?,
                    tokens: &ex.sentence.tokens,
                    gold: &ex.tags,
                    id: &ex.sentence.id,
                });
            }
            let batch_tokens: usize = batch.iter().map(|b| b.tokens.len()).sum();
            let step = loss_and_gradients(&params, model_cfg, &batch, true, Some(&mut dropout_rng))
                .and_then(|(loss, grads)| {
                    apply_adam(&mut params, &grads, &mut states, &train_cfg.adam)?;
                    Ok(loss)
                });
            match step {
                Ok(loss) => {
                    loss_weighted += loss * batch_tokens as f64;
                    tokens_seen += batch_tokens;
                }
                Err(Error::Numeric(msg)) => {
                    record.failure = Some(format!("epoch {epoch}: {msg}"));
                    break 'training;
                }
                Err(other) => return Err(other),
            }
        }

        let val_f1 = evaluate_on(&params, model_cfg, embeddings, &examples, &val_idx)?;
        record.history.push(EpochRecord {
            epoch,
            train_loss: loss_weighted / tokens_seen.max(1) as f64,
            val_f1,
        });
        if val_f1 > record.best_val_f1 {
            record.best_val_f1 = val_f1;
            record.best_epoch = epoch;
            best_params = params.clone();
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
        }
        if epochs_without_improvement >= train_cfg.patience {
            break;
        }
    }

    record.epochs_trained = record.history.len();
    if record.best_val_f1 == f64::NEG_INFINITY {
        // Aborted before the first validation pass.
        record.best_val_f1 = 0.0;
    }
    Ok(TrainOutcome {
        params: best_params,
        record,
    })
}

fn evaluate_on(
    params: &ModelParams,
    cfg: &ModelConfig,
    embeddings: &EmbeddingSet,
    examples: &[Example<'_>],
    indices: &[usize],
) -> Result<f64> {
    let mut gold = Vec::with_capacity(indices.len());
    let mut pred = Vec::with_capacity(indices.len());
    for &i in indices {
        let ex = &examples[i];
        let table = embeddings.get(ex.language)?;
        gold.push(SentenceSpans::new(
            &ex.sentence.id,
            ex.sentence.targets.clone(),
        ));
        pred.push(SentenceSpans::new(
            &ex.sentence.id,
            predict_spans(params, cfg, table, ex.sentence)?,
        ));
    }
    Ok(exact_span_f1(&gold, &pred)?.f1)
}

/// Exact-span evaluation of a trained model on one language's sentences.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    embeddings: &EmbeddingSet,
    language: &str,
    sentences: &[Sentence],
) -> Result<EvalReport> {
    let table = embeddings.get(language)?;
    let mut gold = Vec::with_capacity(sentences.len());
    let mut pred = Vec::with_capacity(sentences.len());
    for s in sentences {
        gold.push(SentenceSpans::new(&s.id, s.targets.clone()));
        pred.push(SentenceSpans::new(
            &s.id,
            predict_spans(params, cfg, table, s)?,
        ));
    }
    exact_span_f1(&gold, &pred)
}

/// Train and test material for one language.
#[derive(Debug, Clone, Default)]
pub struct LanguageData {
    pub train: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

/// Mean F1 of one grid cell with its per-seed runs.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub source: String,
    pub target: String,
    pub mean_f1: f64,
    pub per_seed_f1: Vec<f64>,
}

/// The full source x target zero-shot grid. The diagonal holds the
/// monolingual baselines (trained and tested on the same language).
#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub languages: Vec<String>,
    /// Row-major source x target; `None` marks a skipped cell (missing
    /// train or test data).
    pub cells: Vec<Option<GridCell>>,
    pub records: Vec<RunRecord>,
}

impl GridResult {
    pub fn cell(&self, source: &str, target: &str) -> Option<&GridCell> {
        let si = self.languages.iter().position(|l| l == source)?;
        let ti = self.languages.iter().position(|l| l == target)?;
        self.cells[si * self.languages.len() + ti].as_ref()
    }

    /// CSV with one row per source language, one column per target.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source\\target");
        for l in &self.languages {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (si, src) in self.languages.iter().enumerate() {
            out.push_str(src);
            for ti in 0..self.languages.len() {
                out.push(',');
                if let Some(cell) = &self.cells[si * self.languages.len() + ti] {
                    out.push_str(&format!("{:.6}", cell.mean_f1));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn run_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Train on every source language separately and evaluate on every target
/// language's test set, averaging exact-span F1 over the configured seeds.
pub fn zero_shot_grid(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &BTreeMap<String, LanguageData>,
    embeddings: &EmbeddingSet,
    workers: usize,
) -> Result<GridResult> {
    let languages: Vec<String> = data.keys().cloned().collect();
    let jobs: Vec<(String, u64)> = languages
        .iter()
        .filter(|l| !data[*l].train.is_empty())
        .flat_map(|l| train_cfg.seeds.iter().map(move |&s| (l.clone(), s)))
        .collect();

    // One training per (source, seed); each trained model is evaluated on
    // every target test set.
    type SourceRun = (String, u64, Vec<(String, f64)>, RunRecord);
    let pool = run_pool(workers)?;
    let outcomes: Result<Vec<SourceRun>> = pool.install(|| {
        jobs.par_iter()
            .map(|(source, seed)| {
                let sources = vec![(source.clone(), data[source].train.clone())];
                let outcome = train(model_cfg, train_cfg, *seed, &sources, embeddings)?;
                let mut scores = Vec::new();
                if outcome.record.failure.is_none() {
                    for target in &languages {
                        if data[target].test.is_empty() {
                            continue;
                        }
                        let report = evaluate(
                            &outcome.params,
                            model_cfg,
                            embeddings,
                            target,
                            &data[target].test,
                        )?;
                        scores.push((target.clone(), report.f1));
                    }
                }
                Ok((source.clone(), *seed, scores, outcome.record))
            })
            .collect()
    });
    let outcomes = outcomes?;

    let n = languages.len();
    let mut cells: Vec<Option<GridCell>> = vec![None; n * n];
    let mut records = Vec::new();
    for (source, seed, scores, record) in outcomes {
        for (target, f1) in &scores {
            let si = languages
                .iter()
                .position(|l| l == &source)
                .expect("known source");
            let ti = languages
                .iter()
                .position(|l| l == target)
                .expect("known target");
            let cell = cells[si * n + ti].get_or_insert_with(|| GridCell {
                source: source.clone(),
                target: target.clone(),
                mean_f1: 0.0,
                per_seed_f1: Vec::new(),
            });
            cell.per_seed_f1.push(*f1);
            let mut rec = record.clone();
            rec.target_lang = Some(target.clone());
            rec.test_f1 = Some(*f1);
            rec.seed = seed;
            records.push(rec);
        }
        if scores.is_empty() {
            records.push(record);
        }
    }
    for cell in cells.iter_mut().flatten() {
        cell.mean_f1 = cell.per_seed_f1.iter().sum::<f64>() / cell.per_seed_f1.len() as f64;
    }
    Ok(GridResult {
        languages,
        cells,
        records,
    })
}

/// Per-target leave-one-out scores.
#[derive(Debug, Clone, Serialize)]
pub struct LeaveOneOutResult {
    pub targets: Vec<String>,
    /// Mean F1 per target, aligned with `targets`; `None` marks a skipped
    /// target.
    pub mean_f1: Vec<Option<f64>>,
    pub records: Vec<RunRecord>,
}

impl LeaveOneOutResult {
    /// CSV with the targets as columns and a single all-others row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target");
        for t in &self.targets {
            out.push(',');
            out.push_str(t);
        }
        out.push_str("\nall_others");
        for f1 in &self.mean_f1 {
            out.push(',');
            if let Some(v) = f1 {
                out.push_str(&format!("{v:.6}"));
            }
        }
        out.push('\n');
        out
    }
}

/// For every target language, train on the concatenated training data of
/// all other languages and evaluate on the target's test set.
pub fn leave_one_out(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &BTreeMap<String, LanguageData>,
    embeddings: &EmbeddingSet,
    workers: usize,
) -> Result<LeaveOneOutResult> {
    if data.len() < 2 {
        return Err(Error::Contract(
            "leave-one-out needs at least two languages".into(),
        ));
    }
    let targets: Vec<String> = data.keys().cloned().collect();
    let jobs: Vec<(String, u64)> = targets
        .iter()
        .filter(|t| !data[*t].test.is_empty())
        .flat_map(|t| train_cfg.seeds.iter().map(move |&s| (t.clone(), s)))
        .collect();

    let pool = run_pool(workers)?;
    let outcomes: Result<Vec<(String, RunRecord)>> = pool.install(|| {
        jobs.par_iter()
            .map(|(target, seed)| {
                let sources: Vec<(String, Vec<Sentence>)> = data
                    .iter()
                    .filter(|(lang, d)| *lang != target && !d.train.is_empty())
                    .map(|(lang, d)| (lang.clone(), d.train.clone()))
                    .collect();
                if sources.is_empty() {
                    return Err(Error::Contract(format!(
                        "no source training data for target {target}"
                    )));
                }
                let outcome = train(model_cfg, train_cfg, *seed, &sources, embeddings)?;
                let mut record = outcome.record;
                record.target_lang = Some(target.clone());
                if record.failure.is_none() {
                    let report = evaluate(
                        &outcome.params,
                        model_cfg,
                        embeddings,
                        target,
                        &data[target].test,
                    )?;
                    record.test_f1 = Some(report.f1);
                }
                Ok((target.clone(), record))
            })
            .collect()
    });
    let outcomes = outcomes?;

    let mut mean_f1 = Vec::with_capacity(targets.len());
    for target in &targets {
        let scores: Vec<f64> = outcomes
            .iter()
            .filter(|(t, r)| t == target && r.test_f1.is_some())
            .map(|(_, r)| r.test_f1.expect("filtered"))
            .collect();
        mean_f1.push(if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        });
    }
    Ok(LeaveOneOutResult {
        targets,
        mean_f1,
        records: outcomes.into_iter().map(|(_, r)| r).collect(),
    })
}

/// One CSV row per run record (summary columns; full histories live in the
/// per-run JSON files).
pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out =
        String::from("sources,target,seed,epochs_trained,best_epoch,best_val_f1,test_f1,failure\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{},{}\n",
            r.source_langs.join("+"),
            r.target_lang.as_deref().unwrap_or(""),
            r.seed,
            r.epochs_trained,
            r.best_epoch,
            r.best_val_f1,
            r.test_f1.map(|v| format!("{v:.6}")).unwrap_or_default(),
            r.failure.as_deref().unwrap_or("")
        ));
    }
    out
}

/// One point of the target-data learning curve.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub size: usize,
    /// Full source data plus `size` target samples.
    pub cross_lingual: Option<f64>,
    /// Only the `size` target samples.
    pub monolingual: Option<f64>,
    /// All languages' full training data (constant across sizes).
    pub all_languages: Option<f64>,
}

/// Learning-curve results plus all underlying run records.
#[derive(Debug, Clone, Serialize)]
pub struct CurveResult {
    pub source: String,
    pub target: String,
    pub points: Vec<CurvePoint>,
    pub records: Vec<RunRecord>,
}

impl CurveResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,cross_lingual,monolingual,all_languages\n");
        for p in &self.points {
            let fmt = |v: &Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.size,
                fmt(&p.cross_lingual),
                fmt(&p.monolingual),
                fmt(&p.all_languages)
            ));
        }
        out
    }
}

/// Default curve sizes; callers drop the entries above their target's
/// training size.
pub const DEFAULT_CURVE_SIZES: [usize; 6] = [0, 50, 100, 200, 500, 1000];

/// The learning-curve protocol: for each size `s`, arm A trains on the full
/// source data plus `s` target samples, arm B on the `s` target samples
/// alone, and a constant arm trains on all languages' full data. Target
/// subsamples are nested prefixes of a per-seed shuffle, so larger sizes
/// strictly extend smaller ones.
#[allow(clippy::too_many_arguments)]
pub fn learning_curve(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    source: &str,
    target: &str,
    sizes: &[usize],
    data: &BTreeMap<String, LanguageData>,
    embeddings: &EmbeddingSet,
    workers: usize,
) -> Result<CurveResult> {
    let src = data
        .get(source)
        .ok_or_else(|| Error::Config(format!("unknown source language {source:?}")))?;
    let tgt = data
        .get(target)
        .ok_or_else(|| Error::Config(format!("unknown target language {target:?}")))?;
    if src.train.is_empty() || tgt.train.is_empty() || tgt.test.is_empty() {
        return Err(Error::Config(
            "learning curve needs source train, target train and target test data".into(),
        ));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&max) = sorted.last() {
        if max > tgt.train.len() {
            return Err(Error::Config(format!(
                "curve size {max} exceeds target training size {}",
                tgt.train.len()
            )));
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Arm {
        Cross,
        Mono,
        All,
    }
    let mut jobs: Vec<(Arm, usize, u64)> = Vec::new();
    for &seed in &train_cfg.seeds {
        jobs.push((Arm::All, 0, seed));
        for &s in &sorted {
            jobs.push((Arm::Cross, s, seed));
            if s >= 5 {
                // below this a 20% validation split is impossible
                jobs.push((Arm::Mono, s, seed));
            }
        }
    }

    type ArmRun = (Arm, usize, Option<f64>, RunRecord);
    let pool = run_pool(workers)?;
    let outcomes: Result<Vec<ArmRun>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(arm, size, seed)| {
                // Nested target subsample for this seed.
                let mut order: Vec<usize> = (0..tgt.train.len()).collect();
                order.shuffle(&mut substream(seed, STREAM_SUBSAMPLE));
                let subsample: Vec<Sentence> = order[..size]
                    .iter()
                    .map(|&i| tgt.train[i].clone())
                    .collect();

                let sources: Vec<(String, Vec<Sentence>)> = match arm {
                    Arm::Cross => {
                        let mut v = vec![(source.to_string(), src.train.clone())];
                        if !subsample.is_empty() {
                            v.push((target.to_string(), subsample));
                        }
                        v
                    }
                    Arm::Mono => vec![(target.to_string(), subsample)],
                    Arm::All => data
                        .iter()
                        .filter(|(_, d)| !d.train.is_empty())
                        .map(|(lang, d)| (lang.clone(), d.train.clone()))
                        .collect(),
                };
                let outcome = train(model_cfg, train_cfg, seed, &sources, embeddings)?;
                let mut record = outcome.record;
                record.target_lang = Some(target.to_string());
                let f1 = if record.failure.is_none() {
                    let report =
                        evaluate(&outcome.params, model_cfg, embeddings, target, &tgt.test)?;
                    record.test_f1 = Some(report.f1);
                    Some(report.f1)
                } else {
                    None
                };
                Ok((arm, size, f1, record))
            })
            .collect()
    });
    let outcomes = outcomes?;

    let mean_for = |arm: Arm, size: usize| -> Option<f64> {
        let scores: Vec<f64> = outcomes
            .iter()
            .filter(|(a, s, f1, _)| *a == arm && *s == size && f1.is_some())
            .map(|(_, _, f1, _)| f1.expect("filtered"))
            .collect();
        if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    };
    let all_mean = mean_for(Arm::All, 0);
    let points: Vec<CurvePoint> = sorted
        .iter()
        .map(|&s| CurvePoint {
            size: s,
            cross_lingual: mean_for(Arm::Cross, s),
            monolingual: mean_for(Arm::Mono, s),
            all_languages: all_mean,
        })
        .collect();
    Ok(CurveResult {
        source: source.to_string(),
        target: target.to_string(),
        points,
        records: outcomes.into_iter().map(|(_, _, _, r)| r).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn small_model() -> ModelConfig {
        ModelConfig {
            layers: 2,
            kernel_width: 3,
            conv_dim: 24,
            dense_dim: 24,
            dropout_embed: 0.0,
            dropout_hidden: 0.0,
            l1_lambda: 1e-6,
            activation: "relu".into(),
        }
    }

    fn fast_train(seeds: Vec<u64>) -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            max_epochs: 40,
            patience: 5,
            val_fraction: 0.2,
            seeds,
            adam: AdamConfig {
                alpha: 0.01,
                ..AdamConfig::default()
            },
        }
    }

    fn synth_setup(n: usize) -> (EmbeddingSet, Vec<Sentence>) {
        let latent = synth::latent_vectors(16, 99);
        let table = synth::make_table("aa", "aa", &latent, None);
        let mut set = EmbeddingSet::new();
        set.insert(table).unwrap();
        (set, synth::make_corpus("aa", "aa", n, 5))
    }

    #[test]
    fn split_is_exact_deterministic_partition() {
        let (train, val) = split_train_val(100, 0.2, 42).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(val.len(), 20);
        let (train2, val2) = split_train_val(100, 0.2, 42).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (train3, _) = split_train_val(100, 0.2, 43).unwrap();
        assert_ne!(train, train3);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        assert!(split_train_val(4, 0.2, 1).is_err());
        assert!(split_train_val(100, 0.0, 1).is_err());
        assert!(split_train_val(5, 0.001, 1).is_err());
    }

    #[test]
    fn overfits_a_templated_corpus() {
        let (set, corpus) = synth_setup(20);
        let sources = vec![("aa".to_string(), corpus)];
        let outcome = train(&small_model(), &fast_train(vec![1]), 1, &sources, &set).unwrap();
        assert!(outcome.record.failure.is_none());
        assert!(
            outcome.record.best_val_f1 >= 0.95,
            "val F1 {} after {} epochs",
            outcome.record.best_val_f1,
            outcome.record.epochs_trained
        );
    }

    #[test]
    fn patience_zero_trains_exactly_one_epoch() {
        let (set, corpus) = synth_setup(20);
        let sources = vec![("aa".to_string(), corpus)];
        let cfg = TrainConfig {
            patience: 0,
            ..fast_train(vec![1])
        };
        let outcome = train(&small_model(), &cfg, 1, &sources, &set).unwrap();
        assert_eq!(outcome.record.epochs_trained, 1);
    }

    #[test]
    fn identical_seed_and_data_reproduce_the_run() {
        let (set, corpus) = synth_setup(24);
        let sources = vec![("aa".to_string(), corpus)];
        let cfg = TrainConfig {
            max_epochs: 6,
            ..fast_train(vec![3])
        };
        let a = train(&small_model(), &cfg, 3, &sources, &set).unwrap();
        let b = train(&small_model(), &cfg, 3, &sources, &set).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn source_listing_order_does_not_matter() {
        let latent = synth::latent_vectors(16, 99);
        let mut set = EmbeddingSet::new();
        set.insert(synth::make_table("aa", "aa", &latent, None))
            .unwrap();
        set.insert(synth::make_table("bb", "bb", &latent, None))
            .unwrap();
        let ca = synth::make_corpus("aa", "aa", 12, 5);
        let cb = synth::make_corpus("bb", "bb", 12, 6);
        let cfg = TrainConfig {
            max_epochs: 4,
            patience: 4,
            ..fast_train(vec![2])
        };
        let fwd = vec![
            ("aa".to_string(), ca.clone()),
            ("bb".to_string(), cb.clone()),
        ];
        let rev = vec![("bb".to_string(), cb), ("aa".to_string(), ca)];
        let a = train(&small_model(), &cfg, 2, &fwd, &set).unwrap();
        let b = train(&small_model(), &cfg, 2, &rev, &set).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn early_stopping_returns_best_observed_f1() {
        let (set, corpus) = synth_setup(30);
        let sources = vec![("aa".to_string(), corpus)];
        let outcome = train(&small_model(), &fast_train(vec![4]), 4, &sources, &set).unwrap();
        let best_seen = outcome
            .record
            .history
            .iter()
            .map(|e| e.val_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((outcome.record.best_val_f1 - best_seen).abs() < 1e-12);
    }

    #[test]
    fn training_loss_is_nonincreasing_early_without_dropout() {
        let (set, corpus) = synth_setup(24);
        let sources = vec![("aa".to_string(), corpus)];
        let cfg = TrainConfig {
            max_epochs: 6,
            patience: 6,
            ..fast_train(vec![7])
        };
        let outcome = train(&small_model(), &cfg, 7, &sources, &set).unwrap();
        let losses: Vec<f64> = outcome
            .record
            .history
            .iter()
            .map(|e| e.train_loss)
            .collect();
        assert!(losses.len() >= 5);
        for w in losses[..5].windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss increased early: {losses:?}");
        }
    }

    #[test]
    fn embedding_tables_stay_frozen_through_training() {
        let (set, corpus) = synth_setup(20);
        let before = set.get("aa").unwrap().vectors().clone();
        let sources = vec![("aa".to_string(), corpus)];
        let cfg = TrainConfig {
            max_epochs: 5,
            patience: 5,
            ..fast_train(vec![1])
        };
        train(&small_model(), &cfg, 1, &sources, &set).unwrap();
        assert_eq!(set.get("aa").unwrap().vectors(), &before);
    }

    #[test]
    fn divergence_is_recorded_not_raised() {
        let (set, corpus) = synth_setup(20);
        let sources = vec![("aa".to_string(), corpus)];
        let cfg = TrainConfig {
            adam: AdamConfig {
                alpha: 1e120,
                ..AdamConfig::default()
            },
            ..fast_train(vec![1])
        };
        let outcome = train(&small_model(), &cfg, 1, &sources, &set).unwrap();
        assert!(
            outcome.record.failure.is_some(),
            "expected recorded divergence"
        );
    }

    #[test]
    fn twin_language_grid_is_near_symmetric() {
        // Identity alignment (same latent space), identical data
        // distribution: off-diagonal cells must be close to the diagonal.
        let latent = synth::latent_vectors(16, 99);
        let mut set = EmbeddingSet::new();
        set.insert(synth::make_table("aa", "aa", &latent, None))
            .unwrap();
        set.insert(synth::make_table("bb", "bb", &latent, None))
            .unwrap();
        let mut data = BTreeMap::new();
        data.insert(
            "aa".to_string(),
            LanguageData {
                train: synth::make_corpus("aa", "aa", 60, 1),
                test: synth::make_corpus("aa", "aa", 40, 2),
            },
        );
        data.insert(
            "bb".to_string(),
            LanguageData {
                train: synth::make_corpus("bb", "bb", 60, 3),
                test: synth::make_corpus("bb", "bb", 40, 4),
            },
        );
        let grid = zero_shot_grid(&small_model(), &fast_train(vec![1, 2]), &data, &set, 2).unwrap();
        let aa = grid.cell("aa", "aa").unwrap().mean_f1;
        let ab = grid.cell("aa", "bb").unwrap().mean_f1;
        let bb = grid.cell("bb", "bb").unwrap().mean_f1;
        let ba = grid.cell("bb", "aa").unwrap().mean_f1;
        assert!(aa > 0.8, "diagonal aa {aa}");
        assert!(bb > 0.8, "diagonal bb {bb}");
        assert!((aa - ab).abs() < 0.15, "aa {aa} vs ab {ab}");
        assert!((bb - ba).abs() < 0.15, "bb {bb} vs ba {ba}");
        // grid emits one record per (source, seed, target)
        assert_eq!(grid.records.len(), 2 * 2 * 2);
        let csv = grid.to_csv();
        assert!(csv.starts_with("source\\target,aa,bb\n"));
    }

    #[test]
    fn two_language_loo_reduces_to_single_source() {
        let latent = synth::latent_vectors(16, 99);
        let mut set = EmbeddingSet::new();
        set.insert(synth::make_table("aa", "aa", &latent, None))
            .unwrap();
        set.insert(synth::make_table("bb", "bb", &latent, None))
            .unwrap();
        let mut data = BTreeMap::new();
        data.insert(
            "aa".to_string(),
            LanguageData {
                train: synth::make_corpus("aa", "aa", 40, 1),
                test: synth::make_corpus("aa", "aa", 30, 2),
            },
        );
        data.insert(
            "bb".to_string(),
            LanguageData {
                train: synth::make_corpus("bb", "bb", 40, 3),
                test: synth::make_corpus("bb", "bb", 30, 4),
            },
        );
        let cfg = fast_train(vec![5]);
        let loo = leave_one_out(&small_model(), &cfg, &data, &set, 2).unwrap();
        // With two languages, leaving one out means training on the other.
        let grid = zero_shot_grid(&small_model(), &cfg, &data, &set, 2).unwrap();
        let loo_bb = loo.mean_f1[loo.targets.iter().position(|t| t == "bb").unwrap()].unwrap();
        let grid_ab = grid.cell("aa", "bb").unwrap().mean_f1;
        assert!((loo_bb - grid_ab).abs() < 1e-12);

        // Grid results are exact functions of (data, seeds, config).
        let again = zero_shot_grid(&small_model(), &cfg, &data, &set, 2).unwrap();
        assert_eq!(
            serde_json::to_string(&grid).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn missing_resources_skip_cells_with_markers() {
        let latent = synth::latent_vectors(16, 99);
        let mut set = EmbeddingSet::new();
        set.insert(synth::make_table("aa", "aa", &latent, None))
            .unwrap();
        set.insert(synth::make_table("bb", "bb", &latent, None))
            .unwrap();
        let mut data = BTreeMap::new();
        data.insert(
            "aa".to_string(),
            LanguageData {
                train: synth::make_corpus("aa", "aa", 30, 1),
                test: synth::make_corpus("aa", "aa", 20, 2),
            },
        );
        // bb has test data only: it can be a target but never a source.
        data.insert(
            "bb".to_string(),
            LanguageData {
                train: vec![],
                test: synth::make_corpus("bb", "bb", 20, 4),
            },
        );
        let grid = zero_shot_grid(&small_model(), &fast_train(vec![1]), &data, &set, 2).unwrap();
        assert!(grid.cell("aa", "aa").is_some());
        assert!(grid.cell("aa", "bb").is_some());
        assert!(grid.cell("bb", "aa").is_none());
        assert!(grid.cell("bb", "bb").is_none());
        // Skipped cells stay empty in the CSV.
        let row = grid.to_csv().lines().last().unwrap().to_string();
        assert_eq!(row, "bb,,");
    }

    #[test]
    fn learning_curve_runs_and_zero_size_matches_zero_shot() {
        let latent = synth::latent_vectors(16, 99);
        let mut set = EmbeddingSet::new();
        set.insert(synth::make_table("aa", "aa", &latent, None))
            .unwrap();
        set.insert(synth::make_table("bb", "bb", &latent, None))
            .unwrap();
        let mut data = BTreeMap::new();
        data.insert(
            "aa".to_string(),
            LanguageData {
                train: synth::make_corpus("aa", "aa", 40, 1),
                test: synth::make_corpus("aa", "aa", 20, 2),
            },
        );
        data.insert(
            "bb".to_string(),
            LanguageData {
                train: synth::make_corpus("bb", "bb", 30, 3),
                test: synth::make_corpus("bb", "bb", 20, 4),
            },
        );
        let cfg = fast_train(vec![6]);
        let curve =
            learning_curve(&small_model(), &cfg, "aa", "bb", &[0, 10], &data, &set, 2).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!(curve.points[0].size, 0);
        assert!(
            curve.points[0].monolingual.is_none(),
            "no mono arm at size 0"
        );
        assert!(curve.points[0].cross_lingual.is_some());
        assert!(curve.points[0].all_languages.is_some());

        // size 0 cross-lingual arm == plain zero-shot training on the source
        let grid = zero_shot_grid(&small_model(), &cfg, &data, &set, 2).unwrap();
        let zs = grid.cell("aa", "bb").unwrap().mean_f1;
        assert!((curve.points[0].cross_lingual.unwrap() - zs).abs() < 1e-12);

        // oversized request is a config error
        assert!(learning_curve(&small_model(), &cfg, "aa", "bb", &[100], &data, &set, 1).is_err());
    }
}
