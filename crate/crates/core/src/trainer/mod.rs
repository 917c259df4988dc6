//! Optimization of all three model variants: Adam with global-norm
//! clipping, a length curriculum, per-epoch validation and best-checkpoint
//! selection.

mod adam;
mod config;
mod objective;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::chart::Sentence;
use crate::corpus::Vocab;
use crate::diffmath::{seeded_rng, SeededRng, Tape};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::posterior::standard_noise;

pub use adam::{adam_step, clip_global_norm, global_norm, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use objective::{batch_objectives, elbo, elbo_from_posterior, neural_objective, ElboTerms};

/// Consecutive non-finite batches tolerated before training aborts.
pub const MAX_CONSECUTIVE_SKIPS: usize = 50;

const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const VALID_STREAM: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}

/// Training and validation sentences over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct TrainingCorpus {
    pub vocab: Vocab,
    pub train: Vec<Sentence>,
    pub valid: Vec<Sentence>,
}

/// Summary of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub max_len: usize,
    pub num_sentences: usize,
    /// Mean per-sentence log-likelihood (or ELBO) over trained batches.
    pub train_objective: f64,
    pub valid_perplexity: f64,
    pub skipped_batches: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation perplexity.
    pub model: Model,
    pub best_epoch: Option<usize>,
    pub epochs: Vec<EpochRecord>,
    /// Training-sentence indices used in each epoch, sorted.
    pub visited: Vec<Vec<usize>>,
}

impl TrainOutcome {
    /// Tab-separated log: header, then one line per epoch.
    pub fn log_tsv(&self) -> String {
        let mut out = String::from("epoch\tmax_len\ttrain_objective\tvalid_perplexity\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}",
                r.epoch, r.max_len, r.train_objective, r.valid_perplexity
            );
        }
        out
    }
}

/// Groups same-length sentences into batches of at most `batch_size`, then
/// shuffles the batch order. Sentence order within a length is shuffled too.
pub fn make_batches(lengths: &[(usize, usize)], batch_size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut order: Vec<(usize, usize)> = lengths.to_vec();
    order.shuffle(rng);
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, len) in order {
        by_len.entry(len).or_default().push(idx);
    }
    let mut batches: Vec<Vec<usize>> = by_len
        .into_values()
        .flat_map(|ids| ids.chunks(batch_size).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect();
    batches.shuffle(rng);
    batches
}

/// Validation perplexity: exact for scalar and neural models, and
/// `exp(−Σ ELBO / Σ tokens)` for compound models, using noise from a fixed
/// stream so epochs are compared on the same draws.
pub fn validation_perplexity(model: &Model, sentences: &[Sentence], seed: u64) -> Result<f64> {
    if sentences.is_empty() {
        return Ok(f64::NAN);
    }
    let mut rng = stream_rng(seed, VALID_STREAM);
    let z_dim = model.spec().z_dim;
    let mut total = 0.0;
    let mut tokens = 0usize;
    for s in sentences {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let objs = batch_objectives(&mut tape, model, &bound, &[s], &mut || standard_noise(&mut rng, z_dim))?;
        total += tape.value(objs[0]).item();
        tokens += s.len();
    }
    Ok((-total / tokens as f64).exp())
}

fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. })
}

/// Trains a freshly initialized model.
pub fn train(config: &TrainConfig, corpus: &TrainingCorpus) -> Result<TrainOutcome> {
    config.validate()?;
    let model = Model::new(config.architecture(), corpus.vocab.clone(), config.seed)?;
    train_model(config, model, corpus)
}

/// Trains `model` in place of a fresh initialization.
pub fn train_model(config: &TrainConfig, mut model: Model, corpus: &TrainingCorpus) -> Result<TrainOutcome> {
    config.validate()?;
    let vocab_size = model.vocab().len();
    for s in corpus.train.iter().chain(&corpus.valid) {
        s.validate(vocab_size)?;
    }
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        eps: config.adam_eps,
        clip_norm: config.grad_clip_norm,
    };
    let mut state = AdamState::new(model.params().tensors());
    let mut shuffle_rng = stream_rng(config.seed, SHUFFLE_STREAM);
    let mut noise_rng = stream_rng(config.seed, NOISE_STREAM);
    let z_dim = model.spec().z_dim;

    let mut best: Option<(f64, usize, crate::diffmath::ParamStore)> = None;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut visited = Vec::with_capacity(config.epochs);
    let mut consecutive_skips = 0usize;

    for epoch in 1..=config.epochs {
        let max_len = config.curriculum_max_len(epoch);
        let eligible: Vec<(usize, usize)> = corpus
            .train
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() <= max_len)
            .map(|(i, s)| (i, s.len()))
            .collect();
        if eligible.is_empty() {
            log::warn!("epoch {epoch}: no training sentence of length <= {max_len}, skipped");
            visited.push(Vec::new());
            epochs.push(EpochRecord {
                epoch,
                max_len,
                num_sentences: 0,
                train_objective: f64::NAN,
                valid_perplexity: f64::NAN,
                skipped_batches: 0,
            });
            continue;
        }

        let mut seen = Vec::with_capacity(eligible.len());
        let mut objective_sum = 0.0;
        let mut trained = 0usize;
        let mut skipped = 0usize;
        for batch in make_batches(&eligible, config.batch_size, &mut shuffle_rng) {
            seen.extend_from_slice(&batch);
            let sentences: Vec<&Sentence> = batch.iter().map(|&i| &corpus.train[i]).collect();
            match train_batch(&mut model, &sentences, &mut state, &adam, &mut || {
                standard_noise(&mut noise_rng, z_dim)
            }) {
                Ok(sum) => {
                    consecutive_skips = 0;
                    objective_sum += sum;
                    trained += sentences.len();
                }
                Err(e) if is_skippable(&e) => {
                    log::warn!("epoch {epoch}: skipped batch ({e})");
                    skipped += 1;
                    consecutive_skips += 1;
                    if consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
                        return Err(Error::TrainingDiverged(consecutive_skips));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        seen.sort_unstable();
        visited.push(seen);

        let ppl = validation_perplexity(&model, &corpus.valid, config.seed)?;
        let record = EpochRecord {
            epoch,
            max_len,
            num_sentences: eligible.len(),
            train_objective: objective_sum / trained.max(1) as f64,
            valid_perplexity: ppl,
            skipped_batches: skipped,
        };
        log::info!(
            "epoch {epoch}: max_len {max_len}, {} sentences, objective {:.4}, valid ppl {:.4}",
            record.num_sentences,
            record.train_objective,
            record.valid_perplexity
        );
        epochs.push(record);

        let improved = match &best {
            _ if ppl.is_nan() => corpus.valid.is_empty(),
            None => true,
            Some((b, _, _)) => ppl < *b,
        };
        if improved {
            best = Some((ppl, epoch, model.params().clone()));
            if let Some(path) = &config.checkpoint {
                model.save(path)?;
            }
        }
    }

    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, params)) = best {
        *model.params_mut() = params;
    }
    Ok(TrainOutcome {
        model,
        best_epoch,
        epochs,
        visited,
    })
}

/// One optimizer step on the mean negative objective of `sentences`.
/// Returns the summed per-sentence objective.
pub fn train_batch(
    model: &mut Model,
    sentences: &[&Sentence],
    state: &mut AdamState,
    adam: &AdamConfig,
    noise: &mut dyn FnMut() -> Vec<f64>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let objs = batch_objectives(&mut tape, model, &bound, sentences, noise)?;
    let stacked = tape.concat_rows(&objs)?;
    let total = tape.sum(stacked);
    let sum = tape.value(total).item();
    if !sum.is_finite() {
        return Err(Error::NonFinite {
            what: "batch objective",
            index: 0,
        });
    }
    let loss = tape.scale(total, -1.0 / sentences.len() as f64);
    let grads = tape.backward(loss)?;
    let mut grads = model.params().collect_grads(&grads, &bound);
    adam_step(model.params_mut().tensors_mut(), &mut grads, state, adam)?;
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::grammar::ModelKind;

    fn corpus(n: usize, max_len: usize, seed: u64) -> TrainingCorpus {
        let mut rng = seeded_rng(seed);
        let vocab = Vocab::build(["a", "b", "c", "d"], 10);
        let mut sent = || Sentence::new((0..rng.random_range(2..=max_len)).map(|_| rng.random_range(1..5)).collect());
        let train = (0..n).map(|_| sent()).collect();
        let valid = (0..5).map(|_| sent()).collect();
        TrainingCorpus { vocab, train, valid }
    }

    fn small_config(kind: ModelKind) -> TrainConfig {
        TrainConfig {
            model: kind,
            epochs: 2,
            num_nonterminals: 2,
            num_preterminals: 2,
            symbol_dim: 4,
            z_dim: 2,
            encoder_hidden: 3,
            learning_rate: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batches_partition_and_share_lengths() {
        let lengths: Vec<(usize, usize)> = (0..23).map(|i| (i, 2 + i % 4)).collect();
        let batches = make_batches(&lengths, 4, &mut seeded_rng(1));
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for b in &batches {
            assert!(b.len() <= 4);
            assert!(b.iter().all(|&i| lengths[i].1 == lengths[b[0]].1));
        }
        assert_eq!(batches, make_batches(&lengths, 4, &mut seeded_rng(1)));
    }

    #[test]
    fn curriculum_filters_by_epoch() {
        let mut c = corpus(6, 4, 2);
        c.train.push(Sentence::new(vec![1; 31]));
        let long = c.train.len() - 1;
        let config = TrainConfig {
            epochs: 2,
            ..small_config(ModelKind::Neural)
        };
        let out = train(&config, &c).unwrap();
        assert!(!out.visited[0].contains(&long));
        assert!(out.visited[1].contains(&long));
        assert_eq!(out.visited[0], (0..long).collect::<Vec<_>>());
        assert_eq!(out.epochs[0].max_len, 30);
        assert_eq!(out.epochs[1].max_len, 31);
    }

    #[test]
    fn empty_curriculum_epoch_is_skipped() {
        let mut c = corpus(3, 4, 3);
        c.train = vec![Sentence::new(vec![1; 5])];
        let config = TrainConfig {
            curriculum_start_len: 4,
            ..small_config(ModelKind::Neural)
        };
        let out = train(&config, &c).unwrap();
        assert!(out.visited[0].is_empty());
        assert!(out.epochs[0].train_objective.is_nan());
        assert_eq!(out.visited[1], vec![0]);
    }

    #[test]
    fn best_checkpoint_has_minimum_perplexity() {
        let c = corpus(12, 5, 4);
        let config = TrainConfig {
            epochs: 4,
            ..small_config(ModelKind::Neural)
        };
        let out = train(&config, &c).unwrap();
        let min = out
            .epochs
            .iter()
            .map(|r| r.valid_perplexity)
            .fold(f64::INFINITY, f64::min);
        let best = out.best_epoch.unwrap();
        assert_eq!(out.epochs[best - 1].valid_perplexity, min);
        assert_eq!(validation_perplexity(&out.model, &c.valid, config.seed).unwrap(), min);
    }

    #[test]
    fn runs_are_reproducible() {
        for kind in [ModelKind::Scalar, ModelKind::Neural, ModelKind::Compound] {
            let c = corpus(10, 5, 5);
            let config = small_config(kind);
            let a = train(&config, &c).unwrap();
            let b = train(&config, &c).unwrap();
            assert_eq!(a.model.to_bytes().unwrap(), b.model.to_bytes().unwrap());
            assert_eq!(a.log_tsv(), b.log_tsv());
            assert!(a.epochs.iter().all(|r| r.train_objective.is_finite()));
        }
    }

    #[test]
    fn log_has_one_line_per_epoch() {
        let c = corpus(4, 4, 6);
        let out = train(&small_config(ModelKind::Scalar), &c).unwrap();
        let log = out.log_tsv();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch\tmax_len\ttrain_objective\tvalid_perplexity");
        assert!(lines[1].starts_with("1\t30\t"));
        assert_eq!(lines[1].split('\t').count(), 4);
    }

    #[test]
    fn invalid_sentences_rejected_up_front() {
        let mut c = corpus(3, 4, 7);
        c.train.push(Sentence::new(vec![9, 1]));
        assert!(matches!(
            train(&small_config(ModelKind::Neural), &c),
            Err(Error::TokenOutOfRange { id: 9, .. })
        ));
    }

    #[test]
    fn neural_objective_increases_under_full_batch_adam() {
        let c = corpus(50, 6, 8);
        let config = small_config(ModelKind::Neural);
        let mut model = Model::new(config.architecture(), c.vocab.clone(), 8).unwrap();
        let adam = AdamConfig {
            learning_rate: 0.01,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            clip_norm: config.grad_clip_norm,
        };
        let mut state = AdamState::new(model.params().tensors());
        let all: Vec<&Sentence> = c.train.iter().collect();
        let mut values = Vec::new();
        for _ in 0..21 {
            values.push(train_batch(&mut model, &all, &mut state, &adam, &mut Vec::new).unwrap());
        }
        let drops = values.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(drops <= 2, "{values:?}");
        assert!(values[20] > values[0]);
    }
}
