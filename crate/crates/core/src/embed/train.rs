//! Skip-gram trainer with discounted pair weights.
//!
//! Every `(center, context)` pair within the window is visited once per
//! epoch in shuffled order, with `k` negatives drawn from the unigram^¾
//! distribution of corpus tokens. The pair weight scales the whole per-pair
//! loss, negatives included. The step size decays linearly from
//! `learning_rate` to `min_learning_rate` over all pair updates.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::config::{EmbedConfig, Objective, Workers};
use super::loss::{dot, log_sigmoid, sigmoid};
use super::table::{EmbeddingTable, Vocab, VocabKey};
use crate::corpus::{pair_positions, Walk};
use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};

#[derive(Clone, Copy, Debug)]
struct Pair {
    center: u32,
    context: u32,
    /// Distance minus one, the index into the weight table.
    gap: u16,
}

fn encode(walks: &[Walk], table: &EmbeddingTable) -> Result<Vec<Vec<u32>>> {
    walks
        .iter()
        .map(|w| {
            w.tokens
                .iter()
                .map(|t| {
                    table
                        .row_of(VocabKey::of(*t, table.token_mode()))
                        .map(|r| r as u32)
                        .ok_or(Error::MissingFeature {
                            state: t.state,
                            action: t.action,
                        })
                })
                .collect()
        })
        .collect()
}

fn pairs_of(sequences: &[Vec<u32>], window: usize) -> Vec<Pair> {
    sequences
        .iter()
        .flat_map(|seq| {
            pair_positions(seq.len(), window).map(move |(i, j)| Pair {
                center: seq[i],
                context: seq[j],
                gap: (j - i - 1) as u16,
            })
        })
        .collect()
}

fn noise_distribution(counts: &[u64]) -> WeightedIndex<f64> {
    WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .expect("vocabulary is non-empty")
}

/// Vocabulary of `walks` with input vectors uniform in `[−0.5/d, 0.5/d]` and
/// zero output vectors.
pub fn initial_table(walks: &[Walk], cfg: &EmbedConfig) -> Result<EmbeddingTable> {
    cfg.validate()?;
    let vocab = Vocab::from_walks(walks, cfg.tokens);
    if vocab.is_empty() {
        return Err(Error::input("empty vocabulary: the corpus has no tokens"));
    }
    let d = cfg.dim;
    let mut rng = rng::stream(cfg.seed, streams::TRAIN);
    let half = 0.5 / d as f64;
    let input = (0..vocab.len() * d)
        .map(|_| rng.random_range(-half..half))
        .collect();
    let output = vec![0.0; vocab.len() * d];
    Ok(EmbeddingTable::new(
        d, cfg.tokens, vocab.keys, input, output,
    ))
}

pub fn train_embeddings(walks: &[Walk], cfg: &EmbedConfig) -> Result<EmbeddingTable> {
    train_embeddings_with(walks, cfg, |_, _| {})
}

/// [`train_embeddings`], calling `on_epoch(epoch, table)` after each epoch.
pub fn train_embeddings_with(
    walks: &[Walk],
    cfg: &EmbedConfig,
    mut on_epoch: impl FnMut(usize, &EmbeddingTable),
) -> Result<EmbeddingTable> {
    let mut table = initial_table(walks, cfg)?;
    if cfg.epochs == 0 {
        return Ok(table);
    }
    let vocab = Vocab::from_walks(walks, cfg.tokens);
    let sequences = encode(walks, &table)?;
    let mut pairs = pairs_of(&sequences, cfg.window);
    if pairs.is_empty() {
        return Ok(table);
    }
    let weights = cfg.distance_weights();
    let noise = noise_distribution(&vocab.counts);
    let schedule = Schedule {
        start: cfg.learning_rate,
        end: cfg.min_learning_rate,
        total: (cfg.epochs * pairs.len()) as f64,
    };
    let mut rng = rng::stream(cfg.seed, streams::TRAIN + 1);
    let mut scratch = Scratch::new(cfg, table.len());
    for epoch in 0..cfg.epochs {
        pairs.shuffle(&mut rng::stream(cfg.seed, streams::SHUFFLE + epoch as u64));
        let offset = epoch * pairs.len();
        match cfg.workers {
            Workers::Single => {
                let EmbeddingTable { input, output, .. } = &mut table;
                for (i, pair) in pairs.iter().enumerate() {
                    let lr = schedule.at(offset + i);
                    let update = Update {
                        center: pair.center as usize,
                        context: pair.context as usize,
                        weight: weights[pair.gap as usize],
                        lr,
                    };
                    if !apply(
                        cfg,
                        input.as_mut_slice(),
                        output.as_mut_slice(),
                        &update,
                        &noise,
                        &mut rng,
                        &mut scratch,
                    ) {
                        return Err(Error::Divergence { update: offset + i });
                    }
                }
            }
            Workers::Parallel(n) => {
                train_epoch_parallel(
                    &mut table, cfg, &pairs, &weights, &noise, &schedule, epoch, n,
                )?;
            }
        }
        on_epoch(epoch, &table);
    }
    if !table.is_finite() {
        return Err(Error::Divergence {
            update: cfg.epochs * pairs.len(),
        });
    }
    Ok(table)
}

struct Schedule {
    start: f64,
    end: f64,
    total: f64,
}

impl Schedule {
    fn at(&self, update: usize) -> f64 {
        let frac = (update as f64 / self.total).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

struct Update {
    center: usize,
    context: usize,
    weight: f64,
    lr: f64,
}

struct Scratch {
    grad: Vec<f64>,
    negatives: Vec<usize>,
    scores: Vec<f64>,
}

impl Scratch {
    fn new(cfg: &EmbedConfig, vocab: usize) -> Self {
        Scratch {
            grad: vec![0.0; cfg.dim],
            negatives: vec![0; cfg.negatives],
            scores: vec![
                0.0;
                if cfg.objective == Objective::Softmax {
                    vocab
                } else {
                    0
                }
            ],
        }
    }
}

/// Parameter storage the update rule can run against: plain slices in
/// single-worker mode, relaxed atomics when several workers share the table.
trait Store {
    fn get(&self, i: usize) -> f64;
    fn add(&mut self, i: usize, delta: f64);
}

impl Store for [f64] {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        self[i]
    }

    #[inline]
    fn add(&mut self, i: usize, delta: f64) {
        self[i] += delta;
    }
}

#[derive(Clone, Copy)]
struct Shared<'a>(&'a [AtomicU64]);

impl Store for Shared<'_> {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn add(&mut self, i: usize, delta: f64) {
        let v = self.get(i) + delta;
        self.0[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

/// One SGD step on a pair. Returns false on a non-finite score.
fn apply<S: Store + ?Sized>(
    cfg: &EmbedConfig,
    input: &mut S,
    output: &mut S,
    u: &Update,
    noise: &WeightedIndex<f64>,
    rng: &mut Rng,
    scratch: &mut Scratch,
) -> bool {
    let d = cfg.dim;
    let v = u.center * d;
    scratch.grad.fill(0.0);
    match cfg.objective {
        Objective::NegativeSampling => {
            for n in scratch.negatives.iter_mut() {
                *n = noise.sample(rng);
            }
            let targets = std::iter::once((u.context, 1.0))
                .chain(scratch.negatives.iter().map(|&n| (n, 0.0)));
            for (target, label) in targets {
                let o = target * d;
                let score: f64 = (0..d).map(|k| input.get(v + k) * output.get(o + k)).sum();
                if !score.is_finite() {
                    return false;
                }
                // Negative gradient of the loss with respect to the score.
                let g = u.weight * (label - sigmoid(score));
                for k in 0..d {
                    scratch.grad[k] += g * output.get(o + k);
                    output.add(o + k, u.lr * g * input.get(v + k));
                }
            }
        }
        Objective::Softmax => {
            let rows = scratch.scores.len();
            for r in 0..rows {
                let o = r * d;
                scratch.scores[r] = (0..d).map(|k| input.get(v + k) * output.get(o + k)).sum();
            }
            let max = scratch
                .scores
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return false;
            }
            let z: f64 = scratch.scores.iter().map(|s| (s - max).exp()).sum();
            for r in 0..rows {
                let p = (scratch.scores[r] - max).exp() / z;
                let label = if r == u.context { 1.0 } else { 0.0 };
                let g = u.weight * (label - p);
                let o = r * d;
                for k in 0..d {
                    scratch.grad[k] += g * output.get(o + k);
                    output.add(o + k, u.lr * g * input.get(v + k));
                }
            }
        }
    }
    for k in 0..d {
        input.add(v + k, u.lr * scratch.grad[k]);
    }
    true
}

#[allow(clippy::too_many_arguments)]
fn train_epoch_parallel(
    table: &mut EmbeddingTable,
    cfg: &EmbedConfig,
    pairs: &[Pair],
    weights: &[f64],
    noise: &WeightedIndex<f64>,
    schedule: &Schedule,
    epoch: usize,
    workers: usize,
) -> Result<()> {
    let to_atomic = |v: &[f64]| {
        v.iter()
            .map(|x| AtomicU64::new(x.to_bits()))
            .collect::<Vec<_>>()
    };
    let input = to_atomic(&table.input);
    let output = to_atomic(&table.output);
    let progress = AtomicUsize::new(epoch * pairs.len());
    let chunk = pairs.len().div_ceil(workers);
    let diverged = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .enumerate()
            .map(|(w, part)| {
                let (input, output, progress) = (&input, &output, &progress);
                scope.spawn(move || {
                    let mut rng =
                        rng::stream(cfg.seed, streams::TRAIN + 2 + (epoch * workers + w) as u64);
                    let mut scratch = Scratch::new(cfg, table_len(input, cfg.dim));
                    let (mut inp, mut out) = (Shared(input), Shared(output));
                    for pair in part {
                        let step = progress.fetch_add(1, Ordering::Relaxed);
                        let update = Update {
                            center: pair.center as usize,
                            context: pair.context as usize,
                            weight: weights[pair.gap as usize],
                            lr: schedule.at(step),
                        };
                        if !apply(
                            cfg,
                            &mut inp,
                            &mut out,
                            &update,
                            noise,
                            &mut rng,
                            &mut scratch,
                        ) {
                            return Some(step);
                        }
                    }
                    None
                })
            })
            .collect();
        handles
            .into_iter()
            .filter_map(|h| h.join().expect("worker panicked"))
            .min()
    });
    if let Some(update) = diverged {
        return Err(Error::Divergence { update });
    }
    table.input = input
        .into_iter()
        .map(|a| f64::from_bits(a.into_inner()))
        .collect();
    table.output = output
        .into_iter()
        .map(|a| f64::from_bits(a.into_inner()))
        .collect();
    Ok(())
}

fn table_len(values: &[AtomicU64], dim: usize) -> usize {
    values.len() / dim
}

/// Mean per-pair loss over every context pair of `walks`. Negatives are drawn
/// from a stream of `cfg.seed` dedicated to walk `i`, so the value does not
/// depend on evaluation order.
pub fn corpus_loss(walks: &[Walk], table: &EmbeddingTable, cfg: &EmbedConfig) -> Result<f64> {
    cfg.validate()?;
    if table.token_mode() != cfg.tokens || table.dim() != cfg.dim {
        return Err(Error::input("table does not match the configuration"));
    }
    let sequences = encode(walks, table)?;
    let weights = cfg.distance_weights();
    let counts = token_counts(&sequences, table.len());
    let noise = noise_distribution(&counts);
    let outputs: Vec<&[f64]> = (0..table.len()).map(|r| table.output_row(r)).collect();
    let per_walk: Vec<(f64, usize)> = sequences
        .par_iter()
        .enumerate()
        .map(|(w, seq)| {
            let mut rng = rng::stream(cfg.seed, streams::LOSS + w as u64);
            let mut sum = 0.0;
            let mut n = 0;
            for (i, j) in pair_positions(seq.len(), cfg.window) {
                let weight = weights[j - i - 1];
                let v = table.input_row(seq[i] as usize);
                let loss = match cfg.objective {
                    Objective::NegativeSampling => {
                        let pos = log_sigmoid(dot(outputs[seq[j] as usize], v));
                        let neg: f64 = (0..cfg.negatives)
                            .map(|_| log_sigmoid(-dot(outputs[noise.sample(&mut rng)], v)))
                            .sum();
                        -weight * (pos + neg)
                    }
                    Objective::Softmax => {
                        super::loss::softmax_loss(v, &outputs, seq[j] as usize, weight)
                    }
                };
                sum += loss;
                n += 1;
            }
            (sum, n)
        })
        .collect();
    let (sum, n) = per_walk
        .iter()
        .fold((0.0, 0), |(s, n), (ws, wn)| (s + ws, n + wn));
    if n == 0 {
        return Err(Error::input("corpus has no context pairs"));
    }
    let mean = sum / n as f64;
    if !mean.is_finite() {
        return Err(Error::Divergence { update: 0 });
    }
    Ok(mean)
}

fn token_counts(sequences: &[Vec<u32>], vocab: usize) -> Vec<u64> {
    let mut counts = vec![0u64; vocab];
    for &r in sequences.iter().flatten() {
        counts[r as usize] += 1;
    }
    // Rows of a loaded table may be absent from this corpus; keep them drawable.
    if counts.iter().all(|&c| c == 0) {
        counts.fill(1);
    }
    counts
}

/// Mean trained score `σ(u_c·v_t)` of pairs at each distance `1..=window`.
pub fn mean_score_by_distance(
    walks: &[Walk],
    table: &EmbeddingTable,
    window: usize,
) -> Result<Vec<f64>> {
    let sequences = encode(walks, table)?;
    let mut sums = vec![0.0; window];
    let mut counts = vec![0usize; window];
    for seq in &sequences {
        for (i, j) in pair_positions(seq.len(), window) {
            let score = sigmoid(dot(
                table.output_row(seq[j] as usize),
                table.input_row(seq[i] as usize),
            ));
            sums[j - i - 1] += score;
            counts[j - i - 1] += 1;
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect())
}
