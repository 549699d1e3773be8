//! Frame-wise and sentence-wise accuracy and multi-seed aggregation.
//!
//! A predicted sentence is read off the per-frame argmax track by collapsing
//! runs of identical tokens and dropping "n/a"; it counts as correct only if it
//! is exactly the true verb, adjective and noun in order.

use rayon::prelude::*;
use thiserror::Error;

use crate::datagen::Episode;
use crate::language::{Sentence, Token, WordTrack, NA};
use crate::model::{argmax, episode_targets, forward_eval, sequence_loss_values, InputMode, ModelError, ModelParams};

/// Version tag of the sentence read-off rule, echoed in reports.
pub const EXTRACTION_RULE: &str = "collapse-repeats/drop-na/exact v1";

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("track lengths differ: {pred} predicted vs {target} target frames")]
    Length { pred: usize, target: usize },
    #[error("no values to aggregate")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn prediction_track(logits: &[Vec<f64>]) -> WordTrack {
    WordTrack(logits.iter().map(|row| Token(argmax(row) as u8)).collect())
}

pub fn frame_accuracy(pred: &WordTrack, target: &WordTrack) -> Result<f64, MetricError> {
    if pred.len() != target.len() {
        return Err(MetricError::Length { pred: pred.len(), target: target.len() });
    }
    if pred.is_empty() {
        return Ok(1.0);
    }
    let hits = pred.0.iter().zip(&target.0).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn extract_sentence(pred: &WordTrack) -> Vec<Token> {
    let mut out: Vec<Token> = Vec::new();
    let mut prev: Option<Token> = None;
    for &t in &pred.0 {
        if prev != Some(t) && t != NA {
            out.push(t);
        }
        prev = Some(t);
    }
    out
}

pub fn sentence_correct(pred: &WordTrack, truth: &Sentence) -> bool {
    extract_sentence(pred) == truth.tokens()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeScore {
    pub frame_accuracy: f64,
    pub sentence_correct: bool,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub frame_accuracy: f64,
    pub sentence_accuracy: f64,
    pub loss: f64,
}

impl EvalSummary {
    /// Means over per-episode scores, summed in episode order.
    pub fn from_scores(scores: &[EpisodeScore]) -> Self {
        let n = scores.len().max(1) as f64;
        Self {
            episodes: scores.len(),
            frame_accuracy: scores.iter().map(|s| s.frame_accuracy).sum::<f64>() / n,
            sentence_accuracy: scores.iter().filter(|s| s.sentence_correct).count() as f64 / n,
            loss: scores.iter().map(|s| s.loss).sum::<f64>() / n,
        }
    }
}

/// Scores one episode in generation mode (scrubbed language input, every mask
/// neuron on, no dropout) against its full target track.
pub fn score_episode(episode: &Episode, params: &ModelParams) -> Result<EpisodeScore, MetricError> {
    let logits = forward_eval(episode, params, InputMode::Generate)?;
    let pred = prediction_track(&logits);
    let target = episode.word_track();
    let targets: Vec<usize> = target.0.iter().map(|t| t.index()).collect();
    Ok(EpisodeScore {
        frame_accuracy: frame_accuracy(&pred, &target)?,
        sentence_correct: sentence_correct(&pred, &episode.sentence()),
        loss: sequence_loss_values(&logits, &targets)?,
    })
}

/// Scores every episode, in parallel, with an order-stable reduction.
pub fn evaluate(episodes: &[Episode], params: &ModelParams) -> Result<EvalSummary, MetricError> {
    let scores: Vec<EpisodeScore> =
        episodes.par_iter().map(|ep| score_episode(ep, params)).collect::<Result<_, _>>()?;
    Ok(EvalSummary::from_scores(&scores))
}

pub fn sentence_accuracy(episodes: &[Episode], params: &ModelParams) -> Result<f64, MetricError> {
    Ok(evaluate(episodes, params)?.sentence_accuracy)
}

/// Sentence accuracy of precomputed prediction tracks.
pub fn sentence_accuracy_of_tracks(preds: &[WordTrack], truths: &[Sentence]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(truths).filter(|(p, t)| sentence_correct(p, t)).count();
    hits as f64 / preds.len() as f64
}

/// Recorded-mode loss on the episode's own (masked) targets; used by training.
pub fn recorded_loss(episode: &Episode, params: &ModelParams) -> Result<f64, MetricError> {
    let logits = forward_eval(episode, params, InputMode::Recorded)?;
    Ok(sequence_loss_values(&logits, &episode_targets(episode))?)
}

/// Mean and population standard deviation of per-seed accuracies, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Aggregate {
    /// `mean (std)` with two decimals.
    pub fn display(&self) -> String {
        format!("{:.2} ({:.2})", self.mean, self.std)
    }
}

fn round2(v: f64) -> f64 {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// `fractions` are per-seed accuracies in [0, 1].
pub fn aggregate_runs(fractions: &[f64]) -> Result<Aggregate, MetricError> {
    if fractions.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = fractions.len() as f64;
    let pct: Vec<f64> = fractions.iter().map(|f| f * 100.0).collect();
    let mean = pct.iter().sum::<f64>() / n;
    let var = pct.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    Ok(Aggregate { mean: round2(mean), std: round2(var.sqrt()), n: fractions.len() })
}
