//! LDA topic model fitted by collapsed Gibbs sampling.
//!
//! The sampler integrates out the topic–word and document–topic
//! distributions and resamples each token's topic from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + alpha) · (n_kw + beta) / (n_k + V·beta)
//! ```
//!
//! where the counts exclude the token being resampled. Point estimates
//!
//! ```text
//! phi[k][w]   = (n_kw + beta)  / (n_k + V·beta)
//! theta[d][k] = (n_dk + alpha) / (n_d + K·alpha)
//! ```
//!
//! are averaged over the sweeps after `burn_in`, one every `sample_lag`
//! sweeps. Tokens are visited document by document, each document's tokens
//! in ascending term id. All randomness comes from one ChaCha8 stream seeded
//! with `LdaConfig::seed`, so a fit is bit-reproducible.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::sig12;
use crate::rng::rng_from_seed;
use crate::textprep::{BagOfWords, Vocabulary};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopicError {
    #[error("corpus has no documents or no terms")]
    EmptyCorpus,
    #[error("document `{0}` has no tokens")]
    EmptyDocument(String),
    #[error("invalid LDA configuration: {0}")]
    InvalidConfig(String),
    #[error("topic {topic} out of range (model has {num_topics})")]
    TopicOutOfRange { topic: usize, num_topics: usize },
    #[error("model and corpus vocabularies differ")]
    VocabularyMismatch,
    #[error("model has {model} documents, corpus has {corpus}")]
    DocumentCountMismatch { model: usize, corpus: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_topics: usize,
    /// Symmetric document–topic prior.
    pub alpha: f64,
    /// Symmetric topic–word prior.
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// Defaults: alpha = 50/K, beta = 0.01, 1000 sweeps, 500 burn-in, lag 10.
    pub fn new(num_topics: usize, seed: u64) -> Self {
        Self {
            num_topics,
            alpha: 50.0 / num_topics.max(1) as f64,
            beta: 0.01,
            iterations: 1000,
            burn_in: 500,
            sample_lag: 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TopicError> {
        let bad = |m: &str| Err(TopicError::InvalidConfig(m.to_string()));
        if self.num_topics == 0 {
            return bad("num_topics must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        if self.sample_lag == 0 {
            return bad("sample_lag must be positive");
        }
        Ok(())
    }
}

/// A fitted topic model. `phi` is K×V, `theta` is D×K, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub schema_version: u32,
    pub config: LdaConfig,
    pub doc_ids: Vec<String>,
    pub vocabulary: Vocabulary,
    #[serde(with = "sig12")]
    pub phi: Vec<Vec<f64>>,
    #[serde(with = "sig12")]
    pub theta: Vec<Vec<f64>>,
    /// Topic of every token after the final sweep, in sampler visiting order.
    #[serde(skip)]
    pub assignments: Vec<Vec<usize>>,
    pub samples_averaged: usize,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn dominant_topics(&self) -> Vec<usize> {
        self.theta.iter().map(|r| dominant_topic(r)).collect()
    }

    /// Theta export: `doc_id,topic_0,...,topic_{K-1},dominant_topic`.
    pub fn write_theta_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["doc_id".to_string()];
        header.extend((0..self.num_topics()).map(|k| format!("topic_{k}")));
        header.push("dominant_topic".into());
        w.write_record(&header)?;
        for (id, row) in self.doc_ids.iter().zip(&self.theta) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(dominant_topic(row).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-sweep diagnostics recorded by [`fit_lda_traced`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepTrace {
    pub sweep: usize,
    /// Corpus log-likelihood under the sweep's point estimates.
    pub log_likelihood: f64,
    pub counts_conserved: bool,
}

struct Sampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    ndk: Vec<u32>,
    nkw: Vec<u32>,
    nk: Vec<u32>,
}

impl Sampler {
    fn new(bow: &BagOfWords, config: &LdaConfig, rng: &mut impl Rng) -> Self {
        let k = config.num_topics;
        let v = bow.vocabulary.len();
        let d = bow.num_docs();
        let words: Vec<Vec<usize>> = bow
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .flat_map(|&(t, c)| std::iter::repeat_n(t, c as usize))
                    .collect()
            })
            .collect();
        let mut s = Sampler {
            k,
            v,
            alpha: config.alpha,
            beta: config.beta,
            z: Vec::with_capacity(d),
            ndk: vec![0; d * k],
            nkw: vec![0; k * v],
            nk: vec![0; k],
            words,
        };
        for doc in 0..d {
            let zs: Vec<usize> = s.words[doc].iter().map(|_| rng.random_range(0..k)).collect();
            for (&w, &t) in s.words[doc].iter().zip(&zs) {
                s.ndk[doc * k + t] += 1;
                s.nkw[t * v + w] += 1;
                s.nk[t] += 1;
            }
            s.z.push(zs);
        }
        s
    }

    fn sweep(&mut self, rng: &mut impl Rng, weights: &mut [f64]) {
        let (k, v) = (self.k, self.v);
        let vbeta = v as f64 * self.beta;
        for doc in 0..self.words.len() {
            for i in 0..self.words[doc].len() {
                let w = self.words[doc][i];
                let old = self.z[doc][i];
                self.ndk[doc * k + old] -= 1;
                self.nkw[old * v + w] -= 1;
                self.nk[old] -= 1;

                let mut total = 0.0;
                for (t, wt) in weights.iter_mut().enumerate() {
                    *wt = (self.ndk[doc * k + t] as f64 + self.alpha)
                        * (self.nkw[t * v + w] as f64 + self.beta)
                        / (self.nk[t] as f64 + vbeta);
                    total += *wt;
                }
                let mut u = rng.random::<f64>() * total;
                let mut new = k - 1;
                for (t, &wt) in weights.iter().enumerate() {
                    if u < wt {
                        new = t;
                        break;
                    }
                    u -= wt;
                }

                self.z[doc][i] = new;
                self.ndk[doc * k + new] += 1;
                self.nkw[new * v + w] += 1;
                self.nk[new] += 1;
            }
        }
    }

    /// Document–topic counts sum to document lengths; topic–word counts sum
    /// to topic totals; both agree with the assignment vector.
    fn counts_conserved(&self) -> bool {
        let (k, v) = (self.k, self.v);
        let mut per_topic = vec![0u32; k];
        for (doc, zs) in self.z.iter().enumerate() {
            let row: u32 = self.ndk[doc * k..(doc + 1) * k].iter().sum();
            if row as usize != self.words[doc].len() {
                return false;
            }
            let mut counted = vec![0u32; k];
            for &t in zs {
                counted[t] += 1;
                per_topic[t] += 1;
            }
            if counted[..] != self.ndk[doc * k..(doc + 1) * k] {
                return false;
            }
        }
        (0..k).all(|t| {
            let col: u32 = self.nkw[t * v..(t + 1) * v].iter().sum();
            col == self.nk[t] && self.nk[t] == per_topic[t]
        })
    }

    fn add_phi(&self, acc: &mut [Vec<f64>]) {
        let vbeta = self.v as f64 * self.beta;
        for (t, row) in acc.iter_mut().enumerate() {
            let denom = self.nk[t] as f64 + vbeta;
            for (w, a) in row.iter_mut().enumerate() {
                *a += (self.nkw[t * self.v + w] as f64 + self.beta) / denom;
            }
        }
    }

    fn add_theta(&self, acc: &mut [Vec<f64>]) {
        let kalpha = self.k as f64 * self.alpha;
        for (doc, row) in acc.iter_mut().enumerate() {
            let denom = self.words[doc].len() as f64 + kalpha;
            for (t, a) in row.iter_mut().enumerate() {
                *a += (self.ndk[doc * self.k + t] as f64 + self.alpha) / denom;
            }
        }
    }
}

fn check_corpus(bow: &BagOfWords) -> Result<(), TopicError> {
    if bow.num_docs() == 0 || bow.vocabulary.is_empty() {
        return Err(TopicError::EmptyCorpus);
    }
    if let Some(d) = (0..bow.num_docs()).find(|&d| bow.doc_len(d) == 0) {
        return Err(TopicError::EmptyDocument(bow.doc_ids[d].clone()));
    }
    Ok(())
}

pub fn fit_lda(bow: &BagOfWords, config: &LdaConfig) -> Result<TopicModel, TopicError> {
    fit_lda_traced(bow, config, 0).map(|(m, _)| m)
}

/// Like [`fit_lda`], additionally recording a [`SweepTrace`] every
/// `trace_every` sweeps (and after the last one). `trace_every = 0` records
/// nothing.
pub fn fit_lda_traced(
    bow: &BagOfWords,
    config: &LdaConfig,
    trace_every: usize,
) -> Result<(TopicModel, Vec<SweepTrace>), TopicError> {
    config.validate()?;
    check_corpus(bow)?;
    let mut rng = rng_from_seed(config.seed);
    let mut s = Sampler::new(bow, config, &mut rng);
    let (k, v, d) = (s.k, s.v, bow.num_docs());

    let mut phi = vec![vec![0.0; v]; k];
    let mut theta = vec![vec![0.0; k]; d];
    let mut samples = 0;
    let mut trace = Vec::new();
    let mut weights = vec![0.0; k];

    for sweep in 1..=config.iterations {
        s.sweep(&mut rng, &mut weights);
        debug_assert!(s.counts_conserved(), "sampler counts diverged at sweep {sweep}");
        if sweep > config.burn_in && (sweep - config.burn_in) % config.sample_lag == 0 {
            s.add_phi(&mut phi);
            s.add_theta(&mut theta);
            samples += 1;
        }
        if trace_every > 0 && (sweep % trace_every == 0 || sweep == config.iterations) {
            let mut p = vec![vec![0.0; v]; k];
            let mut th = vec![vec![0.0; k]; d];
            s.add_phi(&mut p);
            s.add_theta(&mut th);
            trace.push(SweepTrace {
                sweep,
                log_likelihood: log_likelihood(&p, &th, bow),
                counts_conserved: s.counts_conserved(),
            });
        }
    }
    if samples == 0 {
        s.add_phi(&mut phi);
        s.add_theta(&mut theta);
        samples = 1;
    }
    let scale = 1.0 / samples as f64;
    for row in phi.iter_mut().chain(theta.iter_mut()) {
        for x in row.iter_mut() {
            *x *= scale;
        }
    }
    let model = TopicModel {
        schema_version: MODEL_SCHEMA_VERSION,
        config: config.clone(),
        doc_ids: bow.doc_ids.clone(),
        vocabulary: bow.vocabulary.clone(),
        phi,
        theta,
        assignments: s.z,
        samples_averaged: samples,
    };
    Ok((model, trace))
}

/// The `n` highest-weight terms of `topic`, descending; ties keep vocabulary
/// order.
pub fn top_keywords(
    model: &TopicModel,
    topic: usize,
    n: usize,
) -> Result<Vec<(String, f64)>, TopicError> {
    let row = model.phi.get(topic).ok_or(TopicError::TopicOutOfRange {
        topic,
        num_topics: model.num_topics(),
    })?;
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(n)
        .map(|w| (model.vocabulary.term(w).to_string(), row[w]))
        .collect())
}

/// `0.009*"oliver" + 0.004*"felicity" + ...`
pub fn format_keywords(keywords: &[(String, f64)]) -> String {
    keywords
        .iter()
        .map(|(t, w)| format!("{w:.3}*\"{t}\""))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Index of the largest proportion; ties go to the lowest index.
pub fn dominant_topic(theta_row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in theta_row.iter().enumerate() {
        if p > theta_row[best] {
            best = i;
        }
    }
    best
}

/// Jensen–Shannon divergence with base-2 logarithms, in [0, 1].
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            acc += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            acc += 0.5 * b * (b / m).log2();
        }
    }
    acc.clamp(0.0, 1.0)
}

/// Pairwise Jensen–Shannon divergences between topic–word rows.
pub fn topic_distance_matrix(model: &TopicModel) -> Vec<Vec<f64>> {
    let k = model.num_topics();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = js_divergence(&model.phi[i], &model.phi[j]);
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    out
}

fn log_likelihood(phi: &[Vec<f64>], theta: &[Vec<f64>], bow: &BagOfWords) -> f64 {
    let mut ll = 0.0;
    for (row, th) in bow.rows.iter().zip(theta) {
        for &(w, c) in row {
            let p: f64 = th.iter().zip(phi).map(|(&t, ph)| t * ph[w]).sum();
            ll += c as f64 * p.ln();
        }
    }
    ll
}

/// Σ_d Σ_tokens ln Σ_k theta[d][k]·phi[k][w] (natural log).
pub fn corpus_log_likelihood(model: &TopicModel, bow: &BagOfWords) -> Result<f64, TopicError> {
    if model.vocabulary != bow.vocabulary {
        return Err(TopicError::VocabularyMismatch);
    }
    if model.theta.len() != bow.num_docs() {
        return Err(TopicError::DocumentCountMismatch {
            model: model.theta.len(),
            corpus: bow.num_docs(),
        });
    }
    Ok(log_likelihood(&model.phi, &model.theta, bow))
}
