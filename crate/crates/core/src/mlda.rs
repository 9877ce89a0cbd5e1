//! Multimodal latent Dirichlet allocation with collapsed Gibbs sampling.
//!
//! Each document carries one bag of tokens per modality. All modalities share
//! the document's category proportions, so evidence from one modality shapes
//! the categories of tokens in the others. A per-document external message can
//! be folded into every token conditional, which is how a module above this one
//! steers the categories it shares.

use std::collections::HashMap;

use libm::lgamma;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MldaError;
use crate::message::{argmax, sample_index, CategoricalMessage};
use crate::rng::SerketRng;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_PSEUDO_OBS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    /// Vocabulary size. Ignored for word modalities, whose vocabulary grows.
    pub vocab_size: usize,
    pub gamma: f64,
    #[serde(default)]
    pub words: bool,
}

impl ModalitySpec {
    pub fn new(name: impl Into<String>, vocab_size: usize) -> Self {
        Self {
            name: name.into(),
            vocab_size,
            gamma: DEFAULT_GAMMA,
            words: false,
        }
    }

    /// A modality over word strings with an open, growing vocabulary.
    pub fn words(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vocab_size: 0,
            gamma: DEFAULT_GAMMA,
            words: true,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MldaConfig {
    pub k: usize,
    pub alpha: f64,
    pub modalities: Vec<ModalitySpec>,
    /// Pseudo-observations drawn per document when this model receives a
    /// categorical message from a lower module.
    #[serde(default = "default_pseudo_obs")]
    pub pseudo_obs: usize,
    /// Gibbs sweeps per scheduler round when driven by a module graph.
    #[serde(default = "default_sweeps_per_round")]
    pub sweeps_per_round: usize,
    /// Adds one whole-document Metropolis-Hastings move per document to every
    /// sweep (see [`Mlda::gibbs_sweep`]).
    #[serde(default = "default_doc_moves")]
    pub doc_moves: bool,
}

fn default_doc_moves() -> bool {
    true
}

fn default_pseudo_obs() -> usize {
    DEFAULT_PSEUDO_OBS
}

fn default_sweeps_per_round() -> usize {
    1
}

impl MldaConfig {
    pub fn new(k: usize, modalities: Vec<ModalitySpec>) -> Self {
        Self {
            k,
            alpha: DEFAULT_ALPHA,
            modalities,
            pseudo_obs: DEFAULT_PSEUDO_OBS,
            sweeps_per_round: 1,
            doc_moves: true,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<(), MldaError> {
        if self.k == 0 || self.k > u16::MAX as usize {
            return Err(MldaError::InvalidConfig(format!("K = {} out of range", self.k)));
        }
        if !(self.alpha > 0.0) {
            return Err(MldaError::InvalidConfig("alpha must be positive".into()));
        }
        if self.modalities.is_empty() {
            return Err(MldaError::InvalidConfig("at least one modality required".into()));
        }
        for m in &self.modalities {
            if !(m.gamma > 0.0) {
                return Err(MldaError::InvalidConfig(format!(
                    "gamma for `{}` must be positive",
                    m.name
                )));
            }
            if !m.words && m.vocab_size == 0 {
                return Err(MldaError::InvalidConfig(format!(
                    "modality `{}` needs a vocabulary",
                    m.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-modality count vectors of one document. A `None` entry marks a
/// modality that was not observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocObservation {
    pub counts: Vec<Option<Vec<u32>>>,
}

impl DocObservation {
    pub fn new(counts: Vec<Vec<u32>>) -> Self {
        Self {
            counts: counts.into_iter().map(Some).collect(),
        }
    }

    pub fn without(mut self, modality: usize) -> Self {
        self.counts[modality] = None;
        self
    }

    fn total(&self) -> u64 {
        self.counts
            .iter()
            .flatten()
            .flat_map(|c| c.iter())
            .map(|&c| c as u64)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Token {
    word: u32,
    topic: u16,
}

/// Point estimates of the category proportions and per-modality emission tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MldaParams {
    /// `theta[j][k]`
    pub theta: Vec<Vec<f64>>,
    /// `phi[m][k][w]`
    pub phi: Vec<Vec<Vec<f64>>>,
}

/// Log score of a word sequence under a document's multimodal posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WordScore {
    pub log_prob: f64,
    /// Set when the sequence was empty and scored 0 by convention.
    pub empty: bool,
}

#[derive(Debug, Clone, Default)]
struct WordRegistry {
    index: HashMap<String, u32>,
    words: Vec<String>,
}

impl WordRegistry {
    fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_owned());
        self.index.insert(word.to_owned(), id);
        id
    }
}

/// Collapsed Gibbs state: token assignments plus the count tables they induce.
#[derive(Debug, Clone)]
pub struct Mlda {
    config: MldaConfig,
    vocab: Vec<usize>,
    registries: Vec<Option<WordRegistry>>,
    docs: Vec<Vec<Vec<Token>>>,
    n_jk: Vec<Vec<u32>>,
    n_jmk: Vec<Vec<Vec<u32>>>,
    /// `n_mkw[m][w * K + k]`
    n_mkw: Vec<Vec<u32>>,
    n_mk: Vec<Vec<u32>>,
    external: Vec<Option<CategoricalMessage>>,
    /// Modality index bound to each upper-side connector slot.
    slots: Vec<usize>,
}

/// Unnormalized collapsed conditional weight of one category.
#[inline]
fn collapsed_weight(n_jk: u32, n_mkw: u32, n_mk: u32, alpha: f64, gamma: f64, vocab: usize) -> f64 {
    (n_jk as f64 + alpha) * (n_mkw as f64 + gamma) / (n_mk as f64 + gamma * vocab as f64)
}

/// Normalized collapsed conditional from counts that already exclude the
/// token being resampled, optionally multiplied by an external message.
pub fn collapsed_conditional(
    doc_topic: &[u32],
    topic_word: &[u32],
    topic_total: &[u32],
    alpha: f64,
    gamma: f64,
    vocab: usize,
    external: Option<&[f64]>,
) -> Vec<f64> {
    let mut w: Vec<f64> = (0..doc_topic.len())
        .map(|k| collapsed_weight(doc_topic[k], topic_word[k], topic_total[k], alpha, gamma, vocab))
        .collect();
    if let Some(ext) = external {
        for (wk, e) in w.iter_mut().zip(ext) {
            *wk *= e;
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Tallies `n` independent draws from `msg` into a histogram.
pub fn draw_pseudo_obs<R: Rng + ?Sized>(msg: &CategoricalMessage, n: usize, rng: &mut R) -> Vec<u32> {
    let mut hist = vec![0u32; msg.len()];
    for _ in 0..n {
        hist[msg.sample(rng)] += 1;
    }
    hist
}

/// `sum_z weights[z] * table[z][c]` for every `c`.
pub fn mix_rows(weights: &[f64], table: &[Vec<f64>]) -> Vec<f64> {
    let width = table.first().map_or(0, Vec::len);
    let mut out = vec![0.0; width];
    for (w, row) in weights.iter().zip(table) {
        for (o, p) in out.iter_mut().zip(row) {
            *o += w * p;
        }
    }
    out
}

impl Mlda {
    pub fn new(config: MldaConfig) -> Result<Self, MldaError> {
        config.validate()?;
        let m = config.modalities.len();
        let vocab: Vec<usize> = config
            .modalities
            .iter()
            .map(|s| if s.words { 0 } else { s.vocab_size })
            .collect();
        let registries = config
            .modalities
            .iter()
            .map(|s| s.words.then(WordRegistry::default))
            .collect();
        let n_mkw = vocab.iter().map(|v| vec![0; v * config.k]).collect();
        Ok(Self {
            n_mk: vec![vec![0; config.k]; m],
            n_mkw,
            vocab,
            registries,
            docs: Vec::new(),
            n_jk: Vec::new(),
            n_jmk: Vec::new(),
            external: Vec::new(),
            slots: Vec::new(),
            config,
        })
    }

    /// Builds a model and adds every document with random initial assignments.
    pub fn with_documents(
        config: MldaConfig,
        docs: &[DocObservation],
        rng: &mut SerketRng,
    ) -> Result<Self, MldaError> {
        let mut model = Self::new(config)?;
        for d in docs {
            model.add_document(d, rng)?;
        }
        Ok(model)
    }

    pub fn config(&self) -> &MldaConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn num_modalities(&self) -> usize {
        self.config.modalities.len()
    }

    pub fn vocab_size(&self, m: usize) -> usize {
        self.vocab[m]
    }

    pub fn modality_index(&self, name: &str) -> Result<usize, MldaError> {
        self.config
            .modalities
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| MldaError::UnknownModality(name.to_owned()))
    }

    /// Tokens of document `j` in modality `m`.
    pub fn token_count(&self, j: usize, m: usize) -> usize {
        self.docs[j][m].len()
    }

    pub fn doc_topic_counts(&self, j: usize) -> &[u32] {
        &self.n_jk[j]
    }

    /// Binds connector slot `slot` to a modality of this model.
    pub fn bind_slot(&mut self, slot: usize, modality: &str) -> Result<(), MldaError> {
        let m = self.modality_index(modality)?;
        if self.slots.len() <= slot {
            self.slots.resize(slot + 1, usize::MAX);
        }
        self.slots[slot] = m;
        Ok(())
    }

    pub(crate) fn slot_modality(&self, slot: usize) -> Option<usize> {
        self.slots.get(slot).copied().filter(|m| *m != usize::MAX)
    }

    fn check_shape(&self, obs: &DocObservation) -> Result<(), MldaError> {
        if obs.counts.len() != self.num_modalities() {
            return Err(MldaError::ObservationShape {
                modality: obs.counts.len(),
                expected: self.num_modalities(),
                found: obs.counts.len(),
            });
        }
        for (m, c) in obs.counts.iter().enumerate() {
            if let Some(c) = c {
                if c.len() != self.vocab[m] {
                    return Err(MldaError::ObservationShape {
                        modality: m,
                        expected: self.vocab[m],
                        found: c.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Appends a document. All of its tokens start in one category, drawn from
    /// the collapsed predictive of the whole document given every document
    /// placed before it, so distinct documents tend to open distinct categories.
    pub fn add_document(&mut self, obs: &DocObservation, rng: &mut SerketRng) -> Result<usize, MldaError> {
        self.check_shape(obs)?;
        let k = self.config.k;
        let j = self.docs.len();
        self.docs.push(vec![Vec::new(); self.num_modalities()]);
        self.n_jk.push(vec![0; k]);
        self.n_jmk.push(vec![vec![0; k]; self.num_modalities()]);
        self.external.push(None);
        let mut log_w = vec![0.0; k];
        for (m, counts) in obs.counts.iter().enumerate() {
            let Some(counts) = counts else { continue };
            let gamma = self.config.modalities[m].gamma;
            let v_gamma = gamma * self.vocab[m] as f64;
            let total: u32 = counts.iter().sum();
            for (t, lw) in log_w.iter_mut().enumerate() {
                for (w, &c) in counts.iter().enumerate() {
                    let n = self.n_mkw[m][w * k + t] as f64 + gamma;
                    *lw += (0..c).map(|i| (n + i as f64).ln()).sum::<f64>();
                }
                let n = self.n_mk[m][t] as f64 + v_gamma;
                *lw -= (0..total).map(|i| (n + i as f64).ln()).sum::<f64>();
            }
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
        let topic = sample_index(&weights, rng) as u16;
        for (m, counts) in obs.counts.iter().enumerate() {
            let Some(counts) = counts else { continue };
            for (w, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    self.push_token(j, m, Token { word: w as u32, topic });
                }
            }
        }
        Ok(j)
    }

    fn push_token(&mut self, j: usize, m: usize, tok: Token) {
        self.increment(j, m, tok);
        self.docs[j][m].push(tok);
    }

    #[inline]
    fn increment(&mut self, j: usize, m: usize, tok: Token) {
        let k = self.config.k;
        let t = tok.topic as usize;
        self.n_jk[j][t] += 1;
        self.n_jmk[j][m][t] += 1;
        self.n_mkw[m][tok.word as usize * k + t] += 1;
        self.n_mk[m][t] += 1;
    }

    #[inline]
    fn decrement(&mut self, j: usize, m: usize, tok: Token) {
        let k = self.config.k;
        let t = tok.topic as usize;
        self.n_jk[j][t] -= 1;
        self.n_jmk[j][m][t] -= 1;
        self.n_mkw[m][tok.word as usize * k + t] -= 1;
        self.n_mk[m][t] -= 1;
    }

    fn fill_conditional(&self, j: usize, m: usize, word: u32, ext: Option<&[f64]>, buf: &mut [f64]) {
        let k = self.config.k;
        let gamma = self.config.modalities[m].gamma;
        let alpha = self.config.alpha;
        let v = self.vocab[m];
        let row = &self.n_mkw[m][word as usize * k..(word as usize + 1) * k];
        for t in 0..k {
            buf[t] = collapsed_weight(self.n_jk[j][t], row[t], self.n_mk[m][t], alpha, gamma, v);
        }
        if let Some(ext) = ext {
            for (b, e) in buf.iter_mut().zip(ext) {
                *b *= e;
            }
        }
    }

    /// Resamples the category of token `n` of document `j`, modality `m`,
    /// returning the normalized conditional it was drawn from.
    fn resample_token(
        &mut self,
        j: usize,
        m: usize,
        n: usize,
        ext: Option<&[f64]>,
        buf: &mut [f64],
        rng: &mut SerketRng,
    ) {
        let tok = self.docs[j][m][n];
        self.decrement(j, m, tok);
        self.fill_conditional(j, m, tok.word, ext, buf);
        let topic = if buf.iter().sum::<f64>() > 0.0 {
            sample_index(buf, rng)
        } else {
            // external message zeroed every category; ignore it for this token
            self.fill_conditional(j, m, tok.word, None, buf);
            sample_index(buf, rng)
        };
        let tok = Token { word: tok.word, topic: topic as u16 };
        self.docs[j][m][n] = tok;
        self.increment(j, m, tok);
    }

    /// Metropolis-Hastings move of every token of document `j` in category
    /// `s` to a category `t` the document does not use. `s` is the category of
    /// a uniformly chosen token and `t` is uniform over unused categories; the
    /// reverse move has the same proposal probability, so acceptance is the
    /// ratio of collapsed joints. Lets a document leave a category shared with
    /// an unrelated cluster, which single-token updates almost never do.
    fn doc_move(&mut self, j: usize, ext: Option<&[f64]>, rng: &mut SerketRng) {
        let k = self.config.k;
        let total: u32 = self.n_jk[j].iter().sum();
        let unused = self.n_jk[j].iter().filter(|&&c| c == 0).count();
        if total == 0 || unused == 0 {
            return;
        }
        let mut r = rng.random_range(0..total);
        let s = self.n_jk[j]
            .iter()
            .position(|&c| {
                if r < c {
                    true
                } else {
                    r -= c;
                    false
                }
            })
            .expect("r < total");
        let nth = rng.random_range(0..unused);
        let t = (0..k).filter(|&t| self.n_jk[j][t] == 0).nth(nth).expect("nth < unused");

        if ext.is_some_and(|e| e[t] == 0.0) {
            return;
        }
        let log_ratio = self.doc_move_log_ratio(j, s, t, ext);
        if log_ratio < 0.0 && rng.random::<f64>().ln() >= log_ratio {
            return;
        }
        self.move_doc_category(j, s, t);
    }

    /// `log` of the collapsed-joint ratio for moving document `j`'s tokens in
    /// category `s` to `t`, which the document must not use. The document
    /// term is unchanged by such a swap, so only emission terms and the
    /// external message contribute.
    fn doc_move_log_ratio(&self, j: usize, s: usize, t: usize, ext: Option<&[f64]>) -> f64 {
        let k = self.config.k;
        let mut log_ratio = match ext {
            Some(e) => self.n_jk[j][s] as f64 * (e[t].ln() - e[s].ln()),
            None => 0.0,
        };
        let mut words = Vec::new();
        for m in 0..self.num_modalities() {
            let c_m = self.n_jmk[j][m][s];
            if c_m == 0 {
                continue;
            }
            let gamma = self.config.modalities[m].gamma;
            let v_gamma = gamma * self.vocab[m] as f64;
            words.clear();
            words.extend(self.docs[j][m].iter().filter(|tok| tok.topic as usize == s).map(|tok| tok.word));
            words.sort_unstable();
            for group in words.chunk_by(|a, b| a == b) {
                let w = group[0] as usize;
                let n_sw = self.n_mkw[m][w * k + s] as f64;
                let n_tw = self.n_mkw[m][w * k + t] as f64;
                for i in 0..group.len() {
                    log_ratio += (n_tw + gamma + i as f64).ln() - (n_sw - 1.0 - i as f64 + gamma).ln();
                }
            }
            let n_s = self.n_mk[m][s] as f64;
            let n_t = self.n_mk[m][t] as f64;
            for i in 0..c_m {
                log_ratio += (n_s - 1.0 - i as f64 + v_gamma).ln() - (n_t + v_gamma + i as f64).ln();
            }
        }
        log_ratio
    }

    fn move_doc_category(&mut self, j: usize, s: usize, t: usize) {
        for m in 0..self.num_modalities() {
            for n in 0..self.docs[j][m].len() {
                let tok = self.docs[j][m][n];
                if tok.topic as usize == s {
                    self.decrement(j, m, tok);
                    let moved = Token { word: tok.word, topic: t as u16 };
                    self.docs[j][m][n] = moved;
                    self.increment(j, m, moved);
                }
            }
        }
    }

    /// One collapsed Gibbs sweep over every token, in document/modality/token
    /// order, followed by one whole-document move per document when
    /// `doc_moves` is set. `external[j]` multiplies every token conditional of
    /// document `j`.
    pub fn gibbs_sweep(
        &mut self,
        external: Option<&[CategoricalMessage]>,
        rng: &mut SerketRng,
    ) -> Result<(), MldaError> {
        if let Some(ext) = external {
            self.check_messages(ext)?;
        }
        let mut buf = vec![0.0; self.config.k];
        for j in 0..self.docs.len() {
            let ext = external.map(|e| e[j].probs().to_vec());
            for m in 0..self.num_modalities() {
                for n in 0..self.docs[j][m].len() {
                    self.resample_token(j, m, n, ext.as_deref(), &mut buf, rng);
                }
            }
        }
        if self.config.doc_moves {
            for j in 0..self.docs.len() {
                let ext = external.map(|e| e[j].probs().to_vec());
                self.doc_move(j, ext.as_deref(), rng);
            }
        }
        Ok(())
    }

    /// Sweep visiting tokens in a caller-supplied order of `(doc, modality, token)`.
    pub fn gibbs_sweep_ordered(
        &mut self,
        order: &[(usize, usize, usize)],
        external: Option<&[CategoricalMessage]>,
        rng: &mut SerketRng,
    ) -> Result<(), MldaError> {
        if let Some(ext) = external {
            self.check_messages(ext)?;
        }
        let mut buf = vec![0.0; self.config.k];
        for &(j, m, n) in order {
            let ext = external.map(|e| e[j].probs());
            self.resample_token(j, m, n, ext, &mut buf, rng);
        }
        Ok(())
    }

    /// Sweep using the external messages stored with [`Mlda::set_external`].
    pub fn gibbs_sweep_stored(&mut self, rng: &mut SerketRng) -> Result<(), MldaError> {
        if self.external.iter().all(Option::is_none) {
            return self.gibbs_sweep(None, rng);
        }
        let mut buf = vec![0.0; self.config.k];
        for j in 0..self.docs.len() {
            let ext = self.external[j].as_ref().map(|e| e.probs().to_vec());
            for m in 0..self.num_modalities() {
                for n in 0..self.docs[j][m].len() {
                    self.resample_token(j, m, n, ext.as_deref(), &mut buf, rng);
                }
            }
        }
        if self.config.doc_moves {
            for j in 0..self.docs.len() {
                let ext = self.external[j].as_ref().map(|e| e.probs().to_vec());
                self.doc_move(j, ext.as_deref(), rng);
            }
        }
        Ok(())
    }

    fn check_messages(&self, ext: &[CategoricalMessage]) -> Result<(), MldaError> {
        if ext.len() != self.docs.len() {
            return Err(MldaError::MessageLengthMismatch {
                expected: self.docs.len(),
                found: ext.len(),
            });
        }
        if let Some(bad) = ext.iter().find(|e| e.len() != self.config.k) {
            return Err(MldaError::MessageLengthMismatch {
                expected: self.config.k,
                found: bad.len(),
            });
        }
        Ok(())
    }

    /// Stores per-document messages folded into subsequent stored sweeps.
    pub fn set_external(&mut self, messages: Vec<CategoricalMessage>) -> Result<(), MldaError> {
        self.check_messages(&messages)?;
        self.external = messages.into_iter().map(Some).collect();
        Ok(())
    }

    pub fn clear_external(&mut self) {
        self.external.iter_mut().for_each(|e| *e = None);
    }

    pub fn external(&self, j: usize) -> Option<&CategoricalMessage> {
        self.external.get(j).and_then(Option::as_ref)
    }

    /// Collapsed conditional the sampler would use for token `n` of document
    /// `j`, modality `m`, with that token's own counts removed.
    pub fn token_conditional(
        &self,
        j: usize,
        m: usize,
        n: usize,
        external: Option<&CategoricalMessage>,
    ) -> Vec<f64> {
        let mut scratch = self.clone();
        let tok = scratch.docs[j][m][n];
        scratch.decrement(j, m, tok);
        let mut buf = vec![0.0; self.config.k];
        scratch.fill_conditional(j, m, tok.word, external.map(|e| e.probs()), &mut buf);
        let sum: f64 = buf.iter().sum();
        buf.iter_mut().for_each(|b| *b /= sum);
        buf
    }

    /// Categories currently assigned to every token of document `j`, modality `m`.
    pub fn assignments(&self, j: usize, m: usize) -> Vec<usize> {
        self.docs[j][m].iter().map(|t| t.topic as usize).collect()
    }

    /// Normalized `(n_jk + alpha)`.
    pub fn doc_posterior(&self, j: usize) -> CategoricalMessage {
        let w: Vec<f64> = self.n_jk[j].iter().map(|&c| c as f64 + self.config.alpha).collect();
        CategoricalMessage::from_weights(&w).expect("alpha > 0 keeps weights positive")
    }

    /// Document posterior counting only tokens from modalities not in `excluded`.
    pub fn doc_posterior_excluding(&self, j: usize, excluded: &[usize]) -> CategoricalMessage {
        let k = self.config.k;
        let mut w = vec![self.config.alpha; k];
        for (m, counts) in self.n_jmk[j].iter().enumerate() {
            if excluded.contains(&m) {
                continue;
            }
            for (wk, &c) in w.iter_mut().zip(counts) {
                *wk += c as f64;
            }
        }
        CategoricalMessage::from_weights(&w).expect("alpha > 0 keeps weights positive")
    }

    pub fn doc_label(&self, j: usize) -> usize {
        argmax(self.doc_posterior(j).probs())
    }

    /// Smoothed `P(w | k)` for modality `m`.
    pub fn phi(&self, m: usize, k: usize, w: usize) -> f64 {
        let kk = self.config.k;
        let gamma = self.config.modalities[m].gamma;
        (self.n_mkw[m][w * kk + k] as f64 + gamma) / (self.n_mk[m][k] as f64 + gamma * self.vocab[m] as f64)
    }

    /// `phi[k][w]` for modality `m`.
    pub fn phi_table(&self, m: usize) -> Vec<Vec<f64>> {
        (0..self.config.k)
            .map(|k| (0..self.vocab[m]).map(|w| self.phi(m, k, w)).collect())
            .collect()
    }

    pub fn estimate_params(&self) -> MldaParams {
        MldaParams {
            theta: (0..self.num_docs())
                .map(|j| self.doc_posterior(j).probs().to_vec())
                .collect(),
            phi: (0..self.num_modalities()).map(|m| self.phi_table(m)).collect(),
        }
    }

    /// `sum_z P(c | z) P(z | doc j)` where `P(c | z)` is modality `m`'s emission
    /// table. With `m` holding pseudo-observations of a lower module's category,
    /// this is the top-down message for that module.
    pub fn topdown_message(&self, j: usize, m: usize) -> CategoricalMessage {
        let post = self.doc_posterior(j);
        let mixed = mix_rows(post.probs(), &self.phi_table(m));
        CategoricalMessage::from_weights(&mixed).expect("smoothed rows are positive")
    }

    /// Replaces the tokens of modality `m` in every document by the given
    /// histograms. New tokens are initialized by sequential sampling from the
    /// collapsed conditional.
    pub fn replace_modality(
        &mut self,
        m: usize,
        counts: &[Vec<u32>],
        rng: &mut SerketRng,
    ) -> Result<(), MldaError> {
        if counts.len() != self.docs.len() {
            return Err(MldaError::MessageLengthMismatch {
                expected: self.docs.len(),
                found: counts.len(),
            });
        }
        if let Some(bad) = counts.iter().find(|c| c.len() != self.vocab[m]) {
            return Err(MldaError::ObservationShape {
                modality: m,
                expected: self.vocab[m],
                found: bad.len(),
            });
        }
        for j in 0..self.docs.len() {
            let words: Vec<u32> = counts[j]
                .iter()
                .enumerate()
                .flat_map(|(w, &c)| std::iter::repeat_n(w as u32, c as usize))
                .collect();
            self.replace_doc_tokens(j, m, &words, rng);
        }
        Ok(())
    }

    fn replace_doc_tokens(&mut self, j: usize, m: usize, words: &[u32], rng: &mut SerketRng) {
        let old = std::mem::take(&mut self.docs[j][m]);
        for tok in old {
            self.decrement(j, m, tok);
        }
        let mut buf = vec![0.0; self.config.k];
        let ext = self.external[j].as_ref().map(|e| e.probs().to_vec());
        for &word in words {
            self.fill_conditional(j, m, word, ext.as_deref(), &mut buf);
            if buf.iter().sum::<f64>() <= 0.0 {
                self.fill_conditional(j, m, word, None, &mut buf);
            }
            let topic = sample_index(&buf, rng) as u16;
            self.push_token(j, m, Token { word, topic });
        }
    }

    fn word_registry(&self, m: usize) -> Result<&WordRegistry, MldaError> {
        self.registries[m]
            .as_ref()
            .ok_or_else(|| MldaError::NotWordModality(self.config.modalities[m].name.clone()))
    }

    /// Number of distinct words registered in word modality `m`.
    pub fn word_vocab(&self, m: usize) -> Result<Vec<String>, MldaError> {
        Ok(self.word_registry(m)?.words.clone())
    }

    pub fn word_id(&self, m: usize, word: &str) -> Option<usize> {
        self.registries[m].as_ref()?.index.get(word).map(|&i| i as usize)
    }

    /// Sets the word tokens of document `j` in word modality `m`, registering
    /// unseen words (which grows that modality's vocabulary).
    pub fn set_words<S: AsRef<str>>(
        &mut self,
        j: usize,
        m: usize,
        words: &[S],
        rng: &mut SerketRng,
    ) -> Result<(), MldaError> {
        if j >= self.docs.len() {
            return Err(MldaError::UnknownDocument(j));
        }
        self.word_registry(m)?;
        let k = self.config.k;
        let registry = self.registries[m].as_mut().expect("checked above");
        let ids: Vec<u32> = words.iter().map(|w| registry.intern(w.as_ref())).collect();
        let v = registry.words.len();
        if v > self.vocab[m] {
            self.vocab[m] = v;
            self.n_mkw[m].resize(v * k, 0);
        }
        self.replace_doc_tokens(j, m, &ids, rng);
        Ok(())
    }

    /// Log probability of `words` under document `j`'s category posterior
    /// computed from every modality except the word modality `m`:
    /// `sum_w log sum_k theta_jk phi_mkw`. Words outside the registry get the
    /// smoothing floor, with the vocabulary grown to include them.
    pub fn score_word_sequence<S: AsRef<str>>(
        &self,
        j: usize,
        m: usize,
        words: &[S],
    ) -> Result<WordScore, MldaError> {
        if j >= self.docs.len() {
            return Err(MldaError::UnknownDocument(j));
        }
        let registry = self.word_registry(m)?;
        if words.is_empty() {
            return Ok(WordScore { log_prob: 0.0, empty: true });
        }
        let mut unknown: Vec<&str> = words
            .iter()
            .map(AsRef::as_ref)
            .filter(|w| !registry.index.contains_key(*w))
            .collect();
        unknown.sort_unstable();
        unknown.dedup();
        let v = (self.vocab[m] + unknown.len()) as f64;
        let gamma = self.config.modalities[m].gamma;
        let k = self.config.k;
        let theta = self.doc_posterior_excluding(j, &[m]);
        let mut total = 0.0;
        for w in words {
            let id = registry.index.get(w.as_ref());
            let p: f64 = (0..k)
                .map(|t| {
                    let c = id.map_or(0, |&i| self.n_mkw[m][i as usize * k + t]) as f64;
                    theta.prob(t) * (c + gamma) / (self.n_mk[m][t] as f64 + gamma * v)
                })
                .sum();
            total += p.ln();
        }
        Ok(WordScore { log_prob: total, empty: false })
    }

    /// Category posterior of an unseen document, by Gibbs sampling its token
    /// assignments with the emission tables held fixed. The returned posterior
    /// averages the post-burn-in category counts.
    pub fn fold_in(
        &self,
        obs: &DocObservation,
        sweeps: usize,
        rng: &mut SerketRng,
    ) -> Result<CategoricalMessage, MldaError> {
        self.check_shape(obs)?;
        let k = self.config.k;
        let alpha = self.config.alpha;
        let tokens: Vec<(usize, usize)> = obs
            .counts
            .iter()
            .enumerate()
            .filter_map(|(m, c)| c.as_ref().map(|c| (m, c)))
            .flat_map(|(m, c)| {
                c.iter()
                    .enumerate()
                    .flat_map(move |(w, &n)| std::iter::repeat_n((m, w), n as usize))
            })
            .collect();
        if tokens.is_empty() {
            return Ok(CategoricalMessage::uniform(k));
        }
        let phi: Vec<Vec<Vec<f64>>> = (0..self.num_modalities()).map(|m| self.phi_table(m)).collect();
        let mut topics: Vec<usize> = tokens.iter().map(|_| rng.random_range(0..k)).collect();
        let mut n_k = vec![0u32; k];
        topics.iter().for_each(|&t| n_k[t] += 1);
        let burn_in = sweeps / 2;
        let mut acc = vec![0.0; k];
        let mut buf = vec![0.0; k];
        for s in 0..sweeps.max(1) {
            for (i, &(m, w)) in tokens.iter().enumerate() {
                n_k[topics[i]] -= 1;
                for t in 0..k {
                    buf[t] = (n_k[t] as f64 + alpha) * phi[m][t][w];
                }
                topics[i] = sample_index(&buf, rng);
                n_k[topics[i]] += 1;
            }
            if s >= burn_in {
                for t in 0..k {
                    acc[t] += n_k[t] as f64 + alpha;
                }
            }
        }
        Ok(CategoricalMessage::from_weights(&acc).expect("positive weights"))
    }

    /// Predicts the histogram shape of modality `missing` from the other
    /// modalities of `partial`: `sum_k theta_k phi[missing][k][.]`.
    pub fn predict_modality(
        &self,
        partial: &DocObservation,
        missing: usize,
        sweeps: usize,
        rng: &mut SerketRng,
    ) -> Result<CategoricalMessage, MldaError> {
        if missing >= self.num_modalities() {
            return Err(MldaError::UnknownModality(missing.to_string()));
        }
        let obs = partial.clone().without(missing);
        if obs.total() == 0 {
            return Err(MldaError::EmptyDocument);
        }
        let theta = self.fold_in(&obs, sweeps, rng)?;
        let mixed = mix_rows(theta.probs(), &self.phi_table(missing));
        Ok(CategoricalMessage::from_weights(&mixed).expect("smoothed rows are positive"))
    }

    /// Log of the collapsed joint `P(z, o)` with `theta` and `phi` integrated out.
    pub fn log_joint(&self) -> f64 {
        let k = self.config.k as f64;
        let alpha = self.config.alpha;
        let mut total = 0.0;
        for n_j in &self.n_jk {
            let n: u32 = n_j.iter().sum();
            total += lgamma(k * alpha) - lgamma(n as f64 + k * alpha);
            total += n_j.iter().map(|&c| lgamma(c as f64 + alpha) - lgamma(alpha)).sum::<f64>();
        }
        for m in 0..self.num_modalities() {
            let g = self.config.modalities[m].gamma;
            let v = self.vocab[m] as f64;
            for &n_k in &self.n_mk[m] {
                total += lgamma(v * g) - lgamma(n_k as f64 + v * g);
            }
            total += self.n_mkw[m].iter().map(|&c| lgamma(c as f64 + g) - lgamma(g)).sum::<f64>();
        }
        total
    }

    /// `sum over tokens of log sum_k theta_jk phi_mkw` under current estimates.
    pub fn log_likelihood(&self) -> f64 {
        let k = self.config.k;
        let mut total = 0.0;
        let denom: Vec<Vec<f64>> = (0..self.num_modalities())
            .map(|m| {
                let g = self.config.modalities[m].gamma;
                (0..k)
                    .map(|t| self.n_mk[m][t] as f64 + g * self.vocab[m] as f64)
                    .collect()
            })
            .collect();
        for j in 0..self.docs.len() {
            let theta = self.doc_posterior(j);
            for m in 0..self.num_modalities() {
                let g = self.config.modalities[m].gamma;
                for tok in &self.docs[j][m] {
                    let row = &self.n_mkw[m][tok.word as usize * k..(tok.word as usize + 1) * k];
                    let p: f64 = (0..k)
                        .map(|t| theta.prob(t) * (row[t] as f64 + g) / denom[m][t])
                        .sum();
                    total += p.ln();
                }
            }
        }
        total
    }

    /// Recounts every table from the assignments and compares with the live tables.
    pub fn counts_consistent(&self) -> bool {
        let k = self.config.k;
        let mut n_jk = vec![vec![0u32; k]; self.docs.len()];
        let mut n_jmk = vec![vec![vec![0u32; k]; self.num_modalities()]; self.docs.len()];
        let mut n_mkw: Vec<Vec<u32>> = self.vocab.iter().map(|v| vec![0; v * k]).collect();
        let mut n_mk = vec![vec![0u32; k]; self.num_modalities()];
        for (j, doc) in self.docs.iter().enumerate() {
            for (m, toks) in doc.iter().enumerate() {
                for t in toks {
                    let z = t.topic as usize;
                    n_jk[j][z] += 1;
                    n_jmk[j][m][z] += 1;
                    n_mkw[m][t.word as usize * k + z] += 1;
                    n_mk[m][z] += 1;
                }
            }
        }
        n_jk == self.n_jk && n_jmk == self.n_jmk && n_mkw == self.n_mkw && n_mk == self.n_mk
    }

    /// Per-category token totals in modality `m`.
    pub fn topic_totals(&self, m: usize) -> &[u32] {
        &self.n_mk[m]
    }

    /// Count of word `w` assigned to category `k` in modality `m`.
    pub fn topic_word_count(&self, m: usize, k: usize, w: usize) -> u32 {
        self.n_mkw[m][w * self.config.k + k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn two_vocab_docs() -> Vec<DocObservation> {
        // docs 0..10 use words {0,1}, docs 10..20 use words {2,3}
        (0..20)
            .map(|j| {
                let mut c = vec![0u32; 4];
                if j < 10 {
                    c[0] = 6;
                    c[1] = 6;
                } else {
                    c[2] = 6;
                    c[3] = 6;
                }
                DocObservation::new(vec![c])
            })
            .collect()
    }

    #[test]
    fn symmetric_zero_counts_give_uniform_conditional() {
        let p = collapsed_conditional(&[0, 0, 0], &[0, 0, 0], &[0, 0, 0], 1.0, 0.1, 5, None);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_conditional() {
        // [(3+1)(2+1)/(4+2), (0+1)(0+1)/(0+2)] = [2.0, 0.5]
        let p = collapsed_conditional(&[3, 0], &[2, 0], &[4, 0], 1.0, 1.0, 2, None);
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert!((p[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_external_entry_excludes_category() {
        let p = collapsed_conditional(&[5, 1], &[3, 0], &[7, 2], 1.0, 0.1, 4, Some(&[0.0, 1.0]));
        assert_eq!(p[0], 0.0);
        assert_eq!(p[1], 1.0);
    }

    #[test]
    fn external_message_forces_category() {
        let mut rng = seeded(1);
        let mut model = Mlda::with_documents(
            MldaConfig::new(2, vec![ModalitySpec::new("a", 4)]),
            &two_vocab_docs(),
            &mut rng,
        )
        .unwrap();
        let ext = vec![CategoricalMessage::point_mass(2, 1); 20];
        model.gibbs_sweep(Some(&ext), &mut rng).unwrap();
        for j in 0..20 {
            assert!(model.assignments(j, 0).iter().all(|&z| z == 1));
        }
        assert!(model.counts_consistent());
    }

    #[test]
    fn doc_move_ratio_matches_joint_difference() {
        let mut rng = seeded(5);
        let docs: Vec<DocObservation> = (0..6)
            .map(|j| DocObservation::new(vec![vec![j % 3, 2, 1, (j + 1) % 4], vec![1, j % 2, 3]]))
            .collect();
        let cfg = MldaConfig::new(4, vec![ModalitySpec::new("a", 4), ModalitySpec::new("b", 3)]);
        let mut model = Mlda::with_documents(cfg, &docs, &mut rng).unwrap();
        let ext = [0.1, 0.4, 0.2, 0.3];
        let mut checked = 0;
        for j in 0..6 {
            for s in 0..4 {
                for t in 0..4 {
                    if model.n_jk[j][s] == 0 || model.n_jk[j][t] != 0 {
                        continue;
                    }
                    let before = model.log_joint();
                    let c = model.n_jk[j][s] as f64;
                    let ratio = model.doc_move_log_ratio(j, s, t, Some(&ext));
                    model.move_doc_category(j, s, t);
                    let diff = model.log_joint() - before + c * (ext[t].ln() - ext[s].ln());
                    assert!((ratio - diff).abs() < 1e-9, "{ratio} vs {diff}");
                    assert!(model.counts_consistent());
                    model.move_doc_category(j, t, s);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn message_length_is_checked() {
        let mut rng = seeded(1);
        let mut model = Mlda::with_documents(
            MldaConfig::new(2, vec![ModalitySpec::new("a", 4)]),
            &two_vocab_docs(),
            &mut rng,
        )
        .unwrap();
        let ext = vec![CategoricalMessage::uniform(3); 20];
        assert!(matches!(
            model.gibbs_sweep(Some(&ext), &mut rng),
            Err(MldaError::MessageLengthMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn doc_posterior_normalizes_counts() {
        let mut rng = seeded(0);
        let mut model = Mlda::new(MldaConfig::new(3, vec![ModalitySpec::new("a", 2)])).unwrap();
        model.add_document(&DocObservation::new(vec![vec![0, 0]]), &mut rng).unwrap();
        assert_eq!(model.doc_posterior(0).probs(), &[1.0 / 3.0; 3]);

        model.add_document(&DocObservation::new(vec![vec![9, 0]]), &mut rng).unwrap();
        let ext = vec![CategoricalMessage::point_mass(3, 0); 2];
        model.gibbs_sweep(Some(&ext), &mut rng).unwrap();
        let p = model.doc_posterior(1);
        assert!((p.prob(0) - 10.0 / 12.0).abs() < 1e-12);
        assert!((p.prob(1) - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabularies_separate() {
        let mut rng = seeded(5);
        let mut model = Mlda::with_documents(
            MldaConfig::new(2, vec![ModalitySpec::new("a", 4)]),
            &two_vocab_docs(),
            &mut rng,
        )
        .unwrap();
        for _ in 0..200 {
            model.gibbs_sweep(None, &mut rng).unwrap();
        }
        let first = model.doc_label(0);
        for j in 0..20 {
            let p = model.doc_posterior(j);
            let expect = if j < 10 { first } else { 1 - first };
            assert!(p.prob(expect) > 0.9, "doc {j}: {:?}", p.probs());
        }
    }

    #[test]
    fn pseudo_obs_edges() {
        let mut rng = seeded(2);
        let msg = CategoricalMessage::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(draw_pseudo_obs(&msg, 0, &mut rng), vec![0, 0]);
        assert_eq!(draw_pseudo_obs(&msg, 5, &mut rng), vec![5, 0]);
        let half = CategoricalMessage::uniform(2);
        let h = draw_pseudo_obs(&half, 10_000, &mut rng);
        let bound = 3.0 * (10_000.0f64 * 0.25).sqrt();
        assert!((h[0] as f64 - 5000.0).abs() <= bound);
        assert!((h[1] as f64 - 5000.0).abs() <= bound);
    }

    #[test]
    fn estimate_params_on_zero_counts_is_uniform() {
        let mut rng = seeded(0);
        let mut model = Mlda::new(MldaConfig::new(2, vec![ModalitySpec::new("a", 3)])).unwrap();
        model.add_document(&DocObservation::new(vec![vec![0, 0, 0]]), &mut rng).unwrap();
        let p = model.estimate_params();
        assert_eq!(p.theta[0], vec![0.5, 0.5]);
        for row in &p.phi[0] {
            for x in row {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn word_scores() {
        let mut rng = seeded(3);
        let config = MldaConfig::new(
            2,
            vec![ModalitySpec::new("feat", 4), ModalitySpec::words("words")],
        );
        let docs: Vec<DocObservation> = two_vocab_docs()
            .into_iter()
            .map(|d| DocObservation::new(vec![d.counts[0].clone().unwrap(), vec![]]))
            .collect();
        let mut model = Mlda::with_documents(config, &docs, &mut rng).unwrap();
        for j in 0..20 {
            let words: &[&str] = if j < 10 { &["apple", "red"] } else { &["sky", "blue"] };
            model.set_words(j, 1, words, &mut rng).unwrap();
        }
        for _ in 0..100 {
            model.gibbs_sweep(None, &mut rng).unwrap();
        }
        assert!(model.counts_consistent());
        let own = model.score_word_sequence(0, 1, &["apple", "red"]).unwrap();
        let other = model.score_word_sequence(0, 1, &["sky", "blue"]).unwrap();
        assert!(own.log_prob > other.log_prob);

        let once = model.score_word_sequence(3, 1, &["apple", "zzz"]).unwrap();
        let twice = model
            .score_word_sequence(3, 1, &["apple", "zzz", "apple", "zzz"])
            .unwrap();
        assert!((twice.log_prob - 2.0 * once.log_prob).abs() < 1e-12);

        let empty = model.score_word_sequence::<&str>(0, 1, &[]).unwrap();
        assert!(empty.empty && empty.log_prob == 0.0);
        assert!(matches!(
            model.score_word_sequence(0, 0, &["x"]),
            Err(MldaError::NotWordModality(_))
        ));
    }

    #[test]
    fn certain_word_scores_zero() {
        // a single registered word with no competitors has phi = 1 in every topic
        let mut rng = seeded(3);
        let config = MldaConfig::new(
            2,
            vec![ModalitySpec::new("feat", 2), ModalitySpec::words("words")],
        );
        let mut model =
            Mlda::with_documents(config, &[DocObservation::new(vec![vec![1, 1], vec![]])], &mut rng)
                .unwrap();
        model.set_words(0, 1, &["only"], &mut rng).unwrap();
        let s = model.score_word_sequence(0, 1, &["only"]).unwrap();
        assert!(s.log_prob.abs() < 1e-12);
    }

    #[test]
    fn k_one_prediction_is_phi() {
        let mut rng = seeded(9);
        let config = MldaConfig::new(1, vec![ModalitySpec::new("a", 3), ModalitySpec::new("b", 2)]);
        let docs = vec![DocObservation::new(vec![vec![1, 2, 0], vec![3, 1]]); 4];
        let model = Mlda::with_documents(config, &docs, &mut rng).unwrap();
        let partial = DocObservation::new(vec![vec![0, 0, 5], vec![0, 0]]);
        let pred = model.predict_modality(&partial, 1, 20, &mut rng).unwrap();
        let phi = model.phi_table(1);
        for (a, b) in pred.probs().iter().zip(&phi[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(Mlda::new(MldaConfig::new(0, vec![ModalitySpec::new("a", 2)])).is_err());
        assert!(Mlda::new(MldaConfig::new(2, vec![ModalitySpec::new("a", 0)])).is_err());
        assert!(Mlda::new(MldaConfig::new(2, vec![ModalitySpec::new("a", 2)]).with_alpha(0.0)).is_err());
        assert!(Mlda::new(MldaConfig::new(2, vec![ModalitySpec::new("a", 2).with_gamma(-1.0)])).is_err());
    }
}
