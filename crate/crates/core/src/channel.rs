//! Noisy phoneme channel and an L-best beam decoder over it.
//!
//! The channel turns a clean phoneme string into an observation: before each
//! clean symbol (and after the last) a geometric number of uniformly random
//! symbols is inserted, then each clean symbol is deleted, substituted by a
//! uniformly chosen different symbol, or kept.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ChannelError;
use crate::message::log_sum_exp;
use crate::npylm::{NpylmScorer, PrefixState};

pub const DEFAULT_BEAM: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhonemeAlphabet {
    symbols: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl PhonemeAlphabet {
    /// Needs at least two distinct symbols.
    pub fn new(symbols: &[char]) -> Result<Self, ChannelError> {
        if symbols.len() < 2 {
            return Err(ChannelError::InvalidAlphabet("need at least two symbols".into()));
        }
        let mut index = BTreeMap::new();
        for (i, &c) in symbols.iter().enumerate() {
            if c.is_whitespace() || c == '$' {
                return Err(ChannelError::InvalidAlphabet(format!("reserved symbol `{c}`")));
            }
            if index.insert(c, i).is_some() {
                return Err(ChannelError::InvalidAlphabet(format!("duplicate symbol `{c}`")));
            }
        }
        Ok(Self {
            symbols: symbols.to_vec(),
            index,
        })
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, c: char) -> Result<usize, ChannelError> {
        self.index.get(&c).copied().ok_or(ChannelError::UnknownSymbol(c))
    }

    pub fn check(&self, s: &str) -> Result<(), ChannelError> {
        s.chars().try_for_each(|c| self.index_of(c).map(|_| ()))
    }
}

impl TryFrom<String> for PhonemeAlphabet {
    type Error = ChannelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s.chars().collect::<Vec<_>>())
    }
}

impl From<PhonemeAlphabet> for String {
    fn from(a: PhonemeAlphabet) -> Self {
        a.symbols.iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannelParams")]
pub struct ChannelParams {
    pub p_sub: f64,
    pub p_del: f64,
    pub p_ins: f64,
}

#[derive(Deserialize)]
struct RawChannelParams {
    p_sub: f64,
    p_del: f64,
    p_ins: f64,
}

impl TryFrom<RawChannelParams> for ChannelParams {
    type Error = ChannelError;

    fn try_from(r: RawChannelParams) -> Result<Self, Self::Error> {
        Self::new(r.p_sub, r.p_del, r.p_ins)
    }
}

impl ChannelParams {
    pub fn new(p_sub: f64, p_del: f64, p_ins: f64) -> Result<Self, ChannelError> {
        for (name, p) in [("p_sub", p_sub), ("p_del", p_del), ("p_ins", p_ins)] {
            if !(0.0..1.0).contains(&p) {
                return Err(ChannelError::InvalidParams(format!("{name} = {p} is outside [0, 1)")));
            }
        }
        if p_sub + p_del >= 1.0 {
            return Err(ChannelError::InvalidParams("p_sub + p_del must be below 1".into()));
        }
        Ok(Self { p_sub, p_del, p_ins })
    }

    pub fn noiseless() -> Self {
        Self {
            p_sub: 0.0,
            p_del: 0.0,
            p_ins: 0.0,
        }
    }

    fn p_match(&self) -> f64 {
        1.0 - self.p_sub - self.p_del
    }
}

/// Passes `clean` through the channel.
pub fn corrupt<R: Rng + ?Sized>(
    clean: &str,
    alphabet: &PhonemeAlphabet,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<String, ChannelError> {
    if clean.is_empty() {
        return Err(ChannelError::InvalidArgument("clean string is empty".into()));
    }
    alphabet.check(clean)?;
    let n = alphabet.len();
    let mut out = String::with_capacity(clean.len() + 4);
    let insert = |out: &mut String, rng: &mut R| {
        while params.p_ins > 0.0 && rng.random::<f64>() < params.p_ins {
            out.push(alphabet.symbols[rng.random_range(0..n)]);
        }
    };
    for c in clean.chars() {
        insert(&mut out, rng);
        let u: f64 = rng.random();
        if u < params.p_del {
            continue;
        }
        if u < params.p_del + params.p_sub {
            let i = alphabet.index_of(c)?;
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            out.push(alphabet.symbols[j]);
        } else {
            out.push(c);
        }
    }
    insert(&mut out, rng);
    Ok(out)
}

/// Forward-algorithm state for a candidate prefix: `col[j]` is the log
/// probability that the prefix produced the first `j` observed symbols, with
/// the gap after the prefix still open for insertions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelColumn {
    col: Vec<f64>,
}

/// Precomputed log weights of one channel over one observation.
#[derive(Debug, Clone)]
pub struct ChannelLattice {
    observed: Vec<usize>,
    log_ins: f64,
    log_close: f64,
    log_del: f64,
    log_match: f64,
    log_sub: f64,
}

impl ChannelLattice {
    pub fn new(observed: &str, alphabet: &PhonemeAlphabet, params: &ChannelParams) -> Result<Self, ChannelError> {
        let observed = observed.chars().map(|c| alphabet.index_of(c)).collect::<Result<_, _>>()?;
        let n = alphabet.len() as f64;
        Ok(Self {
            observed,
            log_ins: (params.p_ins / n).ln(),
            log_close: (1.0 - params.p_ins).ln(),
            log_del: params.p_del.ln(),
            log_match: params.p_match().ln(),
            log_sub: (params.p_sub / (n - 1.0)).ln(),
        })
    }

    pub fn observed_len(&self) -> usize {
        self.observed.len()
    }

    pub fn start(&self) -> ChannelColumn {
        let mut col = vec![0.0; self.observed.len() + 1];
        for j in 1..col.len() {
            col[j] = col[j - 1] + self.log_ins;
        }
        ChannelColumn { col }
    }

    /// Extends the prefix by the clean symbol with alphabet index `c`.
    pub fn push(&self, prev: &ChannelColumn, c: usize) -> ChannelColumn {
        let m = self.observed.len();
        let mut col = vec![f64::NEG_INFINITY; m + 1];
        col[0] = prev.col[0] + self.log_close + self.log_del;
        for j in 1..=m {
            let emit = if self.observed[j - 1] == c { self.log_match } else { self.log_sub };
            let consume = log_add(
                prev.col[j - 1] + self.log_close + emit,
                prev.col[j] + self.log_close + self.log_del,
            );
            col[j] = log_add(consume, col[j - 1] + self.log_ins);
        }
        ChannelColumn { col }
    }

    /// Log probability of the observation given that the prefix is complete.
    pub fn finish(&self, col: &ChannelColumn) -> f64 {
        col.col[self.observed.len()] + self.log_close
    }

    /// Optimistic completion score: the best `j` plus a per-symbol bound on
    /// explaining the rest of the observation.
    fn outlook(&self, col: &ChannelColumn, lm_char_bound: f64) -> f64 {
        let per_symbol = (self.log_close + self.log_match.max(self.log_sub) + lm_char_bound).max(self.log_ins);
        let m = self.observed.len();
        let terms: Vec<f64> = col
            .col
            .iter()
            .enumerate()
            .map(|(j, v)| v + (m - j) as f64 * per_symbol)
            .collect();
        log_sum_exp(&terms) + self.log_close
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log P(observed | candidate)` summed over every monotone alignment.
pub fn channel_logprob(
    candidate: &str,
    observed: &str,
    alphabet: &PhonemeAlphabet,
    params: &ChannelParams,
) -> Result<f64, ChannelError> {
    let lattice = ChannelLattice::new(observed, alphabet, params)?;
    let mut col = lattice.start();
    for c in candidate.chars() {
        col = lattice.push(&col, alphabet.index_of(c)?);
    }
    Ok(lattice.finish(&col))
}

/// Scores candidate strings symbol by symbol.
pub trait LanguageModel {
    type State: Clone;

    fn start(&self) -> Self::State;
    fn push(&self, state: &Self::State, c: char) -> Self::State;
    /// Log probability of the string behind `state` as a complete utterance.
    fn log_prob(&self, state: &Self::State) -> f64;
    /// Upper bound on the log-probability change from appending one symbol,
    /// if the model has one. Enables early stopping in the decoder.
    fn char_bound(&self) -> Option<f64>;
}

/// Every symbol equally likely: `|s| * log(1 / |alphabet|)`.
#[derive(Debug, Clone, Copy)]
pub struct UniformLm {
    log_p: f64,
}

impl UniformLm {
    pub fn new(alphabet: &PhonemeAlphabet) -> Self {
        Self {
            log_p: -(alphabet.len() as f64).ln(),
        }
    }
}

impl LanguageModel for UniformLm {
    type State = usize;

    fn start(&self) -> usize {
        0
    }

    fn push(&self, state: &usize, _c: char) -> usize {
        state + 1
    }

    fn log_prob(&self, state: &usize) -> f64 {
        *state as f64 * self.log_p
    }

    fn char_bound(&self) -> Option<f64> {
        Some(self.log_p)
    }
}

impl LanguageModel for NpylmScorer<'_> {
    type State = PrefixState;

    fn start(&self) -> PrefixState {
        NpylmScorer::start(self)
    }

    fn push(&self, state: &PrefixState, c: char) -> PrefixState {
        NpylmScorer::push(self, state, c)
    }

    fn log_prob(&self, state: &PrefixState) -> f64 {
        NpylmScorer::log_prob(self, state)
    }

    fn char_bound(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    /// Channel plus language-model log probability, in nats.
    pub log_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LBest {
    /// Distinct strings, best first.
    pub hypotheses: Vec<Hypothesis>,
    /// Fewer than the requested number of candidates survived the search.
    pub beam_exhausted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub l: usize,
    pub beam: usize,
    /// Longest candidate, as a multiple of the observation length.
    pub max_len_factor: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            l: 10,
            beam: DEFAULT_BEAM,
            max_len_factor: 2,
        }
    }
}

struct Prefix<S> {
    text: String,
    channel: ChannelColumn,
    lm: S,
}

/// Length-synchronous beam search for the `l` best candidates under
/// `channel_logprob + lm.log_prob`.
///
/// Every prefix kept in the beam is also scored as a complete candidate. The
/// search stops at the length cap or once no prefix's optimistic outlook
/// beats the current `l`-th best candidate.
pub fn recognize_lbest<L: LanguageModel>(
    observed: &str,
    alphabet: &PhonemeAlphabet,
    params: &ChannelParams,
    lm: &L,
    config: &DecoderConfig,
) -> Result<LBest, ChannelError> {
    if config.l == 0 || config.beam < config.l {
        return Err(ChannelError::InvalidArgument(format!(
            "need 1 <= l <= beam, got l = {} and beam = {}",
            config.l, config.beam
        )));
    }
    let lattice = ChannelLattice::new(observed, alphabet, params)?;
    let max_len = (config.max_len_factor * lattice.observed_len()).max(1);
    let bound = lm.char_bound();
    let rank_bound = bound.unwrap_or(0.0);
    let mut pool: Vec<Hypothesis> = Vec::new();
    let mut beam = vec![Prefix {
        text: String::new(),
        channel: lattice.start(),
        lm: lm.start(),
    }];
    for _ in 0..max_len {
        let mut next: Vec<(f64, Prefix<L::State>)> = Vec::with_capacity(beam.len() * alphabet.len());
        for p in &beam {
            for (ci, &c) in alphabet.symbols().iter().enumerate() {
                let channel = lattice.push(&p.channel, ci);
                let lm_state = lm.push(&p.lm, c);
                let rank = lattice.outlook(&channel, rank_bound) + lm.log_prob(&lm_state);
                if rank == f64::NEG_INFINITY {
                    continue;
                }
                let mut text = p.text.clone();
                text.push(c);
                next.push((
                    rank,
                    Prefix {
                        text,
                        channel,
                        lm: lm_state,
                    },
                ));
            }
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.text.cmp(&b.1.text)));
        next.truncate(config.beam);
        for (_, p) in &next {
            let score = lattice.finish(&p.channel) + lm.log_prob(&p.lm);
            if score.is_finite() {
                pool.push(Hypothesis {
                    text: p.text.clone(),
                    log_score: score,
                });
            }
        }
        pool.sort_by(|a, b| b.log_score.total_cmp(&a.log_score).then_with(|| a.text.cmp(&b.text)));
        pool.truncate(config.l);
        // best final score any extension could still reach; a model without a
        // per-symbol bound contributes at most log 1
        let reach = match bound {
            Some(_) => next.first().map_or(f64::NEG_INFINITY, |(r, _)| *r),
            None => next
                .iter()
                .map(|(_, p)| lattice.outlook(&p.channel, 0.0))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        let cutoff = if pool.len() == config.l {
            pool[config.l - 1].log_score
        } else {
            f64::NEG_INFINITY
        };
        beam = next.into_iter().map(|(_, p)| p).collect();
        if beam.is_empty() || reach < cutoff {
            break;
        }
    }
    Ok(LBest {
        beam_exhausted: pool.len() < config.l,
        hypotheses: pool,
    })
}

/// Exact `argmax` over every candidate up to `max_len` symbols; for testing
/// the decoder on small alphabets.
pub fn exhaustive_best<L: LanguageModel>(
    observed: &str,
    alphabet: &PhonemeAlphabet,
    params: &ChannelParams,
    lm: &L,
    max_len: usize,
) -> Result<Vec<Hypothesis>, ChannelError> {
    let lattice = ChannelLattice::new(observed, alphabet, params)?;
    let mut all = Vec::new();
    let mut frontier = vec![(String::new(), lattice.start(), lm.start())];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (text, col, st) in &frontier {
            for (ci, &c) in alphabet.symbols().iter().enumerate() {
                let col = lattice.push(col, ci);
                let st = lm.push(st, c);
                let mut text = text.clone();
                text.push(c);
                all.push(Hypothesis {
                    text: text.clone(),
                    log_score: lattice.finish(&col) + lm.log_prob(&st),
                });
                next.push((text, col, st));
            }
        }
        frontier = next;
    }
    all.sort_by(|a, b| b.log_score.total_cmp(&a.log_score).then_with(|| a.text.cmp(&b.text)));
    Ok(all)
}
