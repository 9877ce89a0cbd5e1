//! Nested Pitman-Yor language model and unsupervised word segmentation.
//!
//! A bigram word model whose unigram base measure is a character-level
//! HPYLM: the probability of a word never seen before is the probability of
//! spelling it, character by character, followed by an end-of-word symbol.
//! Segmentations are resampled sentence by sentence with forward filtering
//! over all ways to cut the string and backward sampling of the cuts.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::rc::Rc;

use rustc_hash::FxHashMap as HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::LmError;
use crate::message::{log_sum_exp, sample_log_index};
use crate::pylm::{Hpylm, NodeId, PyParams};
use crate::rng::SerketRng;

pub const DEFAULT_MAX_WORD_LEN: usize = 8;
pub const WORD_ORDER: usize = 2;
pub const CHAR_ORDER: usize = 8;

/// Word id of the sentence-start context.
const BOS: u32 = 0;
/// Word id used for strings outside the registry; never has customers.
const UNSEEN: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpylmConfig {
    pub word_order: usize,
    pub char_order: usize,
    pub params: PyParams,
    pub max_word_len: usize,
}

impl Default for NpylmConfig {
    fn default() -> Self {
        Self {
            word_order: WORD_ORDER,
            char_order: CHAR_ORDER,
            params: PyParams::default(),
            max_word_len: DEFAULT_MAX_WORD_LEN,
        }
    }
}

/// A raw string with the inter-character positions where words begin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentedSentence {
    pub raw: String,
    pub cut_points: Vec<usize>,
}

impl SegmentedSentence {
    pub fn new(raw: impl Into<String>, mut cut_points: Vec<usize>) -> Result<Self, LmError> {
        let raw = raw.into();
        let n = raw.chars().count();
        cut_points.sort_unstable();
        cut_points.dedup();
        if let Some(c) = cut_points.iter().find(|&&c| c == 0 || c >= n) {
            return Err(LmError::InvalidArgument(format!("cut {c} outside 1..{n}")));
        }
        Ok(Self { raw, cut_points })
    }

    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let mut raw = String::new();
        let mut cut_points = Vec::new();
        let mut pos = 0;
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                cut_points.push(pos);
            }
            raw.push_str(w.as_ref());
            pos += w.as_ref().chars().count();
        }
        Self { raw, cut_points }
    }

    pub fn len(&self) -> usize {
        self.raw.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn words(&self) -> Vec<String> {
        let chars: Vec<char> = self.raw.chars().collect();
        if chars.is_empty() {
            return Vec::new();
        }
        let mut bounds = vec![0];
        bounds.extend(&self.cut_points);
        bounds.push(chars.len());
        bounds.windows(2).map(|b| chars[b[0]..b[1]].iter().collect()).collect()
    }
}

/// Word model, character model and the word-string registry.
#[derive(Debug, Clone)]
pub struct NpylmModel {
    config: NpylmConfig,
    alphabet: Vec<char>,
    char_index: HashMap<char, u32>,
    chars: Hpylm,
    words: Hpylm,
    word_ids: HashMap<String, u32>,
    spellings: Vec<String>,
}

/// Per-substring quantities reused across a forward pass.
#[derive(Debug, Clone, Copy)]
struct SubInfo {
    id: u32,
    /// Bigram context node when this substring is the previous word.
    node: Option<NodeId>,
    unigram: f64,
}

impl NpylmModel {
    pub fn new(alphabet: &[char], config: NpylmConfig) -> Result<Self, LmError> {
        if alphabet.is_empty() {
            return Err(LmError::InvalidArgument("empty alphabet".into()));
        }
        if config.max_word_len == 0 || config.word_order < 1 || config.char_order < 1 {
            return Err(LmError::InvalidArgument("orders and max word length must be positive".into()));
        }
        PyParams::new(config.params.discount, config.params.concentration)?;
        let mut char_index = HashMap::default();
        for (i, &c) in alphabet.iter().enumerate() {
            if char_index.insert(c, i as u32).is_some() {
                return Err(LmError::InvalidArgument(format!("duplicate symbol `{c}`")));
            }
        }
        Ok(Self {
            config,
            alphabet: alphabet.to_vec(),
            char_index,
            chars: Hpylm::new(config.char_order, config.params),
            words: Hpylm::new(config.word_order, config.params),
            word_ids: HashMap::default(),
            spellings: vec![String::new()],
        })
    }

    pub fn config(&self) -> &NpylmConfig {
        &self.config
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn max_word_len(&self) -> usize {
        self.config.max_word_len
    }

    fn eow(&self) -> u32 {
        self.alphabet.len() as u32
    }

    fn bow(&self) -> u32 {
        self.alphabet.len() as u32 + 1
    }

    fn char_base(&self) -> f64 {
        1.0 / (self.alphabet.len() as f64 + 1.0)
    }

    fn spell(&self, word: &str) -> Result<Vec<u32>, LmError> {
        let mut ids = Vec::with_capacity(word.len() + 1);
        for c in word.chars() {
            ids.push(*self.char_index.get(&c).ok_or(LmError::UnknownCharacter(c))?);
        }
        ids.push(self.eow());
        Ok(ids)
    }

    /// Probability of spelling `word` under the character model, including the
    /// end-of-word symbol.
    pub fn base_word_prob(&self, word: &str) -> Result<f64, LmError> {
        self.spelling_prob(&self.spell(word)?)
    }

    /// Probability of the character stream of `word` with no end-of-word symbol.
    pub fn char_prefix_prob(&self, word: &str) -> Result<f64, LmError> {
        let mut ids = self.spell(word)?;
        ids.pop();
        self.spelling_prob(&ids)
    }

    fn spelling_prob(&self, ids: &[u32]) -> Result<f64, LmError> {
        let mut context = vec![self.bow()];
        let mut p = 1.0;
        let base = self.char_base();
        for &c in ids {
            p *= self.chars.prob(&context, c, base);
            context.push(c);
        }
        Ok(p)
    }

    fn word_id(&self, word: &str) -> u32 {
        self.word_ids.get(word).copied().unwrap_or(UNSEEN)
    }

    fn prev_id(&self, prev: Option<&str>) -> u32 {
        prev.map_or(BOS, |p| self.word_id(p))
    }

    /// `P(word | prev)`; `prev = None` is the sentence start.
    pub fn word_prob(&self, word: &str, prev: Option<&str>) -> Result<f64, LmError> {
        let base = self.base_word_prob(word)?;
        Ok(self.words.prob(&[self.prev_id(prev)], self.word_id(word), base))
    }

    /// Mass the predictive at context `prev` gives to strings outside the
    /// registry: the back-off product times the base mass not covered by
    /// registered words.
    pub fn unseen_mass(&self, prev: Option<&str>) -> Result<f64, LmError> {
        let mut covered = 0.0;
        for w in self.registry() {
            covered += self.base_word_prob(w)?;
        }
        Ok(self.words.backoff_product(&[self.prev_id(prev)]) * (1.0 - covered))
    }

    /// Registered word strings (every word that ever had a customer).
    pub fn registry(&self) -> impl Iterator<Item = &str> {
        self.spellings[1..].iter().map(String::as_str)
    }

    fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.word_ids.get(word) {
            return id;
        }
        let id = self.spellings.len() as u32;
        self.spellings.push(word.to_owned());
        self.word_ids.insert(word.to_owned(), id);
        id
    }

    /// Seats `word` after `prev`. A new table at the word-unigram level adds
    /// the spelling to the character model.
    pub fn add_customer(&mut self, word: &str, prev: Option<&str>, rng: &mut SerketRng) -> Result<(), LmError> {
        if word.is_empty() {
            return Err(LmError::InvalidArgument("empty word".into()));
        }
        let spelling = self.spell(word)?;
        let base = self.base_word_prob(word)?;
        let prev_id = match prev {
            Some(p) => self.intern(p),
            None => BOS,
        };
        let id = self.intern(word);
        if self.words.add(&[prev_id], id, base, rng) {
            self.add_spelling(&spelling, rng);
        }
        Ok(())
    }

    pub fn remove_customer(&mut self, word: &str, prev: Option<&str>, rng: &mut SerketRng) -> Result<(), LmError> {
        let id = self.word_id(word);
        let prev_id = self.prev_id(prev);
        if id == UNSEEN || prev_id == UNSEEN {
            return Err(LmError::RemoveFromEmpty(word.to_owned()));
        }
        if self
            .words
            .remove(&[prev_id], id, rng)
            .map_err(|_| LmError::RemoveFromEmpty(word.to_owned()))?
        {
            let spelling = self.spell(word)?;
            self.remove_spelling(&spelling, rng)?;
        }
        Ok(())
    }

    fn add_spelling(&mut self, spelling: &[u32], rng: &mut SerketRng) {
        let base = self.char_base();
        let mut context = vec![self.bow()];
        for &c in spelling {
            self.chars.add(&context, c, base, rng);
            context.push(c);
        }
    }

    fn remove_spelling(&mut self, spelling: &[u32], rng: &mut SerketRng) -> Result<(), LmError> {
        let mut context = vec![self.bow()];
        for &c in spelling {
            self.chars.remove(&context, c, rng)?;
            context.push(c);
        }
        Ok(())
    }

    pub fn add_sentence<S: AsRef<str>>(&mut self, words: &[S], rng: &mut SerketRng) -> Result<(), LmError> {
        let mut prev: Option<&str> = None;
        for w in words {
            self.add_customer(w.as_ref(), prev, rng)?;
            prev = Some(w.as_ref());
        }
        Ok(())
    }

    pub fn remove_sentence<S: AsRef<str>>(&mut self, words: &[S], rng: &mut SerketRng) -> Result<(), LmError> {
        let mut prev: Option<&str> = None;
        for w in words {
            self.remove_customer(w.as_ref(), prev, rng)?;
            prev = Some(w.as_ref());
        }
        Ok(())
    }

    /// `sum_i log P(w_i | w_{i-1})` with the sentence start as first context.
    pub fn sequence_prob(&self, seg: &SegmentedSentence) -> Result<f64, LmError> {
        let words = seg.words();
        if let Some(w) = words.iter().find(|w| w.chars().count() > self.config.max_word_len) {
            return Err(LmError::InvalidArgument(format!("word `{w}` exceeds the maximum length")));
        }
        self.words_log_prob(&words)
    }

    pub fn words_log_prob<S: AsRef<str>>(&self, words: &[S]) -> Result<f64, LmError> {
        let mut total = 0.0;
        let mut prev: Option<&str> = None;
        for w in words {
            total += self.word_prob(w.as_ref(), prev)?.ln();
            prev = Some(w.as_ref());
        }
        Ok(total)
    }

    /// Empties the model and seats every word of `sentences` in order.
    pub fn fit_from_words<S: AsRef<str>>(&mut self, sentences: &[Vec<S>], rng: &mut SerketRng) -> Result<(), LmError> {
        self.clear();
        for s in sentences {
            self.add_sentence(s, rng)?;
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.chars.clear();
        self.words.clear();
        self.word_ids.clear();
        self.spellings.truncate(1);
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty() && self.chars.is_empty()
    }

    pub fn word_model(&self) -> &Hpylm {
        &self.words
    }

    pub fn char_model(&self) -> &Hpylm {
        &self.chars
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        self.words.check_invariants().map_err(|e| format!("word model: {e}"))?;
        self.chars.check_invariants().map_err(|e| format!("char model: {e}"))?;
        for ((_, w), _) in self.words.count_profile() {
            if (w as usize) >= self.spellings.len() {
                return Err(format!("word id {w} has no spelling"));
            }
        }
        Ok(())
    }

    /// Word-model counts keyed by word strings: `(prev, word) -> customers`.
    pub fn word_counts(&self) -> std::collections::BTreeMap<(String, String), u32> {
        self.words
            .customer_profile()
            .into_iter()
            .map(|((ctx, w), c)| {
                let prev = ctx.first().map_or("", |&p| self.spelling(p)).to_owned();
                ((prev, self.spelling(w).to_owned()), c)
            })
            .collect()
    }

    fn spelling(&self, id: u32) -> &str {
        if id == BOS {
            "<s>"
        } else {
            &self.spellings[id as usize]
        }
    }

    /// Tab-separated `context  word  customers  tables` lines for both models.
    pub fn dump(&self) -> String {
        let mut out = String::from("# model\tcontext\tsymbol\tcustomers\ttables\n");
        for ((ctx, w), (c, t)) in self.words.count_profile() {
            let ctx: Vec<&str> = ctx.iter().map(|&i| self.spelling(i)).collect();
            let _ = writeln!(out, "word\t{}\t{}\t{c}\t{t}", ctx.join(" "), self.spelling(w));
        }
        for ((ctx, w), (c, t)) in self.chars.count_profile() {
            let ctx: String = ctx.iter().map(|&i| self.char_label(i)).collect();
            let _ = writeln!(out, "char\t{ctx}\t{}\t{c}\t{t}", self.char_label(w));
        }
        out
    }

    fn char_label(&self, id: u32) -> String {
        match id {
            i if i == self.eow() => "$".into(),
            i if i == self.bow() => "^".into(),
            i => self.alphabet[i as usize].to_string(),
        }
    }

    fn sub_info(&self, word: &str) -> Result<SubInfo, LmError> {
        Ok(self.sub_info_with_base(word, self.base_word_prob(word)?))
    }

    fn sub_info_with_base(&self, word: &str, base: f64) -> SubInfo {
        let id = self.word_id(word);
        let root = self.words.root();
        let unigram = self.words.node_prob(root, id, base);
        let node = if id == UNSEEN { None } else { self.words.child(root, id) };
        SubInfo { id, node, unigram }
    }

    /// Spelling probabilities of `word` without and with the end-of-word
    /// symbol, given the no-end-of-word probability of `word` minus its last
    /// character.
    fn extend_spelling(&self, head: f64, word: &str, ids: &mut Vec<u32>) -> Result<(f64, f64), LmError> {
        ids.clear();
        ids.push(self.bow());
        for c in word.chars() {
            ids.push(*self.char_index.get(&c).ok_or(LmError::UnknownCharacter(c))?);
        }
        let base = self.char_base();
        let n = ids.len();
        let open = head * self.chars.prob(&ids[..n - 1], ids[n - 1], base);
        Ok((open, open * self.chars.prob(ids, self.eow(), base)))
    }

    #[inline]
    fn bigram(&self, prev: Option<NodeId>, word: &SubInfo) -> f64 {
        match prev {
            Some(node) => self.words.node_prob(node, word.id, word.unigram),
            None => word.unigram,
        }
    }

    fn bos_node(&self) -> Option<NodeId> {
        self.words.child(self.words.root(), BOS)
    }

    /// Forward table: `alpha[t][k - 1]` is the log probability of the first
    /// `t` characters with the last word spanning `t - k .. t`.
    fn forward(&self, chars: &[char]) -> Result<(Vec<Vec<f64>>, Vec<Vec<SubInfo>>), LmError> {
        let n = chars.len();
        let w_max = self.config.max_word_len;
        // info[end][k - 1] describes chars[end - k .. end]
        let mut info: Vec<Vec<SubInfo>> = vec![Vec::new(); n + 1];
        for end in 1..=n {
            for k in 1..=w_max.min(end) {
                let s: String = chars[end - k..end].iter().collect();
                info[end].push(self.sub_info(&s)?);
            }
        }
        let bos = self.bos_node();
        let mut alpha = vec![Vec::new(); n + 1];
        for t in 1..=n {
            let mut col = Vec::with_capacity(w_max.min(t));
            for k in 1..=w_max.min(t) {
                let word = &info[t][k - 1];
                let start = t - k;
                let v = if start == 0 {
                    self.bigram(bos, word).ln()
                } else {
                    let terms: Vec<f64> = (1..=w_max.min(start))
                        .map(|j| self.bigram(info[start][j - 1].node, word).ln() + alpha[start][j - 1])
                        .collect();
                    log_sum_exp(&terms)
                };
                col.push(v);
            }
            alpha[t] = col;
        }
        Ok((alpha, info))
    }

    /// Log probability of `raw` summed over every segmentation with words of
    /// at most the maximum length.
    pub fn string_log_prob(&self, raw: &str) -> Result<f64, LmError> {
        let chars: Vec<char> = raw.chars().collect();
        if chars.is_empty() {
            return Ok(0.0);
        }
        let (alpha, _) = self.forward(&chars)?;
        Ok(log_sum_exp(&alpha[chars.len()]))
    }

    /// Draws a segmentation of `raw` from its posterior under the current model.
    pub fn sample_segmentation<R: Rng + ?Sized>(&self, raw: &str, rng: &mut R) -> Result<SegmentedSentence, LmError> {
        let chars: Vec<char> = raw.chars().collect();
        let n = chars.len();
        if n == 0 {
            return Ok(SegmentedSentence {
                raw: String::new(),
                cut_points: Vec::new(),
            });
        }
        let (alpha, info) = self.forward(&chars)?;
        let w_max = self.config.max_word_len;
        let mut cuts = Vec::new();
        let mut t = n;
        let mut k = sample_log_index(&alpha[n], rng) + 1;
        loop {
            let start = t - k;
            if start == 0 {
                break;
            }
            cuts.push(start);
            let word = &info[t][k - 1];
            let logs: Vec<f64> = (1..=w_max.min(start))
                .map(|j| self.bigram(info[start][j - 1].node, word).ln() + alpha[start][j - 1])
                .collect();
            t = start;
            k = sample_log_index(&logs, rng) + 1;
        }
        cuts.reverse();
        Ok(SegmentedSentence {
            raw: raw.to_owned(),
            cut_points: cuts,
        })
    }

    /// Most probable segmentation (Viterbi) of `raw`.
    pub fn best_segmentation(&self, raw: &str) -> Result<SegmentedSentence, LmError> {
        let chars: Vec<char> = raw.chars().collect();
        let n = chars.len();
        let w_max = self.config.max_word_len;
        if n == 0 {
            return SegmentedSentence::new("", Vec::new());
        }
        let mut info: Vec<Vec<SubInfo>> = vec![Vec::new(); n + 1];
        for end in 1..=n {
            for k in 1..=w_max.min(end) {
                let s: String = chars[end - k..end].iter().collect();
                info[end].push(self.sub_info(&s)?);
            }
        }
        let bos = self.bos_node();
        let mut best = vec![Vec::new(); n + 1];
        let mut back = vec![Vec::new(); n + 1];
        for t in 1..=n {
            for k in 1..=w_max.min(t) {
                let word = &info[t][k - 1];
                let start = t - k;
                let (v, arg) = if start == 0 {
                    (self.bigram(bos, word).ln(), 0)
                } else {
                    (1..=w_max.min(start))
                        .map(|j| (self.bigram(info[start][j - 1].node, word).ln() + best[start][j - 1], j))
                        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
                };
                best[t].push(v);
                back[t].push(arg);
            }
        }
        let mut cuts = Vec::new();
        let mut t = n;
        let mut k = crate::message::argmax(&best[n]) + 1;
        while t > k {
            let j = back[t][k - 1];
            t -= k;
            cuts.push(t);
            k = j;
        }
        cuts.reverse();
        SegmentedSentence::new(raw, cuts)
    }

    /// Blocked Gibbs segmentation of a corpus. Sentences start as chunks of the
    /// maximum word length; each iteration removes a sentence's words, draws a
    /// new segmentation and seats it again. `on_iteration` is called after
    /// every iteration with the current segmentations.
    pub fn segment_corpus_with<S: AsRef<str>>(
        &mut self,
        strings: &[S],
        iters: usize,
        rng: &mut SerketRng,
        mut on_iteration: impl FnMut(usize, &Self, &[SegmentedSentence]),
    ) -> Result<Vec<SegmentedSentence>, LmError> {
        let w_max = self.config.max_word_len;
        let mut segs: Vec<SegmentedSentence> = strings
            .iter()
            .map(|s| {
                let n = s.as_ref().chars().count();
                SegmentedSentence {
                    raw: s.as_ref().to_owned(),
                    cut_points: (1..n).filter(|c| c % w_max == 0).collect(),
                }
            })
            .collect();
        for seg in &segs {
            self.add_sentence(&seg.words(), rng)?;
        }
        let mut order: Vec<usize> = (0..segs.len()).collect();
        for it in 0..iters {
            order.shuffle(rng);
            for &i in &order {
                if segs[i].is_empty() {
                    continue;
                }
                self.remove_sentence(&segs[i].words(), rng)?;
                segs[i] = self.sample_segmentation(&segs[i].raw, rng)?;
                self.add_sentence(&segs[i].words(), rng)?;
            }
            on_iteration(it, self, &segs);
        }
        Ok(segs)
    }

    pub fn segment_corpus<S: AsRef<str>>(
        &mut self,
        strings: &[S],
        iters: usize,
        rng: &mut SerketRng,
    ) -> Result<Vec<SegmentedSentence>, LmError> {
        if iters == 0 {
            return Err(LmError::InvalidArgument("need at least one iteration".into()));
        }
        self.segment_corpus_with(strings, iters, rng, |_, _, _| {})
    }

    /// Prefix scorer for decoding: tracks the forward columns of a growing string.
    pub fn prefix_scorer(&self) -> NpylmScorer<'_> {
        NpylmScorer {
            model: self,
            cache: RefCell::new(HashMap::default()),
            ids: RefCell::new(Vec::new()),
        }
    }
}

/// Incremental string scorer over an [`NpylmModel`] with a substring cache.
pub struct NpylmScorer<'a> {
    model: &'a NpylmModel,
    /// Substring info and the substring's spelling probability without end-of-word.
    cache: RefCell<HashMap<String, (SubInfo, f64)>>,
    ids: RefCell<Vec<u32>>,
}

/// Forward column at one position. Words without a bigram context node all
/// predict through the unigram, so their mass is pooled.
#[derive(Debug, Clone, PartialEq)]
struct Column {
    total: f64,
    pooled: f64,
    contexts: Vec<(NodeId, f64)>,
}

/// Last characters and forward columns of a prefix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrefixState {
    tail: Vec<char>,
    columns: Vec<Rc<Column>>,
    len: usize,
}

impl PrefixState {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Streaming log-sum-exp.
#[derive(Clone, Copy)]
struct Lse {
    max: f64,
    sum: f64,
}

impl Lse {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    #[inline]
    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl NpylmScorer<'_> {
    fn info(&self, s: &[char], key: &mut String) -> SubInfo {
        key.clear();
        key.extend(s);
        self.lookup(key)
    }

    fn lookup(&self, key: &mut String) -> SubInfo {
        if let Some((i, _)) = self.cache.borrow().get(key.as_str()) {
            return *i;
        }
        let (info, _) = self.insert(key);
        info
    }

    fn insert(&self, key: &mut String) -> (SubInfo, f64) {
        let last = key.pop().expect("non-empty substring");
        let head = if key.is_empty() {
            1.0
        } else if let Some(&(_, p)) = self.cache.borrow().get(key.as_str()) {
            p
        } else {
            self.insert(key).1
        };
        key.push(last);
        let entry = match self.model.extend_spelling(head, key, &mut self.ids.borrow_mut()) {
            Ok((open, base)) => (self.model.sub_info_with_base(key, base), open),
            Err(_) => (
                SubInfo {
                    id: UNSEEN,
                    node: None,
                    unigram: 0.0,
                },
                0.0,
            ),
        };
        self.cache.borrow_mut().insert(key.clone(), entry);
        entry
    }

    pub fn start(&self) -> PrefixState {
        PrefixState::default()
    }

    pub fn push(&self, state: &PrefixState, c: char) -> PrefixState {
        let w_max = self.model.config.max_word_len;
        let mut tail = Vec::with_capacity(w_max);
        let keep = state.tail.len().min(w_max - 1);
        tail.extend_from_slice(&state.tail[state.tail.len() - keep..]);
        tail.push(c);
        let t = state.len + 1;
        let m = tail.len();
        let bos = self.model.bos_node();
        let mut key = String::with_capacity(4 * w_max);
        let mut total = Lse::EMPTY;
        let mut pooled = Lse::EMPTY;
        let mut contexts = Vec::new();
        for k in 1..=w_max.min(t) {
            let word = self.info(&tail[m - k..], &mut key);
            let start = t - k;
            let v = if start == 0 {
                self.model.bigram(bos, &word).ln()
            } else {
                // the last column is position t - 1
                let prev = &state.columns[state.columns.len() - k];
                let mut acc = Lse::EMPTY;
                acc.add(prev.pooled + word.unigram.ln());
                for &(node, a) in &prev.contexts {
                    acc.add(self.model.bigram(Some(node), &word).ln() + a);
                }
                acc.value()
            };
            total.add(v);
            match word.node {
                Some(node) => contexts.push((node, v)),
                None => pooled.add(v),
            }
        }
        let col = Column {
            total: total.value(),
            pooled: pooled.value(),
            contexts,
        };
        let skip = state.columns.len().saturating_sub(w_max - 1);
        let mut columns = Vec::with_capacity(w_max);
        columns.extend_from_slice(&state.columns[skip..]);
        columns.push(Rc::new(col));
        PrefixState { tail, columns, len: t }
    }

    /// Log probability of the prefix as a complete string.
    pub fn log_prob(&self, state: &PrefixState) -> f64 {
        state.columns.last().map_or(0.0, |c| c.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn model() -> NpylmModel {
        NpylmModel::new(&['a', 'b', 'c', 'd'], NpylmConfig::default()).unwrap()
    }

    #[test]
    fn empty_model_base_is_uniform() {
        let m = model();
        let p = m.base_word_prob("abc").unwrap();
        assert!((p - 0.2f64.powi(4)).abs() < 1e-15);
        assert_eq!(m.word_prob("abc", None).unwrap(), p);
        assert!(matches!(m.base_word_prob("xz"), Err(LmError::UnknownCharacter('x'))));
    }

    #[test]
    fn word_never_outscores_its_prefix() {
        let mut rng = seeded(4);
        let mut m = model();
        m.fit_from_words(&[vec!["ab", "cd", "abcd"], vec!["a", "dd"]], &mut rng).unwrap();
        for len in 2..8 {
            let w: String = "abcdabcd".chars().take(len).collect();
            let prefix: String = w.chars().take(len - 1).collect();
            assert!(m.base_word_prob(&w).unwrap() <= m.char_prefix_prob(&prefix).unwrap());
        }
    }

    #[test]
    fn trained_spelling_beats_permutation() {
        let mut rng = seeded(5);
        let mut m = model();
        let corpus: Vec<Vec<&str>> = (0..30).map(|_| vec!["abc"]).collect();
        m.fit_from_words(&corpus, &mut rng).unwrap();
        assert!(m.base_word_prob("abc").unwrap() > m.base_word_prob("acb").unwrap());
    }

    #[test]
    fn one_word_sentence_in_empty_model() {
        let m = model();
        let seg = SegmentedSentence::from_words(&["abd"]);
        let lp = m.sequence_prob(&seg).unwrap();
        assert!((lp - m.base_word_prob("abd").unwrap().ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_on_nothing_is_empty_and_fit_is_deterministic() {
        let mut m = model();
        m.fit_from_words::<&str>(&[], &mut seeded(0)).unwrap();
        assert!(m.is_empty());
        let corpus = vec![vec!["ab", "c"], vec!["ab", "ab", "d"]];
        let mut a = model();
        let mut b = model();
        a.fit_from_words(&corpus, &mut seeded(9)).unwrap();
        b.fit_from_words(&corpus, &mut seeded(9)).unwrap();
        assert_eq!(a.word_model().count_profile(), b.word_model().count_profile());
        assert_eq!(a.char_model().count_profile(), b.char_model().count_profile());
    }

    #[test]
    fn add_remove_pair_restores_empty() {
        let mut rng = seeded(6);
        let mut m = model();
        m.add_customer("abd", Some("c"), &mut rng).unwrap();
        m.check_invariants().unwrap();
        m.remove_customer("abd", Some("c"), &mut rng).unwrap();
        assert!(m.is_empty());
        assert!(m.word_model().count_profile().is_empty());
        assert!(m.char_model().count_profile().is_empty());
        assert!(matches!(
            m.remove_customer("abd", Some("c"), &mut rng),
            Err(LmError::RemoveFromEmpty(_))
        ));
    }

    #[test]
    fn max_word_len_one_forces_characters() {
        let mut rng = seeded(7);
        let mut m = NpylmModel::new(
            &['a', 'b', 'c'],
            NpylmConfig {
                max_word_len: 1,
                ..NpylmConfig::default()
            },
        )
        .unwrap();
        let segs = m.segment_corpus(&["abcab", "ccba"], 3, &mut rng).unwrap();
        assert_eq!(segs[0].cut_points, vec![1, 2, 3, 4]);
        assert_eq!(segs[1].cut_points, vec![1, 2, 3]);
    }

    #[test]
    fn segmented_sentence_words_round_trip() {
        let s = SegmentedSentence::from_words(&["ab", "c", "dd"]);
        assert_eq!(s.cut_points, vec![2, 3]);
        assert_eq!(s.words(), vec!["ab", "c", "dd"]);
        assert!(SegmentedSentence::new("abc", vec![3]).is_err());
        assert!(SegmentedSentence::new("abc", vec![0]).is_err());
    }

    #[test]
    fn prefix_scorer_matches_full_forward() {
        let mut rng = seeded(8);
        let mut m = model();
        m.fit_from_words(&[vec!["ab", "cd"], vec!["abc", "d", "ab"]], &mut rng).unwrap();
        let scorer = m.prefix_scorer();
        let raw = "abcdabdcabcd";
        let mut st = scorer.start();
        for (i, c) in raw.chars().enumerate() {
            st = scorer.push(&st, c);
            let prefix: String = raw.chars().take(i + 1).collect();
            let full = m.string_log_prob(&prefix).unwrap();
            assert!((scorer.log_prob(&st) - full).abs() < 1e-9, "prefix {prefix}");
        }
    }

    #[test]
    fn viterbi_picks_known_words() {
        let mut rng = seeded(10);
        let mut m = model();
        let corpus: Vec<Vec<&str>> = (0..20).map(|_| vec!["abc", "dd"]).collect();
        m.fit_from_words(&corpus, &mut rng).unwrap();
        assert_eq!(m.best_segmentation("abcdd").unwrap().cut_points, vec![3]);
    }
}
