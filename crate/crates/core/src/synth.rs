//! Synthetic worlds with known categories, and line-delimited JSON datasets.
//!
//! A world has an integrated category `z`, an object category `z_obj` and a
//! motion category `z_mot`. Objects emit visual, audio and haptic histograms,
//! motions emit motion histograms, and every record carries a teaching
//! utterance: a noun naming the object followed by function words, passed
//! through the noisy phoneme channel.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::channel::{corrupt, ChannelParams, PhonemeAlphabet};
use crate::error::DataError;
use crate::message::{argmax, sample_index};
use crate::rng::{derived, SerketRng};

pub const MIN_PHONEMES: usize = 5;
pub const DATASET_HEADER: &str = "# serket dataset v1";

/// Object-side modalities, in the order used for object models.
pub const OBJECT_MODALITIES: [&str; 3] = ["visual", "audio", "haptic"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityDims {
    pub visual: usize,
    pub audio: usize,
    pub haptic: usize,
    pub motion: usize,
}

impl Default for ModalityDims {
    fn default() -> Self {
        Self {
            visual: 50,
            audio: 50,
            haptic: 15,
            motion: 70,
        }
    }
}

impl ModalityDims {
    pub fn uniform(n: usize) -> Self {
        Self {
            visual: n,
            audio: n,
            haptic: n,
            motion: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconSpec {
    /// Explicit nouns per object category; generated when empty.
    pub nouns: Vec<Vec<String>>,
    /// Explicit function words; generated when empty and `function_words_count > 0`.
    pub function_words: Vec<String>,
    pub nouns_per_category: usize,
    pub function_words_count: usize,
    /// Syllables per generated word, inclusive range.
    pub syllables: (usize, usize),
    /// Words per utterance, inclusive range; the first is always a noun.
    pub words_per_utterance: (usize, usize),
}

impl Default for LexiconSpec {
    fn default() -> Self {
        Self {
            nouns: Vec::new(),
            function_words: Vec::new(),
            nouns_per_category: 5,
            function_words_count: 4,
            syllables: (2, 3),
            words_per_utterance: (3, 6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub k_int: usize,
    pub k_obj: usize,
    pub k_mot: usize,
    /// Allowed motion categories per object category.
    pub motion_map: Vec<Vec<usize>>,
    pub dims: ModalityDims,
    /// Tokens drawn per modality and record.
    pub tokens: ModalityDims,
    /// Total concentration of the symmetric Dirichlet behind each emission
    /// row, spread evenly over the row's symbols; small is sharp.
    pub dirichlet_sharpness: f64,
    /// Blends the object-modality emission rows of object pairs `(2i, 2i+1)`:
    /// 0 keeps them distinct, 1 makes them identical.
    pub object_confusion: f64,
    /// Mixes every object-modality emission row with the uniform
    /// distribution at this weight.
    pub object_noise: f64,
    /// Consonants and vowels; generated words alternate them.
    pub consonants: String,
    pub vowels: String,
    pub lexicon: LexiconSpec,
    pub channel: ChannelParams,
}

impl Default for WorldSpec {
    fn default() -> Self {
        let k = 10;
        Self {
            k_int: k,
            k_obj: k,
            k_mot: k,
            motion_map: default_motion_map(k, k),
            dims: ModalityDims::default(),
            tokens: ModalityDims::uniform(50),
            dirichlet_sharpness: 0.01,
            object_confusion: 0.0,
            object_noise: 0.0,
            consonants: "kstnmhr".into(),
            vowels: "aiueo".into(),
            lexicon: LexiconSpec::default(),
            channel: ChannelParams::noiseless(),
        }
    }
}

/// Object `o` allows motions `o` and `o + 2`, so objects share motions while
/// neighbouring objects never do.
pub fn default_motion_map(k_obj: usize, k_mot: usize) -> Vec<Vec<usize>> {
    (0..k_obj)
        .map(|o| {
            let mut m = vec![o % k_mot, (o + 2) % k_mot];
            m.dedup();
            m
        })
        .collect()
}

/// Input of the `gen` subcommand: a world and the number of records per
/// integrated category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub records_per_category: usize,
    pub world: WorldSpec,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            records_per_category: 10,
            world: WorldSpec::default(),
        }
    }
}

impl GenSpec {
    /// Parses TOML. A missing `world.motion_map` is filled with
    /// [`default_motion_map`] for the given category counts.
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let value: toml::Table = toml::from_str(text).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        let has_map = value
            .get("world")
            .and_then(|w| w.get("motion_map"))
            .is_some();
        let mut spec: Self = value.try_into().map_err(|e: toml::de::Error| DataError::InvalidSpec(e.to_string()))?;
        if !has_map {
            spec.world.motion_map = default_motion_map(spec.world.k_obj, spec.world.k_mot);
        }
        Ok(spec)
    }
}

impl WorldSpec {
    pub fn alphabet(&self) -> Result<PhonemeAlphabet, DataError> {
        let symbols: Vec<char> = self.consonants.chars().chain(self.vowels.chars()).collect();
        Ok(PhonemeAlphabet::new(&symbols)?)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.k_int < 2 || self.k_obj < 2 || self.k_mot < 2 {
            return bad("every category count must be at least 2".into());
        }
        let d = &self.dims;
        if [d.visual, d.audio, d.haptic].iter().any(|&v| v < self.k_obj) || d.motion < self.k_mot {
            return bad("modality dimensions must be at least the category count".into());
        }
        if !(self.dirichlet_sharpness > 0.0) {
            return bad("dirichlet_sharpness must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.object_confusion) {
            return bad("object_confusion must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.object_noise) {
            return bad("object_noise must lie in [0, 1]".into());
        }
        if self.motion_map.len() != self.k_obj {
            return bad(format!("motion_map has {} rows, expected {}", self.motion_map.len(), self.k_obj));
        }
        for (o, allowed) in self.motion_map.iter().enumerate() {
            if allowed.is_empty() {
                return Err(DataError::InconsistentMotionMap(o));
            }
            if allowed.iter().any(|&m| m >= self.k_mot) {
                return bad(format!("motion_map row {o} names a motion outside 0..{}", self.k_mot));
            }
        }
        let alphabet = self.alphabet()?;
        if alphabet.len() < MIN_PHONEMES {
            return bad(format!("need at least {MIN_PHONEMES} phonemes"));
        }
        if self.consonants.is_empty() || self.vowels.is_empty() {
            return bad("need at least one consonant and one vowel".into());
        }
        let lx = &self.lexicon;
        let (lo, hi) = lx.words_per_utterance;
        if lo == 0 || lo > hi {
            return bad("words_per_utterance must be a non-empty range starting at 1 or more".into());
        }
        if hi > 1 && lx.function_words.is_empty() && lx.function_words_count == 0 {
            return bad("utterances longer than one word need function words".into());
        }
        if lx.nouns.is_empty() {
            if lx.nouns_per_category == 0 || lx.syllables.0 == 0 || lx.syllables.0 > lx.syllables.1 {
                return bad("generated lexicon needs nouns_per_category >= 1 and a syllable range".into());
            }
        } else if lx.nouns.len() != self.k_obj || lx.nouns.iter().any(Vec::is_empty) {
            return bad("explicit nouns must list at least one word for every object category".into());
        }
        for w in lx.nouns.iter().flatten().chain(&lx.function_words) {
            if w.is_empty() {
                return bad("lexicon words must be non-empty".into());
            }
            alphabet.check(w)?;
        }
        Ok(())
    }
}

/// Ground truth drawn from a [`WorldSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub spec: WorldSpec,
    /// `p_obj[z][o] = P(z_obj = o | z)`
    pub p_obj: Vec<Vec<f64>>,
    /// `p_mot[z][m] = P(z_mot = m | z)`
    pub p_mot: Vec<Vec<f64>>,
    /// Emission tables `[category][symbol]` for visual, audio, haptic (by object) and motion.
    pub phi_visual: Vec<Vec<f64>>,
    pub phi_audio: Vec<Vec<f64>>,
    pub phi_haptic: Vec<Vec<f64>>,
    pub phi_motion: Vec<Vec<f64>>,
    pub nouns: Vec<Vec<String>>,
    pub function_words: Vec<String>,
}

/// Per-modality histograms of one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub visual: Vec<u32>,
    pub audio: Vec<u32>,
    pub haptic: Vec<u32>,
    pub motion: Vec<u32>,
}

impl Counts {
    pub fn object(&self) -> Vec<Vec<u32>> {
        vec![self.visual.clone(), self.audio.clone(), self.haptic.clone()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: usize,
    pub z: usize,
    pub z_obj: usize,
    pub z_mot: usize,
    pub counts: Counts,
    pub clean: String,
    pub observed: String,
    /// Word boundaries in `clean`.
    pub cuts: Vec<usize>,
}

impl DatasetRecord {
    pub fn clean_words(&self) -> Vec<String> {
        crate::npylm::SegmentedSentence {
            raw: self.clean.clone(),
            cut_points: self.cuts.clone(),
        }
        .words()
    }
}

/// One Dirichlet draw, computed from log-gamma variates so tiny
/// concentrations stay finite.
fn dirichlet_row<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    // Gamma(a) = Gamma(a + 1) * U^(1 / a)
    let g = Gamma::new(alpha + 1.0, 1.0).expect("positive shape");
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.sample(rng).ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Rows whose largest entry falls on a symbol already dominant in an earlier
/// row are redrawn, so near one-hot rows stay distinguishable. Needs
/// `rows <= dim`.
fn dirichlet_table<R: Rng + ?Sized>(total: f64, rows: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut taken = vec![false; dim];
    (0..rows)
        .map(|_| loop {
            let row = dirichlet_row(total / dim as f64, dim, rng);
            let top = argmax(&row);
            if !taken[top] {
                taken[top] = true;
                break row;
            }
        })
        .collect()
}

fn blend_pairs(table: &mut [Vec<f64>], c: f64) {
    let half = c / 2.0;
    for pair in table.chunks_exact_mut(2) {
        let (a, b) = pair.split_at_mut(1);
        for (x, y) in a[0].iter_mut().zip(b[0].iter_mut()) {
            let (ox, oy) = (*x, *y);
            *x = (1.0 - half) * ox + half * oy;
            *y = (1.0 - half) * oy + half * ox;
        }
    }
}

fn blend_uniform(table: &mut [Vec<f64>], eps: f64) {
    for row in table {
        let u = eps / row.len() as f64;
        for x in row.iter_mut() {
            *x = (1.0 - eps) * *x + u;
        }
    }
}

fn make_word<R: Rng + ?Sized>(consonants: &[char], vowels: &[char], syllables: (usize, usize), rng: &mut R) -> String {
    let n = rng.random_range(syllables.0..=syllables.1);
    let mut w = String::new();
    for _ in 0..n {
        w.push(*consonants.choose(rng).expect("non-empty"));
        w.push(*vowels.choose(rng).expect("non-empty"));
    }
    w
}

/// Draws every ground-truth table of the world. Deterministic in `(spec, seed)`.
pub fn generate_world(spec: &WorldSpec, seed: u64) -> Result<World, DataError> {
    spec.validate()?;
    let mut rng = derived(seed, 0);
    let sharp = spec.dirichlet_sharpness;
    let mut phi_visual = dirichlet_table(sharp, spec.k_obj, spec.dims.visual, &mut rng);
    let mut phi_audio = dirichlet_table(sharp, spec.k_obj, spec.dims.audio, &mut rng);
    let mut phi_haptic = dirichlet_table(sharp, spec.k_obj, spec.dims.haptic, &mut rng);
    let phi_motion = dirichlet_table(sharp, spec.k_mot, spec.dims.motion, &mut rng);
    for t in [&mut phi_visual, &mut phi_audio, &mut phi_haptic] {
        blend_pairs(t, spec.object_confusion);
        blend_uniform(t, spec.object_noise);
    }
    let p_obj: Vec<Vec<f64>> = (0..spec.k_int)
        .map(|z| (0..spec.k_obj).map(|o| if o == z % spec.k_obj { 1.0 } else { 0.0 }).collect())
        .collect();
    let p_mot: Vec<Vec<f64>> = (0..spec.k_int)
        .map(|z| {
            let allowed = &spec.motion_map[z % spec.k_obj];
            (0..spec.k_mot)
                .map(|m| if allowed.contains(&m) { 1.0 / allowed.len() as f64 } else { 0.0 })
                .collect()
        })
        .collect();

    let consonants: Vec<char> = spec.consonants.chars().collect();
    let vowels: Vec<char> = spec.vowels.chars().collect();
    let lx = &spec.lexicon;
    let mut used = std::collections::BTreeSet::new();
    let mut fresh = |rng: &mut SerketRng| loop {
        let w = make_word(&consonants, &vowels, lx.syllables, rng);
        if used.insert(w.clone()) {
            return w;
        }
    };
    let function_words = if lx.function_words.is_empty() {
        (0..lx.function_words_count).map(|_| fresh(&mut rng)).collect()
    } else {
        lx.function_words.clone()
    };
    let nouns = if lx.nouns.is_empty() {
        (0..spec.k_obj)
            .map(|_| (0..lx.nouns_per_category).map(|_| fresh(&mut rng)).collect())
            .collect()
    } else {
        lx.nouns.clone()
    };
    Ok(World {
        spec: spec.clone(),
        p_obj,
        p_mot,
        phi_visual,
        phi_audio,
        phi_haptic,
        phi_motion,
        nouns,
        function_words,
    })
}

fn histogram<R: Rng + ?Sized>(row: &[f64], n: usize, rng: &mut R) -> Vec<u32> {
    let mut h = vec![0u32; row.len()];
    for _ in 0..n {
        h[sample_index(row, rng)] += 1;
    }
    h
}

/// Zipf weights `1 / rank` over `n` items.
fn zipf(n: usize) -> Vec<f64> {
    (1..=n).map(|r| 1.0 / r as f64).collect()
}

/// `j` records per integrated category, in category order. Each record has
/// its own derived random stream.
pub fn generate_dataset(world: &World, j: usize, seed: u64) -> Result<Vec<DatasetRecord>, DataError> {
    let spec = &world.spec;
    let alphabet = spec.alphabet()?;
    let n = spec.k_int * j;
    let mut records = Vec::with_capacity(n);
    for id in 0..n {
        let mut rng = derived(seed, id as u64 + 1);
        let z = id / j;
        let z_obj = sample_index(&world.p_obj[z], &mut rng);
        let z_mot = sample_index(&world.p_mot[z], &mut rng);
        let t = &spec.tokens;
        let counts = Counts {
            visual: histogram(&world.phi_visual[z_obj], t.visual, &mut rng),
            audio: histogram(&world.phi_audio[z_obj], t.audio, &mut rng),
            haptic: histogram(&world.phi_haptic[z_obj], t.haptic, &mut rng),
            motion: histogram(&world.phi_motion[z_mot], t.motion, &mut rng),
        };
        let (lo, hi) = spec.lexicon.words_per_utterance;
        let len = rng.random_range(lo..=hi);
        let nouns = &world.nouns[z_obj];
        let mut words = vec![nouns[sample_index(&zipf(nouns.len()), &mut rng)].clone()];
        for _ in 1..len {
            words.push(world.function_words.choose(&mut rng).expect("validated").clone());
        }
        let seg = crate::npylm::SegmentedSentence::from_words(&words);
        let observed = corrupt(&seg.raw, &alphabet, &spec.channel, &mut rng)?;
        records.push(DatasetRecord {
            id,
            z,
            z_obj,
            z_mot,
            counts,
            clean: seg.raw,
            observed,
            cuts: seg.cut_points,
        });
    }
    Ok(records)
}

/// Header comment line followed by one JSON object per record.
pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{DATASET_HEADER}").map_err(io)?;
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a dataset; lines starting with `#` and blank lines are skipped.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(trimmed).map_err(|e| DataError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> WorldSpec {
        WorldSpec {
            k_int: 4,
            k_obj: 4,
            k_mot: 4,
            motion_map: default_motion_map(4, 4),
            dims: ModalityDims::uniform(12),
            tokens: ModalityDims::uniform(20),
            ..WorldSpec::default()
        }
    }

    #[test]
    fn rows_are_normalized_and_world_is_deterministic() {
        let w = generate_world(&small_spec(), 3).unwrap();
        for t in [&w.phi_visual, &w.phi_audio, &w.phi_haptic, &w.phi_motion, &w.p_obj, &w.p_mot] {
            for row in t {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(w, generate_world(&small_spec(), 3).unwrap());
        assert_ne!(w, generate_world(&small_spec(), 4).unwrap());
    }

    #[test]
    fn sharp_dirichlet_is_near_one_hot() {
        let mut rng = crate::rng::seeded(0);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| dirichlet_row(0.01 / 10.0, 10, &mut rng)).collect();
        let peaked = rows.iter().filter(|r| r.iter().copied().fold(0.0, f64::max) >= 0.9).count();
        assert!(peaked as f64 >= 0.95 * 400.0, "{peaked}");
    }

    #[test]
    fn emission_rows_have_distinct_dominant_symbols() {
        let mut rng = crate::rng::seeded(1);
        let rows = dirichlet_table(0.01, 10, 10, &mut rng);
        let mut tops: Vec<usize> = rows.iter().map(|r| argmax(r)).collect();
        tops.sort_unstable();
        tops.dedup();
        assert_eq!(tops.len(), 10);
    }

    #[test]
    fn empty_motion_map_row_is_rejected() {
        let mut spec = small_spec();
        spec.motion_map[2].clear();
        assert!(matches!(generate_world(&spec, 0), Err(DataError::InconsistentMotionMap(2))));
    }

    #[test]
    fn noiseless_records_match_construction() {
        let w = generate_world(&small_spec(), 1).unwrap();
        let data = generate_dataset(&w, 5, 2).unwrap();
        assert_eq!(data.len(), 20);
        for r in &data {
            assert_eq!(r.clean, r.observed);
            assert!(w.spec.motion_map[r.z_obj].contains(&r.z_mot));
            assert_eq!(r.counts.visual.iter().sum::<u32>(), 20);
            let words = r.clean_words();
            assert!((3..=6).contains(&words.len()));
            assert!(w.nouns[r.z_obj].contains(&words[0]));
            assert!(words[1..].iter().all(|x| w.function_words.contains(x)));
        }
    }

    #[test]
    fn blending_makes_pairs_identical() {
        let mut spec = small_spec();
        spec.object_confusion = 1.0;
        let w = generate_world(&spec, 5).unwrap();
        for (a, b) in w.phi_visual[0].iter().zip(&w.phi_visual[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_noise_makes_object_rows_uniform() {
        let mut spec = small_spec();
        spec.object_noise = 1.0;
        let w = generate_world(&spec, 6).unwrap();
        let v = w.phi_haptic[0].len() as f64;
        for row in &w.phi_haptic {
            assert!(row.iter().all(|x| (x - 1.0 / v).abs() < 1e-12));
        }
        assert!(w.phi_motion[0].iter().any(|&x| x > 0.5));
    }
}
