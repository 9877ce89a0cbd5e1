//! The two example systems: a multilayered MLDA over object and motion
//! concepts, and mutual learning of object concepts and a language model from
//! noisy teaching utterances.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{recognize_lbest, ChannelParams, DecoderConfig, PhonemeAlphabet, UniformLm};
use crate::connector::sir_select;
use crate::error::ExperimentError;
use crate::graph::{ConnectionKind, ModuleGraph, TrainDiagnostics};
use crate::message::SampleMessage;
use crate::metrics::{matched_accuracy, phoneme_accuracy, seg_eval, MatchedAccuracy, SegEvalResult};
use crate::mlda::{draw_pseudo_obs, DocObservation, Mlda, MldaConfig, ModalitySpec};
use crate::npylm::{NpylmConfig, NpylmModel, SegmentedSentence};
use crate::pylm::PyParams;
use crate::rng::{derive_seed, derived, SerketRng};
use crate::synth::{read_dataset, DatasetRecord, OBJECT_MODALITIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Config {
    pub k_obj: usize,
    pub k_mot: usize,
    pub k_int: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Sweeps each lower model runs on its own before the connection starts.
    pub inner_sweeps: usize,
    pub rounds: usize,
    pub sweeps_per_round: usize,
    pub pseudo_obs: usize,
    pub connector: ConnectionKind,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            k_obj: 10,
            k_mot: 10,
            k_int: 10,
            alpha: 1.0,
            gamma: 0.1,
            inner_sweeps: 100,
            rounds: 50,
            sweeps_per_round: 5,
            pseudo_obs: 100,
            connector: ConnectionKind::Mp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Config {
    pub k: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub word_gamma: f64,
    /// Hypotheses per utterance offered to the concept model.
    pub l: usize,
    pub beam: usize,
    pub max_len_factor: usize,
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
    /// Blocked Gibbs iterations of the initial segmentation.
    pub seg_iterations: usize,
    pub max_word_len: usize,
    pub discount: f64,
    pub concentration: f64,
    /// Phoneme symbols; taken from the observed utterances when empty.
    pub alphabet: String,
    pub channel: ChannelParams,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: 1.0,
            gamma: 0.1,
            word_gamma: 0.1,
            l: 10,
            beam: 64,
            max_len_factor: 2,
            outer_iterations: 10,
            inner_sweeps: 100,
            seg_iterations: 50,
            max_word_len: 8,
            discount: 0.5,
            concentration: 2.0,
            alphabet: String::new(),
            channel: ChannelParams {
                p_sub: 0.1,
                p_del: 0.0,
                p_ins: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub exp1: Exp1Config,
    pub exp2: Exp2Config,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Variant {
    pub name: String,
    pub object: MatchedAccuracy,
    pub motion: MatchedAccuracy,
    pub object_pred: Vec<usize>,
    pub motion_pred: Vec<usize>,
    /// Integrated-category labels; only for the connected variant.
    pub integrated_pred: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Report {
    pub seed: u64,
    pub config: Exp1Config,
    pub records: usize,
    pub object_truth: Vec<usize>,
    pub motion_truth: Vec<usize>,
    pub integrated_truth: Vec<usize>,
    pub variants: Vec<Exp1Variant>,
    /// Vocabulary sizes of the integration model's two observations.
    pub integration_dims: (usize, usize),
    pub diagnostics: Vec<TrainDiagnostics>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Prediction {
    pub recognized: String,
    pub cuts: Vec<usize>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Variant {
    pub name: String,
    pub phoneme_accuracy: f64,
    pub segmentation: SegEvalResult,
    pub object: MatchedAccuracy,
    pub predictions: Vec<Exp2Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Iteration {
    pub iteration: usize,
    /// Mean concept-model log score of the selected hypotheses.
    pub mean_selected_score: f64,
    pub phoneme_accuracy: f64,
    pub seg_f: f64,
    pub object_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Report {
    pub seed: u64,
    pub config: Exp2Config,
    pub records: usize,
    pub alphabet: String,
    pub object_truth: Vec<usize>,
    pub clean: Vec<String>,
    pub clean_cuts: Vec<Vec<usize>>,
    pub variants: Vec<Exp2Variant>,
    pub iterations: Vec<Exp2Iteration>,
    /// Utterance selections made from a single candidate.
    pub single_candidate_selections: usize,
    /// Recognitions that returned fewer than `l` hypotheses.
    pub exhausted_beams: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "lowercase")]
pub enum ExperimentReport {
    Exp1(Exp1Report),
    Exp2(Exp2Report),
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(format!("report: {e}")))
    }

    pub fn wall_clock_seconds(&self) -> f64 {
        match self {
            Self::Exp1(r) => r.wall_clock_seconds,
            Self::Exp2(r) => r.wall_clock_seconds,
        }
    }

    /// The report with its wall-clock field zeroed, for comparing reruns.
    pub fn without_wall_clock(&self) -> Self {
        let mut r = self.clone();
        match &mut r {
            Self::Exp1(r) => r.wall_clock_seconds = 0.0,
            Self::Exp2(r) => r.wall_clock_seconds = 0.0,
        }
        r
    }
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, ExperimentError> {
    let records = read_dataset(path)?;
    if records.is_empty() {
        return Err(ExperimentError::Config(format!("{}: dataset is empty", path.display())));
    }
    Ok(records)
}

fn check_dims(records: &[DatasetRecord]) -> Result<(), ExperimentError> {
    let first = &records[0].counts;
    let dims = |c: &crate::synth::Counts| [c.visual.len(), c.audio.len(), c.haptic.len(), c.motion.len()];
    if let Some(r) = records.iter().find(|r| dims(&r.counts) != dims(first)) {
        return Err(ExperimentError::Config(format!(
            "record {} has histogram sizes {:?}, expected {:?}",
            r.id,
            dims(&r.counts),
            dims(first)
        )));
    }
    Ok(())
}

fn object_specs(records: &[DatasetRecord], gamma: f64) -> Vec<ModalitySpec> {
    let c = &records[0].counts;
    [c.visual.len(), c.audio.len(), c.haptic.len()]
        .iter()
        .zip(OBJECT_MODALITIES)
        .map(|(&v, name)| ModalitySpec::new(name, v).with_gamma(gamma))
        .collect()
}

fn labels(model: &Mlda) -> Vec<usize> {
    (0..model.num_docs()).map(|j| model.doc_label(j)).collect()
}

fn sweeps(model: &mut Mlda, n: usize, rng: &mut SerketRng) -> Result<(), ExperimentError> {
    for _ in 0..n {
        model.gibbs_sweep(None, rng)?;
    }
    Ok(())
}

pub fn run_exp1_file(data: &Path, config: &Exp1Config, seed: u64) -> Result<Exp1Report, ExperimentError> {
    run_exp1(&load_records(data)?, config, seed)
}

/// Independent object and motion MLDAs, then the same two models connected
/// to an integration MLDA through their category posteriors.
pub fn run_exp1(records: &[DatasetRecord], cfg: &Exp1Config, seed: u64) -> Result<Exp1Report, ExperimentError> {
    let started = Instant::now();
    if records.is_empty() {
        return Err(ExperimentError::Config("dataset is empty".into()));
    }
    check_dims(records)?;
    let obj_cfg = MldaConfig {
        sweeps_per_round: cfg.sweeps_per_round,
        pseudo_obs: cfg.pseudo_obs,
        ..MldaConfig::new(cfg.k_obj, object_specs(records, cfg.gamma)).with_alpha(cfg.alpha)
    };
    let mot_cfg = MldaConfig {
        sweeps_per_round: cfg.sweeps_per_round,
        pseudo_obs: cfg.pseudo_obs,
        ..MldaConfig::new(
            cfg.k_mot,
            vec![ModalitySpec::new("motion", records[0].counts.motion.len()).with_gamma(cfg.gamma)],
        )
        .with_alpha(cfg.alpha)
    };
    let int_cfg = MldaConfig {
        sweeps_per_round: cfg.sweeps_per_round,
        pseudo_obs: cfg.pseudo_obs,
        ..MldaConfig::new(
            cfg.k_int,
            vec![
                ModalitySpec::new("object", cfg.k_obj).with_gamma(cfg.gamma),
                ModalitySpec::new("motion", cfg.k_mot).with_gamma(cfg.gamma),
            ],
        )
        .with_alpha(cfg.alpha)
    };
    let obj_docs: Vec<DocObservation> = records.iter().map(|r| DocObservation::new(r.counts.object())).collect();
    let mot_docs: Vec<DocObservation> = records
        .iter()
        .map(|r| DocObservation::new(vec![r.counts.motion.clone()]))
        .collect();
    let object_truth: Vec<usize> = records.iter().map(|r| r.z_obj).collect();
    let motion_truth: Vec<usize> = records.iter().map(|r| r.z_mot).collect();
    let integrated_truth: Vec<usize> = records.iter().map(|r| r.z).collect();
    let total_sweeps = cfg.inner_sweeps + cfg.rounds * cfg.sweeps_per_round;

    let mut rng = derived(seed, 1);
    let mut obj = Mlda::with_documents(obj_cfg.clone(), &obj_docs, &mut rng)?;
    sweeps(&mut obj, total_sweeps, &mut rng)?;
    let mut rng = derived(seed, 2);
    let mut mot = Mlda::with_documents(mot_cfg.clone(), &mot_docs, &mut rng)?;
    sweeps(&mut mot, total_sweeps, &mut rng)?;
    let independent = variant1("independent", &object_truth, &motion_truth, labels(&obj), labels(&mot), None)?;

    let mut rng = derived(seed, 3);
    let mut obj = Mlda::with_documents(obj_cfg, &obj_docs, &mut rng)?;
    sweeps(&mut obj, cfg.inner_sweeps, &mut rng)?;
    let mut mot = Mlda::with_documents(mot_cfg, &mot_docs, &mut rng)?;
    sweeps(&mut mot, cfg.inner_sweeps, &mut rng)?;
    let int_docs: Vec<DocObservation> = (0..records.len())
        .map(|j| {
            DocObservation::new(vec![
                draw_pseudo_obs(&obj.doc_posterior(j), cfg.pseudo_obs, &mut rng),
                draw_pseudo_obs(&mot.doc_posterior(j), cfg.pseudo_obs, &mut rng),
            ])
        })
        .collect();
    let mut int = Mlda::with_documents(int_cfg, &int_docs, &mut rng)?;
    int.bind_slot(0, "object")?;
    int.bind_slot(1, "motion")?;
    let integration_dims = (int.vocab_size(0), int.vocab_size(1));

    let mut graph = ModuleGraph::new();
    let obj_id = graph.register("object", 0, Box::new(obj))?;
    let mot_id = graph.register("motion", 0, Box::new(mot))?;
    let int_id = graph.register("integration", 1, Box::new(int))?;
    graph.connect(obj_id, int_id, cfg.connector, 0)?;
    graph.connect(mot_id, int_id, cfg.connector, 1)?;
    let diagnostics = graph.train(cfg.rounds, derive_seed(seed, 4))?;
    let posterior_labels = |id| -> Result<Vec<usize>, ExperimentError> {
        Ok(graph.module(id)?.bottom_up()?.iter().map(|m| m.argmax()).collect())
    };
    let connected = variant1(
        "serket",
        &object_truth,
        &motion_truth,
        posterior_labels(obj_id)?,
        posterior_labels(mot_id)?,
        Some(posterior_labels(int_id)?),
    )?;

    Ok(Exp1Report {
        seed,
        config: cfg.clone(),
        records: records.len(),
        object_truth,
        motion_truth,
        integrated_truth,
        variants: vec![independent, connected],
        integration_dims,
        diagnostics,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

fn variant1(
    name: &str,
    object_truth: &[usize],
    motion_truth: &[usize],
    object_pred: Vec<usize>,
    motion_pred: Vec<usize>,
    integrated_pred: Option<Vec<usize>>,
) -> Result<Exp1Variant, ExperimentError> {
    Ok(Exp1Variant {
        name: name.into(),
        object: matched_accuracy(object_truth, &object_pred)?,
        motion: matched_accuracy(motion_truth, &motion_pred)?,
        object_pred,
        motion_pred,
        integrated_pred,
    })
}

pub fn run_exp2_file(data: &Path, config: &Exp2Config, seed: u64) -> Result<Exp2Report, ExperimentError> {
    run_exp2(&load_records(data)?, config, seed)
}

/// State shared by both language-learning variants.
#[derive(Clone)]
struct Learner {
    lm: NpylmModel,
    mlda: Mlda,
    words_m: usize,
    segs: Vec<SegmentedSentence>,
}

impl Learner {
    fn predictions(&self) -> Vec<Exp2Prediction> {
        self.segs
            .iter()
            .enumerate()
            .map(|(j, s)| Exp2Prediction {
                recognized: s.raw.clone(),
                cuts: s.cut_points.clone(),
                label: self.mlda.doc_label(j),
            })
            .collect()
    }
}

fn score2(records: &[DatasetRecord], name: &str, preds: Vec<Exp2Prediction>) -> Result<Exp2Variant, ExperimentError> {
    let mut acc = 0.0;
    let mut segs = Vec::with_capacity(records.len());
    for (r, p) in records.iter().zip(&preds) {
        acc += phoneme_accuracy(&r.clean, &p.recognized)?;
        segs.push(seg_eval(&r.cuts, &p.cuts, &r.clean, &p.recognized)?);
    }
    let truth: Vec<usize> = records.iter().map(|r| r.z_obj).collect();
    let pred: Vec<usize> = preds.iter().map(|p| p.label).collect();
    Ok(Exp2Variant {
        name: name.into(),
        phoneme_accuracy: acc / records.len() as f64,
        segmentation: SegEvalResult::sum(&segs),
        object: matched_accuracy(&truth, &pred)?,
        predictions: preds,
    })
}

fn alphabet_for(records: &[DatasetRecord], cfg: &Exp2Config) -> Result<PhonemeAlphabet, ExperimentError> {
    let symbols: Vec<char> = if cfg.alphabet.is_empty() {
        let set: BTreeSet<char> = records.iter().flat_map(|r| r.observed.chars()).collect();
        set.into_iter().collect()
    } else {
        cfg.alphabet.chars().collect()
    };
    Ok(PhonemeAlphabet::new(&symbols)?)
}

/// Variant (a): maximum-likelihood recognition under a uniform phoneme
/// model, one segmentation pass, then the concept model, which is swept as
/// often as in variant (b).
///
/// Variant (b) starts from the same state and alternates L-best recognition
/// with the current language model, segmentation, concept-weighted
/// resampling of one hypothesis per utterance, a concept-model update and a
/// language-model refit.
pub fn run_exp2(records: &[DatasetRecord], cfg: &Exp2Config, seed: u64) -> Result<Exp2Report, ExperimentError> {
    let started = Instant::now();
    if records.is_empty() {
        return Err(ExperimentError::Config("dataset is empty".into()));
    }
    if cfg.l == 0 || cfg.beam < cfg.l {
        return Err(ExperimentError::Config("need 1 <= l <= beam".into()));
    }
    check_dims(records)?;
    let alphabet = alphabet_for(records, cfg)?;
    let npylm_cfg = NpylmConfig {
        params: PyParams::new(cfg.discount, cfg.concentration)?,
        max_word_len: cfg.max_word_len,
        ..NpylmConfig::default()
    };
    let decoder = DecoderConfig {
        l: cfg.l,
        beam: cfg.beam,
        max_len_factor: cfg.max_len_factor,
    };

    // variant (a)
    let uniform = UniformLm::new(&alphabet);
    let top1 = DecoderConfig { l: 1, ..decoder };
    let recognized: Vec<String> = records
        .iter()
        .map(|r| {
            let best = recognize_lbest(&r.observed, &alphabet, &cfg.channel, &uniform, &top1)?;
            Ok(best.hypotheses.into_iter().next().map(|h| h.text).unwrap_or_default())
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut rng = derived(seed, 10);
    let mut lm = NpylmModel::new(alphabet.symbols(), npylm_cfg)?;
    let segs = lm.segment_corpus(&recognized, cfg.seg_iterations.max(1), &mut rng)?;
    let mut specs = object_specs(records, cfg.gamma);
    specs.push(ModalitySpec::words("words").with_gamma(cfg.word_gamma));
    let words_m = specs.len() - 1;
    let docs: Vec<DocObservation> = records
        .iter()
        .map(|r| {
            let mut c: Vec<Option<Vec<u32>>> = r.counts.object().into_iter().map(Some).collect();
            c.push(None);
            DocObservation { counts: c }
        })
        .collect();
    let mut mlda = Mlda::with_documents(MldaConfig::new(cfg.k, specs).with_alpha(cfg.alpha), &docs, &mut rng)?;
    sweeps(&mut mlda, cfg.inner_sweeps, &mut rng)?;
    for (j, s) in segs.iter().enumerate() {
        mlda.set_words(j, words_m, &s.words(), &mut rng)?;
    }
    sweeps(&mut mlda, cfg.inner_sweeps, &mut rng)?;
    let mut learner = Learner {
        lm,
        mlda,
        words_m,
        segs,
    };
    // (a) keeps its words and gets the same number of concept-model sweeps as (b)
    let mut one_shot = learner.clone();
    sweeps(&mut one_shot.mlda, cfg.inner_sweeps * cfg.outer_iterations, &mut rng)?;
    let variant_a = score2(records, "without_mutual_learning", one_shot.predictions())?;

    // variant (b)
    let b_seed = derive_seed(seed, 20);
    let mut iterations = Vec::with_capacity(cfg.outer_iterations);
    let mut single = 0;
    let mut exhausted = 0;
    for it in 0..cfg.outer_iterations {
        let mut rng = derived(b_seed, it as u64);
        let mut selected = Vec::with_capacity(records.len());
        let mut score_sum = 0.0;
        for (j, r) in records.iter().enumerate() {
            // each utterance is decoded and segmented without its own words
            let own = learner.segs[j].words();
            learner.lm.remove_sentence(&own, &mut rng)?;
            let list = recognize_lbest(
                &r.observed,
                &alphabet,
                &cfg.channel,
                &learner.lm.prefix_scorer(),
                &decoder,
            )?;
            exhausted += usize::from(list.beam_exhausted);
            let mut segs = Vec::with_capacity(list.hypotheses.len());
            let mut scores = Vec::with_capacity(list.hypotheses.len());
            for h in &list.hypotheses {
                segs.push(learner.lm.sample_segmentation(&h.text, &mut rng)?);
                scores.push(h.log_score);
            }
            learner.lm.add_sentence(&own, &mut rng)?;
            if segs.is_empty() {
                segs.push(learner.segs[j].clone());
                scores.push(0.0);
            }
            single += usize::from(segs.len() == 1);
            // weight: recognizer score plus concept-model score
            let candidates = SampleMessage::new((0..segs.len()).collect(), scores)?;
            let mlda = &learner.mlda;
            let words_m = learner.words_m;
            let (idx, _) = sir_select(
                &candidates,
                |&i| {
                    mlda.score_word_sequence(j, words_m, &segs[i].words())
                        .map_or(f64::NEG_INFINITY, |w| w.log_prob + candidates.log_scores()[i])
                },
                &mut rng,
            );
            let chosen = segs.swap_remove(idx);
            score_sum += learner.mlda.score_word_sequence(j, words_m, &chosen.words())?.log_prob;
            selected.push(chosen);
        }
        for (j, s) in selected.iter().enumerate() {
            learner.mlda.set_words(j, learner.words_m, &s.words(), &mut rng)?;
        }
        sweeps(&mut learner.mlda, cfg.inner_sweeps, &mut rng)?;
        let word_seqs: Vec<Vec<String>> = selected.iter().map(SegmentedSentence::words).collect();
        learner.lm.fit_from_words(&word_seqs, &mut rng)?;
        learner.segs = selected;
        let v = score2(records, "iteration", learner.predictions())?;
        iterations.push(Exp2Iteration {
            iteration: it,
            mean_selected_score: score_sum / records.len() as f64,
            phoneme_accuracy: v.phoneme_accuracy,
            seg_f: v.segmentation.f_measure,
            object_accuracy: v.object.accuracy,
        });
    }
    let variant_b = score2(records, "serket", learner.predictions())?;

    Ok(Exp2Report {
        seed,
        config: cfg.clone(),
        records: records.len(),
        alphabet: alphabet.symbols().iter().collect(),
        object_truth: records.iter().map(|r| r.z_obj).collect(),
        clean: records.iter().map(|r| r.clean.clone()).collect(),
        clean_cuts: records.iter().map(|r| r.cuts.clone()).collect(),
        variants: vec![variant_a, variant_b],
        iterations,
        single_candidate_selections: single,
        exhausted_beams: exhausted,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

fn pct(x: f64) -> String {
    format!("{:6.2}%", 100.0 * x)
}

impl ExperimentReport {
    /// Human-readable tables; confusion matrices are aligned to the matched
    /// permutation so the diagonal holds the agreements.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        match self {
            Self::Exp1(r) => {
                out += &format!("exp1  seed={}  records={}  rounds={}\n\n", r.seed, r.records, r.config.rounds);
                out += &format!("{:<12} {:>8} {:>8}\n", "variant", "object", "motion");
                for v in &r.variants {
                    out += &format!("{:<12} {:>8} {:>8}\n", v.name, pct(v.object.accuracy), pct(v.motion.accuracy));
                }
                for v in &r.variants {
                    for (what, m) in [("object", &v.object), ("motion", &v.motion)] {
                        out += &format!("\n{} / {} (rows true, columns matched predicted)\n", v.name, what);
                        out += &m.confusion.aligned(&m.permutation).render();
                    }
                }
                out += &format!(
                    "\nintegration observation sizes: {} x {}\n",
                    r.integration_dims.0, r.integration_dims.1
                );
            }
            Self::Exp2(r) => {
                out += &format!(
                    "exp2  seed={}  records={}  L={}  outer={}\n\n",
                    r.seed, r.records, r.config.l, r.config.outer_iterations
                );
                out += &format!(
                    "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
                    "variant", "phoneme", "seg P", "seg R", "seg F", "object"
                );
                for v in &r.variants {
                    let s = &v.segmentation;
                    out += &format!(
                        "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
                        v.name,
                        pct(v.phoneme_accuracy),
                        pct(s.precision),
                        pct(s.recall),
                        pct(s.f_measure),
                        pct(v.object.accuracy)
                    );
                }
                if !r.iterations.is_empty() {
                    out += &format!(
                        "\n{:>4} {:>12} {:>9} {:>9} {:>9}\n",
                        "iter", "mean score", "phoneme", "seg F", "object"
                    );
                    for it in &r.iterations {
                        out += &format!(
                            "{:>4} {:>12.3} {:>9} {:>9} {:>9}\n",
                            it.iteration,
                            it.mean_selected_score,
                            pct(it.phoneme_accuracy),
                            pct(it.seg_f),
                            pct(it.object_accuracy)
                        );
                    }
                }
                if r.single_candidate_selections > 0 {
                    out += &format!(
                        "\nwarning: {} selections had a single candidate\n",
                        r.single_candidate_selections
                    );
                }
                for v in &r.variants {
                    out += &format!("\n{} / object (rows true, columns matched predicted)\n", v.name);
                    out += &v.object.confusion.aligned(&v.object.permutation).render();
                }
            }
        }
        out += &format!("\nwall clock: {:.2} s\n", self.wall_clock_seconds());
        out
    }
}
