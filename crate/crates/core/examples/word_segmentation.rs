//! Unsupervised word segmentation with the nested Pitman-Yor language model.

use rand::Rng;
use serket::metrics::{seg_eval, SegEvalResult};
use serket::npylm::{NpylmConfig, NpylmModel, SegmentedSentence};
use serket::rng::seeded;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lexicon = ["kamo", "risuta", "ne", "tomato"];
    let mut rng = seeded(4);
    let truth: Vec<SegmentedSentence> = (0..150)
        .map(|_| {
            let n = rng.random_range(2..=4);
            let words: Vec<&str> = (0..n).map(|_| lexicon[rng.random_range(0..lexicon.len())]).collect();
            SegmentedSentence::from_words(&words)
        })
        .collect();

    let mut alphabet: Vec<char> = lexicon.concat().chars().collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    let mut model = NpylmModel::new(&alphabet, NpylmConfig::default())?;
    let raws: Vec<&str> = truth.iter().map(|s| s.raw.as_str()).collect();
    let est = model.segment_corpus(&raws, 50, &mut rng)?;

    for e in est.iter().take(5) {
        println!("{}", e.words().join(" "));
    }
    let evals = truth
        .iter()
        .zip(&est)
        .map(|(t, e)| seg_eval(&t.cut_points, &e.cut_points, &t.raw, &e.raw))
        .collect::<Result<Vec<_>, _>>()?;
    let total = SegEvalResult::sum(&evals);
    println!("P {:.3} R {:.3} F {:.3}", total.precision, total.recall, total.f_measure);
    Ok(())
}
