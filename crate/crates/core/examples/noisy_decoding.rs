//! L-best recognition of corrupted phoneme strings.
//!
//! A language model trained on clean sentences rescores beam-search candidates
//! under a substitution/deletion/insertion channel.

use serket::channel::{corrupt, recognize_lbest, ChannelParams, DecoderConfig, PhonemeAlphabet};
use serket::npylm::{NpylmConfig, NpylmModel};
use serket::rng::seeded;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sentences = [
        vec!["kamo", "ne"],
        vec!["risuta", "ne"],
        vec!["kamo", "risuta"],
        vec!["risuta", "kamo", "ne"],
    ];
    let symbols: Vec<char> = "kamorisutne".chars().collect();
    let alphabet = PhonemeAlphabet::new(&symbols)?;
    let mut rng = seeded(9);

    let mut lm = NpylmModel::new(&symbols, NpylmConfig::default())?;
    let corpus: Vec<Vec<&str>> = sentences.iter().cycle().take(40).cloned().collect();
    lm.fit_from_words(&corpus, &mut rng)?;

    let params = ChannelParams::new(0.15, 0.0, 0.0)?;
    let config = DecoderConfig { l: 3, ..DecoderConfig::default() };
    for s in &sentences {
        let clean = s.concat();
        let observed = corrupt(&clean, &alphabet, &params, &mut rng)?;
        let best = recognize_lbest(&observed, &alphabet, &params, &lm.prefix_scorer(), &config)?;
        println!("clean {clean:<14} observed {observed:<14}");
        for h in &best.hypotheses {
            println!("    {:<14} {:8.2}", h.text, h.log_score);
        }
    }
    Ok(())
}
