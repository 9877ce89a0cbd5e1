use serket::channel::{channel_logprob, corrupt, ChannelParams, PhonemeAlphabet};
use serket::rng::seeded;

#[test]
fn substitution_rate_is_binomial() {
    let alphabet = PhonemeAlphabet::new(&['a', 'i', 'u', 'k', 's']).unwrap();
    let params = ChannelParams::new(0.1, 0.0, 0.0).unwrap();
    let clean: String = "akisu".repeat(2000);
    let observed = corrupt(&clean, &alphabet, &params, &mut seeded(12)).unwrap();
    assert_eq!(observed.chars().count(), clean.chars().count());
    let flips = clean.chars().zip(observed.chars()).filter(|(a, b)| a != b).count() as f64;
    let n = 10000.0_f64;
    let bound = 3.0 * (0.1 * 0.9 / n).sqrt();
    assert!((flips / n - 0.1).abs() <= bound, "fraction {}", flips / n);
}

fn strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |c| format!("{s}{c}")))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

#[test]
fn observation_probabilities_sum_to_at_most_one() {
    let symbols = ['a', 'b'];
    let alphabet = PhonemeAlphabet::new(&symbols).unwrap();
    for params in [
        ChannelParams::new(0.2, 0.1, 0.0).unwrap(),
        ChannelParams::new(0.0, 0.3, 0.0).unwrap(),
        ChannelParams::noiseless(),
    ] {
        for candidate in ["a", "ab", "bba"] {
            let total: f64 = strings(&symbols, 4)
                .iter()
                .filter(|o| !o.is_empty())
                .map(|o| channel_logprob(candidate, o, &alphabet, &params).unwrap().exp())
                .sum();
            assert!(total <= 1.0 + 1e-12, "{candidate}: {total}");
        }
    }
}
