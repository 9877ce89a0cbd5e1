//! Sampling importance resampling between a sampler and a scorer.
//!
//! Candidates come from the lower module's posterior `p`; the upper module
//! weights them by `q`. The selected values follow `p * q`.

use serket::connector::{draw_candidates, sir_select};
use serket::message::CategoricalMessage;
use serket::module::FixedPosterior;
use serket::rng::seeded;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = vec![0.1, 0.4, 0.3, 0.2];
    let q: [f64; 4] = [0.5, 0.05, 0.25, 0.2];
    let lower = FixedPosterior::new(vec![CategoricalMessage::new(p.clone())?]);
    let mut rng = seeded(3);

    let trials = 3000;
    let mut hits = [0usize; 4];
    for _ in 0..trials {
        let cands = draw_candidates(&lower, 500, &mut rng)?;
        let (i, _) = sir_select(&cands[0], |&z| q[z].ln(), &mut rng);
        hits[cands[0].samples()[i]] += 1;
    }

    let z: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
    println!("value  selected  target");
    for v in 0..4 {
        println!("{v:>5}  {:>8.3}  {:>6.3}", hits[v] as f64 / trials as f64, p[v] * q[v] / z);
    }
    Ok(())
}
