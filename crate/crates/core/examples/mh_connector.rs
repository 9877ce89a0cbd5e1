//! Metropolis-Hastings between a proposer and a likelihood.

use serket::connector::mh_round;
use serket::message::CategoricalMessage;
use serket::module::{ConditionalTable, FixedPosterior};
use serket::rng::seeded;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = vec![0.5, 0.3, 0.2];
    let row = vec![0.1, 0.3, 0.6];
    let mut lower = FixedPosterior::new(vec![CategoricalMessage::new(p.clone())?]);
    let mut upper = ConditionalTable::new(vec![1.0], vec![row.clone()], 1)?;

    let out = mh_round(&mut lower, &mut upper, 0, 20_000, 1000, &mut seeded(5))?;
    let mut counts = [0usize; 3];
    for state in &out.chain {
        counts[state[0]] += 1;
    }
    let z: f64 = p.iter().zip(&row).map(|(a, b)| a * b).sum();
    println!("acceptance rate {:.3}", out.accepted as f64 / out.proposed as f64);
    for v in 0..3 {
        println!(
            "z={v}: chain {:.3}  target {:.3}",
            counts[v] as f64 / out.chain.len() as f64,
            p[v] * row[v] / z
        );
    }
    Ok(())
}
