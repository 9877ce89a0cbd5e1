//! Two modules joined by a message-passing connector.
//!
//! The lower module holds a fixed posterior over a binary latent for each of
//! three instances; the upper module is a prior plus a conditional table. After
//! training, the lower tallies approach the exact joint marginal.

use serket::graph::{ConnectionKind, ModuleGraph};
use serket::message::CategoricalMessage;
use serket::module::{ConditionalTable, FixedPosterior};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let posts = [[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]];
    let prior = vec![0.6, 0.4];
    let table = vec![vec![0.9, 0.1], vec![0.25, 0.75]];

    let lower = FixedPosterior::new(
        posts.iter().map(|p| CategoricalMessage::new(p.to_vec())).collect::<Result<_, _>>()?,
    );
    let upper = ConditionalTable::new(prior.clone(), table.clone(), posts.len())?;

    let mut g = ModuleGraph::new();
    let lo = g.register("lower", 0, Box::new(lower))?;
    let up = g.register("upper", 1, Box::new(upper))?;
    g.connect(lo, up, ConnectionKind::Mp, 0)?;
    let diag = g.train(2000, 7)?;
    println!("rounds: {}", diag.len());

    let tallies = g.module(lo)?.fingerprint();
    for (i, post) in posts.iter().enumerate() {
        let mut exact = [0.0; 2];
        for (u, row) in table.iter().enumerate() {
            for z in 0..2 {
                exact[z] += prior[u] * row[z] * post[z];
            }
        }
        let norm = exact[0] + exact[1];
        let n = (tallies[2 * i] + tallies[2 * i + 1]) as f64;
        println!(
            "instance {i}: empirical P(z=0) {:.3}  exact {:.3}",
            tallies[2 * i] as f64 / n,
            exact[0] / norm
        );
    }
    Ok(())
}
