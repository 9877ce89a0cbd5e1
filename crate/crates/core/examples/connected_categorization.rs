//! Object and motion categorizers joined under an integrating model.
//!
//! Compares independent categorization with the connected graph.

use serket::experiment::{run_exp1, Exp1Config, ExperimentReport};
use serket::synth::{generate_dataset, generate_world, GenSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec::from_toml(
        "records_per_category = 10
[world]
object_noise = 0.6
[world.tokens]
visual = 2
audio = 2
haptic = 2
motion = 50
",
    )?;
    let seed = 1;
    let world = generate_world(&spec.world, seed)?;
    let records = generate_dataset(&world, spec.records_per_category, seed)?;
    let report = run_exp1(&records, &Exp1Config::default(), seed)?;
    for v in &report.variants {
        println!("{:<12} object {:.2}  motion {:.2}", v.name, v.object.accuracy, v.motion.accuracy);
    }
    println!();
    print!("{}", ExperimentReport::Exp1(report).render_text());
    Ok(())
}
