//! Speech recognition and concept learning improving each other.
//!
//! The baseline segments recognized speech alone; the connected variant lets the concept
//! model choose among recognition hypotheses.

use serket::experiment::{run_exp2, Exp2Config};
use serket::synth::{generate_dataset, generate_world, GenSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec::from_toml(
        "records_per_category = 3
[world]
object_noise = 0.6
[world.tokens]
visual = 2
audio = 2
haptic = 2
motion = 50
[world.channel]
p_sub = 0.1
p_del = 0.0
p_ins = 0.0
",
    )?;
    let seed = 2;
    let world = generate_world(&spec.world, seed)?;
    let records = generate_dataset(&world, spec.records_per_category, seed)?;
    let config = Exp2Config {
        outer_iterations: 3,
        inner_sweeps: 30,
        seg_iterations: 20,
        ..Exp2Config::default()
    };
    let report = run_exp2(&records, &config, seed)?;

    for v in &report.variants {
        println!(
            "{:<24} phoneme {:.3}  segmentation F {:.3}  object {:.2}",
            v.name, v.phoneme_accuracy, v.segmentation.f_measure, v.object.accuracy
        );
    }
    for it in &report.iterations {
        println!("iteration {}: F {:.3}", it.iteration, it.seg_f);
    }
    Ok(())
}
