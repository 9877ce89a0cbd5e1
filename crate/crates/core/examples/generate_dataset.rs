//! Generate a synthetic multimodal dataset, write it as JSON lines and read it back.

use serket::synth::{generate_dataset, generate_world, read_dataset, write_dataset, GenSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GenSpec::from_toml(
        r#"
records_per_category = 3
[world]
k_int = 4
k_obj = 4
k_mot = 4
object_noise = 0.2
[world.lexicon]
nouns_per_category = 2
[world.channel]
p_sub = 0.1
p_del = 0.0
p_ins = 0.0
"#,
    )?;
    let world = generate_world(&spec.world, 42)?;
    let records = generate_dataset(&world, spec.records_per_category, 42)?;

    for r in records.iter().take(4) {
        println!(
            "#{:<2} z={} obj={} mot={}  {:<28} heard {}",
            r.id,
            r.z,
            r.z_obj,
            r.z_mot,
            r.clean_words().join(" "),
            r.observed
        );
    }

    let path = std::env::temp_dir().join("serket_example.jsonl");
    write_dataset(&records, &path)?;
    let back = read_dataset(&path)?;
    println!("{} records round-tripped through {}", back.len(), path.display());
    assert_eq!(back, records);
    Ok(())
}
