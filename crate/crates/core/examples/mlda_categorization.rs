//! Multimodal LDA on synthetic object records.
//!
//! Three object modalities (visual, audio, haptic) are categorized jointly and
//! scored against the generating categories.

use serket::metrics::matched_accuracy;
use serket::mlda::{DocObservation, Mlda, MldaConfig, ModalitySpec};
use serket::rng::seeded;
use serket::synth::{generate_dataset, generate_world, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = WorldSpec::default();
    let world = generate_world(&spec, 1)?;
    let records = generate_dataset(&world, 10, 1)?;

    let d = &spec.dims;
    let config = MldaConfig::new(
        spec.k_obj,
        vec![
            ModalitySpec::new("visual", d.visual),
            ModalitySpec::new("audio", d.audio),
            ModalitySpec::new("haptic", d.haptic),
        ],
    );
    let docs: Vec<DocObservation> = records.iter().map(|r| DocObservation::new(r.counts.object())).collect();
    let mut rng = seeded(1);
    let mut model = Mlda::with_documents(config, &docs, &mut rng)?;
    for _ in 0..100 {
        model.gibbs_sweep(None, &mut rng)?;
    }

    let truth: Vec<usize> = records.iter().map(|r| r.z_obj).collect();
    let pred: Vec<usize> = (0..model.num_docs()).map(|j| model.doc_label(j)).collect();
    let m = matched_accuracy(&truth, &pred)?;
    println!("{} records, accuracy {:.3}", records.len(), m.accuracy);
    println!("{}", m.confusion.aligned(&m.permutation).render());
    Ok(())
}
