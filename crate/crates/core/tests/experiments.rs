use serket::channel::ChannelParams;
use serket::experiment::{run_exp1, run_exp2, Exp1Config, Exp2Config, ExperimentReport};
use serket::synth::{generate_dataset, generate_world, DatasetRecord, GenSpec};

fn records(spec: &str, seed: u64) -> Vec<DatasetRecord> {
    let spec = GenSpec::from_toml(spec).unwrap();
    let world = generate_world(&spec.world, seed).unwrap();
    generate_dataset(&world, spec.records_per_category, seed).unwrap()
}

#[test]
fn separable_world_is_solved_by_both_variants() {
    let r = run_exp1(&records("records_per_category = 10\n", 4), &Exp1Config::default(), 4).unwrap();
    for v in &r.variants {
        assert_eq!(v.object.accuracy, 1.0, "{}", v.name);
        assert_eq!(v.motion.accuracy, 1.0, "{}", v.name);
    }
    assert_eq!(r.integration_dims, (10, 10));
    assert_eq!(r.diagnostics.len(), 50);
}

#[test]
fn unexercised_connection_matches_independent() {
    let cfg = Exp1Config {
        rounds: 0,
        ..Exp1Config::default()
    };
    let r = run_exp1(&records("records_per_category = 10\n", 5), &cfg, 5).unwrap();
    let (a, b) = (&r.variants[0], &r.variants[1]);
    assert_eq!(a.object.accuracy, b.object.accuracy);
    assert_eq!(a.motion.accuracy, b.motion.accuracy);
    assert!(r.diagnostics.is_empty());
}

#[test]
fn noiseless_one_noun_lexicon_is_segmented() {
    let spec = "records_per_category = 5\n[world.lexicon]\nnouns_per_category = 1\n";
    let cfg = Exp2Config {
        channel: ChannelParams::noiseless(),
        ..Exp2Config::default()
    };
    let r = run_exp2(&records(spec, 6), &cfg, 6).unwrap();
    let b = &r.variants[1];
    assert!(b.segmentation.f_measure >= 0.95, "F {}", b.segmentation.f_measure);
    assert_eq!(r.iterations.len(), 10);
}

#[test]
fn single_hypothesis_is_flagged() {
    let spec = "records_per_category = 2\n[world.channel]\np_sub = 0.1\np_del = 0.0\np_ins = 0.0\n";
    let cfg = Exp2Config {
        l: 1,
        outer_iterations: 2,
        inner_sweeps: 10,
        seg_iterations: 3,
        ..Exp2Config::default()
    };
    let r = run_exp2(&records(spec, 7), &cfg, 7).unwrap();
    assert_eq!(r.single_candidate_selections, 2 * r.records);
    let text = ExperimentReport::Exp2(r).render_text();
    assert!(text.contains("single"));
}

#[test]
fn selected_scores_trend_upward() {
    let spec = "records_per_category = 5\n[world]\nobject_noise = 0.6\n[world.tokens]\nvisual = 2\naudio = 2\nhaptic = 2\nmotion = 50\n[world.channel]\np_sub = 0.1\np_del = 0.0\np_ins = 0.0\n";
    let r = run_exp2(&records(spec, 1), &Exp2Config::default(), 1).unwrap();
    let scores: Vec<f64> = r.iterations.iter().map(|i| i.mean_selected_score).collect();
    let q = (scores.len() / 4).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (first, last) = (mean(&scores[..q]), mean(&scores[scores.len() - q..]));
    assert!(last >= first, "first quartile {first}, last quartile {last}");
}
