//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line with the
//! measured value, its threshold and the runtime against its budget. The
//! process exits non-zero when any criterion fails.
//!
//! | #  | criterion                          | tolerance                        | budget |
//! |----|------------------------------------|----------------------------------|--------|
//! | 1  | message passing vs enumeration     | TV <= 0.05 after 5000 rounds     | 30 s   |
//! | 2  | SIR vs exact product               | TV <= 0.05 at L=2000, monotone   | 60 s   |
//! | 3  | Metropolis-Hastings vs enumeration | TV <= 0.05, 10000 steps          | 30 s   |
//! | 4  | MLDA Gibbs vs collapsed joint      | TV <= 0.05, 20000 sweeps         | 60 s   |
//! | 5  | HPYLM / NPYLM properties           | sum 1e-9, invariants, TV <= 0.05 |        |
//! | 6  | segmentation recovery              | F >= 0.8 after 50 iterations     | 120 s  |
//! | 7  | connected object categorization    | +5 points object, -2 motion      | 600 s  |
//! | 8  | mutual learning beats one-shot     | phoneme, F, object all higher    | 900 s  |
//! | 9  | worked segmentation example        | exact                            |        |
//! | 10 | CLI reruns are byte-identical      | exact modulo wall clock          |        |

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use serket::connector::{draw_candidates, mh_round, sir_select};
use serket::experiment::{run_exp1, run_exp2, Exp1Config, Exp2Config};
use serket::graph::{ConnectionKind, ModuleGraph};
use serket::message::CategoricalMessage;
use serket::metrics::{seg_eval, SegEvalResult};
use serket::mlda::{DocObservation, Mlda, MldaConfig, ModalitySpec};
use serket::module::{ConditionalTable, FixedPosterior};
use serket::npylm::{NpylmConfig, NpylmModel, SegmentedSentence};
use serket::pylm::{Hpylm, PyParams};
use serket::rng::{derived, seeded};
use serket::synth::{generate_dataset, generate_world, GenSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn msg(p: &[f64]) -> CategoricalMessage {
    CategoricalMessage::new(p.to_vec()).unwrap()
}

fn mp_oracle() -> Outcome {
    let posts = [[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]];
    let prior = [0.6, 0.4];
    let table = [[0.9, 0.1], [0.25, 0.75]];
    let mut g = ModuleGraph::new();
    let lo = g
        .register(
            "lower",
            0,
            Box::new(FixedPosterior::new(posts.iter().map(|p| msg(p)).collect())),
        )
        .unwrap();
    let up = g
        .register(
            "upper",
            1,
            Box::new(ConditionalTable::new(prior.to_vec(), table.iter().map(|r| r.to_vec()).collect(), 3).unwrap()),
        )
        .unwrap();
    g.connect(lo, up, ConnectionKind::Mp, 0).unwrap();
    g.train(5000, 11).unwrap();
    // FixedPosterior::fingerprint is the flattened tally table
    let tallies = g.module(lo).unwrap().fingerprint();
    let mut worst: f64 = 0.0;
    for (i, post) in posts.iter().enumerate() {
        let mut exact = [0.0; 2];
        for (u, row) in table.iter().enumerate() {
            for z in 0..2 {
                exact[z] += prior[u] * row[z] * post[z];
            }
        }
        let emp = normalize(&[tallies[2 * i] as f64, tallies[2 * i + 1] as f64]);
        worst = worst.max(tv(&emp, &normalize(&exact)));
    }
    Outcome {
        pass: worst <= 0.05,
        detail: format!("max TV {worst:.4} <= 0.05"),
    }
}

fn sir_oracle() -> Outcome {
    let p = [0.1, 0.4, 0.3, 0.2];
    let q = [0.5, 0.05, 0.25, 0.2];
    let exact = normalize(&p.iter().zip(&q).map(|(a, b)| a * b).collect::<Vec<_>>());
    let lower = FixedPosterior::new(vec![msg(&p)]);

    let mut rng = seeded(21);
    let mut hits = [0.0; 4];
    let trials = 4000;
    for _ in 0..trials {
        let cands = draw_candidates(&lower, 2000, &mut rng).unwrap();
        let (i, _) = sir_select(&cands[0], |&z| q[z].ln(), &mut rng);
        hits[cands[0].samples()[i]] += 1.0;
    }
    let tv_2000 = tv(&normalize(&hits), &exact);

    // exact selection law given each candidate set, averaged over seeds
    let ls = [10, 100, 1000, 10000];
    let seeds = 60;
    let mut mean_tv = Vec::new();
    for &l in &ls {
        let mut total = 0.0;
        for s in 0..seeds {
            let mut rng = derived(s, l as u64);
            let cands = draw_candidates(&lower, l, &mut rng).unwrap();
            let mut law = [0.0; 4];
            for &z in cands[0].samples() {
                law[z] += q[z];
            }
            total += tv(&normalize(&law), &exact);
        }
        mean_tv.push(total / seeds as f64);
    }
    let monotone = mean_tv.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: tv_2000 <= 0.05 && monotone,
        detail: format!(
            "TV at L=2000 {tv_2000:.4} <= 0.05; mean TV over L {ls:?}: [{}] non-increasing",
            mean_tv.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn mh_oracle() -> Outcome {
    let p = [0.5, 0.3, 0.2];
    let row = [0.1, 0.3, 0.6];
    let mut lower = FixedPosterior::new(vec![msg(&p)]);
    let mut upper = ConditionalTable::new(vec![1.0], vec![row.to_vec()], 1).unwrap();
    let mut rng = seeded(31);
    let out = mh_round(&mut lower, &mut upper, 0, 11000, 1000, &mut rng).unwrap();
    let mut counts = [0.0; 3];
    for state in &out.chain {
        counts[state[0]] += 1.0;
    }
    let exact = normalize(&p.iter().zip(&row).map(|(a, b)| a * b).collect::<Vec<_>>());
    let d = tv(&normalize(&counts), &exact);
    Outcome {
        pass: out.chain.len() == 10000 && d <= 0.05,
        detail: format!("TV {d:.4} <= 0.05 over {} post-burn-in steps", out.chain.len()),
    }
}

/// `ln Gamma(a + n) - ln Gamma(a)` for integer `n`.
fn ln_rising(a: f64, n: u32) -> f64 {
    (0..n).map(|i| (a + i as f64).ln()).sum()
}

fn gibbs_oracle() -> Outcome {
    let (k, v, alpha, gamma) = (2usize, 3usize, 0.8, 0.5);
    // token words in the order the model stores them
    let docs: [&[usize]; 2] = [&[0, 0, 1], &[1, 2]];
    let counts: Vec<Vec<u32>> = docs
        .iter()
        .map(|d| (0..v).map(|w| d.iter().filter(|&&x| x == w).count() as u32).collect())
        .collect();
    let tokens: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .flat_map(|(j, d)| d.iter().map(move |&w| (j, w)))
        .collect();
    let n = tokens.len();
    let states = k.pow(n as u32);
    let mut log_joint = vec![0.0; states];
    for (s, lj) in log_joint.iter_mut().enumerate() {
        let z: Vec<usize> = (0..n).map(|t| (s / k.pow(t as u32)) % k).collect();
        let mut n_jk = [[0u32; 2]; 2];
        let mut n_kw = [[0u32; 3]; 2];
        let mut n_k = [0u32; 2];
        for (&(j, w), &zt) in tokens.iter().zip(&z) {
            n_jk[j][zt] += 1;
            n_kw[zt][w] += 1;
            n_k[zt] += 1;
        }
        *lj = n_jk.iter().flatten().map(|&c| ln_rising(alpha, c)).sum::<f64>()
            + n_kw.iter().flatten().map(|&c| ln_rising(gamma, c)).sum::<f64>()
            - n_k.iter().map(|&c| ln_rising(v as f64 * gamma, c)).sum::<f64>();
    }
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exact = normalize(&log_joint.iter().map(|l| (l - max).exp()).collect::<Vec<_>>());

    let cfg = MldaConfig::new(k, vec![ModalitySpec::new("m", v).with_gamma(gamma)]).with_alpha(alpha);
    let obs: Vec<DocObservation> = counts.into_iter().map(|c| DocObservation::new(vec![c])).collect();
    let mut rng = seeded(41);
    let mut model = Mlda::with_documents(cfg, &obs, &mut rng).unwrap();
    for _ in 0..200 {
        model.gibbs_sweep(None, &mut rng).unwrap();
    }
    let sweeps = 20000;
    let mut hist = vec![0.0; states];
    for _ in 0..sweeps {
        model.gibbs_sweep(None, &mut rng).unwrap();
        let z: Vec<usize> = (0..2).flat_map(|j| model.assignments(j, 0)).collect();
        let s: usize = z.iter().enumerate().map(|(t, &zt)| zt * k.pow(t as u32)).sum();
        hist[s] += 1.0;
    }
    let d = tv(&normalize(&hist), &exact);
    Outcome {
        pass: d <= 0.05,
        detail: format!("TV {d:.4} <= 0.05 over {states} joint states, {sweeps} sweeps"),
    }
}

fn lm_properties() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // predictive normalization at random seatings
    let vocab = 6u32;
    let base = 1.0 / vocab as f64;
    let mut lm = Hpylm::new(3, PyParams::new(0.5, 2.0).unwrap());
    let mut rng = seeded(51);
    let mut worst_sum: f64 = 0.0;
    for step in 0..600 {
        let ctx = [rng.random_range(0..vocab), rng.random_range(0..vocab)];
        lm.add(&ctx, rng.random_range(0..vocab), base, &mut rng);
        if step % 50 == 0 {
            for _ in 0..20 {
                let probe = [rng.random_range(0..vocab), rng.random_range(0..vocab)];
                let s: f64 = (0..vocab).map(|w| lm.prob(&probe, w, base)).sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
            }
        }
    }
    pass &= worst_sum <= 1e-9;
    notes.push(format!("max |sum - 1| {worst_sum:.1e} <= 1e-9"));

    // seating invariants under random add/remove
    let mut lm = Hpylm::new(3, PyParams::new(0.5, 2.0).unwrap());
    let mut seated: Vec<([u32; 2], u32)> = Vec::new();
    let mut broken = 0;
    for _ in 0..1000 {
        if seated.is_empty() || rng.random_bool(0.6) {
            let ctx = [rng.random_range(0..3), rng.random_range(0..3)];
            let w = rng.random_range(0..vocab);
            lm.add(&ctx, w, base, &mut rng);
            seated.push((ctx, w));
        } else {
            let (ctx, w) = seated.swap_remove(rng.random_range(0..seated.len()));
            lm.remove(&ctx, w, &mut rng).unwrap();
        }
        let leaves = lm.customer_profile().into_iter().filter(|((c, _), _)| c.len() == 2);
        let expected = seated.iter().fold(std::collections::BTreeMap::new(), |mut m, (c, w)| {
            *m.entry((c.to_vec(), *w)).or_insert(0u32) += 1;
            m
        });
        if lm.check_invariants().is_err() || leaves.collect::<std::collections::BTreeMap<_, _>>() != expected {
            broken += 1;
        }
    }
    for (ctx, w) in seated.drain(..) {
        lm.remove(&ctx, w, &mut rng).unwrap();
    }
    pass &= broken == 0 && lm.is_empty();
    notes.push(format!("{broken} invariant violations in 1000 operations"));

    // segmentation sampler vs enumeration of every segmentation
    let mut model = NpylmModel::new(&['a', 'b', 'c'], NpylmConfig::default()).unwrap();
    let mut rng = seeded(52);
    for s in [vec!["ab", "c"], vec!["ab", "ab"], vec!["c", "ab", "c"], vec!["abc"]] {
        model.add_sentence(&s, &mut rng).unwrap();
    }
    let mut worst_tv: f64 = 0.0;
    for raw in ["abcab", "cabcab", "bca"] {
        let len = raw.chars().count();
        let segs: Vec<SegmentedSentence> = (0..1usize << (len - 1))
            .map(|mask| SegmentedSentence::new(raw, (1..len).filter(|c| mask >> (c - 1) & 1 == 1).collect()).unwrap())
            .collect();
        let logs: Vec<f64> = segs.iter().map(|s| model.sequence_prob(s).unwrap()).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exact = normalize(&logs.iter().map(|l| (l - max).exp()).collect::<Vec<_>>());
        let mut hist = vec![0.0; segs.len()];
        for _ in 0..20000 {
            let s = model.sample_segmentation(raw, &mut rng).unwrap();
            hist[segs.iter().position(|x| *x == s).unwrap()] += 1.0;
        }
        worst_tv = worst_tv.max(tv(&normalize(&hist), &exact));
    }
    pass &= worst_tv <= 0.05;
    notes.push(format!("segmentation sampler TV {worst_tv:.4} <= 0.05"));
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn segmentation_recovery() -> Outcome {
    let lexicon = ["kamo", "risuta", "ne"];
    let mut rng = seeded(61);
    let truth: Vec<SegmentedSentence> = (0..150)
        .map(|_| {
            let n = rng.random_range(2..=4);
            let words: Vec<&str> = (0..n).map(|_| lexicon[rng.random_range(0..3)]).collect();
            SegmentedSentence::from_words(&words)
        })
        .collect();
    let alphabet: Vec<char> = "kamorisutne".chars().collect();
    let mut model = NpylmModel::new(&alphabet, NpylmConfig::default()).unwrap();
    let raws: Vec<&str> = truth.iter().map(|s| s.raw.as_str()).collect();
    let est = model.segment_corpus(&raws, 50, &mut rng).unwrap();
    let evals: Vec<SegEvalResult> = truth
        .iter()
        .zip(&est)
        .map(|(t, e)| seg_eval(&t.cut_points, &e.cut_points, &t.raw, &e.raw).unwrap())
        .collect();
    let f = SegEvalResult::sum(&evals).f_measure;
    Outcome {
        pass: f >= 0.8,
        detail: format!("F {f:.3} >= 0.8"),
    }
}

const NOISY_OBJECTS: &str = "
[world]
object_noise = 0.6
[world.tokens]
visual = 2
audio = 2
haptic = 2
motion = 50
";

fn connected_categorization() -> Outcome {
    let spec = GenSpec::from_toml(&format!("records_per_category = 10\n{NOISY_OBJECTS}")).unwrap();
    let (mut d_obj, mut d_mot) = (Vec::new(), Vec::new());
    for seed in 1..=5 {
        let world = generate_world(&spec.world, seed).unwrap();
        let records = generate_dataset(&world, spec.records_per_category, seed).unwrap();
        let r = run_exp1(&records, &Exp1Config::default(), seed).unwrap();
        let (ind, con) = (&r.variants[0], &r.variants[1]);
        d_obj.push(con.object.accuracy - ind.object.accuracy);
        d_mot.push(con.motion.accuracy - ind.motion.accuracy);
    }
    let (o, m) = (median(d_obj.clone()), median(d_mot));
    Outcome {
        pass: o >= 0.05 && m >= -0.02,
        detail: format!(
            "median object gain {:+.1} >= +5 points (per seed {:?}); median motion change {:+.1} >= -2 points",
            100.0 * o,
            d_obj.iter().map(|d| (100.0 * d).round()).collect::<Vec<_>>(),
            100.0 * m
        ),
    }
}

fn mutual_learning() -> Outcome {
    let spec = GenSpec::from_toml(&format!(
        "records_per_category = 5\n{NOISY_OBJECTS}\n[world.channel]\np_sub = 0.1\np_del = 0.0\np_ins = 0.0\n"
    ))
    .unwrap();
    let mut rows = vec![Vec::new(); 6];
    for seed in 1..=5 {
        let world = generate_world(&spec.world, seed).unwrap();
        let records = generate_dataset(&world, spec.records_per_category, seed).unwrap();
        let r = run_exp2(&records, &Exp2Config::default(), seed).unwrap();
        for (i, v) in r.variants.iter().enumerate() {
            rows[3 * i].push(v.phoneme_accuracy);
            rows[3 * i + 1].push(v.segmentation.f_measure);
            rows[3 * i + 2].push(v.object.accuracy);
        }
    }
    let med: Vec<f64> = rows.into_iter().map(median).collect();
    let names = ["phoneme accuracy", "seg F", "object accuracy"];
    let pass = (0..3).all(|i| med[3 + i] > med[i]);
    Outcome {
        pass,
        detail: (0..3)
            .map(|i| format!("{} (b) {:.3} > (a) {:.3}", names[i], med[3 + i], med[i]))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn worked_segmentation() -> Outcome {
    let r = seg_eval(&[1, 3], &[1, 2], "ABCD", "AACD").unwrap();
    let pass = (r.n_tp, r.n_fp, r.n_fn) == (1, 1, 1) && r.precision == 0.5 && r.recall == 0.5 && r.f_measure == 0.5;
    Outcome {
        pass,
        detail: format!(
            "TP {} FP {} FN {} P {} R {} F {}",
            r.n_tp, r.n_fp, r.n_fn, r.precision, r.recall, r.f_measure
        ),
    }
}

fn serket(args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_serket")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn without_wall_clock(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("wall_clock_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    std::fs::write(
        p("gen.toml"),
        "records_per_category = 2\n[world.channel]\np_sub = 0.1\np_del = 0.0\np_ins = 0.0\n",
    )
    .unwrap();
    std::fs::write(
        p("run.toml"),
        "[exp1]\ninner_sweeps = 10\nrounds = 3\n[exp2]\nouter_iterations = 2\ninner_sweeps = 5\nseg_iterations = 2\nl = 3\nbeam = 8\n",
    )
    .unwrap();
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_owned());
        }
    };
    for run in ["a", "b"] {
        let data = p(&format!("data_{run}.jsonl"));
        let code = serket(&["gen", "--spec", &p("gen.toml"), "--seed", "7", "--out", &data]).0;
        check("gen exit", code == 0);
        for exp in ["exp1", "exp2"] {
            let report = p(&format!("{exp}_{run}.json"));
            let code = serket(&[exp, "--data", &data, "--config", &p("run.toml"), "--seed", "7", "--report", &report]).0;
            check(exp, code == 0);
        }
    }
    check(
        "gen",
        std::fs::read(p("data_a.jsonl")).unwrap() == std::fs::read(p("data_b.jsonl")).unwrap(),
    );
    for exp in ["exp1", "exp2"] {
        let (a, b) = (
            without_wall_clock(Path::new(&p(&format!("{exp}_a.json")))),
            without_wall_clock(Path::new(&p(&format!("{exp}_b.json")))),
        );
        check(exp, a == b);
        let eval = |run: &str| serket(&["eval", "--report", &p(&format!("{exp}_{run}.json"))]);
        let (ea, eb) = (eval("a"), eval("b"));
        check("eval exit", ea.0 == 0 && eb.0 == 0);
        let strip = |v: Vec<u8>| {
            String::from_utf8(v)
                .unwrap()
                .lines()
                .filter(|l| !l.contains("wall clock"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        check("eval", strip(ea.1) == strip(eb.1));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "gen, exp1, exp2 and eval reproduce byte for byte".into()
        } else {
            format!("differences in {}", failures.join(", "))
        },
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<u64>); 10] = [
        ("message passing matches enumeration", mp_oracle, Some(30)),
        ("SIR matches the exact product", sir_oracle, Some(60)),
        ("Metropolis-Hastings matches enumeration", mh_oracle, Some(30)),
        ("MLDA Gibbs matches the collapsed joint", gibbs_oracle, Some(60)),
        ("HPYLM and NPYLM properties", lm_properties, None),
        ("segmentation recovery", segmentation_recovery, Some(120)),
        ("connected object categorization", connected_categorization, Some(600)),
        ("mutual learning beats one-shot", mutual_learning, Some(900)),
        ("worked segmentation example", worked_segmentation, None),
        ("CLI determinism", cli_determinism, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= Duration::from_secs(b));
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let time = match budget {
            Some(b) => format!("{:.1}s < {b}s", elapsed.as_secs_f64()),
            None => format!("{:.1}s", elapsed.as_secs_f64()),
        };
        println!(
            "{} {:>2} {name}: {} [{time}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
