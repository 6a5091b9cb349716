// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use ndesteer::corpus::{object_list, synthetic_annotations, synthetic_images};
use ndesteer::eval::{
    aggregate_mmhal, build_pope_questions, score_pope, CorpusStats, Label, MmhalCategory, MmhalRecord, PopeQuestion,
    Strategy,
};
use ndesteer::nde::{DirectionMeta, LayerDirections};
use ndesteer::scg::{oracle_nde_scalar, planted_recovery, random_unit_vector, Fusion};
use ndesteer::tensor::{pca_principal_directions, Tensor};
use ndesteer::vlm::{argmax_lowest, Role, VisionInput, Weights};
use ndesteer::*;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn pca_oracle() -> Check {
    let start = Instant::now();
    let mut rng = XorShift64Star::new(0x5eed);
    let mut worst = 1.0f64;
    for _ in 0..100 {
        let rows = 3 + rng.below(48);
        let cols = 2 + rng.below(63);
        let data: Vec<f32> = (0..rows * cols).map(|_| rng.normal() as f32).collect();
        let ours = pca_principal_directions(&Tensor::new(vec![rows, cols], data.clone()).unwrap(), 1, None)
            .map_err(|e| e.to_string())?;
        let m = DMatrix::from_fn(rows, cols, |r, c| data[r * cols + c] as f64);
        let mean = m.row_mean();
        let centered = DMatrix::from_fn(rows, cols, |r, c| m[(r, c)] - mean[c]);
        let eig = SymmetricEigen::new(centered.transpose() * &centered);
        let top = (0..cols).max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap();
        let truth = eig.eigenvectors.column(top);
        let dot: f64 = ours.directions[0].iter().zip(truth.iter()).map(|(&a, b)| a as f64 * b).sum();
        let na = ours.directions[0].iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
        worst = worst.min((dot / (na * truth.norm())).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst >= 1.0 - 1e-9, || format!("worst |cos| {worst}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("worst |cos| = 1 - {:.1e}, {elapsed:.2?}", 1.0 - worst))
}

fn planted_recovery_check() -> Check {
    let start = Instant::now();
    let cfg = ToyVlmConfig::default();
    let masks = MaskSpec { m: 5, ..Default::default() };
    let mut notes = Vec::new();
    for fam in Family::ALL {
        let run = |n: usize, seed: u64| planted_recovery(&cfg, fam, n, 0.05, &masks, seed).map(|r| r.cosine);
        let at50: Vec<f64> = (0..10).map(|s| run(50, s)).collect::<Result<_>>().map_err(|e| e.to_string())?;
        let at5: Vec<f64> = (0..10).map(|s| run(5, s)).collect::<Result<_>>().map_err(|e| e.to_string())?;
        let min50 = at50.iter().cloned().fold(f64::INFINITY, f64::min);
        ensure(min50 >= 0.99, || format!("{fam}: N=50 cosine {min50}"))?;
        let (m50, m5) = (median(at50), median(at5));
        ensure(m50 >= m5, || format!("{fam}: median N=50 {m50} < median N=5 {m5}"))?;
        notes.push(format!("{}: min {min50:.5}, median 1-cos {:.1e} (N=50) vs {:.1e} (N=5)", fam.key(), 1.0 - m50, 1.0 - m5));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{}, {elapsed:.2?}", notes.join("; ")))
}

fn scg_closed_forms() -> Check {
    let mut rng = XorShift64Star::new(3);
    let mut u = || rng.next_f64() * 20.0 - 10.0;
    for i in 0..1000 {
        let spec = ScgSpec { alpha_t: u(), beta_v: u(), gamma_f: u(), fusion: Fusion::Sum, noise_sigma: 0.0, seed: i };
        let (t, v, ts, vs, vn) = (u(), u(), u(), u(), u());
        let cases = [
            (oracle_nde_scalar(&spec, NdeKind::V, t, v, vs, None), (spec.beta_v + spec.gamma_f) * (v - vs)),
            (oracle_nde_scalar(&spec, NdeKind::T, t, v, ts, None), (spec.alpha_t + spec.gamma_f) * (t - ts)),
            (oracle_nde_scalar(&spec, NdeKind::VT, t, v, vs, Some(vn)), (spec.beta_v + spec.gamma_f) * (vs - vn)),
        ];
        for (got, expect) in cases {
            let got = got.map_err(|e| e.to_string())?;
            ensure((got - expect).abs() <= 1e-9 * expect.abs().max(1.0), || {
                format!("spec {i}: {got} vs {expect}")
            })?;
        }
    }
    Ok("1000 specs x 3 contrasts".into())
}

fn full_directions(d: usize, layers: usize, seed: u64) -> DirectionSet {
    let mut ds = DirectionSet::new(DirectionMeta::default());
    for l in 1..=layers {
        let s = seed.wrapping_mul(31).wrapping_add(l as u64 * 7);
        ds.layers.insert(
            l,
            LayerDirections {
                v: Some(random_unit_vector(d, s)),
                t: Some(random_unit_vector(d, s + 1)),
                vt: Some(random_unit_vector(d, s + 2)),
            },
        );
    }
    ds
}

fn null_identity() -> Check {
    for seed in 0..20u64 {
        let cfg = ToyVlmConfig {
            n_layers: 1 + (seed % 4) as usize,
            attention_mode: if seed % 2 == 0 { AttentionMode::PrefixBidirectional } else { AttentionMode::FullyCausal },
            seed,
            ..Default::default()
        };
        let model = ToyVlm::init_seeded(cfg.clone()).map_err(|e| e.to_string())?;
        let ds = full_directions(cfg.d_model, cfg.n_layers, seed);
        let null = InterventionConfig::null();
        let iv = Intervention::new(&ds, &null);
        let img = synthetic_images(&cfg, 1, seed).unwrap().remove(0);
        let objs = object_list();
        let prompt = model.tokenizer().tokenize(&format!("is there a {} in the image ?", objs[seed as usize % objs.len()]));
        let a = model.forward(VisionInput::Image(&img), &prompt, &[], None, false).map_err(|e| e.to_string())?;
        let b = model.forward(VisionInput::Image(&img), &prompt, &[], Some(&iv), false).map_err(|e| e.to_string())?;
        let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a.logits) == bits(&b.logits), || format!("seed {seed}: logits differ"))?;
        let ga = model.generate_greedy(VisionInput::Image(&img), &prompt, 8, None).map_err(|e| e.to_string())?;
        let gb = model.generate_greedy(VisionInput::Image(&img), &prompt, 8, Some(&iv)).map_err(|e| e.to_string())?;
        ensure(ga == gb, || format!("seed {seed}: generations differ"))?;
    }
    Ok("20 model/input pairs bitwise equal".into())
}

/// Pass-through single-layer model whose only non-zero head columns are
/// "yes" and "no".
fn yes_no_model() -> (ToyVlm, u32, u32) {
    let cfg = ToyVlmConfig { n_layers: 1, seed: 0, ..Default::default() };
    let d = cfg.d_model;
    let vsize = cfg.vocab_size();
    let (yes, no) = (cfg.token_id("yes").unwrap(), cfg.token_id("no").unwrap());
    let mut w = Weights::passthrough(&cfg).unwrap();
    let mut rng = XorShift64Star::new(77);
    w.patch_w = Tensor::new(vec![cfg.patch * cfg.patch, d], (0..cfg.patch * cfg.patch * d).map(|_| rng.normal() as f32 * 0.5).collect()).unwrap();
    w.patch_b = Tensor::new(vec![d], (0..d).map(|_| rng.normal() as f32 * 0.5).collect()).unwrap();
    let mut head = vec![0.0f32; d * vsize];
    for k in 0..d {
        head[k * vsize + yes as usize] = rng.normal() as f32 * 0.3;
        head[k * vsize + no as usize] = rng.normal() as f32 * 0.3;
    }
    w.head_w = Tensor::new(vec![d, vsize], head).unwrap();
    let mut bias = vec![0.0f32; vsize];
    bias[yes as usize] = 20.0;
    bias[no as usize] = 20.0;
    w.head_b = Tensor::new(vec![vsize], bias).unwrap();
    (ToyVlm::from_parts(cfg, w).unwrap(), yes, no)
}

fn final_layer_linearity() -> Check {
    // logit deltas on a seeded model, all three families at the last layer
    let cfg = ToyVlmConfig { n_layers: 3, seed: 21, ..Default::default() };
    let model = ToyVlm::init_seeded(cfg.clone()).map_err(|e| e.to_string())?;
    let ds = full_directions(cfg.d_model, cfg.n_layers, 5);
    let img = synthetic_images(&cfg, 1, 9).unwrap().remove(0);
    let prompt = model.tokenizer().tokenize("is there a horse in the image ?");
    let base = model.forward(VisionInput::Image(&img), &prompt, &[], None, true).map_err(|e| e.to_string())?;
    let roles = base.trace.as_ref().unwrap().roles.clone();
    let head = model.weights().head_w.clone();
    let last = cfg.n_layers;
    let mut worst = 0.0f64;
    for (a, b, c) in [(0.9f32, 0.9f32, 0.9f32), (-1.7, 0.4, 2.0), (0.3, -1.1, -0.6)] {
        let icfg = InterventionConfig { a, b, c, layers: LayerSelection::List(vec![last]), ..Default::default() };
        let iv = Intervention::new(&ds, &icfg);
        let out = model.forward(VisionInput::Image(&img), &prompt, &[], Some(&iv), false).map_err(|e| e.to_string())?;
        for (pos, role) in roles.iter().enumerate() {
            let added: Vec<f64> = match role {
                Role::Vision => ds.direction(last, Family::Vision).unwrap().iter().map(|&x| a as f64 * x as f64).collect(),
                _ => {
                    let vt = ds.direction(last, Family::CrossModal).unwrap();
                    let t = ds.direction(last, Family::Text).unwrap();
                    vt.iter().zip(t).map(|(&x, &y)| b as f64 * x as f64 + c as f64 * y as f64).collect()
                }
            };
            for tok in 0..cfg.vocab_size() {
                let expect: f64 = (0..cfg.d_model).map(|k| added[k] * head.row(k)[tok] as f64).sum();
                let got = out.logits.row(pos)[tok] as f64 - base.logits.row(pos)[tok] as f64;
                worst = worst.max((got - expect).abs());
            }
        }
    }
    ensure(worst <= 1e-5, || format!("max logit-delta error {worst:e}"))?;

    // argmax sweep on the hand-built yes/no model
    let (model, yes, no) = yes_no_model();
    let d = model.config().d_model;
    let hw = &model.weights().head_w;
    let dir: Vec<f32> = (0..d).map(|k| hw.row(k)[no as usize] - hw.row(k)[yes as usize]).collect();
    let n = dir.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let dir: Vec<f32> = dir.iter().map(|x| (*x as f64 / n) as f32).collect();
    let mut ds = DirectionSet::new(DirectionMeta::default());
    ds.layers.insert(1, LayerDirections { v: Some(dir.clone()), ..Default::default() });
    let img = synthetic_images(model.config(), 1, 2).unwrap().remove(0);
    let base = model.forward(VisionInput::Image(&img), &[], &[], None, true).map_err(|e| e.to_string())?;
    let h = base.trace.unwrap().hidden(1, 0).to_vec();
    let margin = |v: &[f32]| -> f64 {
        (0..d).map(|k| v[k] as f64 * (hw.row(k)[yes as usize] as f64 - hw.row(k)[no as usize] as f64)).sum()
    };
    // yes − no at slot 0 is margin(h) + a · margin(dir); zero at a*
    let threshold = -margin(&h) / margin(&dir);
    ensure(threshold.abs() < 2.0, || format!("analytic threshold {threshold} outside the sweep"))?;
    let step = 0.01f64;
    // d(yes)/da is the projection of the yes column on the direction
    let slope: f64 = (0..d).map(|k| dir[k] as f64 * hw.row(k)[yes as usize] as f64).sum();
    ensure(slope.abs() > 1e-3, || format!("yes-logit slope {slope} too flat"))?;
    let mut prev_yes = f64::NAN;
    let mut flip = None;
    let mut prev_arg = None;
    for i in 0..=400 {
        let a = -2.0 + step * i as f64;
        let icfg = InterventionConfig { a: a as f32, b: 0.0, c: 0.0, layers: LayerSelection::List(vec![1]), ..Default::default() };
        let iv = Intervention::new(&ds, &icfg);
        let out = model.forward(VisionInput::Image(&img), &[], &[], Some(&iv), false).map_err(|e| e.to_string())?;
        let row = out.logits.row(0);
        let yes_logit = row[yes as usize] as f64;
        let monotone = i == 0 || (yes_logit - prev_yes) * slope.signum() > 0.0;
        ensure(monotone, || format!("yes-logit not monotone at a={a}"))?;
        prev_yes = yes_logit;
        let arg = argmax_lowest(row) as u32;
        ensure(arg == yes || arg == no, || format!("argmax {arg} is neither yes nor no"))?;
        if prev_arg.is_some_and(|p| p != arg) && flip.is_none() {
            flip = Some(a);
        }
        prev_arg = Some(arg);
    }
    let flip = flip.ok_or("no argmax flip in [-2, 2]")?;
    ensure((flip - threshold).abs() <= step + 1e-9, || format!("flip at {flip}, analytic {threshold}"))?;
    Ok(format!("max delta err {worst:.1e}; flip {flip:.2} vs analytic {threshold:.4}"))
}

fn norm_bound() -> Check {
    let mut rng = XorShift64Star::new(6);
    let d = 24;
    let ds = full_directions(d, 1, 8);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..1000 {
        let mut coeff = || (rng.next_f64() * 8.0 - 4.0) as f32;
        let icfg = InterventionConfig { a: coeff(), b: coeff(), c: coeff(), ..Default::default() };
        let h: Vec<f32> = (0..d).map(|_| (rng.normal() * 3.0) as f32).collect();
        for (role, bound) in [(Role::Vision, icfg.a.abs()), (Role::Text, icfg.b.abs() + icfg.c.abs())] {
            let e = apply_intervention(&h, role, 1, &ds, &icfg).map_err(|e| e.to_string())?;
            let dist = e.iter().zip(&h).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(dist - bound as f64);
            ensure(dist <= bound as f64 + 1e-6, || format!("application {i}: {dist} > {bound}"))?;
        }
    }
    Ok(format!("1000 applications, max excess {worst:.1e}"))
}

fn questions_for(tp: usize, fp: usize, fn_: usize, tn: usize, answer_yes_always: bool) -> (Vec<String>, Vec<PopeQuestion>) {
    let mut qs = Vec::new();
    let mut preds = Vec::new();
    let mut push = |label, said_yes: bool| {
        qs.push(PopeQuestion {
            question_id: format!("q{}", qs.len()),
            image_id: "img".into(),
            object: "dog".into(),
            label,
            strategy: Strategy::Random,
        });
        preds.push(if said_yes || answer_yes_always { "Yes." } else { "No." }.to_string());
    };
    (0..tp).for_each(|_| push(Label::Yes, true));
    (0..fn_).for_each(|_| push(Label::Yes, false));
    (0..fp).for_each(|_| push(Label::No, true));
    (0..tn).for_each(|_| push(Label::No, false));
    (preds, qs)
}

fn metrics_check() -> Check {
    let m = |tp, fp, fn_, tn| {
        let (p, q) = questions_for(tp, fp, fn_, tn, false);
        score_pope(&p, &q).unwrap()
    };
    let a = m(40, 10, 10, 40);
    ensure((a.accuracy, a.precision, a.recall, a.f1) == (0.80, 0.80, 0.80, 0.80), || format!("example 1: {a:?}"))?;
    let b = m(30, 10, 20, 40);
    ensure(b.precision == 0.75 && b.recall == 0.60 && (b.f1 - 0.6666667).abs() <= 1e-6, || format!("example 2: {b:?}"))?;
    let c = m(25, 0, 0, 25);
    ensure((c.accuracy, c.precision, c.recall, c.f1) == (1.0, 1.0, 1.0, 1.0), || format!("example 3: {c:?}"))?;
    for k in [1usize, 7, 50, 333] {
        let (p, q) = questions_for(k, 0, 0, k, true);
        let s = score_pope(&p, &q).unwrap();
        ensure(s.recall == 1.0 && s.precision == 0.5 && (s.f1 - 2.0 / 3.0).abs() <= 1e-9, || format!("always-yes k={k}: {s:?}"))?;
    }
    let mut rng = XorShift64Star::new(50);
    for set in 0..50 {
        let n = 1 + rng.below(60);
        let records: Vec<MmhalRecord> = (0..n)
            .map(|i| MmhalRecord {
                question_id: format!("{set}-{i}"),
                category: MmhalCategory::ALL[rng.below(8)],
                score: rng.next_f64() * 6.0,
            })
            .collect();
        let s = aggregate_mmhal(&records, 3.0).map_err(|e| e.to_string())?;
        let mut sum = 0.0;
        let mut per: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for r in &records {
            sum += r.score;
            let e = per.entry(r.category.name()).or_default();
            e.0 += r.score;
            e.1 += 1;
        }
        ensure((s.overall - sum / n as f64).abs() <= 1e-9, || format!("set {set}: overall"))?;
        for (c, (total, count)) in per {
            ensure((s.per_category[c] - total / count as f64).abs() <= 1e-9, || format!("set {set}: {c}"))?;
        }
        let rate = records.iter().filter(|r| r.score < 3.0).count() as f64 / n as f64;
        ensure((s.hallucination_rate - rate).abs() <= 1e-9, || format!("set {set}: rate"))?;
    }
    Ok("3 worked examples, always-yes F1 = 2/3, 50 record sets".into())
}

fn sampler_check() -> Check {
    let objects = object_list();
    let mut checked = 0;
    for corpus_seed in 0..20u64 {
        let mut rng = XorShift64Star::new(corpus_seed);
        let pool = 8 + rng.below(objects.len() - 8);
        let corpus = synthetic_annotations(10 + rng.below(30), &objects[..pool], 1, 5.min(pool - 2), corpus_seed)
            .map_err(|e| e.to_string())?;
        let stats = CorpusStats::from_annotations(&corpus);
        for strategy in [Strategy::Popular, Strategy::Adversarial] {
            let qs = build_pope_questions(&corpus, &stats, strategy, 1, corpus_seed).map_err(|e| e.to_string())?;
            for r in &corpus {
                let absent: Vec<&String> = stats.objects.iter().filter(|o| !r.present_objects.contains(*o)).collect();
                let score = |o: &str| -> usize {
                    match strategy {
                        Strategy::Popular => corpus.iter().filter(|c| c.present_objects.contains(o)).count(),
                        _ => r
                            .present_objects
                            .iter()
                            .map(|p| corpus.iter().filter(|c| c.present_objects.contains(o) && c.present_objects.contains(p)).count())
                            .sum(),
                    }
                };
                let best = absent.iter().map(|o| score(o)).max().unwrap();
                let expect = absent.iter().filter(|o| score(o) == best).min().unwrap();
                let got = qs.iter().find(|q| q.image_id == r.image_id && q.label == Label::No).unwrap();
                ensure(&got.object == *expect, || {
                    format!("corpus {corpus_seed} {strategy} {}: {} vs {expect}", r.image_id, got.object)
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} choices, 100% agreement"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ndesteer")
}

fn run(args: &[&str]) -> std::result::Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn default_fidelity() -> Check {
    let text = run(&["defaults"])?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    for (key, expect) in [("n_samples", "50"), ("a", "0.9"), ("b", "0.9"), ("c", "0.9"), ("pca_dim", "1")] {
        ensure(text.contains(&format!("\"{key}\": {expect},")), || format!("defaults {key} = {}", v[key]))?;
    }
    let iv = serde_json::to_value(InterventionConfig::default()).unwrap();
    ensure(serde_json::to_string(&InterventionConfig::default()).unwrap().contains("\"a\":0.9,\"b\":0.9,\"c\":0.9"), || {
        format!("intervention default {iv}")
    })?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("m.tvlm");
    let dirs = dir.path().join("d.json");
    run(&["init", "--out", model.to_str().unwrap()])?;
    run(&["estimate", "--model", model.to_str().unwrap(), "--out", dirs.to_str().unwrap()])?;
    let ds = DirectionSet::load(&dirs, None, false).map_err(|e| e.to_string())?;
    ensure(ds.meta.n_samples == 50 && ds.meta.pca_dim == 1 && ds.meta.masks == 5, || format!("meta {:?}", ds.meta))?;
    Ok("defaults N=50 a=b=c=0.9 pca_dim=1 m=5; estimate meta matches".into())
}

fn pipeline(dir: &Path) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    run(&["init", "--seed", "11", "--out", &p("model.tvlm")])?;
    run(&["estimate", "--model", &p("model.tvlm"), "--seed", "5", "--n-samples", "20", "--out", &p("directions.json")])?;
    run(&[
        "generate", "--model", &p("model.tvlm"), "--directions", &p("directions.json"), "--seed", "5",
        "--prompt", "what is in the image ?", "--out", &p("generation.json"),
    ])?;
    run(&[
        "eval-pope", "--model", &p("model.tvlm"), "--directions", &p("directions.json"), "--seed", "5",
        "--strategy", "popular", "--k", "2", "--n-images", "6",
        "--questions-out", &p("questions.jsonl"), "--predictions-out", &p("predictions.jsonl"), "--out", &p("pope.json"),
    ])?;
    ["model.tvlm", "directions.json", "generation.json", "questions.jsonl", "predictions.jsonl", "pope.json"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map(|b| (f.to_string(), b)).map_err(|e| e.to_string()))
        .collect()
}

fn determinism() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (x, y) = (pipeline(a.path())?, pipeline(b.path())?);
    for ((name, bx), (_, by)) in x.iter().zip(&y) {
        ensure(bx == by, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical", x.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("PCA oracle equivalence", pca_oracle),
        ("planted-direction recovery", planted_recovery_check),
        ("SCG oracle closed forms", scg_closed_forms),
        ("null-intervention identity", null_identity),
        ("final-layer linearity", final_layer_linearity),
        ("norm bound", norm_bound),
        ("metrics", metrics_check),
        ("sampler correctness", sampler_check),
        ("default-parameter fidelity", default_fidelity),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
