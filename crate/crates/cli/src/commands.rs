// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::time::Duration;

use ndesteer::corpus::{object_list, synthetic_annotations, synthetic_caption_pairs, synthetic_images};
use ndesteer::eval::{
    aggregate_mmhal, align_predictions, build_pope_questions, read_jsonl, score_pope, write_jsonl, AnnotationRecord,
    CorpusStats, Judge, JudgeQuery, MmhalCategory, MmhalRecord, PopeQuestion, Prediction, StubJudge,
};
use ndesteer::nde::EstimationSeeds;
use ndesteer::perturb::load_caption_pairs;
use ndesteer::scg::{oracle_nde_scalar, planted_recovery};
use ndesteer::tensor::{load_tensor, TENSOR_MAGIC};
use ndesteer::vlm::{load_image, VisionInput, CHECKPOINT_MAGIC};
use ndesteer::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{require, RunConfig};
use crate::{CliError, InitArgs, InspectArgs, ScgArgs};

type CliResult<T> = std::result::Result<T, CliError>;

/// Pretty JSON plus newline, to `out` or standard output.
pub fn emit<T: Serialize + ?Sized>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(cfg: &RunConfig) -> CliResult<ToyVlm> {
    let path = require(&cfg.model, "--model")?;
    Ok(ToyVlm::load(&path)?)
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    XorShift64Star::derived(seed, stream).next_u64()
}

pub fn init(args: &InitArgs, cfg: &RunConfig) -> CliResult<()> {
    let out = require(&cfg.out, "--out")?;
    let config = ToyVlmConfig {
        d_model: args.d_model,
        n_layers: args.n_layers,
        n_heads: args.n_heads,
        attention_mode: args.attention_mode.into(),
        seed: cfg.seed(),
        ..Default::default()
    };
    let model = ToyVlm::init_seeded(config)?;
    model.save(&out)?;
    emit(&json!({ "checkpoint": out, "digest": model.digest() }), None)
}

pub fn estimate(captions: Option<&Path>, cfg: &RunConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let out = require(&cfg.out, "--out")?;
    let n = require(&cfg.n_samples, "--n-samples")?;
    let seed = cfg.seed();
    let seeds = EstimationSeeds {
        images: stream_seed(seed, 1),
        masks: stream_seed(seed, 2),
        captions: stream_seed(seed, 3),
    };
    let masks = MaskSpec { m: require(&cfg.masks, "--masks")?, seed: seeds.masks, ..Default::default() };
    let opts = EstimateOptions { pca_dim: require(&cfg.pca_dim, "--pca-dim")?, ..Default::default() };
    let mcfg = model.config().clone();

    let pairs = match captions {
        Some(path) => {
            let mut load = load_caption_pairs(path)?;
            load.pairs.truncate(n);
            load.pairs
        }
        None => {
            let ann = synthetic_annotations(n, &object_list(), 2, 4, seeds.captions)?;
            synthetic_caption_pairs(&ann, &HallucinationLexicon::default(), seeds.captions)?
        }
    };
    let originals: Vec<String> = pairs.iter().map(|p| p.original.clone()).collect();
    let images = synthetic_images(&mcfg, n, seeds.images)?;

    let mut ds = DirectionSet::new(DirectionMeta {
        n_samples: n,
        masks: masks.m,
        pca_dim: opts.pca_dim,
        seeds,
        attention_mode: mcfg.attention_mode,
        model_digest: model.digest(),
    });
    ds.insert_estimate(&estimate_nde_v(&model, &images, &masks, &opts)?);
    ds.insert_estimate(&estimate_nde_t(&model, &pairs, &opts)?);
    match estimate_nde_vt(&model, &originals, &opts) {
        Ok(est) => ds.insert_estimate(&est),
        Err(Error::DegenerateVariance { .. }) if mcfg.attention_mode == AttentionMode::FullyCausal => {
            log::warn!("cross-modal differences vanish under fully causal attention; no vt directions written");
        }
        Err(e) => return Err(e.into()),
    }
    ds.save(&out)?;
    let families: Vec<&str> = Family::ALL.iter().filter(|&&f| ds.has_family(f)).map(|f| f.key()).collect();
    emit(
        &json!({
            "directions": out,
            "families": families,
            "layers": ds.layers.keys().collect::<Vec<_>>(),
            "meta": ds.meta,
        }),
        None,
    )
}

fn load_directions(cfg: &RunConfig, model: &ToyVlm) -> CliResult<Option<DirectionSet>> {
    let Some(path) = &cfg.directions else { return Ok(None) };
    let iv = cfg.intervention();
    Ok(Some(DirectionSet::load(path, Some(&model.digest()), iv.strict_digest)?))
}

fn vision_for(model: &ToyVlm, image: Option<&Path>, seed: u64) -> CliResult<Tensor> {
    match image {
        Some(path) => {
            let (img, clamped) = load_image(path)?;
            if clamped > 0 {
                log::warn!("{}: clamped {clamped} pixels into [0, 1]", path.display());
            }
            Ok(img)
        }
        None => Ok(synthetic_images(model.config(), 1, seed)?.remove(0)),
    }
}

fn tokens(model: &ToyVlm, text: &str) -> CliResult<Vec<u32>> {
    let ids = model.tokenizer().tokenize(text);
    if ids.is_empty() {
        return Err(CliError::Usage("prompt has no tokens".into()));
    }
    Ok(ids)
}

pub fn generate(prompt: &str, image: Option<&Path>, cfg: &RunConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let ds = load_directions(cfg, &model)?;
    let iv_cfg = cfg.intervention();
    let iv = ds.as_ref().map(|d| Intervention::checked(d, &iv_cfg, &model)).transpose()?;
    let img = vision_for(&model, image, cfg.seed())?;
    let prompt_ids = tokens(&model, prompt)?;
    let max_new = require(&cfg.max_new, "--max-new")?;
    let out = model.generate_greedy(VisionInput::Image(&img), &prompt_ids, max_new, iv.as_ref())?;
    emit(
        &json!({
            "prompt": prompt,
            "tokens": out,
            "text": model.tokenizer().detokenize(&out),
        }),
        cfg.out.as_deref(),
    )
}

pub struct PopeInputs<'a> {
    pub annotations: Option<&'a Path>,
    pub predictions: Option<&'a Path>,
    pub questions_out: Option<&'a Path>,
    pub predictions_out: Option<&'a Path>,
}

pub fn eval_pope(inputs: &PopeInputs<'_>, cfg: &RunConfig) -> CliResult<()> {
    let seed = cfg.seed();
    let annotations: Vec<AnnotationRecord> = match inputs.annotations {
        Some(path) => read_jsonl(path)?,
        None => synthetic_annotations(require(&cfg.n_images, "--n-images")?, &object_list(), 2, 4, stream_seed(seed, 4))?,
    };
    let vocab = ndesteer::vlm::default_vocab();
    for record in &annotations {
        record.validate(&vocab)?;
    }
    let stats = CorpusStats::from_annotations(&annotations).with_objects(object_list());
    let strategy = require(&cfg.strategy, "--strategy")?;
    let questions = build_pope_questions(&annotations, &stats, strategy, require(&cfg.k, "--k")?, seed)?;
    if let Some(path) = inputs.questions_out {
        write_jsonl(path, &questions)?;
    }

    let answers = match inputs.predictions {
        Some(path) => {
            let preds: Vec<Prediction> = read_jsonl(path)?;
            align_predictions(&preds, &questions)?
        }
        None => answer_questions(&annotations, &questions, cfg)?,
    };
    if let Some(path) = inputs.predictions_out {
        let preds: Vec<Prediction> = questions
            .iter()
            .zip(&answers)
            .map(|(q, a)| Prediction { question_id: q.question_id.clone(), answer: a.clone() })
            .collect();
        write_jsonl(path, &preds)?;
    }
    let metrics = score_pope(&answers, &questions)?;
    emit(
        &json!({
            "strategy": strategy,
            "n_images": annotations.len(),
            "n_questions": questions.len(),
            "metrics": metrics,
        }),
        cfg.out.as_deref(),
    )
}

/// Greedy answers from the model; image `i` of the annotation list is the
/// `i`-th synthetic image of the run seed.
fn answer_questions(annotations: &[AnnotationRecord], questions: &[PopeQuestion], cfg: &RunConfig) -> CliResult<Vec<String>> {
    let model = load_model(cfg)?;
    let ds = load_directions(cfg, &model)?;
    let iv_cfg = cfg.intervention();
    let iv = ds.as_ref().map(|d| Intervention::checked(d, &iv_cfg, &model)).transpose()?;
    let images = synthetic_images(model.config(), annotations.len(), stream_seed(cfg.seed(), 5))?;
    let max_new = require(&cfg.max_new, "--max-new")?;
    questions
        .iter()
        .map(|q| {
            let idx = annotations.iter().position(|a| a.image_id == q.image_id).expect("question from annotations");
            let ids = model.generate_greedy(VisionInput::Image(&images[idx]), &tokens(&model, &q.prompt())?, max_new, iv.as_ref())?;
            Ok(model.tokenizer().detokenize(&ids))
        })
        .collect()
}

#[derive(Deserialize)]
struct MmhalInput {
    question_id: String,
    category: MmhalCategory,
    #[serde(default)]
    question: String,
    #[serde(default)]
    response: String,
    #[serde(default)]
    reference: String,
    score: Option<f64>,
}

pub fn eval_mmhal(records: &Path, cfg: &RunConfig) -> CliResult<()> {
    let inputs: Vec<MmhalInput> = read_jsonl(records)?;
    let judge = match (&cfg.judge_endpoint, cfg.stub_judge.unwrap_or(false)) {
        (Some(_), true) => return Err(CliError::Usage("--judge-endpoint and --stub-judge are exclusive".into())),
        (Some(url), false) => Some(Judge::Remote {
            endpoint: url.clone(),
            timeout: Duration::from_millis(require(&cfg.timeout_ms, "--timeout-ms")?),
        }),
        (None, true) => Some(Judge::Stub(StubJudge::default())),
        (None, false) => None,
    };
    let pending: Vec<JudgeQuery> = inputs
        .iter()
        .filter(|r| r.score.is_none())
        .map(|r| JudgeQuery {
            question: r.question.clone(),
            response: r.response.clone(),
            reference: r.reference.clone(),
            category: r.category.name().to_string(),
        })
        .collect();
    let mut judged = match (&judge, pending.is_empty()) {
        (_, true) => Vec::new(),
        (Some(j), false) => j.score_all(&pending)?,
        (None, false) => {
            return Err(CliError::Usage("unscored records need --judge-endpoint or --stub-judge".into()));
        }
    }
    .into_iter();
    let scored: Vec<MmhalRecord> = inputs
        .iter()
        .map(|r| MmhalRecord {
            question_id: r.question_id.clone(),
            category: r.category,
            score: r.score.unwrap_or_else(|| judged.next().expect("one score per pending record")),
        })
        .collect();
    let summary = aggregate_mmhal(&scored, require(&cfg.threshold, "--threshold")?)?;
    emit(&json!({ "summary": summary, "records": scored }), cfg.out.as_deref())
}

pub fn simulate_scg(args: &ScgArgs, cfg: &RunConfig) -> CliResult<()> {
    let spec: ScgSpec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?
        }
        None => ScgSpec::default(),
    };
    let (t, v) = (args.t, args.v);
    let contrasts = Contrasts {
        nde_v: oracle_nde_scalar(&spec, NdeKind::V, t, v, args.v_star, None)?,
        nde_t: oracle_nde_scalar(&spec, NdeKind::T, t, v, args.t_star, None)?,
        nde_vt: oracle_nde_scalar(&spec, NdeKind::VT, t, v, args.v_star, Some(args.v_null))?,
    };
    let planted_recovery = if args.skip_planted {
        None
    } else {
        let model_cfg = ToyVlmConfig { seed: cfg.seed(), ..Default::default() };
        let masks = MaskSpec { m: require(&cfg.masks, "--masks")?, seed: stream_seed(cfg.seed(), 2), ..Default::default() };
        let n = require(&cfg.n_samples, "--n-samples")?;
        Some(
            Family::ALL
                .iter()
                .map(|&f| planted_recovery(&model_cfg, f, n, args.noise_sigma, &masks, cfg.seed()))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let report = ScgReport {
        spec,
        inputs: json!({ "t": t, "v": v, "t_star": args.t_star, "v_star": args.v_star, "v_null": args.v_null }),
        contrasts,
        planted_recovery,
    };
    emit(&report, cfg.out.as_deref())
}

#[derive(Serialize)]
struct Contrasts {
    nde_v: f64,
    nde_t: f64,
    nde_vt: f64,
}

#[derive(Serialize)]
struct ScgReport {
    spec: ScgSpec,
    inputs: Value,
    contrasts: Contrasts,
    #[serde(skip_serializing_if = "Option::is_none")]
    planted_recovery: Option<Vec<ndesteer::scg::RecoveryReport>>,
}

pub fn inspect(args: &InspectArgs) -> CliResult<()> {
    let path: &PathBuf = &args.path;
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let value = if bytes.starts_with(CHECKPOINT_MAGIC) {
        let model = ToyVlm::from_bytes(&bytes)?;
        let sections: Vec<Value> = model
            .weights()
            .sections()
            .into_iter()
            .map(|(name, t)| json!({ "name": name, "dims": t.dims() }))
            .collect();
        json!({ "kind": "checkpoint", "config": model.config(), "digest": model.digest(), "sections": sections })
    } else if bytes.starts_with(TENSOR_MAGIC) {
        let t = load_tensor(path)?;
        let data = t.data();
        let mean = data.iter().map(|&x| x as f64).sum::<f64>() / data.len() as f64;
        let min = data.iter().cloned().fold(f32::INFINITY, f32::min);
        let max = data.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        json!({ "kind": "tensor", "dims": t.dims(), "min": min, "max": max, "mean": mean })
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{}: not a known artifact", path.display())))?;
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            if v.get("meta").is_some() && v.get("layers").is_some() {
                DirectionSet::from_json_str(&text)?;
                json!({ "kind": "directions", "value": v })
            } else {
                json!({ "kind": "json", "value": v })
            }
        } else {
            let rows: Vec<Value> = read_jsonl(path)?;
            json!({ "kind": "jsonl", "records": rows.len(), "first": rows.first() })
        }
    };
    emit(&value, None)
}
