use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use csgaze_core::context::ContextCache;
use csgaze_core::data::manifest::resolve_image;
use csgaze_core::data::records::{parse_person_boxes, parse_person_points, parse_predictions, write_pair_labels, write_predictions};
use csgaze_core::data::{load_manifest, DyadLabel, DyadSample, GazeClass, Manifest, ManifestSchema, Raster};
use csgaze_core::eval::{
    ablation_matrix, ablation_table, ap_over_runs, attention_report, class_subset_eval, predict, subset_preset,
    subsampled_ap, AblationRow, MetricsReport, Taxonomy,
};
use csgaze_core::experiment::{build_toy_data, toy_classify, toy_pretrain};
use csgaze_core::model::{load_checkpoint, save_checkpoint, CsGaze, PhaseTag, PreparedDyad, PreparedGaze};
use csgaze_core::synth::{derive_pair_labels, export_dataset, SyntheticDataset};
use csgaze_core::train::{pretrain_phase1, prepare_phase2, train_phase2};

use crate::config::{Mode, RunConfig};
use crate::manifest::RunManifest;

pub fn prepare_out(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .with_context(|| format!("reading {}", out.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            bail!("output directory {} is not empty (pass --force to reuse it)", out.display());
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn class_names(n: usize, mode: Mode) -> Vec<String> {
    match (mode, n) {
        (Mode::Binary, 2) => vec![DyadLabel::NOT_LAEO_TAG.to_string(), DyadLabel::LAEO_TAG.to_string()],
        (_, 5) => Taxonomy::GazePattern.class_names(),
        (_, 3) => Taxonomy::VsGaze.class_names(),
        _ => (0..n).map(|i| format!("class{i}")).collect(),
    }
}

/// Label index of a dyad under `mode`. Binary mode reads five-class labels
/// as LAEO iff `Mutual`.
fn label_index(label: Option<DyadLabel>, mode: Mode) -> Result<Option<usize>> {
    Ok(match (label, mode) {
        (None, _) => None,
        (Some(DyadLabel::Gaze(c)), Mode::Multiclass) => Some(c.index()),
        (Some(DyadLabel::Gaze(c)), Mode::Binary) => Some(usize::from(c == GazeClass::Mutual)),
        (Some(DyadLabel::Laeo(f)), Mode::Binary) => Some(usize::from(f)),
        (Some(DyadLabel::Laeo(_)), Mode::Multiclass) => bail!("LAEO labels need --mode binary"),
    })
}

fn load_dyads(cfg: &RunConfig, manifest: &Path, contexts: Option<&Path>, run: &mut RunManifest) -> Result<Vec<PreparedDyad>> {
    run.input(manifest)?;
    let Manifest::Dyad(samples) = load_manifest(manifest, ManifestSchema::Dyad)? else {
        unreachable!("dyad schema")
    };
    if samples.is_empty() {
        bail!("{} has no samples", manifest.display());
    }
    let cache = match contexts {
        Some(p) => {
            run.input(p)?;
            Some(ContextCache::open(p)?)
        }
        None => None,
    };
    let texts: Vec<String> = samples
        .iter()
        .map(|s| {
            s.context
                .clone()
                .or_else(|| cache.as_ref().and_then(|c| c.get(&s.sample_id)).map(|r| r.text))
                .ok_or_else(|| anyhow!("no context text for {} (pass --contexts)", s.sample_id))
        })
        .collect::<Result<_>>()?;
    samples
        .par_iter()
        .zip(texts.par_iter())
        .map(|(s, text): (&DyadSample, &String)| {
            let path = resolve_image(manifest, &s.image);
            let image = Raster::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let mut d = PreparedDyad::new(&image, s, text, &cfg.model)?;
            d.label = label_index(s.label, cfg.mode)?;
            Ok(d)
        })
        .collect()
}

fn load_model(path: &Path, run: &mut RunManifest) -> Result<CsGaze> {
    run.input(path)?;
    let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    if ck.phase != PhaseTag::ClassifyComplete {
        log::warn!("{} is a {:?} checkpoint", path.display(), ck.phase);
    }
    Ok(ck.model)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn synth_gen(cfg: RunConfig, count: Option<usize>, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("synth-gen", &cfg, cfg.seed)?;
    let n = count.unwrap_or(cfg.synth.count);
    let ds = SyntheticDataset::generate(n, cfg.seed, &cfg.synth.scene, "s")?;
    let summary = export_dataset(out, &ds, cfg.synth.render_size, cfg.synth.shared_attention)?;
    for p in [&summary.dyad_manifest, &summary.gazefollow_manifest, &summary.contexts, &summary.pair_labels] {
        run.output(p);
    }
    run.output(&out.join("images"));
    run.write(&out.join("summary.json"), json(&summary)?)?;
    println!("{} scenes", summary.count);
    for (class, k) in &summary.histogram {
        println!("{class:<8}{k}");
    }
    run.finish(out)?;
    Ok(())
}

pub fn pretrain(cfg: RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("pretrain", &cfg, cfg.seed)?;
    run.input(manifest)?;
    let Manifest::GazeFollow(samples) = load_manifest(manifest, ManifestSchema::GazeFollow)? else {
        unreachable!("gaze-follow schema")
    };
    if samples.len() < 2 {
        bail!("{} needs at least two samples", manifest.display());
    }
    let data: Vec<PreparedGaze> = samples
        .par_iter()
        .map(|s| {
            let path = resolve_image(manifest, &s.image);
            let image = Raster::load(&path).with_context(|| format!("loading {}", path.display()))?;
            Ok(PreparedGaze::new(&image, s)?)
        })
        .collect::<Result<_>>()?;
    log::info!(
        "pretraining on {} samples: {} epochs, lr {}, batch {}",
        data.len(),
        cfg.pretrain.max_epochs,
        cfg.pretrain.learning_rate,
        cfg.pretrain.batch_size
    );
    let mut model = CsGaze::new(cfg.model.clone(), cfg.seed)?;
    let log = pretrain_phase1(&mut model, &data, &cfg.pretrain)?;
    let ckpt = out.join("pretrain.ckpt");
    save_checkpoint(&model, PhaseTag::PretrainComplete, log.steps, Some(&log), &ckpt)?;
    run.output(&ckpt);
    run.write(&out.join("pretrain_log.jsonl"), log.to_jsonl())?;
    if let Some(last) = log.epochs.last() {
        println!("val loss {:.6}, argmax error {:.2} cells", last.val_loss, last.val_metric);
    }
    run.finish(out)?;
    Ok(())
}

pub fn train(cfg: RunConfig, manifest: &Path, contexts: Option<&Path>, checkpoint: Option<&Path>, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("train", &cfg, cfg.seed)?;
    let pretrained = match checkpoint {
        Some(p) => {
            run.input(p)?;
            Some(load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?)
        }
        None => None,
    };
    let mut model = prepare_phase2(pretrained.as_ref(), cfg.model.clone(), cfg.seed, &cfg.classify)?;
    let data = load_dyads(&cfg, manifest, contexts, &mut run)?;
    let log = train_phase2(&mut model, &data, &cfg.classify)?;
    let ckpt = out.join("classify.ckpt");
    save_checkpoint(&model, PhaseTag::ClassifyComplete, log.steps, Some(&log), &ckpt)?;
    run.output(&ckpt);
    run.write(&out.join("train_log.jsonl"), log.to_jsonl())?;
    println!(
        "{} epochs ({:?}), best epoch {}",
        log.epochs.len(),
        log.stop_reason,
        log.best_epoch
    );
    run.finish(out)?;
    Ok(())
}

pub enum EvalInput {
    Model {
        checkpoint: PathBuf,
        manifest: PathBuf,
        contexts: Option<PathBuf>,
    },
    Predictions(PathBuf),
}

impl EvalInput {
    pub fn new(
        checkpoint: Option<PathBuf>,
        manifest: Option<PathBuf>,
        contexts: Option<PathBuf>,
        predictions: Option<PathBuf>,
    ) -> Result<Self> {
        match (checkpoint, manifest, predictions) {
            (_, _, Some(p)) => Ok(EvalInput::Predictions(p)),
            (Some(checkpoint), Some(manifest), None) => Ok(EvalInput::Model {
                checkpoint,
                manifest,
                contexts,
            }),
            _ => bail!("eval needs --predictions, or both --checkpoint and --manifest"),
        }
    }
}

fn resolve_subset(name: &str, names: &[String]) -> Result<Vec<usize>> {
    if let Some(p) = subset_preset(name) {
        if p.taxonomy.class_names() == names {
            return Ok(p.classes.to_vec());
        }
    }
    name.split('+')
        .map(|part| {
            names
                .iter()
                .position(|n| n.eq_ignore_ascii_case(part.trim()))
                .ok_or_else(|| anyhow!("unknown class {part:?} in subset {name:?}"))
        })
        .collect()
}

pub fn eval(cfg: RunConfig, input: EvalInput, subsets: &[String], out: &Path) -> Result<()> {
    let mut run = RunManifest::start("eval", &cfg, cfg.seed)?;
    let (probs, labels) = match input {
        EvalInput::Model {
            checkpoint,
            manifest,
            contexts,
        } => {
            let model = load_model(&checkpoint, &mut run)?;
            let data = load_dyads(&cfg, &manifest, contexts.as_deref(), &mut run)?;
            let results = predict(&model, &data, cfg.classify.forward_options())?;
            let rows: Vec<_> = results.iter().zip(&data).map(|((r, _), d)| (r.clone(), d.label)).collect();
            run.write(&out.join("predictions.tsv"), write_predictions(&rows))?;
            rows.into_iter()
                .filter_map(|(r, l)| l.map(|l| (r.probabilities, l)))
                .unzip::<_, _, Vec<_>, Vec<_>>()
        }
        EvalInput::Predictions(path) => {
            run.input(&path)?;
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            parse_predictions(&text)?
                .into_iter()
                .filter_map(|(_, l, p)| l.map(|l| (p, l)))
                .unzip()
        }
    };
    let Some(width) = probs.first().map(Vec::len) else {
        bail!("no labelled samples to evaluate");
    };
    let names = class_names(width, cfg.mode);
    let mut report = MetricsReport::from_probabilities(&probs, &labels, &names)?;
    if width == 2 && labels.contains(&1) {
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        let frac = cfg.eval.ap_subsample;
        report.ap_runs = Some(ap_over_runs(cfg.eval.ap_runs, |seed| {
            subsampled_ap(&scores, &pos, frac, cfg.seed.wrapping_add(seed))
        })?);
    }
    let mut table = report.to_table();
    for name in subsets {
        let classes = resolve_subset(name, &names)?;
        let sub = class_subset_eval(&probs, &labels, &classes, &names)?;
        let file = format!("subset-{}.json", name.replace('+', "_").to_lowercase());
        run.write(&out.join(file), sub.to_json())?;
        table.push_str(&format!("\nsubset {name}\n{}", sub.to_table()));
    }
    run.write(&out.join("metrics.json"), report.to_json())?;
    run.write(&out.join("metrics.txt"), &table)?;
    print!("{table}");
    run.finish(out)?;
    Ok(())
}

pub fn explain(cfg: RunConfig, checkpoint: &Path, manifest: &Path, contexts: Option<&Path>, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("explain", &cfg, cfg.seed)?;
    let model = load_model(checkpoint, &mut run)?;
    let data = load_dyads(&cfg, manifest, contexts, &mut run)?;
    let results = predict(&model, &data, cfg.classify.forward_options())?;
    let traces: Vec<_> = results
        .into_iter()
        .zip(&data)
        .filter_map(|((_, t), d)| d.label.map(|l| (t, l)))
        .collect();
    let summary = attention_report(&traces, &class_names(model.config().num_classes, cfg.mode));
    let mut text = format!("{:<8} {:>8} {:>8} {:>6}\n", "class", "S_fused", "F_merged", "n");
    for r in &summary.rows {
        text.push_str(&format!("{:<8} {:>8.3} {:>8.3} {:>6}\n", r.class, r.s_fused, r.f_merged, r.count));
    }
    if !summary.omitted.is_empty() {
        text.push_str(&format!("no samples: {}\n", summary.omitted.join(", ")));
    }
    run.write(&out.join("attention.json"), json(&summary)?)?;
    run.write(&out.join("attention.txt"), &text)?;
    print!("{text}");
    run.finish(out)?;
    Ok(())
}

#[derive(Serialize)]
struct SeedAblation {
    seed: u64,
    rows: Vec<AblationRow>,
}

#[derive(Serialize)]
struct MeanRow {
    modalities: String,
    macro_f1: f64,
    accuracy: f64,
}

pub fn ablate(cfg: RunConfig, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("ablate", &cfg, cfg.seed)?;
    let toy = &cfg.ablate.toy;
    if cfg.ablate.seeds.is_empty() {
        bail!("ablate.seeds is empty");
    }
    let data = build_toy_data(toy)?;
    let mut per_seed = Vec::new();
    for &seed in &cfg.ablate.seeds {
        let pre = toy_pretrain(&data, toy, seed)?;
        let rows = ablation_matrix(|m| Ok(toy_classify(&data, &pre, toy, seed, m)?.1.report))?;
        log::info!("seed {seed}\n{}", ablation_table(&rows));
        per_seed.push(SeedAblation { seed, rows });
    }
    let k = per_seed.len() as f64;
    let mean: Vec<MeanRow> = (0..per_seed[0].rows.len())
        .map(|i| MeanRow {
            modalities: per_seed[0].rows[i].modalities.clone(),
            macro_f1: per_seed.iter().map(|s| s.rows[i].macro_f1).sum::<f64>() / k,
            accuracy: per_seed.iter().map(|s| s.rows[i].accuracy).sum::<f64>() / k,
        })
        .collect();
    let mut table = format!("{:<8} {:>8} {:>8}\n", "input", "F1", "acc");
    for r in &mean {
        table.push_str(&format!("{:<8} {:>8.3} {:>8.3}\n", r.modalities, r.macro_f1, r.accuracy));
    }
    #[derive(Serialize)]
    struct Out<'a> {
        seeds: &'a [SeedAblation],
        mean: &'a [MeanRow],
    }
    run.write(&out.join("ablation.json"), json(&Out { seeds: &per_seed, mean: &mean })?)?;
    run.write(&out.join("ablation.txt"), &table)?;
    print!("{table}");
    run.finish(out)?;
    Ok(())
}

pub fn label_pairs(cfg: RunConfig, points: &Path, boxes: &Path, regions: Option<&Path>, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("label-pairs", &cfg, cfg.seed)?;
    let read = |p: &Path, run: &mut RunManifest| -> Result<String> {
        run.input(p)?;
        std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
    };
    let pts = parse_person_points(&read(points, &mut run)?)?;
    let bxs = parse_person_boxes(&read(boxes, &mut run)?)?;
    let regs = match regions {
        Some(p) => parse_person_boxes(&read(p, &mut run)?)?,
        None => BTreeMap::new(),
    };
    let mut rows = Vec::with_capacity(pts.len());
    for (id, people) in &pts {
        let head = |who: usize| {
            bxs.get(id)
                .and_then(|b| b.get(&who))
                .copied()
                .ok_or_else(|| anyhow!("{id}: no head box for person {who}"))
        };
        let point = |who: usize| people.get(&who).copied().ok_or_else(|| anyhow!("{id}: no gaze point for person {who}"));
        let third: Vec<_> = bxs
            .get(id)
            .map(|b| b.range(2..).map(|(_, v)| *v).collect())
            .unwrap_or_default();
        let objects: Vec<_> = regs.get(id).map(|r| r.values().copied().collect()).unwrap_or_default();
        let label = derive_pair_labels(
            &[point(0)?, point(1)?],
            &[head(0)?, head(1)?],
            &third,
            &objects,
            cfg.synth.shared_attention,
        )?;
        rows.push((id.clone(), label));
    }
    let text = write_pair_labels(&rows);
    run.write(&out.join("pair_labels.tsv"), &text)?;
    print!("{text}");
    run.finish(out)?;
    Ok(())
}

pub fn cache_export(cfg: RunConfig, cache: &Path, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("context-cache export", &cfg, cfg.seed)?;
    run.input(cache)?;
    let target = out.join("contexts.tsv");
    let n = ContextCache::open(cache)?.export(&target)?;
    run.output(&target);
    println!("exported {n} records");
    run.finish(out)?;
    Ok(())
}

pub fn cache_import(cfg: RunConfig, cache: &Path, input: &Path, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("context-cache import", &cfg, cfg.seed)?;
    run.input(input)?;
    let n = ContextCache::open(cache)?.import(input)?;
    run.output(cache);
    println!("imported {n} records");
    run.finish(out)?;
    Ok(())
}
