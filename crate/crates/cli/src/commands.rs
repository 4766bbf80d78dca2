use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use lqsynth_core::degrade::{apply, sample_pipeline, DegradationRanges, DegradationSample};
use lqsynth_core::denoiser::{DenoiserModel, UNetConfig};
use lqsynth_core::diffusion::{DiffusionConfig, NoiseSchedule, TrainConfig};
use lqsynth_core::io::{
    load_image, make_toy_did, procedural_set, save_image, train_on_images, write_json, Checkpoint,
    DatasetManifest, HeavyProfile, SeverityProfile, TrainRun,
};
use lqsynth_core::metrics::{
    extract_features, fit_stats, frechet_distance, sweep_curves, write_curves_csv, ExtractorKind,
    FeatureExtractor, SweepConfig,
};
use lqsynth_core::synth::{batch_synthesize, replay, HqItem, PairManifest, PairStatus, SynthesisConfig};
use lqsynth_core::tensor::{AdamConfig, Rng};
use lqsynth_core::Image;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::config::Expanded;
use crate::{record, CliError, UserContext};

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(command: Command, ex: &Expanded) -> CliResult {
    match command {
        Command::MakeToyDid(a) => make_toy(&a, ex),
        Command::Train(a) => train(&a, ex),
        Command::Degrade(a) => degrade(&a, ex),
        Command::Synth(a) => synth(&a, ex),
        Command::Sweep(a) => sweep(&a, ex),
        Command::Eval(a) => eval(&a, ex),
    }
}

fn user_err(msg: impl Into<String>) -> CliError {
    CliError::User(anyhow!(msg.into()))
}

/// PNG files of `dir`, sorted by name.
fn list_pngs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .user(format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(user_err(format!("no PNG files in {}", dir.display())));
    }
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_dir(dir: &Path) -> CliResult<Vec<(String, Image)>> {
    list_pngs(dir)?
        .par_iter()
        .map(|p| Ok((file_name(p), load_image(p).user("loading image")?)))
        .collect()
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn load_checkpoint(path: &Path) -> CliResult<(DenoiserModel, NoiseSchedule, DiffusionConfig, String)> {
    let (ck, sha) = Checkpoint::load(path).user(format!("loading checkpoint {}", path.display()))?;
    let model = ck.model().user("checkpoint weights")?;
    let diffusion = ck.diffusion();
    let sched = diffusion.schedule().user("checkpoint schedule")?;
    Ok((model, sched, diffusion, sha))
}

fn build_extractor<'a>(
    f: &FeatureArgs,
    model: Option<&'a DenoiserModel>,
) -> CliResult<Box<dyn FeatureExtractor + 'a>> {
    let kind = match f.extractor {
        Extractor::Patch => ExtractorKind::PatchStats {
            patch_size: f.patch_size,
            strides: f.strides.clone(),
        },
        Extractor::Denoiser => ExtractorKind::DenoiserFeatures {
            level: f.feature_level,
            t: f.feature_t,
        },
    };
    kind.build(model).user("feature extractor")
}

fn corpus_images(manifest: &Path) -> CliResult<Vec<Image>> {
    let m = DatasetManifest::load(manifest).user(format!("reading {}", manifest.display()))?;
    m.load_images(None).user("loading corpus")
}

fn make_toy(a: &MakeToyDidArgs, ex: &Expanded) -> CliResult {
    let clean: Vec<Image> = match &a.clean {
        Some(dir) => load_dir(dir)?.into_iter().map(|(_, img)| img).collect(),
        None => {
            if a.count == 0 || a.size == 0 {
                return Err(user_err("--count and --size must be positive"));
            }
            procedural_set(a.count, a.size, a.size, a.seed)
        }
    };
    let profile = match a.profile {
        Severity::None => SeverityProfile::None,
        Severity::Heavy => SeverityProfile::Heavy(HeavyProfile::default()),
    };
    let manifest = make_toy_did(&clean, &a.out, &profile, a.seed).user("building corpus")?;
    eprintln!("wrote {} images to {}", manifest.entries.len(), a.out.display());
    record::write(&a.out, "make-toy-did", ex, a, json!({ "images": manifest.entries.len() }))
        .context("run record")?;
    Ok(())
}

fn train(a: &TrainArgs, ex: &Expanded) -> CliResult {
    let manifest = DatasetManifest::load(&a.manifest).user(format!("reading {}", a.manifest.display()))?;
    let images = manifest.load_images(Some("train")).user("loading training images")?;
    if images.is_empty() {
        return Err(user_err("manifest has no train entries"));
    }
    let unet = UNetConfig {
        in_channels: 3,
        base_channels: a.base_channels,
        channel_mults: a.channel_mults.clone(),
        res_blocks_per_level: a.res_blocks,
        time_embed_dim: a.time_dim,
        norm_groups: a.groups,
    };
    unet.validate().user("model shape")?;
    let multiple = unet.spatial_multiple();
    if a.patch == 0 || !a.patch.is_multiple_of(multiple) {
        return Err(user_err(format!("--patch {} must be a multiple of {multiple}", a.patch)));
    }
    if let Some(img) = images.iter().find(|i| i.width() < a.patch || i.height() < a.patch) {
        return Err(user_err(format!(
            "image {}x{} is smaller than --patch {}",
            img.width(),
            img.height(),
            a.patch
        )));
    }
    if !(0.0..1.0).contains(&a.ema) || a.lr.is_nan() || a.lr <= 0.0 || a.batch == 0 {
        return Err(user_err("need 0 <= --ema < 1, --lr > 0 and --batch > 0"));
    }
    let diffusion = DiffusionConfig {
        t_total: a.t_total,
        ..DiffusionConfig::default()
    };
    let sched = diffusion.schedule().user("schedule")?;
    // Streams 0 and 1 of the seed feed the batches and the noise.
    let mut model = DenoiserModel::init(unet, &mut Rng::derive(a.seed, &[2])).user("model shape")?;
    let run = TrainRun {
        config: TrainConfig {
            batch: a.batch,
            adam: AdamConfig {
                lr: a.lr,
                ..AdamConfig::default()
            },
            ema_decay: a.ema,
        },
        iters: a.iters,
        patch: a.patch,
        seed: a.seed,
    };
    let started = std::time::Instant::now();
    let mut window = 0.0;
    let losses = train_on_images(&mut model, &images, &sched, &run, |step, loss| {
        window += loss;
        if a.log_every > 0 && step % a.log_every == 0 {
            eprintln!(
                "step {step}/{} loss {:.4} ({:.0?})",
                a.iters,
                window / a.log_every as f64,
                started.elapsed()
            );
            window = 0.0;
        }
    })
    .context("training")?;
    let sha = Checkpoint::new(&model, &diffusion, a.iters)
        .save(&a.out)
        .context("writing checkpoint")?;
    let log_path = a.loss_log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    let mut log = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        log.push_str(&format!("{},{l}\n", i + 1));
    }
    std::fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;
    eprintln!("checkpoint {} (sha256 {sha})", a.out.display());
    record::write(
        &parent_dir(&a.out),
        "train",
        ex,
        a,
        json!({
            "checkpoint_sha256": sha,
            "parameters": model.param_count(),
            "final_loss": losses.last(),
            "loss_log": log_path,
        }),
    )
    .context("run record")?;
    Ok(())
}

#[derive(Serialize)]
struct DegradeRecord {
    name: String,
    sample: DegradationSample,
}

fn degrade(a: &DegradeArgs, ex: &Expanded) -> CliResult {
    if a.scale == 0 {
        return Err(user_err("--scale must be positive"));
    }
    let files = list_pngs(&a.input)?;
    let ranges = DegradationRanges::default();
    let records = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let img = load_image(path).user("loading image")?;
            let (w, h) = img.size();
            if w % a.scale != 0 || h % a.scale != 0 {
                return Err(user_err(format!(
                    "{} is {w}x{h}, not divisible by {}",
                    path.display(),
                    a.scale
                )));
            }
            let mut rng = Rng::derive(a.seed, &[i as u64]);
            let target = [w / a.scale, h / a.scale];
            let sample = sample_pipeline(a.kind, &mut rng, &ranges, [w, h], target)
                .context("sampling degradation")?;
            let lq = apply(&img, &sample).context("degrading")?;
            let name = file_name(path);
            save_image(&lq, &a.out.join(&name)).context("writing image")?;
            Ok(DegradeRecord { name, sample })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_json(&a.out.join("degradations.json"), &records).context("writing degradations")?;
    eprintln!("degraded {} images into {}", records.len(), a.out.display());
    record::write(&a.out, "degrade", ex, a, json!({ "images": records.len() })).context("run record")?;
    Ok(())
}

fn synth(a: &SynthArgs, ex: &Expanded) -> CliResult {
    let (model, sched, diffusion, sha) = load_checkpoint(&a.checkpoint)?;
    let files = list_pngs(&a.input)?;
    let lq_dir = a.out.join("lq");
    let manifest = if let Some(path) = &a.replay {
        let text = std::fs::read_to_string(path).user(format!("reading {}", path.display()))?;
        let manifest: PairManifest = serde_json::from_str(&text).user("parsing pair manifest")?;
        if let Some(expected) = &manifest.checkpoint_sha256 {
            if *expected != sha {
                return Err(user_err(format!(
                    "checkpoint sha256 {sha} does not match the manifest's {expected}"
                )));
            }
        }
        let by_name: HashMap<String, &PathBuf> = files.iter().map(|p| (file_name(p), p)).collect();
        manifest
            .pairs
            .par_iter()
            .filter_map(|rec| match &rec.status {
                PairStatus::Accepted { meta } => Some((rec, meta)),
                PairStatus::Rejected { .. } => None,
            })
            .try_for_each(|(rec, meta)| -> CliResult {
                let path = by_name
                    .get(&rec.name)
                    .ok_or_else(|| user_err(format!("{} not found in {}", rec.name, a.input.display())))?;
                let hq = load_image(path).user("loading image")?;
                let lq = replay(&hq, meta, &model, &sched).context("replaying pair")?;
                save_image(&lq, &lq_dir.join(&rec.name)).context("writing image")?;
                Ok(())
            })?;
        manifest
    } else {
        let t_max = a.t_max.unwrap_or(match a.profile {
            StepProfile::Face => diffusion.t_max_face,
            StepProfile::Natural => diffusion.t_max_natural,
        });
        let cfg = SynthesisConfig {
            pipeline: a.kind,
            ranges: DegradationRanges::default(),
            scale: a.scale,
            t_min: a.t_min,
            t_max,
            guard: a.guard,
            psnr_guard_db: a.guard_db,
            max_retries: a.max_retries,
            deterministic_reverse: a.deterministic,
        };
        cfg.validate(&sched).user("synthesis settings")?;
        let items: Vec<HqItem> = files
            .par_iter()
            .map(|p| HqItem {
                name: file_name(p),
                image: load_image(p).map_err(|e| e.to_string()),
            })
            .collect();
        let threads = a
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let (mut manifest, images) =
            batch_synthesize(&items, &model, &sched, &cfg, a.seed, threads).context("synthesis")?;
        manifest.checkpoint_sha256 = Some(sha.clone());
        manifest
            .pairs
            .par_iter()
            .zip(images.par_iter())
            .try_for_each(|(rec, img)| -> CliResult {
                if let Some(img) = img {
                    save_image(img, &lq_dir.join(&rec.name)).context("writing image")?;
                }
                Ok(())
            })?;
        manifest
    };
    write_json(&a.out.join("pairs.json"), &manifest).context("writing pair manifest")?;
    let accepted = manifest.accepted();
    eprintln!("{accepted}/{} pairs accepted", manifest.pairs.len());
    for rec in &manifest.pairs {
        if let PairStatus::Rejected { reason } = &rec.status {
            eprintln!("rejected {}: {reason}", rec.name);
        }
    }
    record::write(
        &a.out,
        "synth",
        ex,
        a,
        json!({ "accepted": accepted, "total": manifest.pairs.len(), "checkpoint_sha256": sha }),
    )
    .context("run record")?;
    Ok(())
}

fn sweep(a: &SweepArgs, ex: &Expanded) -> CliResult {
    let (model, sched, _, sha) = load_checkpoint(&a.checkpoint)?;
    let hq: Vec<Image> = load_dir(&a.hq)?.into_iter().map(|(_, img)| img).collect();
    let corpus = corpus_images(&a.corpus)?;
    let extractor = build_extractor(&a.features, Some(&model))?;
    let real = fit_stats(&extract_features(&corpus, &*extractor).user("corpus features")?)
        .user("corpus statistics")?;
    let cfg = SweepConfig {
        kinds: a.kinds.clone(),
        t_grid: a.t_grid.clone(),
        ranges: DegradationRanges::default(),
        scale: a.scale,
        deterministic_reverse: a.deterministic,
        seed: a.seed,
        batch: a.batch,
    };
    if let Some(&t) = a.t_grid.iter().find(|&&t| t > sched.t_total()) {
        return Err(user_err(format!("t = {t} exceeds T = {}", sched.t_total())));
    }
    let rows = sweep_curves(&hq, &real, &*extractor, &model, &sched, &cfg).user("sweep")?;
    let dir = parent_dir(&a.out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let file = std::fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_curves_csv(&rows, file).context("writing CSV")?;
    let mut err = std::io::stderr().lock();
    for r in &rows {
        let _ = writeln!(
            err,
            "{:<10} t={:<4} frechet {:>10.4}  psnr {:>6.2} ± {:.2}",
            r.pipeline_kind, r.t, r.frechet, r.psnr_mean, r.psnr_std
        );
    }
    record::write(&dir, "sweep", ex, a, json!({ "rows": rows.len(), "checkpoint_sha256": sha }))
        .context("run record")?;
    Ok(())
}

fn eval(a: &EvalArgs, ex: &Expanded) -> CliResult {
    let loaded = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let model = loaded.as_ref().map(|l| &l.0);
    let extractor = build_extractor(&a.features, model)?;
    let corpus = corpus_images(&a.corpus)?;
    let lq: Vec<Image> = load_dir(&a.lq)?.into_iter().map(|(_, img)| img).collect();
    let real = fit_stats(&extract_features(&corpus, &*extractor).user("corpus features")?)
        .user("corpus statistics")?;
    let fake = fit_stats(&extract_features(&lq, &*extractor).user("LQ features")?)
        .user("LQ statistics")?;
    let d = frechet_distance(&fake, &real).context("Fréchet distance")?;
    println!("{d}");
    let report = json!({
        "frechet": d,
        "n_lq": lq.len(),
        "n_corpus": corpus.len(),
        "feature_dim": extractor.dim(),
    });
    write_json(&a.out, &report).context("writing report")?;
    record::write(&parent_dir(&a.out), "eval", ex, a, report).context("run record")?;
    Ok(())
}
