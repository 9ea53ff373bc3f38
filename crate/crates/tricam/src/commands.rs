//! Subcommand implementations. Each one reads its inputs, produces its
//! artifacts under `--out`, prints a single summary line to stdout, and
//! finishes by writing a run manifest with input/output hashes.

use anyhow::{bail, Context, Result};
use std::path::{Path, PathBuf};
use std::time::Instant;

use tricam_core::harness::{
    ablation_suite, angle_sweep, aux_ratio_sweep, evaluate, make_implicit_labels, mix_experiment,
    spatial_heatmap, split_dataset, train_model, AngleScenario, EvalOptions, SplitSpec,
    TrainRunConfig,
};
use tricam_core::network::TriCamConfig;
use tricam_core::synth::SceneConfig;

use crate::config::{load_criteria, ConfigFile};
use crate::manifest::{artifact, RunManifest};
use crate::{checkpoint, dataset, eventlog, report};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn cmd_gen(config_path: &Path, n: usize, seed: u64, out: &Path) -> Result<()> {
    let t0 = Instant::now();
    let config = ConfigFile::load(config_path)?;
    let scene = config.scene_config()?;
    ensure_dir(out)?;
    let manifest = dataset::generate(&config, &scene, n, seed, out)?;

    RunManifest {
        subcommand: "gen".into(),
        seed: Some(seed),
        config: serde_json::to_value(&config)?,
        inputs: vec![artifact(config_path)?],
        outputs: vec![artifact(&out.join("samples.bin"))?, artifact(&out.join("manifest.json"))?],
        duration_s: t0.elapsed().as_secs_f64(),
    }
    .write(out)?;
    println!(
        "gen: {} samples (seed {}) -> {} [sha256 {}]",
        manifest.count,
        seed,
        out.display(),
        &manifest.sample_hash[..12]
    );
    Ok(())
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let t0 = Instant::now();
    let loaded = dataset::load(&args.data)?;
    let cfg_file = match &args.config {
        Some(p) => Some(ConfigFile::load(p)?),
        None => None,
    };
    let run = match &cfg_file {
        Some(c) => c.train_run(args.seed, args.epochs)?,
        None => TrainRunConfig {
            seed: args.seed,
            epochs: args.epochs.unwrap_or(150),
            ..TrainRunConfig::default()
        },
    };

    let (train, val, test) = split_dataset(&loaded.samples, &SplitSpec {
        seed: args.seed,
        ..SplitSpec::default()
    })?;
    eprintln!(
        "training on {}/{}/{} samples, {} epochs, net {} params",
        train.len(),
        val.len(),
        test.len(),
        run.epochs,
        tricam_core::network::count_params_for(&run.resolved_net())?
    );
    let outcome = train_model(&train, &val, &loaded.rig, &run)
        .map_err(|e| anyhow::anyhow!("training failed: {e}"))?;

    ensure_dir(&args.out)?;
    let ckpt_path = args.out.join("model.tcmk");
    checkpoint::save(&ckpt_path, &outcome.model, &loaded.rig)?;
    let curves_path = args.out.join("curves.tsv");
    report::write_curves_tsv(&curves_path, &outcome.curves)?;

    let test_report =
        evaluate(&outcome.model, &test, &loaded.rig, &EvalOptions::from_flags(&run.ablation))?;

    RunManifest {
        subcommand: "train".into(),
        seed: Some(args.seed),
        config: serde_json::to_value(&run)?,
        inputs: vec![artifact(&args.data.join("samples.bin"))?],
        outputs: vec![artifact(&ckpt_path)?, artifact(&curves_path)?],
        duration_s: t0.elapsed().as_secs_f64(),
    }
    .write(&args.out)?;
    println!(
        "train: best epoch {} val {:.4} cm, test {:.4} cm -> {}",
        outcome.best_epoch,
        outcome.best_val_error_cm,
        test_report.mean_error_cm,
        ckpt_path.display()
    );
    Ok(())
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub angles: bool,
    pub heatmap_bin: Option<u32>,
    pub ablate: bool,
    pub mix_pct: Option<Vec<f64>>,
    pub smooth: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: u64,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let t0 = Instant::now();
    let (model, model_rig) = checkpoint::load(&args.model)?;
    let loaded = dataset::load(&args.data)?;
    if model_rig != loaded.rig {
        bail!(
            "rig mismatch: {} was trained on a different camera/screen setup than {}",
            args.model.display(),
            args.data.display()
        );
    }
    ensure_dir(&args.out)?;
    let mut outputs = Vec::new();

    // the held-out test slice of the dataset, deterministic in the seed
    let (_, _, test) =
        split_dataset(&loaded.samples, &SplitSpec { seed: args.seed, ..SplitSpec::default() })?;
    let opts = EvalOptions { smoothing_alpha: args.smooth, ..EvalOptions::default() };
    let eval = evaluate(&model, &test, &loaded.rig, &opts)?;
    let per_sample_path = args.out.join("per_sample.tsv");
    report::write_eval_tsv(&per_sample_path, &eval)?;
    outputs.push(artifact(&per_sample_path)?);

    let mut summary = serde_json::json!({
        "test_samples": test.len(),
        "mean_error_cm": eval.mean_error_cm,
        "median_error_cm": eval.median_error_cm,
    });

    if let Some(bin) = args.heatmap_bin {
        let grid = spatial_heatmap(&eval, &loaded.rig.screen, bin);
        let tsv = args.out.join("heatmap.tsv");
        let pgm = args.out.join("heatmap.pgm");
        report::write_heatmap_tsv(&tsv, &grid)?;
        report::write_heatmap_pgm(&pgm, &grid)?;
        outputs.push(artifact(&tsv)?);
        outputs.push(artifact(&pgm)?);
        summary["heatmap"] = serde_json::json!({
            "bin_px": bin, "cols": grid.cols, "rows": grid.rows,
        });
    }

    let scene = scene_from_manifest(&loaded)?;
    if args.angles {
        let rows =
            angle_sweep(&model, &AngleScenario::standard_set(), &scene, 120, args.seed, &opts)?;
        let path = args.out.join("angles.tsv");
        report::write_angles_tsv(&path, &rows)?;
        outputs.push(artifact(&path)?);
    }

    if args.ablate {
        let run = reduced_run(args.seed, args.epochs.unwrap_or(30));
        let seeds: Vec<u64> = (0..3).map(|k| args.seed.wrapping_add(k)).collect();
        let rows = ablation_suite(&loaded.samples, &run, &seeds, &loaded.rig)?;
        let path = args.out.join("ablation.tsv");
        report::write_ablation_tsv(&path, &rows)?;
        outputs.push(artifact(&path)?);
        let ratios = [0.0, 0.01, 0.1, 0.5, 1.0];
        let ratio_rows = aux_ratio_sweep(&loaded.samples, &ratios, &seeds, &run, &loaded.rig)?;
        let rpath = args.out.join("aux_ratio.tsv");
        report::write_ratio_tsv(&rpath, &ratio_rows)?;
        outputs.push(artifact(&rpath)?);
    }

    if let Some(pcts) = &args.mix_pct {
        let run = reduced_run(args.seed, args.epochs.unwrap_or(30));
        let implicit =
            make_implicit_labels(&loaded.samples, 3.28, args.seed ^ 0x1337, &loaded.rig.screen);
        let rows = mix_experiment(
            &loaded.samples,
            &implicit,
            pcts,
            &run,
            &SplitSpec { seed: args.seed, ..SplitSpec::default() },
            &loaded.rig,
        )?;
        let path = args.out.join("mix.tsv");
        report::write_mix_tsv(&path, &rows)?;
        outputs.push(artifact(&path)?);
    }

    let summary_path = args.out.join("summary.json");
    crate::manifest::write_json_atomic(&summary_path, &summary)?;
    outputs.push(artifact(&summary_path)?);

    RunManifest {
        subcommand: "eval".into(),
        seed: Some(args.seed),
        config: summary,
        inputs: vec![artifact(&args.model)?, artifact(&args.data.join("samples.bin"))?],
        outputs,
        duration_s: t0.elapsed().as_secs_f64(),
    }
    .write(&args.out)?;
    println!("eval: mean error {:.4} cm over {} test samples", eval.mean_error_cm, test.len());
    Ok(())
}

fn scene_from_manifest(loaded: &dataset::LoadedDataset) -> Result<SceneConfig> {
    let config = ConfigFile {
        screen: loaded.manifest.screen.clone(),
        cameras: loaded.manifest.cameras.clone(),
        scene: Some(loaded.manifest.scene.clone()),
        train: None,
        criteria: None,
    };
    config.scene_config()
}

fn reduced_run(seed: u64, epochs: usize) -> TrainRunConfig {
    TrainRunConfig {
        epochs,
        seed,
        net: TriCamConfig::small(0),
        ..TrainRunConfig::default()
    }
}

pub struct ClickFilterArgs {
    pub log: PathBuf,
    pub gaze: Option<PathBuf>,
    pub criteria: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_clickfilter(args: &ClickFilterArgs) -> Result<()> {
    let t0 = Instant::now();
    let events = eventlog::read_log(&args.log)?;
    let criteria = load_criteria(args.criteria.as_deref(), &None)?;
    let screen = tricam_core::synth::default_screen();
    ensure_dir(&args.out)?;

    let report = if events.is_empty() {
        // an empty log is a valid (if useless) recording: zero counts
        tricam_core::clickcalib::AlignmentReport {
            stage_counts: [0; 4],
            per_context_error_cm: vec![],
            mean_error_cm: 0.0,
            samples_per_click: 0.0,
            samples_per_minute: 0.0,
            samples: vec![],
        }
    } else {
        let gaze = match &args.gaze {
            Some(p) => eventlog::gaze_stream(&eventlog::read_log(p)?),
            None => eventlog::gaze_stream(&events),
        };
        tricam_core::clickcalib::alignment_report(&events, &gaze, &screen, &criteria)
            .map_err(|e| anyhow::anyhow!("{}: {e}", args.log.display()))?
    };

    report::write_clickfilter_tables(&args.out, &report)?;
    let summary = serde_json::json!({
        "stage_counts": report.stage_counts,
        "mean_error_cm": report.mean_error_cm,
        "samples_per_click": report.samples_per_click,
        "samples_per_minute": report.samples_per_minute,
        "aligned_samples": report.samples.len(),
    });
    let summary_path = args.out.join("summary.json");
    crate::manifest::write_json_atomic(&summary_path, &summary)?;

    let mut inputs = vec![artifact(&args.log)?];
    if let Some(g) = &args.gaze {
        inputs.push(artifact(g)?);
    }
    if let Some(c) = &args.criteria {
        inputs.push(artifact(c)?);
    }
    RunManifest {
        subcommand: "clickfilter".into(),
        seed: None,
        config: serde_json::to_value(&criteria)?,
        inputs,
        outputs: vec![
            artifact(&args.out.join("stages.tsv"))?,
            artifact(&args.out.join("context_error.tsv"))?,
            artifact(&args.out.join("samples.tsv"))?,
            artifact(&summary_path)?,
        ],
        duration_s: t0.elapsed().as_secs_f64(),
    }
    .write(&args.out)?;
    println!(
        "clickfilter: stages {:?}, {} aligned samples ({:.2}/click, {:.2}/min)",
        report.stage_counts,
        report.samples.len(),
        report.samples_per_click,
        report.samples_per_minute
    );
    Ok(())
}
