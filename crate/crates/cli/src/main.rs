//! `subdm`: command-line driver for masks, training, reconstruction,
//! convergence comparisons and image metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use subdm_core::eval::config::SEED_ENV;
use subdm_core::eval::pipeline;
use subdm_core::eval::{ExperimentConfig, Metrics};
use subdm_core::kspace::{kspace_to_image, zero_filled};
use subdm_core::numerics::{encode_array, read_array, write_atomic, ComplexImage};
use subdm_core::sampler::{reconstruct, ReconRecord};
use subdm_core::sde::{NoiseSchedule, SubspaceMode};

const USAGE: &str = "\
usage: subdm <command> [CONFIG] [--key value | --key=value]...

commands:
  mask          write the sampling mask (mask.subk)
  train         train denoisers (model.subm, model_sub.subm, loss.csv)
  reconstruct   run the sampler (recon.subk, recon.u8, record.csv)
  convergence   full-space vs subspace runs on one measurement (convergence.csv)
  metrics REF TEST
                compare two image-domain SUBK1 files (metrics.csv)

CONFIG is a flat `key = value` file; flags override its keys and the
SUBDM_SEED environment variable overrides the seed. Every run writes the
resolved configuration to <output_dir>/manifest.txt.";

const COMMANDS: [&str; 5] = ["mask", "train", "reconstruct", "convergence", "metrics"];

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("subdm: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    let Some(command) = args.first() else {
        bail!("missing command\n{USAGE}");
    };
    let mut rest = &args[1..];
    if matches!(command.as_str(), "-h" | "--help" | "help") {
        println!("{USAGE}");
        return Ok(());
    }
    if !COMMANDS.contains(&command.as_str()) {
        bail!("unknown command {command:?}\n{USAGE}");
    }
    let mut positional = Vec::new();
    while let Some(first) = rest.first().filter(|a| !a.starts_with("--")) {
        positional.push(first.clone());
        rest = &rest[1..];
    }
    let wanted = if command == "metrics" { 2..=3 } else { 0..=1 };
    if !wanted.contains(&positional.len()) {
        bail!("unexpected arguments {positional:?} for {command}\n{USAGE}");
    }
    let config_file = if command == "metrics" { positional.get(2) } else { positional.first() };
    let cfg = resolve_config(config_file.map(PathBuf::from).as_deref(), rest)?;

    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    write_text(&cfg.output_dir.join("manifest.txt"), &format!("# subdm {command}\n{}", cfg.to_manifest()))?;

    match command.as_str() {
        "mask" => cmd_mask(&cfg),
        "train" => cmd_train(&cfg),
        "reconstruct" => cmd_reconstruct(&cfg),
        "convergence" => cmd_convergence(&cfg),
        "metrics" => cmd_metrics(&cfg, Path::new(&positional[0]), Path::new(&positional[1])),
        _ => unreachable!("command checked above"),
    }
}

/// Defaults, then the config file, then flags, then `SUBDM_SEED`. Paths in
/// the file are relative to the file, paths in flags to the working
/// directory.
fn resolve_config(file: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = match file {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    cfg.apply_seed_env(std::env::var(SEED_ENV).ok().as_deref())?;
    cfg.resolve_paths(&std::env::current_dir()?);
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn write_subk(path: &Path, img: &ComplexImage) -> Result<()> {
    write_atomic(path, &encode_array(img)).with_context(|| format!("writing {}", path.display()))
}

/// Magnitude scaled so the peak maps to 255, one byte per pixel in row-major
/// order, with the shape in a `.dims` sidecar.
fn write_magnitude_dump(path: &Path, img: &ComplexImage) -> Result<()> {
    let mags = img.magnitude();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let bytes: Vec<u8> = mags.iter().map(|m| (m * scale).round().clamp(0.0, 255.0) as u8).collect();
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    let mut dims = path.as_os_str().to_owned();
    dims.push(".dims");
    write_text(Path::new(&dims), &format!("{} {}\n", img.height(), img.width()))
}

fn cmd_mask(cfg: &ExperimentConfig) -> Result<()> {
    let mask = pipeline::build_mask(cfg)?;
    let path = cfg.output_dir.join("mask.subk");
    write_subk(&path, &mask.to_image())?;
    write_magnitude_dump(&cfg.output_dir.join("mask.u8"), &mask.to_image())?;
    println!(
        "mask {} {}x{} sampled {} realized R {:.4} -> {}",
        mask.family(),
        cfg.height,
        cfg.width,
        mask.sampled_count(),
        mask.realized_acceleration(),
        path.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let trained = pipeline::train_models(cfg)?;
    let full_path = cfg.output_dir.join("model.subm");
    write_atomic(&full_path, &trained.full.model.encode_checkpoint())?;
    let mut csv = String::from("iteration,loss");
    if trained.sub.is_some() {
        csv.push_str(",loss_sub");
    }
    csv.push('\n');
    for (i, loss) in trained.full.loss_history.iter().enumerate() {
        write!(csv, "{i},{loss:e}")?;
        if let Some(sub) = &trained.sub {
            write!(csv, ",{:e}", sub.loss_history[i])?;
        }
        csv.push('\n');
    }
    write_text(&cfg.output_dir.join("loss.csv"), &csv)?;
    println!("trained {} -> {}", trained.full.model.architecture().representation, full_path.display());
    if let Some(sub) = &trained.sub {
        let sub_path = cfg.output_dir.join("model_sub.subm");
        write_atomic(&sub_path, &sub.model.encode_checkpoint())?;
        println!("trained {} -> {}", sub.model.architecture().representation, sub_path.display());
    }
    Ok(())
}

fn cmd_reconstruct(cfg: &ExperimentConfig) -> Result<()> {
    let scores = pipeline::load_scores(cfg)?;
    let problem = pipeline::build_problem(cfg, &scores)?;
    let sc = pipeline::sampler_config(cfg, cfg.schedule()?, cfg.subspace_mode);
    let mut rng = pipeline::sampler_rng(cfg);
    let (k, record) = reconstruct(
        &problem.measurement,
        scores.full(),
        scores.sub(),
        &sc,
        &mut rng,
        problem.ground_truth.as_ref(),
    )?;
    let image = kspace_to_image(&k)?;
    let dir = &cfg.output_dir;
    write_subk(&dir.join("recon.subk"), &image)?;
    write_subk(&dir.join("recon_kspace.subk"), &k)?;
    write_magnitude_dump(&dir.join("recon.u8"), &image)?;
    write_subk(&dir.join("mask.subk"), &problem.measurement.mask.to_image())?;
    write_subk(&dir.join("measurement.subk"), &problem.measurement.data)?;
    write_text(&dir.join("record.csv"), &record.to_csv())?;
    if let Some(gt) = &problem.ground_truth {
        let zf = Metrics::compute(gt, &zero_filled(&problem.measurement)?)?;
        let m = Metrics::compute(gt, &image)?;
        write_subk(&dir.join("ground_truth.subk"), gt)?;
        println!("zero-filled psnr {:.4} ssim {:.4}", zf.psnr, zf.ssim);
        println!("reconstruction psnr {:.4} ssim {:.4} mse {:e}", m.psnr, m.ssim, m.mse);
    }
    println!(
        "score ops {} corrector skips {} -> {}",
        record.score_ops,
        record.corrector_skips,
        dir.join("recon.subk").display()
    );
    Ok(())
}

/// First step record whose PSNR reaches `target`, as (step, cumulative ops).
fn ops_to_reach(record: &ReconRecord, target: f64) -> Option<(usize, u64)> {
    record
        .steps
        .iter()
        .find(|s| s.psnr.is_some_and(|p| p >= target))
        .map(|s| (s.step, s.score_ops))
}

fn cmd_convergence(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.subspace_mode == SubspaceMode::Full {
        bail!("convergence compares against a subspace run; set subspace_mode to ll_projection or four_band");
    }
    let scores = pipeline::load_scores(cfg)?;
    if scores.sub().is_none() {
        bail!("convergence needs a subspace score");
    }
    let problem = pipeline::build_problem(cfg, &scores)?;
    let gt = problem
        .ground_truth
        .as_ref()
        .context("convergence needs a ground truth (ground_truth key or a Gaussian prior)")?;

    let full_sched = NoiseSchedule::new(cfg.sigma_min, cfg.sigma_max, cfg.n_steps, cfg.n_steps)?;
    let sub_sched = NoiseSchedule::new(cfg.sigma_min, cfg.sigma_max, cfg.sub_n_steps, cfg.sub_m_split)?;
    let runs = [
        ("full", pipeline::sampler_config(cfg, full_sched, SubspaceMode::Full)),
        ("subspace", pipeline::sampler_config(cfg, sub_sched, cfg.subspace_mode)),
    ];
    let mut records = Vec::new();
    for (name, sc) in &runs {
        // both runs start from the same sampler stream
        let mut rng = pipeline::sampler_rng(cfg);
        let (k, record) = reconstruct(&problem.measurement, scores.full(), scores.sub(), sc, &mut rng, Some(gt))?;
        write_subk(&cfg.output_dir.join(format!("recon_{name}.subk")), &kspace_to_image(&k)?)?;
        records.push((*name, record));
    }

    let mut csv = String::from("run,step,sigma,psnr,ssim,elapsed_ms,score_ops\n");
    for (name, rec) in &records {
        for s in &rec.steps {
            writeln!(
                csv,
                "{name},{},{:e},{:.6},{:.6},{:.3},{}",
                s.step,
                s.sigma,
                s.psnr.unwrap_or(f64::NAN),
                s.ssim.unwrap_or(f64::NAN),
                s.elapsed_ms,
                s.score_ops
            )?;
        }
    }
    write_text(&cfg.output_dir.join("convergence.csv"), &csv)?;

    let full = &records[0].1;
    let sub = &records[1].1;
    let full_final = full.final_psnr().context("full run recorded no PSNR")?;
    let target = full_final - 1.0;
    let mut summary = String::from("run,final_psnr,total_ops,target_psnr,step_at_target,ops_at_target,ops_ratio\n");
    for (name, rec) in &records {
        let reach = ops_to_reach(rec, target);
        writeln!(
            summary,
            "{name},{:.6},{},{:.6},{},{},{}",
            rec.final_psnr().unwrap_or(f64::NAN),
            rec.score_ops,
            target,
            reach.map_or_else(|| "none".into(), |r| r.0.to_string()),
            reach.map_or_else(|| "none".into(), |r| r.1.to_string()),
            reach.map_or_else(|| "none".into(), |r| format!("{:.6}", r.1 as f64 / full.score_ops as f64)),
        )?;
    }
    write_text(&cfg.output_dir.join("convergence_summary.csv"), &summary)?;

    println!("full: final psnr {full_final:.4} over {} score ops", full.score_ops);
    match ops_to_reach(sub, target) {
        Some((step, ops)) => println!(
            "subspace: reaches {target:.4} dB at step {step} after {ops} ops ({:.4} of full)",
            ops as f64 / full.score_ops as f64
        ),
        None => println!(
            "subspace: never reaches {target:.4} dB (final {:.4})",
            sub.final_psnr().unwrap_or(f64::NAN)
        ),
    }
    Ok(())
}

fn cmd_metrics(cfg: &ExperimentConfig, reference: &Path, test: &Path) -> Result<()> {
    let a = read_array(reference).with_context(|| format!("reading {}", reference.display()))?;
    let b = read_array(test).with_context(|| format!("reading {}", test.display()))?;
    let m = Metrics::compute(&a, &b)?;
    write_text(
        &cfg.output_dir.join("metrics.csv"),
        &format!("psnr,ssim,mse\n{:.6},{:.6},{:e}\n", m.psnr, m.ssim, m.mse),
    )?;
    println!("psnr {:.4} ssim {:.6} mse {:e}", m.psnr, m.ssim, m.mse);
    Ok(())
}

