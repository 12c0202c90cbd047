use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context};
use nucleus_core::dataset::{list_all, list_images, list_masks, pair_by_key, Pairing};
use nucleus_core::metrics::{alpha_sweep, evaluate_masks, macro_mean, parse_alpha_grid, EvalResult};
use nucleus_core::phantom::{generate_phantom, suite_specs};
use nucleus_core::session::AuditIssue;
use nucleus_core::{segment as run_segment, BinaryMask, RgbImage, Session};
use rayon::prelude::*;

fn name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn input_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    ensure!(dir.is_dir(), "input directory {} does not exist", dir.display());
    let images = list_images(dir).with_context(|| format!("cannot list {}", dir.display()))?;
    ensure!(!images.is_empty(), "no supported images in {}", dir.display());
    Ok(images)
}

/// Output file name per image: the stem, or the full name when two images
/// share a stem.
fn mask_names(images: &[PathBuf]) -> Vec<String> {
    let stem = |p: &PathBuf| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for p in images {
        *seen.entry(stem(p)).or_default() += 1;
    }
    images
        .iter()
        .map(|p| {
            let s = stem(p);
            if seen[&s] > 1 { format!("{}.png", name(p)) } else { format!("{s}.png") }
        })
        .collect()
}

enum Outcome {
    Done { csv: String, millis: f64 },
    Degenerate(String),
    Error(String),
}

pub fn segment(input: &Path, output: &Path, alpha: f64, offset: i32) -> anyhow::Result<ExitCode> {
    let images = input_images(input)?;
    std::fs::create_dir_all(output).with_context(|| format!("cannot create {}", output.display()))?;
    let names = mask_names(&images);
    let started = Instant::now();

    let outcomes: Vec<Outcome> = images
        .par_iter()
        .zip(&names)
        .map(|(path, mask_name)| {
            let t0 = Instant::now();
            let img = match RgbImage::load(path) {
                Ok(img) => img,
                Err(e) => return Outcome::Error(e.to_string()),
            };
            let seg = match run_segment(&img, alpha, offset) {
                Ok(seg) => seg,
                Err(e) => return Outcome::Degenerate(e.to_string()),
            };
            let millis = t0.elapsed().as_secs_f64() * 1e3;
            if let Err(e) = seg.mask.save_png(output.join(mask_name)) {
                return Outcome::Error(e.to_string());
            }
            let t = seg.thresholds;
            Outcome::Done { csv: format!("{},{},{},{},{}", name(path), t.thv1, t.thv2, t.uthv, t.effective), millis }
        })
        .collect();

    let mut out = std::io::stdout().lock();
    writeln!(out, "image,thv1,thv2,uthv,effective")?;
    let (mut degenerate, mut errors, mut times) = (0, 0, Vec::new());
    for (path, outcome) in images.iter().zip(&outcomes) {
        match outcome {
            Outcome::Done { csv, millis } => {
                writeln!(out, "{csv}")?;
                eprintln!("{}: {millis:.2} ms", name(path));
                times.push(*millis);
            }
            Outcome::Degenerate(e) => {
                degenerate += 1;
                eprintln!("degenerate: {}: {e}", name(path));
            }
            Outcome::Error(e) => {
                errors += 1;
                eprintln!("error: {}: {e}", name(path));
            }
        }
    }
    out.flush()?;
    times.sort_by(f64::total_cmp);
    let median = times.get(times.len() / 2).copied().unwrap_or(0.0);
    eprintln!(
        "segmented {} of {} images in {:.1} ms (median {median:.2} ms per image)",
        times.len(),
        images.len(),
        started.elapsed().as_secs_f64() * 1e3
    );
    Ok(if errors > 0 {
        ExitCode::from(1)
    } else if degenerate > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn pairing(left: &[PathBuf], right: &[PathBuf], left_dir: &Path, right_dir: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    let Pairing { pairs, unmatched_left, unmatched_right } = pair_by_key(left, right);
    if !unmatched_left.is_empty() || !unmatched_right.is_empty() {
        let list = |v: &[PathBuf]| v.iter().map(|p| name(p)).collect::<Vec<_>>().join(", ");
        let mut msg = String::from("unmatched files");
        if !unmatched_left.is_empty() {
            msg += &format!("; in {}: {}", left_dir.display(), list(&unmatched_left));
        }
        if !unmatched_right.is_empty() {
            msg += &format!("; in {}: {}", right_dir.display(), list(&unmatched_right));
        }
        bail!(msg);
    }
    ensure!(!pairs.is_empty(), "no images to compare");
    Ok(pairs)
}

fn listed(dir: &Path, f: fn(&Path) -> std::io::Result<Vec<PathBuf>>) -> anyhow::Result<Vec<PathBuf>> {
    ensure!(dir.is_dir(), "directory {} does not exist", dir.display());
    f(dir).with_context(|| format!("cannot list {}", dir.display()))
}

fn pct(r: &EvalResult) -> String {
    format!("{:.2},{:.2},{:.2}", r.sensitivity * 100.0, r.precision * 100.0, r.dsc * 100.0)
}

/// Predicted masks: the masks in `dir` if it looks like a ground-truth
/// folder, otherwise every image, so `segment` output (named after the
/// source images) can be scored directly.
fn predictions(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let masks = listed(dir, list_masks)?;
    if masks.is_empty() {
        listed(dir, list_all)
    } else {
        Ok(masks)
    }
}

pub fn eval(pred: &Path, gt: &Path) -> anyhow::Result<ExitCode> {
    let pairs = pairing(&predictions(pred)?, &listed(gt, list_masks)?, pred, gt)?;
    let results: Vec<EvalResult> = pairs
        .par_iter()
        .map(|(p, g)| {
            let p_mask = BinaryMask::load(p)?;
            let g_mask = BinaryMask::load(g)?;
            evaluate_masks(&p_mask, &g_mask).with_context(|| format!("{} vs {}", name(p), name(g)))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "image,sensitivity_pct,precision_pct,dsc_pct")?;
    for ((p, _), r) in pairs.iter().zip(&results) {
        writeln!(out, "{},{}", name(p), pct(r))?;
    }
    writeln!(out, "MEAN,{}", pct(&macro_mean(&results).expect("non-empty")))?;
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(input: &Path, gt: &Path, alphas: &str, json: bool) -> anyhow::Result<ExitCode> {
    let grid = parse_alpha_grid(alphas)?;
    let pairs = pairing(&input_images(input)?, &listed(gt, list_masks)?, input, gt)?;
    let (images, truths): (Vec<RgbImage>, Vec<BinaryMask>) = pairs
        .par_iter()
        .map(|(i, g)| Ok((RgbImage::load(i)?, BinaryMask::load(g)?)))
        .collect::<anyhow::Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let report = alpha_sweep(&images, &truths, &grid)?;

    let mut out = std::io::stdout().lock();
    out.write_all(if json { report.to_json() } else { report.to_csv() }.as_bytes())?;
    out.flush()?;
    for &i in &report.failed {
        eprintln!("degenerate: {}", name(&pairs[i].0));
    }
    let best = report.best_row();
    eprintln!("best_alpha={} dsc={:.2}%", report.best_alpha, best.dsc * 100.0);
    Ok(if report.failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

pub fn phantom(count: usize, seed: u64, output: &Path, size: u32) -> anyhow::Result<ExitCode> {
    ensure!(count >= 1, "count must be at least 1");
    std::fs::create_dir_all(output).with_context(|| format!("cannot create {}", output.display()))?;
    suite_specs(count, seed, size).par_iter().enumerate().try_for_each(|(i, spec)| {
        let (img, truth) = generate_phantom(spec)?;
        img.save_png(output.join(format!("img_{i:04}.png")))?;
        truth.save_png(output.join(format!("gt_{i:04}.png")))?;
        anyhow::Ok(())
    })?;
    eprintln!("wrote {count} phantoms to {}", output.display());
    Ok(ExitCode::SUCCESS)
}

fn describe(issue: &AuditIssue) -> String {
    match issue {
        AuditIssue::MissingMask { image_id } => format!("{image_id}: accepted but mask is missing or unreadable"),
        AuditIssue::MaskDimensions { image_id, mask, image } => {
            format!("{image_id}: mask is {}x{}, image is {}x{}", mask.0, mask.1, image.0, image.1)
        }
        AuditIssue::StaleMask { image_id } => format!("{image_id}: not accepted but a mask exists"),
        AuditIssue::MissingFailedCopy { image_id } => format!("{image_id}: failed but no copy in failed/"),
        AuditIssue::StaleFailedCopy { image_id } => format!("{image_id}: not failed but a copy exists in failed/"),
        AuditIssue::Orphaned { image_id } => format!("{image_id}: image file is missing"),
    }
}

pub fn audit(folder: &Path) -> anyhow::Result<ExitCode> {
    let session = Session::inspect(folder).with_context(|| format!("cannot read session in {}", folder.display()))?;
    let issues = session.audit();
    let s = session.summary();
    println!("{} images: {} pending, {} accepted, {} failed", s.image_count, s.pending, s.accepted, s.failed);
    for issue in &issues {
        println!("{}", describe(issue));
    }
    if issues.is_empty() {
        println!("ok");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}
