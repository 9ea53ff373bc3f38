//! Report writers: tab-separated tables, JSON summaries, and portable
//! graymap renderings of error heatmaps.

use anyhow::{Context, Result};
use std::fmt::Write as _;
use std::path::Path;

use tricam_core::clickcalib::AlignmentReport;
use tricam_core::harness::{
    AngleRow, EpochStats, EvalReport, HeatmapGrid, MixRow, RatioRow, VariantResult,
};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_eval_tsv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::from("target_x_px\ttarget_y_px\tpred_x_px\tpred_y_px\terror_cm\n");
    for s in &report.per_sample {
        writeln!(
            out,
            "{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.6}",
            s.target_px.0, s.target_px.1, s.pred_px.0, s.pred_px.1, s.error_cm
        )
        .expect("string write");
    }
    write_text(path, &out)
}

pub fn write_curves_tsv(path: &Path, curves: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch\ttrain_joint\ttrain_main\tval_error_cm\n");
    for e in curves {
        writeln!(out, "{}\t{:.9}\t{:.9}\t{:.6}", e.epoch, e.train_joint, e.train_main, e.val_error_cm)
            .expect("string write");
    }
    write_text(path, &out)
}

pub fn write_angles_tsv(path: &Path, rows: &[AngleRow]) -> Result<()> {
    let mut out = String::from("theta_deg\toffset_cm\tmean_error_cm\tdetected_rate\n");
    for r in rows {
        writeln!(out, "{:.1}\t{:.6}\t{:.6}\t{:.4}", r.theta_deg, r.offset_cm, r.mean_error_cm, r.detected_rate)
            .expect("string write");
    }
    write_text(path, &out)
}

pub fn write_ablation_tsv(path: &Path, rows: &[VariantResult]) -> Result<()> {
    let mut out = String::from("variant\tmedian_error_cm\tdelta_vs_full_pct\tper_seed_error_cm\n");
    for r in rows {
        let seeds: Vec<String> = r.per_seed_error_cm.iter().map(|e| format!("{e:.6}")).collect();
        writeln!(
            out,
            "{}\t{:.6}\t{:+.2}\t{}",
            r.variant.name(),
            r.median_error_cm,
            r.delta_vs_full_pct,
            seeds.join(",")
        )
        .expect("string write");
    }
    write_text(path, &out)
}

pub fn write_ratio_tsv(path: &Path, rows: &[RatioRow]) -> Result<()> {
    let mut out = String::from("aux_ratio\tmedian_error_cm\tper_seed_error_cm\n");
    for r in rows {
        let seeds: Vec<String> = r.per_seed_error_cm.iter().map(|e| format!("{e:.6}")).collect();
        writeln!(out, "{}\t{:.6}\t{}", r.aux_ratio, r.median_error_cm, seeds.join(","))
            .expect("string write");
    }
    write_text(path, &out)
}

pub fn write_mix_tsv(path: &Path, rows: &[MixRow]) -> Result<()> {
    let mut out = String::from("implicit_pct\tmean_error_cm\n");
    for r in rows {
        writeln!(out, "{}\t{:.6}", r.implicit_pct, r.mean_error_cm).expect("string write");
    }
    write_text(path, &out)
}

/// Grid of per-bin means plus counts.
pub fn write_heatmap_tsv(path: &Path, grid: &HeatmapGrid) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# bin_px={} cols={} rows={} global_mean_cm={:.6}", grid.bin_px, grid.cols, grid.rows, grid.global_mean_cm)
        .expect("string write");
    for y in 0..grid.rows {
        let row: Vec<String> = (0..grid.cols)
            .map(|x| format!("{:.6}", grid.mean_error_cm[y * grid.cols + x]))
            .collect();
        writeln!(out, "{}", row.join("\t")).expect("string write");
    }
    writeln!(out, "# counts").expect("string write");
    for y in 0..grid.rows {
        let row: Vec<String> =
            (0..grid.cols).map(|x| grid.counts[y * grid.cols + x].to_string()).collect();
        writeln!(out, "{}", row.join("\t")).expect("string write");
    }
    write_text(path, &out)
}

/// ASCII portable graymap (P2), darkest = highest error, maxval 255.
pub fn write_heatmap_pgm(path: &Path, grid: &HeatmapGrid) -> Result<()> {
    let peak = grid.mean_error_cm.iter().copied().fold(0.0f64, f64::max);
    let mut out = String::new();
    writeln!(out, "P2").expect("string write");
    writeln!(out, "# mean gaze error per {}px bin; 0=white={:.4}cm peak", grid.bin_px, peak)
        .expect("string write");
    writeln!(out, "{} {}", grid.cols, grid.rows).expect("string write");
    writeln!(out, "255").expect("string write");
    for y in 0..grid.rows {
        let row: Vec<String> = (0..grid.cols)
            .map(|x| {
                let v = grid.mean_error_cm[y * grid.cols + x];
                let shade = if peak > 0.0 { 255.0 - (v / peak * 255.0) } else { 255.0 };
                format!("{}", shade.round().clamp(0.0, 255.0) as u32)
            })
            .collect();
        writeln!(out, "{}", row.join(" ")).expect("string write");
    }
    write_text(path, &out)
}

pub fn write_clickfilter_tables(dir: &Path, report: &AlignmentReport) -> Result<()> {
    let mut stages = String::from("stage\tcount\n");
    for (name, count) in ["raw", "after_context", "after_duration", "after_location"]
        .iter()
        .zip(report.stage_counts)
    {
        writeln!(stages, "{name}\t{count}").expect("string write");
    }
    write_text(&dir.join("stages.tsv"), &stages)?;

    let mut ctx = String::from("context\tmean_error_cm\tclicks\n");
    for (context, err, n) in &report.per_context_error_cm {
        writeln!(ctx, "{}\t{:.6}\t{}", context.name(), err, n).expect("string write");
    }
    write_text(&dir.join("context_error.tsv"), &ctx)?;

    let mut samples = String::from("opportunity\tphase\tcapture_t_s\tcursor_x_px\tcursor_y_px\n");
    for s in &report.samples {
        let phase = match s.phase {
            tricam_core::clickcalib::SamplePhase::PressWindow => "press_window",
            tricam_core::clickcalib::SamplePhase::PostRelease => "post_release",
        };
        writeln!(samples, "{}\t{}\t{:.6}\t{:.3}\t{:.3}", s.opportunity_id, phase, s.capture_t, s.cursor.0, s.cursor.1)
            .expect("string write");
    }
    write_text(&dir.join("samples.tsv"), &samples)
}
