//! `strec roc`: no-referred-object discrimination curve and AUC.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use strec_core::io::{load_annotations, load_predictions, pair_clips, to_json_string};
use strec_core::metrics::{collect_roc_samples, roc_curve, RocCurve};

#[derive(Debug, Args)]
pub struct RocArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Write the curve points and AUC (JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a static SVG rendering of the curve here.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

/// A minimal static rendering: unit square, chance diagonal, curve.
pub fn roc_svg(curve: &RocCurve) -> String {
    let (size, margin) = (400.0, 40.0);
    let span = size - 2.0 * margin;
    let x = |fpr: f64| margin + fpr * span;
    let y = |tpr: f64| size - margin - tpr * span;

    let mut points = String::new();
    for (fpr, tpr) in &curve.points {
        let _ = write!(points, "{:.2},{:.2} ", x(*fpr), y(*tpr));
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"{margin}\" y=\"{margin}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let _ = writeln!(
        svg,
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"crimson\" stroke-width=\"2\"/>",
        points.trim_end()
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"14\">AUC {:.1}</text>",
        margin + 8.0,
        margin + 18.0,
        curve.auc * 100.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">FPR</text>",
        size / 2.0 - 12.0,
        size - 10.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"10\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" transform=\"rotate(-90 14 {})\">TPR</text>",
        size / 2.0,
        size / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn run(args: &RocArgs) -> Result<()> {
    let annotations = load_annotations(&args.annotations)
        .with_context(|| format!("loading {}", args.annotations.display()))?;
    let predictions = load_predictions(&args.predictions)
        .with_context(|| format!("loading {}", args.predictions.display()))?;
    let (evaluations, unpredicted) = pair_clips(&annotations, &predictions)?;
    for clip_id in &unpredicted {
        eprintln!("warning: no predictions for clip {clip_id}; scores default to 0");
    }

    let samples = collect_roc_samples(&evaluations);
    let curve = roc_curve(&samples)?;
    println!("AUC {:.1}", curve.auc * 100.0);

    if let Some(out) = &args.out {
        std::fs::write(out, to_json_string(&curve))
            .with_context(|| format!("writing {}", out.display()))?;
    }
    if let Some(plot) = &args.plot {
        std::fs::write(plot, roc_svg(&curve))
            .with_context(|| format!("writing {}", plot.display()))?;
    }
    Ok(())
}
