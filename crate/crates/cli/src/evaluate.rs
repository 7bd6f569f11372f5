//! `strec evaluate`: split metrics from annotation + prediction files.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use strec_core::io::{
    load_annotations, load_predictions, write_report, AnnotationFile, Movement, Uniqueness,
};
use strec_core::metrics::{clip_metrics, split_aggregate, Aggregation, ClipMetrics, SplitReport};

use crate::report::{grouped_json, table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    Uniqueness,
    Movement,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Break the split down by an annotation tag.
    #[arg(long, value_enum)]
    pub group_by: Option<GroupBy>,
    /// Pool images across clips instead of averaging per clip first.
    #[arg(long)]
    pub pooled_images: bool,
    /// Write the report (JSON) here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn group_label(annotations: &AnnotationFile, clip_id: &str, group_by: GroupBy) -> String {
    let tags = annotations
        .clips
        .iter()
        .find(|c| c.clip_id == clip_id)
        .and_then(|c| c.tags);
    match (tags, group_by) {
        (Some(t), GroupBy::Uniqueness) => match t.uniqueness {
            Uniqueness::Single => "single".into(),
            Uniqueness::Multiple => "multiple".into(),
        },
        (Some(t), GroupBy::Movement) => match t.movement {
            Movement::Static => "static".into(),
            Movement::Moving => "moving".into(),
        },
        (None, _) => "untagged".into(),
    }
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let annotations = load_annotations(&args.annotations)
        .with_context(|| format!("loading {}", args.annotations.display()))?;
    let predictions = load_predictions(&args.predictions)
        .with_context(|| format!("loading {}", args.predictions.display()))?;

    let (evaluations, unpredicted) = strec_core::io::pair_clips(&annotations, &predictions)?;
    for clip_id in &unpredicted {
        eprintln!("warning: no predictions for clip {clip_id}; scoring as all-absent");
    }
    for eval in &evaluations {
        let targets = eval.target_frame_count();
        if targets > 0 && !eval.has_dataset_minimum_targets() {
            eprintln!(
                "warning: clip {} has only {targets} target frame(s); dataset clips carry at least 4",
                eval.clip_id
            );
        }
    }

    let mut records: Vec<ClipMetrics> = evaluations.par_iter().map(clip_metrics).collect();
    records.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));

    let aggregation = if args.pooled_images {
        Aggregation::PooledImages
    } else {
        Aggregation::ClipAveraged
    };

    let rows: Vec<(String, SplitReport)> = match args.group_by {
        None => vec![("all".to_string(), split_aggregate(&records, aggregation)?)],
        Some(group_by) => {
            let mut groups: BTreeMap<String, Vec<ClipMetrics>> = BTreeMap::new();
            for record in records {
                let label = group_label(&annotations, &record.clip_id, group_by);
                groups.entry(label).or_default().push(record);
            }
            groups
                .into_iter()
                .map(|(label, group)| Ok((label, split_aggregate(&group, aggregation)?)))
                .collect::<Result<Vec<_>>>()?
        }
    };

    print!("{}", table(&rows));

    if let Some(out) = &args.out {
        if args.group_by.is_some() {
            std::fs::write(out, grouped_json(&rows))
                .with_context(|| format!("writing {}", out.display()))?;
        } else {
            write_report(out, &rows[0].1)?;
        }
    }
    Ok(())
}
