use std::path::Path;

use spf_nn::checkpoint::Checkpoint;
use spf_trainer::config::parse_train_config;
use spf_trainer::train::Trainer;

use super::{overrides, profile_name};
use crate::error::Result;
use crate::out::{OutDir, RunManifest};
use crate::svg::{line_plot, smooth, Series};
use crate::{Input, TrainArgs};

/// Episodes averaged in the smoothed learning curve.
pub const SMOOTHING: usize = 10;

pub fn checkpoint_stem(step: u64) -> String {
    format!("checkpoints/step_{step:08}")
}

pub const FINAL_STEM: &str = "checkpoints/final";

fn learning_curve(tr: &Trainer) -> String {
    let episodes: Vec<(f64, f64)> =
        tr.metrics.iter().filter_map(|r| r.episodic_return.map(|g| (r.step as f64, g))).collect();
    let evals: Vec<(f64, f64)> = tr.evals.iter().map(|e| (e.step as f64, e.mean())).collect();
    let mut series = vec![
        Series::new("episode return", episodes.clone()),
        Series::new(format!("mean of last {SMOOTHING}"), smooth(&episodes, SMOOTHING)),
    ];
    if !evals.is_empty() {
        series.push(Series::new("evaluation mean", evals));
    }
    line_plot("Learning curve", "environment step", "return", &series)
}

fn loss_curve(tr: &Trainer) -> String {
    let pts: Vec<(f64, f64)> = tr.loss_trace().into_iter().enumerate().map(|(i, l)| (i as f64, l)).collect();
    line_plot(
        "Prediction loss",
        "update",
        "loss",
        &[Series::new("loss", pts.clone()), Series::new("smoothed", smooth(&pts, 50))],
    )
}

pub fn run(args: &TrainArgs, input: &Input, out: &Path) -> Result<RunManifest> {
    let c = &args.common;
    let config = parse_train_config(&input.text, overrides(c))?;
    // resolve the checkpoint before creating outputs so a bad stem leaves nothing behind
    let resumed = match &args.resume {
        Some(stem) => Some(Checkpoint::load(stem)?),
        None => None,
    };
    let mut tr = match &resumed {
        Some(ck) => Trainer::from_checkpoint(config.clone(), ck)?,
        None => Trainer::new(config.clone())?,
    };
    let start = tr.step;

    let mut manifest = RunManifest::new("train", &input.path, &input.bytes);
    manifest.seed = Some(config.seed);
    manifest.profile = Some(profile_name(config.profile));
    let mut dir = OutDir::create(out)?;

    let total = config.schedule.total_steps;
    let every = config.schedule.checkpoint_interval;
    while tr.step < total {
        tr.advance()?;
        if every > 0 && tr.step % every == 0 && tr.step < total {
            dir.save_checkpoint(&checkpoint_stem(tr.step), &tr.to_checkpoint()?)?;
        }
    }
    dir.save_checkpoint(FINAL_STEM, &tr.to_checkpoint()?)?;

    dir.write("metrics.csv", tr.metrics_csv().as_bytes())?;
    dir.write("agent.csv", tr.agent_csv().as_bytes())?;
    dir.write("eval.csv", tr.eval_csv().as_bytes())?;
    dir.write("learning_curve.svg", learning_curve(&tr).as_bytes())?;
    if !tr.loss_trace().is_empty() {
        dir.write("aux_loss.svg", loss_curve(&tr).as_bytes())?;
    }

    manifest.warnings.extend(tr.notices.iter().cloned());
    manifest.details = serde_json::json!({
        "env": config.env_name(),
        "agent": format!("{:?}", tr.agent.kind()),
        "start_step": start,
        "steps": tr.step,
        "aux_updates": tr.aux_updates,
        "resumed_from": args.resume.as_ref().map(|p| p.display().to_string()),
        "smoothing_window": SMOOTHING,
        "final_eval_mean": tr.evals.last().map(|e| e.mean()),
    });
    manifest.finish(&mut dir)
}
