use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use lutharm_core::dataset::{lut_pairwise_distance, select_diverse_luts, synthesize_dataset};
use lutharm_core::io::{self, LoadOptions};
use lutharm_core::lutopt::{fit_lut_gd, fit_lut_ls_oracle, mapping_error};
use lutharm_core::metrics::{plackett_luce_scores, MetricReport};
use lutharm_core::pipeline::{
    collect_pairs, harmonize_video, harmonizer_by_name, neighbor_window, Harmonizer, PipelineConfig,
};
use lutharm_core::temporal::{select_eval_pairs, temporal_loss, FramePair};
use lutharm_core::{apply_lut, fit_lut_heuristic, invalid_ratio, Frame, FusionPolicy, Mask, VideoSample};

use crate::input::{load_lut_pool, load_samples};
use crate::{
    ApplyLutArgs, Command, EvalArgs, FitLutArgs, Format, Fusion, HarmonizeArgs, MakeCompositeArgs, Method,
    PlScoresArgs, SelectLutsArgs, TemporalLossArgs,
};

pub fn run(command: &Command, format: Format) -> Result<()> {
    let report = match command {
        Command::FitLut(a) => fit_lut(a)?,
        Command::ApplyLut(a) => apply(a)?,
        Command::Harmonize(a) => harmonize(a)?,
        Command::MakeComposite(a) => make_composite(a)?,
        Command::SelectLuts(a) => select_luts(a)?,
        Command::Eval(a) => eval(a)?,
        Command::TemporalLoss(a) => temporal(a)?,
        Command::PlScores(a) => pl_scores(a)?,
    };
    match format {
        Format::Text => print!("{}", report.text),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report.json)?),
    }
    Ok(())
}

/// A command's result in both output formats.
struct Report {
    text: String,
    json: serde_json::Value,
}

/// Replays the sample's stored `harmonized/` frames on the foreground.
struct StoredHarmonizer(Vec<Frame>);

impl Harmonizer for StoredHarmonizer {
    fn name(&self) -> &str {
        "stored"
    }

    fn harmonize(&self, index: usize, frame: &Frame, mask: &Mask) -> lutharm_core::Result<Frame> {
        let stored = self.0.get(index).ok_or_else(|| {
            lutharm_core::Error::InvalidParameter(format!("no stored harmonized frame {index}"))
        })?;
        let mut out = frame.clone();
        for i in mask.foreground_indices() {
            out.set_at(i, stored.at(i));
        }
        Ok(out)
    }
}

fn pick_harmonizer(name: &str, sample: &VideoSample, stored: Option<&[Frame]>) -> Result<Box<dyn Harmonizer>> {
    if name == "stored" {
        let frames = stored.ok_or_else(|| anyhow!("sample has no harmonized/ frames for --harmonizer stored"))?;
        return Ok(Box::new(StoredHarmonizer(frames.to_vec())));
    }
    Ok(harmonizer_by_name(name, sample.ground_truth.as_deref())?)
}

fn fit_lut(a: &FitLutArgs) -> Result<Report> {
    let loaded = io::read_sample(&a.sample, LoadOptions::default())?;
    let sample = &loaded.sample;
    ensure!(a.frame < sample.len(), "frame {} outside a {}-frame sample", a.frame, sample.len());
    ensure!(a.bins >= 1, "--b must be at least 1");
    let name = a.harmonizer.clone().unwrap_or_else(|| "stored".into());
    let h = pick_harmonizer(&name, sample, loaded.harmonized.as_deref())?;
    let harmonized = (0..sample.len())
        .into_par_iter()
        .map(|i| h.harmonize(i, &sample.frames[i], &sample.masks[i]))
        .collect::<lutharm_core::Result<Vec<_>>>()?;
    let window = neighbor_window(a.frame, a.neighbors, sample.len());
    let pairs = collect_pairs(sample, &harmonized, &window)?;
    let lut = match a.method {
        Method::Heuristic => fit_lut_heuristic(&pairs, a.bins)?,
        Method::Gd => fit_lut_gd(&pairs, a.bins, a.steps, a.step_size)?,
        Method::Ls => fit_lut_ls_oracle(&pairs, a.bins)?,
    };
    io::write_lut(&a.out, &lut)?;
    let me = if pairs.is_empty() {
        None
    } else {
        mapping_error(&lut, &pairs).ok()
    };
    let method = format!("{:?}", a.method).to_lowercase();
    let mut text = String::new();
    writeln!(text, "frame {} window {:?}", a.frame, window)?;
    writeln!(text, "method {method}, bins {}, harmonizer {name}", a.bins)?;
    writeln!(text, "pairs {}, null entries {} of {}", pairs.len(), lut.null_count(), lut.len())?;
    match me {
        Some(v) => writeln!(text, "mapping error {v:.6}")?,
        None => writeln!(text, "mapping error n/a")?,
    }
    writeln!(text, "wrote {}", a.out.display())?;
    Ok(Report {
        text,
        json: json!({
            "frame": a.frame,
            "window": window,
            "method": method,
            "bins": a.bins,
            "harmonizer": name,
            "pairs": pairs.len(),
            "null_entries": lut.null_count(),
            "entries": lut.len(),
            "mapping_error": me,
            "out": a.out,
        }),
    })
}

fn apply(a: &ApplyLutArgs) -> Result<Report> {
    let lut = io::read_lut(&a.lut)?;
    let frames = io::read_frame_seq(&a.input, None)?;
    ensure!(!frames.is_empty(), "{}: no frames", a.input.display());
    let masks = match &a.masks {
        Some(dir) => io::read_mask_seq(dir, Some(frames.len()))?,
        None => frames.iter().map(|f| Mask::filled(f.width(), f.height(), true)).collect(),
    };
    let results = frames
        .par_iter()
        .zip(&masks)
        .map(|(f, m)| {
            let r = apply_lut(&lut, f, m, Some(f))?;
            let ratio = if m.foreground_count() == 0 { 0.0 } else { invalid_ratio(&r, m)? };
            Ok((r.frame, ratio))
        })
        .collect::<lutharm_core::Result<Vec<_>>>()?;
    let (out_frames, ratios): (Vec<Frame>, Vec<f64>) = results.into_iter().unzip();
    io::write_frame_seq(&a.out, &out_frames)?;
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let mut text = String::new();
    for (i, r) in ratios.iter().enumerate() {
        writeln!(text, "{} invalid ratio {r:.6}", io::frame_file(i, "png"))?;
    }
    writeln!(text, "mean invalid ratio {mean:.6} over {} frames", ratios.len())?;
    Ok(Report {
        text,
        json: json!({ "invalid_ratios": ratios, "mean_invalid_ratio": mean, "out": a.out }),
    })
}

fn harmonize(a: &HarmonizeArgs) -> Result<Report> {
    let opts = LoadOptions {
        resize: a.resize.map(|n| (n, n)),
    };
    let loaded = io::read_sample(&a.sample, opts)?;
    let sample = &loaded.sample;
    let h = pick_harmonizer(&a.harmonizer, sample, loaded.harmonized.as_deref())?;
    ensure!(a.bins >= 1, "--b must be at least 1");
    let fusion = match a.fusion {
        Fusion::Lut => FusionPolicy::LutOnly,
        Fusion::Harm => FusionPolicy::HarmonizerOnly,
        Fusion::Blend => FusionPolicy::blend(a.alpha)?,
    };
    let config = PipelineConfig {
        neighbors: a.neighbors,
        bins: a.bins,
        fusion,
    };
    let out = harmonize_video(sample, h.as_ref(), &config)?;
    let summary = &out.summary;
    if let Some(dir) = &a.out {
        io::write_frame_seq(dir, &out.refined())?;
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(summary)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let mut text = String::new();
    writeln!(
        text,
        "sample {}: {} frames, harmonizer {}, T={}, B={}, fusion {:?}",
        summary.sample_id,
        sample.len(),
        summary.harmonizer,
        summary.neighbors,
        summary.bins,
        summary.fusion
    )?;
    writeln!(text, "mean invalid ratio {:.6}", summary.mean_invalid_ratio)?;
    writeln!(text, "mean lut fit+apply time {:.6} s", summary.mean_lut_seconds)?;
    if let Some(r) = &summary.report {
        text.push_str(&r.to_table());
    }
    if let Some(dir) = &a.out {
        writeln!(text, "wrote {}", dir.display())?;
    }
    Ok(Report {
        text,
        json: serde_json::to_value(summary)?,
    })
}

fn make_composite(a: &MakeCompositeArgs) -> Result<Report> {
    let luts = load_lut_pool(&a.luts)?;
    let reals: Vec<VideoSample> = load_samples(&a.real)?
        .into_iter()
        .map(|l| {
            let mut s = l.sample;
            if let Some(gt) = s.ground_truth.take() {
                s.frames = gt;
            }
            s
        })
        .collect();
    let (samples, manifest) = synthesize_dataset(&reals, &luts, a.seed)?;
    for (s, e) in samples.iter().zip(&manifest.entries) {
        io::write_sample(a.out.join(&s.id), s, Some(&e.lut_id), None)?;
    }
    let path = a.out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    let mut text = String::new();
    for e in &manifest.entries {
        writeln!(text, "{} <- {} ({} frames)", e.sample_id, e.lut_id, e.frames)?;
    }
    writeln!(text, "wrote {} samples to {}", samples.len(), a.out.display())?;
    Ok(Report {
        text,
        json: serde_json::to_value(&manifest)?,
    })
}

fn select_luts(a: &SelectLutsArgs) -> Result<Report> {
    let pool = load_lut_pool(&a.luts)?;
    ensure!(a.k <= pool.len(), "--k {} exceeds the pool of {} luts", a.k, pool.len());
    let mut probes = Vec::new();
    for l in load_samples(&a.probes)? {
        let s = l.sample;
        let frames = s.ground_truth.unwrap_or(s.frames);
        probes.extend(frames.into_iter().zip(s.masks));
    }
    let luts: Vec<_> = pool.iter().map(|n| n.lut.clone()).collect();
    let distance = lut_pairwise_distance(&luts, &probes)?;
    let kept = select_diverse_luts(&distance, a.k)?;
    let ids: Vec<&str> = kept.iter().map(|&i| pool[i].id.as_str()).collect();
    let mut list = String::new();
    for id in &ids {
        writeln!(list, "{id}")?;
    }
    if let Some(p) = &a.out {
        std::fs::write(p, &list).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(Report {
        text: list,
        json: json!({ "kept": ids, "pool": pool.len(), "probes": probes.len() }),
    })
}

fn eval(a: &EvalArgs) -> Result<Report> {
    let preds = io::read_frame_seq(&a.pred, None)?;
    ensure!(!preds.is_empty(), "{}: no frames", a.pred.display());
    let gts = io::read_frame_seq(&a.gt, Some(preds.len()))?;
    let masks = io::read_mask_seq(&a.masks, Some(preds.len()))?;
    let report = MetricReport::evaluate(&preds, &gts, &masks)?;
    Ok(Report {
        text: report.to_table(),
        json: serde_json::to_value(&report)?,
    })
}

fn temporal(a: &TemporalLossArgs) -> Result<Report> {
    let gts = io::read_frame_seq(&a.gt, None)?;
    ensure!(gts.len() >= 2, "{}: need at least 2 frames", a.gt.display());
    let n = gts.len();
    let preds = io::read_frame_seq(&a.pred, Some(n))?;
    let masks = io::read_mask_seq(&a.masks, Some(n))?;
    let flows = io::read_flow_seq(&a.flows, Some(n - 1))?;
    let pairs: Vec<FramePair> = (0..n - 1)
        .map(|i| FramePair {
            prev: &gts[i],
            next: &gts[i + 1],
            prev_mask: &masks[i],
            flow: &flows[i],
        })
        .collect();
    let selected = select_eval_pairs(&pairs, a.threshold, a.lambda)?;
    let mut rows = Vec::with_capacity(selected.len());
    for s in &selected {
        let i = s.index;
        let m = pairs[i].propagated_mask(a.lambda)?;
        let tl = temporal_loss(&preds[i], &preds[i + 1], &flows[i], &m)?;
        rows.push((i, s.ground_truth_loss, tl));
    }
    let mean = if rows.is_empty() {
        None
    } else {
        Some(rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64)
    };
    let mut text = format!("{:>6} {:>12} {:>12}\n", "pair", "gt_tl", "tl");
    for (i, g, t) in &rows {
        writeln!(text, "{:>6} {g:>12.4} {t:>12.4}", format!("{i}-{}", i + 1))?;
    }
    match mean {
        Some(m) => writeln!(text, "mean TL {m:.4} over {} of {} pairs", rows.len(), n - 1)?,
        None => writeln!(text, "no pair has ground-truth TL <= {}", a.threshold)?,
    }
    Ok(Report {
        text,
        json: json!({
            "pairs": rows.iter().map(|(i, g, t)| json!({"index": i, "ground_truth_loss": g, "loss": t})).collect::<Vec<_>>(),
            "mean": mean,
            "candidates": n - 1,
            "threshold": a.threshold,
            "lambda": a.lambda,
        }),
    })
}

/// Parses one ranking per line of 1-based ids separated by spaces or
/// commas. Blank lines and `#` comments are skipped.
fn parse_rankings(text: &str, path: &Path) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ranking = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| match t.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(anyhow!("{}:{}: invalid item id {t:?}", path.display(), n + 1)),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ranking);
    }
    if out.is_empty() {
        bail!("{}: no rankings", path.display());
    }
    Ok(out)
}

fn pl_scores(a: &PlScoresArgs) -> Result<Report> {
    let text = std::fs::read_to_string(&a.rankings).with_context(|| format!("reading {}", a.rankings.display()))?;
    let rankings = parse_rankings(&text, &a.rankings)?;
    let scores = plackett_luce_scores(&rankings)?;
    let mut out = format!("{:>6} {:>10}\n", "item", "score");
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{:>6} {s:>10.6}", i + 1)?;
    }
    Ok(Report {
        text: out,
        json: json!({ "rankings": rankings.len(), "scores": scores }),
    })
}
