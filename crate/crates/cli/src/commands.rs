use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vde::baselines::LinearProjection;
use vde::msm::{free_energy_histogram, FreeEnergyProfile};
use vde::pipeline::{cross_validate, score_projection, summarize, Method, Projector, SplitScore};
use vde::potentials::MullerBrownParams;
use vde::saliency::{saliency, TransitionSpec};
use vde::simulate::run_ensemble;
use vde::trajectory::{pool_frames, Trajectory};
use vde::vde::{VdeConfig, VdeModel};

use crate::config::RunConfig;
use crate::exit::ConfigError;
use crate::input::{load_frames, load_trajectories, Manifest, ManifestEntry, Model, MANIFEST};
use crate::output::{fmt, fmt_opt, OutDir};

fn trajectories_only(paths: &[PathBuf]) -> anyhow::Result<Vec<Trajectory>> {
    Ok(load_trajectories(paths)?.into_iter().map(|(_, t)| t).collect())
}

fn write_trajectory(out: &OutDir, name: &str, traj: &Trajectory) -> anyhow::Result<()> {
    out.write_with(name, |w| Ok(traj.write_csv(w)?))?;
    Ok(())
}

fn write_fes(out: &OutDir, name: &str, prof: &FreeEnergyProfile) -> anyhow::Result<()> {
    let centers = prof.bin_centers();
    let rows: Vec<Vec<String>> = (0..prof.n_bins())
        .map(|b| {
            vec![
                fmt(prof.bin_edges[b]),
                fmt(prof.bin_edges[b + 1]),
                fmt(centers[b]),
                prof.counts[b].to_string(),
                fmt_opt(prof.free_energy[b]),
            ]
        })
        .collect();
    out.write_csv(name, &["bin_left", "bin_right", "center", "count", "free_energy"], &rows)?;
    Ok(())
}

pub fn simulate(config: &RunConfig, out: &OutDir) -> anyhow::Result<()> {
    let trajs = run_ensemble(&MullerBrownParams::default(), &config.simulation)?;
    let mut files = Vec::with_capacity(trajs.len());
    for (i, t) in trajs.iter().enumerate() {
        let file = format!("traj_{i:03}.csv");
        write_trajectory(out, &file, t)?;
        files.push(ManifestEntry { file, n_frames: t.n_frames() });
    }
    out.write_json(
        MANIFEST,
        &Manifest { frame_interval: config.simulation.frame_interval(), files },
    )?;
    Ok(())
}

pub fn fit(config: &RunConfig, out: &OutDir, method: Method, paths: &[PathBuf]) -> anyhow::Result<()> {
    let trajs = trajectories_only(paths)?;
    match method {
        Method::Vde => {
            let model = VdeModel::fit_with_observer(config.vde.clone(), &trajs, |e| {
                eprintln!("epoch {:>4}  loss {:.6}", e.epoch, e.total);
            })?;
            out.write_with("model.json", |w| Ok(model.save(w)?))?;
            let rows: Vec<Vec<String>> = model
                .history
                .epochs
                .iter()
                .map(|e| {
                    vec![
                        e.epoch.to_string(),
                        e.batches.to_string(),
                        fmt(e.total),
                        fmt(e.reconstruction),
                        fmt(e.mse),
                        fmt(e.kl),
                        fmt_opt(e.autocorrelation),
                        e.autocorr_skipped.to_string(),
                    ]
                })
                .collect();
            out.write_csv(
                "history.csv",
                &["epoch", "batches", "total", "reconstruction", "mse", "kl", "autocorrelation", "autocorr_skipped"],
                &rows,
            )?;
        }
        Method::Tica | Method::Pca => {
            let p = fit_linear(config, method, &trajs)?;
            out.write_with("model.json", |w| Ok(p.save(w)?))?;
            let dt = trajs[0].frame_interval();
            let rows: Vec<Vec<String>> = p
                .eigenvalues
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let ts = match p.lag {
                        Some(lag) if l > 0.0 && l < 1.0 => fmt(-(lag as f64) * dt / l.ln()),
                        _ => String::new(),
                    };
                    vec![(i + 1).to_string(), fmt(l), ts]
                })
                .collect();
            out.write_csv("eigenvalues.csv", &["component", "eigenvalue", "timescale"], &rows)?;
        }
    }
    Ok(())
}

fn fit_linear(config: &RunConfig, method: Method, trajs: &[Trajectory]) -> vde::Result<LinearProjection> {
    match method {
        Method::Tica => {
            LinearProjection::fit_tica(trajs, config.tica.lag, config.tica.n_components, config.tica.ridge)
        }
        _ => LinearProjection::fit_pca(trajs, config.pca.n_components),
    }
}

fn fit_method(config: &RunConfig, method: Method, trajs: &[Trajectory], seed: u64) -> vde::Result<Model> {
    match method {
        Method::Vde => {
            let cfg = VdeConfig { rng_seed: config.vde.rng_seed.wrapping_add(seed), ..config.vde.clone() };
            VdeModel::fit(cfg, trajs).map(Model::Vde)
        }
        _ => fit_linear(config, method, trajs).map(Model::Linear),
    }
}

pub fn transform(out: &OutDir, model: &Path, paths: &[PathBuf]) -> anyhow::Result<()> {
    let model = Model::load(model)?;
    for (path, traj) in load_trajectories(paths)? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
        write_trajectory(out, &format!("latent_{stem}.csv"), &model.transform(&traj)?)?;
    }
    Ok(())
}

pub fn score(
    config: &RunConfig,
    out: &OutDir,
    methods: &[Method],
    models: &[(Method, PathBuf)],
    in_sample: bool,
    paths: &[PathBuf],
) -> anyhow::Result<()> {
    let trajs = trajectories_only(paths)?;
    let mut prefitted = HashMap::new();
    for (m, p) in models {
        if !methods.contains(m) {
            return Err(ConfigError(format!("--model given for {m}, which is not being scored")).into());
        }
        prefitted.insert(*m, Model::load(p)?);
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &method in methods {
        let scores: Vec<SplitScore> = if in_sample {
            let seed = config.split.seed;
            let s = match prefitted.get(&method) {
                Some(m) => score_projection(m, &trajs, &trajs, &config.msm, seed)?,
                None => {
                    let m = fit_method(config, method, &trajs, seed)?;
                    score_projection(&m, &trajs, &trajs, &config.msm, seed)?
                }
            };
            vec![SplitScore { split_seed: seed, score: s.score, dropped_states: s.dropped_states }]
        } else {
            match prefitted.get(&method) {
                Some(m) => cross_validate(&trajs, &config.split, &config.msm, |_, _| Ok(m))?,
                None => cross_validate(&trajs, &config.split, &config.msm, |tr, seed| {
                    fit_method(config, method, tr, seed)
                })?,
            }
        };
        for (i, s) in scores.iter().enumerate() {
            let dropped: Vec<String> = s.dropped_states.iter().map(|d| d.to_string()).collect();
            rows.push(vec![
                method.to_string(),
                i.to_string(),
                s.split_seed.to_string(),
                fmt(s.score),
                dropped.join(" "),
            ]);
        }
        let (mean, se) = summarize(&scores);
        eprintln!("{method}: GMRQ {mean:.4} ± {se:.4} over {} splits", scores.len());
        summary.push(vec![
            method.to_string(),
            scores.len().to_string(),
            fmt(mean),
            if se.is_nan() { String::new() } else { fmt(se) },
            prefitted.contains_key(&method).to_string(),
        ]);
    }
    out.write_csv("scores.csv", &["method", "split", "split_seed", "score", "dropped_states"], &rows)?;
    out.write_csv("summary.csv", &["method", "n_splits", "mean", "stderr", "prefitted"], &summary)?;
    Ok(())
}

fn first_coordinate(model: &impl Projector, traj: &Trajectory) -> vde::Result<Vec<f64>> {
    Ok(model.latents(traj)?.column(0).to_vec())
}

pub fn generate(config: &RunConfig, out: &OutDir, model: &Path, paths: &[PathBuf]) -> anyhow::Result<()> {
    let params = &config.generate;
    if params.alphas.is_empty() || params.n_starts == 0 || params.n_steps == 0 {
        return Err(ConfigError("generate needs alphas, n_starts and n_steps to be non-empty".into()).into());
    }
    let model = Model::load(model)?;
    let vde = model
        .vde()
        .ok_or_else(|| ConfigError("generate needs a VDE model".into()))?;
    let trajs = trajectories_only(paths)?;
    let pooled = pool_frames(&trajs)?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.rng_seed);
    let starts: Vec<Vec<f64>> = (0..params.n_starts)
        .map(|_| pooled.row(rng.random_range(0..pooled.nrows())).to_vec())
        .collect();

    let mut latents = Vec::with_capacity(params.alphas.len());
    let names = trajs[0].feature_names().to_vec();
    for (i, &alpha) in params.alphas.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(params.rng_seed.wrapping_add(1 + i as u64));
        let mut rows = Vec::with_capacity(params.n_starts * params.n_steps);
        let mut z = Vec::with_capacity(params.n_starts * params.n_steps);
        for (s, x0) in starts.iter().enumerate() {
            let t = vde.generate(x0, params.n_steps, alpha, &mut rng)?;
            z.extend(first_coordinate(vde, &t)?);
            for (step, frame) in t.frames().rows().into_iter().enumerate() {
                let mut r = vec![s.to_string(), (step + 1).to_string()];
                r.extend(frame.iter().map(|&v| fmt(v)));
                rows.push(r);
            }
        }
        let mut header = vec!["start", "step"];
        header.extend(names.iter().map(String::as_str));
        out.write_csv(&format!("generated_{i}.csv"), &header, &rows)?;
        latents.push(z);
    }

    // shared histogram range so the profiles are comparable across α
    let reference = first_coordinate(vde, &Trajectory::from_frames(pooled, 1.0)?)?;
    let (lo, hi) = latents
        .iter()
        .flatten()
        .chain(&reference)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut alpha_rows = Vec::new();
    for (i, (z, &alpha)) in latents.iter().zip(&params.alphas).enumerate() {
        let prof = free_energy_histogram(z, params.n_bins, params.kt, Some((lo, hi)))?;
        write_fes(out, &format!("fes_{i}.csv"), &prof)?;
        let support = prof.counts.iter().filter(|&&c| c > 0).count();
        alpha_rows.push(vec![i.to_string(), fmt(alpha), support.to_string()]);
    }
    let reference = free_energy_histogram(&reference, params.n_bins, params.kt, Some((lo, hi)))?;
    write_fes(out, "fes_reference.csv", &reference)?;
    out.write_csv("alphas.csv", &["index", "alpha", "occupied_bins"], &alpha_rows)?;
    Ok(())
}

pub fn salience(
    config: &RunConfig,
    out: &OutDir,
    model: &Path,
    sources: &Path,
    targets: &Path,
    groups: Option<&Path>,
) -> anyhow::Result<()> {
    let model = Model::load(model)?;
    let vde = model
        .vde()
        .ok_or_else(|| ConfigError("salience needs a VDE model".into()))?;
    let src = load_frames(sources)?;
    let tgt = load_frames(targets)?;
    let spec = TransitionSpec {
        sources: src.frames().to_owned(),
        targets: tgt.frames().to_owned(),
        pairing: config.salience.pairing,
    };
    let mut report = saliency(vde, &spec, src.feature_names())?;
    if let Some(g) = groups {
        let text = std::fs::read_to_string(g).with_context(|| format!("reading {}", g.display()))?;
        let map: HashMap<String, String> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", g.display()))?;
        report = report.with_groups(&map)?;
    }
    let rank = report.ranking();
    let mut position = vec![0; rank.len()];
    for (r, &i) in rank.iter().enumerate() {
        position[i] = r + 1;
    }
    let rows: Vec<Vec<String>> = report
        .feature_names
        .iter()
        .zip(&report.scores)
        .zip(&position)
        .map(|((n, &s), r)| vec![n.clone(), fmt(s), r.to_string()])
        .collect();
    out.write_csv("saliency.csv", &["feature", "score", "rank"], &rows)?;
    write_matrix(out, "gradients.csv", "transition", &report.feature_names, &report.gradients)?;
    if let Some(g) = &report.group_scores {
        let rows: Vec<Vec<String>> = g.iter().map(|(k, v)| vec![k.clone(), fmt(*v)]).collect();
        out.write_csv("group_saliency.csv", &["group", "score"], &rows)?;
    }
    Ok(())
}

fn write_matrix(out: &OutDir, name: &str, index: &str, cols: &[String], m: &Array2<f64>) -> anyhow::Result<()> {
    let mut header = vec![index];
    header.extend(cols.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = m
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| std::iter::once(i.to_string()).chain(r.iter().map(|&v| fmt(v))).collect())
        .collect();
    out.write_csv(name, &header, &rows)?;
    Ok(())
}

pub fn export_fes(
    config: &RunConfig,
    out: &OutDir,
    model: Option<&Path>,
    column: usize,
    paths: &[PathBuf],
) -> anyhow::Result<()> {
    let trajs = trajectories_only(paths)?;
    let mut values = Vec::new();
    match model {
        Some(p) => {
            let model = Model::load(p)?;
            for t in &trajs {
                values.extend(first_coordinate(&model, t)?);
            }
        }
        None => {
            for t in &trajs {
                if column >= t.n_features() {
                    return Err(ConfigError(format!(
                        "--column {column} out of range for {} features",
                        t.n_features()
                    ))
                    .into());
                }
                values.extend(t.column(column));
            }
        }
    }
    let prof = free_energy_histogram(&values, config.fes.n_bins, config.fes.kt, config.fes.range)?;
    write_fes(out, "fes.csv", &prof)
}
