use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sdiff::dataio::{
    hash_hex, load_interactions, parse_split_manifest, parse_user_list, write_split_manifest, DatasetSplit,
    InteractionMatrix, SplitTag,
};
use sdiff::denoiser::Checkpoint;
use sdiff::experiment::{popularity_test, prepare as prepare_split, train_and_test, Prepared};
use sdiff::graph::{build_basis, SpectralBasis};
use sdiff::metrics::{
    aggregate, evaluate as evaluate_metrics, metrics_csv, metrics_table, popularity_scores, recommend_topk,
    summary_table, Metrics, Popularity, Recommender, RunSummary,
};
use sdiff::sampler::DiffusionRecommender;
use sdiff::schedule::{NoiseSchedule, ScheduleParams, Variant};
use sdiff::synth::{genre_model, latent_model, two_block, GenreModel, LatentModel};
use sdiff::trainer::{log_csv, train as run_training, NoObserver, StopReason};

use crate::error::{io_err, CliError, CliResult};
use crate::manifest::{now_unix, read_verified, DataRecord, Manifest, Staged, StageRecord, MANIFEST_FILE};
use crate::settings::Settings;

pub const SPLIT_FILE: &str = "split.tsv";
pub const BASIS_FILE: &str = "basis.bin";
pub const USERS_FILE: &str = "users.txt";
pub const ITEMS_FILE: &str = "items.txt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const LAST_GOOD_FILE: &str = "model.last-good.ckpt";
pub const LOG_FILE: &str = "train_log.csv";
pub const RECS_FILE: &str = "recommendations.tsv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_TABLE_FILE: &str = "metrics.txt";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_TABLE_FILE: &str = "ablation.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

const USER_CHUNK: usize = 256;

fn stage_record(s: &Settings, started: Option<u64>) -> StageRecord {
    StageRecord {
        config: s.to_map(),
        seed: s.seed,
        started_unix: started,
        ..StageRecord::default()
    }
}

/// Stages `manifest.json` after the other outputs, with their hashes recorded.
fn finish(dir: &Path, mut manifest: Manifest, name: &str, mut rec: StageRecord, mut staged: Staged, s: &Settings) -> CliResult<()> {
    rec.outputs = staged.hashes();
    rec.finished_unix = now_unix(!s.reproducible());
    manifest.stages.insert(name.to_string(), rec);
    staged.add(dir.join(MANIFEST_FILE), manifest.to_json());
    staged.commit()
}

fn load_data(s: &Settings) -> CliResult<(PathBuf, InteractionMatrix)> {
    let path = s.data()?.clone();
    let m = load_interactions(&path, s.format)?;
    Ok((path, m))
}

fn data_record(path: &Path, m: &InteractionMatrix) -> DataRecord {
    DataRecord {
        path: path.display().to_string(),
        content_hash: hash_hex(&m.content_hash()),
        users: m.n_users(),
        items: m.n_items(),
        interactions: m.nnz(),
    }
}

fn id_lines(n: usize, get: impl Fn(u32) -> Option<String>) -> Vec<u8> {
    let mut out = String::new();
    for i in 0..n {
        out.push_str(&get(i as u32).unwrap_or_else(|| i.to_string()));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn prepare(s: &Settings) -> CliResult<()> {
    let started = now_unix(!s.reproducible());
    let dir = s.out_dir();
    let (path, m) = load_data(s)?;
    let Prepared { split, basis } = prepare_split(&m, s.seed, &s.lanczos())?;
    let mut split_bytes = Vec::new();
    write_split_manifest(&split, &mut split_bytes).map_err(io_err(SPLIT_FILE))?;

    let mut staged = Staged::default();
    staged.add(dir.join(SPLIT_FILE), split_bytes);
    staged.add(dir.join(BASIS_FILE), basis.to_bytes());
    staged.add(
        dir.join(USERS_FILE),
        id_lines(m.n_users(), |i| m.users().external(i).map(str::to_string)),
    );
    staged.add(
        dir.join(ITEMS_FILE),
        id_lines(m.n_items(), |i| m.items().external(i).map(str::to_string)),
    );

    let data = data_record(&path, &m);
    let mut rec = stage_record(s, started);
    rec.inputs.insert("data".into(), data.content_hash.clone());
    let manifest = Manifest {
        data: Some(data),
        ..Manifest::new()
    };
    finish(&dir, manifest, "prepare", rec, staged, s)?;

    let freqs = basis.frequencies();
    let max_res = basis.residuals().iter().cloned().fold(0.0, f64::max);
    println!(
        "prepared {} users x {} items ({} interactions); basis rank {}, d in [{:.6}, {:.6}], max residual {:.2e}",
        m.n_users(),
        m.n_items(),
        m.nnz(),
        basis.rank(),
        freqs.first().copied().unwrap_or(0.0),
        freqs.last().copied().unwrap_or(0.0),
        max_res
    );
    Ok(())
}

/// Split and basis from a prepared run directory, checked against the data.
struct Loaded {
    manifest: Manifest,
    split: DatasetSplit,
    basis: SpectralBasis,
    inputs: BTreeMap<String, String>,
}

fn load_prepared(dir: &Path, s: &Settings, check_data: bool) -> CliResult<Loaded> {
    let manifest = Manifest::load(dir)?;
    let prep = manifest.stage("prepare")?.clone();
    let recorded = manifest
        .data
        .clone()
        .ok_or_else(|| CliError::Usage("manifest has no data record".into()))?;
    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), recorded.content_hash.clone());
    let split_bytes = read_verified(dir, SPLIT_FILE, &prep)?;
    let split = parse_split_manifest(split_bytes.as_slice())?;
    if check_data {
        let (_, m) = load_data(s)?;
        let found = hash_hex(&m.content_hash());
        if found != recorded.content_hash {
            return Err(sdiff::Error::HashMismatch {
                expected: recorded.content_hash,
                found,
            }
            .into());
        }
        if !split.covers(&m) {
            return Err(sdiff::Error::HashMismatch {
                expected: "split covering the data".into(),
                found: "split of different interactions".into(),
            }
            .into());
        }
    }
    let basis_bytes = read_verified(dir, BASIS_FILE, &prep)?;
    let basis = SpectralBasis::from_bytes(&basis_bytes)?;
    for name in [SPLIT_FILE, BASIS_FILE] {
        if let Some(h) = prep.outputs.get(name) {
            inputs.insert(name.to_string(), h.clone());
        }
    }
    Ok(Loaded {
        manifest,
        split,
        basis,
        inputs,
    })
}

pub fn train(s: &Settings) -> CliResult<()> {
    let started = now_unix(!s.reproducible());
    let dir = s.out_dir();
    let loaded = load_prepared(&dir, s, true)?;
    let sched = NoiseSchedule::new(loaded.basis.frequencies(), s.schedule(s.variant()))?;
    let cfg = s.train_config();
    let outcome = match run_training(&cfg, &loaded.split, &loaded.basis, &sched, &mut NoObserver) {
        Ok(o) => o,
        Err(sdiff::Error::Diverged { epoch, last_good }) => {
            let path = dir.join(LAST_GOOD_FILE);
            std::fs::write(&path, last_good.to_bytes()).map_err(io_err(&path))?;
            return Err(sdiff::Error::Diverged { epoch, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let mut staged = Staged::default();
    staged.add(dir.join(MODEL_FILE), outcome.best.to_bytes());
    staged.add(dir.join(LOG_FILE), log_csv(&outcome.log).into_bytes());
    let mut rec = stage_record(s, started);
    rec.inputs = loaded.inputs;
    let mut manifest = loaded.manifest;
    for later in ["recommend", "evaluate"] {
        manifest.stages.remove(later);
    }
    finish(&dir, manifest, "train", rec, staged, s)?;

    let best = outcome.log.iter().find(|r| r.epoch == outcome.best_epoch);
    println!(
        "trained {} epochs ({}); best epoch {} with val R@10 {:.4}, N@10 {:.4}",
        outcome.log.len(),
        match outcome.stop {
            StopReason::MaxEpochs => "epoch limit",
            StopReason::EarlyStop => "early stop",
        },
        outcome.best_epoch,
        best.and_then(|r| r.val_recall).unwrap_or(f64::NAN),
        best.and_then(|r| r.val_ndcg).unwrap_or(f64::NAN),
    );
    Ok(())
}

struct Trained {
    loaded: Loaded,
    checkpoint: Checkpoint,
}

fn load_trained(dir: &Path, s: &Settings) -> CliResult<Trained> {
    let loaded = load_prepared(dir, s, false)?;
    let stage = loaded.manifest.stage("train")?.clone();
    let bytes = read_verified(dir, MODEL_FILE, &stage)?;
    let checkpoint = sdiff::denoiser::read_checkpoint(&bytes)?;
    if &checkpoint.basis_hash != loaded.basis.matrix_hash() {
        return Err(sdiff::Error::HashMismatch {
            expected: hash_hex(loaded.basis.matrix_hash()),
            found: hash_hex(&checkpoint.basis_hash),
        }
        .into());
    }
    Ok(Trained { loaded, checkpoint })
}

/// Config of the train stage, used as the inherited layer downstream.
pub fn trained_config(dir: &Path) -> CliResult<BTreeMap<String, String>> {
    let m = Manifest::load(dir)?;
    Ok(m.stage("train")?.config.clone())
}

/// Config of the prepare stage.
pub fn prepared_config(dir: &Path) -> CliResult<BTreeMap<String, String>> {
    let m = Manifest::load(dir)?;
    Ok(m.stage("prepare")?.config.clone())
}

fn read_user_ids(dir: &Path) -> CliResult<Vec<String>> {
    let path = dir.join(USERS_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn read_item_ids(dir: &Path) -> CliResult<Vec<String>> {
    let path = dir.join(ITEMS_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn recommend(s: &Settings, users_file: Option<&Path>) -> CliResult<()> {
    let started = now_unix(!s.reproducible());
    let dir = s.out_dir();
    let Trained { loaded, checkpoint } = load_trained(&dir, s)?;
    let (split, basis) = (&loaded.split, &loaded.basis);
    let user_ids = read_user_ids(&dir)?;
    let item_ids = read_item_ids(&dir)?;
    if user_ids.len() != split.n_users() || item_ids.len() != basis.n_items() {
        return Err(CliError::Usage("id lists do not match the prepared split".into()));
    }
    let users: Vec<usize> = match users_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let index: BTreeMap<&str, usize> = user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
            parse_user_list(&text)?
                .into_iter()
                .map(|u| {
                    index
                        .get(u.as_str())
                        .copied()
                        .ok_or_else(|| CliError::Usage(format!("unknown user id `{u}`")))
                })
                .collect::<CliResult<_>>()?
        }
        None => (0..split.n_users()).collect(),
    };
    let sched = NoiseSchedule::new(basis.frequencies(), s.schedule(s.variant()))?;
    let rec = DiffusionRecommender::new(&checkpoint.model, &sched, basis, s.sampler_config())?
        .with_popularity(popularity_scores(split));
    let k = *s.topk.iter().max().expect("validated non-empty");

    let mut out = String::from("user_id\titem_id\trank\tscore\n");
    for chunk in users.chunks(USER_CHUNK) {
        let histories: Vec<Vec<u32>> = chunk
            .iter()
            .map(|&u| {
                let mut h: Vec<u32> = [SplitTag::Train, SplitTag::Val, SplitTag::Test]
                    .iter()
                    .flat_map(|&t| split.held_out(t)[u].iter().copied())
                    .collect();
                h.sort_unstable();
                h
            })
            .collect();
        let scores = rec.score_users(chunk, &histories)?;
        for ((&u, hist), sc) in chunk.iter().zip(&histories).zip(&scores) {
            for (rank, item) in recommend_topk(sc, hist, k).into_iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{:.6}",
                    user_ids[u],
                    item_ids[item as usize],
                    rank + 1,
                    sc[item as usize]
                );
            }
        }
    }
    let mut staged = Staged::default();
    staged.add(dir.join(RECS_FILE), out.into_bytes());
    let mut rec_stage = stage_record(s, started);
    rec_stage.inputs = loaded.inputs.clone();
    if let Some(h) = loaded.manifest.stage("train")?.outputs.get(MODEL_FILE) {
        rec_stage.inputs.insert(MODEL_FILE.into(), h.clone());
    }
    finish(&dir, loaded.manifest, "recommend", rec_stage, staged, s)?;
    println!("wrote top-{k} lists for {} users to {}", users.len(), dir.join(RECS_FILE).display());
    Ok(())
}

pub fn evaluate(s: &Settings, runs: usize) -> CliResult<()> {
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let started = now_unix(!s.reproducible());
    let dir = s.out_dir();
    let Trained { loaded, checkpoint } = load_trained(&dir, s)?;
    let (split, basis) = (&loaded.split, &loaded.basis);
    let variant = s.variant();
    let sched = NoiseSchedule::new(basis.frequencies(), s.schedule(variant))?;
    let pop_scores = popularity_scores(split);
    let mut results = Vec::with_capacity(runs);
    let mut labels = Vec::with_capacity(runs);
    for r in 0..runs {
        let mut cfg = s.sampler_config();
        cfg.seed = s.seed.wrapping_add(r as u64);
        labels.push(format!("s-diff-{variant}/seed{}", cfg.seed));
        let rec = DiffusionRecommender::new(&checkpoint.model, &sched, basis, cfg)?.with_popularity(pop_scores.clone());
        results.push(evaluate_metrics(split, SplitTag::Test, &s.topk, &rec)?);
    }
    let pop = evaluate_metrics(split, SplitTag::Test, &s.topk, &Popularity::new(split))?;

    let mut rows: Vec<(String, &Metrics)> = labels.into_iter().zip(&results).collect();
    rows.push(("popularity".into(), &pop));
    let summary = aggregate(&results)?;
    let pop_summary = aggregate(std::slice::from_ref(&pop))?;
    let mut table = metrics_table(&rows);
    table.push('\n');
    table.push_str(&summary_table(&[
        (format!("s-diff-{variant}"), &summary),
        ("popularity".into(), &pop_summary),
    ]));

    let mut staged = Staged::default();
    staged.add(dir.join(METRICS_FILE), metrics_csv(&rows).into_bytes());
    staged.add(dir.join(METRICS_TABLE_FILE), table.clone().into_bytes());
    let mut rec = stage_record(s, started);
    rec.inputs = loaded.inputs.clone();
    if let Some(h) = loaded.manifest.stage("train")?.outputs.get(MODEL_FILE) {
        rec.inputs.insert(MODEL_FILE.into(), h.clone());
    }
    finish(&dir, loaded.manifest, "evaluate", rec, staged, s)?;
    print!("{table}");
    Ok(())
}

/// Frequencies for the `snr` table: from a basis file, from data, or a uniform grid on `[0, 2]`.
fn snr_frequencies(s: &Settings, basis: Option<&Path>, points: usize) -> CliResult<Vec<f64>> {
    if let Some(path) = basis {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        return Ok(SpectralBasis::from_bytes(&bytes)?.frequencies().to_vec());
    }
    if s.data.is_some() {
        let (_, m) = load_data(s)?;
        let lanczos = sdiff::graph::LanczosConfig {
            rank: s.k.min(m.n_items()),
            ..s.lanczos()
        };
        return Ok(build_basis(&m, &lanczos)?.frequencies().to_vec());
    }
    if points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    Ok((0..points).map(|j| 2.0 * j as f64 / (points - 1) as f64).collect())
}

pub fn snr_csv(s: &Settings, freqs: &[f64]) -> CliResult<String> {
    let variants: Vec<Variant> = if s.variants_explicit {
        s.variants.clone()
    } else {
        Variant::ALL.to_vec()
    };
    let mut out = String::from("variant,t,frequency_index,d,alpha,sigma,snr,bound\n");
    for v in variants {
        let sched = NoiseSchedule::new(freqs, s.schedule(v))?;
        for t in sched.time_grid() {
            let (alpha, sigma) = sched.alpha_sigma_at(t)?;
            let (snr, bound) = sched.snr(t)?;
            for (j, d) in freqs.iter().enumerate() {
                let _ = writeln!(out, "{v},{t},{j},{d},{},{},{:e},{bound:e}", alpha[j], sigma[j], snr[j]);
            }
        }
    }
    Ok(out)
}

pub fn snr(s: &Settings, basis: Option<&Path>, points: usize) -> CliResult<()> {
    let freqs = snr_frequencies(s, basis, points)?;
    let csv = snr_csv(s, &freqs)?;
    match &s.out {
        Some(path) => {
            let mut staged = Staged::default();
            staged.add(path.clone(), csv.into_bytes());
            staged.commit()
        }
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(io_err("<stdout>")),
    }
}

fn prepare_in_memory(s: &Settings) -> CliResult<(PathBuf, InteractionMatrix, Prepared)> {
    let (path, m) = load_data(s)?;
    let prep = prepare_split(&m, s.seed, &s.lanczos())?;
    Ok((path, m, prep))
}

fn ablation_outputs(rows: &[(Variant, u64, Metrics, usize)], pop: &Metrics) -> CliResult<(String, String)> {
    let mut csv = String::from("variant,seed,k,recall,ndcg,users,best_epoch\n");
    for (v, seed, m, best) in rows {
        for (j, k) in m.ks.iter().enumerate() {
            let _ = writeln!(csv, "{v},{seed},{k},{:.6},{:.6},{},{best}", m.recall[j], m.ndcg[j], m.n_users());
        }
    }
    for (j, k) in pop.ks.iter().enumerate() {
        let _ = writeln!(csv, "popularity,,{k},{:.6},{:.6},{},", pop.recall[j], pop.ndcg[j], pop.n_users());
    }
    let mut order: Vec<Variant> = Vec::new();
    for (v, ..) in rows {
        if !order.contains(v) {
            order.push(*v);
        }
    }
    let mut summaries: Vec<(String, RunSummary)> = Vec::new();
    for v in order {
        let runs: Vec<Metrics> = rows.iter().filter(|r| r.0 == v).map(|r| r.2.clone()).collect();
        summaries.push((format!("s-diff-{v}"), aggregate(&runs)?));
    }
    summaries.push(("popularity".into(), aggregate(std::slice::from_ref(pop))?));
    let refs: Vec<(String, &RunSummary)> = summaries.iter().map(|(l, r)| (l.clone(), r)).collect();
    Ok((csv, summary_table(&refs)))
}

pub fn ablate(s: &Settings, seeds: usize) -> CliResult<()> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let started = now_unix(!s.reproducible());
    let dir = s.out_dir();
    let (path, m, prep) = prepare_in_memory(s)?;
    let variants: Vec<Variant> = if s.variants_explicit {
        s.variants.clone()
    } else {
        Variant::ALL.to_vec()
    };
    let mut rows = Vec::new();
    for i in 0..seeds {
        let seed = s.seed.wrapping_add(i as u64);
        for &v in &variants {
            let mut cfg = s.train_config();
            cfg.seed = seed;
            let mut sampler = s.sampler_config();
            sampler.seed = seed;
            let run = train_and_test(&prep, s.schedule(v), &cfg, sampler, &s.topk)?;
            eprintln!(
                "{v} seed {seed}: R@{} {:.4} (best epoch {})",
                run.test.ks[0], run.test.recall[0], run.outcome.best_epoch
            );
            rows.push((v, seed, run.test, run.outcome.best_epoch));
        }
    }
    let pop = popularity_test(&prep, &s.topk)?;
    let (csv, table) = ablation_outputs(&rows, &pop)?;
    let mut staged = Staged::default();
    staged.add(dir.join(ABLATION_FILE), csv.into_bytes());
    staged.add(dir.join(ABLATION_TABLE_FILE), table.clone().into_bytes());
    let data = data_record(&path, &m);
    let mut rec = stage_record(s, started);
    rec.inputs.insert("data".into(), data.content_hash.clone());
    let manifest = match Manifest::load(&dir) {
        Ok(existing) if existing.data.as_ref() == Some(&data) => existing,
        _ => Manifest {
            data: Some(data),
            ..Manifest::new()
        },
    };
    finish(&dir, manifest, "ablate", rec, staged, s)?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    /// `(α_min, σ_max)` pairs.
    Schedule { alpha_mins: Vec<f64>, sigma_maxs: Vec<f64> },
    /// Basis ranks, each a truncation of one basis of the largest rank.
    Rank { ranks: Vec<usize> },
}

pub fn sweep(s: &Settings, grid: &SweepGrid) -> CliResult<()> {
    let started = now_unix(!s.reproducible());
    let dir = s.out_dir();
    let variant = s.variant();
    let mut csv = String::new();
    let (path, m) = match grid {
        SweepGrid::Schedule { alpha_mins, sigma_maxs } => {
            if alpha_mins.is_empty() || sigma_maxs.is_empty() {
                return Err(CliError::Usage("--alpha-mins and --sigma-maxs need values".into()));
            }
            let (path, m, prep) = prepare_in_memory(s)?;
            csv.push_str("variant,alpha_min,sigma_max,k,recall,ndcg,best_epoch\n");
            for &a in alpha_mins {
                for &sg in sigma_maxs {
                    let params = ScheduleParams {
                        alpha_min: a,
                        sigma_max: sg,
                        ..s.schedule(variant)
                    };
                    let run = train_and_test(&prep, params, &s.train_config(), s.sampler_config(), &s.topk)?;
                    for (j, k) in run.test.ks.iter().enumerate() {
                        let _ = writeln!(
                            csv,
                            "{variant},{a},{sg},{k},{:.6},{:.6},{}",
                            run.test.recall[j], run.test.ndcg[j], run.outcome.best_epoch
                        );
                    }
                    eprintln!("alpha_min {a} sigma_max {sg}: R@{} {:.4}", run.test.ks[0], run.test.recall[0]);
                }
            }
            (path, m)
        }
        SweepGrid::Rank { ranks } => {
            let max = *ranks
                .iter()
                .max()
                .ok_or_else(|| CliError::Usage("--ranks needs values".into()))?;
            if ranks.contains(&0) {
                return Err(CliError::Usage("ranks must be positive".into()));
            }
            let (path, m) = load_data(s)?;
            let lanczos = sdiff::graph::LanczosConfig {
                rank: max,
                ..s.lanczos()
            };
            let full = prepare_split(&m, s.seed, &lanczos)?;
            csv.push_str("variant,rank,k,recall,ndcg,best_epoch\n");
            for &r in ranks {
                let prep = Prepared {
                    split: full.split.clone(),
                    basis: full.basis.truncate(r)?,
                };
                let run = train_and_test(&prep, s.schedule(variant), &s.train_config(), s.sampler_config(), &s.topk)?;
                for (j, k) in run.test.ks.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{variant},{r},{k},{:.6},{:.6},{}",
                        run.test.recall[j], run.test.ndcg[j], run.outcome.best_epoch
                    );
                }
                eprintln!("rank {r}: R@{} {:.4}", run.test.ks[0], run.test.recall[0]);
            }
            (path, m)
        }
    };
    let mut staged = Staged::default();
    staged.add(dir.join(SWEEP_FILE), csv.clone().into_bytes());
    let data = data_record(&path, &m);
    let mut rec = stage_record(s, started);
    rec.inputs.insert("data".into(), data.content_hash.clone());
    let manifest = match Manifest::load(&dir) {
        Ok(existing) if existing.data.as_ref() == Some(&data) => existing,
        _ => Manifest {
            data: Some(data),
            ..Manifest::new()
        },
    };
    finish(&dir, manifest, "sweep", rec, staged, s)?;
    print!("{csv}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    TwoBlock,
    Genre,
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthScale {
    Ml100k,
    Ml1m,
}

pub struct SynthArgs {
    pub kind: SynthKind,
    pub scale: SynthScale,
    pub users: usize,
    pub items: usize,
    pub base: usize,
}

pub fn synth(s: &Settings, a: &SynthArgs) -> CliResult<()> {
    let m = match a.kind {
        SynthKind::TwoBlock => two_block(a.users, a.items, a.base, s.seed)?,
        SynthKind::Genre => {
            let p = match a.scale {
                SynthScale::Ml100k => GenreModel::ml100k(),
                SynthScale::Ml1m => GenreModel::ml1m(),
            };
            genre_model(&p, s.seed)?
        }
        SynthKind::Latent => {
            let p = match a.scale {
                SynthScale::Ml100k => LatentModel::ml100k(),
                SynthScale::Ml1m => LatentModel::ml1m(),
            };
            latent_model(&p, s.seed)?
        }
    };
    let mut out = String::with_capacity(m.nnz() * 10);
    for u in 0..m.n_users() {
        for &i in m.row(u) {
            let _ = writeln!(out, "{u}\t{i}");
        }
    }
    match &s.out {
        Some(path) => {
            let mut staged = Staged::default();
            staged.add(path.clone(), out.into_bytes());
            staged.commit()?;
            eprintln!(
                "wrote {} interactions ({} users, {} items) to {}",
                m.nnz(),
                m.n_users(),
                m.n_items(),
                path.display()
            );
            Ok(())
        }
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(io_err("<stdout>")),
    }
}
