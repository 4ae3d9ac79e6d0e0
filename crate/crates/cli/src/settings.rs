//! Hyperparameters from flags, a config file and built-in defaults.
//!
//! Every setting has a config key equal to its long flag name. Precedence is
//! flag, then config file, then any inherited snapshot (a manifest written by
//! an earlier stage), then the default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use sdiff::dataio::Format;
use sdiff::denoiser::{Activation, AdamConfig};
use sdiff::graph::LanczosConfig;
use sdiff::sampler::{EmptyConditionPolicy, SamplerConfig};
use sdiff::schedule::{ScheduleParams, Variant};
use sdiff::trainer::{DropoutMode, TrainConfig};

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Interaction file (`user item` per line, TSV or CSV).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Field separator of --data: tsv or csv (default: from the extension).
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Rank of the spectral basis.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub lanczos_iters: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub alpha_min: Option<f64>,
    #[arg(long, global = true)]
    pub sigma_max: Option<f64>,
    /// Schedule variant: vp, ve or iso. Repeatable where a command compares variants.
    #[arg(long = "variant", global = true)]
    pub variants: Vec<String>,
    #[arg(long, global = true)]
    pub guidance_s: Option<f64>,
    #[arg(long, global = true)]
    pub p_uncond: Option<f64>,
    #[arg(long, global = true)]
    pub p_mask: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Ranking cutoffs, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub topk: Vec<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Byte-reproducible outputs: no wall-clock times or timestamps.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Output directory (or file, for `snr` and `synth`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `key = value` file; keys are the long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Hidden width of the denoiser trunk.
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
    #[arg(long, global = true)]
    pub time_dim: Option<usize>,
    #[arg(long, global = true)]
    pub film_width: Option<usize>,
    /// tanh or silu.
    #[arg(long, global = true)]
    pub activation: Option<String>,
    /// Validation rounds without improvement before stopping.
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub eval_every: Option<usize>,
    /// per-example or per-batch.
    #[arg(long, global = true)]
    pub dropout: Option<String>,
    /// Sampling chains averaged per user.
    #[arg(long, global = true)]
    pub ensemble: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub format: Option<Format>,
    pub k: usize,
    pub lanczos_iters: usize,
    pub tau: f64,
    pub steps: usize,
    pub alpha_min: f64,
    pub sigma_max: f64,
    pub variants: Vec<Variant>,
    /// Whether any layer named a variant (otherwise `variants` is the default).
    pub variants_explicit: bool,
    pub guidance_s: f64,
    pub p_uncond: f64,
    pub p_mask: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub topk: Vec<usize>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
    pub hidden: usize,
    pub time_dim: usize,
    pub film_width: usize,
    pub activation: Activation,
    pub patience: usize,
    pub eval_every: usize,
    pub dropout: DropoutMode,
    pub ensemble: usize,
}

fn parse<T: FromStr>(key: &str, raw: &str) -> CliResult<T>
where
    T::Err: Display,
{
    raw.trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("bad value `{raw}` for `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

struct Layers {
    file: BTreeMap<String, String>,
    inherited: BTreeMap<String, String>,
}

impl Layers {
    fn raw(&mut self, key: &str) -> Option<String> {
        let f = self.file.remove(key);
        let i = self.inherited.remove(key);
        f.or(i)
    }

    fn get<T: FromStr>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        match (flag, self.raw(key)) {
            (Some(v), _) => Ok(v),
            (None, Some(raw)) => parse(key, &raw),
            (None, None) => Ok(default),
        }
    }

    fn get_opt<T: FromStr>(&mut self, key: &str, flag: Option<&str>) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        match flag.map(str::to_string).or(raw) {
            Some(raw) => parse(key, &raw).map(Some),
            None => Ok(None),
        }
    }

    fn get_list<T: FromStr + Clone>(&mut self, key: &str, flag: &[T], default: &[T]) -> CliResult<Vec<T>>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        match raw {
            Some(raw) => parse_list(key, &raw),
            None => Ok(default.to_vec()),
        }
    }
}

impl Settings {
    /// Resolves `opts` over `inherited` (lowest precedence besides defaults).
    pub fn resolve(opts: &Opts, inherited: BTreeMap<String, String>) -> CliResult<Self> {
        let file = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                sdiff::config::parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        let mut l = Layers { file, inherited };
        let variants: Vec<Variant> = opts
            .variants
            .iter()
            .map(|v| parse("variant", v))
            .collect::<CliResult<_>>()?;
        let variants_explicit =
            !variants.is_empty() || l.file.contains_key("variant") || l.inherited.contains_key("variant");
        let d = TrainConfig::default();
        let sched = ScheduleParams::default();
        let s = Settings {
            data: l.get_opt("data", opts.data.as_ref().and_then(|p| p.to_str()))?,
            format: l.get_opt("format", opts.format.as_deref())?,
            k: l.get("k", opts.k, 200)?,
            lanczos_iters: l.get("lanczos-iters", opts.lanczos_iters, 10)?,
            tau: l.get("tau", opts.tau, sched.tau)?,
            steps: l.get("steps", opts.steps, sched.steps)?,
            alpha_min: l.get("alpha-min", opts.alpha_min, sched.alpha_min)?,
            sigma_max: l.get("sigma-max", opts.sigma_max, sched.sigma_max)?,
            variants: l.get_list("variant", &variants, &[Variant::Vp])?,
            variants_explicit,
            guidance_s: l.get("guidance-s", opts.guidance_s, d.guidance)?,
            p_uncond: l.get("p-uncond", opts.p_uncond, d.p_uncond)?,
            p_mask: l.get("p-mask", opts.p_mask, d.p_mask)?,
            batch_size: l.get("batch-size", opts.batch_size, d.batch_size)?,
            lr: l.get("lr", opts.lr, d.adam.lr)?,
            epochs: l.get("epochs", opts.epochs, d.max_epochs)?,
            topk: l.get_list("topk", &opts.topk, &[10, 20])?,
            seed: l.get("seed", opts.seed, 0)?,
            threads: l.get_opt("threads", opts.threads.map(|t| t.to_string()).as_deref())?,
            deterministic: l.get("deterministic", opts.deterministic.then_some(true), false)?,
            out: l.get_opt("out", opts.out.as_ref().and_then(|p| p.to_str()))?,
            hidden: l.get("hidden", opts.hidden, d.hidden)?,
            time_dim: l.get("time-dim", opts.time_dim, d.time_dim)?,
            film_width: l.get("film-width", opts.film_width, d.film_width)?,
            activation: l.get_opt("activation", opts.activation.as_deref())?.unwrap_or(d.activation),
            patience: l.get("patience", opts.patience, d.patience)?,
            eval_every: l.get("eval-every", opts.eval_every, d.eval_every)?,
            dropout: l.get_opt("dropout", opts.dropout.as_deref())?.unwrap_or(d.dropout),
            ensemble: l.get("ensemble", opts.ensemble, 1)?,
        };
        if let Some(key) = l.file.keys().next() {
            return Err(CliError::Usage(format!("unknown config key `{key}`")));
        }
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> CliResult<()> {
        if self.threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        if self.topk.is_empty() || self.topk.contains(&0) {
            return Err(CliError::Usage("--topk needs positive cutoffs".into()));
        }
        if self.k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        self.schedule(self.variant()).validate()?;
        self.train_config().validate()?;
        self.sampler_config().validate()?;
        Ok(())
    }

    /// Wall-clock times and timestamps are omitted from artifacts.
    pub fn reproducible(&self) -> bool {
        self.deterministic || self.threads == Some(1)
    }

    pub fn variant(&self) -> Variant {
        self.variants[0]
    }

    pub fn data(&self) -> CliResult<&PathBuf> {
        self.data.as_ref().ok_or_else(|| CliError::Usage("--data is required".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("run"))
    }

    pub fn lanczos(&self) -> LanczosConfig {
        LanczosConfig {
            iterations: self.lanczos_iters,
            seed: self.seed,
            ..LanczosConfig::new(self.k)
        }
    }

    pub fn schedule(&self, variant: Variant) -> ScheduleParams {
        ScheduleParams {
            tau: self.tau,
            steps: self.steps,
            alpha_min: self.alpha_min,
            sigma_max: self.sigma_max,
            variant,
            ..ScheduleParams::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            max_epochs: self.epochs,
            p_uncond: self.p_uncond,
            p_mask: self.p_mask,
            dropout: self.dropout,
            eval_every: self.eval_every,
            patience: self.patience,
            seed: self.seed,
            hidden: self.hidden,
            time_dim: self.time_dim,
            film_width: self.film_width,
            activation: self.activation,
            guidance: self.guidance_s,
            record_wall_time: !self.reproducible(),
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            guidance: self.guidance_s,
            seed: self.seed,
            empty: EmptyConditionPolicy::Popularity,
            ensemble: self.ensemble,
        }
    }

    /// Snapshot in config-file form; feeding it back reproduces `self`.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        if let Some(d) = &self.data {
            put("data", d.display().to_string());
        }
        if let Some(f) = self.format {
            put("format", f.to_string());
        }
        put("k", self.k.to_string());
        put("lanczos-iters", self.lanczos_iters.to_string());
        put("tau", self.tau.to_string());
        put("steps", self.steps.to_string());
        put("alpha-min", self.alpha_min.to_string());
        put("sigma-max", self.sigma_max.to_string());
        if self.variants_explicit {
            put("variant", join(&self.variants));
        }
        put("guidance-s", self.guidance_s.to_string());
        put("p-uncond", self.p_uncond.to_string());
        put("p-mask", self.p_mask.to_string());
        put("batch-size", self.batch_size.to_string());
        put("lr", self.lr.to_string());
        put("epochs", self.epochs.to_string());
        put("topk", join(&self.topk));
        put("seed", self.seed.to_string());
        if let Some(t) = self.threads {
            put("threads", t.to_string());
        }
        put("deterministic", self.deterministic.to_string());
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        put("hidden", self.hidden.to_string());
        put("time-dim", self.time_dim.to_string());
        put("film-width", self.film_width.to_string());
        put("activation", self.activation.to_string());
        put("patience", self.patience.to_string());
        put("eval-every", self.eval_every.to_string());
        put("dropout", self.dropout.to_string());
        put("ensemble", self.ensemble.to_string());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults() {
        let s = Settings::resolve(&Opts::default(), BTreeMap::new()).unwrap();
        assert_eq!((s.k, s.lanczos_iters, s.steps, s.batch_size, s.epochs), (200, 10, 5, 100, 1000));
        assert_eq!((s.tau, s.guidance_s, s.p_uncond, s.p_mask, s.lr), (1.0, 0.02, 0.02, 0.5, 1e-4));
        assert_eq!(s.topk, vec![10, 20]);
        assert_eq!(s.variants, vec![Variant::Vp]);
    }

    #[test]
    fn flag_beats_file_beats_inherited() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "lr = 0.01\nsteps = 7\ntopk = 5,15\nvariant = iso").unwrap();
        let opts = Opts {
            config: Some(file.path().to_path_buf()),
            lr: Some(0.5),
            ..Opts::default()
        };
        let inherited = BTreeMap::from([("steps".to_string(), "9".to_string()), ("tau".to_string(), "2".to_string())]);
        let s = Settings::resolve(&opts, inherited).unwrap();
        assert_eq!(s.lr, 0.5);
        assert_eq!(s.steps, 7);
        assert_eq!(s.tau, 2.0);
        assert_eq!(s.topk, vec![5, 15]);
        assert_eq!(s.variants, vec![Variant::Iso]);
    }

    #[test]
    fn snapshot_round_trip() {
        let opts = Opts {
            variants: vec!["ve".into(), "iso".into()],
            seed: Some(9),
            activation: Some("silu".into()),
            dropout: Some("per-batch".into()),
            format: Some("csv".into()),
            ..Opts::default()
        };
        let s = Settings::resolve(&opts, BTreeMap::new()).unwrap();
        let again = Settings::resolve(&Opts::default(), s.to_map()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn unknown_key_and_bad_values() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "learning-rate = 0.1").unwrap();
        let opts = Opts {
            config: Some(file.path().to_path_buf()),
            ..Opts::default()
        };
        assert_eq!(Settings::resolve(&opts, BTreeMap::new()).unwrap_err().kind(), "usage");
        let opts = Opts {
            p_mask: Some(1.5),
            ..Opts::default()
        };
        assert_eq!(Settings::resolve(&opts, BTreeMap::new()).unwrap_err().kind(), "invalid-parameter");
        let opts = Opts {
            variants: vec!["xx".into()],
            ..Opts::default()
        };
        assert!(Settings::resolve(&opts, BTreeMap::new()).is_err());
    }
}
