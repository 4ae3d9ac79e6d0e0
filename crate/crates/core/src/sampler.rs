//! Reverse sampling with guidance blending.
//!
//! Starting from `v_T = α_T ⊙ Uᵀc + σ_T ⊙ ε`, each grid time `t` (descending
//! from `τ` to `τ/T`) predicts `v̂_0 = (1 - s)·φ(v_t, Uᵀc, t) + s·φ(v_t, 0, t)`
//! and re-noises it to the previous grid point. The last prediction is mapped
//! back to item space with `U`.

use std::cell::Cell;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::denoiser::Denoiser;
use crate::error::{check_dim, Error, Result};
use crate::graph::SpectralBasis;
use crate::metrics::Recommender;
use crate::schedule::NoiseSchedule;

/// What to do for a user whose condition vector is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyConditionPolicy {
    Popularity,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Weight `s` on the unconditional estimate.
    pub guidance: f64,
    pub seed: u64,
    pub empty: EmptyConditionPolicy,
    /// Number of independent chains averaged per user.
    pub ensemble: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            guidance: 0.02,
            seed: 0,
            empty: EmptyConditionPolicy::Popularity,
            ensemble: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.guidance) {
            return Err(Error::InvalidParameter(format!(
                "guidance weight must lie in [0, 1], got {}",
                self.guidance
            )));
        }
        if self.ensemble == 0 {
            return Err(Error::InvalidParameter("ensemble size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-example denoiser evaluations, split by branch.
#[derive(Debug, Default)]
pub struct EvalCounters {
    conditional: Cell<u64>,
    unconditional: Cell<u64>,
}

impl EvalCounters {
    pub fn conditional(&self) -> u64 {
        self.conditional.get()
    }

    pub fn unconditional(&self) -> u64 {
        self.unconditional.get()
    }

    pub fn reset(&self) {
        self.conditional.set(0);
        self.unconditional.set(0);
    }

    fn add(&self, cell: &Cell<u64>, n: usize) {
        cell.set(cell.get() + n as u64);
    }
}

fn to_f32(a: &Array2<f64>) -> Array2<f32> {
    a.mapv(|x| x as f32)
}

/// Runs the reverse recursion for a batch of spectral conditions (rows),
/// one noise stream per row. Returns the final `v̂_0` rows.
fn reverse_batch<R: Rng>(
    model: &Denoiser<f32>,
    sched: &NoiseSchedule,
    cond: &Array2<f64>,
    guidance: f64,
    rngs: &mut [R],
    counters: &EvalCounters,
) -> Result<Array2<f64>> {
    let (b, k) = cond.dim();
    check_dim(model.rank(), k)?;
    check_dim(sched.rank(), k)?;
    check_dim(b, rngs.len())?;
    let renoise = |v0: &Array2<f64>, t: f64, rngs: &mut [R]| -> Result<Array2<f64>> {
        let (alpha, sigma) = sched.alpha_sigma_at(t)?;
        let mut out = v0.clone();
        for (mut row, rng) in out.axis_iter_mut(Axis(0)).zip(rngs.iter_mut()) {
            for j in 0..k {
                let eps: f64 = rng.sample(StandardNormal);
                row[j] = alpha[j] * row[j] + sigma[j] * eps;
            }
        }
        Ok(out)
    };
    let grid = sched.time_grid();
    let cond32 = to_f32(cond);
    let zeros = Array2::<f32>::zeros((b, k));
    let mut v_t = renoise(cond, grid[grid.len() - 1], rngs)?;
    let mut v_hat = Array2::zeros((b, k));
    for j in (1..grid.len()).rev() {
        let t = grid[j];
        let ts = vec![t as f32; b];
        let vt32 = to_f32(&v_t);
        let c_out = model.forward(vt32.view(), cond32.view(), &ts)?;
        counters.add(&counters.conditional, b);
        v_hat = c_out.mapv(f64::from);
        if guidance > 0.0 {
            let u_out = model.forward(vt32.view(), zeros.view(), &ts)?;
            counters.add(&counters.unconditional, b);
            v_hat = v_hat * (1.0 - guidance) + u_out.mapv(f64::from) * guidance;
        }
        if j > 1 {
            v_t = renoise(&v_hat, grid[j - 1], rngs)?;
        }
    }
    if v_hat.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sampled spectral coefficients".into()));
    }
    Ok(v_hat)
}

/// Samples one denoised preference vector in item space for condition `c`.
pub fn sample_preferences<R: Rng>(
    model: &Denoiser<f32>,
    sched: &NoiseSchedule,
    basis: &SpectralBasis,
    condition: &[u32],
    guidance: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if condition.is_empty() {
        return Err(Error::EmptyCondition(0));
    }
    if condition.iter().any(|&i| i as usize >= basis.n_items()) {
        return Err(Error::InvalidParameter("condition item out of range".into()));
    }
    let v0 = Array2::from_shape_vec((1, basis.rank()), basis.gft_binary(condition))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let counters = EvalCounters::default();
    let v_hat = reverse_batch(model, sched, &v0, guidance, std::slice::from_mut(rng), &counters)?;
    basis.igft(v_hat.row(0).as_slice().expect("contiguous row"))
}

/// Batch recommender over a trained model; each user gets an independent,
/// reproducible noise stream derived from `(seed, user, chain)`.
pub struct DiffusionRecommender<'a> {
    model: &'a Denoiser<f32>,
    sched: &'a NoiseSchedule,
    basis: &'a SpectralBasis,
    cfg: SamplerConfig,
    popularity: Option<Vec<f64>>,
    counters: EvalCounters,
}

impl<'a> DiffusionRecommender<'a> {
    pub fn new(
        model: &'a Denoiser<f32>,
        sched: &'a NoiseSchedule,
        basis: &'a SpectralBasis,
        cfg: SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_dim(basis.rank(), model.rank())?;
        check_dim(basis.rank(), sched.rank())?;
        Ok(Self {
            model,
            sched,
            basis,
            cfg,
            popularity: None,
            counters: EvalCounters::default(),
        })
    }

    /// Scores used for users with an empty condition under the popularity policy.
    pub fn with_popularity(mut self, scores: Vec<f64>) -> Self {
        self.popularity = Some(scores);
        self
    }

    pub fn counters(&self) -> &EvalCounters {
        &self.counters
    }

    fn stream(&self, user: usize, chain: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(user as u64);
        rng
    }

    /// Final spectral estimates `v̂_0`, one row per user (zero rows for
    /// empty conditions).
    pub fn sample_spectral(&self, users: &[usize], conditions: &[Vec<u32>]) -> Result<Array2<f64>> {
        check_dim(users.len(), conditions.len())?;
        let k = self.basis.rank();
        let mut v0 = Array2::zeros((users.len(), k));
        for (i, (&u, c)) in users.iter().zip(conditions).enumerate() {
            if c.is_empty() {
                if self.cfg.empty == EmptyConditionPolicy::Error {
                    return Err(Error::EmptyCondition(u));
                }
                continue;
            }
            if c.iter().any(|&it| it as usize >= self.basis.n_items()) {
                return Err(Error::InvalidParameter(format!("user {u} has an out-of-range item")));
            }
            v0.row_mut(i).assign(&ndarray::Array1::from(self.basis.gft_binary(c)));
        }
        let mut acc = Array2::zeros((users.len(), k));
        for chain in 0..self.cfg.ensemble {
            let mut rngs: Vec<ChaCha8Rng> = users.iter().map(|&u| self.stream(u, chain)).collect();
            acc += &reverse_batch(self.model, self.sched, &v0, self.cfg.guidance, &mut rngs, &self.counters)?;
        }
        Ok(acc / self.cfg.ensemble as f64)
    }
}

impl Recommender for DiffusionRecommender<'_> {
    fn score_users(&self, users: &[usize], histories: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        let v_hat = self.sample_spectral(users, histories)?;
        let scores = v_hat.dot(&self.basis.vectors().t());
        Ok(scores
            .axis_iter(Axis(0))
            .zip(histories)
            .map(|(row, h)| match (&self.popularity, h.is_empty()) {
                (Some(pop), true) => pop.clone(),
                _ => row.to_vec(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::InteractionMatrix;
    use crate::denoiser::{Activation, DenoiserShape};
    use crate::graph::{build_basis, LanczosConfig};
    use crate::schedule::ScheduleParams;

    fn fixture(params: ScheduleParams) -> (Denoiser<f32>, NoiseSchedule, SpectralBasis) {
        let rows: Vec<Vec<u32>> = (0..12u32).map(|u| (0..10u32).filter(|i| (i + u) % 3 != 0).collect()).collect();
        let m = InteractionMatrix::from_rows(rows, 10).unwrap();
        let basis = build_basis(&m, &LanczosConfig::new(6)).unwrap();
        let sched = NoiseSchedule::new(basis.frequencies(), params).unwrap();
        let shape = DenoiserShape {
            rank: 6,
            hidden: 12,
            time_dim: 8,
            film_width: 4,
            activation: Activation::Tanh,
        };
        let mut model = Denoiser::<f32>::new(shape, 5).unwrap();
        model.film_gamma.w_out.fill(0.3);
        model.film_beta.w_out.fill(-0.2);
        (model, sched, basis)
    }

    #[test]
    fn five_steps_give_five_evaluation_pairs() {
        let (model, sched, basis) = fixture(ScheduleParams::default());
        assert_eq!(sched.sampling_times(), vec![1.0, 0.8, 0.6, 0.4, 0.2]);
        let rec = DiffusionRecommender::new(&model, &sched, &basis, SamplerConfig::default()).unwrap();
        rec.sample_spectral(&[0], &[vec![1, 2]]).unwrap();
        assert_eq!(rec.counters().conditional(), 5);
        assert_eq!(rec.counters().unconditional(), 5);
    }

    #[test]
    fn zero_guidance_skips_unconditional_branch() {
        let (model, sched, basis) = fixture(ScheduleParams::default());
        let cfg = SamplerConfig {
            guidance: 0.0,
            ..Default::default()
        };
        let rec = DiffusionRecommender::new(&model, &sched, &basis, cfg).unwrap();
        rec.sample_spectral(&[0, 1, 2], &[vec![1], vec![2, 3], vec![4]]).unwrap();
        assert_eq!(rec.counters().conditional(), 15);
        assert_eq!(rec.counters().unconditional(), 0);
    }

    #[test]
    fn blend_is_affine_in_guidance() {
        // With one step the blend is the only combination, so v̂(s) must equal
        // (1 - s) v̂(0) + s v̂(1) for a shared noise draw.
        let params = ScheduleParams {
            steps: 1,
            ..Default::default()
        };
        let (model, sched, basis) = fixture(params);
        let run = |s: f64| {
            let cfg = SamplerConfig {
                guidance: s,
                seed: 9,
                ..Default::default()
            };
            let rec = DiffusionRecommender::new(&model, &sched, &basis, cfg).unwrap();
            rec.sample_spectral(&[3], &[vec![0, 5, 7]]).unwrap()
        };
        let (v0, v1, vs) = (run(0.0), run(1.0), run(0.3));
        for j in 0..6 {
            let expect = 0.7 * v0[[0, j]] + 0.3 * v1[[0, j]];
            assert!((vs[[0, j]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_limit_is_seed_independent_recursion() {
        let params = ScheduleParams {
            alpha_min: 1.0 - 1e-12,
            sigma_max: 1e-300,
            ..Default::default()
        };
        let (model, sched, basis) = fixture(params);
        let cond = vec![1u32, 4, 6];
        let a = sample_preferences(&model, &sched, &basis, &cond, 0.02, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_preferences(&model, &sched, &basis, &cond, 0.02, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);

        let c: Vec<f32> = basis.gft_binary(&cond).iter().map(|&x| x as f32).collect();
        let zero = vec![0.0f32; 6];
        let times = sched.sampling_times();
        let (alpha_t, _) = sched.alpha_sigma_at(times[0]).unwrap();
        let mut v: Vec<f64> = c.iter().zip(&alpha_t).map(|(&x, a)| a * x as f64).collect();
        let mut v_hat = vec![];
        for (idx, &t) in times.iter().enumerate() {
            let v32: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            let co = model.denoise(&v32, &c, t as f32).unwrap();
            let un = model.denoise(&v32, &zero, t as f32).unwrap();
            v_hat = co.iter().zip(&un).map(|(a, b)| 0.98 * *a as f64 + 0.02 * *b as f64).collect();
            if let Some(&next) = times.get(idx + 1) {
                let (al, _) = sched.alpha_sigma_at(next).unwrap();
                v = v_hat.iter().zip(&al).map(|(x, a)| a * x).collect();
            }
        }
        let expected = basis.igft(&v_hat).unwrap();
        for (x, y) in a.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn results_do_not_depend_on_batching() {
        let (model, sched, basis) = fixture(ScheduleParams::default());
        let rec = DiffusionRecommender::new(&model, &sched, &basis, SamplerConfig::default()).unwrap();
        let conds = vec![vec![0, 1], vec![2, 5, 8], vec![9]];
        let all = rec.sample_spectral(&[0, 1, 2], &conds).unwrap();
        let one = rec.sample_spectral(&[1], &conds[1..2]).unwrap();
        assert_eq!(all.row(1), one.row(0));
    }

    #[test]
    fn empty_condition_policies() {
        let (model, sched, basis) = fixture(ScheduleParams::default());
        let strict = SamplerConfig {
            empty: EmptyConditionPolicy::Error,
            ..Default::default()
        };
        let rec = DiffusionRecommender::new(&model, &sched, &basis, strict).unwrap();
        assert!(matches!(rec.score_users(&[4], &[vec![]]), Err(Error::EmptyCondition(4))));
        let pop = vec![1.0; 10];
        let rec = DiffusionRecommender::new(&model, &sched, &basis, SamplerConfig::default())
            .unwrap()
            .with_popularity(pop.clone());
        assert_eq!(rec.score_users(&[4], &[vec![]]).unwrap()[0], pop);
    }
}
