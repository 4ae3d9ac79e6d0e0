//! Per-frequency noise schedules.
//!
//! Spectral coordinate `i` with Laplacian frequency `d_i` decays as
//! `λ_t(i) = exp(-t d_i)`. The schedule variants turn that decay into the
//! forward marginal `v_t = α_t ⊙ v_0 + σ_t ⊙ ε`:
//!
//! | variant | `α_t`                          | `σ_t`                            |
//! |---------|--------------------------------|----------------------------------|
//! | `Vp`    | `(1 - α_min) λ_t + α_min`      | `min(sqrt(1 - λ_t²), σ_max)`     |
//! | `Ve`    | `λ_t`                          | `σ_max · t / τ` (all frequencies)|
//! | `Iso`   | `sqrt(1 - (t/τ) σ̄²)`           | `σ̄ sqrt(t/τ)` (all frequencies)  |
//!
//! Every variant has `α_0 = 1` and `σ_0 = 0`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

/// SNR reported where `σ = 0`.
pub const SNR_SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Anisotropic, variance preserving (bounded by `α_min`, `σ_max`).
    Vp,
    /// Anisotropic mean, uniformly growing noise.
    Ve,
    /// Frequency-independent variance-preserving schedule.
    Iso,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vp, Variant::Ve, Variant::Iso];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vp => "vp",
            Variant::Ve => "ve",
            Variant::Iso => "iso",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vp" => Ok(Variant::Vp),
            "ve" => Ok(Variant::Ve),
            "iso" => Ok(Variant::Iso),
            other => Err(Error::InvalidParameter(format!("unknown variant `{other}`"))),
        }
    }
}

/// Scalar parameters of a schedule, independent of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub tau: f64,
    pub steps: usize,
    pub alpha_min: f64,
    pub sigma_max: f64,
    pub variant: Variant,
    /// Terminal noise level `σ̄` of the isotropic variant.
    pub iso_sigma: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            tau: 1.0,
            steps: 5,
            alpha_min: 0.05,
            sigma_max: 0.45,
            variant: Variant::Vp,
            iso_sigma: 1.0,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.alpha_min) {
            return bad(format!("alpha_min must lie in [0, 1), got {}", self.alpha_min));
        }
        if !(self.sigma_max > 0.0 && self.sigma_max <= 1.0) {
            return bad(format!("sigma_max must lie in (0, 1], got {}", self.sigma_max));
        }
        if !(self.iso_sigma > 0.0 && self.iso_sigma <= 1.0) {
            return bad(format!("iso sigma must lie in (0, 1], got {}", self.iso_sigma));
        }
        Ok(())
    }

    /// Analytic VP lower bound on the per-frequency SNR over `t ∈ [0, τ]`.
    pub fn snr_lower_bound(&self) -> f64 {
        let floor = (-4.0 * self.tau).exp();
        (floor / (1.0 - floor)).max(self.alpha_min.powi(2) / self.sigma_max.powi(2))
    }
}

/// Noise schedule over a fixed spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    frequencies: Vec<f64>,
    params: ScheduleParams,
}

impl NoiseSchedule {
    pub fn new(frequencies: &[f64], params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        if frequencies.iter().any(|d| !(0.0..=2.0).contains(d)) {
            return Err(Error::InvalidParameter("frequencies must lie in [0, 2]".into()));
        }
        Ok(Self {
            frequencies: frequencies.to_vec(),
            params,
        })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn rank(&self) -> usize {
        self.frequencies.len()
    }

    pub fn tau(&self) -> f64 {
        self.params.tau
    }

    pub fn steps(&self) -> usize {
        self.params.steps
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.params.tau).contains(&t) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "time {t} outside [0, {}]",
                self.params.tau
            )))
        }
    }

    /// `exp(-t d)` per frequency.
    pub fn decay(&self, t: f64) -> Vec<f64> {
        self.frequencies.iter().map(|d| (-t * d).exp()).collect()
    }

    /// Closed-form `(α_t, σ_t)`; `t` may be any value in `[0, τ]`.
    pub fn alpha_sigma_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_time(t)?;
        let p = &self.params;
        let frac = t / p.tau;
        let pairs = self.frequencies.iter().map(|d| {
            let lambda = (-t * d).exp();
            match p.variant {
                Variant::Vp => (
                    (1.0 - p.alpha_min) * lambda + p.alpha_min,
                    (1.0 - lambda * lambda).max(0.0).sqrt().min(p.sigma_max),
                ),
                Variant::Ve => (lambda, p.sigma_max * frac),
                Variant::Iso => {
                    let var = frac * p.iso_sigma * p.iso_sigma;
                    ((1.0 - var).max(0.0).sqrt(), var.sqrt())
                }
            }
        });
        Ok(pairs.unzip())
    }

    /// Draws `α_t ⊙ v0 + σ_t ⊙ ε` with `ε ~ N(0, I)`.
    pub fn forward_sample<R: Rng + ?Sized>(&self, v0: &[f64], t: f64, rng: &mut R) -> Result<Vec<f64>> {
        check_dim(self.rank(), v0.len())?;
        let (alpha, sigma) = self.alpha_sigma_at(t)?;
        Ok(v0
            .iter()
            .zip(alpha.iter().zip(&sigma))
            .map(|(v, (a, s))| {
                let eps: f64 = StandardNormal.sample(rng);
                a * v + s * eps
            })
            .collect())
    }

    /// Per-frequency `α²/σ²` (σ floored at [`SNR_SIGMA_FLOOR`]) and the VP bound.
    pub fn snr(&self, t: f64) -> Result<(Vec<f64>, f64)> {
        let (alpha, sigma) = self.alpha_sigma_at(t)?;
        let snr = alpha
            .iter()
            .zip(&sigma)
            .map(|(a, s)| a * a / s.max(SNR_SIGMA_FLOOR).powi(2))
            .collect();
        Ok((snr, self.params.snr_lower_bound()))
    }

    /// The `T + 1` grid points `τ j / T`, ascending from 0.
    pub fn time_grid(&self) -> Vec<f64> {
        time_grid(self.params.tau, self.params.steps)
    }

    /// Reverse-process instants `τ, τ(T-1)/T, …, τ/T`.
    pub fn sampling_times(&self) -> Vec<f64> {
        let mut grid = self.time_grid();
        grid.remove(0);
        grid.reverse();
        grid
    }
}

/// `t_j = τ · j / T` for `j = 0..=T`.
pub fn time_grid(tau: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|j| tau * j as f64 / steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vp(alpha_min: f64, sigma_max: f64) -> ScheduleParams {
        ScheduleParams {
            alpha_min,
            sigma_max,
            ..ScheduleParams::default()
        }
    }

    #[test]
    fn closed_form_at_unit_frequency() {
        let s = NoiseSchedule::new(&[1.0], vp(0.0, 1.0)).unwrap();
        let (a, sg) = s.alpha_sigma_at(1.0).unwrap();
        // 30-digit references: e^-1 = 0.367879441171442321595...,
        // sqrt(1 - e^-2) = 0.929873495032193778738...
        assert!((a[0] - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((sg[0] - 0.929_873_495_032_193_8).abs() < 1e-15);
    }

    #[test]
    fn every_variant_starts_clean() {
        let d = [0.0, 0.3, 1.0, 2.0];
        for variant in Variant::ALL {
            let p = ScheduleParams { variant, ..vp(0.2, 0.7) };
            let s = NoiseSchedule::new(&d, p).unwrap();
            let (a, sg) = s.alpha_sigma_at(0.0).unwrap();
            assert!(a.iter().all(|&x| x == 1.0), "{variant}");
            assert!(sg.iter().all(|&x| x == 0.0), "{variant}");
        }
    }

    #[test]
    fn alpha_floor_holds() {
        let s = NoiseSchedule::new(&[0.0, 0.5, 1.0, 2.0], vp(0.1, 0.5)).unwrap();
        for t in time_grid(1.0, 50) {
            let (a, _) = s.alpha_sigma_at(t).unwrap();
            assert!(a.iter().all(|&x| x >= 0.1));
        }
    }

    #[test]
    fn zero_frequency_untouched() {
        let s = NoiseSchedule::new(&[0.0], vp(0.05, 0.45)).unwrap();
        for t in time_grid(1.0, 20) {
            let (a, sg) = s.alpha_sigma_at(t).unwrap();
            assert_eq!((a[0], sg[0]), (1.0, 0.0));
        }
    }

    #[test]
    fn sigma_clamps_at_max() {
        let s = NoiseSchedule::new(&[2.0], vp(0.0, 0.5)).unwrap();
        let (_, sg) = s.alpha_sigma_at(1.0).unwrap();
        // sqrt(1 - e^-4) = 0.990799859260822573... before clamping
        assert!(((1.0 - (-4.0f64).exp()).sqrt() - 0.990_799_859_260_822_6).abs() < 1e-15);
        assert_eq!(sg[0], 0.5);
    }

    #[test]
    fn alpha_strictly_decreasing_for_positive_frequency() {
        let s = NoiseSchedule::new(&[0.4], vp(0.3, 0.5)).unwrap();
        let grid = time_grid(1.0, 10);
        let alphas: Vec<f64> = grid.iter().map(|&t| s.alpha_sigma_at(t).unwrap().0[0]).collect();
        assert!(alphas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn out_of_range_time_and_params() {
        let s = NoiseSchedule::new(&[0.5], vp(0.0, 1.0)).unwrap();
        assert!(s.alpha_sigma_at(1.5).is_err());
        assert!(s.alpha_sigma_at(-0.1).is_err());
        assert!(NoiseSchedule::new(&[0.5], vp(1.0, 0.5)).is_err());
        assert!(NoiseSchedule::new(&[0.5], vp(0.0, 0.0)).is_err());
        assert!(NoiseSchedule::new(&[0.5], vp(0.0, 1.1)).is_err());
        assert!(NoiseSchedule::new(&[2.5], vp(0.0, 1.0)).is_err());
        let p = ScheduleParams { steps: 0, ..vp(0.0, 1.0) };
        assert!(NoiseSchedule::new(&[0.5], p).is_err());
    }

    #[test]
    fn bound_value_at_unit_tau() {
        // e^-4 / (1 - e^-4) = 0.0186573...
        let b = vp(0.0, 1.0).snr_lower_bound();
        assert!((b - 0.018_657_3).abs() < 1e-6, "{b}");
        assert!((vp(0.1, 0.5).snr_lower_bound() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn snr_respects_ratio_bound() {
        let s = NoiseSchedule::new(&[0.0, 0.2, 0.9, 1.0], vp(0.1, 0.5)).unwrap();
        for t in time_grid(1.0, 40) {
            let (snr, bound) = s.snr(t).unwrap();
            assert!(snr.iter().all(|&x| x >= 0.04 - 1e-12));
            assert!(bound >= 0.04);
        }
        let (snr0, _) = s.snr(0.0).unwrap();
        assert!(snr0.iter().all(|x| x.is_finite() && *x > 1e20));
    }

    #[test]
    fn iso_terminal_snr_vanishes() {
        let p = ScheduleParams { variant: Variant::Iso, ..ScheduleParams::default() };
        let s = NoiseSchedule::new(&[0.1, 0.9], p).unwrap();
        let (snr, _) = s.snr(1.0).unwrap();
        let vp_bound = NoiseSchedule::new(&[0.1, 0.9], ScheduleParams::default())
            .unwrap()
            .params()
            .snr_lower_bound();
        assert!(snr.iter().all(|&x| x < 1e-12 && x < vp_bound));
    }

    #[test]
    fn ve_noise_is_uniform_and_linear() {
        let p = ScheduleParams { variant: Variant::Ve, ..vp(0.0, 0.6) };
        let s = NoiseSchedule::new(&[0.0, 0.5, 1.0], p).unwrap();
        let (a, sg) = s.alpha_sigma_at(0.5).unwrap();
        assert!(sg.iter().all(|&x| (x - 0.3).abs() < 1e-15));
        assert!((a[1] - (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn grids() {
        let s = NoiseSchedule::new(&[0.5], ScheduleParams::default()).unwrap();
        assert_eq!(s.time_grid(), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(s.sampling_times(), vec![1.0, 0.8, 0.6, 0.4, 0.2]);
    }

    #[test]
    fn forward_sample_at_zero_is_exact() {
        let s = NoiseSchedule::new(&[0.3, 0.7], ScheduleParams::default()).unwrap();
        let mut rng = rand::rng();
        assert_eq!(s.forward_sample(&[1.5, -2.0], 0.0, &mut rng).unwrap(), vec![1.5, -2.0]);
        assert!(s.forward_sample(&[1.0], 0.5, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn vp_anisotropy_ordering(
            mut d in proptest::collection::vec(0.0f64..=2.0, 2..20),
            t in 0.001f64..=1.0,
            alpha_min in 0.0f64..0.99,
            sigma_max in 0.01f64..=1.0,
        ) {
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let s = NoiseSchedule::new(&d, vp(alpha_min, sigma_max)).unwrap();
            let (a, sg) = s.alpha_sigma_at(t).unwrap();
            for i in 1..d.len() {
                prop_assert!(a[i] <= a[i - 1]);
                prop_assert!(sg[i] >= sg[i - 1]);
            }
        }

        #[test]
        fn unbounded_vp_preserves_variance(
            d in proptest::collection::vec(0.0f64..=2.0, 1..20),
            t in 0.0f64..=1.0,
        ) {
            let s = NoiseSchedule::new(&d, vp(0.0, 1.0)).unwrap();
            let (a, sg) = s.alpha_sigma_at(t).unwrap();
            for (x, y) in a.iter().zip(&sg) {
                prop_assert!((x * x + y * y - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn vp_snr_above_bound(
            d in proptest::collection::vec(0.0f64..=2.0, 1..20),
            t in 0.0f64..=1.0,
            alpha_min in 0.0f64..0.99,
            sigma_max in 0.01f64..=1.0,
        ) {
            let s = NoiseSchedule::new(&d, vp(alpha_min, sigma_max)).unwrap();
            let (snr, bound) = s.snr(t).unwrap();
            for x in snr {
                prop_assert!(x >= bound * (1.0 - 1e-12));
            }
        }
    }
}
