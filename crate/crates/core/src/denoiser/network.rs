use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenoiserShape, Real};
use crate::error::{check_dim, Error, Result};

/// Base angular frequency of the time embedding; `t ∈ [0, 1]` then sweeps
/// many periods of the fastest channel and a fraction of the slowest.
pub const TIME_FREQUENCY_SCALE: f64 = 1000.0;

/// Sinusoidal embedding of a diffusion time.
///
/// Channel `j < d/2` is `cos(ω_j t)`, channel `d/2 + j` is `sin(ω_j t)` with
/// `ω_j = 1000 · 10000^{-j/(d/2)}`. For odd `d` the final channel carries `t`.
pub fn time_embedding<F: Real>(t: F, dim: usize) -> Vec<F> {
    let mut out = vec![F::zero(); dim];
    let half = dim / 2;
    let t = t.to_f64().unwrap_or(0.0);
    for j in 0..half {
        let w = TIME_FREQUENCY_SCALE * (-(10000f64.ln()) * j as f64 / half as f64).exp();
        out[j] = F::lit((w * t).cos());
        out[half + j] = F::lit((w * t).sin());
    }
    if dim % 2 == 1 {
        out[dim - 1] = F::lit(t);
    }
    out
}

/// `1 → w → 1` tanh network applied elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarNet<F> {
    pub w_in: Array1<F>,
    pub b_in: Array1<F>,
    pub w_out: Array1<F>,
    pub b_out: Array1<F>,
}

impl<F: Real> ScalarNet<F> {
    fn zeros(width: usize) -> Self {
        Self {
            w_in: Array1::zeros(width),
            b_in: Array1::zeros(width),
            w_out: Array1::zeros(width),
            b_out: Array1::zeros(1),
        }
    }

    pub fn eval(&self, x: F) -> F {
        let mut y = self.b_out[0];
        for j in 0..self.w_in.len() {
            y += self.w_out[j] * (self.w_in[j] * x + self.b_in[j]).tanh();
        }
        y
    }

    /// Accumulates parameter gradients for upstream gradient `g` at input `x`.
    fn accumulate_grad(&self, x: F, g: F, grad: &mut ScalarNet<F>) {
        grad.b_out[0] += g;
        for j in 0..self.w_in.len() {
            let a = (self.w_in[j] * x + self.b_in[j]).tanh();
            grad.w_out[j] += g * a;
            let dz = g * self.w_out[j] * (F::one() - a * a);
            grad.w_in[j] += dz * x;
            grad.b_in[j] += dz;
        }
    }
}

/// Affine layer `y = x W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Dense<F> {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    fn xavier(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (input + output) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((input, output), || F::lit(rng.random_range(-a..a)));
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    fn forward(&self, x: &Array2<F>) -> Array2<F> {
        x.dot(&self.weight) + &self.bias
    }
}

/// A mini-batch: noisy signals, spectral conditions, times and clean targets.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub v_t: Array2<F>,
    pub cond: Array2<F>,
    pub t: Vec<F>,
    pub target: Array2<F>,
}

/// Network parameters. The same type holds gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<F> {
    pub shape: DenoiserShape,
    pub film_gamma: ScalarNet<F>,
    pub film_beta: ScalarNet<F>,
    pub time_proj: Dense<F>,
    pub hidden: Dense<F>,
    pub output: Dense<F>,
}

struct Cache<F> {
    emb: Array2<F>,
    input: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
    out: Array2<F>,
}

impl<F: Real> Denoiser<F> {
    /// Deterministic initialization: Xavier-uniform dense weights, zero
    /// biases, random FiLM input layers and zero FiLM output heads.
    pub fn new(shape: DenoiserShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wf = shape.film_width;
        let a = (6.0 / (1 + wf) as f64).sqrt();
        let film = |rng: &mut ChaCha8Rng| {
            let mut net = ScalarNet::zeros(wf);
            net.w_in.mapv_inplace(|_| F::lit(rng.random_range(-a..a)));
            net.b_in.mapv_inplace(|_| F::lit(rng.random_range(-1.0..1.0)));
            net
        };
        let film_gamma = film(&mut rng);
        let film_beta = film(&mut rng);
        let (k, h, dt) = (shape.rank, shape.hidden, shape.time_dim);
        Ok(Self {
            shape,
            film_gamma,
            film_beta,
            time_proj: Dense::xavier(dt, dt, &mut rng),
            hidden: Dense::xavier(k + dt, h, &mut rng),
            output: Dense::xavier(h, k, &mut rng),
        })
    }

    pub fn zeros(shape: DenoiserShape) -> Self {
        let (k, h, dt, wf) = (shape.rank, shape.hidden, shape.time_dim, shape.film_width);
        Self {
            shape,
            film_gamma: ScalarNet::zeros(wf),
            film_beta: ScalarNet::zeros(wf),
            time_proj: Dense::zeros(dt, dt),
            hidden: Dense::zeros(k + dt, h),
            output: Dense::zeros(h, k),
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.rank
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in serialization order.
    pub fn tensors(&self) -> [&[F]; 14] {
        fn sl<F>(a: Option<&[F]>) -> &[F] {
            a.expect("parameters are contiguous")
        }
        [
            sl(self.film_gamma.w_in.as_slice()),
            sl(self.film_gamma.b_in.as_slice()),
            sl(self.film_gamma.w_out.as_slice()),
            sl(self.film_gamma.b_out.as_slice()),
            sl(self.film_beta.w_in.as_slice()),
            sl(self.film_beta.b_in.as_slice()),
            sl(self.film_beta.w_out.as_slice()),
            sl(self.film_beta.b_out.as_slice()),
            sl(self.time_proj.weight.as_slice()),
            sl(self.time_proj.bias.as_slice()),
            sl(self.hidden.weight.as_slice()),
            sl(self.hidden.bias.as_slice()),
            sl(self.output.weight.as_slice()),
            sl(self.output.bias.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [F]; 14] {
        let Self {
            film_gamma: g,
            film_beta: b,
            time_proj: tp,
            hidden: hd,
            output: out,
            ..
        } = self;
        fn sl<F>(a: Option<&mut [F]>) -> &mut [F] {
            a.expect("parameters are contiguous")
        }
        [
            sl(g.w_in.as_slice_mut()),
            sl(g.b_in.as_slice_mut()),
            sl(g.w_out.as_slice_mut()),
            sl(g.b_out.as_slice_mut()),
            sl(b.w_in.as_slice_mut()),
            sl(b.b_in.as_slice_mut()),
            sl(b.w_out.as_slice_mut()),
            sl(b.b_out.as_slice_mut()),
            sl(tp.weight.as_slice_mut()),
            sl(tp.bias.as_slice_mut()),
            sl(hd.weight.as_slice_mut()),
            sl(hd.bias.as_slice_mut()),
            sl(out.weight.as_slice_mut()),
            sl(out.bias.as_slice_mut()),
        ]
    }

    pub fn cast<G: Real>(&self) -> Denoiser<G> {
        let c1 = |a: &Array1<F>| a.mapv(|x| G::lit(x.to_f64().unwrap_or(f64::NAN)));
        let c2 = |a: &Array2<F>| a.mapv(|x| G::lit(x.to_f64().unwrap_or(f64::NAN)));
        let net = |n: &ScalarNet<F>| ScalarNet {
            w_in: c1(&n.w_in),
            b_in: c1(&n.b_in),
            w_out: c1(&n.w_out),
            b_out: c1(&n.b_out),
        };
        let dense = |d: &Dense<F>| Dense {
            weight: c2(&d.weight),
            bias: c1(&d.bias),
        };
        Denoiser {
            shape: self.shape,
            film_gamma: net(&self.film_gamma),
            film_beta: net(&self.film_beta),
            time_proj: dense(&self.time_proj),
            hidden: dense(&self.hidden),
            output: dense(&self.output),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn check_batch(&self, v_t: &ArrayView2<F>, cond: &ArrayView2<F>, t: &[F]) -> Result<()> {
        check_dim(self.shape.rank, v_t.ncols())?;
        check_dim(self.shape.rank, cond.ncols())?;
        check_dim(v_t.nrows(), cond.nrows())?;
        check_dim(v_t.nrows(), t.len())
    }

    fn forward_cached(&self, v_t: ArrayView2<F>, cond: ArrayView2<F>, t: &[F]) -> Cache<F> {
        let k = self.shape.rank;
        let dt = self.shape.time_dim;
        let mut fused = v_t.to_owned();
        Zip::from(&mut fused).and(&cond).for_each(|f, &c| {
            *f += self.film_gamma.eval(c) * c + self.film_beta.eval(c);
        });
        let mut emb = Array2::zeros((t.len(), dt));
        for (mut row, &ti) in emb.rows_mut().into_iter().zip(t) {
            row.assign(&Array1::from(time_embedding(ti, dt)));
        }
        let temb = self.time_proj.forward(&emb);
        let input = concatenate![Axis(1), fused, temb];
        debug_assert_eq!(input.ncols(), k + dt);
        let pre = self.hidden.forward(&input);
        let act_fn = self.shape.activation;
        let act = pre.mapv(|z| act_fn.apply(z));
        let out = self.output.forward(&act);
        Cache {
            emb,
            input,
            pre,
            act,
            out,
        }
    }

    /// Batched prediction of `v̂_0`; rows are examples.
    pub fn forward(&self, v_t: ArrayView2<F>, cond: ArrayView2<F>, t: &[F]) -> Result<Array2<F>> {
        self.check_batch(&v_t, &cond, t)?;
        Ok(self.forward_cached(v_t, cond, t).out)
    }

    /// Single-example prediction of `v̂_0`.
    pub fn denoise(&self, v_t: &[F], cond: &[F], t: F) -> Result<Vec<F>> {
        let k = self.shape.rank;
        check_dim(k, v_t.len())?;
        check_dim(k, cond.len())?;
        let v = ArrayView2::from_shape((1, k), v_t).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let c = ArrayView2::from_shape((1, k), cond).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(self.forward(v, c, &[t])?.into_raw_vec_and_offset().0)
    }

    /// Batch loss `mean_b ‖φ(v_t, c, t) - v_0‖²` and its exact gradient.
    pub fn loss_and_grad(&self, batch: &Batch<F>) -> Result<(F, Denoiser<F>)> {
        self.check_batch(&batch.v_t.view(), &batch.cond.view(), &batch.t)?;
        check_dim(batch.v_t.nrows(), batch.target.nrows())?;
        check_dim(self.shape.rank, batch.target.ncols())?;
        let n = batch.v_t.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let k = self.shape.rank;
        let scale = F::one() / F::lit(n as f64);
        let cache = self.forward_cached(batch.v_t.view(), batch.cond.view(), &batch.t);
        let diff = &cache.out - &batch.target;
        let loss = diff.iter().map(|d| *d * *d).sum::<F>() * scale;

        let mut grad = Denoiser::zeros(self.shape);
        let d_out = diff * (F::lit(2.0) * scale);
        grad.output.weight = cache.act.t().dot(&d_out);
        grad.output.bias = d_out.sum_axis(Axis(0));

        let mut d_pre = d_out.dot(&self.output.weight.t());
        let act_fn = self.shape.activation;
        Zip::from(&mut d_pre)
            .and(&cache.pre)
            .and(&cache.act)
            .for_each(|g, &z, &a| *g *= act_fn.derivative(z, a));
        grad.hidden.weight = cache.input.t().dot(&d_pre);
        grad.hidden.bias = d_pre.sum_axis(Axis(0));

        let d_input = d_pre.dot(&self.hidden.weight.t());
        let d_fused = d_input.slice(s![.., ..k]);
        let d_temb = d_input.slice(s![.., k..]);
        grad.time_proj.weight = cache.emb.t().dot(&d_temb);
        grad.time_proj.bias = d_temb.sum_axis(Axis(0));

        let (mut gg, mut gb) = (ScalarNet::zeros(self.shape.film_width), ScalarNet::zeros(self.shape.film_width));
        Zip::from(&d_fused).and(&batch.cond).for_each(|&g, &c| {
            self.film_gamma.accumulate_grad(c, g * c, &mut gg);
            self.film_beta.accumulate_grad(c, g, &mut gb);
        });
        grad.film_gamma = gg;
        grad.film_beta = gb;
        Ok((loss, grad))
    }

    /// Batch loss only.
    pub fn loss(&self, batch: &Batch<F>) -> Result<F> {
        let out = self.forward(batch.v_t.view(), batch.cond.view(), &batch.t)?;
        check_dim(out.dim().0, batch.target.nrows())?;
        let n = F::lit(out.nrows() as f64);
        Ok((&out - &batch.target).iter().map(|d| *d * *d).sum::<F>() / n)
    }
}
