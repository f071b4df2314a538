use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::network::{NetworkState, SrmNetwork};
use crate::error::{Error, Result, ValidationReport};
use crate::events::ChannelScaling;
use crate::noise::channel_nmse;

/// Optimiser and dataset settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Slope of the fast-sigmoid surrogate derivative.
    pub surrogate_slope: f64,
    /// Samples per training window.
    pub window: usize,
    /// Ticks the network settles on the first sample of every window.
    pub warmup: usize,
    /// Refit input/output scaling to zero mean, unit variance on the data.
    pub fit_scaling: bool,
    /// Start from the ridge least-squares readout of the initial network.
    pub fit_readout: bool,
    /// Ridge penalty relative to the mean readout-trace energy.
    pub ridge: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 1e-4,
            seed: 7,
            surrogate_slope: 25.0,
            window: 800,
            warmup: 1000,
            fit_scaling: true,
            fit_readout: true,
            ridge: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        r.require(self.epochs > 0, "snn.training.epochs", "must be > 0");
        r.require(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "snn.training.learning_rate",
            "must be > 0",
        );
        r.require(
            self.surrogate_slope > 0.0 && self.surrogate_slope.is_finite(),
            "snn.training.surrogate_slope",
            "must be > 0",
        );
        r.require(self.window >= 2, "snn.training.window", "must be >= 2");
        r.require(
            self.ridge >= 0.0 && self.ridge.is_finite(),
            "snn.training.ridge",
            "must be >= 0",
        );
        r
    }
}

/// One input/target window, row-major in physical units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// Input rows preceding the window, used to prime the network. Empty
    /// means priming on the first input row.
    pub history: Vec<f64>,
}

impl Episode {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>) -> Self {
        Self {
            inputs,
            targets,
            history: Vec::new(),
        }
    }

    fn prime(&self, net: &SrmNetwork, state: &mut NetworkState) -> Result<()> {
        if self.history.is_empty() {
            net.settle(state, &self.inputs[..net.n_inputs()])
        } else {
            net.prime(state, &self.history)
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    /// Loss (MSE in network units) evaluated before each update.
    pub losses: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Normalized MSE of the kept parameters on the training set.
    pub final_nmse: f64,
    /// Mean firing rate per spiking layer (Hz) on the training set.
    pub rates: Vec<f64>,
}

struct Tape {
    dx: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    z: Vec<f64>,
    y: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn update(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>], lr: f64, groups: usize) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(BETA2, self.t as f64);
        for (k, p) in params.into_iter().enumerate().take(groups) {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + EPS);
            }
        }
    }
}

fn params_mut(net: &mut SrmNetwork) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for l in net
        .layers
        .iter_mut()
        .chain(core::iter::once(&mut net.readout))
    {
        out.push(&mut l.w);
        out.push(&mut l.bias);
    }
    out
}

fn shapes(net: &SrmNetwork) -> Vec<usize> {
    net.layers
        .iter()
        .chain(core::iter::once(&net.readout))
        .flat_map(|l| [l.w.len(), l.bias.len()])
        .collect()
}

fn check_episode(net: &SrmNetwork, e: &Episode) -> Result<usize> {
    let (n_in, n_out) = (net.n_inputs(), net.n_outputs());
    if !e.inputs.len().is_multiple_of(n_in) {
        return Err(Error::ShapeMismatch {
            what: "episode inputs",
            expected: n_in,
            actual: e.inputs.len() % n_in,
        });
    }
    let steps = e.inputs.len() / n_in;
    if steps == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !e.history.len().is_multiple_of(n_in) {
        return Err(Error::ShapeMismatch {
            what: "episode history",
            expected: n_in,
            actual: e.history.len() % n_in,
        });
    }
    if e.targets.len() != steps * n_out {
        return Err(Error::LengthMismatch {
            left: steps * n_out,
            right: e.targets.len(),
        });
    }
    Ok(steps)
}

/// Runs `e` from rest and records everything the backward pass needs.
fn record(net: &SrmNetwork, e: &Episode, steps: usize) -> Result<Tape> {
    let dk = net.discrete_kernel();
    let n_in = net.n_inputs();
    let mut st = net.state();
    e.prime(net, &mut st)?;
    let mut tape = Tape {
        dx: net
            .layers
            .iter()
            .map(|l| Vec::with_capacity(steps * l.n_in))
            .collect(),
        u: net
            .layers
            .iter()
            .map(|l| Vec::with_capacity(steps * l.n_out))
            .collect(),
        z: Vec::with_capacity(steps * net.readout.n_in),
        y: Vec::with_capacity(steps * net.n_outputs()),
    };
    for t in 0..steps {
        net.input_scaling
            .encode_into(&e.inputs[t * n_in..(t + 1) * n_in], &mut st.x);
        net.step_scaled(&mut st, &dk);
        for (l, ls) in st.layers.iter().enumerate() {
            tape.dx[l].extend(ls.trace_m.iter().zip(&ls.trace_s).map(|(m, s)| m - s));
            tape.u[l].extend_from_slice(&st.u[l]);
        }
        tape.z.extend_from_slice(&st.readout);
        tape.y.extend_from_slice(&st.y);
    }
    Ok(tape)
}

/// Adds the gradient of `Σ (y − ŷ)² · norm` for one episode into `grads`
/// and returns the unnormalised squared error.
fn backward(
    net: &SrmNetwork,
    tape: &Tape,
    target: &[f64],
    steps: usize,
    norm: f64,
    slope: f64,
    grads: &mut [Vec<f64>],
) -> f64 {
    let dk = net.discrete_kernel();
    let nl = net.layers.len();
    let n_out = net.n_outputs();
    let n_z = net.readout.n_in;
    let thr = net.kernel.u_thr;
    let mut sq = 0.0;
    let mut g_z = vec![0.0; n_z];
    let mut g_m: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.n_in]).collect();
    let mut g_sy: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.n_in]).collect();
    let mut g_s = vec![0.0; n_z];
    let mut g_u: Vec<f64> = Vec::new();
    let mut g_y = vec![0.0; n_out];
    for t in (0..steps).rev() {
        let z = &tape.z[t * n_z..(t + 1) * n_z];
        for o in 0..n_out {
            let err = tape.y[t * n_out + o] - target[t * n_out + o];
            sq += err * err;
            g_y[o] = 2.0 * norm * err;
        }
        {
            let (gw, rest) = grads[2 * nl..].split_at_mut(1);
            for o in 0..n_out {
                let row = &mut gw[0][o * n_z..(o + 1) * n_z];
                for (g, zz) in row.iter_mut().zip(z) {
                    *g += g_y[o] * zz;
                }
                rest[0][o] += g_y[o];
            }
        }
        for j in 0..n_z {
            let mut acc = dk.a_s * g_z[j];
            for o in 0..n_out {
                acc += net.readout.w[o * n_z + j] * g_y[o];
            }
            g_z[j] = acc;
        }
        g_s.clear();
        g_s.extend_from_slice(&g_z);
        for l in (0..nl).rev() {
            let layer = &net.layers[l];
            let (ni, no) = (layer.n_in, layer.n_out);
            let u = &tape.u[l][t * no..(t + 1) * no];
            let dx = &tape.dx[l][t * ni..(t + 1) * ni];
            g_u.clear();
            g_u.extend(g_s.iter().zip(u).map(|(g, &uu)| {
                let d = 1.0 + slope * (uu - thr).abs();
                g / (d * d)
            }));
            {
                let (gw, gb) = grads[2 * l..2 * l + 2].split_at_mut(1);
                for i in 0..no {
                    let gi = g_u[i];
                    gb[0][i] += gi;
                    if gi != 0.0 {
                        let row = &mut gw[0][i * ni..(i + 1) * ni];
                        for (g, x) in row.iter_mut().zip(dx) {
                            *g += gi * x;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let gm = &mut g_m[l];
            let gsy = &mut g_sy[l];
            g_s.clear();
            g_s.resize(ni, 0.0);
            for j in 0..ni {
                let mut gdx = 0.0;
                for i in 0..no {
                    gdx += layer.w[i * ni + j] * g_u[i];
                }
                gm[j] = gdx + dk.a_m * gm[j];
                gsy[j] = -gdx + dk.a_s * gsy[j];
                g_s[j] = gm[j] + gsy[j];
            }
        }
    }
    sq
}

/// Loss and gradient over all episodes in network units. With `ridge`, the
/// readout is first refitted in closed form on the recorded traces.
fn loss_and_grad(
    net: &mut SrmNetwork,
    episodes: &[Episode],
    scaled_targets: &[Vec<f64>],
    slope: f64,
    want_grad: bool,
    ridge: Option<f64>,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut grads: Vec<Vec<f64>> = shapes(net).into_iter().map(|n| vec![0.0; n]).collect();
    let mut steps = Vec::with_capacity(episodes.len());
    for e in episodes {
        steps.push(check_episode(net, e)?);
    }
    let total: usize = steps.iter().sum::<usize>() * net.n_outputs();
    let norm = 1.0 / total.max(1) as f64;
    let mut tapes = Vec::with_capacity(episodes.len());
    for (e, &n) in episodes.iter().zip(&steps) {
        tapes.push(record(net, e, n)?);
    }
    if let Some(r) = ridge {
        fit_readout(net, &mut tapes, scaled_targets, r);
    }
    let mut sq = 0.0;
    for (k, tape) in tapes.iter().enumerate() {
        if want_grad {
            sq += backward(
                net,
                tape,
                &scaled_targets[k],
                steps[k],
                norm,
                slope,
                &mut grads,
            );
        } else {
            sq += tape
                .y
                .iter()
                .zip(&scaled_targets[k])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Ok((sq * norm, grads))
}

fn scale_targets(net: &SrmNetwork, episodes: &[Episode]) -> Vec<Vec<f64>> {
    episodes
        .iter()
        .map(|e| {
            let n = net.n_outputs();
            let mut out = vec![0.0; e.targets.len()];
            for (src, dst) in e.targets.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                net.output_scaling.encode_into(src, dst);
            }
            out
        })
        .collect()
}

/// Replaces the readout by the ridge least-squares fit of the scaled targets
/// on the recorded readout traces (plus a free bias) and refreshes the
/// recorded outputs.
fn fit_readout(net: &mut SrmNetwork, tapes: &mut [Tape], targets: &[Vec<f64>], ridge: f64) {
    let nz = net.readout.n_in;
    let n_out = net.n_outputs();
    let dim = nz + 1;
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DMatrix::<f64>::zeros(dim, n_out);
    let mut feat = DVector::<f64>::zeros(dim);
    for (tape, y) in tapes.iter().zip(targets) {
        for (t, z) in tape.z.chunks_exact(nz).enumerate() {
            feat.rows_mut(0, nz).copy_from_slice(z);
            feat[nz] = 1.0;
            gram.syger(1.0, &feat, &feat, 1.0);
            for o in 0..n_out {
                let yo = y[t * n_out + o];
                for j in 0..dim {
                    rhs[(j, o)] += feat[j] * yo;
                }
            }
        }
    }
    let mean_energy = (0..nz).map(|j| gram[(j, j)]).sum::<f64>() / nz.max(1) as f64;
    for j in 0..nz {
        gram[(j, j)] += ridge * mean_energy + 1e-12;
    }
    gram.fill_upper_triangle_with_lower_triangle();
    let Some(chol) = gram.cholesky() else {
        return;
    };
    let sol = chol.solve(&rhs);
    if sol.iter().any(|x| !x.is_finite()) {
        return;
    }
    for o in 0..n_out {
        for j in 0..nz {
            net.readout.w[o * nz + j] = sol[(j, o)];
        }
        net.readout.bias[o] = sol[(nz, o)];
    }
    for tape in tapes.iter_mut() {
        for (z, y) in tape.z.chunks_exact(nz).zip(tape.y.chunks_exact_mut(n_out)) {
            for o in 0..n_out {
                y[o] = net.readout.bias[o]
                    + net
                        .readout
                        .row(o)
                        .iter()
                        .zip(z)
                        .map(|(w, x)| w * x)
                        .sum::<f64>();
            }
        }
    }
}

/// Loss in network units and its gradient, in the parameter order
/// `[w_0, b_0, …, V, c]`.
pub fn loss_gradient(
    net: &SrmNetwork,
    episodes: &[Episode],
    surrogate_slope: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let targets = scale_targets(net, episodes);
    loss_and_grad(
        &mut net.clone(),
        episodes,
        &targets,
        surrogate_slope,
        true,
        None,
    )
}

/// Normalized MSE of the network on `episodes`, averaged over output
/// channels.
pub fn evaluate(net: &SrmNetwork, episodes: &[Episode]) -> Result<(f64, Vec<f64>)> {
    let n_out = net.n_outputs();
    let mut est = Vec::new();
    let mut meas = Vec::new();
    let mut spikes = vec![0usize; net.layers.len()];
    let mut ticks = 0usize;
    for e in episodes {
        let steps = check_episode(net, e)?;
        let out = net.forward_after(&e.history, &e.inputs, false)?;
        est.extend_from_slice(&out.outputs);
        meas.extend_from_slice(&e.targets);
        for (a, b) in spikes.iter_mut().zip(&out.spike_counts) {
            *a += b;
        }
        ticks += steps;
    }
    let rates = net
        .layers
        .iter()
        .zip(&spikes)
        .map(|(l, &c)| c as f64 / (l.n_out as f64 * ticks.max(1) as f64 * net.dt))
        .collect();
    Ok((channel_nmse(&est, &meas, n_out)?, rates))
}

/// Trains `net` on `episodes` by backpropagation through time.
///
/// Weights are redrawn from `cfg.seed`, the scaling is refitted when
/// requested, and full-batch Adam runs for `cfg.epochs` updates. The
/// Heaviside derivative is replaced by `1/(1 + k|u − U_thr|)²`; the
/// refractory feedback path is treated as constant. The parameters with the
/// lowest training loss are kept.
pub fn train(net: &mut SrmNetwork, episodes: &[Episode], cfg: &TrainConfig) -> Result<TrainReport> {
    let report = cfg.validate();
    if !report.is_empty() {
        return Err(Error::Invalid(report));
    }
    if episodes.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    for e in episodes {
        check_episode(net, e)?;
    }
    net.warmup = cfg.warmup;
    net.initialize(cfg.seed);
    if cfg.fit_scaling {
        let inputs: Vec<f64> = episodes
            .iter()
            .flat_map(|e| e.inputs.iter().copied())
            .collect();
        let targets: Vec<f64> = episodes
            .iter()
            .flat_map(|e| e.targets.iter().copied())
            .collect();
        net.input_scaling = ChannelScaling::fit_zscore(&inputs, net.n_inputs())?;
        net.output_scaling = ChannelScaling::fit_zscore(&targets, net.n_outputs())?;
    }
    let targets = scale_targets(net, episodes);
    let mut adam = Adam::new(&shapes(net));
    let ridge = cfg.fit_readout.then_some(cfg.ridge);
    // the readout is solved in closed form when refitted each epoch
    let trained_groups = if cfg.fit_readout {
        2 * net.layers.len()
    } else {
        usize::MAX
    };
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, net.clone());
    for epoch in 0..cfg.epochs {
        let (loss, grads) =
            loss_and_grad(net, episodes, &targets, cfg.surrogate_slope, true, ridge)?;
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDivergence { epoch });
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, epoch, net.clone());
        }
        adam.update(params_mut(net), &grads, cfg.learning_rate, trained_groups);
    }
    let (loss, _) = loss_and_grad(net, episodes, &targets, cfg.surrogate_slope, false, ridge)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDivergence { epoch: cfg.epochs });
    }
    if loss < best.0 {
        best = (loss, cfg.epochs, net.clone());
    }
    *net = best.2;
    let (final_nmse, rates) = evaluate(net, episodes)?;
    Ok(TrainReport {
        epochs: cfg.epochs,
        losses,
        best_epoch: best.1,
        final_nmse,
        rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::snn::KernelParams;
    use rand_core::RngCore;

    fn net(seed: u64) -> SrmNetwork {
        let mut n = SrmNetwork::new(2, &[24, 16], 2, KernelParams::default(), 1e-4, seed).unwrap();
        n.warmup = 100;
        n
    }

    fn episode(steps: usize, phase: f64) -> Episode {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for t in 0..steps {
            let x = t as f64 / steps as f64 * 6.0 + phase;
            inputs.extend([libm::sin(x), libm::cos(x)]);
            targets.extend([48.0 + libm::sin(x - 0.3), 5.0 + 0.5 * libm::cos(x)]);
        }
        Episode::new(inputs, targets)
    }

    #[test]
    fn readout_gradient_matches_finite_difference() {
        let mut n = net(5);
        let mut rng = substream(99, 0, 0);
        for w in n.readout.w.iter_mut() {
            *w = 0.1 * ((rng.next_u64() % 1000) as f64 / 500.0 - 1.0);
        }
        n.output_scaling = ChannelScaling {
            offset: vec![48.0, 5.0],
            scale: vec![1.0, 0.5],
        };
        let data = [episode(300, 0.0), episode(200, 1.0)];
        let (_, grads) = loss_gradient(&n, &data, 25.0).unwrap();
        let idx = n.layers.len() * 2;
        let n_w = n.readout.w.len();
        for _ in 0..10 {
            let k = (rng.next_u64() as usize) % n_w;
            let h = 1e-6;
            let mut plus = n.clone();
            plus.readout.w[k] += h;
            let mut minus = n.clone();
            minus.readout.w[k] -= h;
            let lp = loss_gradient(&plus, &data, 25.0).unwrap().0;
            let lm = loss_gradient(&minus, &data, 25.0).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let an = grads[idx][k];
            assert!(
                (fd - an).abs() <= 1e-4 * an.abs().max(1e-8),
                "w[{k}]: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn constant_target_is_fitted_by_bias() {
        let mut n = net(1);
        let steps = 200;
        let data = [Episode::new(
            vec![0.3; 2 * steps],
            [48.0, 2.0].repeat(steps),
        )];
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 2e-2,
            warmup: 100,
            ..Default::default()
        };
        let rep = train(&mut n, &data, &cfg).unwrap();
        assert!(
            *rep.losses.last().unwrap() < 1e-4,
            "{:?}",
            rep.losses.last()
        );
        let out = n.forward(&data[0].inputs, false).unwrap();
        for y in out.outputs.chunks_exact(2) {
            assert!(
                (y[0] - 48.0).abs() < 0.05 && (y[1] - 2.0).abs() < 0.05,
                "{y:?}"
            );
        }
    }

    #[test]
    fn training_is_deterministic_and_replays() {
        let data = [episode(400, 0.0)];
        let cfg = TrainConfig {
            epochs: 30,
            warmup: 100,
            learning_rate: 1e-2,
            fit_readout: false,
            ..Default::default()
        };
        let mut a = net(3);
        let mut b = net(3);
        let ra = train(&mut a, &data, &cfg).unwrap();
        let rb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert!(ra.losses.iter().all(|l| l.is_finite() && *l >= 0.0));
        let best = ra.losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(best < 0.5 * ra.losses[0], "{:?}", ra.losses);
        let (replay, _) = evaluate(&a, &data).unwrap();
        assert!(replay <= ra.final_nmse);
    }

    #[test]
    fn ridge_readout_fits_smooth_targets() {
        let data = [episode(600, 0.0), episode(600, 2.0)];
        let cfg = TrainConfig {
            epochs: 1,
            warmup: 100,
            ..Default::default()
        };
        let mut n = net(4);
        let rep = train(&mut n, &data, &cfg).unwrap();
        assert!(rep.final_nmse < 0.05, "{}", rep.final_nmse);
        assert!(rep.rates.iter().all(|&r| r > 100.0), "{:?}", rep.rates);
    }

    #[test]
    fn divergence_is_reported() {
        let mut n = net(2);
        let data = [Episode::new(vec![0.1; 40], vec![f64::NAN; 40])];
        let cfg = TrainConfig {
            epochs: 3,
            warmup: 10,
            fit_scaling: false,
            ..Default::default()
        };
        assert!(matches!(
            train(&mut n, &data, &cfg),
            Err(Error::TrainingDivergence { epoch: 0 })
        ));
    }

    #[test]
    fn mismatched_episode_rejected() {
        let mut n = net(2);
        let data = [Episode::new(vec![0.0; 10], vec![0.0; 8])];
        assert!(train(&mut n, &data, &TrainConfig::default()).is_err());
    }
}
