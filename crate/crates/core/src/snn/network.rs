use alloc::vec;
use alloc::vec::Vec;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::kernel::{DiscreteKernel, KernelParams};
use super::layer::{step_into, LayerState, LayerWeights};
use crate::error::{Error, Result};
use crate::events::ChannelScaling;
use crate::rng::{normal, substream};

/// Layered SRM network with current-injected encoding and a leaky,
/// non-spiking readout.
///
/// Layer 0 receives the scaled input channels as continuous currents; each
/// following layer receives the spikes of the one before. The readout keeps
/// one leaky trace per neuron of the last layer, `z ← a_s z + s`, and emits
/// `y = V z + c` in network units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrmNetwork {
    pub kernel: KernelParams,
    pub dt: f64,
    pub layers: Vec<LayerWeights>,
    pub readout: LayerWeights,
    pub input_scaling: ChannelScaling,
    pub output_scaling: ChannelScaling,
    /// Ticks spent settling on the first input sample before a window.
    pub warmup: usize,
}

/// Binary raster, `raster[step * n_neurons + neuron]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    pub n_neurons: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub raster: Vec<u8>,
}

impl SpikeTrain {
    pub fn count(&self) -> usize {
        self.raster.iter().map(|&s| s as usize).sum()
    }
}

/// Filter states and scratch buffers of one network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerState>,
    pub readout: Vec<f64>,
    pub(crate) u: Vec<Vec<f64>>,
    pub(crate) s: Vec<Vec<f64>>,
    pub(crate) x: Vec<f64>,
    pub(crate) y: Vec<f64>,
}

impl NetworkState {
    pub fn reset(&mut self) {
        for l in self.layers.iter_mut() {
            l.reset();
        }
        for z in self.readout.iter_mut() {
            *z = 0.0;
        }
    }

    pub fn spikes(&self, layer: usize) -> &[f64] {
        &self.s[layer]
    }
}

/// Estimates and activity of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Decoded estimates, `outputs[step * n_out + channel]`.
    pub outputs: Vec<f64>,
    /// Total spikes per spiking layer over the window.
    pub spike_counts: Vec<usize>,
    pub rasters: Option<Vec<SpikeTrain>>,
}

impl SrmNetwork {
    /// Builds a network with weights drawn from `seed`.
    pub fn new(
        n_inputs: usize,
        layer_sizes: &[usize],
        outputs: usize,
        kernel: KernelParams,
        dt: f64,
        seed: u64,
    ) -> Result<Self> {
        let report = kernel.validate();
        if !report.is_empty() {
            return Err(Error::Invalid(report));
        }
        let mut layers = Vec::with_capacity(layer_sizes.len());
        let mut n_in = n_inputs;
        for &n in layer_sizes {
            layers.push(LayerWeights::zeros(n_in, n));
            n_in = n;
        }
        let mut net = Self {
            kernel,
            dt,
            layers,
            readout: LayerWeights::zeros(n_in, outputs),
            input_scaling: ChannelScaling::identity(n_inputs),
            output_scaling: ChannelScaling::identity(outputs),
            warmup: 1000,
        };
        net.initialize(seed);
        Ok(net)
    }

    pub fn n_inputs(&self) -> usize {
        self.layers.first().map_or(self.readout.n_in, |l| l.n_in)
    }

    pub fn n_outputs(&self) -> usize {
        self.readout.n_out
    }

    pub fn discrete_kernel(&self) -> DiscreteKernel {
        self.kernel.discretize(self.dt)
    }

    /// Redraws every weight and bias from `seed`; the readout starts at zero.
    ///
    /// A unit encoding input moves the membrane by about twenty thresholds and
    /// the tonic biases are large enough that most neurons fire at a few kHz,
    /// where the refractory feedback makes their rate nearly linear in the
    /// drive.
    pub fn initialize(&mut self, seed: u64) {
        const ENCODING_SWING: f64 = 20.0;
        const ENCODING_BIAS: f64 = 40.0;
        const HIDDEN_SWING: f64 = 1.6;
        const HIDDEN_BIAS: f64 = 20.0;
        let thr = self.kernel.u_thr;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let mut rng = substream(seed, l as u32, 0);
            let (swing, bias_range) = if l == 0 {
                (ENCODING_SWING, ENCODING_BIAS)
            } else {
                (HIDDEN_SWING, HIDDEN_BIAS)
            };
            let sigma = swing * thr / libm::sqrt(layer.n_in as f64);
            for w in layer.w.iter_mut() {
                *w = sigma * normal(&mut rng);
            }
            for b in layer.bias.iter_mut() {
                *b = bias_range * thr * unit(&mut rng);
            }
        }
        self.readout.w.iter_mut().for_each(|w| *w = 0.0);
        self.readout.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn state(&self) -> NetworkState {
        NetworkState {
            layers: self
                .layers
                .iter()
                .map(|l| LayerState::new(l.n_in, l.n_out))
                .collect(),
            readout: vec![0.0; self.readout.n_in],
            u: self.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            s: self.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            x: vec![0.0; self.n_inputs()],
            y: vec![0.0; self.n_outputs()],
        }
    }

    /// One tick in network units: `x` already scaled, result left in
    /// `state.y`.
    pub(crate) fn step_scaled(&self, state: &mut NetworkState, dk: &DiscreteKernel) {
        for l in 0..self.layers.len() {
            let (prev, rest) = state.s.split_at_mut(l);
            let input: &[f64] = if l == 0 { &state.x } else { &prev[l - 1] };
            step_into(
                input,
                &mut state.layers[l],
                &self.layers[l],
                dk,
                l == 0,
                &mut state.u[l],
                &mut rest[0],
            );
        }
        let last = state.s.last().map(|s| s.as_slice()).unwrap_or(&state.x);
        for (z, &s) in state.readout.iter_mut().zip(last) {
            *z = dk.a_s * *z + s;
        }
        for o in 0..self.readout.n_out {
            let row = self.readout.row(o);
            let mut acc = self.readout.bias[o];
            for (w, z) in row.iter().zip(&state.readout) {
                acc += w * z;
            }
            state.y[o] = acc;
        }
    }

    /// One tick on physical inputs; returns physical estimates.
    pub fn step(&self, state: &mut NetworkState, inputs: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(inputs.len())?;
        let dk = self.discrete_kernel();
        self.input_scaling.encode_into(inputs, &mut state.x);
        self.step_scaled(state, &dk);
        Ok(self.output_scaling.decode(&state.y))
    }

    /// Holds `row` for [`Self::warmup`] ticks so the filters settle.
    pub fn settle(&self, state: &mut NetworkState, row: &[f64]) -> Result<()> {
        self.check_inputs(row.len())?;
        let dk = self.discrete_kernel();
        self.input_scaling.encode_into(row, &mut state.x);
        for _ in 0..self.warmup {
            self.step_scaled(state, &dk);
        }
        Ok(())
    }

    /// Settles on the first row of `history`, then runs through every row,
    /// leaving the state as if the network had been running all along.
    pub fn prime(&self, state: &mut NetworkState, history: &[f64]) -> Result<()> {
        let n_in = self.n_inputs();
        if n_in == 0 || history.is_empty() || !history.len().is_multiple_of(n_in) {
            return Err(Error::ShapeMismatch {
                what: "network input",
                expected: n_in,
                actual: history.len() % n_in.max(1),
            });
        }
        self.settle(state, &history[..n_in])?;
        let dk = self.discrete_kernel();
        for row in history.chunks_exact(n_in) {
            self.input_scaling.encode_into(row, &mut state.x);
            self.step_scaled(state, &dk);
        }
        Ok(())
    }

    fn check_inputs(&self, got: usize) -> Result<()> {
        if got != self.n_inputs() {
            return Err(Error::ShapeMismatch {
                what: "network input",
                expected: self.n_inputs(),
                actual: got,
            });
        }
        Ok(())
    }

    /// Runs a window of row-major physical inputs from rest, after priming
    /// on the first row.
    pub fn forward(&self, inputs: &[f64], record: bool) -> Result<ForwardOutput> {
        self.forward_after(&[], inputs, record)
    }

    /// [`Self::forward`] primed on `history`; an empty history settles on
    /// the first input row instead.
    pub fn forward_after(
        &self,
        history: &[f64],
        inputs: &[f64],
        record: bool,
    ) -> Result<ForwardOutput> {
        let n_in = self.n_inputs();
        if n_in == 0 || !inputs.len().is_multiple_of(n_in) {
            return Err(Error::ShapeMismatch {
                what: "network input",
                expected: n_in,
                actual: inputs.len() % n_in.max(1),
            });
        }
        let steps = inputs.len() / n_in;
        let dk = self.discrete_kernel();
        let mut state = self.state();
        if !history.is_empty() {
            self.prime(&mut state, history)?;
        } else if steps > 0 {
            self.settle(&mut state, &inputs[..n_in])?;
        }
        let n_out = self.n_outputs();
        let mut outputs = vec![0.0; steps * n_out];
        let mut counts = vec![0usize; self.layers.len()];
        let mut rasters: Option<Vec<SpikeTrain>> = record.then(|| {
            self.layers
                .iter()
                .map(|l| SpikeTrain {
                    n_neurons: l.n_out,
                    n_steps: steps,
                    dt: self.dt,
                    raster: vec![0; steps * l.n_out],
                })
                .collect()
        });
        for t in 0..steps {
            self.input_scaling
                .encode_into(&inputs[t * n_in..(t + 1) * n_in], &mut state.x);
            self.step_scaled(&mut state, &dk);
            self.output_scaling
                .decode_into(&state.y, &mut outputs[t * n_out..(t + 1) * n_out]);
            for (l, s) in state.s.iter().enumerate() {
                let fired = s.iter().filter(|&&x| x > 0.0).count();
                counts[l] += fired;
                if let Some(r) = rasters.as_mut() {
                    let n = s.len();
                    for (i, &x) in s.iter().enumerate() {
                        r[l].raster[t * n + i] = (x > 0.0) as u8;
                    }
                }
            }
        }
        Ok(ForwardOutput {
            outputs,
            spike_counts: counts,
            rasters,
        })
    }

    /// Checks weight shapes and scaling consistency.
    pub fn check(&self) -> Result<()> {
        let mut n = self.n_inputs();
        for l in self.layers.iter().chain(core::iter::once(&self.readout)) {
            if l.n_in != n || l.w.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::ShapeMismatch {
                    what: "network weights",
                    expected: n,
                    actual: l.n_in,
                });
            }
            n = l.n_out;
        }
        if self.input_scaling.channels() != self.n_inputs()
            || self.output_scaling.channels() != self.n_outputs()
        {
            return Err(Error::ShapeMismatch {
                what: "network scaling",
                expected: self.n_inputs(),
                actual: self.input_scaling.channels(),
            });
        }
        Ok(())
    }
}

fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SrmNetwork {
        SrmNetwork::new(4, &[32, 16], 2, KernelParams::default(), 1e-4, seed).unwrap()
    }

    fn wiggle(steps: usize) -> Vec<f64> {
        (0..steps)
            .flat_map(|t| {
                let x = t as f64 * 1e-3;
                [libm::sin(x), libm::cos(3.0 * x), 0.5, -0.2 * x]
            })
            .collect()
    }

    #[test]
    fn zero_input_without_bias_rests_at_readout_bias() {
        let mut net = small(1);
        for l in net.layers.iter_mut() {
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        net.readout.bias = vec![0.25, -1.0];
        net.readout.w.iter_mut().for_each(|w| *w = 1.0);
        net.output_scaling = ChannelScaling {
            offset: vec![48.0, 0.0],
            scale: vec![2.0, 1.0],
        };
        let out = net.forward(&vec![0.0; 4 * 50], false).unwrap();
        assert_eq!(out.spike_counts, vec![0, 0]);
        for t in 0..50 {
            assert_eq!(&out.outputs[2 * t..2 * t + 2], &[48.5, -1.0]);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = small(1);
        assert!(matches!(
            net.forward(&[0.0; 7], false),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut st = net.state();
        assert!(net.step(&mut st, &[0.0; 3]).is_err());
    }

    #[test]
    fn encoding_layer_is_active() {
        let net = small(2);
        let out = net.forward(&wiggle(400), true).unwrap();
        assert!(out.spike_counts[0] > 0);
        let r = out.rasters.unwrap();
        assert_eq!(r[0].count(), out.spike_counts[0]);
        assert!(r[0].raster.iter().all(|&b| b <= 1));
    }

    #[test]
    fn raising_threshold_never_adds_spikes() {
        let base = small(3);
        let input = wiggle(500);
        let mut prev = usize::MAX;
        for thr in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let mut net = base.clone();
            net.kernel.u_thr = thr;
            let c: usize = net
                .forward(&input, false)
                .unwrap()
                .spike_counts
                .iter()
                .sum();
            assert!(c <= prev, "thr {thr}: {c} > {prev}");
            prev = c;
        }
    }

    #[test]
    fn stepwise_equals_forward() {
        let mut net = small(4);
        net.readout
            .w
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = 0.01 * i as f64);
        let input = wiggle(100);
        let full = net.forward(&input, false).unwrap();
        let mut st = net.state();
        net.settle(&mut st, &input[..4]).unwrap();
        for t in 0..100 {
            let y = net.step(&mut st, &input[4 * t..4 * t + 4]).unwrap();
            assert_eq!(&y[..], &full.outputs[2 * t..2 * t + 2]);
        }
    }
    #[test]
    fn history_priming_equals_stepping_through_it() {
        let mut net = small(6);
        net.readout
            .w
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = 0.02 * i as f64);
        let all = wiggle(60);
        let (history, input) = all.split_at(4 * 40);
        let primed = net.forward_after(history, input, false).unwrap();
        let full = net.forward(&all, false).unwrap();
        assert_eq!(&primed.outputs[..], &full.outputs[2 * 40..]);
        assert_eq!(
            net.forward_after(&[], input, false).unwrap(),
            net.forward(input, false).unwrap()
        );
        assert!(net.forward_after(&[0.0; 3], input, false).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(small(9), small(9));
        assert_ne!(small(9), small(10));
    }
}
