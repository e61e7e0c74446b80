//! Match-mismatch networks.
//!
//! Each sub-network embeds the EEG window (spatial conv, then a dilated
//! temporal stack) and each candidate stimulus window (the same dilated
//! stack, weights shared between candidates), and compares them with a
//! per-filter cosine similarity. A dense layer with a sigmoid maps the
//! concatenated similarities to P(first candidate is the match).
//!
//! All weights live in one flat vector; layers address it by offset.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{cosine_rows, cosine_rows_backward, Activation, ConvShape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    SingleFeature,
    DualFeature,
}

impl Architecture {
    pub fn n_features(self) -> usize {
        match self {
            Architecture::SingleFeature => 1,
            Architecture::DualFeature => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub eeg_channels: usize,
    pub spatial_filters: usize,
    pub temporal_filters: usize,
    pub kernel_width: usize,
    pub dilations: Vec<usize>,
}

impl ModelConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            eeg_channels: 64,
            spatial_filters: 8,
            temporal_filters: 16,
            kernel_width: 3,
            dilations: vec![1, 3, 9],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eeg_channels == 0
            || self.spatial_filters == 0
            || self.temporal_filters == 0
            || self.kernel_width == 0
            || self.dilations.is_empty()
            || self.dilations.contains(&0)
        {
            return Err(Error::InvalidArgument(format!("degenerate model configuration {self:?}")));
        }
        Ok(())
    }

    /// Samples consumed by one output sample of the temporal stack.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations.iter().map(|d| (self.kernel_width - 1) * d).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSlot {
    pub shape: ConvShape,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSlot {
    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.weight_offset..self.weight_offset + self.shape.n_weights()]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.bias_offset..self.bias_offset + self.shape.filters]
    }
}

/// A chain of convolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub layers: Vec<LayerSlot>,
}

/// Activations of one stream pass: `acts[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct StreamCache {
    pub acts: Vec<Vec<f64>>,
    pub lens: Vec<usize>,
}

impl StreamCache {
    pub fn output(&self) -> (&[f64], usize) {
        (self.acts.last().unwrap(), *self.lens.last().unwrap())
    }
}

impl Stream {
    pub fn forward(&self, params: &[f64], input: Vec<f64>, t: usize) -> StreamCache {
        let mut cache = StreamCache { acts: vec![input], lens: vec![t] };
        for l in &self.layers {
            let mut out = Vec::new();
            let t_in = *cache.lens.last().unwrap();
            let t_out = l.shape.forward(l.weights(params), l.bias(params), cache.acts.last().unwrap(), t_in, &mut out);
            cache.acts.push(out);
            cache.lens.push(t_out);
        }
        cache
    }

    /// Accumulates parameter gradients from the gradient at the stream
    /// output. Returns the input gradient when `want_input` is set.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &StreamCache,
        grad_out: Vec<f64>,
        grads: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let mut g = grad_out;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let need_x = i > 0 || want_input;
            let mut gx = if need_x { vec![0.0; cache.acts[i].len()] } else { Vec::new() };
            let (gw, gb) = split_grads(grads, l);
            l.shape.backward(
                l.weights(params),
                &cache.acts[i],
                cache.lens[i],
                &cache.acts[i + 1],
                &mut g,
                gw,
                gb,
                need_x.then_some(gx.as_mut_slice()),
            );
            g = gx;
        }
        want_input.then_some(g)
    }
}

fn split_grads<'a>(grads: &'a mut [f64], l: &LayerSlot) -> (&'a mut [f64], &'a mut [f64]) {
    // weights precede the bias in every slot
    let (a, b) = grads.split_at_mut(l.bias_offset);
    (&mut a[l.weight_offset..l.weight_offset + l.shape.n_weights()], &mut b[..l.shape.filters])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubNetwork {
    pub eeg: Stream,
    pub speech: Stream,
}

/// One match-mismatch input: an EEG window (`channels x T`) and two
/// candidate windows (`features x T` each, row `i` feeding sub-network `i`).
#[derive(Debug, Clone, Copy)]
pub struct ExampleView<'a> {
    pub eeg: &'a [f64],
    pub first: &'a [f64],
    pub second: &'a [f64],
    pub t: usize,
}

/// Cached forward pass of one example, reusable for both candidate orders.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    eeg: Vec<StreamCache>,
    first: Vec<StreamCache>,
    second: Vec<StreamCache>,
    /// similarities `[sub][0 = first, 1 = second][filter]`
    sims: Vec<[Vec<f64>; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchMismatchModel {
    config: ModelConfig,
    subnets: Vec<SubNetwork>,
    head_weight_offset: usize,
    head_bias_offset: usize,
    #[serde(skip)]
    params: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy computed from the logit, stable for large |z|.
pub fn bce_with_logit(z: f64, target: f64) -> f64 {
    // -[y log s(z) + (1-y) log(1-s(z))] = max(z,0) - y z + log(1 + e^-|z|)
    z.max(0.0) - target * z + (-z.abs()).exp().ln_1p()
}

impl MatchMismatchModel {
    /// Builds the model with all parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut offset = 0;
        let mut slot = |shape: ConvShape| {
            let s = LayerSlot { shape, weight_offset: offset, bias_offset: offset + shape.n_weights() };
            offset += shape.n_weights() + shape.filters;
            s
        };
        let temporal = |slot: &mut dyn FnMut(ConvShape) -> LayerSlot, input: usize| {
            let mut layers = Vec::new();
            let mut c = input;
            for &d in &config.dilations {
                layers.push(slot(ConvShape {
                    in_channels: c,
                    filters: config.temporal_filters,
                    width: config.kernel_width,
                    dilation: d,
                    activation: Activation::Relu,
                }));
                c = config.temporal_filters;
            }
            layers
        };
        let mut subnets = Vec::new();
        for _ in 0..config.architecture.n_features() {
            let spatial = slot(ConvShape {
                in_channels: config.eeg_channels,
                filters: config.spatial_filters,
                width: 1,
                dilation: 1,
                activation: Activation::None,
            });
            let mut eeg_layers = vec![spatial];
            eeg_layers.extend(temporal(&mut slot, config.spatial_filters));
            let speech_layers = temporal(&mut slot, 1);
            subnets.push(SubNetwork { eeg: Stream { layers: eeg_layers }, speech: Stream { layers: speech_layers } });
        }
        let n_sims = 2 * config.temporal_filters * subnets.len();
        let head_weight_offset = offset;
        let head_bias_offset = offset + n_sims;
        let n_params = head_bias_offset + 1;
        Ok(Self { config, subnets, head_weight_offset, head_bias_offset, params: vec![0.0; n_params] })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, rng: &mut crate::rng::Rng) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let slots: Vec<LayerSlot> = m.subnets.iter().flat_map(|s| s.eeg.layers.iter().chain(&s.speech.layers)).copied().collect();
        for l in slots {
            let fan_in = (l.shape.in_channels * l.shape.width) as f64;
            let fan_out = (l.shape.filters * l.shape.width) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for w in &mut m.params[l.weight_offset..l.weight_offset + l.shape.n_weights()] {
                *w = rng.random_range(-limit..limit);
            }
        }
        let n = m.head_len() as f64;
        let limit = (6.0 / (n + 1.0)).sqrt();
        let (a, b) = (m.head_weight_offset, m.head_bias_offset);
        for w in &mut m.params[a..b] {
            *w = rng.random_range(-limit..limit);
        }
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn subnets(&self) -> &[SubNetwork] {
        &self.subnets
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, p: Vec<f64>) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.params.len(), p.len())));
        }
        self.params = p;
        Ok(())
    }

    fn head_len(&self) -> usize {
        self.head_bias_offset - self.head_weight_offset
    }

    /// Named parameter blocks in storage order, for checkpoints.
    pub fn layout(&self) -> Vec<(String, usize, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, s) in self.subnets.iter().enumerate() {
            for (stream, layers) in [("eeg", &s.eeg.layers), ("speech", &s.speech.layers)] {
                for (j, l) in layers.iter().enumerate() {
                    let sh = l.shape;
                    out.push((format!("sub{i}.{stream}.conv{j}.kernel"), l.weight_offset, vec![sh.filters, sh.in_channels, sh.width]));
                    out.push((format!("sub{i}.{stream}.conv{j}.bias"), l.bias_offset, vec![sh.filters]));
                }
            }
        }
        out.push(("head.weight".into(), self.head_weight_offset, vec![self.head_len()]));
        out.push(("head.bias".into(), self.head_bias_offset, vec![1]));
        out
    }

    fn check_view(&self, x: &ExampleView<'_>) -> Result<()> {
        let nf = self.subnets.len();
        let c = self.config.eeg_channels;
        if x.eeg.len() != c * x.t || x.first.len() != nf * x.t || x.second.len() != nf * x.t {
            return Err(Error::Shape(format!(
                "expected {c} EEG rows and {nf} stimulus rows of {} samples",
                x.t
            )));
        }
        if x.t < self.config.receptive_field() {
            return Err(Error::Shape(format!(
                "window of {} samples is shorter than the receptive field {}",
                x.t,
                self.config.receptive_field()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ExampleView<'_>) -> Result<ForwardPass> {
        self.check_view(x)?;
        let t = x.t;
        let f = self.config.temporal_filters;
        let mut pass = ForwardPass { eeg: vec![], first: vec![], second: vec![], sims: vec![] };
        for (i, s) in self.subnets.iter().enumerate() {
            let e = s.eeg.forward(&self.params, x.eeg.to_vec(), t);
            let a = s.speech.forward(&self.params, x.first[i * t..(i + 1) * t].to_vec(), t);
            let b = s.speech.forward(&self.params, x.second[i * t..(i + 1) * t].to_vec(), t);
            let (eo, te) = e.output();
            let mut sa = vec![0.0; f];
            let mut sb = vec![0.0; f];
            cosine_rows(eo, a.output().0, f, te, &mut sa);
            cosine_rows(eo, b.output().0, f, te, &mut sb);
            pass.eeg.push(e);
            pass.first.push(a);
            pass.second.push(b);
            pass.sims.push([sa, sb]);
        }
        Ok(pass)
    }

    /// Head input for one candidate order: `[s(e, c1), s(e, c2)]` per
    /// sub-network.
    fn head_input(&self, pass: &ForwardPass, swapped: bool) -> Vec<f64> {
        let (i, j) = if swapped { (1, 0) } else { (0, 1) };
        pass.sims.iter().flat_map(|s| s[i].iter().chain(&s[j]).copied()).collect()
    }

    fn logit(&self, z: &[f64]) -> f64 {
        let w = &self.params[self.head_weight_offset..self.head_bias_offset];
        self.params[self.head_bias_offset] + w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Head logits for the given and swapped candidate order.
    pub fn logits(&self, pass: &ForwardPass) -> (f64, f64) {
        (self.logit(&self.head_input(pass, false)), self.logit(&self.head_input(pass, true)))
    }

    /// P(first candidate is the match) for the given and swapped order.
    pub fn probabilities(&self, pass: &ForwardPass) -> (f64, f64) {
        let (a, b) = self.logits(pass);
        (sigmoid(a), sigmoid(b))
    }

    pub fn predict(&self, x: &ExampleView<'_>) -> Result<f64> {
        Ok(self.probabilities(&self.forward(x)?).0)
    }

    /// Adds `scale * dLoss/dparams` to `grads` for the listed orientations
    /// (`(swapped, target)`), where the loss is binary cross-entropy.
    /// Returns the summed loss and, if requested, the input gradients
    /// `(eeg, first, second)`.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        orientations: &[(bool, f64)],
        scale: f64,
        grads: &mut [f64],
        want_input: bool,
    ) -> (f64, Option<(Vec<f64>, Vec<f64>, Vec<f64>)>) {
        let f = self.config.temporal_filters;
        let n_sub = self.subnets.len();
        let hw = self.head_weight_offset;
        let hb = self.head_bias_offset;
        // gradient w.r.t. similarities in unswapped order
        let mut gsims: Vec<[Vec<f64>; 2]> = (0..n_sub).map(|_| [vec![0.0; f], vec![0.0; f]]).collect();
        let mut loss = 0.0;
        for &(swapped, target) in orientations {
            let z = self.head_input(pass, swapped);
            let logit = self.logit(&z);
            loss += bce_with_logit(logit, target);
            let d = scale * (sigmoid(logit) - target);
            for (k, zk) in z.iter().enumerate() {
                grads[hw + k] += d * zk;
            }
            grads[hb] += d;
            let w = &self.params[hw..hb];
            for (s, g) in gsims.iter_mut().enumerate() {
                let base = s * 2 * f;
                let (i, j) = if swapped { (1, 0) } else { (0, 1) };
                for k in 0..f {
                    g[i][k] += d * w[base + k];
                    g[j][k] += d * w[base + f + k];
                }
            }
        }
        let mut inputs: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        let t = pass.eeg[0].lens[0];
        if want_input {
            inputs = Some((vec![0.0; self.config.eeg_channels * t], vec![0.0; n_sub * t], vec![0.0; n_sub * t]));
        }
        for (s, net) in self.subnets.iter().enumerate() {
            let (eo, te) = pass.eeg[s].output();
            let mut ge = vec![0.0; eo.len()];
            let mut ga = vec![0.0; eo.len()];
            let mut gb = vec![0.0; eo.len()];
            let mut scratch = vec![0.0; eo.len()];
            cosine_rows_backward(eo, pass.first[s].output().0, f, te, &gsims[s][0], &mut ge, &mut ga);
            cosine_rows_backward(eo, pass.second[s].output().0, f, te, &gsims[s][1], &mut scratch, &mut gb);
            for (a, b) in ge.iter_mut().zip(&scratch) {
                *a += b;
            }
            let gx_e = net.eeg.backward(&self.params, &pass.eeg[s], ge, grads, want_input);
            let gx_a = net.speech.backward(&self.params, &pass.first[s], ga, grads, want_input);
            let gx_b = net.speech.backward(&self.params, &pass.second[s], gb, grads, want_input);
            if let Some((ie, ia, ib)) = inputs.as_mut() {
                for (d, v) in ie.iter_mut().zip(gx_e.unwrap()) {
                    *d += v;
                }
                ia[s * t..(s + 1) * t].copy_from_slice(&gx_a.unwrap());
                ib[s * t..(s + 1) * t].copy_from_slice(&gx_b.unwrap());
            }
        }
        (loss, inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiny(arch: Architecture) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            eeg_channels: 3,
            spatial_filters: 2,
            temporal_filters: 3,
            kernel_width: 3,
            dilations: vec![1, 2],
        }
    }

    fn random_vec(n: usize, r: &mut rng::Rng) -> Vec<f64> {
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    fn loss_of(m: &MatchMismatchModel, x: &ExampleView<'_>, orient: &[(bool, f64)]) -> f64 {
        let pass = m.forward(x).unwrap();
        orient
            .iter()
            .map(|&(s, y)| bce_with_logit(m.logit(&m.head_input(&pass, s)), y))
            .sum()
    }

    fn check_gradients(arch: Architecture) {
        let mut r = rng::stream(7, 1);
        let cfg = tiny(arch);
        let mut m = MatchMismatchModel::init(cfg.clone(), &mut r).unwrap();
        // positive biases keep ReLUs away from their kink
        for s in m.subnets.clone() {
            for l in s.eeg.layers.iter().chain(&s.speech.layers) {
                for b in &mut m.params[l.bias_offset..l.bias_offset + l.shape.filters] {
                    *b = 0.3;
                }
            }
        }
        let t = 20;
        let nf = arch.n_features();
        let eeg = random_vec(3 * t, &mut r);
        let first = random_vec(nf * t, &mut r);
        let second = random_vec(nf * t, &mut r);
        let x = ExampleView { eeg: &eeg, first: &first, second: &second, t };
        let orient = [(false, 1.0), (true, 0.0)];
        let pass = m.forward(&x).unwrap();
        let mut g = vec![0.0; m.n_params()];
        let (_, inputs) = m.backward(&pass, &orient, 1.0, &mut g, true);
        let h = 1e-6;
        for k in 0..m.n_params() {
            let mut mp = m.clone();
            mp.params[k] += h;
            let mut mm = m.clone();
            mm.params[k] -= h;
            let fd = (loss_of(&mp, &x, &orient) - loss_of(&mm, &x, &orient)) / (2.0 * h);
            let tol = 1e-6 * (1.0 + fd.abs().max(g[k].abs()));
            assert!((fd - g[k]).abs() < tol.max(1e-7), "param {k}: fd {fd} vs {}", g[k]);
        }
        let (ge, ga, _) = inputs.unwrap();
        for idx in [0, 7, 3 * t - 1] {
            let mut e2 = eeg.clone();
            e2[idx] += h;
            let up = loss_of(&m, &ExampleView { eeg: &e2, ..x }, &orient);
            e2[idx] -= 2.0 * h;
            let dn = loss_of(&m, &ExampleView { eeg: &e2, ..x }, &orient);
            assert!(((up - dn) / (2.0 * h) - ge[idx]).abs() < 1e-6);
        }
        for idx in [0, t / 2, nf * t - 1] {
            let mut a2 = first.clone();
            a2[idx] += h;
            let up = loss_of(&m, &ExampleView { first: &a2, ..x }, &orient);
            a2[idx] -= 2.0 * h;
            let dn = loss_of(&m, &ExampleView { first: &a2, ..x }, &orient);
            assert!(((up - dn) / (2.0 * h) - ga[idx]).abs() < 1e-6);
        }
    }

    #[test]
    fn single_feature_gradients_match_finite_differences() {
        check_gradients(Architecture::SingleFeature);
    }

    #[test]
    fn dual_feature_gradients_match_finite_differences() {
        check_gradients(Architecture::DualFeature);
    }

    #[test]
    fn inputs_outside_receptive_field_get_no_gradient() {
        let mut r = rng::stream(3, 0);
        let m = MatchMismatchModel::init(tiny(Architecture::SingleFeature), &mut r).unwrap();
        let stream = &m.subnets[0].speech;
        let t = 30;
        let x = random_vec(t, &mut r);
        let cache = stream.forward(&m.params, x, t);
        let (out, t_out) = cache.output();
        // gradient only at output position 0 of every filter
        let mut g = vec![0.0; out.len()];
        for f in 0..3 {
            g[f * t_out] = 1.0;
        }
        let mut grads = vec![0.0; m.n_params()];
        let gx = stream.backward(&m.params, &cache, g, &mut grads, true).unwrap();
        let rf = m.config.receptive_field();
        // brute force: inputs reachable from output 0 through taps k * d
        let mut reach = vec![false; t];
        let mut frontier = vec![0usize];
        for &d in m.config.dilations.iter().rev() {
            frontier = frontier.iter().flat_map(|&p| (0..3).map(move |k| p + k * d)).collect();
        }
        for p in frontier {
            reach[p] = true;
        }
        assert_eq!(reach.iter().rposition(|&b| b), Some(rf - 1));
        for (i, v) in gx.iter().enumerate() {
            if !reach[i] {
                assert_eq!(*v, 0.0, "input {i}");
            }
        }
    }

    #[test]
    fn swapping_candidates_mirrors_similarities() {
        let mut r = rng::stream(5, 0);
        let m = MatchMismatchModel::init(tiny(Architecture::DualFeature), &mut r).unwrap();
        let t = 25;
        let eeg = random_vec(3 * t, &mut r);
        let a = random_vec(2 * t, &mut r);
        let b = random_vec(2 * t, &mut r);
        let p = m.forward(&ExampleView { eeg: &eeg, first: &a, second: &b, t }).unwrap();
        let q = m.forward(&ExampleView { eeg: &eeg, first: &b, second: &a, t }).unwrap();
        assert_eq!(m.probabilities(&p).1, m.probabilities(&q).0);
        assert_eq!(m.head_len(), 4 * 3);
    }

    #[test]
    fn bad_shapes_error() {
        let m = MatchMismatchModel::zeros(tiny(Architecture::SingleFeature)).unwrap();
        let v = vec![0.0; 30];
        assert!(m.forward(&ExampleView { eeg: &v[..20], first: &v[..10], second: &v[..10], t: 10 }).is_err());
        assert!(m.forward(&ExampleView { eeg: &v, first: &v[..10], second: &v[..10], t: 10 }).is_ok());
        let short = vec![0.0; 3 * 4];
        assert!(m.forward(&ExampleView { eeg: &short, first: &short[..4], second: &short[..4], t: 4 }).is_err());
    }

    #[test]
    fn stable_cross_entropy() {
        assert!((bce_with_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logit(800.0, 1.0) < 1e-300 + 1e-15);
        assert!((bce_with_logit(-800.0, 1.0) - 800.0).abs() < 1e-9);
    }
}
