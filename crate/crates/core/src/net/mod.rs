//! MLP discretization of the phase field.
//!
//! The network maps a point `x ∈ [0,1]³` through `tanh` hidden layers to a
//! scalar pre-activation `t`, and returns `û = (tanh(t) + 1) / 2`, so the
//! field always lies strictly inside `(0, 1)`.
//!
//! Spatial gradients are carried exactly by forward tangent propagation: each
//! point is evaluated together with its three directional derivatives, stored
//! as four column blocks `[value | ∂x | ∂y | ∂z]` of every activation matrix.
//! A hand-written reverse pass over that augmented forward then yields the
//! parameter gradient of any scalar loss built from `û` and `∇û`, including
//! the mixed terms `∂²û/∂x∂θ` the gradient energy needs.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::fastmath;
use crate::fsutil;
use crate::rng;

mod kernels;

use kernels::COL_TILE;

/// Two hidden layers of width 30.
pub const DEFAULT_WIDTHS: [usize; 4] = [3, 30, 30, 1];

const CHECKPOINT_MAGIC: &str = "phasefield-net v1";

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    /// `out × in`
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl Dense {
    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// The phase field `û(x; θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseFieldNet {
    layers: Vec<Dense>,
}

/// Flat parameter vector in the order `[W₁, b₁, W₂, b₂, …]`, weights row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGradient(pub Vec<f64>);

impl ParameterGradient {
    pub fn zeros(len: usize) -> Self {
        ParameterGradient(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn add_assign(&mut self, other: &ParameterGradient) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::BadShape(format!("need at least input and output widths, got {widths:?}")));
    }
    if widths[0] != 3 {
        return Err(Error::BadShape(format!("input width must be 3, got {}", widths[0])));
    }
    if *widths.last().unwrap() != 1 {
        return Err(Error::BadShape(format!("output width must be 1, got {}", widths.last().unwrap())));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::BadShape(format!("zero-width layer in {widths:?}")));
    }
    Ok(())
}

/// Number of parameters of a network with the given widths.
pub fn param_count_for(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl PhaseFieldNet {
    /// All weights and biases zero, so `û ≡ 0.5`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(PhaseFieldNet { layers })
    }

    /// Fan-in scaled uniform weights `U(−1/√fan_in, 1/√fan_in)`, zero biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let mut rng = rng::seeded(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.ncols() as f64).sqrt();
            layer
                .weight
                .iter_mut()
                .for_each(|w| *w = rng.gen_range(-bound..bound));
        }
        Ok(net)
    }

    /// Build a network from a flat parameter vector.
    pub fn from_params(widths: &[usize], params: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        if params.len() != net.param_count() {
            return Err(Error::BadShape(format!(
                "expected {} parameters for widths {widths:?}, got {}",
                net.param_count(),
                params.len()
            )));
        }
        net.set_params(params);
        Ok(net)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.ncols()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    /// Overwrite all parameters. Panics if the length is wrong.
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter length mismatch");
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
    }

    /// Apply `f(param, index)` to every parameter in flat order.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                f(offset, w);
                offset += 1;
            }
        }
    }

    /// Direct access to one layer's weights (`out × in`) and biases.
    pub fn layer_mut(&mut self, index: usize) -> (&mut Array2<f64>, &mut Array1<f64>) {
        let layer = &mut self.layers[index];
        (&mut layer.weight, &mut layer.bias)
    }

    pub fn forward(&self, x: [f64; 3]) -> f64 {
        self.forward_batch(&[x], false).0.values[0]
    }

    /// `(û(x), ∇û(x))`.
    pub fn forward_with_grad(&self, x: [f64; 3]) -> (f64, [f64; 3]) {
        let (out, _) = self.forward_batch(&[x], true);
        (out.values[0], out.grads.unwrap()[0])
    }

    /// Values only, evaluated in bounded chunks.
    pub fn values(&self, points: &[[f64; 3]]) -> Vec<f64> {
        let mut out = Vec::with_capacity(points.len());
        let mut tape = Tape::default();
        for chunk in points.chunks(EVAL_CHUNK) {
            self.forward_into(chunk, false, &mut tape);
            out.extend_from_slice(tape.values());
        }
        out
    }

    /// Batched forward pass into a fresh tape.
    pub fn forward_batch(&self, points: &[[f64; 3]], with_grad: bool) -> (BatchOutput, Tape) {
        let mut tape = Tape::default();
        self.forward_into(points, with_grad, &mut tape);
        let out = BatchOutput {
            values: tape.values.clone(),
            grads: with_grad.then(|| tape.grads.clone()),
        };
        (out, tape)
    }

    /// Batched forward pass reusing the buffers of `tape`. With `with_grad`
    /// the tape also holds `∇û` and can be differentiated through it by
    /// [`PhaseFieldNet::backward`].
    pub fn forward_into(&self, points: &[[f64; 3]], with_grad: bool, tape: &mut Tape) {
        let n = points.len();
        let channels = if with_grad { 4 } else { 1 };
        let stride = n.div_ceil(COL_TILE).max(1) * COL_TILE;
        let cols = stride * channels;
        tape.n = n;
        tape.stride = stride;
        tape.channels = channels;
        let widths = self.widths();
        tape.acts.resize_with(self.layers.len(), Vec::new);

        let input = &mut tape.acts[0];
        input.clear();
        input.resize(3 * cols, 0.0);
        for (j, p) in points.iter().enumerate() {
            for k in 0..3 {
                input[k * cols + j] = p[k];
                if with_grad {
                    input[k * cols + (k + 1) * stride + j] = 1.0;
                }
            }
        }

        let last = self.layers.len() - 1;
        for (li, layer) in self.layers[..last].iter().enumerate() {
            let (done, rest) = tape.acts.split_at_mut(li + 1);
            let y = &done[li];
            let z = &mut rest[0];
            let (rows, inner) = (widths[li + 1], widths[li]);
            z.resize(rows * cols, 0.0);
            kernels::matmul_nn(layer.weight.as_slice().unwrap(), y, z, rows, inner, cols);
            for (row, &b) in z.chunks_exact_mut(cols).zip(layer.bias.iter()) {
                let (val, tangents) = row.split_at_mut(stride);
                fastmath::tanh_bias_in_place(val, b);
                for tangent in tangents.chunks_exact_mut(stride) {
                    for (t, s) in tangent.iter_mut().zip(val.iter()) {
                        *t *= 1.0 - s * s;
                    }
                }
            }
        }

        let out_layer = &self.layers[last];
        tape.out_z.resize(cols, 0.0);
        kernels::matmul_nn(
            out_layer.weight.as_slice().unwrap(),
            &tape.acts[last],
            &mut tape.out_z,
            1,
            widths[last],
            cols,
        );
        let b = out_layer.bias[0];
        tape.out_tanh.clear();
        tape.values.clear();
        for &zj in &tape.out_z[..n] {
            let t = fastmath::tanh(zj + b);
            tape.out_tanh.push(t);
            tape.values.push(0.5 * (t + 1.0));
        }
        tape.grads.clear();
        if with_grad {
            let z = &tape.out_z;
            tape.grads.extend((0..n).map(|j| {
                let t = tape.out_tanh[j];
                let d = 0.5 * (1.0 - t * t);
                [d * z[stride + j], d * z[2 * stride + j], d * z[3 * stride + j]]
            }));
        }
    }

    /// Accumulate `∂L/∂θ` into `grad`, given the loss sensitivities
    /// `seed_value[j] = ∂L/∂û(x_j)` and `seed_grad[j] = ∂L/∂∇û(x_j)`.
    ///
    /// `seed_grad` must be `Some` exactly when the tape carries tangents.
    pub fn backward(
        &self,
        tape: &mut Tape,
        seed_value: &[f64],
        seed_grad: Option<&[[f64; 3]]>,
        grad: &mut ParameterGradient,
    ) {
        let n = tape.n;
        let stride = tape.stride;
        let ch = tape.channels;
        let cols = stride * ch;
        assert_eq!(seed_value.len(), n);
        assert_eq!(seed_grad.is_some(), ch == 4, "gradient seeds must match the tape");
        assert_eq!(grad.len(), self.param_count());
        let widths = self.widths();

        let mut zbar = std::mem::take(&mut tape.zbar);
        let mut ybar = std::mem::take(&mut tape.ybar);
        zbar.clear();
        zbar.resize(cols, 0.0);
        for j in 0..n {
            let t = tape.out_tanh[j];
            let d = 0.5 * (1.0 - t * t);
            match seed_grad {
                Some(sg) => {
                    let g = sg[j];
                    let z = &tape.out_z;
                    let dot = g[0] * z[stride + j] + g[1] * z[2 * stride + j] + g[2] * z[3 * stride + j];
                    zbar[j] = d * (seed_value[j] - 2.0 * t * dot);
                    for k in 0..3 {
                        zbar[(k + 1) * stride + j] = d * g[k];
                    }
                }
                None => zbar[j] = d * seed_value[j],
            }
        }

        let offsets = self.layer_offsets();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (rows, inner) = (widths[li + 1], widths[li]);
            let input = &tape.acts[li];
            let off = offsets[li];
            let dst = &mut grad.0[off..off + layer.param_count()];
            let (dw, db) = dst.split_at_mut(rows * inner);
            kernels::matmul_nt_acc(&zbar, input, dw, rows, inner, cols);
            for (d, row) in db.iter_mut().zip(zbar.chunks_exact(cols)) {
                *d += row[..n].iter().sum::<f64>();
            }
            if li == 0 {
                break;
            }

            tape.wt.clear();
            tape.wt.extend(layer.weight.t().iter());
            ybar.resize(inner * cols, 0.0);
            kernels::matmul_nn(&tape.wt, &zbar, &mut ybar, inner, rows, cols);
            for (yb_row, y_row) in ybar.chunks_exact_mut(cols).zip(input.chunks_exact(cols)) {
                let (yb_val, yb_tan) = yb_row.split_at_mut(stride);
                let (y_val, y_tan) = y_row.split_at(stride);
                for (yb, s) in yb_val.iter_mut().zip(y_val) {
                    *yb *= 1.0 - s * s;
                }
                for (ybt, yt) in yb_tan.chunks_exact_mut(stride).zip(y_tan.chunks_exact(stride)) {
                    for j in 0..stride {
                        let s = y_val[j];
                        yb_val[j] -= 2.0 * s * ybt[j] * yt[j];
                        ybt[j] *= 1.0 - s * s;
                    }
                }
            }
            std::mem::swap(&mut zbar, &mut ybar);
        }
        tape.zbar = zbar;
        tape.ybar = ybar;
    }

    fn layer_offsets(&self) -> Vec<usize> {
        self.layers
            .iter()
            .scan(0, |acc, l| {
                let off = *acc;
                *acc += l.param_count();
                Some(off)
            })
            .collect()
    }

    /// Text checkpoint: a magic line, the widths, then one parameter per line.
    /// Floats are written in shortest round-trip form, so loading is exact.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
        let widths: Vec<String> = self.widths().iter().map(|w| w.to_string()).collect();
        writeln!(out, "widths {}", widths.join(" ")).unwrap();
        for p in self.params() {
            writeln!(out, "{p:?}").unwrap();
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Format("not a phasefield checkpoint".into()));
        }
        let widths_line = lines
            .next()
            .and_then(|l| l.trim().strip_prefix("widths"))
            .ok_or_else(|| Error::Format("missing widths header".into()))?;
        let widths = widths_line
            .split_whitespace()
            .map(|w| w.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("bad width: {e}")))?;
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("bad parameter: {e}")))?;
        Self::from_params(&widths, &params).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_checkpoint_string().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text)
    }
}

/// Points per chunk for batched evaluation of large point sets.
pub const EVAL_CHUNK: usize = 2048;

#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub values: Vec<f64>,
    pub grads: Option<Vec<[f64; 3]>>,
}

/// Activations of one batched forward pass, plus scratch for the reverse
/// pass. Reusing a tape across calls avoids reallocating its buffers.
#[derive(Default)]
pub struct Tape {
    n: usize,
    /// Per-channel column block length, `n` rounded up to the kernel tile.
    stride: usize,
    channels: usize,
    /// Input of each layer, `width × (stride · channels)`.
    acts: Vec<Vec<f64>>,
    out_z: Vec<f64>,
    out_tanh: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
    zbar: Vec<f64>,
    ybar: Vec<f64>,
    wt: Vec<f64>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spatial gradients, if the pass carried tangents.
    pub fn grads(&self) -> Option<&[[f64; 3]]> {
        (self.channels == 4).then_some(&self.grads[..])
    }
}
