//! Convolutional feature extractors: a stack of valid-padding convolutions,
//! each followed by ReLU.

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3, Axis};
use rand::Rng;
use ndarray::parallel::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    pub fn output_extent(&self, input: usize) -> Option<usize> {
        (input >= self.kernel).then(|| (input - self.kernel) / self.stride + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub shape: ConvShape,
    /// `(kernel * kernel * in_channels, out_channels)`, rows ordered (ky, kx, c).
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl ConvLayer {
    pub fn random(shape: ConvShape, rng: &mut impl Rng) -> Self {
        let fan_in = shape.patch_len();
        let limit = (6.0 / fan_in as f32).sqrt();
        let weight = Array2::from_shape_fn((fan_in, shape.out_channels), |_| rng.random_range(-limit..limit));
        Self {
            shape,
            weight,
            bias: Array1::zeros(shape.out_channels),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn im2col(&self, x: ArrayView3<f32>) -> Array2<f32> {
        let ConvShape { kernel: k, stride, in_channels: cin, .. } = self.shape;
        let (h, w, _) = x.dim();
        let ho = (h - k) / stride + 1;
        let wo = (w - k) / stride + 1;
        let mut patches = Array2::<f32>::zeros((ho * wo, k * k * cin));
        for oy in 0..ho {
            for ox in 0..wo {
                let mut row = patches.row_mut(oy * wo + ox);
                let window = x.slice(s![oy * stride..oy * stride + k, ox * stride..ox * stride + k, ..]);
                for (dst, &v) in row.iter_mut().zip(window.iter()) {
                    *dst = v;
                }
            }
        }
        patches
    }

    /// Returns (patches, post-ReLU activations as `(ho*wo, cout)`).
    fn forward_image(&self, x: ArrayView3<f32>) -> (Array2<f32>, Array2<f32>) {
        let patches = self.im2col(x);
        let mut out = patches.dot(&self.weight);
        out += &self.bias;
        out.mapv_inplace(|v| v.max(0.0));
        (patches, out)
    }

    /// Scatter-adds patch gradients back into an input-shaped gradient.
    fn col2im(&self, dpatches: &Array2<f32>, input_dim: (usize, usize, usize)) -> Array3<f32> {
        let ConvShape { kernel: k, stride, .. } = self.shape;
        let (h, w, c) = input_dim;
        let wo = (w - k) / stride + 1;
        let mut dx = Array3::<f32>::zeros((h, w, c));
        for (p, row) in dpatches.outer_iter().enumerate() {
            let (oy, ox) = (p / wo, p % wo);
            let mut window = dx.slice_mut(s![oy * stride..oy * stride + k, ox * stride..ox * stride + k, ..]);
            for (dst, &g) in window.iter_mut().zip(row.iter()) {
                *dst += g;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
}

/// Per-image intermediate values kept for the backward pass.
pub(crate) struct ImageTrace {
    input_dims: Vec<(usize, usize, usize)>,
    patches: Vec<Array2<f32>>,
    outputs: Vec<Array2<f32>>,
}

pub(crate) struct ConvGrad {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl ConvStack {
    /// Two strided 3x3 convolutions, 3 -> 16 -> 64 channels.
    pub fn stub_shapes() -> Vec<ConvShape> {
        vec![
            ConvShape { in_channels: 3, out_channels: 16, kernel: 3, stride: 2 },
            ConvShape { in_channels: 16, out_channels: 64, kernel: 3, stride: 2 },
        ]
    }

    pub fn random(shapes: &[ConvShape], rng: &mut impl Rng) -> Self {
        Self {
            layers: shapes.iter().map(|&s| ConvLayer::random(s, rng)).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<ConvShape> {
        self.layers.iter().map(|l| l.shape).collect()
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map(|l| l.shape.out_channels).unwrap_or(3)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::parameter_count).sum()
    }

    /// Spatial extent of the final feature map, or `None` when the input is
    /// too small for the stack.
    pub fn output_extent(&self, input: usize) -> Option<usize> {
        self.layers.iter().try_fold(input, |e, l| l.shape.output_extent(e))
    }

    pub fn check_shapes(&self) -> Result<(), String> {
        let mut channels = 3;
        for (i, l) in self.layers.iter().enumerate() {
            let sh = l.shape;
            if sh.in_channels != channels || sh.kernel == 0 || sh.stride == 0 || sh.out_channels == 0 {
                return Err(format!("layer {i} has inconsistent shape {sh:?}"));
            }
            if l.weight.dim() != (sh.patch_len(), sh.out_channels) || l.bias.len() != sh.out_channels {
                return Err(format!("layer {i} tensors do not match shape {sh:?}"));
            }
            channels = sh.out_channels;
        }
        Ok(())
    }

    fn trace_image(&self, x: ArrayView3<f32>) -> ImageTrace {
        let mut trace = ImageTrace {
            input_dims: Vec::with_capacity(self.layers.len()),
            patches: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut current = x.to_owned();
        for layer in &self.layers {
            let (h, w, c) = current.dim();
            let (patches, out) = layer.forward_image(current.view());
            let ho = (h - layer.shape.kernel) / layer.shape.stride + 1;
            let wo = (w - layer.shape.kernel) / layer.shape.stride + 1;
            trace.input_dims.push((h, w, c));
            current = out
                .clone()
                .into_shape_with_order((ho, wo, layer.shape.out_channels))
                .expect("conv output is contiguous");
            trace.patches.push(patches);
            trace.outputs.push(out);
        }
        trace
    }

    fn pooled_image(&self, x: ArrayView3<f32>) -> Array1<f32> {
        let mut current = x.to_owned();
        let mut last: Option<Array2<f32>> = None;
        for layer in &self.layers {
            let (h, w, _) = current.dim();
            let (_, out) = layer.forward_image(current.view());
            let ho = (h - layer.shape.kernel) / layer.shape.stride + 1;
            let wo = (w - layer.shape.kernel) / layer.shape.stride + 1;
            current = out
                .clone()
                .into_shape_with_order((ho, wo, layer.shape.out_channels))
                .expect("conv output is contiguous");
            last = Some(out);
        }
        match last {
            Some(out) => out.mean_axis(Axis(0)).expect("non-empty feature map"),
            None => {
                let (h, w, c) = current.dim();
                current
                    .into_shape_with_order((h * w, c))
                    .expect("contiguous")
                    .mean_axis(Axis(0))
                    .expect("non-empty image")
            }
        }
    }

    /// Global-average-pooled final feature maps, `(batch, out_channels)`.
    pub fn pooled_features(&self, pixels: &Array4<f32>) -> Array2<f32> {
        let rows: Vec<Array1<f32>> = pixels
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|img| self.pooled_image(img))
            .collect();
        let mut out = Array2::zeros((rows.len(), self.out_channels()));
        for (mut dst, row) in out.outer_iter_mut().zip(rows) {
            dst.assign(&row);
        }
        out
    }

    pub(crate) fn pooled_with_trace(&self, pixels: &Array4<f32>) -> (Array2<f32>, Vec<ImageTrace>) {
        let traces: Vec<ImageTrace> = pixels
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|img| self.trace_image(img))
            .collect();
        let mut out = Array2::zeros((traces.len(), self.out_channels()));
        for (mut dst, t) in out.outer_iter_mut().zip(&traces) {
            let last = t.outputs.last().expect("stack has layers");
            dst.assign(&last.mean_axis(Axis(0)).expect("non-empty feature map"));
        }
        (out, traces)
    }

    /// Gradients for the top `trainable` layers given d(loss)/d(pooled
    /// features). Entries for frozen layers are `None`.
    pub(crate) fn backward(
        &self,
        traces: &[ImageTrace],
        dpooled: &Array2<f32>,
        trainable: usize,
    ) -> Vec<Option<ConvGrad>> {
        let n_layers = self.layers.len();
        let first_trainable = n_layers - trainable.min(n_layers);
        let per_image: Vec<Vec<Option<ConvGrad>>> = traces
            .par_iter()
            .zip(dpooled.outer_iter().into_par_iter())
            .map(|(trace, dp)| {
                let mut grads: Vec<Option<ConvGrad>> = (0..n_layers).map(|_| None).collect();
                let positions = trace.outputs[n_layers - 1].nrows() as f32;
                let mut dout = Array2::from_shape_fn(trace.outputs[n_layers - 1].dim(), |(_, c)| dp[c] / positions);
                for li in (first_trainable..n_layers).rev() {
                    let layer = &self.layers[li];
                    let out = &trace.outputs[li];
                    dout.zip_mut_with(out, |g, &o| {
                        if o <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    grads[li] = Some(ConvGrad {
                        weight: trace.patches[li].t().dot(&dout),
                        bias: dout.sum_axis(Axis(0)),
                    });
                    if li > first_trainable {
                        let dpatches = dout.dot(&layer.weight.t());
                        let dx = layer.col2im(&dpatches, trace.input_dims[li]);
                        let (h, w, c) = dx.dim();
                        dout = dx.into_shape_with_order((h * w, c)).expect("contiguous");
                    }
                }
                grads
            })
            .collect();
        let mut total: Vec<Option<ConvGrad>> = (0..n_layers).map(|_| None).collect();
        for grads in per_image {
            for (acc, g) in total.iter_mut().zip(grads) {
                match (acc.as_mut(), g) {
                    (Some(a), Some(g)) => {
                        a.weight += &g.weight;
                        a.bias += &g.bias;
                    }
                    (None, Some(g)) => *acc = Some(g),
                    _ => {}
                }
            }
        }
        total
    }
}
