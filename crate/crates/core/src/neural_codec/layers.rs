//! Convolution layers with explicit backward passes.
//!
//! Activations are channel-major matrices of shape `(channels, batch * len)`:
//! column `b * len + k` is position `k` of example `b`. Convolutions use
//! zero "same" padding that never crosses example boundaries.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::scalar::Scalar;

/// 1-D convolution, `out = W * im2col(x) + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T> {
    /// `(out, in * kernel)`, column `i * kernel + t` is tap `t` of input channel `i`.
    pub(crate) weight: Array2<T>,
    pub(crate) bias: Array1<T>,
    kernel: usize,
    grad_weight: Array2<T>,
    grad_bias: Array1<T>,
}

impl<T: Scalar> Conv1d<T> {
    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, kernel: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd for same padding");
        let fan_in = input * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = || T::of(rng.random_range(-bound..bound));
        let weight = Array2::from_shape_simple_fn((output, fan_in), &mut draw);
        let bias = Array1::from_shape_simple_fn(output, &mut draw);
        Conv1d {
            grad_weight: Array2::zeros(weight.raw_dim()),
            grad_bias: Array1::zeros(bias.raw_dim()),
            weight,
            bias,
            kernel,
        }
    }

    pub fn input_channels(&self) -> usize {
        self.weight.ncols() / self.kernel
    }

    pub fn output_channels(&self) -> usize {
        self.weight.nrows()
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn columns(&self, x: ArrayView2<'_, T>, len: usize) -> Array2<T> {
        im2col(x, len, self.kernel)
    }

    pub fn forward(&self, x: ArrayView2<'_, T>, len: usize) -> Array2<T> {
        let mut out = Array2::zeros((self.output_channels(), x.ncols()));
        for (mut row, &b) in out.outer_iter_mut().zip(self.bias.iter()) {
            row.fill(b);
        }
        if self.kernel == 1 {
            general_mat_mul(T::one(), &self.weight, &x, T::one(), &mut out);
        } else {
            let cols = self.columns(x, len);
            general_mat_mul(T::one(), &self.weight, &cols, T::one(), &mut out);
        }
        out
    }

    /// Accumulates parameter gradients (when `accumulate`) and returns the
    /// input gradient (when `need_input_grad`).
    pub fn backward(
        &mut self,
        x: ArrayView2<'_, T>,
        dout: ArrayView2<'_, T>,
        len: usize,
        accumulate: bool,
        need_input_grad: bool,
    ) -> Option<Array2<T>> {
        let cols = (self.kernel != 1).then(|| self.columns(x, len));
        let cols_view = match &cols {
            Some(c) => c.view(),
            None => x.view(),
        };
        if accumulate {
            general_mat_mul(
                T::one(),
                &dout,
                &cols_view.t(),
                T::one(),
                &mut self.grad_weight,
            );
            self.grad_bias += &dout.sum_axis(Axis(1));
        }
        if !need_input_grad {
            return None;
        }
        let mut dcols = Array2::zeros(cols_view.raw_dim());
        general_mat_mul(T::one(), &self.weight.t(), &dout, T::zero(), &mut dcols);
        if self.kernel == 1 {
            Some(dcols)
        } else {
            Some(col2im(
                dcols.view(),
                self.input_channels(),
                len,
                self.kernel,
            ))
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(T::zero());
        self.grad_bias.fill(T::zero());
    }

    /// Visits `(value, grad)` slices: weight first, then bias.
    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        f(
            self.weight.as_slice_mut().expect("standard layout"),
            self.grad_weight.as_slice_mut().expect("standard layout"),
        );
        f(
            self.bias.as_slice_mut().expect("standard layout"),
            self.grad_bias.as_slice_mut().expect("standard layout"),
        );
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&[T])) {
        f(self.weight.as_slice().expect("standard layout"));
        f(self.bias.as_slice().expect("standard layout"));
    }

    pub(crate) fn cast<U: Scalar>(&self) -> Conv1d<U> {
        let c = |x: &T| U::of(x.as_f64());
        Conv1d {
            weight: self.weight.map(c),
            bias: self.bias.map(c),
            kernel: self.kernel,
            grad_weight: Array2::zeros(self.weight.raw_dim()),
            grad_bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// `(in, batch * len)` -> `(in * kernel, batch * len)`.
pub(crate) fn im2col<T: Scalar>(x: ArrayView2<'_, T>, len: usize, kernel: usize) -> Array2<T> {
    let (channels, total) = x.dim();
    let pad = (kernel / 2) as isize;
    let x = x.as_standard_layout();
    let mut cols = Array2::<T>::zeros((channels * kernel, total));
    for (i, src) in x.outer_iter().enumerate() {
        let src = src.to_slice().expect("standard layout");
        for t in 0..kernel {
            let shift = t as isize - pad;
            let mut row = cols.row_mut(i * kernel + t);
            let dst = row.as_slice_mut().expect("standard layout");
            for (s, d) in src.chunks_exact(len).zip(dst.chunks_exact_mut(len)) {
                let (lo, hi) = valid_range(shift, len);
                let from = (lo as isize + shift) as usize;
                d[lo..hi].copy_from_slice(&s[from..from + (hi - lo)]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im<T: Scalar>(
    cols: ArrayView2<'_, T>,
    channels: usize,
    len: usize,
    kernel: usize,
) -> Array2<T> {
    let total = cols.ncols();
    let pad = (kernel / 2) as isize;
    let mut x = Array2::<T>::zeros((channels, total));
    for i in 0..channels {
        let mut xrow = x.row_mut(i);
        let dst = xrow.as_slice_mut().expect("standard layout");
        for t in 0..kernel {
            let shift = t as isize - pad;
            let crow = cols.row(i * kernel + t);
            let src = crow.to_slice().expect("standard layout");
            for (s, d) in src.chunks_exact(len).zip(dst.chunks_exact_mut(len)) {
                let (lo, hi) = valid_range(shift, len);
                let from = (lo as isize + shift) as usize;
                for (dv, &sv) in d[from..from + (hi - lo)].iter_mut().zip(&s[lo..hi]) {
                    *dv += sv;
                }
            }
        }
    }
    x
}

/// Output positions `lo..hi` whose source `pos + shift` lies in `0..len`.
fn valid_range(shift: isize, len: usize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift.max(0)).max(lo as isize) as usize;
    (lo.min(len), hi.min(len))
}

pub(crate) fn elu_inplace<T: Scalar>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { v.exp_m1() });
}

/// Multiplies `grad` by the ELU derivative expressed through the output `y`.
fn elu_backward_inplace<T: Scalar>(grad: &mut Array2<T>, y: ArrayView2<'_, T>) {
    grad.zip_mut_with(&y, |g, &y| {
        if y <= T::zero() {
            *g *= y + T::one();
        }
    });
}

/// Stack of ELU conv layers followed by a linear position-wise head.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStack<T> {
    pub(crate) layers: Vec<Conv1d<T>>,
    pub(crate) head: Conv1d<T>,
}

/// Inputs of every layer (conv layers, then head) saved for backward.
pub(crate) struct StackTape<T> {
    inputs: Vec<Array2<T>>,
}

impl<T: Scalar> ConvStack<T> {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        conv_layers: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(conv_layers);
        let mut width = input;
        for _ in 0..conv_layers {
            layers.push(Conv1d::new(width, hidden, kernel, rng));
            width = hidden;
        }
        let head = Conv1d::new(width, output, 1, rng);
        ConvStack { layers, head }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(Conv1d::parameter_count)
            .sum::<usize>()
            + self.head.parameter_count()
    }

    pub fn input_channels(&self) -> usize {
        self.layers.first().unwrap_or(&self.head).input_channels()
    }

    pub fn output_channels(&self) -> usize {
        self.head.output_channels()
    }

    pub fn forward(&self, x: ArrayView2<'_, T>, len: usize) -> Array2<T> {
        let Some((first, rest)) = self.layers.split_first() else {
            return self.head.forward(x, len);
        };
        let mut h = first.forward(x, len);
        elu_inplace(&mut h);
        for layer in rest {
            h = layer.forward(h.view(), len);
            elu_inplace(&mut h);
        }
        self.head.forward(h.view(), len)
    }

    pub(crate) fn forward_tape(&self, x: Array2<T>, len: usize) -> (Array2<T>, StackTape<T>) {
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        inputs.push(x);
        for layer in &self.layers {
            let mut next = layer.forward(inputs.last().expect("non-empty").view(), len);
            elu_inplace(&mut next);
            inputs.push(next);
        }
        let out = self
            .head
            .forward(inputs.last().expect("non-empty").view(), len);
        (out, StackTape { inputs })
    }

    pub(crate) fn backward(
        &mut self,
        tape: &StackTape<T>,
        dout: ArrayView2<'_, T>,
        len: usize,
        accumulate: bool,
        need_input_grad: bool,
    ) -> Option<Array2<T>> {
        let n = self.layers.len();
        let head_needs = n > 0 || need_input_grad;
        let mut grad = self
            .head
            .backward(tape.inputs[n].view(), dout, len, accumulate, head_needs);
        for j in (0..n).rev() {
            let mut g = grad.expect("gradient requested");
            elu_backward_inplace(&mut g, tape.inputs[j + 1].view());
            let needs = j > 0 || need_input_grad;
            grad = self.layers[j].backward(tape.inputs[j].view(), g.view(), len, accumulate, needs);
        }
        grad
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Conv1d::zero_grad);
        self.head.zero_grad();
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
        self.head.visit_mut(f);
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&[T])) {
        for l in &self.layers {
            l.visit(f);
        }
        self.head.visit(f);
    }

    pub(crate) fn cast<U: Scalar>(&self) -> ConvStack<U> {
        ConvStack {
            layers: self.layers.iter().map(Conv1d::cast).collect(),
            head: self.head.cast(),
        }
    }
}
