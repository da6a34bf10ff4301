use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::layers::{ConvStack, StackTape};
use super::{CodecConfig, BRANCHES};
use crate::scalar::Scalar;

/// Three CNN encoding branches: `b_1 = f_1(u)`, `b_2 = f_2(u)`, `b_3 = f_3(pi(u))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderNet<T> {
    pub(crate) branches: Vec<ConvStack<T>>,
}

pub(crate) struct EncoderTape<T> {
    branches: Vec<StackTape<T>>,
}

impl<T: Scalar> EncoderNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &CodecConfig, rng: &mut R) -> Self {
        let branches = (0..BRANCHES)
            .map(|_| {
                ConvStack::new(
                    1,
                    cfg.hidden_channels,
                    1,
                    cfg.conv_layers,
                    cfg.kernel_size,
                    rng,
                )
            })
            .collect();
        EncoderNet { branches }
    }

    pub fn parameter_count(&self) -> usize {
        self.branches.iter().map(ConvStack::parameter_count).sum()
    }

    fn branch_input<'a>(
        j: usize,
        u: ArrayView2<'a, T>,
        u_perm: ArrayView2<'a, T>,
    ) -> ArrayView2<'a, T> {
        if j == BRANCHES - 1 {
            u_perm
        } else {
            u
        }
    }

    /// `u` and `u_perm` are `(1, batch * K)` symbol rows; output is `(3, batch * K)`.
    pub(crate) fn forward<'a>(
        &self,
        u: ArrayView2<'a, T>,
        u_perm: ArrayView2<'a, T>,
        len: usize,
    ) -> Array2<T> {
        let mut out = Array2::zeros((BRANCHES, u.ncols()));
        for (j, branch) in self.branches.iter().enumerate() {
            let b = branch.forward(Self::branch_input(j, u, u_perm), len);
            out.row_mut(j).assign(&b.row(0));
        }
        out
    }

    pub(crate) fn forward_tape<'a>(
        &self,
        u: ArrayView2<'a, T>,
        u_perm: ArrayView2<'a, T>,
        len: usize,
    ) -> (Array2<T>, EncoderTape<T>) {
        let mut out = Array2::zeros((BRANCHES, u.ncols()));
        let mut tapes = Vec::with_capacity(BRANCHES);
        for (j, branch) in self.branches.iter().enumerate() {
            let (b, tape) = branch.forward_tape(Self::branch_input(j, u, u_perm).to_owned(), len);
            out.row_mut(j).assign(&b.row(0));
            tapes.push(tape);
        }
        (out, EncoderTape { branches: tapes })
    }

    /// Accumulates parameter gradients from `d_out`, shaped `(3, batch * K)`.
    pub(crate) fn backward(&mut self, tape: &EncoderTape<T>, d_out: ArrayView2<'_, T>, len: usize) {
        for ((branch, t), g) in self
            .branches
            .iter_mut()
            .zip(&tape.branches)
            .zip(d_out.outer_iter())
        {
            let g = g.insert_axis(ndarray::Axis(0));
            branch.backward(t, g, len, true, false);
        }
    }

    pub fn zero_grad(&mut self) {
        self.branches.iter_mut().for_each(ConvStack::zero_grad);
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for b in &mut self.branches {
            b.visit_mut(f);
        }
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&[T])) {
        for b in &self.branches {
            b.visit(f);
        }
    }

    pub(crate) fn cast<U: Scalar>(&self) -> EncoderNet<U> {
        EncoderNet {
            branches: self.branches.iter().map(ConvStack::cast).collect(),
        }
    }
}
