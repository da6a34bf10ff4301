use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::layers::{ConvStack, StackTape};
use super::{CodecConfig, Variant, BRANCHES};
use crate::interleaver::{gather_segments, Permutation};
use crate::scalar::Scalar;

/// One decoding block: consumes a subset of the received streams plus the
/// incoming list matrix and emits the next list matrix.
///
/// Blocks that read the third (interleaved) stream run in the interleaved
/// domain: their other streams and the list matrix are interleaved on the
/// way in and the output is deinterleaved, so list matrices stay in natural
/// order between blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodingBlock<T> {
    streams: Vec<usize>,
    pub(crate) net: ConvStack<T>,
}

impl<T: Scalar> DecodingBlock<T> {
    /// Indices (zero-based) of the received streams read by this block.
    pub fn streams(&self) -> &[usize] {
        &self.streams
    }

    /// The block rate `1 / streams`.
    pub fn rate(&self) -> f64 {
        1.0 / self.streams.len() as f64
    }

    pub fn interleaved(&self) -> bool {
        self.streams.contains(&(BRANCHES - 1))
    }

    pub fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    fn input(&self, y: ArrayView2<'_, T>, p: ArrayView2<'_, T>, pi: &Permutation) -> Array2<T> {
        let ys = y.select(Axis(0), &self.streams);
        if self.interleaved() {
            let mut ys = ys;
            for (row, &s) in self.streams.iter().enumerate() {
                if s != BRANCHES - 1 {
                    let g = gather_segments(y.slice(s![s..s + 1, ..]), pi.map());
                    ys.row_mut(row).assign(&g.row(0));
                }
            }
            let pp = gather_segments(p, pi.map());
            let out = concatenate(Axis(0), &[ys.view(), pp.view()]).expect("same column count");
            out
        } else {
            let out = concatenate(Axis(0), &[ys.view(), p.view()]).expect("same column count");
            out
        }
    }
}

/// `iterations` stages of decoding blocks, each stage with its own weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderNet<T> {
    variant: Variant,
    list_size: usize,
    pub(crate) stages: Vec<Vec<DecodingBlock<T>>>,
}

pub(crate) struct DecoderTape<T> {
    blocks: Vec<StackTape<T>>,
}

impl<T: Scalar> DecoderNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &CodecConfig, rng: &mut R) -> Self {
        let layout = cfg.variant.block_streams();
        let stages = (0..cfg.iterations)
            .map(|_| {
                layout
                    .iter()
                    .map(|streams| DecodingBlock {
                        streams: streams.to_vec(),
                        net: ConvStack::new(
                            streams.len() + cfg.list_size,
                            cfg.hidden_channels,
                            cfg.list_size,
                            cfg.conv_layers,
                            cfg.kernel_size,
                            rng,
                        ),
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let dec = DecoderNet {
            variant: cfg.variant,
            list_size: cfg.list_size,
            stages,
        };
        for stage in &dec.stages {
            assert!(
                stage.windows(2).all(|w| w[1].rate() <= w[0].rate()),
                "block rates must be non-increasing within a stage"
            );
        }
        dec
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn iterations(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[Vec<DecodingBlock<T>>] {
        &self.stages
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().map(DecodingBlock::parameter_count).sum()
    }

    fn blocks(&self) -> impl DoubleEndedIterator<Item = &DecodingBlock<T>> {
        self.stages.iter().flatten()
    }

    /// Final list matrix (pre-sigmoid), `(L, batch * K)` for `y` of `(3, batch * K)`.
    pub(crate) fn forward(&self, y: ArrayView2<'_, T>, pi: &Permutation) -> Array2<T> {
        let len = pi.len();
        let mut p = Array2::zeros((self.list_size, y.ncols()));
        for block in self.blocks() {
            let z = block.net.forward(block.input(y, p.view(), pi).view(), len);
            p = if block.interleaved() {
                gather_segments(z.view(), pi.inverse_map())
            } else {
                z
            };
        }
        p
    }

    pub(crate) fn forward_tape(
        &self,
        y: ArrayView2<'_, T>,
        pi: &Permutation,
    ) -> (Array2<T>, DecoderTape<T>) {
        let len = pi.len();
        let mut p = Array2::zeros((self.list_size, y.ncols()));
        let mut tapes = Vec::new();
        for block in self.blocks() {
            let (z, tape) = block.net.forward_tape(block.input(y, p.view(), pi), len);
            tapes.push(tape);
            p = if block.interleaved() {
                gather_segments(z.view(), pi.inverse_map())
            } else {
                z
            };
        }
        (p, DecoderTape { blocks: tapes })
    }

    /// Backpropagates `d_logits`; returns the gradient w.r.t. `y` when asked.
    pub(crate) fn backward(
        &mut self,
        tape: &DecoderTape<T>,
        d_logits: Array2<T>,
        pi: &Permutation,
        accumulate: bool,
        need_dy: bool,
    ) -> Option<Array2<T>> {
        let len = pi.len();
        let cols = d_logits.ncols();
        let mut dy = need_dy.then(|| Array2::<T>::zeros((BRANCHES, cols)));
        let mut dp = d_logits;
        let blocks: Vec<&mut DecodingBlock<T>> = self.stages.iter_mut().flatten().collect();
        for (idx, block) in blocks.into_iter().enumerate().rev() {
            let interleaved = block.interleaved();
            let dz = if interleaved {
                gather_segments(dp.view(), pi.map())
            } else {
                dp
            };
            // the first block's list input is the constant P_0
            let need_input = need_dy || idx > 0;
            let Some(din) =
                block
                    .net
                    .backward(&tape.blocks[idx], dz.view(), len, accumulate, need_input)
            else {
                debug_assert!(idx == 0);
                dp = Array2::zeros((0, 0));
                continue;
            };
            let k = block.streams.len();
            if let Some(dy) = dy.as_mut() {
                for (row, &s) in block.streams.iter().enumerate() {
                    let g = din.slice(s![row..row + 1, ..]);
                    if interleaved && s != BRANCHES - 1 {
                        let g = gather_segments(g, pi.inverse_map());
                        dy.row_mut(s).scaled_add(T::one(), &g.row(0));
                    } else {
                        dy.row_mut(s).scaled_add(T::one(), &g.row(0));
                    }
                }
            }
            let d_list = din.slice(s![k.., ..]);
            dp = if interleaved {
                gather_segments(d_list, pi.inverse_map())
            } else {
                d_list.to_owned()
            };
        }
        dy
    }

    pub fn zero_grad(&mut self) {
        self.stages
            .iter_mut()
            .flatten()
            .for_each(|b| b.net.zero_grad());
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        for b in self.stages.iter_mut().flatten() {
            b.net.visit_mut(f);
        }
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&[T])) {
        for b in self.blocks() {
            b.net.visit(f);
        }
    }

    pub(crate) fn cast<U: Scalar>(&self) -> DecoderNet<U> {
        DecoderNet {
            variant: self.variant,
            list_size: self.list_size,
            stages: self
                .stages
                .iter()
                .map(|st| {
                    st.iter()
                        .map(|b| DecodingBlock {
                            streams: b.streams.clone(),
                            net: b.net.cast(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}
