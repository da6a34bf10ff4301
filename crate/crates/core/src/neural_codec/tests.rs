use super::*;
use crate::bitcodec::CrcSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(variant: Variant, k: usize, l: usize, iters: usize, hidden: usize) -> CodecConfig {
    CodecConfig {
        k,
        list_size: l,
        iterations: iters,
        variant,
        hidden_channels: hidden,
        kernel_size: 5,
        conv_layers: 5,
        crc: None,
    }
}

fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
    cin * cout * k + cout
}

#[test]
fn codeword_has_three_k_symbols() {
    let mut codec = Codec::<f32>::new(cfg(Variant::IrAe, 100, 2, 1, 8), 1).unwrap();
    let stats = codec
        .calibrate_norm(1000, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    codec.set_norm_stats(Some(stats));
    let u = MessageWord::raw(vec![1; 100]).unwrap();
    let x = codec.encode(&u).unwrap();
    assert_eq!(x.streams.dim(), (3, 100));
    assert_eq!(x.symbols().len(), 300);
    assert_eq!(codec.encode(&u).unwrap(), x);
}

#[test]
fn encode_requires_frozen_stats() {
    let codec = Codec::<f32>::new(cfg(Variant::TurboAe, 8, 1, 1, 4), 1).unwrap();
    assert!(matches!(
        codec.encode(&MessageWord::raw(vec![0; 8]).unwrap()),
        Err(Error::Config(_))
    ));
    assert!(codec
        .encode(&MessageWord::raw(vec![0; 7]).unwrap())
        .is_err());
}

#[test]
fn batch_normalization_moments() {
    let codec = Codec::<f64>::new(cfg(Variant::TurboAe, 20, 2, 1, 8), 3).unwrap();
    let m = codec.random_messages(500, &mut ChaCha8Rng::seed_from_u64(1));
    let (x, _) = codec.encode_batch(m.view(), NormMode::Batch).unwrap();
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let sq = x.iter().map(|v| v * v).sum::<f64>();
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 1e-6);
    assert!((std - 1.0).abs() < 1e-6);
    assert!((sq / n - 1.0).abs() < 1e-3);
}

#[test]
fn decode_shapes_and_range() {
    for variant in [Variant::TurboAe, Variant::IrAe] {
        for l in [1, 3] {
            let codec = Codec::<f32>::new(cfg(variant, 12, l, 2, 8), 5).unwrap();
            let y = Codeword {
                streams: Array2::from_shape_fn((3, 12), |(i, j)| ((i * 7 + j) % 5) as f32 - 2.0),
            };
            let c = codec.decode_list(&y).unwrap();
            assert_eq!(c.dim(), (l, 12));
            assert!(c.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn decode_rejects_bad_input() {
    let codec = Codec::<f32>::new(cfg(Variant::TurboAe, 6, 2, 1, 4), 5).unwrap();
    let mut y = Codeword {
        streams: Array2::zeros((3, 6)),
    };
    y.streams[[1, 2]] = f32::NAN;
    assert!(codec.decode_list(&y).is_err());
    assert!(codec
        .decode_list(&Codeword {
            streams: Array2::zeros((2, 6))
        })
        .is_err());
}

#[test]
fn block_structure_per_variant() {
    let ir = Codec::<f32>::new(cfg(Variant::IrAe, 10, 2, 6, 4), 0).unwrap();
    assert_eq!(ir.decoder().iterations(), 6);
    for stage in ir.decoder().stages() {
        assert_eq!(stage.len(), 4);
        let rates: Vec<f64> = stage.iter().map(DecodingBlock::rate).collect();
        assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        let inter: Vec<bool> = stage.iter().map(DecodingBlock::interleaved).collect();
        assert_eq!(inter, vec![false, true, true, true]);
    }
    let turbo = Codec::<f32>::new(cfg(Variant::TurboAe, 10, 2, 6, 4), 0).unwrap();
    for stage in turbo.decoder().stages() {
        assert_eq!(stage.len(), 2);
        assert_eq!(stage[0].streams(), &[0, 1]);
        assert_eq!(stage[1].streams(), &[0, 2]);
    }
}

#[test]
fn parameter_counts_follow_closed_form() {
    let (k, l, i, c) = (100, 8, 6, 100);
    let block = |streams: usize| {
        conv_params(streams + l, c, 5) + 4 * conv_params(c, c, 5) + conv_params(c, l, 1)
    };
    let turbo = Codec::<f32>::new(cfg(Variant::TurboAe, k, l, i, c), 0).unwrap();
    let ir = Codec::<f32>::new(cfg(Variant::IrAe, k, l, i, c), 0).unwrap();
    assert_eq!(turbo.parameter_count(Part::Decoder), i * 2 * block(2));
    assert_eq!(
        ir.parameter_count(Part::Decoder),
        i * (3 * block(2) + block(3))
    );
    assert!(ir.parameter_count(Part::Decoder) > 2 * turbo.parameter_count(Part::Decoder));
    let enc_branch = conv_params(1, c, 5) + 4 * conv_params(c, c, 5) + conv_params(c, 1, 1);
    assert_eq!(ir.parameter_count(Part::Encoder), 3 * enc_branch);

    let small = Codec::<f32>::new(cfg(Variant::IrAe, 16, 4, 1, 32), 0).unwrap();
    let big = Codec::<f32>::new(cfg(Variant::IrAe, 16, 4, 1, 64), 0).unwrap();
    let ratio =
        big.parameter_count(Part::Decoder) as f64 / small.parameter_count(Part::Decoder) as f64;
    assert!((3.5..4.1).contains(&ratio), "ratio {ratio}");

    let none = Codec::<f32>::new(cfg(Variant::IrAe, 16, 4, 0, 32), 0).unwrap();
    assert_eq!(none.parameter_count(Part::Decoder), 0);
}

#[test]
fn construction_is_deterministic_in_seed() {
    let a = Codec::<f32>::new(cfg(Variant::IrAe, 16, 2, 1, 8), 9).unwrap();
    let b = Codec::<f32>::new(cfg(Variant::IrAe, 16, 2, 1, 8), 9).unwrap();
    let c = Codec::<f32>::new(cfg(Variant::IrAe, 16, 2, 1, 8), 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.flat_params(Part::Encoder), c.flat_params(Part::Encoder));
}

#[test]
fn flat_params_round_trip() {
    let mut a = Codec::<f64>::new(cfg(Variant::TurboAe, 8, 2, 1, 4), 1).unwrap();
    let mut p = a.flat_params(Part::Decoder);
    p[3] = 42.0;
    a.set_flat_params(Part::Decoder, &p).unwrap();
    assert_eq!(a.flat_params(Part::Decoder), p);
    assert!(a.set_flat_params(Part::Decoder, &p[1..]).is_err());
}

#[test]
fn calibration_is_reproducible_and_stable() {
    let codec = Codec::<f32>::new(cfg(Variant::TurboAe, 16, 2, 1, 8), 2).unwrap();
    let s1 = codec
        .calibrate_norm(10_000, &mut ChaCha8Rng::seed_from_u64(4))
        .unwrap();
    let s2 = codec
        .calibrate_norm(10_000, &mut ChaCha8Rng::seed_from_u64(4))
        .unwrap();
    assert_eq!(s1, s2);
    let s3 = codec
        .calibrate_norm(20_000, &mut ChaCha8Rng::seed_from_u64(5))
        .unwrap();
    assert!(((s3.gamma / s1.gamma) - 1.0).abs() < 0.01);
    assert!(codec
        .calibrate_norm(999, &mut ChaCha8Rng::seed_from_u64(4))
        .is_err());
}

#[test]
fn crc_layout_messages_carry_valid_crc() {
    let mut c = cfg(Variant::TurboAe, 16, 2, 1, 4);
    c.crc = Some(CrcSpec::crc8_default());
    let codec = Codec::<f32>::new(c, 0).unwrap();
    let m = codec.random_messages(50, &mut ChaCha8Rng::seed_from_u64(1));
    for row in m.outer_iter() {
        assert!(crate::bitcodec::crc_check(&row.to_vec(), &CrcSpec::crc8_default()).unwrap());
    }
    let mut bad = cfg(Variant::TurboAe, 8, 2, 1, 4);
    bad.crc = Some(CrcSpec::crc8_default());
    assert!(Codec::<f32>::new(bad, 0).is_err());
}

#[test]
fn channel_major_round_trip() {
    let a = Array3::from_shape_fn((2, 3, 4), |(b, c, k)| (100 * b + 10 * c + k) as f64);
    let cm = to_channel_major(a.view());
    assert_eq!(cm[[1, 4 + 2]], 112.0);
    assert_eq!(from_channel_major(cm, 2, 4), a);
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// End-to-end weight gradients (through decoder, noise, normalization and
/// encoder) against central differences.
#[test]
fn weight_gradients_match_finite_differences() {
    let mut c = cfg(Variant::IrAe, 6, 2, 1, 4);
    c.conv_layers = 2;
    c.kernel_size = 3;
    let mut codec = Codec::<f64>::new(c, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = codec.sample_batch(4, |_| 1.0, &mut rng);
    for part in [Part::Encoder, Part::Decoder] {
        codec.loss_and_gradients(&batch, part).unwrap();
        let grads = codec.flat_grads(part);
        let params = codec.flat_params(part);
        let h = 1e-5;
        let mut checked = 0;
        for idx in (0..params.len()).step_by(params.len() / 25 + 1) {
            let mut p = params.clone();
            p[idx] += h;
            codec.set_flat_params(part, &p).unwrap();
            let fp = codec.batch_loss(&batch).unwrap();
            p[idx] -= 2.0 * h;
            codec.set_flat_params(part, &p).unwrap();
            let fm = codec.batch_loss(&batch).unwrap();
            codec.set_flat_params(part, &params).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                relative_error(grads[idx], fd) < 1e-4,
                "{part:?}[{idx}]: {} vs {fd}",
                grads[idx]
            );
            checked += 1;
        }
        assert!(checked >= 20);
    }
}

#[test]
fn encoder_step_leaves_decoder_parameters_alone() {
    let mut codec = Codec::<f32>::new(cfg(Variant::TurboAe, 8, 2, 1, 4), 2).unwrap();
    let before = codec.flat_params(Part::Decoder);
    let batch = codec.sample_batch(8, |_| 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    codec.loss_and_gradients(&batch, Part::Encoder).unwrap();
    assert_eq!(codec.flat_params(Part::Decoder), before);
}
