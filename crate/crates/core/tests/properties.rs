use proptest::prelude::*;
use proptest::strategy::ValueTree;
use sisr_core::archive::{decode, encode_params};
use sisr_core::discriminator::{relativistic_d_loss_value, relativistic_g_loss_value};
use sisr_core::generator::{ArchConfig, GeneratorWeights};
use sisr_core::image::ImageBuffer;
use sisr_core::init::rng_for;
use sisr_core::metrics::{psnr, ssim};
use sisr_core::patch::{degrade, sample_patch_pair, ImagePair};
use sisr_core::perceptual::{perceptual_loss, FeatureNet, FeatureNetSpec};
use sisr_core::resample::{bicubic_resize, cubic_taps, CUBIC_A};
use sisr_core::{Params, Tape, Tensor};

fn image(max_side: usize) -> impl Strategy<Value = ImageBuffer> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |px| ImageBuffer::new(w, h, px).unwrap())
    })
}

fn image_sized(w: usize, h: usize) -> impl Strategy<Value = ImageBuffer> {
    prop::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |px| ImageBuffer::new(w, h, px).unwrap())
}

fn special_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE / 4.0),
        Just(-f32::MIN_POSITIVE / 3.0),
        Just(f32::MAX),
        Just(f32::MIN),
        Just(f32::INFINITY),
        Just(f32::NEG_INFINITY),
        any::<f32>(),
    ]
}

fn tensor() -> impl Strategy<Value = Tensor<f32>> {
    prop::collection::vec(1usize..=4, 1..=4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(special_f32(), n).prop_map(move |v| Tensor::from_data(&shape, v).unwrap())
    })
}

fn params() -> impl Strategy<Value = Params<f32>> {
    prop::collection::btree_map("[a-z][a-z0-9_.]{0,12}", tensor(), 0..6)
        .prop_map(|m| m.into_iter().collect::<Params<f32>>())
}

fn bits(p: &Params<f32>) -> Vec<(String, Vec<usize>, Vec<u32>)> {
    p.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data().iter().map(|v| v.to_bits()).collect())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn archive_round_trip_is_bit_exact(p in params()) {
        let bytes = encode_params(&p).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(bits(&back), bits(&p));
        prop_assert_eq!(encode_params(&back).unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cubic_taps_sum_to_one(phase in 0.0f64..1.0) {
        let s: f64 = cubic_taps(phase, CUBIC_A).iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn same_size_resize_is_identity(img in image(12)) {
        let out = bicubic_resize(&img, img.width(), img.height()).unwrap();
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn flip_is_an_involution(img in image(12)) {
        prop_assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn flip_commutes_with_downscale(img in image_sized(24, 16)) {
        let a = degrade(&img.flip_horizontal()).unwrap();
        let b = degrade(&img).unwrap().flip_horizontal();
        // Interior: one LR pixel in from each border.
        for y in 1..a.height() - 1 {
            for x in 1..a.width() - 1 {
                for c in 0..3 {
                    prop_assert!((a.get(x, y, c) - b.get(x, y, c)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn patch_sampling_is_reproducible(seed in any::<u64>(), img in image_sized(32, 24)) {
        let pair = ImagePair::synthesized(img);
        let a = sample_patch_pair(&pair, 0, 16, &mut rng_for(seed, 9)).unwrap();
        let b = sample_patch_pair(&pair, 0, 16, &mut rng_for(seed, 9)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn relativistic_losses_ignore_common_shift(
        real in prop::collection::vec(-5.0f64..5.0, 1..6),
        fake in prop::collection::vec(-5.0f64..5.0, 1..6),
        shift in -50.0f64..50.0,
    ) {
        let r2: Vec<f64> = real.iter().map(|v| v + shift).collect();
        let f2: Vec<f64> = fake.iter().map(|v| v + shift).collect();
        let d = relativistic_d_loss_value(&real, &fake).unwrap();
        let g = relativistic_g_loss_value(&real, &fake).unwrap();
        prop_assert!((relativistic_d_loss_value(&r2, &f2).unwrap() - d).abs() < 1e-6);
        prop_assert!((relativistic_g_loss_value(&r2, &f2).unwrap() - g).abs() < 1e-6);
    }

    #[test]
    fn symmetric_logits_give_two_ln_two(v in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let d = relativistic_d_loss_value(&v, &v).unwrap();
        let g = relativistic_g_loss_value(&v, &v).unwrap();
        // Identical batches make the two losses coincide; constant ones hit 2 ln 2.
        let c = vec![v[0]; v.len()];
        prop_assert!((relativistic_d_loss_value(&c, &c).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        prop_assert!((d - g).abs() < 1e-12);
    }

    #[test]
    fn d_loss_falls_as_real_logits_rise(
        real in prop::collection::vec(-3.0f64..3.0, 2..6),
        fake in prop::collection::vec(-3.0f64..3.0, 2..6),
        bump in 0.01f64..2.0,
    ) {
        let higher: Vec<f64> = real.iter().map(|v| v + bump).collect();
        prop_assert!(relativistic_d_loss_value(&higher, &fake).unwrap() < relativistic_d_loss_value(&real, &fake).unwrap());
    }

    #[test]
    fn ssim_is_bounded(a in image_sized(16, 16), b in image_sized(16, 16)) {
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perceptual_loss_of_identical_images_is_zero(img in image_sized(8, 8)) {
        let spec = FeatureNetSpec { channels: vec![4, 8], downsample_after: vec![0], tap_layer: 1, seed: 3 };
        let net = FeatureNet::<f32>::from_seed(spec.clone()).unwrap();
        let mut tape = Tape::new();
        let w = net.bind(&mut tape);
        let x = tape.constant(sisr_core::image::tensor_from_image::<f32>(&img));
        let y = tape.constant(sisr_core::image::tensor_from_image::<f32>(&img));
        let l = perceptual_loss(&mut tape, x, y, &w, &spec).unwrap();
        prop_assert_eq!(tape.value(l).data()[0], 0.0);
    }
}

#[test]
fn ssim_range_on_fifty_pairs() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strat = (image_sized(20, 20), image_sized(20, 20));
    for _ in 0..50 {
        let (a, b) = strat.new_tree(&mut runner).unwrap().current();
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&s), "{s}");
    }
}

#[test]
fn psnr_falls_with_noise_amplitude() {
    let img = ImageBuffer::from_fn(32, 32, |x, y, c| 0.5 + 0.3 * ((x * 3 + y + c) as f64 * 0.2).sin());
    let mut rng = rng_for(8, 0);
    let noise: Vec<f64> = (0..img.pixels().len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
    let noisy = |amp: f64| {
        let px = img.pixels().iter().zip(&noise).map(|(v, n)| v + amp * n).collect();
        ImageBuffer::new(32, 32, px).unwrap()
    };
    let p: Vec<f64> = [0.01, 0.05, 0.15].iter().map(|&a| psnr(&img, &noisy(a)).unwrap()).collect();
    assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
}

#[test]
fn generator_output_is_four_times_input() {
    let arch = ArchConfig { num_rrdb: 1, num_features: 8, growth_channels: 4, ..ArchConfig::default() };
    let g = GeneratorWeights::<f32>::init(arch, &mut rng_for(1, 2)).unwrap();
    for (h, w) in [(4, 4), (5, 7), (9, 4)] {
        let x = Tensor::<f32>::full(&[2, 3, h, w], 0.5);
        assert_eq!(g.upscale(&x).unwrap().shape(), &[2, 3, 4 * h, 4 * w]);
    }
}

#[test]
fn parameter_count_matches_schema_for_three_configs() {
    for (b, f, g) in [(1, 8, 4), (2, 16, 8), (4, 32, 16)] {
        let arch = ArchConfig { num_rrdb: b, num_features: f, growth_channels: g, ..ArchConfig::default() };
        let from_schema: usize = arch.schema().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        assert_eq!(arch.param_count(), from_schema);
        let w = GeneratorWeights::<f32>::init(arch, &mut rng_for(0, 0)).unwrap();
        assert_eq!(w.params.numel(), from_schema);
    }
}
