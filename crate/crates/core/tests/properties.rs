use kiqt::config::RunConfig;
use kiqt::eval::{self, MagnitudeImage, Method, MetricReport, MetricRow};
use kiqt::kspace::{self, ComplexGrid, Domain};
use kiqt::lfsim;
use kiqt::sampling::{self, Mask, MaskSpec, Pattern};
use kiqt::tensor::Tensor;
use kiqt::training::{self, AdamState, LossWeights, TrainConfig};
use kiqt::unet::{init_params, LayerMode, TINY_WIDTH};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(seed: u64, n: usize) -> ComplexGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ComplexGrid::new(n, n, Domain::Spatial, data).unwrap()
}

fn image(seed: u64, n: usize) -> MagnitudeImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MagnitudeImage::new(n, n, (0..n * n).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn pattern() -> impl Strategy<Value = Pattern> {
    prop_oneof![Just(Pattern::PseudoRadial), Just(Pattern::Cartesian)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(seed in any::<u64>(), log_n in 3usize..8) {
        let g = grid(seed, 1 << log_n);
        let f = kspace::fft2c(&g).unwrap();
        prop_assert!((f.energy() - g.energy()).abs() <= 1e-10 * g.energy());
    }

    #[test]
    fn fft_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (g1, g2) = (grid(seed, 32), grid(seed ^ 0x5555, 32));
        let combo = ComplexGrid::new(
            32,
            32,
            Domain::Spatial,
            g1.data().iter().zip(g2.data()).map(|(x, y)| x * a + y * b).collect(),
        )
        .unwrap();
        let lhs = kspace::fft2c(&combo).unwrap();
        let (f1, f2) = (kspace::fft2c(&g1).unwrap(), kspace::fft2c(&g2).unwrap());
        let scale = lhs.max_magnitude().max(1e-12);
        for ((l, x), y) in lhs.data().iter().zip(f1.data()).zip(f2.data()) {
            prop_assert!((l - (x * a + y * b)).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn normalize_inverts(seed in any::<u64>()) {
        let g = grid(seed, 16);
        let (n, rec) = kspace::normalize(&g).unwrap();
        prop_assert!((n.max_magnitude() - 1.0).abs() < 1e-15);
        let back = kspace::denormalize(&n, rec).unwrap();
        for (a, b) in g.data().iter().zip(back.data()) {
            prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn masks_hit_rate_deterministically(p in pattern(), rate_idx in 0usize..3, seed in any::<u64>(), big in any::<bool>()) {
        let rate = [0.3, 0.5, 1.0][rate_idx];
        let n = if big { 256 } else { 128 };
        let spec = MaskSpec::new(p, rate, seed);
        let mask = sampling::generate(&spec, n, n).unwrap();
        prop_assert!((mask.achieved_rate() - rate).abs() <= sampling::RATE_TOLERANCE);
        prop_assert!(mask.get(n / 2, n / 2));
        prop_assert_eq!(&mask, &sampling::generate(&spec, n, n).unwrap());
        if p == Pattern::Cartesian {
            prop_assert!(mask.bits().chunks(n).all(|row| row.iter().all(|&b| b == row[0])));
        }
    }

    #[test]
    fn radial_masks_are_nearly_point_symmetric(rate in 0.1f64..0.9, seed in any::<u64>()) {
        let n = 128;
        let mask = sampling::generate(&MaskSpec::new(Pattern::PseudoRadial, rate, seed), n, n).unwrap();
        // 180° rotation about the centre sample (n/2, n/2); row and column 0 have no partner.
        let disagree = (1..n)
            .flat_map(|y| (1..n).map(move |x| (y, x)))
            .filter(|&(y, x)| mask.get(y, x) != mask.get(n - y, n - x))
            .count();
        prop_assert!(disagree as f64 <= 0.005 * (n * n) as f64, "{disagree}");
    }

    #[test]
    fn kfold_covers_disjointly(n in 3usize..200, folds in 2usize..6, seed in any::<u64>()) {
        prop_assume!(n >= folds);
        let splits = training::kfold_split(n, folds, seed).unwrap();
        let mut seen = vec![0usize; n];
        for (train, val) in &splits {
            prop_assert_eq!(train.len() + val.len(), n);
            prop_assert!(val.len() == n / folds || val.len() == n / folds + 1);
            for &i in val {
                seen[i] += 1;
                prop_assert!(!train.contains(&i));
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn loss_is_nonnegative_and_zero_only_on_equality(seed in any::<u64>(), mae in 0.0f64..2.0, mse in 0.0f64..2.0) {
        prop_assume!(mae + mse > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..2 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = a.clone();
        let w = LossWeights { mae, mse };
        let ta = Tensor::from_vec(2, 4, 4, a).unwrap();
        prop_assert_eq!(training::loss(&ta, &Tensor::from_vec(2, 4, 4, b.clone()).unwrap(), w).unwrap(), 0.0);
        let k = rng.random_range(0..b.len());
        b[k] += 0.25;
        prop_assert!(training::loss(&ta, &Tensor::from_vec(2, 4, 4, b).unwrap(), w).unwrap() > 0.0);
    }

    #[test]
    fn ssim_is_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (x, y) = (image(s1, 24), image(s2, 24));
        let v = eval::ssim(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert!((eval::ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        prop_assume!(s1 != s2);
        prop_assert!(v < 1.0 - 1e-9);
    }

    #[test]
    fn psnr_falls_as_error_grows(seed in any::<u64>(), small in 0.001f64..0.1, factor in 1.1f64..10.0) {
        let reference = image(seed, 16);
        let offset = |d: f64| MagnitudeImage::new(16, 16, reference.data().iter().map(|v| v + d).collect()).unwrap();
        let near = eval::psnr(&offset(small), &reference).unwrap();
        let far = eval::psnr(&offset(small * factor), &reference).unwrap();
        prop_assert!(far < near);
    }

    #[test]
    fn psnr_ignores_common_scale(seed in any::<u64>(), k in 0.1f64..10.0) {
        let (x, r) = (image(seed, 16), image(seed.wrapping_add(1), 16));
        let scaled = |m: &MagnitudeImage| MagnitudeImage::new(16, 16, m.data().iter().map(|v| v * k).collect()).unwrap();
        let (a, b) = (eval::psnr(&x, &r).unwrap(), eval::psnr(&scaled(&x), &scaled(&r)).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn full_mask_zero_fill_inverts_forward_model(seed in any::<u64>()) {
        let g = grid(seed, 32);
        let k = kspace::fft2c(&g).unwrap();
        let recon = eval::zero_fill_recon(&sampling::apply_mask(&k, &Mask::full(32, 32)).unwrap()).unwrap();
        for (r, z) in recon.data().iter().zip(g.data()) {
            prop_assert!((r - z.norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn undersampling_never_adds_energy(p in pattern(), rate in 0.2f64..0.9, seed in any::<u64>()) {
        let k = kspace::fft2c(&grid(seed, 64)).unwrap();
        let mask = match sampling::generate(&MaskSpec::new(p, rate, seed), 64, 64) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        prop_assert!(sampling::apply_mask(&k, &mask).unwrap().energy() <= k.energy());
    }
}

#[test]
fn adam_with_zero_gradient_and_decay_is_identity() {
    let params = init_params::<f32>(3, LayerMode::Standard, 2, 2, TINY_WIDTH).unwrap();
    let mut p = params.clone();
    let zeros = params.zeros_like();
    let mut state = AdamState::new(&params);
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    for _ in 0..3 {
        training::adam_step(&mut p, &zeros, &mut state, &cfg).unwrap();
    }
    assert_eq!(p, params);
    assert!(state.v.iter().flatten().all(|&v| v >= 0.0));
}

#[test]
fn ssim_of_inverted_half_plane_is_low() {
    let n = 64;
    let half: Vec<f64> = (0..n * n).map(|i| if i % n < n / 2 { 1.0 } else { 0.0 }).collect();
    let x = MagnitudeImage::new(n, n, half.clone()).unwrap();
    let inv = MagnitudeImage::new(n, n, half.iter().map(|v| 1.0 - v).collect()).unwrap();
    assert!(eval::ssim(&inv, &x).unwrap() < 0.1);
}

#[test]
fn dc_only_mask_gives_constant_image() {
    let n = 32;
    let k = kspace::fft2c(&grid(5, n)).unwrap();
    let bits: Vec<bool> = (0..n * n).map(|i| i == (n / 2) * n + n / 2).collect();
    let recon = eval::zero_fill_recon(&sampling::apply_mask(&k, &Mask::from_bits(n, n, bits).unwrap()).unwrap()).unwrap();
    let first = recon.data()[0];
    assert!(recon.data().iter().all(|v| (v - first).abs() < 1e-12));
    assert!((first - k.get(n / 2, n / 2).norm() / n as f64).abs() < 1e-12);
}

#[test]
fn psnr_fixture_and_cap() {
    let reference = MagnitudeImage::new(2, 2, vec![1.0, 0.0, 0.5, 0.25]).unwrap();
    let x = MagnitudeImage::new(2, 2, vec![0.9, 0.1, 0.6, 0.35]).unwrap();
    assert!((eval::psnr(&x, &reference).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(eval::psnr(&reference, &reference).unwrap(), eval::PSNR_CAP_DB);
}

#[test]
fn contrast_prior_perturbs_nearly_every_seed() {
    let cfg = RunConfig::default();
    let prior = cfg.prior().unwrap();
    let mut cfg_d = cfg.degradation(0);
    cfg_d.noise_sigma = 0.0;
    cfg_d.lowpass_fraction = 1.0;
    let perturbed = (0..100u64)
        .filter(|&seed| {
            let hf = lfsim::gen_phantom(seed, 32, 32).unwrap();
            cfg_d.seed = seed;
            let lf = lfsim::degrade_noiseless(&hf, &prior, &cfg_d).unwrap();
            hf.image.data().iter().zip(lf.data()).any(|(a, b)| (a - b).norm() > 0.0)
        })
        .count();
    assert!(perturbed >= 95, "{perturbed}");
}

#[test]
fn report_csv_is_deterministic() {
    let rows: Vec<MetricRow> = (0..6)
        .map(|i| MetricRow {
            method: Method::ALL[i % 3],
            pattern: Pattern::ALL[i % 2],
            rate: 0.3,
            slice: i,
            psnr_db: 20.0 + i as f64,
            ssim: 0.5,
        })
        .collect();
    let a = MetricReport { rows: rows.clone() }.to_csv();
    assert_eq!(a, MetricReport { rows }.to_csv());
    assert!(a.starts_with("method,pattern,rate,slice,psnr_db,ssim\n"));
}
