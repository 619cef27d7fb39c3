use kiqt::eval;
use kiqt::unet::{init_params, Checkpoint, LayerMode, TINY_WIDTH};
use kiqt_web::{checkpoint_slice, preview_mask, zero_filled_slice, GrayImage};

#[test]
fn gray_scaling_matches_pgm_convention() {
    let img = GrayImage::from_values(1, 4, &[0.0, 0.5, 1.0, f64::NAN]);
    assert_eq!(img.pixels(), vec![0, 128, 255, 0]);
    assert_eq!(img.rgba().len(), 16);
    assert_eq!(&img.rgba()[4..8], &[128, 128, 128, 255]);
    assert_eq!(GrayImage::from_values(1, 2, &[0.0, 0.0]).pixels(), vec![0, 0]);
}

#[test]
fn mask_preview_counts() {
    let full = preview_mask("radial", 1.0, 64, 3).unwrap();
    assert_eq!(full.samples(), 64 * 64);
    assert!(full.image().pixels().iter().all(|&p| p == 255));

    let half = preview_mask("cartesian", 0.5, 64, 3).unwrap();
    assert_eq!(half.samples(), 32 * 64);
    assert_eq!(half.achieved_rate(), 0.5);
    assert!(preview_mask("spiral", 0.5, 64, 3).is_err());
    assert!(preview_mask("radial", 0.0, 64, 3).is_err());
}

#[test]
fn zero_filled_slice_degrades_with_rate() {
    let full = zero_filled_slice(2, 64, "radial", 1.0, 0.0).unwrap();
    let under = zero_filled_slice(2, 64, "radial", 0.3, 0.0).unwrap();
    assert!(under.ssim() < full.ssim());
    assert!(under.psnr() < full.psnr());
    for img in [under.reference(), under.recon(), under.error(), under.kspace()] {
        assert_eq!((img.height(), img.width()), (64, 64));
    }
    assert_eq!(under.reference(), full.reference());
}

#[test]
fn checkpoint_slice_runs_both_domains() {
    for channels in [2, 1] {
        let ckpt = Checkpoint {
            params: init_params(1, LayerMode::Standard, channels, channels, TINY_WIDTH).unwrap(),
            fold: 0,
            epoch: 0,
            validation_loss: 0.0,
            fingerprint: 0,
        };
        let view = checkpoint_slice(&ckpt.to_bytes(), 4, 64, "cartesian", 0.5, 0.01).unwrap();
        assert!(view.ssim().is_finite() && view.psnr() <= eval::PSNR_CAP_DB);
    }
    assert!(checkpoint_slice(b"not a checkpoint", 4, 64, "radial", 0.5, 0.01).is_err());
}
