use pce::data::{corrupt_tensor, make_mask, psnr, rmse, Image, Mask, MaskSpec, Task};
use pce::loss::masked_l1;
use pce::model::composite;
use pce::tensor::Tensor4;
use proptest::prelude::*;

fn tensor(shape: [usize; 4], values: &[f32]) -> Tensor4<f32> {
    Tensor4::from_fn(shape, |[n, c, h, w]| {
        values[(n * 7 + c * 5 + h * 3 + w) % values.len()]
    })
}

fn mask_from_bits(bits: &[bool], h: usize, w: usize) -> Tensor4<f32> {
    Tensor4::from_fn([1, 1, h, w], |[_, _, y, x]| {
        if bits[(y * w + x) % bits.len()] {
            1.0
        } else {
            0.0
        }
    })
}

fn image(w: usize, h: usize, seed: u8) -> Image {
    Image::from_fn(w, h, |x, y| {
        let v = (x as u32 * 31 + y as u32 * 17 + seed as u32 * 7) as u8;
        [v, v.wrapping_mul(3), v ^ seed]
    })
}

proptest! {
    #[test]
    fn composite_keeps_ground_truth_outside_mask(
        values in prop::collection::vec(-10.0f32..10.0, 1..40),
        truth_values in prop::collection::vec(0.0f32..1.0, 1..40),
        bits in prop::collection::vec(any::<bool>(), 1..30),
        h in 1usize..9,
        w in 1usize..9,
    ) {
        let y = tensor([1, 3, h, w], &values);
        let x = tensor([1, 3, h, w], &truth_values);
        let m = mask_from_bits(&bits, h, w);
        let out = composite(&y, &x, &m).unwrap();
        for c in 0..3 {
            for yy in 0..h {
                for xx in 0..w {
                    let want = if m.get(0, 0, yy, xx) == 1.0 { y.get(0, c, yy, xx) } else { x.get(0, c, yy, xx) };
                    prop_assert_eq!(out.get(0, c, yy, xx).to_bits(), want.to_bits());
                }
            }
        }
    }

    #[test]
    fn masked_l1_ignores_pixels_outside_mask(
        values in prop::collection::vec(-1.0f32..1.0, 1..40),
        noise in prop::collection::vec(-100.0f32..100.0, 1..40),
        bits in prop::collection::vec(any::<bool>(), 1..30),
        h in 1usize..9,
        w in 1usize..9,
    ) {
        let y = tensor([1, 3, h, w], &values);
        let x = Tensor4::<f32>::filled([1, 3, h, w], 0.25);
        let m = mask_from_bits(&bits, h, w);
        let mut perturbed = y.clone();
        let mut truth2 = x.clone();
        for c in 0..3 {
            for yy in 0..h {
                for xx in 0..w {
                    if m.get(0, 0, yy, xx) == 0.0 {
                        let d = noise[(c + yy * w + xx) % noise.len()];
                        perturbed.set(0, c, yy, xx, y.get(0, c, yy, xx) + d);
                        truth2.set(0, c, yy, xx, d);
                    }
                }
            }
        }
        let a = masked_l1(&y, &x, &m).unwrap().value;
        let b = masked_l1(&perturbed, &truth2, &m).unwrap().value;
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mask_popcount_matches_closed_form(
        size_q in 4usize..24,
        region_frac in 0.2f64..0.95,
        overlap in 0usize..4,
        seed in any::<u64>(),
        task_idx in 0usize..3,
    ) {
        let size = size_q * 4;
        let task = [Task::Center, Task::Random, Task::Extrapolate][task_idx];
        let region = ((size as f64 * region_frac) as usize).clamp(2 * overlap + 1, size - 1);
        let spec = MaskSpec { task, image_size: size, region, overlap };
        let m = make_mask(&spec, seed).unwrap();
        let side = if task == Task::Extrapolate { region } else { region - 2 * overlap };
        let area = if task == Task::Extrapolate { size * size - side * side } else { side * side };
        prop_assert_eq!(m.popcount(), area);
        prop_assert_eq!(m.bits().len(), size * size);
    }

    #[test]
    fn rmse_is_symmetric_and_local_to_region(
        seed_a in any::<u8>(),
        seed_b in any::<u8>(),
        w in 2usize..12,
        h in 2usize..12,
    ) {
        let a = image(w, h, seed_a);
        let b = image(w, h, seed_b);
        let mut m = Mask::zeros(w, h);
        m.fill_rect(0, 0, w / 2 + 1, h, true);
        prop_assert_eq!(rmse(&a, &b, Some(&m)).unwrap(), rmse(&b, &a, Some(&m)).unwrap());
        prop_assert_eq!(rmse(&a, &a, None).unwrap(), 0.0);
        let mut c = b.clone();
        for y in 0..h {
            for x in 0..w {
                if !m.get(x, y) {
                    c.set(x, y, 0, seed_a);
                }
            }
        }
        prop_assert_eq!(rmse(&a, &b, Some(&m)).unwrap(), rmse(&a, &c, Some(&m)).unwrap());
        if a != b {
            prop_assert!(rmse(&a, &b, None).unwrap() > 0.0);
        }
    }

    #[test]
    fn psnr_strictly_decreasing(r in 1e-3f64..200.0, d in 1e-3f64..50.0) {
        prop_assert!(psnr(r) > psnr(r + d));
    }

    #[test]
    fn corrupt_then_perfect_composite_restores_input(
        seed in any::<u8>(),
        size_q in 2usize..8,
        mseed in any::<u64>(),
    ) {
        let size = size_q * 4;
        let img = image(size, size, seed);
        let spec = MaskSpec { task: Task::Random, image_size: size, region: size / 2, overlap: 1 };
        let m = make_mask(&spec, mseed).unwrap().to_tensor::<f32>();
        let x = img.to_tensor::<f32>();
        let input = corrupt_tensor(&x, &m, [0.5, 0.25, 0.75]).unwrap();
        let restored = composite(&x, &input, &m).unwrap();
        prop_assert_eq!(Image::from_tensor(&restored, 0).unwrap(), img);
    }
}

#[test]
fn every_byte_survives_the_float_roundtrip() {
    let img = Image::from_fn(256, 1, |x, _| [x as u8, 255 - x as u8, (x * 7) as u8]);
    assert_eq!(Image::from_tensor(&img.to_tensor::<f32>(), 0).unwrap(), img);
    assert_eq!(Image::from_tensor(&img.to_tensor::<f64>(), 0).unwrap(), img);
}
