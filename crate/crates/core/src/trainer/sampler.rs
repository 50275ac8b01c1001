use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    corrupt_tensor, hflip, load_image, make_mask_with, random_crop_with, resize_bilinear, Image,
    MaskSpec,
};
use crate::error::{PceError, Result};
use crate::tensor::Tensor4;

use super::state::mix_seed;

/// One training batch on the `[0, 1]` scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub real: Tensor4<f32>,
    /// `(n, 1, h, w)`, 1 on missing pixels.
    pub mask: Tensor4<f32>,
    /// `real` with masked pixels filled.
    pub input: Tensor4<f32>,
}

/// In-memory training images, each resized so its shortest side equals the
/// training crop size.
///
/// Sample `k` (counting across batches) is drawn from epoch `k / len` using a
/// permutation seeded by `(seed, epoch)`, and its crop, mirror and mask come
/// from a generator seeded by `(seed, k)`. A batch is therefore a pure
/// function of the seed and the step, which makes resumed runs bit-exact.
#[derive(Debug, Clone)]
pub struct TrainData {
    images: Vec<Image>,
    image_size: usize,
    permutation: Option<(u64, Vec<usize>)>,
}

impl TrainData {
    pub fn from_images(images: Vec<Image>, image_size: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(PceError::config("training set is empty"));
        }
        let images = images
            .iter()
            .map(|img| resize_bilinear(img, image_size))
            .collect::<Result<_>>()?;
        Ok(TrainData {
            images,
            image_size,
            permutation: None,
        })
    }

    pub fn load(paths: &[PathBuf], image_size: usize) -> Result<Self> {
        let images = paths.iter().map(load_image).collect::<Result<Vec<_>>>()?;
        Self::from_images(images, image_size)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    fn index(&mut self, seed: u64, k: u64) -> usize {
        let n = self.images.len() as u64;
        let epoch = k / n;
        if self.permutation.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.images.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch)));
            self.permutation = Some((epoch, perm));
        }
        self.permutation.as_ref().unwrap().1[(k % n) as usize]
    }

    /// Batch for training step `step` (0-based).
    pub fn batch(
        &mut self,
        step: u64,
        batch: usize,
        seed: u64,
        mask: &MaskSpec,
        flip: bool,
        fill: [f64; 3],
    ) -> Result<Batch> {
        if mask.image_size != self.image_size {
            return Err(PceError::config(format!(
                "mask size {} for {} training crops",
                mask.image_size, self.image_size
            )));
        }
        let mut reals = Vec::with_capacity(batch);
        let mut masks = Vec::with_capacity(batch);
        for j in 0..batch as u64 {
            let k = step * batch as u64 + j;
            let idx = self.index(seed, k);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 0x5EED, k));
            let crop = random_crop_with(&self.images[idx], self.image_size, &mut rng)?;
            let coin = rng.gen::<bool>();
            let img = hflip(&crop, flip && coin);
            reals.push(img.to_tensor::<f32>());
            masks.push(make_mask_with(mask, &mut rng)?.to_tensor::<f32>());
        }
        let real = Tensor4::stack(&reals)?;
        let mask = Tensor4::stack(&masks)?;
        let input = corrupt_tensor(&real, &mask, fill)?;
        Ok(Batch { real, mask, input })
    }
}
