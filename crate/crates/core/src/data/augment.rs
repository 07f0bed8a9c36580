use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

/// Train-time augmentation: zero-pad by `pad`, crop back to the original size
/// at a random offset, then mirror horizontally when the flip draw is >= 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augment {
    pub enabled: bool,
    pub pad: usize,
    pub flip: bool,
}

impl Default for Augment {
    fn default() -> Self {
        Augment {
            enabled: true,
            pad: 4,
            flip: true,
        }
    }
}

impl Augment {
    pub const OFF: Augment = Augment {
        enabled: false,
        pad: 0,
        flip: false,
    };

    /// Augments a sample-major `(B, C, H, W)` batch in place. Per image the
    /// draws are: crop row offset, crop column offset, flip.
    pub fn apply(&self, images: &mut [f32], channels: usize, height: usize, width: usize, rng: &mut Rng) {
        if !self.enabled {
            return;
        }
        let plane = height * width;
        let img_len = channels * plane;
        let mut scratch = vec![0.0f32; img_len];
        for img in images.chunks_mut(img_len) {
            let (oy, ox) = if self.pad > 0 {
                (rng.gen_range(0..=2 * self.pad), rng.gen_range(0..=2 * self.pad))
            } else {
                (0, 0)
            };
            let flip = self.flip && rng.gen::<f64>() >= 0.5;
            if oy == self.pad && ox == self.pad && !flip {
                continue;
            }
            for c in 0..channels {
                let src = &img[c * plane..][..plane];
                let dst = &mut scratch[c * plane..][..plane];
                for y in 0..height {
                    // padded-image row oy + y maps to source row oy + y - pad
                    let sy = (oy + y) as isize - self.pad as isize;
                    for x in 0..width {
                        let xx = if flip { width - 1 - x } else { x };
                        let sx = (ox + xx) as isize - self.pad as isize;
                        dst[y * width + x] = if sy >= 0 && sy < height as isize && sx >= 0 && sx < width as isize {
                            src[sy as usize * width + sx as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
            img.copy_from_slice(&scratch);
        }
    }
}
