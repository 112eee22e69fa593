//! IDX image/label files and the classification bandit built on them.
//!
//! The IDX layout is big-endian: a 4-byte magic (`0x00000803` for images,
//! `0x00000801` for labels), one `u32` per dimension, then one unsigned byte
//! per element. Pixels are scaled to `[0, 1]` as `p / 255`.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::env::{Environment, Round, SimRng};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Number of classes, and of actions in the classification bandit.
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdxError {
    #[error("at offset {offset}: expected magic {expected:#010x}, found {found:#010x}")]
    BadMagic { offset: usize, expected: u32, found: u32 },
    #[error("at offset {offset}: need {needed} more bytes, only {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("at offset {offset}: dimensions overflow the address space")]
    Overflow { offset: usize },
    #[error("at offset {offset}: {extra} trailing bytes after the payload")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("at offset {offset}: label {value} is not a digit")]
    LabelOutOfRange { offset: usize, value: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("the data set is empty")]
    Empty,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdxError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(IdxError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), IdxError> {
        let offset = self.pos;
        let found = self.u32()?;
        if found != expected {
            return Err(IdxError::BadMagic {
                offset,
                expected,
                found,
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<(), IdxError> {
        let extra = self.bytes.len() - self.pos;
        if extra > 0 {
            return Err(IdxError::TrailingBytes {
                offset: self.pos,
                extra,
            });
        }
        Ok(())
    }
}

/// Raw decoded image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major then row-major.
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(IMAGE_MAGIC)?;
    let dims_offset = r.pos;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or(IdxError::Overflow { offset: dims_offset })?;
    let pixels = r.take(len)?.to_vec();
    r.finish()?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(LABEL_MAGIC)?;
    let count = r.u32()? as usize;
    let labels = r.take(count)?.to_vec();
    r.finish()?;
    Ok(labels)
}

pub fn serialize_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn serialize_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Images with pixels in `[0, 1]` and digit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub rows: usize,
    pub cols: usize,
    /// Flattened images, `rows * cols` values each.
    pub images: Vec<f64>,
    pub labels: Vec<u8>,
}

impl LabeledImageSet {
    pub fn new(images: IdxImages, labels: Vec<u8>) -> Result<Self, IdxError> {
        if images.count != labels.len() {
            return Err(IdxError::CountMismatch {
                images: images.count,
                labels: labels.len(),
            });
        }
        if let Some((i, &value)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
            return Err(IdxError::LabelOutOfRange { offset: 8 + i, value });
        }
        Ok(Self {
            rows: images.rows,
            cols: images.cols,
            images: images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
            labels,
        })
    }

    pub fn from_bytes(images: &[u8], labels: &[u8]) -> Result<Self, IdxError> {
        Self::new(parse_idx_images(images)?, parse_idx_labels(labels)?)
    }

    pub fn from_files(images: &Path, labels: &Path) -> Result<Self, IdxError> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|e| IdxError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        Self::from_bytes(&read(images)?, &read(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.pixels_per_image();
        &self.images[i * n..(i + 1) * n]
    }

    /// The first `n` images (all of them if fewer).
    pub fn truncated(mut self, n: usize) -> Self {
        let n = n.min(self.len());
        self.images.truncate(n * self.pixels_per_image());
        self.labels.truncate(n);
        self
    }

    /// Reverses the pixel scaling.
    pub fn to_idx(&self) -> (IdxImages, Vec<u8>) {
        let images = IdxImages {
            count: self.len(),
            rows: self.rows,
            cols: self.cols,
            pixels: self.images.iter().map(|&v| (v * 255.0).round() as u8).collect(),
        };
        (images, self.labels.clone())
    }
}

/// Ten-action bandit whose reward is 1 when the action equals the label.
///
/// Images are presented in a shuffled order drawn from the trial RNG at the
/// start of every pass over the data, so each image appears once per epoch.
/// Rewards are noiseless.
#[derive(Debug, Clone)]
pub struct ClassificationEnv {
    set: Arc<LabeledImageSet>,
    order: Vec<usize>,
    pos: usize,
    epochs: usize,
}

impl ClassificationEnv {
    pub fn new(set: Arc<LabeledImageSet>) -> Result<Self, IdxError> {
        if set.is_empty() || set.pixels_per_image() == 0 {
            return Err(IdxError::Empty);
        }
        let order = (0..set.len()).collect();
        Ok(Self {
            pos: set.len(),
            set,
            order,
            epochs: 0,
        })
    }

    /// Presentation order of the current epoch.
    pub fn epoch_order(&self) -> &[usize] {
        &self.order
    }

    /// Number of shuffles performed so far.
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// Label of the image most recently presented.
    pub fn current_label(&self) -> Option<u8> {
        (self.epochs > 0).then(|| self.set.labels[self.order[self.pos - 1]])
    }
}

impl Environment for ClassificationEnv {
    fn dim(&self) -> usize {
        self.set.pixels_per_image()
    }

    fn num_actions(&self) -> usize {
        NUM_CLASSES
    }

    fn noise_sigma(&self) -> f64 {
        0.0
    }

    fn next_round(&mut self, rng: &mut SimRng) -> Round {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
            self.epochs += 1;
        }
        let i = self.order[self.pos];
        self.pos += 1;
        let mut means = vec![0.0; NUM_CLASSES];
        means[self.set.labels[i] as usize] = 1.0;
        Round {
            context: self.set.image(i).to_vec(),
            means,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn two_pixel_file() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 255]);
        b
    }

    #[test]
    fn decodes_hand_assembled_image() {
        let bytes = two_pixel_file();
        assert_eq!(bytes.len(), 18);
        let img = parse_idx_images(&bytes).unwrap();
        assert_eq!((img.count, img.rows, img.cols), (1, 1, 2));
        let set = LabeledImageSet::new(img.clone(), vec![3]).unwrap();
        assert_eq!(set.image(0), &[0.0, 1.0]);
        assert_eq!(serialize_idx_images(&img), bytes);
        assert_eq!(serialize_idx_images(&set.to_idx().0), bytes);
    }

    #[test]
    fn decodes_labels() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9];
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![7, 0, 9]);
        assert_eq!(serialize_idx_labels(&[7, 0, 9]), bytes);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(
            parse_idx_images(&[]),
            Err(IdxError::Truncated {
                offset: 0,
                needed: 4,
                available: 0
            })
        );
        let mut bad = two_pixel_file();
        bad[3] = 1;
        assert!(matches!(
            parse_idx_images(&bad),
            Err(IdxError::BadMagic { offset: 0, .. })
        ));
        let short = &two_pixel_file()[..17];
        assert_eq!(
            parse_idx_images(short),
            Err(IdxError::Truncated {
                offset: 16,
                needed: 2,
                available: 1
            })
        );
        let mut long = two_pixel_file();
        long.push(0);
        assert_eq!(
            parse_idx_images(&long),
            Err(IdxError::TrailingBytes { offset: 18, extra: 1 })
        );
        let huge = [0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255];
        assert!(matches!(
            parse_idx_images(&huge),
            Err(IdxError::Overflow { offset: 4 }) | Err(IdxError::Truncated { offset: 16, .. })
        ));
        assert!(matches!(
            LabeledImageSet::new(parse_idx_images(&two_pixel_file()).unwrap(), vec![12]),
            Err(IdxError::LabelOutOfRange { offset: 8, value: 12 })
        ));
    }

    fn tiny_set(n: usize) -> Arc<LabeledImageSet> {
        let img = IdxImages {
            count: n,
            rows: 1,
            cols: 1,
            pixels: (0..n).map(|i| i as u8).collect(),
        };
        Arc::new(LabeledImageSet::new(img, (0..n).map(|i| (i % 10) as u8).collect()).unwrap())
    }

    #[test]
    fn epochs_are_permutations() {
        let mut env = ClassificationEnv::new(tiny_set(23)).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        for epoch in 1..=3 {
            let mut seen = Vec::new();
            for _ in 0..23 {
                let r = env.next_round(&mut rng);
                seen.push((r.context[0] * 255.0).round() as usize);
                assert_eq!(r.optimal_reward(), 1.0);
            }
            assert_eq!(env.epochs(), epoch);
            seen.sort();
            assert_eq!(seen, (0..23).collect::<Vec<_>>());
        }
    }

    #[test]
    fn regret_is_one_minus_reward() {
        let mut env = ClassificationEnv::new(tiny_set(10)).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        for a in 0..30 {
            let r = env.next_round(&mut rng);
            let y = env.sample_reward(&r, a % 10, &mut rng);
            assert!(y == 0.0 || y == 1.0);
            assert_eq!(r.regret(a % 10), 1.0 - y);
        }
    }
}
