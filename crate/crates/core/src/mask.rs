//! Dense binary masks packed into 64-bit words.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("mask dimensions differ: {a_w}x{a_h} vs {b_w}x{b_h}")]
pub struct DimMismatch {
    pub a_w: usize,
    pub a_h: usize,
    pub b_w: usize,
    pub b_h: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BitMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    /// Builds a mask from a predicate over the raster index `y * width + x`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for i in 0..width * height {
            if f(i) {
                m.words[i >> 6] |= 1 << (i & 63);
            }
        }
        m
    }

    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Self {
        assert_eq!(bits.len(), width * height);
        Self::from_fn(width, height, |i| bits[i])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn get_xy(&self, x: usize, y: usize) -> bool {
        self.get(y * self.width + x)
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        if value {
            self.words[i >> 6] |= 1 << (i & 63);
        } else {
            self.words[i >> 6] &= !(1 << (i & 63));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn check_dims(&self, other: &Self) -> Result<(), DimMismatch> {
        if self.width != other.width || self.height != other.height {
            return Err(DimMismatch {
                a_w: self.width,
                a_h: self.height,
                b_w: other.width,
                b_h: other.height,
            });
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Self) -> Result<usize, DimMismatch> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &Self) -> Result<f64, DimMismatch> {
        self.check_dims(other)?;
        let (mut inter, mut union) = (0u64, 0u64);
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones() as u64;
            union += (a | b).count_ones() as u64;
        }
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    pub fn union_with(&mut self, other: &Self) -> Result<(), DimMismatch> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    pub fn intersect_with(&mut self, other: &Self) -> Result<(), DimMismatch> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
        Ok(())
    }

    pub fn subtract(&mut self, other: &Self) -> Result<(), DimMismatch> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        Ok(())
    }

    /// Raster indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

/// Free-function form of [`BitMask::iou`].
pub fn iou(a: &BitMask, b: &BitMask) -> Result<f64, DimMismatch> {
    a.iou(b)
}
