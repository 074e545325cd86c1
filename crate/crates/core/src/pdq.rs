//! DCT-based perceptual hash.
//!
//! Pipeline: luminance, two box-filter passes per axis with window
//! `ceil(dim / 64)`, decimation to 64x64, orthonormal DCT-II, and a median
//! threshold over the retained low-frequency block. The full hash keeps the
//! 16x16 block (256 bits); the coarse variant keeps 4x4 (16 bits).
//!
//! The output is not bit-compatible with the reference PDQ implementation.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::bits::PerceptualHash;
use crate::error::Result;
use crate::image::LuminanceImage;

const BUFFER_DIM: usize = 64;
const FULL_DIM: usize = 16;
const COARSE_DIM: usize = 4;
const FILTER_PASSES: usize = 2;

/// Coefficients within this fraction of the block's largest magnitude of the
/// median count as ties, so floating-point noise around exact zeros cannot
/// decide a bit.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// 16-bit hash from the 4x4 lowest-frequency DCT block, bit 15 = (0,0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CoarsePdqHash(pub u16);

impl CoarsePdqHash {
    pub fn distance(&self, other: &Self) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

/// Row `u` holds the orthonormal DCT-II basis vector of frequency `u` over 64 samples.
fn dct_matrix() -> &'static [[f64; BUFFER_DIM]; FULL_DIM] {
    static MATRIX: OnceLock<[[f64; BUFFER_DIM]; FULL_DIM]> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let n = BUFFER_DIM as f64;
        let mut m = [[0.0; BUFFER_DIM]; FULL_DIM];
        for (u, row) in m.iter_mut().enumerate() {
            let scale = if u == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = scale * (PI * (2 * x + 1) as f64 * u as f64 / (2.0 * n)).cos();
            }
        }
        m
    })
}

/// Centered moving average with edge clamping, applied in place.
fn box_filter(data: &mut [f64], window: usize, scratch: &mut Vec<f64>) {
    if window <= 1 {
        return;
    }
    let n = data.len();
    scratch.clear();
    scratch.reserve(n + 1);
    scratch.push(0.0);
    let mut acc = 0.0;
    for &v in data.iter() {
        acc += v;
        scratch.push(acc);
    }
    let lo = (window - 1) / 2;
    let hi = window / 2;
    for (i, out) in data.iter_mut().enumerate() {
        let a = i.saturating_sub(lo);
        let b = (i + hi + 1).min(n);
        *out = (scratch[b] - scratch[a]) / (b - a) as f64;
    }
}

/// Weighted 64x64 downsample of the luminance plane.
pub fn downsample(img: &LuminanceImage) -> Result<Vec<f64>> {
    img.check_hashable()?;
    let (w, h) = (img.width(), img.height());
    let mut plane: Vec<f64> = img.pixels().iter().map(|&p| f64::from(p)).collect();
    let wx = w.div_ceil(BUFFER_DIM);
    let wy = h.div_ceil(BUFFER_DIM);
    let mut scratch = Vec::new();

    for _ in 0..FILTER_PASSES {
        for row in plane.chunks_exact_mut(w) {
            box_filter(row, wx, &mut scratch);
        }
    }
    if wy > 1 {
        let mut column = vec![0.0; h];
        for x in 0..w {
            for (y, c) in column.iter_mut().enumerate() {
                *c = plane[y * w + x];
            }
            for _ in 0..FILTER_PASSES {
                box_filter(&mut column, wy, &mut scratch);
            }
            for (y, c) in column.iter().enumerate() {
                plane[y * w + x] = *c;
            }
        }
    }

    let mut out = Vec::with_capacity(BUFFER_DIM * BUFFER_DIM);
    for i in 0..BUFFER_DIM {
        let y = ((2 * i + 1) * h) / (2 * BUFFER_DIM);
        for j in 0..BUFFER_DIM {
            let x = ((2 * j + 1) * w) / (2 * BUFFER_DIM);
            out.push(plane[y * w + x]);
        }
    }
    Ok(out)
}

/// 16x16 low-frequency block of the 2D DCT of a 64x64 buffer, row-major.
pub fn dct_16x16(buffer: &[f64]) -> Vec<f64> {
    assert_eq!(buffer.len(), BUFFER_DIM * BUFFER_DIM);
    let d = dct_matrix();
    // rows first: tmp[u][x] = sum_y D[u][y] * B[y][x]
    let mut tmp = vec![0.0; FULL_DIM * BUFFER_DIM];
    for (u, drow) in d.iter().enumerate() {
        let out = &mut tmp[u * BUFFER_DIM..(u + 1) * BUFFER_DIM];
        for (y, &coef) in drow.iter().enumerate() {
            let src = &buffer[y * BUFFER_DIM..(y + 1) * BUFFER_DIM];
            for (o, s) in out.iter_mut().zip(src) {
                *o += coef * s;
            }
        }
    }
    let mut coeffs = vec![0.0; FULL_DIM * FULL_DIM];
    for u in 0..FULL_DIM {
        let trow = &tmp[u * BUFFER_DIM..(u + 1) * BUFFER_DIM];
        for (v, dv) in d.iter().enumerate() {
            coeffs[u * FULL_DIM + v] = trow.iter().zip(dv.iter()).map(|(a, b)| a * b).sum();
        }
    }
    coeffs
}

/// Marks each coefficient strictly above the median (mean of the two middle
/// values) as one; near-ties resolve to zero.
fn median_threshold(coeffs: &[f64]) -> Vec<bool> {
    let mut sorted = coeffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = (sorted[(n - 1) / 2] + sorted[n / 2]) / 2.0;
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let cut = median + TIE_TOLERANCE * scale;
    coeffs.iter().map(|&c| c > cut).collect()
}

fn is_flat(buffer: &[f64]) -> bool {
    let (lo, hi) = buffer
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo <= TIE_TOLERANCE * hi.abs().max(1.0)
}

/// Computes the 256-bit perceptual hash of `img`.
///
/// Flat images (constant after downsampling) hash to all zeros.
pub fn compute_hash(img: &LuminanceImage) -> Result<PerceptualHash> {
    let buffer = downsample(img)?;
    if is_flat(&buffer) {
        return Ok(PerceptualHash::ZERO);
    }
    let bits = median_threshold(&dct_16x16(&buffer));
    Ok(PerceptualHash::from_bits(&bits))
}

/// Computes the 16-bit coarse hash from the 4x4 corner of the same DCT.
pub fn compute_coarse_pdq(img: &LuminanceImage) -> Result<CoarsePdqHash> {
    let buffer = downsample(img)?;
    if is_flat(&buffer) {
        return Ok(CoarsePdqHash(0));
    }
    let full = dct_16x16(&buffer);
    let block: Vec<f64> = (0..COARSE_DIM)
        .flat_map(|i| (0..COARSE_DIM).map(move |j| (i, j)))
        .map(|(i, j)| full[i * FULL_DIM + j])
        .collect();
    let bits = median_threshold(&block);
    let value = bits.iter().fold(0u16, |acc, &b| (acc << 1) | u16::from(b));
    Ok(CoarsePdqHash(value))
}
