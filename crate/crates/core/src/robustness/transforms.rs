//! Controlled image perturbations with a scalar strength factor.
//!
//! Every transform finishes by framing the result with a 20-pixel black
//! border. Stochastic transforms draw from a ChaCha stream seeded by the
//! spec's seed, so identical inputs give identical bytes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Image;
use crate::error::{Error, Result};

pub const PADDING: u32 = 20;
/// Tiling replaces cells of a 3x2 (or 2x3) partition, each 1/6 of the area.
pub const TILING_CELLS: usize = 6;
/// Scale of the object pasted onto the clutter background.
const CLUTTER_OBJECT_SCALE: f64 = 0.5;
const CLUTTER_PLACEMENT_ATTEMPTS: usize = 50;
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Contrast,
    Brightness,
    Rotation,
    Downscale,
    ScaleBg,
    Blur,
    Tiling,
    Noise,
    Clutter,
    Occlusion,
}

impl TransformKind {
    pub const ALL: [TransformKind; 10] = [
        TransformKind::Contrast,
        TransformKind::Brightness,
        TransformKind::Rotation,
        TransformKind::Downscale,
        TransformKind::ScaleBg,
        TransformKind::Blur,
        TransformKind::Tiling,
        TransformKind::Noise,
        TransformKind::Clutter,
        TransformKind::Occlusion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Contrast => "contrast",
            TransformKind::Brightness => "brightness",
            TransformKind::Rotation => "rotation",
            TransformKind::Downscale => "downscale",
            TransformKind::ScaleBg => "scale_bg",
            TransformKind::Blur => "blur",
            TransformKind::Tiling => "tiling",
            TransformKind::Noise => "noise",
            TransformKind::Clutter => "clutter",
            TransformKind::Occlusion => "occlusion",
        }
    }

    /// Factor range in order of increasing strength.
    pub fn strength_range(&self) -> (f64, f64) {
        match self {
            TransformKind::Contrast | TransformKind::Brightness => (0.05, 20.0),
            TransformKind::Rotation => (0.0, 180.0),
            TransformKind::Downscale => (0.5, 0.05),
            TransformKind::ScaleBg => (0.0, 1.0),
            TransformKind::Blur => (1.0, 15.0),
            TransformKind::Tiling => (1.0, TILING_CELLS as f64),
            TransformKind::Noise => (0.0, 1.0),
            TransformKind::Clutter => (1.0, 28.0),
            TransformKind::Occlusion => (0.0, 1.0),
        }
    }

    pub fn needs_aux(&self) -> bool {
        matches!(
            self,
            TransformKind::Tiling | TransformKind::Clutter | TransformKind::ScaleBg
        )
    }

    fn is_count(&self) -> bool {
        matches!(self, TransformKind::Tiling | TransformKind::Clutter)
    }

    fn is_multiplicative(&self) -> bool {
        matches!(self, TransformKind::Contrast | TransformKind::Brightness)
    }

    pub fn validate(&self, factor: f64) -> Result<()> {
        let (a, b) = self.strength_range();
        let (lo, hi) = (a.min(b), a.max(b));
        let ok = factor.is_finite()
            && factor >= lo - RANGE_SLACK
            && factor <= hi + RANGE_SLACK
            && (!self.is_count() || factor.fract() == 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::FactorOutOfRange {
                kind: self.name(),
                factor,
            })
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown transform `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub factor: f64,
    pub aux: Option<Arc<Image>>,
    pub seed: u64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, factor: f64) -> Self {
        Self {
            kind,
            factor,
            aux: None,
            seed: 0,
        }
    }

    pub fn with_aux(mut self, aux: Arc<Image>) -> Self {
        self.aux = Some(aux);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `n` factors spanning the kind's range in order of increasing strength:
/// geometric for contrast and brightness, linear otherwise, rounded to whole
/// patch counts for tiling and clutter. Count kinds reject an `n` larger
/// than their number of distinct counts.
pub fn factor_grid(kind: TransformKind, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter("factor grid needs n >= 2".into()));
    }
    let (lo, hi) = kind.strength_range();
    if kind.is_count() && n > (hi - lo) as usize + 1 {
        return Err(Error::InvalidParameter(format!(
            "{kind} has only {} distinct patch counts",
            (hi - lo) as usize + 1
        )));
    }
    let last = (n - 1) as f64;
    let grid = (0..n)
        .map(|i| {
            if i == 0 {
                return lo;
            }
            if i == n - 1 {
                return hi;
            }
            let t = i as f64;
            let v = if kind.is_multiplicative() {
                lo * (hi / lo).powf(t / last)
            } else {
                lo + (hi - lo) * t / last
            };
            if kind.is_count() {
                v.round()
            } else {
                v
            }
        })
        .collect();
    Ok(grid)
}

pub fn apply_transform(img: &Image, spec: &TransformSpec) -> Result<Image> {
    let kind = spec.kind;
    kind.validate(spec.factor)?;
    let aux = || {
        spec.aux
            .as_deref()
            .ok_or(Error::MissingAuxImage(kind.name()))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f = spec.factor;
    let out = match kind {
        TransformKind::Contrast => contrast(img, f),
        TransformKind::Brightness => map_channels(img, |v| v * f),
        TransformKind::Rotation => rotate(img, f),
        TransformKind::Downscale => return Ok(downscale(img, f)),
        TransformKind::ScaleBg => scale_on_background(img, aux()?, f),
        TransformKind::Blur => gaussian_blur(img, f),
        TransformKind::Tiling => tiling(img, aux()?, f as usize, &mut rng),
        TransformKind::Noise => noise(img, f, &mut rng),
        TransformKind::Clutter => clutter(img, aux()?, f as usize, &mut rng),
        TransformKind::Occlusion => occlude(img, f, &mut rng),
    };
    Ok(out.pad(PADDING))
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn map_channels(img: &Image, f: impl Fn(f64) -> f64) -> Image {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        *p = clamp_u8(f(*p as f64));
    }
    out
}

fn contrast(img: &Image, factor: f64) -> Image {
    let n = (img.width() * img.height()) as f64;
    let mean = img
        .pixels()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .sum::<f64>()
        / n;
    map_channels(img, |v| mean + factor * (v - mean))
}

/// Exact sine and cosine for multiples of 90 degrees.
fn sin_cos_degrees(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    match r {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        270.0 => (-1.0, 0.0),
        _ => deg.to_radians().sin_cos(),
    }
}

/// Nearest-neighbour rotation about the image centre onto a canvas grown to
/// hold the whole rotated image.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (sin, cos) = sin_cos_degrees(degrees);
    let (w, h) = (img.width() as f64, img.height() as f64);
    let fit = |v: f64| ((v - 1e-9).ceil() as u32).max(1);
    let out_w = fit(w * cos.abs() + h * sin.abs());
    let out_h = fit(w * sin.abs() + h * cos.abs());
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ox, oy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let mut out = Image::black(out_w, out_h).expect("positive dimensions");
    for y in 0..out_h {
        for x in 0..out_w {
            let dx = x as f64 - ox;
            let dy = y as f64 - oy;
            let sx = (cos * dx + sin * dy + cx).round();
            let sy = (-sin * dx + cos * dy + cy).round();
            if sx >= 0.0 && sy >= 0.0 && sx < w && sy < h {
                out.put(x, y, img.get(sx as u32, sy as u32));
            }
        }
    }
    out
}

/// Shrinks the content by `scale` and places it at the top-left of the
/// padded canvas, which keeps the padded input size.
fn downscale(img: &Image, scale: f64) -> Image {
    let w = ((img.width() as f64 * scale).round() as u32).max(1);
    let h = ((img.height() as f64 * scale).round() as u32).max(1);
    let small = img.resize(w, h);
    let mut out = Image::black(img.width() + 2 * PADDING, img.height() + 2 * PADDING)
        .expect("positive dimensions");
    out.paste(&small, PADDING, PADDING);
    out
}

fn scale_on_background(img: &Image, bg: &Image, ratio: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = bg.resize(w, h);
    let s = 1.0 - ratio;
    let cw = (w as f64 * s).round() as u32;
    let ch = (h as f64 * s).round() as u32;
    if cw > 0 && ch > 0 {
        let content = img.resize(cw, ch);
        out.paste(&content, (w - cw) / 2, (h - ch) / 2);
    }
    out
}

/// Separable Gaussian blur with a `ceil(3 sigma)` radius and clamped edges.
/// `sigma <= 0` is the identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let src = img.pixels();
    let mut tmp = vec![0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let sx = (x + i).clamp(0, w - 1);
                    acc += k * src[((y * w + sx) * 3 + c) as usize] as f64;
                }
                tmp[((y * w + x) * 3 + c) as usize] = acc;
            }
        }
    }
    let mut out = img.clone();
    let dst = out.pixels_mut();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let sy = (y + i).clamp(0, h - 1);
                    acc += k * tmp[((sy * w + x) * 3 + c) as usize];
                }
                dst[((y * w + x) * 3 + c) as usize] = clamp_u8(acc);
            }
        }
    }
    out
}

/// Cell rectangles `(x, y, w, h)` of the six-way partition.
fn tiling_cells(w: u32, h: u32) -> Vec<(u32, u32, u32, u32)> {
    let (cols, rows) = if w >= h { (3, 2) } else { (2, 3) };
    let mut cells = Vec::with_capacity(TILING_CELLS);
    for r in 0..rows {
        for c in 0..cols {
            let x0 = w * c / cols;
            let x1 = w * (c + 1) / cols;
            let y0 = h * r / rows;
            let y1 = h * (r + 1) / rows;
            cells.push((x0, y0, x1 - x0, y1 - y0));
        }
    }
    cells
}

fn tiling(img: &Image, aux: &Image, count: usize, rng: &mut ChaCha8Rng) -> Image {
    let (w, h) = (img.width(), img.height());
    let source = aux.resize(w, h);
    let mut cells = tiling_cells(w, h);
    cells.shuffle(rng);
    let mut out = img.clone();
    for &(x, y, cw, ch) in cells.iter().take(count) {
        if cw == 0 || ch == 0 {
            continue;
        }
        let sx = rng.random_range(0..=w - cw);
        let sy = rng.random_range(0..=h - ch);
        let patch = source.crop(sx, sy, cw, ch).expect("patch inside source");
        out.paste(&patch, x, y);
    }
    out
}

fn noise(img: &Image, sigma: f64, rng: &mut ChaCha8Rng) -> Image {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *p = clamp_u8(*p as f64 + 255.0 * sigma * n);
    }
    out
}

fn overlaps(a: (u32, u32, u32, u32), b: (u32, u32, u32, u32)) -> bool {
    a.0 < b.0 + b.2 && b.0 < a.0 + a.2 && a.1 < b.1 + b.3 && b.1 < a.1 + a.3
}

/// Object (the content at half scale) centred on the auxiliary scene, with
/// `count` mirrored patches of the scene scattered around it.
fn clutter(img: &Image, aux: &Image, count: usize, rng: &mut ChaCha8Rng) -> Image {
    let (w, h) = (img.width(), img.height());
    let scene = aux.resize(w, h);
    let mut out = scene.clone();
    let ow = ((w as f64 * CLUTTER_OBJECT_SCALE).round() as u32).max(1);
    let oh = ((h as f64 * CLUTTER_OBJECT_SCALE).round() as u32).max(1);
    let object_box = ((w - ow) / 2, (h - oh) / 2, ow, oh);
    let mirrored = scene.flip_horizontal();
    let pw = (w / 6).max(1);
    let ph = (h / 6).max(1);
    let mut placed: Vec<(u32, u32, u32, u32)> = vec![object_box];
    for _ in 0..count {
        let sx = rng.random_range(0..=w - pw);
        let sy = rng.random_range(0..=h - ph);
        for _ in 0..CLUTTER_PLACEMENT_ATTEMPTS {
            let cand = (
                rng.random_range(0..=w - pw),
                rng.random_range(0..=h - ph),
                pw,
                ph,
            );
            if !placed.iter().any(|&p| overlaps(p, cand)) {
                let patch = mirrored.crop(sx, sy, pw, ph).expect("patch inside scene");
                out.paste(&patch, cand.0, cand.1);
                placed.push(cand);
                break;
            }
        }
    }
    out.paste(&img.resize(ow, oh), object_box.0, object_box.1);
    out
}

/// Black discs are added until at least `coverage` of the pixels are hidden.
/// Each disc is centred on a uniformly drawn uncovered pixel.
fn occlude(img: &Image, coverage: f64, rng: &mut ChaCha8Rng) -> Image {
    let (w, h) = (img.width(), img.height());
    let total = (w * h) as usize;
    let target = (coverage * total as f64).ceil() as usize;
    let mut out = img.clone();
    if target == 0 {
        return out;
    }
    if target >= total {
        return Image::black(w, h).expect("positive dimensions");
    }
    let radius = (w.min(h) as f64 / 8.0).max(1.0);
    let r2 = radius * radius;
    let mut covered = vec![false; total];
    let mut n_covered = 0usize;
    while n_covered < target {
        let uncovered = total - n_covered;
        let mut pick = rng.random_range(0..uncovered);
        let centre = covered
            .iter()
            .position(|&c| {
                if c {
                    return false;
                }
                if pick == 0 {
                    return true;
                }
                pick -= 1;
                false
            })
            .expect("an uncovered pixel exists");
        let (cx, cy) = ((centre as u32 % w) as f64, (centre as u32 / w) as f64);
        let y0 = (cy - radius).floor().max(0.0) as u32;
        let y1 = ((cy + radius).ceil() as u32).min(h - 1);
        let x0 = (cx - radius).floor().max(0.0) as u32;
        let x1 = ((cx + radius).ceil() as u32).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let i = (y * w + x) as usize;
                if dx * dx + dy * dy <= r2 && !covered[i] {
                    covered[i] = true;
                    n_covered += 1;
                    out.put(x, y, [0, 0, 0]);
                }
            }
        }
    }
    out
}
