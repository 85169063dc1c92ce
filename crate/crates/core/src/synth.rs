//! Procedural test images.
//!
//! Desk experiments need a corpus of photo-like images without shipping
//! photographs. `landscape` layers multi-octave value noise, soft blobs,
//! hard-edged shapes and fine grain so that seams are locally smooth but
//! the image contains regions that are easy to confuse, as real photos do.

use crate::raster::RawImage;
use crate::rng::SeededRng;

struct ValueNoise {
    cell: f64,
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, cell: f64, rng: &mut SeededRng) -> Self {
        let cols = (width as f64 / cell).ceil() as usize + 2;
        let rows = (height as f64 / cell).ceil() as usize + 2;
        let lattice = (0..rows * cols).map(|_| rng.unit() * 2.0 - 1.0).collect();
        ValueNoise { cell, cols, lattice }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let gx = x / self.cell;
        let gy = y / self.cell;
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
        let v = |cx: usize, cy: usize| self.lattice[cy * self.cols + cx];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

struct Fbm {
    octaves: Vec<(ValueNoise, f64)>,
}

impl Fbm {
    fn new(width: usize, height: usize, base_cell: f64, rng: &mut SeededRng) -> Self {
        let mut octaves = Vec::new();
        let mut cell = base_cell;
        let mut amp = 1.0;
        while cell >= 4.0 {
            octaves.push((ValueNoise::new(width, height, cell, rng), amp));
            cell /= 2.0;
            amp *= 0.55;
        }
        Fbm { octaves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.octaves.iter().map(|(n, a)| n.at(x, y) * a).sum()
    }
}

enum Shape {
    Blob { cx: f64, cy: f64, rx: f64, ry: f64, color: [f64; 3], alpha: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64, color: [f64; 3] },
}

fn random_color(rng: &mut SeededRng) -> [f64; 3] {
    [rng.unit() * 255.0, rng.unit() * 255.0, rng.unit() * 255.0]
}

/// Photo-like RGB image, deterministic in `seed`.
pub fn landscape(width: usize, height: usize, seed: u64) -> RawImage {
    let mut rng = SeededRng::new(seed);
    let (w, h) = (width as f64, height as f64);
    let sky_top = random_color(&mut rng);
    let sky_bottom = random_color(&mut rng);
    let ground = random_color(&mut rng);
    let horizon = h * (0.3 + 0.4 * rng.unit());
    let base_cell = (w.max(h) / 3.0).max(8.0);
    let fields: Vec<Fbm> = (0..3).map(|_| Fbm::new(width, height, base_cell, &mut rng)).collect();
    let horizon_noise = Fbm::new(width, height, base_cell, &mut rng);
    let mix: Vec<[f64; 3]> = (0..3)
        .map(|_| [rng.unit() * 2.0 - 1.0, rng.unit() * 2.0 - 1.0, rng.unit() * 2.0 - 1.0])
        .collect();
    let contrast = 40.0 + 50.0 * rng.unit();

    let mut shapes = Vec::new();
    for _ in 0..(3 + rng.below(5)) {
        shapes.push(Shape::Blob {
            cx: rng.unit() * w,
            cy: rng.unit() * h,
            rx: (0.05 + 0.2 * rng.unit()) * w,
            ry: (0.05 + 0.2 * rng.unit()) * h,
            color: random_color(&mut rng),
            alpha: 0.4 + 0.5 * rng.unit(),
        });
    }
    for _ in 0..rng.below(4) {
        let x0 = rng.unit() * w;
        let y0 = rng.unit() * h;
        shapes.push(Shape::Rect {
            x0,
            y0,
            x1: x0 + (0.05 + 0.25 * rng.unit()) * w,
            y1: y0 + (0.05 + 0.3 * rng.unit()) * h,
            color: random_color(&mut rng),
        });
    }

    let mut grain = SeededRng::with_stream(seed, 1);
    let mut pixels = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let edge = horizon + horizon_noise.at(fx, fy.min(h - 1.0)) * h * 0.08;
            let mut c = if fy < edge {
                let t = fy / edge.max(1.0);
                [0, 1, 2].map(|i| sky_top[i] * (1.0 - t) + sky_bottom[i] * t)
            } else {
                ground
            };
            let n = [fields[0].at(fx, fy), fields[1].at(fx, fy), fields[2].at(fx, fy)];
            for (i, ci) in c.iter_mut().enumerate() {
                *ci += contrast * (mix[i][0] * n[0] + mix[i][1] * n[1] + mix[i][2] * n[2]);
            }
            for s in &shapes {
                match *s {
                    Shape::Blob { cx, cy, rx, ry, color, alpha } => {
                        let d = ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2);
                        let a = alpha * (-d * 2.0).exp();
                        for i in 0..3 {
                            c[i] = c[i] * (1.0 - a) + color[i] * a;
                        }
                    }
                    Shape::Rect { x0, y0, x1, y1, color } => {
                        if fx >= x0 && fx < x1 && fy >= y0 && fy < y1 {
                            let shade = 0.85 + 0.15 * n[0];
                            c = color.map(|v| v * shade);
                        }
                    }
                }
            }
            for v in c {
                let jitter = (grain.unit() - 0.5) * 6.0;
                pixels.push((v.clamp(3.0, 252.0) + jitter).round() as u8);
            }
        }
    }
    RawImage::new(width, height, pixels).expect("dimensions match pixel count")
}

/// Strong horizontal and vertical ramps plus a random tint: every seam is
/// continuous and every wrong pairing is clearly discontinuous.
pub fn ramps(width: usize, height: usize, seed: u64) -> RawImage {
    let mut rng = SeededRng::new(seed);
    let tint = rng.unit() * 80.0;
    let phase = rng.unit() * std::f64::consts::TAU;
    RawImage::from_fn(width, height, |x, y| {
        let fx = x as f64 / width as f64;
        let fy = y as f64 / height as f64;
        let r = 255.0 * fx;
        let g = 255.0 * fy;
        let b = tint + 80.0 * (1.0 + (6.0 * fx + 4.0 * fy + phase).sin());
        [r as u8, g as u8, b.clamp(0.0, 255.0) as u8]
    })
    .expect("nonzero dimensions")
}
