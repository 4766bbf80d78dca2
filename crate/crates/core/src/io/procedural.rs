//! Seeded synthetic "clean" images: gradients, anti-aliased shapes, stripes.

use crate::image::Image;
use crate::tensor::Rng;

fn smoothstep(edge: f64, d: f64) -> f64 {
    // Coverage of a pixel by a shape whose signed distance is `d` (negative inside).
    (0.5 - d / edge).clamp(0.0, 1.0)
}

fn color(rng: &mut Rng) -> [f64; 3] {
    [rng.uniform(), rng.uniform(), rng.uniform()]
}

/// Draws one RGB image of the given size from `rng`.
pub fn procedural_image(width: usize, height: usize, rng: &mut Rng) -> Image {
    let (w, h) = (width as f64, height as f64);
    let c0 = color(rng);
    let c1 = color(rng);
    let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (ga, gb) = (angle.cos(), angle.sin());
    let mut acc: Vec<[f64; 3]> = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64 / w, (i / width) as f64 / h);
            let t = (0.5 + 0.5 * (ga * (x - 0.5) + gb * (y - 0.5)) * 1.4).clamp(0.0, 1.0);
            [0, 1, 2].map(|c| c0[c] * (1.0 - t) + c1[c] * t)
        })
        .collect();
    let shapes = 3 + rng.index(5);
    for _ in 0..shapes {
        let col = color(rng);
        let alpha = rng.uniform_range(0.6, 1.0);
        let (cx, cy) = (rng.uniform_range(0.0, w), rng.uniform_range(0.0, h));
        let kind = rng.index(3);
        let r = rng.uniform_range(0.08, 0.3) * w.min(h);
        let (rw, rh) = (r, rng.uniform_range(0.5, 1.5) * r);
        let rot = rng.uniform_range(0.0, std::f64::consts::PI);
        let (rs, rc) = rot.sin_cos();
        let period = rng.uniform_range(3.0, 9.0);
        for (i, px) in acc.iter_mut().enumerate() {
            let (x, y) = ((i % width) as f64 + 0.5 - cx, (i / width) as f64 + 0.5 - cy);
            let (u, v) = (rc * x + rs * y, -rs * x + rc * y);
            let cover = match kind {
                0 => smoothstep(1.0, (u * u + v * v).sqrt() - r),
                1 => smoothstep(1.0, (u.abs() - rw).max(v.abs() - rh)),
                _ => {
                    // Striped disc.
                    let inside = smoothstep(1.0, (u * u + v * v).sqrt() - r);
                    let stripe = if (u / period).rem_euclid(2.0) < 1.0 { 1.0 } else { 0.0 };
                    inside * stripe
                }
            };
            let a = alpha * cover;
            for c in 0..3 {
                px[c] = px[c] * (1.0 - a) + col[c] * a;
            }
        }
    }
    // Fine texture so clean images carry some high-frequency energy.
    let amp = rng.uniform_range(0.0, 0.06);
    let (fx, fy) = (rng.uniform_range(0.5, 1.5), rng.uniform_range(0.5, 1.5));
    let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
    Image::from_fn(width, height, 3, |c, y, x| {
        let tex = amp * ((fx * x as f64 + phase).sin() * (fy * y as f64).cos());
        (acc[y * width + x][c] + tex).clamp(0.0, 1.0) as f32
    })
}

/// `count` images, image `i` drawn from its own stream of `seed`.
pub fn procedural_set(count: usize, width: usize, height: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| procedural_image(width, height, &mut Rng::derive(seed, &[0x9e0c, i as u64])))
        .collect()
}
