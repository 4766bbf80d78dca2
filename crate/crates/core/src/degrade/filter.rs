use super::Kernel2D;
use crate::image::Image;
use crate::tensor::kernels::reflect_index;

/// 2-D convolution of every channel with `kernel`, mirroring at the borders.
pub fn convolve2d_reflect(image: &Image, kernel: &Kernel2D) -> Image {
    let (w, h) = image.size();
    let k = kernel.size();
    let r = kernel.radius() as isize;
    let mut out = Image::new(w, h, image.channels());
    // Tap offsets are resolved once per row/column.
    let rows: Vec<Vec<usize>> = (0..h as isize)
        .map(|y| (0..k as isize).map(|i| reflect_index(y - (i - r), h)).collect())
        .collect();
    let cols: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (0..k as isize).map(|j| reflect_index(x - (j - r), w)).collect())
        .collect();
    for c in 0..image.channels() {
        let src = image.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for (i, &sy) in rows[y].iter().enumerate() {
                    let line = &src[sy * w..(sy + 1) * w];
                    let kr = &kernel.weights()[i * k..(i + 1) * k];
                    for (&kw, &sx) in kr.iter().zip(&cols[x]) {
                        acc += kw * line[sx] as f64;
                    }
                }
                dst[y * w + x] = acc as f32;
            }
        }
    }
    out
}
