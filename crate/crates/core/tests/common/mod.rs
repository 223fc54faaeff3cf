use std::path::Path;

use image::{GrayImage, Luma};
use rand::Rng as _;
use synrl_core::rng::seeded;

/// Writes `per_class` noisy 28x28 glyphs for each of four stroke shapes
/// into `<root>/<class>/<n>.png`.
pub fn write_glyph_tree(root: &Path, per_class: usize, seed: u64) {
    let mut rng = seeded(seed);
    for class in 0..4 {
        let dir = root.join(format!("class_{class}"));
        std::fs::create_dir_all(&dir).unwrap();
        for n in 0..per_class {
            let (dx, dy) = (rng.random_range(-3i32..=3), rng.random_range(-3i32..=3));
            let mut img = GrayImage::from_fn(28, 28, |_, _| Luma([rng.random_range(0..40u8)]));
            for t in 6..22i32 {
                let (x, y) = match class {
                    0 => (t, 14),
                    1 => (14, t),
                    2 => (t, t),
                    _ => (t, 27 - t),
                };
                let (x, y) = ((x + dx).clamp(0, 27) as u32, (y + dy).clamp(0, 27) as u32);
                img.put_pixel(x, y, Luma([rng.random_range(200..=255u8)]));
            }
            img.save(dir.join(format!("{n:03}.png"))).unwrap();
        }
    }
}
