//! Procedural training clips: smooth random textures, either static or
//! moving under a global sub-pixel translation.

use rand::Rng;

use crate::error::Result;
use crate::rng::stream;
use crate::video::Video;

/// A continuous random texture: a few oriented sinusoids plus soft-edged
/// disks, mapped into roughly [30, 225].
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<(f64, f64, f64, [f64; 3])>,
    disks: Vec<(f64, f64, f64, f64, [f64; 3])>,
    base: [f64; 3],
}

impl Texture {
    pub fn random(seed: u64) -> Self {
        let mut rng = stream(seed, 0);
        let color = |rng: &mut rand_chacha::ChaCha8Rng, scale: f64| -> [f64; 3] {
            let g = rng.gen_range(-1.0..1.0);
            [0, 1, 2].map(|_| scale * (g + 0.3 * rng.gen_range(-1.0..1.0)))
        };
        let waves = (0..4)
            .map(|_| {
                let period = rng.gen_range(10.0..40.0);
                let angle = rng.gen_range(0.0..std::f64::consts::PI);
                let k = std::f64::consts::TAU / period;
                (k * angle.cos(), k * angle.sin(), rng.gen_range(0.0..std::f64::consts::TAU), color(&mut rng, 18.0))
            })
            .collect();
        let disks = (0..6)
            .map(|_| {
                (
                    rng.gen_range(0.0..128.0),
                    rng.gen_range(0.0..128.0),
                    rng.gen_range(6.0..20.0),
                    rng.gen_range(1.0..3.0),
                    color(&mut rng, 40.0),
                )
            })
            .collect();
        let base = color(&mut rng, 20.0).map(|v| 128.0 + v);
        Texture { waves, disks, base }
    }

    pub fn value(&self, x: f64, y: f64, c: usize) -> f64 {
        let mut v = self.base[c];
        for &(kx, ky, phase, amp) in &self.waves {
            v += amp[c] * (kx * x + ky * y + phase).sin();
        }
        for &(cx, cy, r, soft, amp) in &self.disks {
            // 128-periodic placement so moving clips never run out of disks
            let dx = (x - cx).rem_euclid(128.0).min((cx - x).rem_euclid(128.0));
            let dy = (y - cy).rem_euclid(128.0).min((cy - y).rem_euclid(128.0));
            let d = (dx * dx + dy * dy).sqrt();
            v += amp[c] / (1.0 + ((d - r) / soft).exp());
        }
        v.clamp(0.0, 255.0)
    }
}

/// Frames sampled from `texture` displaced by `velocity · t` pixels.
pub fn render(texture: &Texture, frames: usize, channels: usize, rows: usize, cols: usize, velocity: (f64, f64)) -> Result<Video> {
    Video::from_fn(frames, channels, rows, cols, |t, c, y, x| {
        let (vx, vy) = velocity;
        texture.value(x as f64 - vx * t as f64, y as f64 - vy * t as f64, c) as f32
    })
}

pub fn static_clip(seed: u64, frames: usize, channels: usize, rows: usize, cols: usize) -> Result<Video> {
    render(&Texture::random(seed), frames, channels, rows, cols, (0.0, 0.0))
}

/// A clip translating with a random sub-pixel velocity of up to 1.5 px per
/// frame in each direction.
pub fn translating_clip(seed: u64, frames: usize, channels: usize, rows: usize, cols: usize) -> Result<Video> {
    let mut rng = stream(seed, 1);
    let v = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    render(&Texture::random(seed), frames, channels, rows, cols, v)
}

/// `count` clips alternating static and translating, starting with static.
pub fn corpus(seed: u64, count: usize, frames: usize, channels: usize, rows: usize, cols: usize) -> Result<Vec<Video>> {
    (0..count)
        .map(|i| {
            let s = crate::rng::derive_seed(seed, &[i as u64]);
            if i % 2 == 0 {
                static_clip(s, frames, channels, rows, cols)
            } else {
                translating_clip(s, frames, channels, rows, cols)
            }
        })
        .collect()
}
