//! Synthetic data: a feature-space multiview surrogate and a tiny image
//! dataset writer for end-to-end runs.
//!
//! Surrogate model for subject `s` seen at pose angle `φ`:
//!
//! ```text
//! x = μ_s + A·[φ, φ², sin πφ] + φ·B_s + φ²·C_s + g·ε
//! ```
//!
//! Frontal poses sit near 0, left near -1 and right near +1; profile views
//! carry extra noise (`g > 1`) standing in for self-occlusion. `A` is shared,
//! `B_s` and `C_s` are subject specific, so each identity traces its own
//! curved pose manifold.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::Result;
use crate::eval::Protocol;
use crate::pipeline::dataset::{train_count, View};
use crate::preprocess::{save_image, Image};

pub type Labeled = Vec<(String, Vec<f64>)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub subjects: usize,
    pub dim: usize,
    pub per_view: usize,
    pub identity_scale: f64,
    pub pose_scale: f64,
    /// Scale of the subject-specific pose terms.
    pub interaction_scale: f64,
    pub noise: f64,
    /// Half-width of the uniform pose jitter around the frontal centre.
    pub frontal_jitter: f64,
    /// Same for the left and right views.
    pub profile_jitter: f64,
    /// Noise multiplier for the left and right views (self-occlusion).
    pub profile_noise: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            subjects: 20,
            dim: 30,
            per_view: 6,
            identity_scale: 1.0,
            pose_scale: 3.0,
            interaction_scale: 0.5,
            noise: 1.2,
            frontal_jitter: 0.2,
            profile_jitter: 0.5,
            profile_noise: 2.0,
        }
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn pose_centre(view: View) -> f64 {
    match view {
        View::F => 0.0,
        View::L => -1.0,
        View::R => 1.0,
    }
}

/// Train/test features for `protocol`. Every subject/view stratum draws
/// `per_view` samples and the first `ceil(per_view / 2)` go to training.
pub fn surrogate(params: &SurrogateParams, protocol: Protocol, seed: u64) -> (Labeled, Labeled) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = params.dim;
    let shared: Vec<Vec<f64>> = (0..3).map(|_| gaussian_vec(&mut rng, d, params.pose_scale)).collect();
    let per_subject: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..params.subjects)
        .map(|_| {
            (
                gaussian_vec(&mut rng, d, params.identity_scale),
                gaussian_vec(&mut rng, d, params.interaction_scale),
                gaussian_vec(&mut rng, d, params.interaction_scale),
            )
        })
        .collect();
    let noise = Normal::new(0.0, params.noise).expect("finite noise scale");
    let n_train = train_count(params.per_view, 0.5);

    // Draw all three views regardless of protocol so the frontal samples are
    // identical under both protocols for the same seed.
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, (mu, b, c)) in per_subject.iter().enumerate() {
        let id = format!("s{s:02}");
        for view in [View::F, View::L, View::R] {
            for i in 0..params.per_view {
                let (jitter, noise_gain) = if view == View::F {
                    (params.frontal_jitter, 1.0)
                } else {
                    (params.profile_jitter, params.profile_noise)
                };
                let phi = pose_centre(view) + rng.random_range(-jitter..=jitter);
                let basis = [phi, phi * phi, (std::f64::consts::PI * phi).sin()];
                let x: Vec<f64> = (0..d)
                    .map(|j| {
                        mu[j]
                            + basis.iter().zip(&shared).map(|(u, a)| u * a[j]).sum::<f64>()
                            + phi * b[j]
                            + phi * phi * c[j]
                            + noise_gain * noise.sample(&mut rng)
                    })
                    .collect();
                if !View::for_protocol(protocol).contains(&view) {
                    continue;
                }
                if i < n_train {
                    train.push((id.clone(), x));
                } else {
                    test.push((id.clone(), x));
                }
            }
        }
    }
    (train, test)
}

/// Layout of a generated image dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSetParams {
    pub subjects: usize,
    pub per_view: usize,
    pub width: usize,
    pub height: usize,
    pub noise: f64,
}

impl Default for FaceSetParams {
    fn default() -> Self {
        Self {
            subjects: 4,
            per_view: 6,
            width: 48,
            height: 52,
            noise: 6.0,
        }
    }
}

/// Write blob-pattern "faces" under `root` with `views.csv` and `eyes.csv`.
///
/// Each subject gets its own set of Gaussian blobs; views shift the pattern
/// sideways and every image adds pixel noise. Eye positions are jittered per
/// image and recorded in `eyes.csv`.
pub fn write_face_dataset(root: &Path, params: &FaceSetParams, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width as f64, params.height as f64);
    let noise = Normal::new(0.0, params.noise).expect("finite noise scale");
    let mut views = String::from("subject_id,image_id,view\n");
    let mut eyes = String::from("subject_id,image_id,lx,ly,rx,ry\n");
    for s in 0..params.subjects {
        let subject = format!("s{s:02}");
        let dir = root.join(&subject);
        fs::create_dir_all(&dir)?;
        let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    rng.random_range(0.2..0.8) * w,
                    rng.random_range(0.3..0.9) * h,
                    rng.random_range(2.0..6.0),
                    rng.random_range(-90.0..90.0),
                )
            })
            .collect();
        for view in [View::F, View::L, View::R] {
            for i in 0..params.per_view {
                let image_id = format!("{}{i:02}", view.as_str().to_ascii_lowercase());
                let shift = pose_centre(view) * 0.08 * w + rng.random_range(-1.0..1.0);
                let (ex, ey) = (0.5 * w + shift, 0.35 * h + rng.random_range(-1.0..1.0));
                let half = 0.18 * w;
                let mut data = vec![0.0; params.width * params.height];
                for (y, row) in data.chunks_mut(params.width).enumerate() {
                    for (x, px) in row.iter_mut().enumerate() {
                        let (xf, yf) = (x as f64, y as f64);
                        let mut v = 120.0;
                        for &(bx, by, r, a) in &blobs {
                            let dx = xf - (bx + shift);
                            let dy = yf - by;
                            v += a * (-(dx * dx + dy * dy) / (2.0 * r * r)).exp();
                        }
                        for cx in [ex - half, ex + half] {
                            let dx = xf - cx;
                            let dy = yf - ey;
                            v -= 80.0 * (-(dx * dx + dy * dy) / 4.0).exp();
                        }
                        *px = (v + noise.sample(&mut rng)).clamp(0.0, 255.0);
                    }
                }
                let img = Image::new(params.width, params.height, data)?;
                save_image(&img, &dir.join(format!("{image_id}.pgm")))?;
                views.push_str(&format!("{subject},{image_id},{view}\n"));
                eyes.push_str(&format!(
                    "{subject},{image_id},{:.3},{ey:.3},{:.3},{ey:.3}\n",
                    ex - half,
                    ex + half
                ));
            }
        }
    }
    fs::write(root.join("views.csv"), views)?;
    fs::write(root.join("eyes.csv"), eyes)?;
    Ok(())
}
