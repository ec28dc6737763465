//! Lloyd's k-means over RGB pixels with k-means++ seeding.
//!
//! Generic over the float type; the style captioner runs it in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::media::FrameSample;
use crate::Scalar;

use super::StyleError;

pub type Rgb<T> = [T; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves by this much (RGB units, Euclidean).
    pub tol: f64,
    /// Frames with more pixels are subsampled by a fixed stride.
    pub max_pixels: usize,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            max_iter: 50,
            tol: 0.5,
            max_pixels: 16_384,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit<T> {
    /// Final centroids, sorted by luminance descending.
    pub centroids: Vec<Rgb<T>>,
    /// k-means++ seeds in selection order.
    pub initial: Vec<Rgb<T>>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn squared_distance<T: Scalar>(a: &Rgb<T>, b: &Rgb<T>) -> T {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Rec. 601 luma.
pub fn luminance<T: Scalar>(c: &Rgb<T>) -> T {
    T::from_f64_lossy(0.299) * c[0] + T::from_f64_lossy(0.587) * c[1] + T::from_f64_lossy(0.114) * c[2]
}

/// Every `ceil(n / max_pixels)`-th pixel, starting at the first.
pub fn subsample_pixels<T: Scalar>(frame: &FrameSample, max_pixels: usize) -> Vec<Rgb<T>> {
    let n = frame.pixel_count();
    let stride = n.div_ceil(max_pixels.max(1)).max(1);
    frame
        .rgb_pixels()
        .step_by(stride)
        .map(|[r, g, b]| [T::from_channel(r), T::from_channel(g), T::from_channel(b)])
        .collect()
}

/// k-means++ seeding. When fewer than `k` distinct points exist, the
/// remaining seeds duplicate the first one.
pub fn kmeans_pp_init<T: Scalar>(points: &[Rgb<T>], k: usize, rng: &mut impl Rng) -> Vec<Rgb<T>> {
    assert!(!points.is_empty() && k >= 1);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut min_dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]).to_f64_lossy())
        .collect();
    while centroids.len() < k {
        let total: f64 = min_dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, d) in min_dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            points[chosen]
        } else {
            centroids[0]
        };
        for (d, p) in min_dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &next).to_f64_lossy());
        }
        centroids.push(next);
    }
    centroids
}

fn nearest_index<T: Scalar>(p: &Rgb<T>, centroids: &[Rgb<T>]) -> (usize, T) {
    let mut best = (0, squared_distance(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd iterations from the given seeds. Empty clusters keep their
/// previous centroid.
pub fn lloyd<T: Scalar>(points: &[Rgb<T>], initial: &[Rgb<T>], max_iter: usize, tol: f64) -> KmeansFit<T> {
    let k = initial.len();
    let mut centroids = initial.to_vec();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut assignment = vec![0usize; points.len()];
    let tol = T::from_f64_lossy(tol);

    while iterations < max_iter {
        iterations += 1;
        let mut inertia = T::zero();
        for (a, p) in assignment.iter_mut().zip(points) {
            let (j, d) = nearest_index(p, &centroids);
            *a = j;
            inertia = inertia + d;
        }
        history.push(inertia);

        let mut sums = vec![[T::zero(); 3]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            for c in 0..3 {
                sums[a][c] = sums[a][c] + p[c];
            }
            counts[a] += 1;
        }
        let mut movement = T::zero();
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let n = T::from_usize(counts[j]).expect("count fits float");
            let updated = [sums[j][0] / n, sums[j][1] / n, sums[j][2] / n];
            movement = movement.max(squared_distance(&updated, &centroids[j]).sqrt());
            centroids[j] = updated;
        }
        if movement < tol {
            converged = true;
            break;
        }
    }

    sort_by_luminance(&mut centroids);
    KmeansFit {
        centroids,
        initial: initial.to_vec(),
        inertia_history: history,
        iterations,
        converged,
    }
}

pub fn sort_by_luminance<T: Scalar>(centroids: &mut [Rgb<T>]) {
    centroids.sort_by(|a, b| {
        luminance(b)
            .partial_cmp(&luminance(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal))
    });
}

pub fn fit_points<T: Scalar>(points: &[Rgb<T>], params: &KmeansParams) -> Result<KmeansFit<T>, StyleError> {
    if params.k == 0 {
        return Err(StyleError::InvalidK);
    }
    if points.is_empty() {
        return Err(StyleError::EmptyFrame);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let initial = kmeans_pp_init(points, params.k, &mut rng);
    Ok(lloyd(points, &initial, params.max_iter, params.tol))
}

pub fn fit_frame<T: Scalar>(frame: &FrameSample, params: &KmeansParams) -> Result<KmeansFit<T>, StyleError> {
    let points = subsample_pixels(frame, params.max_pixels);
    fit_points(&points, params)
}

/// Dominant colours of one frame, brightest first.
pub fn kmeans_colors<T: Scalar>(frame: &FrameSample, params: &KmeansParams) -> Result<Vec<Rgb<T>>, StyleError> {
    fit_frame(frame, params).map(|fit| fit.centroids)
}

/// Round and clamp a centroid to 8-bit channels.
pub fn to_rgb8<T: Scalar>(c: &Rgb<T>) -> [u8; 3] {
    c.map(|v| v.to_f64_lossy().round().clamp(0.0, 255.0) as u8)
}
