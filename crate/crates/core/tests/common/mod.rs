//! Brute-force oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use holocap_core::chunk::ChunkFacets;
use holocap_core::dataset::{Split, VideoAsset};
use holocap_core::gateway::{EmotionLabel, VisualAnnotation};
use holocap_core::media::{write_frame_directory, write_wav, FrameSample, FrameSidecar};
use holocap_core::retrieval::{BenchmarkGrid, CellCoords, MetricsCell, SimilarityMatrix};
use holocap_core::style::ColorTable;
use holocap_core::tone::TIE_BREAK_PRIORITY;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- retrieval ----

/// Recall by fully sorting each row (stable, descending) and locating the
/// diagonal entry.
pub fn oracle_recall(rows: &[Vec<f64>], k: usize) -> f64 {
    let n = rows.len();
    let hits = rows
        .iter()
        .enumerate()
        .filter(|(i, row)| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
            order.iter().position(|&j| j == *i).unwrap() < k
        })
        .count();
    hits as f64 / n as f64
}

/// Random scores; with `coarse` they come from a 9-value grid so ties are common.
pub fn random_rows(rng: &mut impl Rng, n: usize, coarse: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if coarse {
                        rng.random_range(0..9) as f64 / 8.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// N = 1000 matrix whose recall at 1/5/10 equals the given percentages,
/// with ranks spread inside each band and shuffled across queries.
pub fn controlled_matrix(percent: [f64; 3], seed: u64) -> SimilarityMatrix<f32> {
    let n = 1000usize;
    let c: Vec<usize> = percent.iter().map(|p| (p * 10.0).round() as usize).collect();
    let mut ranks = Vec::with_capacity(n);
    for q in 0..n {
        ranks.push(if q < c[0] {
            1
        } else if q < c[1] {
            2 + q % 4
        } else if q < c[2] {
            6 + q % 5
        } else {
            11 + q % 50
        });
    }
    ranks.shuffle(&mut rng(seed));
    let scores = (0..n)
        .flat_map(|i| {
            let rank = ranks[i];
            (0..n).map(move |j| {
                let ahead = (j + n - i - 1) % n < rank - 1;
                if j == i {
                    0.5
                } else if ahead {
                    0.9
                } else {
                    ((i * 31 + j * 17) % 97) as f32 / 1000.0
                }
            })
        })
        .collect();
    SimilarityMatrix::from_row_major(
        n,
        scores,
        (0..n).map(|i| format!("sentence{i}")).collect(),
        (0..n).map(|i| format!("video{}", 9000 + i)).collect(),
    )
    .unwrap()
}

/// Reference benchmark values per model in cell order [1]..[4], each r@1/5/10 in percent.
pub const TABLES: [(&str, [[f64; 3]; 4]); 3] = [
    ("MMT", [[24.5, 54.0, 67.7], [10.0, 26.3, 39.7], [24.1, 53.2, 63.5], [35.2, 60.4, 72.0]]),
    ("HCQ", [[25.9, 54.8, 69.0], [13.1, 27.4, 40.1], [26.1, 53.7, 68.9], [36.9, 60.8, 77.2]]),
    ("T2VLAD", [[29.5, 59.0, 70.0], [13.4, 29.5, 40.3], [28.8, 59.2, 70.4], [37.4, 61.3, 77.6]]),
];

pub fn grid_from_percent(name: &str, values: &[[f64; 3]; 4]) -> BenchmarkGrid {
    let cells = CellCoords::ALL
        .iter()
        .zip(values)
        .map(|(&c, v)| MetricsCell::from_percent(c, v[0], v[1], v[2]))
        .collect();
    BenchmarkGrid::from_cells(name, cells).unwrap()
}

// ---- colors ----

pub fn oracle_color(rgb: [u8; 3], table: &ColorTable) -> String {
    let mut best: Option<(u32, &str)> = None;
    for e in table.entries() {
        let d: u32 = (0..3).map(|c| (rgb[c] as i32 - e.rgb[c] as i32).pow(2) as u32).sum();
        let better = match best {
            None => true,
            Some((bd, bn)) => d < bd || (d == bd && e.name.as_str() < bn),
        };
        if better {
            best = Some((d, &e.name));
        }
    }
    best.unwrap().1.to_owned()
}

// ---- k-means ----

fn luma(c: &[f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Textbook Lloyd iterations from the given seeds.
pub fn naive_lloyd(points: &[[f64; 3]], seeds: &[[f64; 3]], max_iter: usize, tol: f64) -> Vec<[f64; 3]> {
    let mut cents = seeds.to_vec();
    for _ in 0..max_iter {
        let mut sums = vec![[0.0; 3]; cents.len()];
        let mut counts = vec![0usize; cents.len()];
        for p in points {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in cents.iter().enumerate() {
                let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            for c in 0..3 {
                sums[best][c] += p[c];
            }
            counts[best] += 1;
        }
        let mut shift: f64 = 0.0;
        for j in 0..cents.len() {
            if counts[j] > 0 {
                let m = [0, 1, 2].map(|c| sums[j][c] / counts[j] as f64);
                let d = ((m[0] - cents[j][0]).powi(2) + (m[1] - cents[j][1]).powi(2) + (m[2] - cents[j][2]).powi(2)).sqrt();
                shift = shift.max(d);
                cents[j] = m;
            }
        }
        if shift < tol {
            break;
        }
    }
    cents.sort_by(|a, b| luma(b).partial_cmp(&luma(a)).unwrap());
    cents
}

/// Frame whose left `share` of columns is `a` and the rest `b`.
pub fn two_color_frame(a: [u8; 3], b: [u8; 3], w: u32, h: u32, share: f64) -> FrameSample {
    let split = (w as f64 * share).round() as u32;
    let mut pixels = Vec::with_capacity((w * h * 3) as usize);
    for _ in 0..h {
        for x in 0..w {
            pixels.extend_from_slice(if x < split { &a } else { &b });
        }
    }
    FrameSample::new("synthetic", 0, 0.0, w, h, pixels)
}

// ---- tone ----

pub fn oracle_tone(labels: &[EmotionLabel]) -> EmotionLabel {
    let count = |e: EmotionLabel| labels.iter().filter(|&&l| l == e).count();
    let best = TIE_BREAK_PRIORITY.iter().map(|&e| count(e)).max().unwrap_or(0);
    if best == 0 {
        return EmotionLabel::Neutral;
    }
    *TIE_BREAK_PRIORITY.iter().find(|&&e| count(e) == best).unwrap()
}

/// Every multiset of exactly `size` labels drawn from `alphabet`.
pub fn multisets<T: Copy>(alphabet: &[T], size: usize) -> Vec<Vec<T>> {
    fn go<T: Copy>(alphabet: &[T], start: usize, left: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..alphabet.len() {
            cur.push(alphabet[i]);
            go(alphabet, i, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(alphabet, 0, size, &mut Vec::new(), &mut out);
    out
}

// ---- chunks ----

const PIECES: &[&str] = &[
    "a", "woman", "in", "pink", "\"quoted\"", "back\\slash", "]", "[", ",", ", frame3: ", ", frame12:", "frame07:",
    "(", ")", ")\"]", "\u{e9}t\u{e9}", "\u{65e5}\u{672c}", ":", "...", "\\", "\"", "  ", "frame01: x",
];

fn text(rng: &mut impl Rng, min_pieces: usize) -> String {
    let n = rng.random_range(min_pieces..=8);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 && rng.random_bool(0.6) {
            s.push(' ');
        }
        s.push_str(PIECES[rng.random_range(0..PIECES.len())]);
    }
    s
}

pub fn random_facets(rng: &mut impl Rng, table: &ColorTable) -> ChunkFacets {
    let n = if rng.random_bool(0.05) { rng.random_range(95..=105) } else { rng.random_range(1..=15) };
    let captions: Vec<String> = (0..n).map(|_| text(rng, 1)).collect();
    let dialogue = if rng.random_bool(0.2) { String::new() } else { text(rng, 0) };
    let mut names: Vec<String> = table.entries().iter().map(|e| e.name.clone()).collect();
    names.shuffle(rng);
    names.truncate(rng.random_range(1..=2));
    ChunkFacets {
        visual: VisualAnnotation::from_captions(captions).unwrap(),
        dialogue,
        tone: EmotionLabel::EMOTIONS[rng.random_range(0..8)],
        style: names,
    }
}

// ---- media ----

/// Frame-directory clip with a drifting two-colour pattern and optional audio.
pub fn synthetic_video(root: &Path, id: &str, seed: u8, duration_s: f64, has_audio: bool) -> VideoAsset {
    let rate = 4.0;
    let (w, h) = (32u32, 24u32);
    let n = (duration_s * rate) as u32;
    let frames: Vec<FrameSample> = (0..n)
        .map(|i| {
            let a = [seed.wrapping_mul(37), 200u8.wrapping_sub(seed), (i * 9) as u8];
            let b = [(i * 5) as u8, seed.wrapping_mul(11), 40];
            let mut f = two_color_frame(a, b, w, h, 0.3 + 0.02 * (i % 10) as f64);
            f.video_id = id.to_owned();
            f.index = i;
            f
        })
        .collect();
    let dir = root.join(id);
    let sidecar = FrameSidecar {
        duration_s,
        rate_fps: rate,
        width: w,
        height: h,
    };
    write_frame_directory(&dir, &sidecar, &frames).unwrap();
    if has_audio {
        let samples: Vec<i16> = (0..(16_000.0 * duration_s) as usize)
            .map(|i| ((i as f64 * 0.05 * (seed as f64 + 1.0)).sin() * 8000.0) as i16)
            .collect();
        write_wav(&dir.join("audio.wav"), &samples, 16_000).unwrap();
    }
    VideoAsset {
        video_id: id.to_owned(),
        media_path: dir,
        duration_s,
        has_audio,
        category_id: (seed % 20) as i64,
        split: Split::Test,
        original_captions: vec![format!("clip {id}")],
    }
}
