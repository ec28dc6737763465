//! Frame sampling and audio extraction.
//!
//! Two ingestion modes, chosen per asset by what `media_path` points at:
//!
//! * **directory mode**: a directory holding `frames.json` (sidecar with
//!   `duration_s`, `rate_fps`, `width`, `height`), frames named
//!   `frame_00000.png`, `frame_00001.png`, ... extracted at `rate_fps`
//!   starting from t = 0, and an optional mono or stereo `audio.wav`;
//! * **decoder mode**: any other path is handed to an external decoder
//!   command (ffmpeg by default) that writes the same frame layout into a
//!   scratch directory.
//!
//! Frame `k` of a sampling at `rate` sits at exactly `t = k / rate`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::VideoAsset;

pub const SIDECAR_FILE: &str = "frames.json";
pub const AUDIO_FILE: &str = "audio.wav";

/// Tolerance used when converting times to frame indices.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("{video_id}: decoder failed: {message}")]
    Decoder { video_id: String, message: String },
    #[error("{video_id}: no frames decodable")]
    ZeroFrames { video_id: String },
    #[error("{video_id}: frame directory does not match naming contract: {message}")]
    NamingMismatch { video_id: String, message: String },
    #[error("{video_id}: requested {requested} fps exceeds source rate {source_rate} fps")]
    RateExceedsSource {
        video_id: String,
        requested: f64,
        source_rate: f64,
    },
    #[error("{video_id}: invalid sampling rate {rate}")]
    InvalidRate { video_id: String, rate: f64 },
    #[error("{video_id}: audio stream is corrupt: {message}")]
    AudioDecode { video_id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One sampled video frame as packed RGB8.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub video_id: String,
    pub index: u32,
    pub timestamp_s: f64,
    pub pixels: Vec<u8>,
    pub width: u32,
    pub height: u32,
}

impl FrameSample {
    pub fn new(
        video_id: impl Into<String>,
        index: u32,
        timestamp_s: f64,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        assert_eq!(
            pixels.len(),
            width as usize * height as usize * 3,
            "pixel buffer length must be width * height * 3"
        );
        Self {
            video_id: video_id.into(),
            index,
            timestamp_s,
            pixels,
            width,
            height,
        }
    }

    /// Single-colour frame, mostly for tests and fixtures.
    pub fn solid(video_id: &str, index: u32, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(video_id, index, 0.0, width, height, pixels)
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len() / 3
    }

    pub fn rgb_pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Bytes the mock backends hash: dimensions plus raw pixels.
    pub fn content_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.pixels.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(&mut out);
        image::ImageEncoder::write_image(
            encoder,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )
        .expect("in-memory PNG encoding of a valid RGB8 buffer");
        out
    }
}

/// Mono 16-bit PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub video_id: String,
    pub samples: Vec<i16>,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
}

impl AudioTrack {
    pub fn new(video_id: impl Into<String>, samples: Vec<i16>, sample_rate_hz: u32) -> Self {
        let duration_s = samples.len() as f64 / sample_rate_hz as f64;
        Self {
            video_id: video_id.into(),
            samples,
            sample_rate_hz,
            duration_s,
        }
    }

    pub fn pcm16_le_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }
}

/// Sidecar describing a pre-extracted frame directory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub duration_s: f64,
    pub rate_fps: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MediaConfig {
    /// Placeholders: `{input}`, `{rate}`, `{outdir}`.
    pub decoder_command: String,
    /// Placeholders: `{input}`, `{output}`, `{sample_rate}`.
    pub audio_command: String,
    pub audio_sample_rate_hz: u32,
}

impl Default for MediaConfig {
    fn default() -> Self {
        Self {
            decoder_command: "ffmpeg -nostdin -loglevel error -i {input} -vf fps={rate} \
                              -start_number 0 {outdir}/frame_%05d.png"
                .to_owned(),
            audio_command: "ffmpeg -nostdin -loglevel error -y -i {input} -vn -ac 1 \
                            -ar {sample_rate} -c:a pcm_s16le {output}"
                .to_owned(),
            audio_sample_rate_hz: 16_000,
        }
    }
}

pub fn frame_file_name(index: u32) -> String {
    format!("frame_{index:05}.png")
}

/// Number of frames a sampling at `rate_fps` yields for `duration_s`.
pub fn frame_count(duration_s: f64, rate_fps: f64) -> u32 {
    (duration_s * rate_fps + TIME_EPS).floor().max(0.0) as u32
}

#[derive(Debug, Clone, Default)]
pub struct MediaIngest {
    config: MediaConfig,
}

impl MediaIngest {
    pub fn new(config: MediaConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &MediaConfig {
        &self.config
    }

    pub fn sample_frames(
        &self,
        asset: &VideoAsset,
        rate_fps: f64,
    ) -> Result<Vec<FrameSample>, MediaError> {
        if !(rate_fps.is_finite() && rate_fps > 0.0) {
            return Err(MediaError::InvalidRate {
                video_id: asset.video_id.clone(),
                rate: rate_fps,
            });
        }
        let n = frame_count(asset.duration_s, rate_fps);
        if n == 0 {
            return Err(MediaError::ZeroFrames {
                video_id: asset.video_id.clone(),
            });
        }
        if asset.media_path.is_dir() {
            sample_from_directory(asset, &asset.media_path, rate_fps, n)
        } else {
            self.sample_with_decoder(asset, rate_fps, n)
        }
    }

    fn sample_with_decoder(
        &self,
        asset: &VideoAsset,
        rate_fps: f64,
        n: u32,
    ) -> Result<Vec<FrameSample>, MediaError> {
        let video_id = &asset.video_id;
        if !asset.media_path.exists() {
            return Err(MediaError::Decoder {
                video_id: video_id.clone(),
                message: format!("{} does not exist", asset.media_path.display()),
            });
        }
        let scratch = tempfile::tempdir().map_err(|source| MediaError::Io {
            path: std::env::temp_dir(),
            source,
        })?;
        let input = asset.media_path.to_string_lossy();
        let outdir = scratch.path().to_string_lossy();
        let rate = format_rate(rate_fps);
        run_template(
            video_id,
            &self.config.decoder_command,
            &[("{input}", &input), ("{rate}", &rate), ("{outdir}", &outdir)],
        )?;
        if !scratch.path().join(frame_file_name(0)).exists() {
            return Err(MediaError::ZeroFrames {
                video_id: video_id.clone(),
            });
        }
        (0..n)
            .map(|k| {
                let path = scratch.path().join(frame_file_name(k));
                if !path.exists() {
                    return Err(MediaError::NamingMismatch {
                        video_id: video_id.clone(),
                        message: format!("decoder produced fewer than {n} frames ({k} found)"),
                    });
                }
                read_frame(video_id, &path, k, k as f64 / rate_fps, None)
            })
            .collect()
    }

    /// Extract mono PCM at the configured rate. `Ok(None)` means the video
    /// has no audio; a stream that exists but cannot be decoded is an error.
    pub fn extract_audio(&self, asset: &VideoAsset) -> Result<Option<AudioTrack>, MediaError> {
        if !asset.has_audio {
            return Ok(None);
        }
        let target = self.config.audio_sample_rate_hz;
        if asset.media_path.is_dir() {
            let path = asset.media_path.join(AUDIO_FILE);
            if !path.exists() {
                log::warn!(
                    "{}: manifest says has_audio but {} is missing; treating as absent",
                    asset.video_id,
                    path.display()
                );
                return Ok(None);
            }
            return read_wav(&asset.video_id, &path, target).map(Some);
        }

        let scratch = tempfile::tempdir().map_err(|source| MediaError::Io {
            path: std::env::temp_dir(),
            source,
        })?;
        let output = scratch.path().join(AUDIO_FILE);
        let input = asset.media_path.to_string_lossy();
        let output_str = output.to_string_lossy();
        let rate = target.to_string();
        run_template(
            &asset.video_id,
            &self.config.audio_command,
            &[
                ("{input}", &input),
                ("{output}", &output_str),
                ("{sample_rate}", &rate),
            ],
        )
        .map_err(|e| match e {
            MediaError::Decoder { video_id, message } => MediaError::AudioDecode { video_id, message },
            other => other,
        })?;
        if !output.exists() {
            return Ok(None);
        }
        let track = read_wav(&asset.video_id, &output, target)?;
        Ok((!track.samples.is_empty()).then_some(track))
    }

    /// Whether the media actually carries audio, when that can be told
    /// without decoding. Directory mode only.
    pub fn probe_has_audio(&self, asset: &VideoAsset) -> Option<bool> {
        asset
            .media_path
            .is_dir()
            .then(|| asset.media_path.join(AUDIO_FILE).exists())
    }
}

fn format_rate(rate: f64) -> String {
    if rate.fract() == 0.0 {
        format!("{}", rate as u64)
    } else {
        format!("{rate}")
    }
}

fn run_template(
    video_id: &str,
    template: &str,
    substitutions: &[(&str, &str)],
) -> Result<(), MediaError> {
    let decoder_err = |message: String| MediaError::Decoder {
        video_id: video_id.to_owned(),
        message,
    };
    let tokens = shlex::split(template)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| decoder_err(format!("cannot parse command template {template:?}")))?;
    let args: Vec<String> = tokens
        .into_iter()
        .map(|mut tok| {
            for (key, value) in substitutions {
                tok = tok.replace(key, value);
            }
            tok
        })
        .collect();
    let output = Command::new(&args[0])
        .args(&args[1..])
        .output()
        .map_err(|e| decoder_err(format!("cannot spawn {:?}: {e}", args[0])))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(decoder_err(format!(
            "{:?} exited with {}: {}",
            args[0],
            output.status,
            stderr.trim()
        )));
    }
    Ok(())
}

pub fn read_sidecar(dir: &Path) -> Result<FrameSidecar, MediaError> {
    let path = dir.join(SIDECAR_FILE);
    let text = fs::read_to_string(&path).map_err(|source| MediaError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| MediaError::NamingMismatch {
        video_id: dir.display().to_string(),
        message: format!("bad sidecar {}: {e}", path.display()),
    })
}

fn sample_from_directory(
    asset: &VideoAsset,
    dir: &Path,
    rate_fps: f64,
    n: u32,
) -> Result<Vec<FrameSample>, MediaError> {
    let video_id = &asset.video_id;
    let sidecar = read_sidecar(dir).map_err(|e| match e {
        MediaError::NamingMismatch { message, .. } => MediaError::NamingMismatch {
            video_id: video_id.clone(),
            message,
        },
        other => other,
    })?;
    if rate_fps > sidecar.rate_fps + TIME_EPS {
        return Err(MediaError::RateExceedsSource {
            video_id: video_id.clone(),
            requested: rate_fps,
            source_rate: sidecar.rate_fps,
        });
    }
    if (sidecar.duration_s - asset.duration_s).abs() > 1.0 / sidecar.rate_fps {
        log::warn!(
            "{video_id}: sidecar duration {} s disagrees with manifest {} s; using manifest",
            sidecar.duration_s,
            asset.duration_s
        );
    }
    (0..n)
        .map(|k| {
            let t = k as f64 / rate_fps;
            let source_index = (t * sidecar.rate_fps + TIME_EPS).floor() as u32;
            let path = dir.join(frame_file_name(source_index));
            if !path.exists() {
                return Err(MediaError::NamingMismatch {
                    video_id: video_id.clone(),
                    message: format!("missing {}", path.display()),
                });
            }
            read_frame(video_id, &path, k, t, Some((sidecar.width, sidecar.height)))
        })
        .collect()
}

fn read_frame(
    video_id: &str,
    path: &Path,
    index: u32,
    timestamp_s: f64,
    expected_dims: Option<(u32, u32)>,
) -> Result<FrameSample, MediaError> {
    let img = image::open(path)
        .map_err(|e| MediaError::Decoder {
            video_id: video_id.to_owned(),
            message: format!("{}: {e}", path.display()),
        })?
        .to_rgb8();
    let (width, height) = img.dimensions();
    if let Some((w, h)) = expected_dims {
        if (w, h) != (width, height) {
            return Err(MediaError::NamingMismatch {
                video_id: video_id.to_owned(),
                message: format!(
                    "{} is {width}x{height}, sidecar says {w}x{h}",
                    path.display()
                ),
            });
        }
    }
    if width == 0 || height == 0 {
        return Err(MediaError::ZeroFrames {
            video_id: video_id.to_owned(),
        });
    }
    Ok(FrameSample::new(
        video_id,
        index,
        timestamp_s,
        width,
        height,
        img.into_raw(),
    ))
}

fn read_wav(video_id: &str, path: &Path, target_rate: u32) -> Result<AudioTrack, MediaError> {
    let audio_err = |message: String| MediaError::AudioDecode {
        video_id: video_id.to_owned(),
        message,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| audio_err(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| audio_err(e.to_string()))?
        }
    };
    let mono: Vec<f32> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / frame.len() as f32)
        .collect();
    let resampled = resample_linear(&mono, spec.sample_rate, target_rate);
    let samples = resampled
        .into_iter()
        .map(|v| (v.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16)
        .collect();
    Ok(AudioTrack::new(video_id, samples, target_rate))
}

fn resample_linear(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let out_len = (input.len() as u64 * to as u64 / from as u64) as usize;
    let step = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(input.len() - 1);
            let frac = (pos - lo as f64) as f32;
            input[lo] * (1.0 - frac) + input[hi] * frac
        })
        .collect()
}

/// Write a frame directory in the layout directory mode expects.
pub fn write_frame_directory(
    dir: &Path,
    sidecar: &FrameSidecar,
    frames: &[FrameSample],
) -> Result<(), MediaError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MediaError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let sidecar_path = dir.join(SIDECAR_FILE);
    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(&sidecar_path, json).map_err(io_err(&sidecar_path))?;
    for (i, frame) in frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i as u32));
        fs::write(&path, frame.encode_png()).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Write 16-bit mono PCM as a WAV file.
pub fn write_wav(path: &Path, samples: &[i16], sample_rate_hz: u32) -> Result<(), MediaError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| MediaError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in samples {
        writer.write_sample(s).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}
