//! RIFF/WAVE reading and writing: PCM-16 and IEEE-float-32, little-endian.
//!
//! Multi-channel files are collapsed to mono by arithmetic mean on read.
//! Chunks other than `fmt ` and `data` are skipped.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Header-level description of a WAV file, without decoding the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub encoding: WavEncoding,
    /// Frames = samples per channel.
    pub frames: u64,
}

struct Parsed {
    info: WavInfo,
    data_offset: usize,
    data_len: usize,
}

fn u16_at(b: &[u8], off: usize) -> Result<u16> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Format("truncated header".into()))
}

fn u32_at(b: &[u8], off: usize) -> Result<u32> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Format("truncated header".into()))
}

fn parse(bytes: &[u8]) -> Result<Parsed> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<(usize, usize)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4)? as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(Error::Format(format!(
                "chunk {:?} overruns file",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                fmt = Some((
                    u16_at(bytes, body)?,
                    u16_at(bytes, body + 2)?,
                    u32_at(bytes, body + 4)?,
                    u16_at(bytes, body + 14)?,
                ));
            }
            b"data" => {
                data = Some((body, size));
            }
            _ => {} // skip extraneous chunks (LIST, fact, ...)
        }
        // RIFF chunks are word-aligned.
        pos = body + size + (size & 1);
    }
    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let (data_offset, data_len) = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    if rate == 0 {
        return Err(Error::Format("zero sample rate".into()));
    }
    let encoding = match (format, bits) {
        (1, 16) => WavEncoding::Pcm16,
        (3, 32) => WavEncoding::Float32,
        _ => {
            return Err(Error::UnsupportedCodec(format!(
                "format tag {format} with {bits} bits"
            )))
        }
    };
    let bytes_per_frame = channels as usize
        * match encoding {
            WavEncoding::Pcm16 => 2,
            WavEncoding::Float32 => 4,
        };
    Ok(Parsed {
        info: WavInfo {
            sample_rate: rate,
            channels,
            encoding,
            frames: (data_len / bytes_per_frame) as u64,
        },
        data_offset,
        data_len,
    })
}

/// Read header information only.
pub fn wav_info(path: &Path) -> Result<WavInfo> {
    let bytes = fs::read(path)?;
    Ok(parse(&bytes)?.info)
}

/// Read a WAV file as a mono clip. Multi-channel content is averaged;
/// PCM-16 samples are normalized by 1/32768.
pub fn read_wav<T: Scalar>(path: &Path) -> Result<AudioClip<T>> {
    let bytes = fs::read(path)?;
    let parsed = parse(&bytes)?;
    let ch = parsed.info.channels as usize;
    let body = &bytes[parsed.data_offset..parsed.data_offset + parsed.data_len];

    let frames = parsed.info.frames as usize;
    let mut samples = Vec::with_capacity(frames);
    match parsed.info.encoding {
        WavEncoding::Pcm16 => {
            for f in 0..frames {
                let mut acc = 0.0f64;
                for c in 0..ch {
                    let off = (f * ch + c) * 2;
                    let v = i16::from_le_bytes(body[off..off + 2].try_into().unwrap());
                    acc += v as f64 / 32768.0;
                }
                samples.push(T::of(acc / ch as f64));
            }
        }
        WavEncoding::Float32 => {
            for f in 0..frames {
                let mut acc = 0.0f64;
                for c in 0..ch {
                    let off = (f * ch + c) * 4;
                    let v = f32::from_le_bytes(body[off..off + 4].try_into().unwrap());
                    if !v.is_finite() {
                        return Err(Error::Validation(format!(
                            "non-finite sample in frame {f}"
                        )));
                    }
                    acc += v as f64;
                }
                samples.push(T::of(acc / ch as f64));
            }
        }
    }
    AudioClip::new(samples, parsed.info.sample_rate)
}

/// Write a mono clip. `Float32` round trips bit-exactly through [`read_wav`]
/// for f32-representable samples; `Pcm16` quantizes with rounding and clamps
/// to the PCM range.
pub fn write_wav<T: Scalar>(clip: &AudioClip<T>, path: &Path, encoding: WavEncoding) -> Result<()> {
    clip.validate_finite()?;
    let n = clip.samples.len();
    let (bytes_per_sample, format_tag, bits): (usize, u16, u16) = match encoding {
        WavEncoding::Pcm16 => (2, 1, 16),
        WavEncoding::Float32 => (4, 3, 32),
    };
    let data_len = n * bytes_per_sample;
    // Float WAVs carry a fact chunk per the format spec.
    let fact_len = if encoding == WavEncoding::Float32 {
        12
    } else {
        0
    };
    let riff_len = 4 + (8 + 16) + fact_len + (8 + data_len);

    let mut out = Vec::with_capacity(riff_len + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format_tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    let byte_rate = clip.sample_rate * bytes_per_sample as u32;
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    if encoding == WavEncoding::Float32 {
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    match encoding {
        WavEncoding::Pcm16 => {
            for s in &clip.samples {
                let q = (s.into_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        WavEncoding::Float32 => {
            for s in &clip.samples {
                out.extend_from_slice(&(s.into_f64() as f32).to_le_bytes());
            }
        }
    }

    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}
