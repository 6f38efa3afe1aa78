//! Mono RIFF/WAVE reading and writing: 16-bit PCM and 32-bit IEEE float.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Waveform;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

/// Header fields of a parsed file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub format_tag: u16,
    pub channels: u16,
    pub sample_rate: u32,
    pub bits_per_sample: u16,
    pub data_offset: usize,
    pub data_len: usize,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn u16_at(b: &[u8], off: usize) -> Result<u16> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| parse_err(off, "unexpected end of file"))
}

fn u32_at(b: &[u8], off: usize) -> Result<u32> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| parse_err(off, "unexpected end of file"))
}

/// Parses the RIFF structure and validates the format without decoding samples.
pub fn parse_header(bytes: &[u8]) -> Result<WavInfo> {
    if bytes.len() < 12 {
        return Err(parse_err(bytes.len(), "file shorter than a RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(parse_err(0, "missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(parse_err(8, "missing WAVE tag"));
    }
    let mut off = 12;
    let mut fmt: Option<(u16, u16, u32, u16, usize)> = None;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4)? as usize;
        let body = off + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(parse_err(off + 4, format!("fmt chunk of {size} bytes is too small")));
                }
                let mut tag = u16_at(bytes, body)?;
                let channels = u16_at(bytes, body + 2)?;
                let rate = u32_at(bytes, body + 4)?;
                let bits = u16_at(bytes, body + 14)?;
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(parse_err(off + 4, "extensible fmt chunk too small"));
                    }
                    tag = u16_at(bytes, body + 24)?;
                }
                fmt = Some((tag, channels, rate, bits, body));
            }
            b"data" => {
                let Some((tag, channels, rate, bits, fmt_off)) = fmt else {
                    return Err(parse_err(off, "data chunk before fmt chunk"));
                };
                if channels != 1 {
                    return Err(Error::UnsupportedAudio {
                        offset: fmt_off + 2,
                        message: format!("{channels} channels; only mono is supported"),
                    });
                }
                match (tag, bits) {
                    (FORMAT_PCM, 16) | (FORMAT_FLOAT, 32) => {}
                    _ => {
                        return Err(Error::UnsupportedAudio {
                            offset: fmt_off,
                            message: format!("format tag {tag} with {bits} bits per sample"),
                        })
                    }
                }
                if rate == 0 {
                    return Err(parse_err(fmt_off + 4, "zero sample rate"));
                }
                let available = bytes.len() - body;
                let len = size.min(available);
                let frame = (bits / 8) as usize;
                return Ok(WavInfo {
                    format_tag: tag,
                    channels,
                    sample_rate: rate,
                    bits_per_sample: bits,
                    data_offset: body,
                    data_len: len - len % frame,
                });
            }
            _ => {}
        }
        off = body + size + (size & 1);
    }
    Err(parse_err(off.min(bytes.len()), "no data chunk"))
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    let info = parse_header(bytes)?;
    let data = &bytes[info.data_offset..info.data_offset + info.data_len];
    let samples = match info.format_tag {
        FORMAT_PCM => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        _ => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    Ok(Waveform::new(samples, info.sample_rate))
}

pub fn encode_wav(w: &Waveform, depth: BitDepth) -> Vec<u8> {
    let (tag, bits) = match depth {
        BitDepth::Pcm16 => (FORMAT_PCM, 16u16),
        BitDepth::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let block = bits / 8;
    let data_len = w.len() * block as usize;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * block as u32).to_le_bytes());
    out.extend_from_slice(&block.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    match depth {
        BitDepth::Pcm16 => {
            for &x in &w.samples {
                let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        BitDepth::Float32 => {
            for &x in &w.samples {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav(w, depth)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_bit_exact() {
        let samples: Vec<f64> = (0..100).map(|i| ((i as f32) * 0.013 - 0.6) as f64).collect();
        let w = Waveform::new(samples, 8000);
        let back = decode_wav(&encode_wav(&w, BitDepth::Float32)).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let samples: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 0.99).collect();
        let w = Waveform::new(samples, 16000);
        let back = decode_wav(&encode_wav(&w, BitDepth::Pcm16)).unwrap();
        assert_eq!(back.sample_rate, 16000);
        let max_err = w.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "{max_err}");
    }

    #[test]
    fn canonical_header_fixture() {
        // 44-byte canonical header followed by two 16-bit samples
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&40u32.to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&[16, 0, 0, 0, 1, 0, 1, 0]);
        b.extend_from_slice(&[0x40, 0x1f, 0, 0, 0x80, 0x3e, 0, 0, 2, 0, 16, 0]);
        b.extend_from_slice(b"data");
        b.extend_from_slice(&[4, 0, 0, 0, 0x00, 0x40, 0x00, 0xc0]);
        let info = parse_header(&b).unwrap();
        assert_eq!(
            info,
            WavInfo {
                format_tag: 1,
                channels: 1,
                sample_rate: 8000,
                bits_per_sample: 16,
                data_offset: 44,
                data_len: 4,
            }
        );
        let w = decode_wav(&b).unwrap();
        assert_eq!(w.samples, vec![0.5, -0.5]);
    }

    #[test]
    fn stereo_and_codecs_rejected_with_offsets() {
        let w = Waveform::new(vec![0.0; 4], 8000);
        let mut b = encode_wav(&w, BitDepth::Pcm16);
        b[22] = 2;
        match decode_wav(&b) {
            Err(Error::UnsupportedAudio { offset, .. }) => assert_eq!(offset, 22),
            other => panic!("{other:?}"),
        }
        let mut b = encode_wav(&w, BitDepth::Pcm16);
        b[34] = 24;
        assert!(matches!(decode_wav(&b), Err(Error::UnsupportedAudio { offset: 20, .. })));
        assert!(matches!(decode_wav(b"RIFX0000WAVE"), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(decode_wav(b"RIFF"), Err(Error::Parse { .. })));
    }
}
