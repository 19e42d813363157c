//! Minimal RIFF/WAVE reader and writer for 16-bit PCM mono.

use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    write_atomic(path.as_ref(), &encode_wav(clip))
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn need(bytes: &[u8], at: usize, n: usize, what: &str) -> Result<()> {
    if at + n > bytes.len() {
        return Err(Error::Parse {
            offset: bytes.len(),
            detail: format!("truncated {what}: need {n} bytes at offset {at}"),
        });
    }
    Ok(())
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    need(bytes, 0, 12, "RIFF header")?;
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::Parse {
            offset: 0,
            detail: "missing RIFF tag".into(),
        });
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::Parse {
            offset: 8,
            detail: "missing WAVE tag".into(),
        });
    }

    let mut pos = 12;
    let mut sample_rate = None;
    loop {
        need(bytes, pos, 8, "chunk header")?;
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                need(bytes, body, 16, "fmt chunk")?;
                let format = le_u16(bytes, body);
                let channels = le_u16(bytes, body + 2);
                let rate = le_u32(bytes, body + 4);
                let bits = le_u16(bytes, body + 14);
                if format != 1 {
                    return Err(Error::UnsupportedFormat {
                        field: "audio_format".into(),
                        detail: format!("{format} (only PCM = 1 is supported)"),
                    });
                }
                if channels != 1 {
                    return Err(Error::UnsupportedFormat {
                        field: "channels".into(),
                        detail: format!("{channels} (only mono is supported)"),
                    });
                }
                if bits != 16 {
                    return Err(Error::UnsupportedFormat {
                        field: "bits_per_sample".into(),
                        detail: format!("{bits} (only 16-bit is supported)"),
                    });
                }
                if rate == 0 {
                    return Err(Error::UnsupportedFormat {
                        field: "sample_rate".into(),
                        detail: "0".into(),
                    });
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let rate = sample_rate.ok_or_else(|| Error::Parse {
                    offset: pos,
                    detail: "data chunk before fmt chunk".into(),
                })?;
                need(bytes, body, size, "data chunk")?;
                if !size.is_multiple_of(2) {
                    return Err(Error::Parse {
                        offset: body + size,
                        detail: format!("odd data size {size} for 16-bit samples"),
                    });
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return AudioClip::new(samples, rate);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
}

pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples().len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pcm_payload(bytes: &[u8]) -> &[u8] {
        &bytes[44..]
    }

    #[test]
    fn one_second_and_endpoint() {
        let mut samples = vec![0.0; 16_000];
        samples[0] = -1.0;
        let clip = AudioClip::new(samples, 16_000).unwrap();
        let bytes = encode_wav(&clip);
        assert_eq!(&bytes[44..46], &(-32768i16).to_le_bytes());
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.samples().len(), 16_000);
        assert_eq!(back.samples()[0], -1.0);
        assert_eq!(back.sample_rate(), 16_000);
    }

    #[test]
    fn random_pcm_roundtrips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut bytes = encode_wav(&AudioClip::new(vec![0.0; 4096], 16_000).unwrap());
        for b in bytes[44..].iter_mut() {
            *b = rng.random();
        }
        let clip = decode_wav(&bytes).unwrap();
        let again = encode_wav(&clip);
        assert_eq!(pcm_payload(&again), pcm_payload(&bytes));
    }

    #[test]
    fn stereo_and_float_are_rejected_by_field() {
        let mut bytes = encode_wav(&AudioClip::new(vec![0.0; 4], 16_000).unwrap());
        bytes[22] = 2;
        match decode_wav(&bytes) {
            Err(Error::UnsupportedFormat { field, .. }) => assert_eq!(field, "channels"),
            other => panic!("{other:?}"),
        }
        bytes[22] = 1;
        bytes[20] = 3;
        match decode_wav(&bytes) {
            Err(Error::UnsupportedFormat { field, .. }) => assert_eq!(field, "audio_format"),
            other => panic!("{other:?}"),
        }
        bytes[20] = 1;
        bytes[34] = 8;
        match decode_wav(&bytes) {
            Err(Error::UnsupportedFormat { field, .. }) => assert_eq!(field, "bits_per_sample"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_wav(&AudioClip::new(vec![0.5; 100], 16_000).unwrap());
        match decode_wav(&bytes[..150]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 150),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_wav(&bytes[..10]), Err(Error::Parse { .. })));
    }

    #[test]
    fn skips_unknown_chunks() {
        let bytes = encode_wav(&AudioClip::new(vec![0.25; 3], 8_000).unwrap());
        let mut with_list = bytes[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(&[1, 2, 3, 0]);
        with_list.extend_from_slice(&bytes[36..]);
        let clip = decode_wav(&with_list).unwrap();
        assert_eq!(clip.samples(), &[0.25; 3]);
    }
}
