use std::io::ErrorKind;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Side information from [`wav_write`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteReport {
    /// Samples outside `[-1, 1)` that were clipped for PCM-16.
    pub clipped: usize,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == ErrorKind::UnexpectedEof => {
            Error::MalformedHeader(format!("{}: unexpected end of header", path.display()))
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::MalformedHeader(msg.to_string()),
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported WAV format".into()),
        other => Error::UnsupportedEncoding(other.to_string()),
    }
}

/// Reads a RIFF/WAVE file holding PCM-16 or IEEE float-32 samples.
pub fn wav_read(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let declared = reader.len() as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => collect(reader.into_samples::<i16>(), declared, |s| {
            s as f64 / 32768.0
        })?,
        (hound::SampleFormat::Float, 32) => {
            collect(reader.into_samples::<f32>(), declared, |s| s as f64)?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{fmt:?} with {bits} bits per sample"
            )))
        }
    };
    if channels == 0 {
        return Err(Error::MalformedHeader("zero channels".into()));
    }
    let frames = interleaved.len() / channels;
    let mut planar = vec![0.0; frames * channels];
    for (i, s) in interleaved.iter().enumerate().take(frames * channels) {
        planar[(i % channels) * frames + i / channels] = *s;
    }
    AudioBuffer::new(planar, spec.sample_rate, channels)
}

fn collect<S, I, F>(samples: I, declared: usize, convert: F) -> Result<Vec<f64>>
where
    I: Iterator<Item = hound::Result<S>>,
    F: Fn(S) -> f64,
{
    let mut out = Vec::with_capacity(declared);
    for s in samples {
        match s {
            Ok(v) => out.push(convert(v)),
            Err(hound::Error::IoError(_)) => {
                return Err(Error::TruncatedData {
                    expected: declared,
                    found: out.len(),
                })
            }
            Err(e) => return Err(Error::MalformedHeader(e.to_string())),
        }
    }
    if out.len() < declared {
        return Err(Error::TruncatedData {
            expected: declared,
            found: out.len(),
        });
    }
    Ok(out)
}

/// Writes `buffer` as a canonical RIFF/WAVE file.
///
/// Float-32 samples are written unscaled. PCM-16 samples are scaled by 32768
/// and saturated to the i16 range; the number of saturated samples is
/// returned in the report.
pub fn wav_write(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<WriteReport> {
    let path = path.as_ref();
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: u16::try_from(buffer.channels())
            .map_err(|_| Error::InvalidBuffer("too many channels for WAV".into()))?,
        sample_rate: buffer.rate(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    let mut report = WriteReport::default();
    let frames = buffer.len();
    for i in 0..frames {
        for c in 0..buffer.channels() {
            let s = buffer.channel(c)[i];
            let res = match encoding {
                WavEncoding::Float32 => writer.write_sample(s as f32),
                WavEncoding::Pcm16 => {
                    let scaled = (s * 32768.0).round();
                    if !(-32768.0..=32767.0).contains(&scaled) {
                        report.clipped += 1;
                    }
                    writer.write_sample(scaled.clamp(-32768.0, 32767.0) as i16)
                }
            };
            res.map_err(|e| map_hound(path, e))?;
        }
    }
    writer.finalize().map_err(|e| map_hound(path, e))?;
    if report.clipped > 0 {
        log::warn!(
            "{}: clipped {} samples to the PCM-16 range",
            path.display(),
            report.clipped
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn pcm16_header_round_trip() {
        let dir = tmp();
        let p = dir.path().join("a.wav");
        let x: Vec<f64> = (0..480).map(|i| ((i as f64) * 0.01).sin() * 0.5).collect();
        let b = AudioBuffer::mono(x.clone(), 48_000).unwrap();
        wav_write(&b, &p, WavEncoding::Pcm16).unwrap();
        let r = wav_read(&p).unwrap();
        assert_eq!(r.rate(), 48_000);
        assert_eq!(r.len(), 480);
        for (a, b) in r.samples().iter().zip(&x) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn float32_is_exact() {
        let dir = tmp();
        let p = dir.path().join("f.wav");
        let x: Vec<f64> = (0..300).map(|i| (i as f32 * 0.37).sin() as f64).collect();
        let b = AudioBuffer::from_channels(vec![x.clone(), x.iter().map(|v| -v).collect()], 44_100)
            .unwrap();
        wav_write(&b, &p, WavEncoding::Float32).unwrap();
        assert_eq!(wav_read(&p).unwrap(), b);
    }

    #[test]
    fn pcm16_full_scale_clips() {
        let dir = tmp();
        let p = dir.path().join("c.wav");
        let b = AudioBuffer::mono(vec![1.0, -1.0, 0.5], 48_000).unwrap();
        let rep = wav_write(&b, &p, WavEncoding::Pcm16).unwrap();
        assert_eq!(rep.clipped, 1);
        let bytes = std::fs::read(&p).unwrap();
        let data = &bytes[bytes.len() - 6..];
        assert_eq!(i16::from_le_bytes([data[0], data[1]]), 32767);
        assert_eq!(i16::from_le_bytes([data[2], data[3]]), -32768);
    }

    #[test]
    fn empty_file() {
        let dir = tmp();
        let p = dir.path().join("e.wav");
        let b = AudioBuffer::mono(vec![], 48_000).unwrap();
        wav_write(&b, &p, WavEncoding::Pcm16).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 44);
        let r = wav_read(&p).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.rate(), 48_000);
    }

    #[test]
    fn distinct_errors() {
        let dir = tmp();
        let p = dir.path().join("x.wav");
        std::fs::write(&p, b"RIFX0000garbage").unwrap();
        assert!(matches!(wav_read(&p), Err(Error::MalformedHeader(_))));

        // 8-bit PCM is valid WAV but unsupported here.
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(wav_read(&p), Err(Error::UnsupportedEncoding(_))));

        let b = AudioBuffer::mono(vec![0.1; 100], 48_000).unwrap();
        wav_write(&b, &p, WavEncoding::Pcm16).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 50]).unwrap();
        assert!(matches!(wav_read(&p), Err(Error::TruncatedData { .. })));
    }
}
