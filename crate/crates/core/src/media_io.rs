//! Audio buffers, frame-embedding matrices and control-signal tracks, plus
//! their on-disk formats.
//!
//! Binary layouts (all little-endian):
//!
//! ```text
//! RWEM  magic "RWEM" | u32 version=1 | u32 T | u32 D | f32 fps | T*D f32 row-major
//! RWCS  magic "RWCS" | u32 version=1 | u32 L | f32 fps | L * (loudness, pitch, centroid) f32
//! ```
//!
//! WAV files are RIFF/WAVE with either 16-bit PCM or 32-bit IEEE float
//! samples. Stereo input is averaged down to mono on read.

use std::fs;
use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

const EMBEDDING_MAGIC: &[u8; 4] = b"RWEM";
const CONTROL_MAGIC: &[u8; 4] = b"RWCS";
const FORMAT_VERSION: u32 = 1;

pub const LOUDNESS_FLOOR_DB: f32 = -80.0;
pub const PITCH_MIDI_RANGE: (f32, f32) = (12.0, 132.0);
pub const CENTROID_MIDI_RANGE: (f32, f32) = (12.0, 135.0);

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("non-finite sample at index {i}")));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate_hz,
        })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        AudioBuffer {
            samples: vec![0.0; len],
            sample_rate_hz: sample_rate_hz.max(1),
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f32) -> AudioBuffer {
        AudioBuffer {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

fn map_hound(err: hound::Error, what: &str) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Format(format!("{what}: {e}")),
        hound::Error::FormatError(msg) => Error::Format(format!("{what}: {msg}")),
        hound::Error::Unsupported => Error::Unsupported(format!("{what}: unsupported wav codec")),
        other => Error::Format(format!("{what}: {other}")),
    }
}

fn decode_reader<R: Read>(reader: R, what: &str) -> Result<AudioBuffer> {
    let reader = hound::WavReader::new(reader).map_err(|e| map_hound(e, what))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::Unsupported(format!(
            "{what}: {channels} channels (mono or stereo only)"
        )));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(e, what))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(e, what))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{what}: {bits}-bit {fmt:?} samples (PCM-16 or float-32 only)"
            )))
        }
    };
    let samples = if channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|lr| (lr[0] + lr[1]) * 0.5)
            .collect()
    } else {
        interleaved
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Decodes a WAV byte stream held in memory.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    decode_reader(Cursor::new(bytes), "wav bytes")
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_reader(std::io::BufReader::new(file), &path.display().to_string())
}

/// PCM-16 quantization: round half away from zero, clamp to the i16 range.
pub fn quantize_pcm16(sample: f32) -> i16 {
    let scaled = (sample as f64 * 32768.0).round();
    scaled.clamp(-32768.0, 32767.0) as i16
}

fn encode_writer<W: Write + Seek>(buffer: &AudioBuffer, writer: W, encoding: WavEncoding) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut w = hound::WavWriter::new(writer, spec).map_err(|e| map_hound(e, "wav writer"))?;
    for &s in &buffer.samples {
        match encoding {
            WavEncoding::Pcm16 => w.write_sample(quantize_pcm16(s)),
            WavEncoding::Float32 => w.write_sample(s),
        }
        .map_err(|e| map_hound(e, "wav writer"))?;
    }
    w.finalize().map_err(|e| map_hound(e, "wav writer"))
}

pub fn encode_wav(buffer: &AudioBuffer, encoding: WavEncoding) -> Result<Vec<u8>> {
    let mut cursor = Cursor::new(Vec::new());
    encode_writer(buffer, &mut cursor, encoding)?;
    Ok(cursor.into_inner())
}

/// Writes a 16-bit PCM WAV file.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_wav_with(buffer, path, WavEncoding::Pcm16)
}

pub fn write_wav_with(buffer: &AudioBuffer, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(buffer, encoding)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A T x D matrix of per-frame video features.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddingSequence {
    data: Vec<f32>,
    frames: usize,
    dim: usize,
    frames_per_second: f32,
}

impl FrameEmbeddingSequence {
    pub fn new(data: Vec<f32>, frames: usize, dim: usize, frames_per_second: f32) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "embedding shape {frames}x{dim} must be non-empty"
            )));
        }
        if data.len() != frames * dim {
            return Err(Error::Validation(format!(
                "embedding payload has {} values, expected {frames}x{dim}",
                data.len()
            )));
        }
        if !(frames_per_second.is_finite() && frames_per_second > 0.0) {
            return Err(Error::Validation(format!(
                "frames per second must be positive, got {frames_per_second}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite values".into()));
        }
        Ok(FrameEmbeddingSequence {
            data,
            frames,
            dim,
            frames_per_second,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], frames_per_second: f32) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("ragged embedding rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), dim, frames_per_second)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames_per_second(&self) -> f32 {
        self.frames_per_second
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn scaled(&self, c: f32) -> Result<Self> {
        Self::new(
            self.data.iter().map(|v| v * c).collect(),
            self.frames,
            self.dim,
            self.frames_per_second,
        )
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated payload while reading {what} at byte {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<FrameEmbeddingSequence> {
    let mut r = ByteReader { bytes, pos: 0 };
    r.header(EMBEDDING_MAGIC)?;
    let frames = r.u32("frame count")? as usize;
    let dim = r.u32("dimension")? as usize;
    let fps = r.f32("fps")?;
    let expected = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("embedding shape overflows".into()))?;
    let payload = r.take(expected, "embedding payload")?;
    r.finish()?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FrameEmbeddingSequence::new(data, frames, dim, fps).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_embeddings(seq: &FrameEmbeddingSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + seq.data.len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.frames as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim as u32).to_le_bytes());
    out.extend_from_slice(&seq.frames_per_second.to_le_bytes());
    for v in &seq.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<FrameEmbeddingSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

pub fn write_embeddings(seq: &FrameEmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(seq)).map_err(|e| Error::io(path, e))
}

/// Loudness, pitch and spectral-centroid tracks sharing one frame rate.
///
/// MIDI tracks use 0 as the sentinel for unvoiced (pitch) or silent
/// (centroid) frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub loudness_db: Vec<f32>,
    pub pitch_midi: Vec<f32>,
    pub centroid_midi: Vec<f32>,
    pub frames_per_second: f32,
}

impl ControlSignal {
    pub fn new(
        loudness_db: Vec<f32>,
        pitch_midi: Vec<f32>,
        centroid_midi: Vec<f32>,
        frames_per_second: f32,
    ) -> Result<Self> {
        let sig = ControlSignal {
            loudness_db,
            pitch_midi,
            centroid_midi,
            frames_per_second,
        };
        sig.validate()?;
        Ok(sig)
    }

    pub fn len(&self) -> usize {
        self.loudness_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loudness_db.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.loudness_db.len();
        if l == 0 {
            return Err(Error::Validation("control signal must have at least one frame".into()));
        }
        if self.pitch_midi.len() != l || self.centroid_midi.len() != l {
            return Err(Error::Validation(format!(
                "track length mismatch: loudness {l}, pitch {}, centroid {}",
                self.pitch_midi.len(),
                self.centroid_midi.len()
            )));
        }
        if !(self.frames_per_second.is_finite() && self.frames_per_second > 0.0) {
            return Err(Error::Validation("control frame rate must be positive".into()));
        }
        let tracks = [
            ("loudness_db", &self.loudness_db),
            ("pitch_midi", &self.pitch_midi),
            ("centroid_midi", &self.centroid_midi),
        ];
        for (name, track) in tracks {
            if let Some(i) = track.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{name} frame {i} is not finite")));
            }
        }
        for (i, &v) in self.loudness_db.iter().enumerate() {
            if !(LOUDNESS_FLOOR_DB..=0.0).contains(&v) {
                return Err(Error::Validation(format!(
                    "loudness_db frame {i} = {v} outside [-80, 0]"
                )));
            }
        }
        let midi_tracks = [
            ("pitch_midi", &self.pitch_midi, PITCH_MIDI_RANGE),
            ("centroid_midi", &self.centroid_midi, CENTROID_MIDI_RANGE),
        ];
        for (name, track, (lo, hi)) in midi_tracks {
            for (i, &v) in track.iter().enumerate() {
                if v != 0.0 && !(lo..=hi).contains(&v) {
                    return Err(Error::Validation(format!(
                        "{name} frame {i} = {v} outside {{0}} or [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Frame `i` as (loudness, pitch, centroid).
    pub fn frame(&self, i: usize) -> [f32; 3] {
        [self.loudness_db[i], self.pitch_midi[i], self.centroid_midi[i]]
    }
}

pub fn encode_control_signal(sig: &ControlSignal) -> Result<Vec<u8>> {
    sig.validate()?;
    let mut out = Vec::with_capacity(16 + sig.len() * 12);
    out.extend_from_slice(CONTROL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(sig.len() as u32).to_le_bytes());
    out.extend_from_slice(&sig.frames_per_second.to_le_bytes());
    for i in 0..sig.len() {
        for v in sig.frame(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_control_signal(bytes: &[u8]) -> Result<ControlSignal> {
    let mut r = ByteReader { bytes, pos: 0 };
    r.header(CONTROL_MAGIC)?;
    let len = r.u32("frame count")? as usize;
    let fps = r.f32("fps")?;
    let mut loudness = Vec::with_capacity(len);
    let mut pitch = Vec::with_capacity(len);
    let mut centroid = Vec::with_capacity(len);
    for _ in 0..len {
        loudness.push(r.f32("loudness")?);
        pitch.push(r.f32("pitch")?);
        centroid.push(r.f32("centroid")?);
    }
    r.finish()?;
    ControlSignal::new(loudness, pitch, centroid, fps)
}

pub fn read_control_signal(path: impl AsRef<Path>) -> Result<ControlSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_control_signal(&bytes)
}

pub fn write_control_signal(sig: &ControlSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_control_signal(sig)?).map_err(|e| Error::io(path, e))
}

const CSV_HEADER: [&str; 4] = ["frame", "loudness_db", "pitch_midi", "centroid_midi"];

pub fn export_control_csv(sig: &ControlSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    sig.validate()?;
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for i in 0..sig.len() {
        let [l, p, c] = sig.frame(i);
        w.write_record([i.to_string(), l.to_string(), p.to_string(), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a control-signal CSV. Frame rate is not stored in CSV and must be
/// supplied by the caller.
pub fn import_control_csv(path: impl AsRef<Path>, frames_per_second: f32) -> Result<ControlSignal> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_control_csv(&text, frames_per_second)
}

pub fn parse_control_csv(text: &str, frames_per_second: f32) -> Result<ControlSignal> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("csv header: {e}")))?
        .clone();
    if headers.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Format(format!(
            "csv header must be `{}`",
            CSV_HEADER.join(",")
        )));
    }
    let (mut loudness, mut pitch, mut centroid) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("csv row {row}: {e}")))?;
        let field = |k: usize| -> Result<f32> {
            record
                .get(k)
                .and_then(|s| s.trim().parse::<f32>().ok())
                .ok_or_else(|| Error::Format(format!("csv row {row} column {k} is not a number")))
        };
        let frame = field(0)?;
        if frame != row as f32 {
            return Err(Error::Format(format!("csv row {row} has frame index {frame}")));
        }
        loudness.push(field(1)?);
        pitch.push(field(2)?);
        centroid.push(field(3)?);
    }
    ControlSignal::new(loudness, pitch, centroid, frames_per_second)
}
