//! Binary dataset container.
//!
//! Little-endian layout: a fixed 192-byte header followed by `count`
//! fixed-stride records. Each record holds `x_pred` and `x_obs` as `S·S·4`
//! half-precision values and the label as six `f64`.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use half::f16;

use crate::error::{create_output, Error, Result};
use crate::pose::{DeltaRange, Label6};

use super::augment::AugmentConfig;
use super::generate::{GeneratorConfig, SamplePair};
use super::normalize::{ChannelStats, NormalizedInput, CHANNELS};

pub const MAGIC: [u8; 8] = *b"DT6DDSET";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 192;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub side: usize,
    pub count: u64,
    pub seed: u64,
    pub stats: ChannelStats,
    pub generator: GeneratorConfig,
}

impl DatasetHeader {
    pub fn grid_len(&self) -> usize {
        self.side * self.side * CHANNELS
    }

    pub fn record_stride(&self) -> u64 {
        (2 * self.grid_len() * 2 + 6 * 8) as u64
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN + self.count * self.record_stride()
    }

    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN as usize);
        b.extend_from_slice(&MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.side as u32).to_le_bytes());
        b.extend_from_slice(&(CHANNELS as u32).to_le_bytes());
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&self.count.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        let g = &self.generator;
        let floats = self
            .stats
            .as_array()
            .into_iter()
            .chain(g.augment.as_array())
            .chain([g.delta_range.t_max_mm, g.delta_range.r_max_deg, g.bbox_margin, g.radius_range.0, g.radius_range.1]);
        for v in floats {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.resize(HEADER_LEN as usize, 0);
        b
    }

    fn decode(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN as usize {
            return Err(Error::format("dataset header is truncated"));
        }
        if b[..8] != MAGIC {
            return Err(Error::format("not a dataset file (bad magic)"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(b[40 + 8 * i..48 + 8 * i].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::format(format!("unsupported dataset version {version}")));
        }
        let side = u32_at(12) as usize;
        if u32_at(16) as usize != CHANNELS || side == 0 {
            return Err(Error::format("dataset header has invalid shape"));
        }
        let stats = ChannelStats::from_array(std::array::from_fn(&f64_at));
        let augment = AugmentConfig::from_array(std::array::from_fn(|i| f64_at(8 + i)));
        let generator = GeneratorConfig {
            input_side: side,
            radius_range: (f64_at(17), f64_at(18)),
            delta_range: DeltaRange {
                t_max_mm: f64_at(14),
                r_max_deg: f64_at(15),
            },
            bbox_margin: f64_at(16),
            augment,
        };
        Ok(DatasetHeader {
            side,
            count: u64_at(24),
            seed: u64_at(32),
            stats,
            generator,
        })
    }
}

/// Validation membership of record `index`: a fixed hash puts one record in
/// four into the validation split.
pub fn is_validation(index: u64) -> bool {
    let mut z = index.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z.is_multiple_of(4)
}

/// Train and validation record indices of a dataset with `count` records.
pub fn split_indices(count: u64) -> (Vec<u64>, Vec<u64>) {
    (0..count).partition(|&i| !is_validation(i))
}

/// Streaming writer; refuses to overwrite an existing file.
pub struct DatasetWriter {
    out: BufWriter<File>,
    header: DatasetHeader,
    written: u64,
    path: PathBuf,
}

impl DatasetWriter {
    pub fn create(path: &Path, header: DatasetHeader) -> Result<Self> {
        let file = create_output(path)?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.encode())?;
        Ok(DatasetWriter {
            out,
            header,
            written: 0,
            path: path.to_path_buf(),
        })
    }

    pub fn push(&mut self, s: &SamplePair) -> Result<()> {
        if self.written >= self.header.count {
            return Err(Error::invalid("more records than declared in the header"));
        }
        let n = self.header.grid_len();
        if s.x_pred.data().len() != n || s.x_obs.data().len() != n {
            return Err(Error::shape(format!("record inputs must have {n} values")));
        }
        let mut buf = Vec::with_capacity(self.header.record_stride() as usize);
        for v in s.x_pred.data().iter().chain(s.x_obs.data()) {
            buf.extend_from_slice(&f16::from_f32(*v).to_le_bytes());
        }
        for v in s.y.0 {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        if self.written != self.header.count {
            return Err(Error::invalid(format!(
                "header declares {} records, {} written",
                self.header.count, self.written
            )));
        }
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        Ok(self.path)
    }
}

pub fn write_dataset(path: &Path, header: DatasetHeader, samples: &[SamplePair]) -> Result<()> {
    let header = DatasetHeader {
        count: samples.len() as u64,
        ..header
    };
    let mut w = DatasetWriter::create(path, header)?;
    for s in samples {
        w.push(s)?;
    }
    w.finish().map(|_| ())
}

/// Random-access reader over a dataset file.
pub struct DatasetReader {
    file: Mutex<File>,
    header: DatasetHeader,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let mut head = vec![0u8; HEADER_LEN as usize];
        let got = read_full(&mut file, &mut head)?;
        if got < 8 || head[..8] != MAGIC {
            return Err(Error::format(format!("{} is not a dataset file (bad magic)", path.display())));
        }
        if got < head.len() {
            return Err(Error::format(format!("{}: truncated header", path.display())));
        }
        let header = DatasetHeader::decode(&head)?;
        let len = file.metadata()?.len();
        if len != header.file_len() {
            return Err(Error::format(format!(
                "{}: truncated or oversized file ({len} bytes, expected {})",
                path.display(),
                header.file_len()
            )));
        }
        Ok(DatasetReader {
            file: Mutex::new(file),
            header,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn len(&self) -> u64 {
        self.header.count
    }

    pub fn is_empty(&self) -> bool {
        self.header.count == 0
    }

    /// Decodes record `index` into caller buffers and returns its label.
    pub fn read_into(&self, index: u64, x_pred: &mut [f32], x_obs: &mut [f32]) -> Result<Label6> {
        if index >= self.header.count {
            return Err(Error::invalid(format!("record {index} out of {}", self.header.count)));
        }
        let n = self.header.grid_len();
        if x_pred.len() != n || x_obs.len() != n {
            return Err(Error::shape(format!("record buffers must have {n} values")));
        }
        let mut buf = vec![0u8; self.header.record_stride() as usize];
        {
            let mut f = self.file.lock().expect("dataset file lock");
            f.seek(SeekFrom::Start(HEADER_LEN + index * self.header.record_stride()))?;
            f.read_exact(&mut buf)?;
        }
        let halves = |bytes: &[u8], dst: &mut [f32]| {
            for (d, c) in dst.iter_mut().zip(bytes.chunks_exact(2)) {
                *d = f16::from_le_bytes([c[0], c[1]]).to_f32();
            }
        };
        halves(&buf[..2 * n], x_pred);
        halves(&buf[2 * n..4 * n], x_obs);
        let lab = &buf[4 * n..];
        Ok(Label6(std::array::from_fn(|i| {
            f64::from_le_bytes(lab[8 * i..8 * i + 8].try_into().unwrap())
        })))
    }

    pub fn read(&self, index: u64) -> Result<SamplePair> {
        let n = self.header.grid_len();
        let (mut p, mut o) = (vec![0.0; n], vec![0.0; n]);
        let y = self.read_into(index, &mut p, &mut o)?;
        Ok(SamplePair {
            x_pred: NormalizedInput::from_raw(self.header.side, p)?,
            x_obs: NormalizedInput::from_raw(self.header.side, o)?,
            y,
        })
    }

    pub fn read_all(&self) -> Result<Vec<SamplePair>> {
        (0..self.header.count).map(|i| self.read(i)).collect()
    }
}

fn read_full(file: &mut File, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        let n = file.read(&mut buf[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    Ok(got)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, stream, Domain};

    fn samples(n: usize, side: usize) -> Vec<SamplePair> {
        let mut rng = stream(6, Domain::Misc, 0);
        (0..n)
            .map(|_| {
                let mut grid = || -> NormalizedInput {
                    let v = (0..side * side * 4).map(|_| rng::normal(&mut rng) as f32).collect();
                    NormalizedInput::from_raw(side, v).unwrap()
                };
                let (x_pred, x_obs) = (grid(), grid());
                SamplePair {
                    x_pred,
                    x_obs,
                    y: Label6(std::array::from_fn(|_| rng::uniform(&mut rng, -1.0, 1.0))),
                }
            })
            .collect()
    }

    fn header(side: usize) -> DatasetHeader {
        DatasetHeader {
            side,
            count: 0,
            seed: 42,
            stats: ChannelStats::new([0.1, 0.2, 0.3, -0.4], [1.0, 2.0, 3.0, 0.5]).unwrap(),
            generator: GeneratorConfig {
                input_side: side,
                ..Default::default()
            },
        }
    }

    #[test]
    fn roundtrip_100() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let s = samples(100, 6);
        write_dataset(&path, header(6), &s).unwrap();
        let r = DatasetReader::open(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_LEN + 100 * (2 * 6 * 6 * 4 * 2 + 48));
        assert_eq!(r.header().seed, 42);
        assert_eq!(r.header().stats, header(6).stats);
        assert_eq!(r.header().generator, header(6).generator);
        for (a, b) in s.iter().zip(r.read_all().unwrap()) {
            assert_eq!(a.y.0.map(f64::to_bits), b.y.0.map(f64::to_bits));
            for (x, y) in a.x_pred.data().iter().zip(b.x_pred.data()).chain(a.x_obs.data().iter().zip(b.x_obs.data())) {
                // half precision keeps 11 significant bits
                assert!((x - y).abs() <= x.abs().max(1.0) * 2f32.powi(-10), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn corrupt_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&path, header(4), &samples(3, 4)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let short = dir.path().join("short.bin");
        std::fs::write(&short, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(DatasetReader::open(&short), Err(Error::Format(_))));
        bytes[0] = b'X';
        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, &bytes).unwrap();
        let err = DatasetReader::open(&bad).err().unwrap();
        assert!(matches!(err, Error::Format(ref m) if m.contains("magic")), "{err}");
        assert!(matches!(write_dataset(&path, header(4), &samples(1, 4)), Err(Error::OutputExists(_))));
    }

    #[test]
    fn split_is_roughly_three_to_one() {
        let (train, val) = split_indices(20_000);
        let frac = val.len() as f64 / 20_000.0;
        assert!((frac - 0.25).abs() < 0.01, "{frac}");
        assert_eq!(train.len() + val.len(), 20_000);
    }
}
