//! Model files: a fixed 160-byte header followed by every parameter buffer in
//! [`NetworkParams::buffers`] order, little-endian, at the model's precision.
//!
//! ```text
//!   0  magic "DT6DMODL"          8
//!   8  version u32               4
//!  12  bytes per value u32       4   (4 or 8)
//!  16  input side u32            4
//!  20  channels u32              4
//!  24  branch filters u32        4
//!  28  trunk filters u32         4
//!  32  fc units u32              4
//!  36  outputs u32               4
//!  40  value count u64           8
//!  48  channel mean/std f64     64
//! 112  t_max_mm, r_max_deg f64  16
//! 128  bbox margin f64           8
//! 136  zero padding             24
//! ```

use std::io::Write;
use std::path::Path;

use crate::datagen::{ChannelStats, NormalizedInput};
use crate::error::{create_output, Error, Result};
use crate::pose::{DeltaRange, Label6};

use super::float::Float;
use super::layers::Tensor;
use super::network::{forward_eval, ArchConfig, NetworkParams, OUTPUTS};

pub const MAGIC: [u8; 8] = *b"DT6DMODL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 160;
const CHANNELS: u32 = 4;

/// A trained network with everything needed to run it on raw frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub params: NetworkParams<T>,
    pub stats: ChannelStats,
    pub delta_range: DeltaRange,
    pub bbox_margin: f64,
}

/// Header fields readable without knowing the value type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelHeader {
    pub value_bytes: usize,
    pub arch: ArchConfig,
    pub count: usize,
    pub stats: ChannelStats,
    pub delta_range: DeltaRange,
    pub bbox_margin: f64,
}

impl ModelHeader {
    pub fn payload_len(&self) -> usize {
        self.count * self.value_bytes
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || bytes[..8] != MAGIC {
            return Err(Error::format("not a model file (bad magic)"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("truncated model header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(8) != VERSION as usize {
            return Err(Error::format(format!("unsupported model version {}", u32_at(8))));
        }
        if u32_at(20) != CHANNELS as usize || u32_at(36) != OUTPUTS {
            return Err(Error::format("model header has unexpected channel or output count"));
        }
        let value_bytes = u32_at(12);
        if value_bytes != 4 && value_bytes != 8 {
            return Err(Error::format(format!("unsupported value width {value_bytes}")));
        }
        let arch = ArchConfig {
            input_side: u32_at(16),
            branch_filters: u32_at(24),
            trunk_filters: u32_at(28),
            fc_units: u32_at(32),
        };
        let count = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
        let expected = arch
            .param_count()
            .map_err(|e| Error::format(format!("model header holds an invalid architecture: {e}")))?;
        if count != expected {
            return Err(Error::format(format!("header counts {count} values, architecture needs {expected}")));
        }
        let stats = ChannelStats::from_array(std::array::from_fn(|i| f64_at(48 + 8 * i)));
        stats.validate()?;
        let delta_range = DeltaRange {
            t_max_mm: f64_at(112),
            r_max_deg: f64_at(120),
        };
        delta_range.validate()?;
        Ok(ModelHeader {
            value_bytes,
            arch,
            count,
            stats,
            delta_range,
            bbox_margin: f64_at(128),
        })
    }

    fn encode(&self) -> Vec<u8> {
        let mut h = Vec::with_capacity(HEADER_LEN);
        h.extend_from_slice(&MAGIC);
        for v in [
            VERSION,
            self.value_bytes as u32,
            self.arch.input_side as u32,
            CHANNELS,
            self.arch.branch_filters as u32,
            self.arch.trunk_filters as u32,
            self.arch.fc_units as u32,
            OUTPUTS as u32,
        ] {
            h.extend_from_slice(&v.to_le_bytes());
        }
        h.extend_from_slice(&(self.count as u64).to_le_bytes());
        for v in self.stats.as_array() {
            h.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.delta_range.t_max_mm, self.delta_range.r_max_deg, self.bbox_margin] {
            h.extend_from_slice(&v.to_le_bytes());
        }
        h.resize(HEADER_LEN, 0);
        h
    }
}

impl<T: Float> Model<T> {
    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            value_bytes: T::BYTES,
            arch: self.params.arch,
            count: self.params.value_count(),
            stats: self.stats,
            delta_range: self.delta_range,
            bbox_margin: self.bbox_margin,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let head = self.header();
        let mut out = head.encode();
        out.reserve(head.payload_len());
        for (buf, _) in self.params.buffers() {
            for v in buf {
                (*v).write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let head = ModelHeader::parse(bytes)?;
        if head.value_bytes != T::BYTES {
            return Err(Error::ArchitectureMismatch(format!(
                "model stores {}-byte values, {}-byte values requested",
                head.value_bytes,
                T::BYTES
            )));
        }
        if bytes.len() != HEADER_LEN + head.payload_len() {
            return Err(Error::format(format!(
                "model payload is {} bytes, header implies {}",
                bytes.len().saturating_sub(HEADER_LEN),
                head.payload_len()
            )));
        }
        let mut params = NetworkParams::<T>::zeros(head.arch)?;
        let mut off = HEADER_LEN;
        for (buf, _) in params.buffers_mut() {
            for v in buf.iter_mut() {
                *v = T::read_le(&bytes[off..off + T::BYTES]);
                off += T::BYTES;
            }
        }
        params
            .validate()
            .map_err(|e| Error::format(format!("model parameters are invalid: {e}")))?;
        Ok(Model {
            params,
            stats: head.stats,
            delta_range: head.delta_range,
            bbox_margin: head.bbox_margin,
        })
    }

    /// Writes the model; refuses to overwrite an existing file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = create_output(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads a model and checks that it has the expected architecture.
    pub fn load_expecting(path: &Path, arch: &ArchConfig) -> Result<Self> {
        let m = Self::load(path)?;
        if m.params.arch != *arch {
            return Err(Error::ArchitectureMismatch(format!(
                "model has {:?}, expected {:?}",
                m.params.arch, arch
            )));
        }
        Ok(m)
    }

    /// Eval-mode prediction for one standardized pair.
    pub fn predict(&self, x_pred: &NormalizedInput, x_obs: &NormalizedInput) -> Result<Label6> {
        let s = self.params.arch.input_side;
        if x_pred.side() != s || x_obs.side() != s {
            return Err(Error::ArchitectureMismatch(format!(
                "inputs of side {}/{} for a network expecting {s}",
                x_pred.side(),
                x_obs.side()
            )));
        }
        let conv = |x: &NormalizedInput| Tensor::from_vec([1, s, s, 4], x.data().iter().map(|&v| T::c(v as f64)).collect());
        let out = forward_eval(&self.params, &conv(x_pred)?, &conv(x_obs)?)?;
        Ok(Label6(std::array::from_fn(|i| out[i].f64())))
    }
}

/// Reads just the header of a model file.
pub fn read_header(path: &Path) -> Result<ModelHeader> {
    use std::io::Read;
    let mut buf = vec![0u8; HEADER_LEN];
    let mut f = std::fs::File::open(path)?;
    let mut got = 0;
    while got < HEADER_LEN {
        let n = f.read(&mut buf[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    buf.truncate(got);
    ModelHeader::parse(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model<T: Float>(arch: ArchConfig) -> Model<T> {
        Model {
            params: NetworkParams::init(arch, 5).unwrap(),
            stats: ChannelStats::new([100.0, 90.0, 80.0, 5.0], [50.0, 40.0, 30.0, 60.0]).unwrap(),
            delta_range: DeltaRange::default(),
            bbox_margin: 0.15,
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let m = model::<f32>(ArchConfig::reduced(64));
        let bytes = m.to_bytes();
        let back = Model::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        let m64 = model::<f64>(ArchConfig::reduced(64));
        assert_eq!(Model::<f64>::from_bytes(&m64.to_bytes()).unwrap(), m64);
    }

    #[test]
    fn payload_is_count_times_width() {
        let arch = ArchConfig::paper();
        let m = model::<f32>(arch);
        assert_eq!(m.to_bytes().len() - HEADER_LEN, 186_124 * 4);
        assert_eq!(m.header().payload_len(), arch.param_count().unwrap() * 4);
    }

    #[test]
    fn mismatches_are_typed() {
        let m = model::<f32>(ArchConfig::reduced(64));
        let bytes = m.to_bytes();
        assert!(matches!(Model::<f64>::from_bytes(&bytes), Err(Error::ArchitectureMismatch(_))));
        assert!(matches!(Model::<f32>::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::<f32>::from_bytes(&bad), Err(Error::Format(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        m.save(&p).unwrap();
        assert!(matches!(m.save(&p), Err(Error::OutputExists(_))));
        assert!(matches!(
            Model::<f32>::load_expecting(&p, &ArchConfig::reduced(100)),
            Err(Error::ArchitectureMismatch(_))
        ));
        assert_eq!(read_header(&p).unwrap().arch, ArchConfig::reduced(64));
    }
}
