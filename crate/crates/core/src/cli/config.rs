//! Pipeline configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{InitConfig, SequenceSpec, SweepConfig};
use crate::datagen::{BackgroundConfig, GeneratorConfig};
use crate::error::{Error, Result};
use crate::nn::{ArchConfig, TrainConfig};
use crate::pose::CameraIntrinsics;
use crate::raster::{load_mesh, mesh, Texture, TriMesh};

/// Commented template accepted by every subcommand.
pub const TEMPLATE: &str = include_str!("template.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: Option<usize>,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width: 320,
            height: None,
            fx: None,
            fy: None,
            cx: None,
            cy: None,
        }
    }
}

impl CameraConfig {
    /// Fields left out take Kinect-like values for `width`.
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        if self.width == 0 {
            return Err(Error::config("camera.width", "must be positive"));
        }
        let base = CameraIntrinsics::kinect_like(self.width);
        let height = self.height.unwrap_or(base.height);
        CameraIntrinsics::new(
            self.fx.unwrap_or(base.fx),
            self.fy.unwrap_or(base.fy),
            self.cx.unwrap_or(self.width as f64 / 2.0),
            self.cy.unwrap_or(height as f64 / 2.0),
            self.width,
            height,
        )
        .map_err(|e| Error::config("camera", e.to_string()))
    }

    fn resolve(&mut self) -> Result<()> {
        let k = self.intrinsics()?;
        (self.height, self.fx, self.fy, self.cx, self.cy) = (Some(k.height), Some(k.fx), Some(k.fy), Some(k.cx), Some(k.cy));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectConfig {
    /// `toy`, `cube` or a path to an OBJ file.
    pub mesh: String,
    /// Optional PNG replacing the mesh texture.
    pub texture: Option<PathBuf>,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        ObjectConfig {
            mesh: "toy".into(),
            texture: None,
        }
    }
}

impl ObjectConfig {
    pub fn load(&self) -> Result<TriMesh> {
        let m = match self.mesh.as_str() {
            "toy" => mesh::toy(),
            "cube" => mesh::cube(0.12),
            path => load_mesh(Path::new(path))?,
        };
        Ok(match &self.texture {
            Some(t) => m.with_texture(Texture::load_png(t)?),
            None => m,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct BackgroundSection {
    /// Directory of `<name>_color.png` / `<name>_depth.png` pairs; procedural
    /// scenes are used when unset.
    pub import_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub procedural: BackgroundConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub count: u64,
    /// Generated pairs used for channel statistics.
    pub stats_samples: usize,
    /// Records generated per write chunk.
    pub chunk: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            count: 20_000,
            stats_samples: 500,
            chunk: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Defaults to `<output_dir>/dataset.bin`.
    pub dataset: Option<PathBuf>,
    /// Defaults to `<output_dir>/model.bin`.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    /// Directory of `NNNNN_color.png` / `NNNNN_depth.png` frames plus
    /// `poses.csv`; the synthetic `[sequence]` is used when unset.
    pub sequence_dir: Option<PathBuf>,
    pub iterations: usize,
    /// 0 = never.
    pub reset_every: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            sequence_dir: None,
            iterations: 1,
            reset_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct BenchSection {
    /// Reset interval of `bench sequence`; 0 = never.
    pub reset_every: usize,
    pub sweep: SweepConfig,
    pub init: InitConfig,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every sub-seed is overwritten with it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 = available cores. `DT6D_THREADS` and `--threads` take precedence.
    pub threads: usize,
    pub camera: CameraConfig,
    pub object: ObjectConfig,
    pub generator: GeneratorConfig,
    pub backgrounds: BackgroundSection,
    pub data: DataConfig,
    pub paths: PathsConfig,
    pub network: ArchConfig,
    pub training: TrainConfig,
    pub sequence: SequenceSpec,
    pub track: TrackConfig,
    pub bench: BenchSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            threads: 0,
            camera: CameraConfig::default(),
            object: ObjectConfig::default(),
            generator: GeneratorConfig::default(),
            backgrounds: BackgroundSection::default(),
            data: DataConfig::default(),
            paths: PathsConfig::default(),
            network: ArchConfig::default(),
            training: TrainConfig::default(),
            sequence: SequenceSpec::default(),
            track: TrackConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

fn section(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { field, message } => Error::config(format!("{name}.{field}"), message),
        other => Error::config(name, other.to_string()),
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fills every defaulted field, propagates the master seed and checks
    /// ranges. Input paths are checked by the commands that read them.
    pub fn resolve(mut self) -> Result<Self> {
        self.camera.resolve()?;
        self.training.seed = self.seed;
        self.sequence.seed = self.seed;
        self.bench.sweep.seed = self.seed;
        self.bench.init.seed = self.seed;
        if self.paths.dataset.is_none() {
            self.paths.dataset = Some(self.output_dir.join("dataset.bin"));
        }
        if self.paths.model.is_none() {
            self.paths.model = Some(self.output_dir.join("model.bin"));
        }
        self.generator.validate().map_err(section("generator"))?;
        self.network.validate().map_err(section("network"))?;
        if self.network.input_side != self.generator.input_side {
            return Err(Error::config(
                "network.input_side",
                format!("{} differs from generator.input_side {}", self.network.input_side, self.generator.input_side),
            ));
        }
        self.training.validate().map_err(section("training"))?;
        self.sequence.validate().map_err(section("sequence"))?;
        if self.data.count == 0 || self.data.stats_samples == 0 || self.data.chunk == 0 {
            return Err(Error::config("data", "count, stats_samples and chunk must be positive"));
        }
        if self.track.iterations == 0 {
            return Err(Error::config("track.iterations", "must be at least 1"));
        }
        let b = &self.backgrounds.procedural;
        if b.scenes == 0 || b.views_per_scene == 0 {
            return Err(Error::config("backgrounds", "need at least one scene and view"));
        }
        if let Some(dir) = &self.backgrounds.import_dir {
            if !dir.is_dir() {
                return Err(Error::config("backgrounds.import_dir", format!("{} is not a directory", dir.display())));
            }
        }
        if let Some(t) = &self.object.texture {
            if !t.is_file() {
                return Err(Error::config("object.texture", format!("{} does not exist", t.display())));
            }
        }
        if !matches!(self.object.mesh.as_str(), "toy" | "cube") && !Path::new(&self.object.mesh).is_file() {
            return Err(Error::config("object.mesh", format!("{} does not exist", self.object.mesh)));
        }
        Ok(self)
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.paths.dataset.clone().unwrap_or_else(|| self.output_dir.join("dataset.bin"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.output_dir.join("model.bin"))
    }

    /// Existing input file, or a config error naming `field`.
    pub fn require_file(path: &Path, field: &str) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::config(field, format!("{} does not exist", path.display())))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(format!("cannot serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parses_and_resolves() {
        let cfg = PipelineConfig::parse(TEMPLATE).unwrap().resolve().unwrap();
        assert_eq!(cfg.training.seed, cfg.seed);
        assert!(cfg.camera.fx.is_some());
        let again = PipelineConfig::parse(&cfg.to_toml().unwrap()).unwrap().resolve().unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = PipelineConfig::parse("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn errors_name_the_field() {
        let e = PipelineConfig::parse("[training]\nbatch_size = 1\n").unwrap().resolve().unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "training.batch_size"), "{e}");
        let e = PipelineConfig::parse("[network]\ninput_side = 100\n").unwrap().resolve().unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "network.input_side"), "{e}");
        assert!(matches!(PipelineConfig::parse("bogus = 1"), Err(Error::Config { .. })));
    }
}
