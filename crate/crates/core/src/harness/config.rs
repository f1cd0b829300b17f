use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotate::DEFAULT_MIN_VISIBILITY;
use crate::detect::MockDetectorParams;
use crate::distmatch::PoseMatchCriterion;
use crate::geom::{Camera, Intrinsics, Pose6D};
use crate::models::{ModelLibrary, DEFAULT_SAMPLES};
use crate::physim::{PhysicsParams, SurfaceSpec};
use crate::register::RegisterParams;
use crate::render::LightingRanges;
use crate::selflearn::{AggregateParams, SelfLearnParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinModels {
    #[default]
    Standard,
    Asymmetric,
}

/// Camera poses: explicit camera-to-world poses, or a quarter-sphere rig around
/// the surface centre when the list is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRig {
    pub poses: Vec<Pose6D>,
    pub views: usize,
    pub radius: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            poses: Vec::new(),
            views: 5,
            radius: 0.8,
        }
    }
}

/// Every tunable constant of a run, loaded from one JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Directory of `.obj`/`.ply` meshes; the builtin set is used when absent.
    pub model_dir: Option<PathBuf>,
    pub builtin_models: BuiltinModels,
    pub model_samples: usize,
    pub surface: SurfaceSpec,
    pub cameras: CameraRig,
    pub intrinsics: Intrinsics,
    /// Records to generate.
    pub n: usize,
    /// Dataset size the self-learning loop grows to.
    pub n_prime: usize,
    pub objects_per_scene: (usize, usize),
    pub physics: PhysicsParams,
    pub lighting: LightingRanges,
    pub min_visibility: f64,
    pub detector: MockDetectorParams,
    pub register: RegisterParams,
    pub aggregate: AggregateParams,
    pub max_fruitless: usize,
    pub reconfigure_retries: usize,
    pub criteria: PoseMatchCriterion,
    pub iou_threshold: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sl = SelfLearnParams::default();
        PipelineConfig {
            model_dir: None,
            builtin_models: BuiltinModels::Standard,
            model_samples: DEFAULT_SAMPLES,
            surface: SurfaceSpec::default(),
            cameras: CameraRig::default(),
            intrinsics: Intrinsics::centered(640, 480, 525.0),
            n: 100,
            n_prime: 200,
            objects_per_scene: (3, 6),
            physics: PhysicsParams::default(),
            lighting: LightingRanges::default(),
            min_visibility: DEFAULT_MIN_VISIBILITY,
            detector: MockDetectorParams::default(),
            register: sl.register,
            aggregate: sl.aggregate,
            max_fruitless: sl.max_fruitless,
            reconfigure_retries: sl.reconfigure_retries,
            criteria: PoseMatchCriterion::default(),
            iou_threshold: 0.5,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("config", r));
        if self.n == 0 || self.n_prime == 0 {
            return bad("n and n_prime must be positive");
        }
        if let Some(dir) = &self.model_dir {
            if !dir.is_dir() {
                return Err(Error::MissingFile { path: dir.clone() });
            }
        }
        if self.cameras.poses.is_empty() && self.cameras.views < 2 {
            return bad("at least two camera views are required");
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return bad("iou_threshold must lie in [0, 1]");
        }
        self.intrinsics.validate()?;
        self.surface.validate()?;
        self.criteria.validate()?;
        self.detector.validate()?;
        self.selflearn_params().validate()
    }

    pub fn library(&self) -> Result<ModelLibrary> {
        match &self.model_dir {
            Some(dir) => ModelLibrary::load_dir(dir, self.model_samples),
            None => Ok(match self.builtin_models {
                BuiltinModels::Standard => ModelLibrary::builtin(),
                BuiltinModels::Asymmetric => ModelLibrary::asymmetric(),
            }),
        }
    }

    pub fn camera_list(&self) -> Result<Vec<Camera>> {
        if self.cameras.poses.is_empty() {
            let target = self.surface.pose.translation;
            Camera::quarter_sphere(self.intrinsics, target, self.surface.up(), self.cameras.radius, self.cameras.views)
        } else {
            Ok(self.cameras.poses.iter().map(|p| Camera::new(self.intrinsics, *p)).collect())
        }
    }

    pub fn selflearn_params(&self) -> SelfLearnParams {
        SelfLearnParams {
            aggregate: self.aggregate.clone(),
            register: self.register.clone(),
            min_visibility: self.min_visibility,
            max_fruitless: self.max_fruitless,
            physics: self.physics.clone(),
            reconfigure_retries: self.reconfigure_retries,
            seed: self.seed,
        }
    }
}
