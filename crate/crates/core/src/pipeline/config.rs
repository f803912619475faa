use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::dense::{PhotoConsistencyConfig, ZnccMatcher};
use crate::euclidean::IcpConfig;
use crate::features::DetectorConfig;
use crate::geometry::RansacConfig;
use crate::sfm::{BaConfig, SfmConfig};
use crate::synthetic::{SceneSpec, SynthOptions};

/// Everything a run depends on. Loaded from TOML; every section and field is
/// optional. Relative paths are resolved against the workspace root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every random choice of the run: RANSAC sampling and the
    /// synthetic generator.
    pub seed: u64,
    pub input: InputConfig,
    pub synth: SynthConfig,
    pub tiling: TilingConfig,
    pub matcher: MatcherConfig,
    pub sfm: SfmSection,
    pub ransac: RansacSection,
    pub ba: BaConfig,
    pub dense: DenseConfig,
    pub upgrade: UpgradeConfig,
    pub fuse: FuseConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Directory of `.pgm`/`.png` images with `.meta.json` sidecars.
    pub images: PathBuf,
    pub gcps: PathBuf,
    /// Reference DEM for the eval stage; evaluation is skipped without it.
    pub truth_dem: Option<PathBuf>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            images: "synth/images".into(),
            gcps: "synth/gcps.csv".into(),
            truth_dem: Some("synth/truth_dem.asc".into()),
        }
    }
}

/// Scene and sensor of the `synth` command. Tile size and seed come from
/// `tiling.size` and the top-level seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub out: PathBuf,
    /// Stereo pairs; pairs are captured 60 days apart.
    pub groups: usize,
    pub gsd: f64,
    /// Perspective cross-track projection; orthographic when false.
    pub perspective: bool,
    pub extent: (f64, f64),
    pub harmonics: usize,
    pub amplitude: f64,
    pub buildings: usize,
    pub building_height: (f64, f64),
    pub sigma: f64,
    pub outlier_fraction: f64,
    pub sparse_points: usize,
    pub gcp_count: usize,
    pub dem_cell: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            out: "synth".into(),
            groups: 1,
            gsd: 0.5,
            perspective: false,
            extent: (60.0, 60.0),
            harmonics: 5,
            amplitude: 6.0,
            buildings: 0,
            building_height: (4.0, 10.0),
            sigma: 0.0,
            outlier_fraction: 0.0,
            sparse_points: 600,
            gcp_count: 4,
            dem_cell: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn scene(&self, seed: u64) -> SceneSpec {
        SceneSpec {
            extent: self.extent,
            harmonics: self.harmonics,
            amplitude: self.amplitude,
            buildings: self.buildings,
            building_height: self.building_height,
            seed,
        }
    }

    pub fn options(&self, tile_size: usize, seed: u64) -> SynthOptions {
        SynthOptions {
            tile_size,
            sigma: self.sigma,
            outlier_fraction: self.outlier_fraction,
            sparse_points: self.sparse_points,
            gcp_count: self.gcp_count,
            dem_cell: self.dem_cell,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilingConfig {
    /// Requested tile side; rounded down to a multiple of 3.
    pub size: usize,
    pub max_gap_days: f64,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self {
            size: 120,
            max_gap_days: 15.0,
        }
    }
}

impl TilingConfig {
    /// Tile side actually used.
    pub fn effective_size(&self) -> usize {
        self.size - self.size % 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatcherKind {
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub kind: MatcherKind,
    /// Distance-ratio test of the built-in matcher.
    pub ratio: f32,
    pub detector: DetectorConfig,
    /// External sparse match CSV.
    pub sparse: Option<PathBuf>,
    /// External dense match CSV; the dense stage runs the built-in stereo
    /// matcher when absent.
    pub dense: Option<PathBuf>,
    /// Tile size the external matches were produced with.
    pub tile_size: Option<usize>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            kind: MatcherKind::Builtin,
            ratio: 0.8,
            detector: DetectorConfig::default(),
            sparse: None,
            dense: None,
            tile_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfmSection {
    pub min_pair_matches: usize,
    pub global_every: usize,
}

impl Default for SfmSection {
    fn default() -> Self {
        let d = SfmConfig::default();
        Self {
            min_pair_matches: d.min_pair_matches,
            global_every: d.global_every,
        }
    }
}

/// RANSAC settings without the seed, which is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacSection {
    pub max_iterations: usize,
    pub inlier_threshold: f64,
    pub min_inlier_ratio: f64,
}

impl Default for RansacSection {
    fn default() -> Self {
        let d = RansacConfig::default();
        Self {
            max_iterations: d.max_iterations,
            inlier_threshold: d.inlier_threshold,
            min_inlier_ratio: d.min_inlier_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseConfig {
    pub zncc: ZnccMatcher,
    pub photo: PhotoConsistencyConfig,
    /// Disparity search margin around the sparse range, pixels.
    pub margin: i32,
    /// Sampling step of lifted disparities, pixels.
    pub stride: usize,
    /// Tile pairs with fewer sparse matches are not densely matched.
    pub min_pair_matches: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            zncc: ZnccMatcher::default(),
            photo: PhotoConsistencyConfig::default(),
            margin: crate::dense::DEFAULT_MARGIN,
            stride: 2,
            min_pair_matches: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpgradeConfig {
    /// GCP inlier threshold of the RANSAC fit, metres.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
}

impl Default for UpgradeConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 1.0,
            max_iterations: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuseConfig {
    pub icp: IcpConfig,
    /// Thinning voxel of the fused cloud, metres.
    pub voxel_size: f64,
}

impl Default for FuseConfig {
    fn default() -> Self {
        Self {
            icp: IcpConfig::default(),
            voxel_size: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// DEM cell size, metres. Must equal the truth DEM's cell.
    pub gsd: f64,
    /// Completeness threshold, metres.
    pub threshold: f64,
    /// Largest whole-cell shift tried when aligning the DEMs.
    pub max_shift: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gsd: 1.0,
            threshold: 1.0,
            max_shift: 2,
        }
    }
}

fn invalid(message: String) -> PipelineError {
    PipelineError::new("config", "ConfigError", message)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new("config", "IoError", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let geo = |e: crate::geometry::GeometryError| invalid(e.to_string());
        if self.tiling.size < 3 {
            return Err(invalid(format!("tile size {} is below 3", self.tiling.size)));
        }
        if !(self.tiling.max_gap_days > 0.0) {
            return Err(invalid("tiling.max_gap_days must be positive".into()));
        }
        if self.matcher.kind == MatcherKind::External {
            if self.matcher.sparse.is_none() {
                return Err(invalid("external matcher needs matcher.sparse".into()));
            }
            match self.matcher.tile_size {
                None => return Err(invalid("external matcher needs matcher.tile_size".into())),
                Some(d) if d != self.tiling.effective_size() => {
                    return Err(invalid(format!(
                        "external matches were made with tile size {d}, run uses {}",
                        self.tiling.effective_size()
                    )))
                }
                _ => {}
            }
        }
        if !(self.matcher.ratio > 0.0 && self.matcher.ratio <= 1.0) {
            return Err(invalid("matcher.ratio must lie in (0, 1]".into()));
        }
        self.ransac_config(0).validate().map_err(geo)?;
        self.ba.validate().map_err(geo)?;
        self.fuse.icp.validate().map_err(geo)?;
        self.upgrade_ransac().validate().map_err(geo)?;
        let z = &self.dense.zncc;
        if z.window < 3 || z.window.is_multiple_of(2) {
            return Err(invalid(format!("dense.zncc.window {} must be odd and >= 3", z.window)));
        }
        if self.dense.stride == 0 {
            return Err(invalid("dense.stride must be >= 1".into()));
        }
        if !(self.dense.photo.max_intensity_std >= 0.0) {
            return Err(invalid("dense.photo.max_intensity_std must be >= 0".into()));
        }
        if !(self.fuse.voxel_size > 0.0 && self.fuse.voxel_size.is_finite()) {
            return Err(invalid("fuse.voxel_size must be positive".into()));
        }
        if !(self.eval.gsd > 0.0 && self.eval.gsd.is_finite()) {
            return Err(invalid("eval.gsd must be positive".into()));
        }
        if !(self.eval.threshold > 0.0) {
            return Err(invalid("eval.threshold must be positive".into()));
        }
        if !(self.synth.gsd > 0.0) || self.synth.groups == 0 {
            return Err(invalid("synth needs gsd > 0 and at least one group".into()));
        }
        Ok(())
    }

    /// Image-space RANSAC settings; `salt` separates independent streams.
    pub fn ransac_config(&self, salt: u64) -> RansacConfig {
        RansacConfig {
            max_iterations: self.ransac.max_iterations,
            inlier_threshold: self.ransac.inlier_threshold,
            min_inlier_ratio: self.ransac.min_inlier_ratio,
            seed: self.seed.wrapping_add(salt),
        }
    }

    pub fn sfm_config(&self) -> SfmConfig {
        SfmConfig {
            min_pair_matches: self.sfm.min_pair_matches,
            global_every: self.sfm.global_every,
            ransac: self.ransac_config(0),
            ba: self.ba,
        }
    }

    pub fn upgrade_ransac(&self) -> RansacConfig {
        RansacConfig {
            max_iterations: self.upgrade.max_iterations,
            inlier_threshold: self.upgrade.inlier_threshold,
            min_inlier_ratio: RansacConfig::default().min_inlier_ratio,
            seed: self.seed,
        }
    }

    /// The parts of the config `stage` reads, as canonical JSON.
    fn stage_slice(&self, stage: &str) -> serde_json::Value {
        use serde_json::json;
        match stage {
            "synth" => json!({"seed": self.seed, "synth": self.synth, "tile_size": self.tiling.effective_size()}),
            "group" => json!({"input": self.input.images, "max_gap_days": self.tiling.max_gap_days}),
            "tile" => json!({"tile_size": self.tiling.effective_size()}),
            "match" => json!({"matcher": self.matcher}),
            "sfm" => json!({"seed": self.seed, "sfm": self.sfm, "ransac": self.ransac, "ba": self.ba}),
            "dense" => json!({"seed": self.seed, "dense": self.dense, "ransac": self.ransac, "ba": self.ba}),
            "upgrade" => json!({"seed": self.seed, "upgrade": self.upgrade, "gcps": self.input.gcps}),
            "fuse" => json!({"fuse": self.fuse}),
            "eval" => json!({"eval": self.eval, "truth_dem": self.input.truth_dem}),
            _ => serde_json::to_value(self).expect("config serializes"),
        }
    }

    /// SHA-256 of the config slice a stage depends on.
    pub fn stage_hash(&self, stage: &str) -> String {
        let bytes = serde_json::to_vec(&self.stage_slice(stage)).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }

    /// SHA-256 of the whole config.
    pub fn hash(&self) -> String {
        self.stage_hash("")
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
