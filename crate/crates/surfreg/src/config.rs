//! Run configuration (flat JSON, CLI flags override it) and the JSON run
//! report.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use surfreg_core::arap::ArapConfig;
use surfreg_core::energy::{EnergyBreakdown, Weights, DEFAULT_TIKHONOV};
use surfreg_core::rigid::{RegistrationResult, RigidConfig};
use surfreg_core::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rigid,
    Arap,
}

impl Mode {
    pub fn default_iters(self) -> usize {
        match self {
            Mode::Rigid => 50,
            Mode::Arap => 100,
        }
    }
}

/// Every field optional, as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub w3: Option<f64>,
    pub w4: Option<f64>,
    pub tikhonov: Option<f64>,
    pub max_iters: Option<usize>,
    pub stop_tol: Option<f64>,
    pub seed: Option<u64>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Fields set in `other` win.
    pub fn overridden_by(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            mode: other.mode.or(self.mode),
            w1: other.w1.or(self.w1),
            w2: other.w2.or(self.w2),
            w3: other.w3.or(self.w3),
            w4: other.w4.or(self.w4),
            tikhonov: other.tikhonov.or(self.tikhonov),
            max_iters: other.max_iters.or(self.max_iters),
            stop_tol: other.stop_tol.or(self.stop_tol),
            seed: other.seed.or(self.seed),
            source: other.source.or(self.source),
            target: other.target.or(self.target),
            output: other.output.or(self.output),
            log: other.log.or(self.log),
        }
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub tikhonov: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub seed: u64,
    pub source: PathBuf,
    pub target: PathBuf,
    pub output: PathBuf,
    pub log: Option<PathBuf>,
}

impl RunConfig {
    /// Applies defaults; `Err` names the first missing path.
    pub fn resolve(file: ConfigFile, mode: Mode) -> Result<RunConfig, &'static str> {
        Ok(RunConfig {
            mode,
            w1: file.w1.unwrap_or(1.0),
            w2: file.w2.unwrap_or(1.0),
            w3: file.w3.unwrap_or(1.0),
            w4: file.w4.unwrap_or(0.0),
            tikhonov: file.tikhonov.unwrap_or(DEFAULT_TIKHONOV),
            max_iters: file.max_iters.unwrap_or(mode.default_iters()),
            stop_tol: file.stop_tol.unwrap_or(1e-6),
            seed: file.seed.unwrap_or(0),
            source: file.source.ok_or("--source")?,
            target: file.target.ok_or("--target")?,
            output: file.output.ok_or("--out")?,
            log: file.log,
        })
    }

    pub fn weights(&self) -> Weights {
        Weights {
            w1: self.w1,
            w2: self.w2,
            w3: match self.mode {
                Mode::Rigid => 0.0,
                Mode::Arap => self.w3,
            },
            w4: self.w4,
            tikhonov: self.tikhonov,
        }
    }

    pub fn point_to_plane(&self) -> bool {
        self.w4 > 0.0
    }

    pub fn rigid(&self) -> RigidConfig {
        RigidConfig {
            weights: self.weights(),
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            use_point_to_plane: self.point_to_plane(),
        }
    }

    pub fn arap(&self) -> ArapConfig {
        ArapConfig {
            weights: self.weights(),
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            use_point_to_plane: self.point_to_plane(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energies {
    pub e_fit: f64,
    pub e_rigid: f64,
    pub e_arap: f64,
    pub e_plane: f64,
    pub e_total: f64,
}

impl From<&EnergyBreakdown> for Energies {
    fn from(e: &EnergyBreakdown) -> Self {
        Energies {
            e_fit: e.e_fit,
            e_rigid: e.e_rigid,
            e_arap: e.e_arap,
            e_plane: e.e_plane,
            e_total: e.e_total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformJson {
    /// Row-major 3×3.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for TransformJson {
    fn from(t: &RigidTransform) -> Self {
        let r = t.rotation.rows;
        TransformJson {
            rotation: [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]],
            translation: t.translation.to_array(),
        }
    }
}

impl TransformJson {
    pub fn to_transform(&self) -> RigidTransform {
        let r = self.rotation;
        RigidTransform::new(
            surfreg_core::Matrix3::new([[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]]),
            surfreg_core::Vec3::from_array(self.translation),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub iterations: usize,
    pub converged: bool,
    pub final_energies: Option<Energies>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformJson>,
    pub rmsd: f64,
    pub config: RunConfig,
}

impl Report {
    pub fn new(config: &RunConfig, result: &RegistrationResult) -> Report {
        Report {
            mode: config.mode,
            iterations: result.iterations(),
            converged: result.converged,
            final_energies: result.reports.last().map(|r| Energies::from(&r.energies)),
            transform: Some(TransformJson::from(&result.transform)),
            rmsd: result.final_rmsd(),
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Contents of `ground_truth.json` written by the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub ground_truth: Option<TransformJson>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file = ConfigFile::from_json(r#"{"w1": 2.0, "max_iters": 7, "source": "a.obj"}"#).unwrap();
        let flags = ConfigFile { w1: Some(3.0), target: Some("b.obj".into()), output: Some("c.obj".into()), ..Default::default() };
        let cfg = RunConfig::resolve(file.overridden_by(flags), Mode::Rigid).unwrap();
        assert_eq!(cfg.w1, 3.0);
        assert_eq!(cfg.max_iters, 7);
        assert_eq!(cfg.source, PathBuf::from("a.obj"));
        assert_eq!(cfg.w4, 0.0);
    }

    #[test]
    fn defaults_follow_mode() {
        let paths = ConfigFile {
            source: Some("a".into()),
            target: Some("b".into()),
            output: Some("c".into()),
            ..Default::default()
        };
        assert_eq!(RunConfig::resolve(paths.clone(), Mode::Rigid).unwrap().max_iters, 50);
        assert_eq!(RunConfig::resolve(paths, Mode::Arap).unwrap().max_iters, 100);
        assert_eq!(RunConfig::resolve(ConfigFile::default(), Mode::Rigid).unwrap_err(), "--source");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::from_json(r#"{"w5": 1}"#).is_err());
    }

    #[test]
    fn transform_json_round_trips() {
        let t = surfreg_core::synth::random_rigid(4, 0.5, 2.0);
        assert_eq!(TransformJson::from(&t).to_transform(), t);
    }
}
