//! Run configuration: a flat TOML file whose keys mirror the command-line
//! flags. Unset keys fall back to the recommended defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, default_z_planes};
use crate::net::DEFAULT_WIDTHS;
use crate::objective::{DiffusionTensor, Estimator, ObjectiveSpec};
use crate::slice_data::validate_threshold;
use crate::trainer::TrainConfig;

pub const DEFAULT_THRESHOLD: f64 = 0.75;
pub const DEFAULT_PENALTY: f64 = 1000.0;
pub const DEFAULT_EPS_XY: f64 = 1.0;
pub const DEFAULT_EPS_Z: f64 = 5.0;
pub const DEFAULT_BATCH: usize = 5000;
pub const DEFAULT_EPOCHS: usize = 5000;
pub const DEFAULT_PROBE: usize = 50;
pub const DEFAULT_MESH: usize = 100;

/// Every setting a run can take, all optional. Used both for config files
/// and for command-line overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    pub geometry: Option<String>,
    pub manifest: Option<PathBuf>,
    pub slices: Option<usize>,
    pub points_per_plane: Option<usize>,
    pub sigma: Option<f64>,
    pub z_planes: Option<Vec<f64>>,
    pub threshold: Option<f64>,
    pub widths: Option<Vec<usize>>,
    pub penalty: Option<f64>,
    pub eps_x: Option<f64>,
    pub eps_y: Option<f64>,
    pub eps_z: Option<f64>,
    pub batch_size: Option<usize>,
    pub estimator: Option<String>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub log_every: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub reproducible: Option<bool>,
    pub seed: Option<u64>,
    pub probe_resolution: Option<usize>,
    pub mesh_resolution: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunOverrides {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunOverrides =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // A relative manifest path is relative to the config file.
        if let (Some(m), Some(dir)) = (&cfg.manifest, path.parent()) {
            if m.is_relative() {
                cfg.manifest = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }

    /// Values set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RunOverrides) {
        overlay!(self, other;
            geometry, manifest, slices, points_per_plane, sigma, z_planes, threshold, widths,
            penalty, eps_x, eps_y, eps_z, batch_size, estimator, epochs, learning_rate,
            adam_beta1, adam_beta2, adam_eps, log_every, checkpoint_every, reproducible, seed,
            probe_resolution, mesh_resolution,
        );
    }
}

/// Where slice data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Geometry {
        name: String,
        slices: usize,
        points_per_plane: usize,
        sigma: f64,
        z_planes: Vec<f64>,
    },
}

/// A fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub threshold: f64,
    pub widths: Vec<usize>,
    pub objective: ObjectiveSpec,
    pub train: TrainConfig,
    pub probe_resolution: usize,
    pub mesh_resolution: usize,
}

impl RunConfig {
    /// Resolve defaults. With a catalog geometry, unset data settings,
    /// cutoff, `ε_z` and hidden width take the geometry's reference values;
    /// everything else takes the recommended defaults.
    pub fn resolve(o: &RunOverrides) -> Result<Self> {
        let reference = match &o.geometry {
            Some(name) => Some(geometry::lookup(name)?.defaults),
            None => None,
        };
        let source = match (&o.manifest, &o.geometry) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either a manifest or a geometry, not both".into()));
            }
            (Some(m), None) => DataSource::Manifest(m.clone()),
            (None, Some(name)) => {
                let g = geometry::lookup(name)?;
                let slices = o.slices.unwrap_or(g.defaults.slices);
                let z_planes = o.z_planes.clone().unwrap_or_else(|| default_z_planes(slices));
                if z_planes.len() != slices {
                    return Err(Error::Config(format!(
                        "{} slice heights given for {slices} slices",
                        z_planes.len()
                    )));
                }
                DataSource::Geometry {
                    name: name.clone(),
                    slices,
                    points_per_plane: o.points_per_plane.unwrap_or(g.defaults.points_per_plane),
                    sigma: o.sigma.unwrap_or(g.defaults.sigma),
                    z_planes,
                }
            }
            (None, None) => return Err(Error::Config("no data source: give a manifest or a geometry".into())),
        };
        let threshold = o.threshold.unwrap_or(reference.map_or(DEFAULT_THRESHOLD, |d| d.threshold));
        validate_threshold(threshold)?;
        let estimator = match &o.estimator {
            Some(s) => s.parse()?,
            None => Estimator::MonteCarlo,
        };
        let objective = ObjectiveSpec {
            penalty: o.penalty.unwrap_or(DEFAULT_PENALTY),
            diffusion: DiffusionTensor::new(
                o.eps_x.unwrap_or(DEFAULT_EPS_XY),
                o.eps_y.unwrap_or(DEFAULT_EPS_XY),
                o.eps_z.unwrap_or(reference.map_or(DEFAULT_EPS_Z, |d| d.eps_z)),
            )?,
            batch_size: o.batch_size.unwrap_or(DEFAULT_BATCH),
            estimator,
        };
        objective.validate()?;
        let base = TrainConfig::default();
        let reproducible = o.reproducible.unwrap_or(false);
        let train = TrainConfig {
            epochs: o.epochs.unwrap_or(DEFAULT_EPOCHS),
            learning_rate: o.learning_rate.unwrap_or(base.learning_rate),
            adam_beta1: o.adam_beta1.unwrap_or(base.adam_beta1),
            adam_beta2: o.adam_beta2.unwrap_or(base.adam_beta2),
            adam_eps: o.adam_eps.unwrap_or(base.adam_eps),
            seed: o.seed.unwrap_or(0),
            log_every: o.log_every.unwrap_or(base.log_every),
            record_time: !reproducible,
            checkpoint: None,
            checkpoint_every: o.checkpoint_every.unwrap_or(0),
        };
        train.validate()?;
        if i64::try_from(train.seed).is_err() {
            return Err(Error::Config(format!("seed must be below 2^63, got {}", train.seed)));
        }
        let widths = o.widths.clone().unwrap_or_else(|| match reference {
            Some(d) => vec![3, d.hidden_width, d.hidden_width, 1],
            None => DEFAULT_WIDTHS.to_vec(),
        });
        crate::net::PhaseFieldNet::zeros(&widths)?;
        let probe_resolution = o.probe_resolution.unwrap_or(DEFAULT_PROBE);
        let mesh_resolution = o.mesh_resolution.unwrap_or(DEFAULT_MESH);
        if probe_resolution < 2 || mesh_resolution < 2 {
            return Err(Error::Config("probe and mesh resolutions must be at least 2".into()));
        }
        Ok(RunConfig {
            source,
            threshold,
            widths,
            objective,
            train,
            probe_resolution,
            mesh_resolution,
        })
    }

    pub fn reproducible(&self) -> bool {
        !self.train.record_time
    }

    /// Every setting spelled out, so that the run can be repeated exactly.
    pub fn to_overrides(&self) -> RunOverrides {
        let [ex, ey, ez] = self.objective.diffusion.components();
        let mut o = RunOverrides {
            threshold: Some(self.threshold),
            widths: Some(self.widths.clone()),
            penalty: Some(self.objective.penalty),
            eps_x: Some(ex),
            eps_y: Some(ey),
            eps_z: Some(ez),
            batch_size: Some(self.objective.batch_size),
            estimator: Some(self.objective.estimator.to_string()),
            epochs: Some(self.train.epochs),
            learning_rate: Some(self.train.learning_rate),
            adam_beta1: Some(self.train.adam_beta1),
            adam_beta2: Some(self.train.adam_beta2),
            adam_eps: Some(self.train.adam_eps),
            log_every: Some(self.train.log_every),
            checkpoint_every: Some(self.train.checkpoint_every),
            reproducible: Some(self.reproducible()),
            seed: Some(self.train.seed),
            probe_resolution: Some(self.probe_resolution),
            mesh_resolution: Some(self.mesh_resolution),
            ..Default::default()
        };
        match &self.source {
            DataSource::Manifest(p) => o.manifest = Some(std::path::absolute(p).unwrap_or_else(|_| p.clone())),
            DataSource::Geometry {
                name,
                slices,
                points_per_plane,
                sigma,
                z_planes,
            } => {
                o.geometry = Some(name.clone());
                o.slices = Some(*slices);
                o.points_per_plane = Some(*points_per_plane);
                o.sigma = Some(*sigma);
                o.z_planes = Some(z_planes.clone());
            }
        }
        o
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_overrides()).expect("run config serializes")
    }
}
