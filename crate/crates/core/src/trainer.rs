//! ADAM minimization of the reconstruction objective, and parameter sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::net::{ParameterGradient, PhaseFieldNet};
use crate::objective::{DiffusionTensor, Estimator, Objective, ObjectiveSpec, ObjectiveValue};
use crate::rng::{self, Stage};
use crate::slice_data::{assign_phases, PhaseLabels, SliceStack};
use crate::volume::ComponentReport;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Record wall-clock times in the log. Off in reproducible runs so that
    /// logs are bit-identical.
    pub record_time: bool,
    /// Write the net here every `checkpoint_every` epochs (0: only at the end).
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5000,
            learning_rate: 5e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            log_every: 10,
            record_time: true,
            checkpoint: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !open_unit(self.adam_beta1) || !open_unit(self.adam_beta2) {
            return Err(Error::Config(format!(
                "ADAM betas must lie in (0, 1), got {} and {}",
                self.adam_beta1, self.adam_beta2
            )));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::Config(format!("ADAM epsilon must be positive, got {}", self.adam_eps)));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log interval must be at least 1".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }
}

/// One bias-corrected ADAM update. On failure neither `net` nor `state` changes.
pub fn adam_step(
    net: &mut PhaseFieldNet,
    grad: &ParameterGradient,
    state: &mut AdamState,
    params: &AdamParams,
    epoch: usize,
) -> Result<()> {
    assert_eq!(grad.len(), state.m.len(), "ADAM state does not match the parameters");
    let steps = state.steps + 1;
    let c1 = 1.0 - params.beta1.powi(steps as i32);
    let c2 = 1.0 - params.beta2.powi(steps as i32);
    let mut theta = net.params();
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    for i in 0..theta.len() {
        let g = grad.0[i];
        m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * g;
        v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g * g;
        theta[i] -= params.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + params.eps);
    }
    let finite = |x: &[f64]| x.iter().all(|v| v.is_finite());
    if !(finite(&theta) && finite(&m) && finite(&v)) {
        return Err(Error::NonFiniteUpdate { epoch });
    }
    net.set_params(&theta);
    state.m = m;
    state.v = v;
    state.steps = steps;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub total: f64,
    pub regression: f64,
    pub energy: f64,
    /// Milliseconds since training started.
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    /// Total training wall-clock time in seconds.
    pub seconds: f64,
}

impl TrainLog {
    pub fn first(&self) -> Option<&LogRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,regression,energy,ms\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{:.3}", r.epoch, r.total, r.regression, r.energy, r.ms);
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_csv().as_bytes())
    }

    /// Mean regression term over the first and last `fraction` of records.
    pub fn regression_trend(&self, fraction: f64) -> Option<(f64, f64)> {
        let n = self.records.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        if n < 2 {
            return None;
        }
        let mean = |rs: &[LogRecord]| rs.iter().map(|r| r.regression).sum::<f64>() / rs.len() as f64;
        Some((mean(&self.records[..k]), mean(&self.records[n - k..])))
    }
}

/// Seed of the batch stream; epoch `e` draws from stream `e` of it.
pub fn batch_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, Stage::Batches)
}

pub fn init_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, Stage::Init)
}

/// Run `tc.epochs` ADAM steps on `net`, appending to `log`.
///
/// Record `e` holds the objective at the parameters before update `e`,
/// evaluated on epoch `e`'s batch; a final record is taken after the last
/// update. On error, `net` holds the last finite parameters and `log` the
/// records so far.
pub fn train(
    net: &mut PhaseFieldNet,
    objective: &mut Objective,
    tc: &TrainConfig,
    log: &mut TrainLog,
    mut observe: impl FnMut(&LogRecord),
) -> Result<()> {
    tc.validate()?;
    let adam = tc.adam();
    let stream_seed = batch_seed(tc.seed);
    let mut state = AdamState::new(net.param_count());
    let mut grad = ParameterGradient::zeros(net.param_count());
    let start = Instant::now();
    let result = (|| {
        for epoch in 0..=tc.epochs {
            let mut batch_rng = rng::stream_rng(stream_seed, epoch as u64);
            let stepping = epoch < tc.epochs;
            let value = if stepping {
                grad.0.fill(0.0);
                objective.evaluate_with_gradient(net, &mut batch_rng, &mut grad)?
            } else {
                objective.evaluate(net, &mut batch_rng)?
            };
            if epoch % tc.log_every == 0 || !stepping {
                let ms = if tc.record_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                let record = record(epoch, value, ms);
                log.records.push(record);
                observe(&record);
            }
            if stepping {
                adam_step(net, &grad, &mut state, &adam, epoch)?;
                if let Some(path) = &tc.checkpoint {
                    if tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 {
                        net.save(path)?;
                    }
                }
            }
        }
        Ok(())
    })();
    log.seconds = if tc.record_time { start.elapsed().as_secs_f64() } else { 0.0 };
    if let Some(path) = &tc.checkpoint {
        net.save(path)?;
    }
    result
}

fn record(epoch: usize, value: ObjectiveValue, ms: f64) -> LogRecord {
    LogRecord {
        epoch,
        total: value.total,
        regression: value.regression,
        energy: value.energy,
        ms,
    }
}

/// Label the slices, initialize a net from the seed, and train it.
pub fn reconstruct(
    stack: &SliceStack,
    threshold: f64,
    widths: &[usize],
    spec: &ObjectiveSpec,
    tc: &TrainConfig,
) -> Result<(PhaseFieldNet, TrainLog)> {
    let labels = assign_phases(stack, threshold)?;
    reconstruct_labels(&labels, widths, spec, tc)
}

pub fn reconstruct_labels(
    labels: &PhaseLabels,
    widths: &[usize],
    spec: &ObjectiveSpec,
    tc: &TrainConfig,
) -> Result<(PhaseFieldNet, TrainLog)> {
    let mut objective = Objective::new(labels, *spec)?;
    let mut net = PhaseFieldNet::init(widths, init_seed(tc.seed))?;
    let mut log = TrainLog::default();
    train(&mut net, &mut objective, tc, &mut log, |_| {})?;
    Ok((net, log))
}

/// One row of a parameter study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSetting {
    pub id: usize,
    pub eps_xy: f64,
    pub eps_z: f64,
    pub penalty: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl SweepSetting {
    pub fn spec(&self, estimator: Estimator) -> Result<ObjectiveSpec> {
        let spec = ObjectiveSpec {
            penalty: self.penalty,
            diffusion: DiffusionTensor::new(self.eps_xy, self.eps_xy, self.eps_z)?,
            batch_size: self.batch_size,
            estimator,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The nine hourglass settings of the reference parameter study.
pub fn table1() -> Vec<SweepSetting> {
    let row = |id, eps_z, penalty, batch_size, epochs| SweepSetting {
        id,
        eps_xy: 1.0,
        eps_z,
        penalty,
        batch_size,
        epochs,
    };
    vec![
        row(1, 1.0, 10.0, 5000, 5000),
        row(2, 0.1, 1000.0, 5000, 5000),
        row(3, 100.0, 1000.0, 5000, 5000),
        row(4, 5.0, 1000.0, 5000, 5000),
        row(5, 5.0, 2500.0, 5000, 5000),
        row(6, 5.0, 1000.0, 10000, 5000),
        row(7, 5.0, 1000.0, 5000, 10000),
        row(8, 2.5, 2500.0, 2500, 10000),
        row(9, 2.5, 2500.0, 10000, 2500),
    ]
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SweepFile {
    #[serde(default, rename = "setting")]
    settings: Vec<SweepSetting>,
}

/// Parse a sweep table: a TOML list of `[[setting]]` tables.
pub fn parse_sweep_table(text: &str) -> Result<Vec<SweepSetting>> {
    let file: SweepFile = toml::from_str(text).map_err(|e| Error::Format(format!("sweep table: {e}")))?;
    Ok(file.settings)
}

pub fn sweep_table_to_toml(settings: &[SweepSetting]) -> String {
    let file = SweepFile {
        settings: settings.to_vec(),
    };
    toml::to_string(&file).expect("sweep settings serialize")
}

/// Shared configuration of every run in a sweep.
#[derive(Clone, Debug)]
pub struct SweepBase {
    pub widths: Vec<usize>,
    pub estimator: Estimator,
    /// Epochs and batch size are taken from each setting; the seed of setting
    /// `id` is derived from this config's seed and `id`.
    pub train: TrainConfig,
    pub probe_resolution: usize,
    pub section_zs: Vec<f64>,
    pub section_resolution: usize,
}

#[derive(Debug)]
pub struct SweepRun {
    pub net: PhaseFieldNet,
    pub log: TrainLog,
    pub report: ComponentReport,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub setting: SweepSetting,
    pub result: Result<SweepRun>,
}

/// Top-level seed of sweep setting `id`. Kept below 2⁶³ so it fits a config file integer.
pub fn setting_seed(seed: u64, id: usize) -> u64 {
    rng::derive_indexed(seed, id as u64) >> 1
}

/// Reconstruct once per setting. Failures are recorded and the sweep goes on.
pub fn sweep(
    labels: &PhaseLabels,
    base: &SweepBase,
    table: &[SweepSetting],
    mut on_done: impl FnMut(&SweepOutcome),
) -> Vec<SweepOutcome> {
    table
        .iter()
        .map(|setting| {
            let result = (|| {
                let spec = setting.spec(base.estimator)?;
                let tc = TrainConfig {
                    epochs: setting.epochs,
                    seed: setting_seed(base.train.seed, setting.id),
                    checkpoint: None,
                    ..base.train.clone()
                };
                let (net, log) = reconstruct_labels(labels, &base.widths, &spec, &tc)?;
                let report =
                    ComponentReport::analyze(&net, base.probe_resolution, &base.section_zs, base.section_resolution)?;
                Ok(SweepRun { net, log, report })
            })();
            let outcome = SweepOutcome {
                setting: *setting,
                result,
            };
            on_done(&outcome);
            outcome
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cylinder, default_z_planes, sample_noiseless};
    use crate::objective::total_objective;

    fn small_setup() -> (PhaseLabels, ObjectiveSpec) {
        let stack = sample_noiseless(cylinder, 2, 64, &default_z_planes(2)).unwrap();
        let labels = assign_phases(&stack, 0.75).unwrap();
        let spec = ObjectiveSpec {
            penalty: 1000.0,
            diffusion: DiffusionTensor::new(1.0, 1.0, 10.0).unwrap(),
            batch_size: 200,
            estimator: Estimator::MonteCarlo,
        };
        (labels, spec)
    }

    fn adam() -> AdamParams {
        TrainConfig::default().adam()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = PhaseFieldNet::init(&[3, 4, 1], 1).unwrap();
        let before = net.params();
        let mut state = AdamState::new(net.param_count());
        let zero = ParameterGradient::zeros(net.param_count());
        for e in 0..5 {
            adam_step(&mut net, &zero, &mut state, &adam(), e).unwrap();
        }
        assert_eq!(net.params(), before);
        assert!(state.m.iter().chain(&state.v).all(|&x| x == 0.0));
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        let mut net = PhaseFieldNet::zeros(&[3, 2, 1]).unwrap();
        let n = net.param_count();
        let grad = ParameterGradient((0..n).map(|i| 0.01 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
        let mut state = AdamState::new(n);
        let mut prev = net.params();
        for e in 0..200 {
            adam_step(&mut net, &grad, &mut state, &adam(), e).unwrap();
            let now = net.params();
            if e == 199 {
                for (a, b) in now.iter().zip(&prev) {
                    assert!(((a - b).abs() - 5e-3).abs() < 0.05 * 5e-3);
                }
            }
            prev = now;
        }
    }

    #[test]
    fn non_finite_update_rejected_without_change() {
        let mut net = PhaseFieldNet::zeros(&[3, 2, 1]).unwrap();
        let mut grad = ParameterGradient::zeros(net.param_count());
        grad.0[0] = f64::INFINITY;
        let mut state = AdamState::new(net.param_count());
        let err = adam_step(&mut net, &grad, &mut state, &adam(), 7).unwrap_err();
        assert!(matches!(err, Error::NonFiniteUpdate { epoch: 7 }));
        assert_eq!(state, AdamState::new(net.param_count()));
        assert!(net.params().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for tc in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { adam_beta1: 1.0, ..Default::default() },
            TrainConfig { adam_beta2: 0.0, ..Default::default() },
            TrainConfig { adam_eps: -1.0, ..Default::default() },
            TrainConfig { log_every: 0, ..Default::default() },
        ] {
            assert!(tc.validate().is_err());
        }
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let (labels, spec) = small_setup();
        let tc = TrainConfig { epochs: 0, ..Default::default() };
        let (net, log) = reconstruct_labels(&labels, &[3, 5, 5, 1], &spec, &tc).unwrap();
        assert_eq!(net, PhaseFieldNet::init(&[3, 5, 5, 1], init_seed(tc.seed)).unwrap());
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].epoch, 0);
    }

    #[test]
    fn training_reduces_objective_and_is_reproducible() {
        let (labels, spec) = small_setup();
        let tc = TrainConfig {
            epochs: 150,
            log_every: 1,
            record_time: false,
            seed: 3,
            ..Default::default()
        };
        let (net, log) = reconstruct_labels(&labels, &[3, 8, 8, 1], &spec, &tc).unwrap();
        let (net2, log2) = reconstruct_labels(&labels, &[3, 8, 8, 1], &spec, &tc).unwrap();
        assert_eq!(net, net2);
        assert_eq!(log.to_csv(), log2.to_csv());
        assert_eq!(log.records.len(), 151);

        // Same-batch comparison of the initial and final parameters.
        let init = PhaseFieldNet::init(&[3, 8, 8, 1], init_seed(tc.seed)).unwrap();
        let mut r0 = rng::stream_rng(batch_seed(tc.seed), 0);
        let mut r1 = rng::stream_rng(batch_seed(tc.seed), 0);
        let before = total_objective(&init, &labels, &spec, &mut r0).unwrap().total;
        let after = total_objective(&net, &labels, &spec, &mut r1).unwrap().total;
        assert!(after < before, "{after} !< {before}");

        let (early, late) = log.regression_trend(0.1).unwrap();
        assert!(late < early);

        // Log integrity: the final record re-evaluates exactly.
        let last = log.last().unwrap();
        let mut r = rng::stream_rng(batch_seed(tc.seed), last.epoch as u64);
        assert_eq!(total_objective(&net, &labels, &spec, &mut r).unwrap().total, last.total);
    }

    #[test]
    fn checkpoints_and_csv() {
        let (labels, spec) = small_setup();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("net.txt");
        let tc = TrainConfig {
            epochs: 12,
            log_every: 5,
            checkpoint: Some(ckpt.clone()),
            checkpoint_every: 5,
            ..Default::default()
        };
        let (net, log) = reconstruct_labels(&labels, &[3, 4, 4, 1], &spec, &tc).unwrap();
        assert_eq!(PhaseFieldNet::load(&ckpt).unwrap(), net);
        let epochs: Vec<usize> = log.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 5, 10, 12]);
        let csv = log.to_csv();
        assert!(csv.starts_with("epoch,total,regression,energy,ms\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn sweep_tables() {
        let t = table1();
        assert_eq!(t.len(), 9);
        assert_eq!(parse_sweep_table(&sweep_table_to_toml(&t)).unwrap(), t);
        assert!(parse_sweep_table("").unwrap().is_empty());
        assert!(parse_sweep_table("[[setting]]\nid = 1\n").is_err());

        let (labels, _) = small_setup();
        let base = SweepBase {
            widths: vec![3, 4, 4, 1],
            estimator: Estimator::MonteCarlo,
            train: TrainConfig::default(),
            probe_resolution: 8,
            section_zs: vec![0.5],
            section_resolution: 8,
        };
        assert!(sweep(&labels, &base, &[], |_| {}).is_empty());
        let mut bad = t[0];
        bad.eps_z = -1.0;
        let small = SweepSetting { epochs: 3, batch_size: 50, ..t[1] };
        let out = sweep(&labels, &base, &[bad, small], |_| {});
        assert!(out[0].result.is_err());
        let run = out[1].result.as_ref().unwrap();
        assert_eq!(run.log.last().unwrap().epoch, 3);
        assert_eq!(run.report.section_areas.len(), 1);
    }
}
