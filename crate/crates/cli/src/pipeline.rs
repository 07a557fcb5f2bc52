//! Config-driven experiment pipeline with cached phases.
//!
//! Artifacts live under `out/<config-hash>/`:
//!
//! ```text
//! config.toml          canonical echo of the parsed config
//! checkpoints/         rf1.ckpt, plus velocity.ckpt / acceleration.ckpt
//! couplings/           stochastic.cplg, training.cplg (+ .csv exports)
//! trajectories/        per-path CSV logs and samples.csv endpoints
//! plots/               trajectories.svg
//! metrics.csv          the metric ledger for this run
//! manifests/           one JSON receipt per completed phase
//! ```
//!
//! A phase is skipped when its manifest matches the current config hash and
//! the recorded input-artifact hashes; `--force` re-runs everything. Phases
//! form a chain, so asking for a late phase pulls the earlier ones through
//! the cache.
//!
//! The model bundle depends on the ablation toggles: with
//! `acceleration_on = false` the pipeline trains a single rectified-flow
//! velocity net on its training coupling (the stochastic coupling, or the
//! reflow coupling when `reflow_on`), reproducing the 1-rectified /
//! 2-rectified baselines exactly. With acceleration on, the velocity net
//! regresses the scaled displacement `h (x1 - x0)` and an acceleration net
//! is trained against the frozen velocity.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use caf_core::data::{
    coupling_to_csv, read_coupling_file, write_coupling_file, Coupling,
};
use caf_core::metrics::{
    coupling_preservation, nfss_caf, nfss_rf, sliced_wasserstein, MetricReport,
};
use caf_core::nn::{read_checkpoint_file, write_checkpoint_file, MlpModel};
use caf_core::sample::{
    invert_caf, reconstruct_caf, reconstruct_rf, sample_caf, sample_rf, MlpAcceleration,
    MlpVelocity, TrajectoryLog,
};
use caf_core::train::{reflow, train, TrainReport, TrainTarget};
use caf_core::{make_stochastic_coupling, sample_distribution};

use crate::config::{fnv1a64, ExperimentConfig};
use crate::plot::plot_trajectories;
use crate::CliError;

// Sub-seed tags so every phase draws from its own stream.
const SEED_STOCHASTIC: u64 = 0x01;
const SEED_RF1: u64 = 0x02;
const SEED_REFLOW: u64 = 0x03;
const SEED_VELOCITY: u64 = 0x04;
const SEED_ACCELERATION: u64 = 0x05;
const SEED_SAMPLE: u64 = 0x06;
const SEED_METRIC_EVAL: u64 = 0x07;
const SEED_METRIC_FLOOR: u64 = 0x08;
const SEED_INVERSION: u64 = 0x09;
const SEED_CI: u64 = 0x0A;

pub struct Pipeline {
    config: ExperimentConfig,
    hash: String,
    root: PathBuf,
    /// `<out>/shared`, a content-addressed store for phases that only
    /// depend on a config subset, so ablation cells reuse each other's
    /// upstream training.
    shared: PathBuf,
    force: bool,
    quiet: bool,
}

/// The trained model bundle a pipeline produces.
pub enum Bundle {
    Rectified(MlpModel),
    ConstantAcceleration {
        velocity: MlpModel,
        acceleration: MlpModel,
        ivc: bool,
    },
}

impl Bundle {
    pub fn endpoint(&self, x0: &[f64], n_steps: usize) -> caf_core::Result<Vec<f64>> {
        match self {
            Bundle::Rectified(model) => {
                Ok(sample_rf(x0, &MlpVelocity { model }, n_steps)?.0)
            }
            Bundle::ConstantAcceleration {
                velocity,
                acceleration,
                ivc,
            } => Ok(sample_caf(
                x0,
                &MlpVelocity { model: velocity },
                &MlpAcceleration {
                    model: acceleration,
                    ivc: *ivc,
                },
                n_steps,
            )?
            .0),
        }
    }

    pub fn trajectory(&self, x0: &[f64], n_steps: usize) -> caf_core::Result<TrajectoryLog> {
        match self {
            Bundle::Rectified(model) => Ok(sample_rf(x0, &MlpVelocity { model }, n_steps)?.1),
            Bundle::ConstantAcceleration {
                velocity,
                acceleration,
                ivc,
            } => Ok(sample_caf(
                x0,
                &MlpVelocity { model: velocity },
                &MlpAcceleration {
                    model: acceleration,
                    ivc: *ivc,
                },
                n_steps,
            )?
            .1),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PhaseManifest {
    phase: String,
    config_hash: String,
    /// `(relative path, fnv1a64 of contents)` for every input artifact.
    inputs: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out_dir: &Path, force: bool) -> Result<Self, CliError> {
        config.validate()?;
        let hash = config.hash();
        let root = out_dir.join(&hash);
        for sub in ["checkpoints", "couplings", "trajectories", "plots", "manifests"] {
            std::fs::create_dir_all(root.join(sub))
                .map_err(CliError::io(format!("creating {}", root.display())))?;
        }
        let canonical = toml::to_string_pretty(&config)
            .map_err(|e| CliError::Config(format!("cannot re-serialize config: {e}")))?;
        std::fs::write(root.join("config.toml"), canonical)
            .map_err(CliError::io("writing config echo"))?;
        let shared = out_dir.join("shared");
        std::fs::create_dir_all(&shared).map_err(CliError::io("creating shared store"))?;
        Ok(Self {
            config,
            hash,
            root,
            shared,
            force,
            quiet: false,
        })
    }

    /// Copies a shared-store artifact into this run's subtree, if present.
    fn adopt_shared(&self, key: &str, rel: &str) -> bool {
        if self.force {
            return false;
        }
        let source = self.shared.join(key);
        source.exists() && std::fs::copy(source, self.root.join(rel)).is_ok()
    }

    /// Deposits a subtree artifact into the shared store (atomic, keep-first).
    fn deposit_shared(&self, key: &str, rel: &str) {
        let target = self.shared.join(key);
        if target.exists() {
            return;
        }
        let tmp = self.shared.join(format!("{key}.tmp-{}", std::process::id()));
        if std::fs::copy(self.root.join(rel), &tmp).is_ok() {
            let _ = std::fs::rename(tmp, target);
        }
    }

    /// Hash of the config subset that determines the rf1 checkpoint.
    fn rf1_scope(&self) -> String {
        let scope = serde_json::json!({
            "seed": self.config.seed,
            "dataset": self.config.dataset,
            "model": self.config.model,
            "train_velocity": self.config.train_velocity,
            "coupling": self.config.coupling,
            "time_dist": self.config.flow.time_dist,
        });
        format!("{:016x}", fnv1a64(scope.to_string().as_bytes()))
    }

    fn reflow_scope(&self) -> String {
        let scope = serde_json::json!({
            "rf1": self.rf1_scope(),
            "reflow": self.config.reflow,
        });
        format!("{:016x}", fnv1a64(scope.to_string().as_bytes()))
    }

    pub fn quiet(mut self) -> Self {
        self.quiet = true;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    fn log(&self, message: &str) {
        if !self.quiet {
            eprintln!("[{}] {message}", self.hash);
        }
    }

    fn file_hash(&self, rel: &str) -> Result<String, CliError> {
        let bytes = std::fs::read(self.root.join(rel))
            .map_err(CliError::io(format!("hashing {rel}")))?;
        Ok(format!("{:016x}", fnv1a64(&bytes)))
    }

    /// True when the phase's manifest matches the current config and inputs.
    fn phase_is_fresh(&self, phase: &str, inputs: &[&str]) -> bool {
        if self.force {
            return false;
        }
        let path = self.root.join("manifests").join(format!("{phase}.json"));
        let Ok(text) = std::fs::read_to_string(path) else {
            return false;
        };
        let Ok(manifest) = serde_json::from_str::<PhaseManifest>(&text) else {
            return false;
        };
        if manifest.config_hash != self.hash {
            return false;
        }
        let recorded: std::collections::HashMap<_, _> = manifest.inputs.iter().cloned().collect();
        if inputs.len() != recorded.len() {
            return false;
        }
        for rel in inputs {
            match (self.file_hash(rel), recorded.get(*rel)) {
                (Ok(now), Some(then)) if &now == then => {}
                _ => return false,
            }
        }
        manifest
            .outputs
            .iter()
            .all(|rel| self.root.join(rel).exists())
    }

    fn write_manifest(
        &self,
        phase: &str,
        inputs: &[&str],
        outputs: &[&str],
    ) -> Result<(), CliError> {
        let mut recorded = Vec::with_capacity(inputs.len());
        for rel in inputs {
            recorded.push((rel.to_string(), self.file_hash(rel)?));
        }
        let manifest = PhaseManifest {
            phase: phase.to_string(),
            config_hash: self.hash.clone(),
            inputs: recorded,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(
            self.root.join("manifests").join(format!("{phase}.json")),
            text,
        )
        .map_err(CliError::io("writing manifest"))
    }

    fn write_loss_log(&self, name: &str, report: &TrainReport) -> Result<(), CliError> {
        std::fs::write(self.root.join(name), report.loss_log_csv())
            .map_err(CliError::io(format!("writing {name}")))
    }

    /// Stochastic coupling between source and target.
    pub fn ensure_stochastic_coupling(&self) -> Result<Coupling, CliError> {
        const OUT: &str = "couplings/stochastic.cplg";
        if self.phase_is_fresh("stochastic", &[]) {
            return read_coupling_file(self.root.join(OUT)).map_err(CliError::phase("stochastic"));
        }
        self.log("building stochastic coupling");
        let coupling = make_stochastic_coupling(
            &self.config.dataset.source,
            &self.config.dataset.target,
            self.config.coupling.n_pairs,
            self.config.seed ^ SEED_STOCHASTIC,
        )
        .map_err(CliError::phase("stochastic"))?;
        write_coupling_file(&coupling, self.root.join(OUT))
            .map_err(CliError::phase("stochastic"))?;
        std::fs::write(
            self.root.join("couplings/stochastic.csv"),
            coupling_to_csv(&coupling),
        )
        .map_err(CliError::io("writing coupling csv"))?;
        self.write_manifest("stochastic", &[], &[OUT])?;
        Ok(coupling)
    }

    /// First-stage rectified-flow net, the reflow teacher.
    pub fn ensure_rf1(&self) -> Result<MlpModel, CliError> {
        const OUT: &str = "checkpoints/rf1.ckpt";
        const IN: &str = "couplings/stochastic.cplg";
        let coupling = self.ensure_stochastic_coupling()?;
        if self.phase_is_fresh("train-rf1", &[IN]) {
            return read_checkpoint_file(self.root.join(OUT)).map_err(CliError::phase("train-rf1"));
        }
        let shared_key = format!("rf1-{}.ckpt", self.rf1_scope());
        if self.adopt_shared(&shared_key, OUT) {
            if let Ok(model) = read_checkpoint_file(self.root.join(OUT)) {
                self.write_manifest("train-rf1", &[IN], &[OUT])?;
                return Ok(model);
            }
        }
        self.log("training 1-rectified flow");
        let dims = self.config.model.velocity_dims(coupling.dim());
        let mut model = MlpModel::new(
            &dims,
            self.config.model.activation,
            self.config.seed ^ SEED_RF1,
        )
        .map_err(CliError::phase("train-rf1"))?;
        let cfg = self
            .config
            .train_velocity
            .train_config(self.config.seed ^ SEED_RF1, self.config.flow);
        let report = train(TrainTarget::RfVelocity(&mut model), &coupling, &cfg)
            .map_err(CliError::phase("train-rf1"))?;
        self.write_loss_log("loss_rf1.csv", &report)?;
        write_checkpoint_file(&model, self.root.join(OUT)).map_err(CliError::phase("train-rf1"))?;
        self.deposit_shared(&shared_key, OUT);
        self.write_manifest("train-rf1", &[IN], &[OUT])?;
        Ok(model)
    }

    /// The coupling the final models train on: reflow of the source through
    /// the rf1 net when `reflow_on`, otherwise the stochastic coupling.
    pub fn ensure_training_coupling(&self) -> Result<Coupling, CliError> {
        if !self.config.ablation.reflow_on {
            return self.ensure_stochastic_coupling();
        }
        const OUT: &str = "couplings/training.cplg";
        const IN: &str = "checkpoints/rf1.ckpt";
        let rf1 = self.ensure_rf1()?;
        if self.phase_is_fresh("reflow", &[IN]) {
            return read_coupling_file(self.root.join(OUT)).map_err(CliError::phase("reflow"));
        }
        let shared_key = format!("reflow-{}.cplg", self.reflow_scope());
        if self.adopt_shared(&shared_key, OUT) {
            if let Ok(coupling) = read_coupling_file(self.root.join(OUT)) {
                self.write_manifest("reflow", &[IN], &[OUT])?;
                return Ok(coupling);
            }
        }
        self.log("reflowing to a deterministic coupling");
        let coupling = reflow(
            &rf1,
            &self.config.dataset.source,
            self.config.reflow.n_pairs,
            self.config.reflow.sim_steps,
            self.config.seed ^ SEED_REFLOW,
        )
        .map_err(CliError::phase("reflow"))?;
        write_coupling_file(&coupling, self.root.join(OUT)).map_err(CliError::phase("reflow"))?;
        std::fs::write(
            self.root.join("couplings/training.csv"),
            coupling_to_csv(&coupling),
        )
        .map_err(CliError::io("writing coupling csv"))?;
        self.deposit_shared(&shared_key, OUT);
        self.write_manifest("reflow", &[IN], &[OUT])?;
        Ok(coupling)
    }

    fn training_coupling_rel(&self) -> &'static str {
        if self.config.ablation.reflow_on {
            "couplings/training.cplg"
        } else {
            "couplings/stochastic.cplg"
        }
    }

    /// Final velocity net. With acceleration off this IS the whole model
    /// (plain rectified flow on the training coupling); with acceleration on
    /// it regresses the scaled initial velocity.
    pub fn ensure_velocity(&self) -> Result<MlpModel, CliError> {
        const OUT: &str = "checkpoints/velocity.ckpt";
        let coupling = self.ensure_training_coupling()?;
        let input = self.training_coupling_rel();
        if self.phase_is_fresh("train-velocity", &[input]) {
            return read_checkpoint_file(self.root.join(OUT))
                .map_err(CliError::phase("train-velocity"));
        }
        let dims = self.config.model.velocity_dims(coupling.dim());
        let mut model = MlpModel::new(
            &dims,
            self.config.model.activation,
            self.config.seed ^ SEED_VELOCITY,
        )
        .map_err(CliError::phase("train-velocity"))?;
        let cfg = self
            .config
            .train_velocity
            .train_config(self.config.seed ^ SEED_VELOCITY, self.config.flow);
        let target = if self.config.ablation.acceleration_on {
            self.log("training initial-velocity net");
            TrainTarget::CafVelocity(&mut model)
        } else {
            self.log("training rectified-flow velocity net");
            TrainTarget::RfVelocity(&mut model)
        };
        let report = train(target, &coupling, &cfg).map_err(CliError::phase("train-velocity"))?;
        self.write_loss_log("loss_velocity.csv", &report)?;
        write_checkpoint_file(&model, self.root.join(OUT))
            .map_err(CliError::phase("train-velocity"))?;
        self.write_manifest("train-velocity", &[input], &[OUT])?;
        Ok(model)
    }

    /// Acceleration net against the frozen velocity. `None` when the
    /// configuration is velocity-only.
    pub fn ensure_acceleration(&self) -> Result<Option<MlpModel>, CliError> {
        if !self.config.ablation.acceleration_on {
            return Ok(None);
        }
        const OUT: &str = "checkpoints/acceleration.ckpt";
        const VEL: &str = "checkpoints/velocity.ckpt";
        let coupling = self.ensure_training_coupling()?;
        let velocity = self.ensure_velocity()?;
        let inputs = [self.training_coupling_rel(), VEL];
        if self.phase_is_fresh("train-acceleration", &inputs) {
            return Ok(Some(
                read_checkpoint_file(self.root.join(OUT))
                    .map_err(CliError::phase("train-acceleration"))?,
            ));
        }
        self.log("training acceleration net");
        let dims = self
            .config
            .model
            .acceleration_dims(coupling.dim(), self.config.ablation.ivc_on);
        let mut model = MlpModel::new(
            &dims,
            self.config.model.activation,
            self.config.seed ^ SEED_ACCELERATION,
        )
        .map_err(CliError::phase("train-acceleration"))?;
        let mut cfg = self
            .config
            .train_acceleration
            .phase
            .train_config(self.config.seed ^ SEED_ACCELERATION, self.config.flow);
        cfg.ivc = self.config.ablation.ivc_on;
        cfg.teacher_forcing = self.config.train_acceleration.teacher_forcing;
        let report = train(
            TrainTarget::CafAcceleration {
                acceleration: &mut model,
                velocity: &velocity,
            },
            &coupling,
            &cfg,
        )
        .map_err(CliError::phase("train-acceleration"))?;
        self.write_loss_log("loss_acceleration.csv", &report)?;
        write_checkpoint_file(&model, self.root.join(OUT))
            .map_err(CliError::phase("train-acceleration"))?;
        self.write_manifest("train-acceleration", &inputs, &[OUT])?;
        Ok(Some(model))
    }

    /// The trained bundle, training whatever is missing.
    pub fn ensure_bundle(&self) -> Result<Bundle, CliError> {
        let velocity = self.ensure_velocity()?;
        match self.ensure_acceleration()? {
            None => Ok(Bundle::Rectified(velocity)),
            Some(acceleration) => Ok(Bundle::ConstantAcceleration {
                velocity,
                acceleration,
                ivc: self.config.ablation.ivc_on,
            }),
        }
    }

    /// Endpoint samples plus a handful of fully logged trajectories.
    pub fn ensure_samples(&self) -> Result<(), CliError> {
        let inputs = self.bundle_inputs();
        let input_refs: Vec<&str> = inputs.iter().copied().collect();
        if self.phase_is_fresh("sample", &input_refs) {
            return Ok(());
        }
        let bundle = self.ensure_bundle()?;
        self.log("sampling endpoints and trajectories");
        let s = &self.config.sampling;
        let sources = sample_distribution(
            &self.config.dataset.source,
            s.n_samples.max(s.n_logged),
            self.config.seed ^ SEED_SAMPLE,
        )
        .map_err(CliError::phase("sample"))?;

        let mut endpoints = String::new();
        let dim = self.config.dataset.source.dim();
        let header: Vec<String> = (0..dim).map(|i| format!("x_{i}")).collect();
        endpoints.push_str(&header.join(","));
        endpoints.push('\n');
        let n_steps = self.config.flow.n_steps;
        let mut outputs: Vec<String> = vec!["trajectories/samples.csv".into()];
        for (i, x0) in sources.iter().take(s.n_samples).enumerate() {
            let end = bundle.endpoint(x0, n_steps).map_err(CliError::phase("sample"))?;
            let row: Vec<String> = end.iter().map(|v| format!("{v}")).collect();
            endpoints.push_str(&row.join(","));
            endpoints.push('\n');
            if i < s.n_logged {
                let mut log = bundle
                    .trajectory(x0, n_steps)
                    .map_err(CliError::phase("sample"))?;
                log.meta.model = self.hash.clone();
                log.meta.h = self.config.ablation.acceleration_on.then_some(self.config.flow.h);
                let rel = format!("trajectories/path_{i:03}.csv");
                std::fs::write(self.root.join(&rel), log.to_csv())
                    .map_err(CliError::io("writing trajectory"))?;
                outputs.push(rel);
            }
        }
        std::fs::write(self.root.join("trajectories/samples.csv"), endpoints)
            .map_err(CliError::io("writing samples"))?;
        let output_refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
        self.write_manifest("sample", &input_refs, &output_refs)?;
        Ok(())
    }

    fn bundle_inputs(&self) -> Vec<&'static str> {
        if self.config.ablation.acceleration_on {
            vec!["checkpoints/velocity.ckpt", "checkpoints/acceleration.ckpt"]
        } else {
            vec!["checkpoints/velocity.ckpt"]
        }
    }

    /// Inversion round trip on fresh target draws; writes its rows into the
    /// metric ledger at the metrics phase.
    pub fn inversion_rows(&self) -> Result<Vec<MetricReport>, CliError> {
        let bundle = self.ensure_bundle()?;
        let s = &self.config.sampling;
        let targets = sample_distribution(
            &self.config.dataset.target,
            s.n_inversion,
            self.config.seed ^ SEED_INVERSION,
        )
        .map_err(CliError::phase("invert"))?;
        let mut errors = Vec::with_capacity(targets.len());
        match &bundle {
            Bundle::Rectified(model) => {
                let field = MlpVelocity { model };
                for x1 in &targets {
                    errors.push(
                        reconstruct_rf(x1, &field, s.inversion_steps)
                            .map_err(CliError::phase("invert"))?
                            .round_trip_error,
                    );
                }
            }
            Bundle::ConstantAcceleration {
                velocity,
                acceleration,
                ivc,
            } => {
                let v = MlpVelocity { model: velocity };
                let a = MlpAcceleration {
                    model: acceleration,
                    ivc: *ivc,
                };
                for x1 in &targets {
                    errors.push(
                        reconstruct_caf(x1, &v, &a, s.inversion_steps)
                            .map_err(CliError::phase("invert"))?
                            .round_trip_error,
                    );
                }
            }
        }
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        Ok(vec![MetricReport {
            name: "round_trip_error".into(),
            value: mean,
            n_samples: errors.len(),
            config: self.hash.clone(),
            ci_halfwidth: caf_core::metrics::bootstrap_ci_halfwidth(
                &errors,
                self.config.seed ^ SEED_CI,
            ),
        }])
    }

    /// Computes every metric row and writes the ledger.
    pub fn ensure_metrics(&self) -> Result<PathBuf, CliError> {
        let ledger = self.metrics_path();
        let inputs = self.bundle_inputs();
        let input_refs: Vec<&str> = inputs.iter().copied().collect();
        if self.phase_is_fresh("metrics", &input_refs) {
            return Ok(ledger);
        }
        let bundle = self.ensure_bundle()?;
        let coupling = self.ensure_training_coupling()?;
        self.log("computing metrics");
        let seed = self.config.seed;
        let m = &self.config.metrics;
        let s = &self.config.sampling;
        let mut rows: Vec<MetricReport> = Vec::new();

        // Distribution quality: generated endpoints vs a fresh target draw,
        // with the two-fresh-draw noise floor alongside.
        let sources = sample_distribution(
            &self.config.dataset.source,
            s.n_samples,
            seed ^ SEED_SAMPLE,
        )
        .map_err(CliError::phase("metrics"))?;
        let n_steps = self.config.flow.n_steps;
        let mut generated = Vec::with_capacity(sources.len());
        for x0 in &sources {
            generated.push(bundle.endpoint(x0, n_steps).map_err(CliError::phase("metrics"))?);
        }
        let reference = sample_distribution(
            &self.config.dataset.target,
            s.n_samples,
            seed ^ SEED_METRIC_EVAL,
        )
        .map_err(CliError::phase("metrics"))?;
        let reference_b = sample_distribution(
            &self.config.dataset.target,
            s.n_samples,
            seed ^ SEED_METRIC_FLOOR,
        )
        .map_err(CliError::phase("metrics"))?;
        rows.push(
            sliced_wasserstein(&generated, &reference, m.sw_projections, seed ^ SEED_CI)
                .map_err(CliError::phase("metrics"))?,
        );
        let mut floor =
            sliced_wasserstein(&reference_b, &reference, m.sw_projections, seed ^ SEED_CI)
                .map_err(CliError::phase("metrics"))?;
        floor.name = "sliced_wasserstein_floor".into();
        rows.push(floor);

        // Straightness over training pairs.
        let nfss_pairs = coupling
            .head(m.nfss_pairs.min(coupling.len()))
            .map_err(CliError::phase("metrics"))?;
        let nfss = match &bundle {
            Bundle::Rectified(model) => nfss_rf(
                &MlpVelocity { model },
                &nfss_pairs,
                m.nfss_t_grid,
                seed ^ SEED_CI,
            ),
            Bundle::ConstantAcceleration {
                velocity,
                acceleration,
                ivc,
            } => nfss_caf(
                &MlpVelocity { model: velocity },
                &MlpAcceleration {
                    model: acceleration,
                    ivc: *ivc,
                },
                &nfss_pairs,
                m.nfss_t_grid,
                seed ^ SEED_CI,
            ),
        }
        .map_err(CliError::phase("metrics"))?;
        rows.push(nfss);

        // Coupling preservation on the training split.
        let cp_pairs = coupling
            .head(m.cp_pairs.min(coupling.len()))
            .map_err(CliError::phase("metrics"))?;
        let cp = coupling_preservation(
            &cp_pairs,
            |x0| bundle.endpoint(x0, n_steps),
            seed ^ SEED_CI,
        )
        .map_err(CliError::phase("metrics"))?;
        rows.push(cp.mean_error.clone());
        rows.push(MetricReport {
            name: "coupling_preservation_psnr".into(),
            value: cp.psnr_analog,
            n_samples: cp_pairs.len(),
            config: String::new(),
            ci_halfwidth: 0.0,
        });

        // Held-out coupling preservation: fresh sources pushed through the
        // same reflow teacher, so the pairs were never trained on.
        if self.config.ablation.reflow_on {
            let rf1 = self.ensure_rf1()?;
            let holdout = reflow(
                &rf1,
                &self.config.dataset.source,
                m.cp_pairs,
                self.config.reflow.sim_steps,
                seed ^ SEED_REFLOW ^ 0xFF,
            )
            .map_err(CliError::phase("metrics"))?;
            let cp_holdout = coupling_preservation(
                &holdout,
                |x0| bundle.endpoint(x0, n_steps),
                seed ^ SEED_CI,
            )
            .map_err(CliError::phase("metrics"))?;
            let mut row = cp_holdout.mean_error;
            row.name = "coupling_preservation_holdout".into();
            rows.push(row);
        }

        rows.extend(self.inversion_rows()?);

        let mut text = String::from(MetricReport::CSV_HEADER);
        text.push('\n');
        for mut row in rows {
            row.config = self.hash.clone();
            let _ = writeln!(text, "{}", row.csv_row());
        }
        std::fs::write(&ledger, text).map_err(CliError::io("writing metrics ledger"))?;
        self.write_manifest("metrics", &input_refs, &["metrics.csv"])?;
        Ok(ledger)
    }

    /// Renders the logged trajectories over the training coupling.
    pub fn ensure_plot(&self) -> Result<PathBuf, CliError> {
        self.ensure_samples()?;
        let coupling = self.ensure_training_coupling()?;
        let out = self.root.join("plots/trajectories.svg");
        let mut logs = Vec::new();
        for i in 0..self.config.sampling.n_logged {
            let rel = format!("trajectories/path_{i:03}.csv");
            let path = self.root.join(&rel);
            if !path.exists() {
                break;
            }
            let text =
                std::fs::read_to_string(&path).map_err(CliError::io("reading trajectory"))?;
            logs.push(trajectory_from_csv(
                &text,
                self.config.ablation.acceleration_on.then_some(self.config.flow.h),
            )?);
        }
        let display = coupling
            .head(coupling.len().min(256))
            .map_err(CliError::phase("plot"))?;
        let svg = plot_trajectories(&logs, &display)?;
        std::fs::write(&out, svg).map_err(CliError::io("writing svg"))?;
        Ok(out)
    }

    /// End-to-end run: everything up to metrics and plots.
    pub fn run_all(&self) -> Result<PathBuf, CliError> {
        self.ensure_samples()?;
        let ledger = self.ensure_metrics()?;
        self.ensure_plot()?;
        Ok(ledger)
    }

    /// Inversion demo: invert fresh target points and write the recovered
    /// sources plus reverse trajectories.
    pub fn ensure_inversion_artifacts(&self) -> Result<(), CliError> {
        let bundle = self.ensure_bundle()?;
        let s = &self.config.sampling;
        let targets = sample_distribution(
            &self.config.dataset.target,
            s.n_logged.max(1),
            self.config.seed ^ SEED_INVERSION,
        )
        .map_err(CliError::phase("invert"))?;
        let mut text = String::new();
        let dim = self.config.dataset.target.dim();
        let header: Vec<String> = (0..dim)
            .map(|i| format!("x1_{i}"))
            .chain((0..dim).map(|i| format!("x0_hat_{i}")))
            .collect();
        text.push_str(&header.join(","));
        text.push('\n');
        for x1 in &targets {
            let x0_hat = match &bundle {
                Bundle::Rectified(model) => {
                    caf_core::sample::invert_rf(x1, &MlpVelocity { model }, s.inversion_steps)
                        .map_err(CliError::phase("invert"))?
                        .0
                }
                Bundle::ConstantAcceleration {
                    velocity,
                    acceleration,
                    ivc,
                } => {
                    invert_caf(
                        x1,
                        &MlpVelocity { model: velocity },
                        &MlpAcceleration {
                            model: acceleration,
                            ivc: *ivc,
                        },
                        s.inversion_steps,
                    )
                    .map_err(CliError::phase("invert"))?
                    .x0_hat
                }
            };
            let row: Vec<String> = x1.iter().chain(&x0_hat).map(|v| format!("{v}")).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        std::fs::write(self.root.join("trajectories/inversion.csv"), text)
            .map_err(CliError::io("writing inversion csv"))?;
        Ok(())
    }
}

fn trajectory_from_csv(text: &str, h: Option<f64>) -> Result<TrajectoryLog, CliError> {
    let mut times = Vec::new();
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(|f| {
            f.parse::<f64>()
                .map_err(|e| CliError::Plot(format!("bad trajectory csv field {f:?}: {e}")))
        });
        let t = fields.next().ok_or_else(|| {
            CliError::Plot("trajectory csv row missing time".into())
        })??;
        let point: Result<Vec<f64>, CliError> = fields.collect();
        times.push(t);
        points.push(point?);
    }
    let n_steps = times.len().saturating_sub(1);
    Ok(TrajectoryLog {
        times,
        points,
        meta: caf_core::sample::TrajectoryMeta {
            model: String::new(),
            n_steps,
            h,
            direction: caf_core::sample::Direction::Forward,
        },
    })
}
