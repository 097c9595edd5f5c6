//! One function per CLI command. Each reads its prerequisites from the
//! artifact root, checks their provenance, and writes its outputs plus a
//! `run.json`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crossmodal::analysis::online::{single_tick_flips, write_jsonl};
use crossmodal::analysis::pca::write_projections_csv;
use crossmodal::analysis::{
    compare_curves, evaluate_outputs, lowpass_step, online_predict, pca_latent, r_squared, write_errors_csv,
    FilterState, MetricsReport, OnlineConfig, OnlineStatus, ShapeProbe,
};
use crossmodal::data::{
    build_datasets, bundle_extra, classify_shape, decode_orientation, read_bundle, target_to_ori, target_to_position,
    write_bundle_with, DatasetBundle, Sequence, Window, TARGET_DIM,
};
use crossmodal::ha::{
    self, make_initial_state, train_ha, window_slices, HaCheckpointMeta, HaModel, HaTrainConfig, Mode, TransferBundle,
};
use crossmodal::rng::derive_seed;
use crossmodal::sim::{ObjectSpec, RgbImage};
use crossmodal::store::MANIFEST;
use crossmodal::vision::{self, CheckpointMeta, VisionModel, VisionTrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{hash_json, ExperimentConfig};
use crate::error::CliError;

pub const DATA_DIR: &str = "data";
pub const VISION_DIR: &str = "vision";
pub const EVAL1_DIR: &str = "eval-phase1";
pub const EVAL2_DIR: &str = "eval-phase2";
pub const PCA_DIR: &str = "pca";
pub const FILTER_DIR: &str = "filter-demo";
pub const ONLINE_DIR: &str = "online";
pub const CURVES_DIR: &str = "curves";

pub fn ha_dir(mode: Mode) -> String {
    format!("ha-{}", mode.name())
}

const VISION_SEED: u64 = 101;
const HA_SEED: u64 = 202;
const ONLINE_SEED: u64 = 303;
/// Ridge strength of the latent probes.
const PROBE_RIDGE: f64 = 1e-6;

/// Hash and upstream hashes recorded in every artifact manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub stage_hash: String,
    pub config_hash: String,
    pub upstream: BTreeMap<String, String>,
}

/// Per-stage hashes derived from the config. A stage's hash covers its own
/// settings and the hashes of the stages it reads.
pub struct StageHashes {
    pub data: String,
    pub vision: String,
    pub proposed: String,
    pub baseline: String,
}

impl StageHashes {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let data = hash_json(&json!({
            "stage": "data",
            "master_seed": cfg.master_seed,
            "profile": cfg.profile,
            "box_spec": cfg.box_spec,
            "physics": cfg.physics,
        }));
        let vision = hash_json(&json!({"stage": "vision", "data": data, "seed": cfg.master_seed, "vision": cfg.vision}));
        let ha = |mode: Mode, upstream_vision: Option<&str>| {
            hash_json(&json!({
                "stage": "ha",
                "mode": mode,
                "data": data,
                "vision": upstream_vision,
                "seed": cfg.master_seed,
                "ha": cfg.ha,
            }))
        };
        Self {
            proposed: ha(Mode::Proposed, Some(&vision)),
            baseline: ha(Mode::Baseline, None),
            vision,
            data,
        }
    }

    pub fn ha(&self, mode: Mode) -> &str {
        match mode {
            Mode::Proposed => &self.proposed,
            Mode::Baseline => &self.baseline,
        }
    }
}

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub hashes: StageHashes,
    pub root: PathBuf,
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig) -> Self {
        Self {
            hashes: StageHashes::new(&cfg),
            root: cfg.paths.artifacts.clone(),
            cfg,
        }
    }

    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn provenance(&self, stage: &str, stage_hash: &str, upstream: &[(&str, &str)]) -> Provenance {
        Provenance {
            stage: stage.into(),
            stage_hash: stage_hash.into(),
            config_hash: self.cfg.hash(),
            upstream: upstream.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    fn require(&self, name: &str, what: &str, hint: &str) -> Result<PathBuf, CliError> {
        let dir = self.dir(name);
        if !dir.join(MANIFEST).is_file() {
            return Err(CliError::Missing {
                what: what.into(),
                path: dir,
                hint: hint.into(),
            });
        }
        Ok(dir)
    }

    fn check(&self, artifact: &str, dir: &Path, extra: &Value, expected: &str) -> Result<(), CliError> {
        let found = extra
            .get("provenance")
            .and_then(|p| p.get("stage_hash"))
            .and_then(Value::as_str)
            .unwrap_or("none");
        if found != expected {
            return Err(CliError::Provenance {
                artifact: artifact.into(),
                path: dir.to_path_buf(),
                expected: expected.into(),
                found: found.into(),
            });
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<DatasetBundle, CliError> {
        let dir = self.require(DATA_DIR, "dataset bundle", "gen-data")?;
        self.check("dataset bundle", &dir, &bundle_extra(&dir)?, &self.hashes.data)?;
        Ok(read_bundle(&dir)?)
    }

    pub fn load_vision(&self, hint: &str) -> Result<VisionModel, CliError> {
        let dir = self.require(VISION_DIR, "vision checkpoint", hint)?;
        let (model, meta) = VisionModel::load(&dir)?;
        self.check("vision checkpoint", &dir, &meta.extra, &self.hashes.vision)?;
        Ok(model)
    }

    pub fn load_ha(&self, mode: Mode) -> Result<(HaModel, HaCheckpointMeta), CliError> {
        let dir = self.require(
            &ha_dir(mode),
            &format!("{} phase-2 checkpoint", mode.name()),
            &format!("train-ha --mode {}", mode.name()),
        )?;
        let (model, meta) = HaModel::load(&dir)?;
        self.check(&ha_dir(mode), &dir, &meta.extra, self.hashes.ha(mode))?;
        Ok((model, meta))
    }
}

/// Writes `run.json` describing one command invocation.
fn write_run(dir: &Path, command: &str, ctx: &Ctx, seed: u64, started: Instant) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let run = json!({
        "command": command,
        "config_hash": ctx.cfg.hash(),
        "seed": seed,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "config": ctx.cfg,
    });
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run).map_err(crossmodal::Error::from)?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(crossmodal::Error::from)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn gen_data(ctx: &Ctx) -> Result<(), CliError> {
    let t = Instant::now();
    let c = &ctx.cfg;
    let bundle = build_datasets(c.master_seed, &c.profile, &c.box_spec, &c.physics, c.exec)?;
    let prov = ctx.provenance("data", &ctx.hashes.data, &[]);
    let dir = ctx.dir(DATA_DIR);
    write_bundle_with(&dir, &bundle, json!({ "provenance": prov }))?;
    write_run(&dir, "gen-data", ctx, c.master_seed, t)
}

pub fn train_vision(ctx: &Ctx) -> Result<(), CliError> {
    let t = Instant::now();
    let data = ctx.load_data()?;
    let c = &ctx.cfg;
    let seed = derive_seed(c.master_seed, VISION_SEED);
    let tc = VisionTrainConfig {
        epochs: c.vision.epochs,
        batch_size: c.vision.batch_size,
        adam: c.vision.adam.clone(),
        seed,
        freeze_head: false,
        exec: c.exec,
    };
    let (model, history) = vision::train_vision(&data.phase1.train, &c.vision.arch, &tc)?;
    let dir = ctx.dir(VISION_DIR);
    let prov = ctx.provenance("vision", &ctx.hashes.vision, &[("data", &ctx.hashes.data)]);
    model.save(
        &dir,
        &CheckpointMeta {
            arch: c.vision.arch.clone(),
            seed,
            epochs: c.vision.epochs,
            extra: json!({ "provenance": prov }),
        },
    )?;
    vision::write_history_csv(&dir.join("history.csv"), &history)?;
    write_run(&dir, "train-vision", ctx, seed, t)
}

/// Transferred latents of the training windows' first frames.
pub fn transfer_bundle(ctx: &Ctx, data: &DatasetBundle, vision: &VisionModel) -> Result<TransferBundle, CliError> {
    let windows = data.train_windows()?;
    Ok(TransferBundle::from_vision(vision, &data.phase2.train, &windows, ctx.cfg.exec)?)
}

pub fn train_ha_cmd(ctx: &Ctx, mode: Mode) -> Result<(), CliError> {
    let t = Instant::now();
    let c = &ctx.cfg;
    let data = ctx.load_data()?;
    let transfer = match mode {
        Mode::Proposed => {
            let vision = ctx.load_vision("train-vision")?;
            Some(transfer_bundle(ctx, &data, &vision)?)
        }
        Mode::Baseline => None,
    };
    let windows = data.train_windows()?;
    let seed = derive_seed(c.master_seed, HA_SEED);
    let tc = HaTrainConfig {
        epochs: c.ha.epochs,
        batch_windows: c.ha.batch_windows,
        adam: c.ha.adam.clone(),
        clip_norm: c.ha.clip_norm,
        seed,
        exec: c.exec,
    };
    let (model, history) = train_ha(&data.phase2.train, &windows, transfer.as_ref(), mode, &c.ha.arch, &tc)?;
    let dir = ctx.dir(&ha_dir(mode));
    let mut upstream = vec![("data", ctx.hashes.data.as_str())];
    if mode == Mode::Proposed {
        upstream.push(("vision", ctx.hashes.vision.as_str()));
    }
    let prov = ctx.provenance(&ha_dir(mode), ctx.hashes.ha(mode), &upstream);
    let inference_state = make_initial_state(mode, c.ha.arch.latent, transfer.as_ref(), None)?;
    model.save(
        &dir,
        &HaCheckpointMeta {
            arch: c.ha.arch.clone(),
            mode,
            seed,
            epochs: c.ha.epochs,
            inference_state,
            extra: json!({ "provenance": prov }),
        },
    )?;
    ha::write_history_csv(&dir.join("history.csv"), &history)?;
    if let Some(tr) = &transfer {
        write_json(&dir.join("transfer.json"), tr)?;
    }
    write_run(&dir, &format!("train-ha --mode {}", mode.name()), ctx, seed, t)
}

fn to_f64(y: &[f32]) -> [f64; TARGET_DIM] {
    std::array::from_fn(|k| f64::from(y[k]))
}

/// Final-step outputs of a phase-2 model on `windows`, with the truths at
/// those steps.
pub fn phase2_outputs(
    ctx: &Ctx,
    model: &HaModel,
    state: &[f32],
    seqs: &[Sequence],
    windows: &[Window],
) -> (Vec<[f64; TARGET_DIM]>, Vec<[f64; TARGET_DIM]>) {
    let xs: Vec<&[f32]> = windows.iter().map(|w| window_slices(seqs, w).0).collect();
    let hs: Vec<&[f32]> = vec![state; windows.len()];
    let steps = windows.first().map_or(0, |w| w.len);
    let preds = model.final_outputs(&xs, &hs, steps, ctx.cfg.exec).iter().map(|y| to_f64(y)).collect();
    let truths = windows.iter().map(|w| to_f64(seqs[w.seq].target(w.last()))).collect();
    (preds, truths)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase1Report {
    pub test: MetricsReport,
}

pub fn eval_phase1(ctx: &Ctx) -> Result<(), CliError> {
    let t = Instant::now();
    let data = ctx.load_data()?;
    let vision = ctx.load_vision("train-vision")?;
    let images: Vec<&RgbImage> = data.phase1.test.iter().map(|s| &s.image).collect();
    let preds: Vec<_> = vision.predictions(&images, ctx.cfg.exec).iter().map(|y| to_f64(y)).collect();
    let truths: Vec<_> = data.phase1.test.iter().map(|s| to_f64(&s.truth.to_target())).collect();
    let (report, errors) = evaluate_outputs(&preds, &truths, &data.box_spec)?;
    let dir = ctx.dir(EVAL1_DIR);
    std::fs::create_dir_all(&dir)?;
    write_errors_csv(&dir.join("errors_test.csv"), &errors)?;
    write_json(&dir.join("metrics.json"), &Phase1Report { test: report })?;
    write_run(&dir, "eval --phase 1", ctx, ctx.cfg.master_seed, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub test: MetricsReport,
    pub untrained: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase2Report {
    pub provenance: BTreeMap<String, String>,
    pub modes: BTreeMap<String, ModeReport>,
    /// Vision predictions on the test windows' final frames, seen with the
    /// lid open.
    pub vision_same_scenes: MetricsReport,
}

pub fn eval_phase2(ctx: &Ctx, only: Option<Mode>) -> Result<(), CliError> {
    let t = Instant::now();
    let data = ctx.load_data()?;
    let vision = ctx.load_vision("train-vision")?;
    let modes: Vec<Mode> = only.map_or(vec![Mode::Proposed, Mode::Baseline], |m| vec![m]);
    let dir = ctx.dir(EVAL2_DIR);
    std::fs::create_dir_all(&dir)?;
    let test_w = data.test_windows()?;
    let untrained_w = data.untrained_windows()?;
    let mut report = Phase2Report {
        provenance: BTreeMap::from([
            ("data".to_string(), ctx.hashes.data.clone()),
            ("vision".to_string(), ctx.hashes.vision.clone()),
        ]),
        modes: BTreeMap::new(),
        vision_same_scenes: {
            let images: Vec<&RgbImage> = test_w
                .iter()
                .map(|w| {
                    data.phase2.test[w.seq].keyframe(w.last()).ok_or_else(|| {
                        crossmodal::Error::Invalid(format!("test sequence {} has no keyframe at {}", w.seq, w.last()))
                    })
                })
                .collect::<Result<_, _>>()?;
            let preds: Vec<_> = vision.predictions(&images, ctx.cfg.exec).iter().map(|y| to_f64(y)).collect();
            let truths: Vec<_> = test_w.iter().map(|w| to_f64(data.phase2.test[w.seq].target(w.last()))).collect();
            let (r, errors) = evaluate_outputs(&preds, &truths, &data.box_spec)?;
            write_errors_csv(&dir.join("errors_vision_same_scenes.csv"), &errors)?;
            r
        },
    };
    for mode in modes {
        let (model, meta) = ctx.load_ha(mode)?;
        report.provenance.insert(ha_dir(mode), ctx.hashes.ha(mode).to_string());
        let split = |name: &str, seqs: &[Sequence], windows: &[Window]| -> Result<MetricsReport, CliError> {
            let (p, tr) = phase2_outputs(ctx, &model, &meta.inference_state, seqs, windows);
            let (r, errors) = evaluate_outputs(&p, &tr, &data.box_spec)?;
            write_errors_csv(&dir.join(format!("errors_{}_{name}.csv", mode.name())), &errors)?;
            Ok(r)
        };
        let test = split("test", &data.phase2.test, &test_w)?;
        let untrained = split("untrained", &data.phase2.untrained, &untrained_w)?;
        report.modes.insert(mode.name().to_string(), ModeReport { test, untrained });
    }
    write_json(&dir.join("metrics.json"), &report)?;
    write_run(&dir, "eval --phase 2", ctx, ctx.cfg.master_seed, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub rows: usize,
    pub explained_ratio: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// Linear probe fit on training latents, scored on test snapshots.
    pub probe_shape_accuracy: f64,
    pub probe_chance: f64,
    pub probe_r2_x: f64,
    pub probe_r2_y: f64,
}

pub fn pca_cmd(ctx: &Ctx) -> Result<(), CliError> {
    let t = Instant::now();
    let data = ctx.load_data()?;
    let vision = ctx.load_vision("train-vision")?;
    let latents = |snaps: &[crossmodal::data::Snapshot]| -> Vec<Vec<f64>> {
        let images: Vec<&RgbImage> = snaps.iter().map(|s| &s.image).collect();
        vision
            .latents(&images, ctx.cfg.exec)
            .into_iter()
            .map(|l| l.into_iter().map(f64::from).collect())
            .collect()
    };
    let train = latents(&data.phase1.train);
    let test = latents(&data.phase1.test);
    let pca = pca_latent(&train)?;
    let dir = ctx.dir(PCA_DIR);
    std::fs::create_dir_all(&dir)?;
    let labels: Vec<(String, [f64; 2], Option<f64>)> = data
        .phase1
        .train
        .iter()
        .map(|s| {
            let t = s.truth;
            (
                classify_shape(t.shape).name().to_string(),
                target_to_position(t.pos, &data.box_spec),
                decode_orientation(target_to_ori(t.ori[0]), target_to_ori(t.ori[1])),
            )
        })
        .collect();
    write_projections_csv(&dir.join("projections.csv"), &pca, &labels)?;

    let classes = |snaps: &[crossmodal::data::Snapshot]| -> Vec<_> {
        snaps.iter().map(|s| classify_shape(s.truth.shape)).collect()
    };
    let probe = ShapeProbe::fit(&train, &classes(&data.phase1.train), PROBE_RIDGE)?;
    let pos = |snaps: &[crossmodal::data::Snapshot]| -> Vec<Vec<f64>> {
        snaps.iter().map(|s| s.truth.pos.to_vec()).collect()
    };
    let reg = crossmodal::analysis::fit_least_squares(&train, &pos(&data.phase1.train), PROBE_RIDGE)?;
    let test_pos = pos(&data.phase1.test);
    let pred: Vec<Vec<f64>> = test.iter().map(|x| reg.predict(x)).collect();
    let col = |rows: &[Vec<f64>], k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let report = PcaReport {
        rows: train.len(),
        explained_ratio: pca.explained_ratio.clone(),
        eigenvalues: pca.eigenvalues.clone(),
        probe_shape_accuracy: probe.accuracy(&test, &classes(&data.phase1.test)),
        probe_chance: 0.2,
        probe_r2_x: r_squared(&col(&pred, 0), &col(&test_pos, 0)),
        probe_r2_y: r_squared(&col(&pred, 1), &col(&test_pos, 1)),
    };
    write_json(&dir.join("pca.json"), &report)?;
    write_run(&dir, "pca", ctx, ctx.cfg.master_seed, t)
}

/// Counts ticks whose decoded shape class differs from the previous tick.
fn class_changes(values: &[[f64; TARGET_DIM]]) -> usize {
    values.windows(2).filter(|w| classify_shape(w[0][4]) != classify_shape(w[1][4])).count()
}

pub fn filter_demo(ctx: &Ctx, sequence: usize) -> Result<(), CliError> {
    let t = Instant::now();
    let data = ctx.load_data()?;
    let (model, meta) = ctx.load_ha(Mode::Proposed)?;
    let seq = data.phase2.test.get(sequence).ok_or_else(|| {
        CliError::Config(format!("test split has {} sequences, asked for {sequence}", data.phase2.test.len()))
    })?;
    let w = data.profile.window;
    let every = ctx.cfg.online.frames_per_tick.max(1);
    let ends: Vec<usize> = (w - 1..seq.len).step_by(every).collect();
    let windows: Vec<Window> = ends.iter().map(|&e| Window { seq: 0, start: e + 1 - w, len: w }).collect();
    let seqs = std::slice::from_ref(seq);
    let (raw, truth) = phase2_outputs(ctx, &model, &meta.inference_state, seqs, &windows);
    let mut state = FilterState::default();
    let filtered: Vec<[f64; TARGET_DIM]> = raw.iter().map(|y| lowpass_step(y, &mut state)).collect();
    let dir = ctx.dir(FILTER_DIR);
    std::fs::create_dir_all(&dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("filter_demo.csv"))?);
    let cols = |p: &str| (0..TARGET_DIM).map(|k| format!("{p}{k}")).collect::<Vec<_>>().join(",");
    writeln!(out, "time,{},{},{}", cols("raw"), cols("filtered"), cols("truth"))?;
    let join = |v: &[f64; TARGET_DIM]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    for (i, &e) in ends.iter().enumerate() {
        let time = e as f64 / crossmodal::sim::SAMPLE_RATE_HZ;
        writeln!(out, "{time},{},{},{}", join(&raw[i]), join(&filtered[i]), join(&truth[i]))?;
    }
    out.flush()?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "sequence": sequence,
            "ticks": ends.len(),
            "raw_class_changes": class_changes(&raw),
            "filtered_class_changes": class_changes(&filtered),
        }),
    )?;
    write_run(&dir, "filter-demo", ctx, ctx.cfg.master_seed, t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineSummary {
    pub object: String,
    pub mode: Mode,
    pub duration_s: f64,
    pub ticks: usize,
    pub ready_ticks: usize,
    pub first_ready_time: Option<f64>,
    /// One-tick shape flips after the first two seconds of ready output.
    pub single_tick_flips_after_2s: usize,
    /// Fraction of consecutive ready tick pairs with the same shape class.
    pub shape_stability: f64,
    pub shape_accuracy: f64,
}

pub fn find_object(data: &DatasetBundle, id: &str) -> Result<ObjectSpec, CliError> {
    data.train_objects
        .iter()
        .chain(&data.eval_objects)
        .find(|o| o.id == id)
        .cloned()
        .ok_or_else(|| {
            let known: Vec<&str> = data.train_objects.iter().chain(&data.eval_objects).map(|o| o.id.as_str()).collect();
            CliError::Config(format!("unknown object `{id}`; known objects: {}", known.join(", ")))
        })
}

pub fn online_cmd(ctx: &Ctx, object: &str, duration: f64, mode: Mode) -> Result<(), CliError> {
    let t = Instant::now();
    if !(duration > 0.0) {
        return Err(CliError::Config(format!("duration must be positive, got {duration}")));
    }
    let data = ctx.load_data()?;
    let (model, meta) = ctx.load_ha(mode)?;
    let obj = find_object(&data, object)?;
    let seed = derive_seed(derive_seed(ctx.cfg.master_seed, ONLINE_SEED), ctx.cfg.online.seed);
    let oc = OnlineConfig {
        duration_s: duration,
        window: data.profile.window,
        frames_per_tick: ctx.cfg.online.frames_per_tick,
        buffer: ctx.cfg.online.buffer,
        seed,
        frozen: false,
    };
    let records = online_predict(
        &model,
        &meta.inference_state,
        &data.phase2.stats,
        &data.box_spec,
        &obj,
        &data.physics,
        &oc,
    )?;
    let dir = ctx.dir(ONLINE_DIR);
    std::fs::create_dir_all(&dir)?;
    write_jsonl(&dir.join("online.jsonl"), &records)?;
    let ready: Vec<_> = records.iter().filter(|r| r.status == OnlineStatus::Ready).collect();
    let shapes: Vec<_> = ready.iter().filter_map(|r| r.prediction.map(|p| p.shape)).collect();
    let ticks_per_s = crossmodal::sim::SAMPLE_RATE_HZ / oc.frames_per_tick as f64;
    let summary = OnlineSummary {
        object: object.into(),
        mode,
        duration_s: duration,
        ticks: records.len(),
        ready_ticks: ready.len(),
        first_ready_time: ready.first().map(|r| r.time),
        single_tick_flips_after_2s: single_tick_flips(&records, (2.0 * ticks_per_s).round() as usize),
        shape_stability: if shapes.len() < 2 {
            1.0
        } else {
            shapes.windows(2).filter(|w| w[0] == w[1]).count() as f64 / (shapes.len() - 1) as f64
        },
        shape_accuracy: shapes.iter().filter(|&&s| s == obj.shape).count() as f64 / shapes.len().max(1) as f64,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_run(&dir, "online", ctx, seed, t)
}

fn read_history(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|_| CliError::Missing {
        what: "training history".into(),
        path: path.to_path_buf(),
        hint: "train-ha".into(),
    })?;
    text.lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| CliError::Core(crossmodal::Error::Invalid(format!("bad history line `{l}` in {}", path.display()))))
        })
        .collect()
}

pub fn compare_curves_cmd(ctx: &Ctx) -> Result<(), CliError> {
    let t = Instant::now();
    // loading checks both checkpoints' provenance
    ctx.load_ha(Mode::Proposed)?;
    ctx.load_ha(Mode::Baseline)?;
    let p = read_history(&ctx.dir(&ha_dir(Mode::Proposed)).join("history.csv"))?;
    let b = read_history(&ctx.dir(&ha_dir(Mode::Baseline)).join("history.csv"))?;
    let cmp = compare_curves(&p, &b, 0.1)?;
    let dir = ctx.dir(CURVES_DIR);
    std::fs::create_dir_all(&dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("curves.csv"))?);
    writeln!(out, "epoch,proposed,baseline")?;
    for (i, (a, c)) in p.iter().zip(&b).enumerate() {
        writeln!(out, "{i},{a},{c}")?;
    }
    out.flush()?;
    write_json(&dir.join("curves.json"), &cmp)?;
    write_run(&dir, "compare-curves", ctx, ctx.cfg.master_seed, t)
}
