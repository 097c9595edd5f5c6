use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, DatasetBundle, GroundTruth, Keyframe, Phase1, Phase2, Profile, Sequence, Snapshot};
use crate::error::{Error, Result};
use crate::sim::{BoxSpec, ObjectSpec, PhysicsConfig, RgbImage, CHANNELS, IMAGE_SIZE};
use crate::store::{ArtifactReader, ArtifactWriter};

pub const BUNDLE_KIND: &str = "dataset";

const IMAGE_BYTES: usize = IMAGE_SIZE * IMAGE_SIZE * 3;

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    object: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SequenceMeta {
    object: usize,
    seed: u64,
    keyframes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    master_seed: u64,
    profile: Profile,
    box_spec: BoxSpec,
    physics: PhysicsConfig,
    train_objects: Vec<ObjectSpec>,
    eval_objects: Vec<ObjectSpec>,
    channel_min: Vec<f64>,
    channel_max: Vec<f64>,
    snapshots_train: Vec<RecordMeta>,
    snapshots_test: Vec<RecordMeta>,
    sequences_train: Vec<SequenceMeta>,
    sequences_test: Vec<SequenceMeta>,
    sequences_untrained: Vec<SequenceMeta>,
    /// Caller-defined provenance.
    #[serde(default)]
    extra: serde_json::Value,
}

fn put_snapshots(w: &mut ArtifactWriter, split: &str, snaps: &[Snapshot]) -> Result<Vec<RecordMeta>> {
    let n = snaps.len();
    let pixels: Vec<u8> = snaps.iter().flat_map(|s| s.image.pixels.iter().copied()).collect();
    let targets: Vec<f32> = snaps.iter().flat_map(|s| s.truth.to_target()).collect();
    w.put_u8(&format!("snapshots_{split}_images.u8"), &[n, IMAGE_SIZE, IMAGE_SIZE, 3], &pixels)?;
    w.put_f32(&format!("snapshots_{split}_targets.f32"), &[n, 5], &targets)?;
    Ok(snaps.iter().map(|s| RecordMeta { object: s.object, seed: s.seed }).collect())
}

fn put_sequences(w: &mut ArtifactWriter, split: &str, seqs: &[Sequence]) -> Result<Vec<SequenceMeta>> {
    let n = seqs.len();
    let len = seqs.first().map_or(0, |s| s.len);
    if seqs.iter().any(|s| s.len != len) {
        return Err(Error::Invalid(format!("{split} sequences differ in length")));
    }
    let frames: Vec<f32> = seqs.iter().flat_map(|s| s.frames.iter().copied()).collect();
    let targets: Vec<f32> = seqs.iter().flat_map(|s| s.targets.iter().copied()).collect();
    let keys: Vec<u8> = seqs
        .iter()
        .flat_map(|s| s.keyframes.iter().flat_map(|k| k.image.pixels.iter().copied()))
        .collect();
    let n_keys = seqs.iter().map(|s| s.keyframes.len()).sum();
    w.put_f32(&format!("sequences_{split}_frames.f32"), &[n, len, CHANNELS], &frames)?;
    w.put_f32(&format!("sequences_{split}_targets.f32"), &[n, len, 5], &targets)?;
    w.put_u8(&format!("sequences_{split}_keyframes.u8"), &[n_keys, IMAGE_SIZE, IMAGE_SIZE, 3], &keys)?;
    Ok(seqs
        .iter()
        .map(|s| SequenceMeta {
            object: s.object,
            seed: s.seed,
            keyframes: s.keyframes.iter().map(|k| k.frame).collect(),
        })
        .collect())
}

pub fn write_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    write_bundle_with(dir, bundle, serde_json::Value::Null)
}

/// Like [`write_bundle`], storing `extra` in the manifest.
pub fn write_bundle_with(dir: &Path, bundle: &DatasetBundle, extra: serde_json::Value) -> Result<()> {
    let mut w = ArtifactWriter::create(dir)?;
    let snapshots_train = put_snapshots(&mut w, "train", &bundle.phase1.train)?;
    let snapshots_test = put_snapshots(&mut w, "test", &bundle.phase1.test)?;
    let sequences_train = put_sequences(&mut w, "train", &bundle.phase2.train)?;
    let sequences_test = put_sequences(&mut w, "test", &bundle.phase2.test)?;
    let sequences_untrained = put_sequences(&mut w, "untrained", &bundle.phase2.untrained)?;
    w.finish(
        BUNDLE_KIND,
        BundleMeta {
            master_seed: bundle.master_seed,
            profile: bundle.profile.clone(),
            box_spec: bundle.box_spec.clone(),
            physics: bundle.physics.clone(),
            train_objects: bundle.train_objects.clone(),
            eval_objects: bundle.eval_objects.clone(),
            channel_min: bundle.phase2.stats.min.clone(),
            channel_max: bundle.phase2.stats.max.clone(),
            snapshots_train,
            snapshots_test,
            sequences_train,
            sequences_test,
            sequences_untrained,
            extra,
        },
    )
}

fn image(bytes: &[u8]) -> RgbImage {
    RgbImage {
        width: IMAGE_SIZE,
        height: IMAGE_SIZE,
        pixels: bytes.to_vec(),
    }
}

fn check_count(name: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Shape(format!("{name}: manifest lists {expected} records, blob holds {found}")));
    }
    Ok(())
}

fn get_snapshots(r: &ArtifactReader<BundleMeta>, split: &str, meta: &[RecordMeta]) -> Result<Vec<Snapshot>> {
    let (pixels, shape) = r.u8(&format!("snapshots_{split}_images.u8"))?;
    let (targets, _) = r.f32(&format!("snapshots_{split}_targets.f32"))?;
    check_count(split, meta.len(), shape[0])?;
    Ok(meta
        .iter()
        .enumerate()
        .map(|(i, m)| Snapshot {
            object: m.object,
            seed: m.seed,
            image: image(&pixels[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]),
            truth: GroundTruth::from_target(&targets[i * 5..(i + 1) * 5]),
        })
        .collect())
}

fn get_sequences(r: &ArtifactReader<BundleMeta>, split: &str, meta: &[SequenceMeta]) -> Result<Vec<Sequence>> {
    let (frames, shape) = r.f32(&format!("sequences_{split}_frames.f32"))?;
    let (targets, _) = r.f32(&format!("sequences_{split}_targets.f32"))?;
    let (keys, key_shape) = r.u8(&format!("sequences_{split}_keyframes.u8"))?;
    check_count(split, meta.len(), shape[0])?;
    check_count(split, meta.iter().map(|m| m.keyframes.len()).sum(), key_shape[0])?;
    let len = shape[1];
    let mut key_idx = 0;
    Ok(meta
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let keyframes = m
                .keyframes
                .iter()
                .map(|&frame| {
                    let k = key_idx;
                    key_idx += 1;
                    Keyframe {
                        frame,
                        image: image(&keys[k * IMAGE_BYTES..(k + 1) * IMAGE_BYTES]),
                    }
                })
                .collect();
            Sequence {
                object: m.object,
                seed: m.seed,
                len,
                frames: frames[i * len * CHANNELS..(i + 1) * len * CHANNELS].to_vec(),
                targets: targets[i * len * 5..(i + 1) * len * 5].to_vec(),
                keyframes,
            }
        })
        .collect())
}

/// The `extra` value stored by [`write_bundle_with`], without loading blobs.
pub fn bundle_extra(dir: &Path) -> Result<serde_json::Value> {
    let r = ArtifactReader::<serde_json::Value>::open(dir, BUNDLE_KIND)?;
    Ok(r.manifest.meta.get("extra").cloned().unwrap_or_default())
}

pub fn read_bundle(dir: &Path) -> Result<DatasetBundle> {
    let r = ArtifactReader::<BundleMeta>::open(dir, BUNDLE_KIND)?;
    let m = &r.manifest.meta;
    Ok(DatasetBundle {
        master_seed: m.master_seed,
        profile: m.profile.clone(),
        box_spec: m.box_spec.clone(),
        physics: m.physics.clone(),
        train_objects: m.train_objects.clone(),
        eval_objects: m.eval_objects.clone(),
        phase1: Phase1 {
            train: get_snapshots(&r, "train", &m.snapshots_train)?,
            test: get_snapshots(&r, "test", &m.snapshots_test)?,
        },
        phase2: Phase2 {
            stats: ChannelStats {
                min: m.channel_min.clone(),
                max: m.channel_max.clone(),
            },
            train: get_sequences(&r, "train", &m.sequences_train)?,
            test: get_sequences(&r, "test", &m.sequences_test)?,
            untrained: get_sequences(&r, "untrained", &m.sequences_untrained)?,
        },
    })
}
