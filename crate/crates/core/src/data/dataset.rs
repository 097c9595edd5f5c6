use serde::{Deserialize, Serialize};

use crate::data::{slice_windows, ChannelStats, GroundTruth, Window, TARGET_DIM};
use crate::error::Result;
use crate::par::Exec;
use crate::rng::{derive_seed, Rng};
use crate::sim::{
    make_object_set, random_placement, render_topdown, simulate_run, BoxSpec, ObjectSpec, PhysicsConfig, RgbImage,
    CHANNELS,
};

/// Per-object record counts and sequence geometry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub snapshots_train: usize,
    pub snapshots_test: usize,
    pub sequences_train: usize,
    pub sequences_test: usize,
    /// Sequences per held-out (untrained) object.
    pub sequences_untrained: usize,
    pub sequence_len: usize,
    pub window: usize,
    pub stride: usize,
}

impl Profile {
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            snapshots_train: 30,
            snapshots_test: 4,
            sequences_train: 8,
            sequences_test: 15,
            sequences_untrained: 4,
            sequence_len: 1000,
            window: 250,
            stride: 50,
        }
    }

    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            snapshots_train: 10,
            snapshots_test: 2,
            sequences_train: 2,
            sequences_test: 4,
            sequences_untrained: 2,
            sequence_len: 500,
            window: 250,
            stride: 50,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    /// Index into the training catalog.
    pub object: usize,
    pub seed: u64,
    pub image: RgbImage,
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub frame: usize,
    pub image: RgbImage,
}

/// One simulated sequence with normalized frames and per-step targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    /// Index into the catalog the split was drawn from.
    pub object: usize,
    pub seed: u64,
    pub len: usize,
    /// `len × CHANNELS`, normalized with the training-split stats.
    pub frames: Vec<f32>,
    /// `len × TARGET_DIM`.
    pub targets: Vec<f32>,
    /// Top-down views at window boundaries: window starts for training
    /// sequences, window ends otherwise.
    pub keyframes: Vec<Keyframe>,
}

impl Sequence {
    pub fn frame(&self, k: usize) -> &[f32] {
        &self.frames[k * CHANNELS..(k + 1) * CHANNELS]
    }

    pub fn target(&self, k: usize) -> &[f32] {
        &self.targets[k * TARGET_DIM..(k + 1) * TARGET_DIM]
    }

    pub fn keyframe(&self, frame: usize) -> Option<&RgbImage> {
        self.keyframes.iter().find(|k| k.frame == frame).map(|k| &k.image)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase1 {
    pub train: Vec<Snapshot>,
    pub test: Vec<Snapshot>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase2 {
    pub stats: ChannelStats,
    pub train: Vec<Sequence>,
    pub test: Vec<Sequence>,
    /// Sequences of the held-out catalog.
    pub untrained: Vec<Sequence>,
}

impl Phase2 {
    pub fn windows(&self, split: &[Sequence], window: usize, stride: usize) -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for (i, s) in split.iter().enumerate() {
            out.extend(slice_windows(i, s.len, window, stride)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub master_seed: u64,
    pub profile: Profile,
    pub box_spec: BoxSpec,
    pub physics: PhysicsConfig,
    pub train_objects: Vec<ObjectSpec>,
    pub eval_objects: Vec<ObjectSpec>,
    pub phase1: Phase1,
    pub phase2: Phase2,
}

impl DatasetBundle {
    pub fn train_windows(&self) -> Result<Vec<Window>> {
        self.phase2.windows(&self.phase2.train, self.profile.window, self.profile.stride)
    }

    pub fn test_windows(&self) -> Result<Vec<Window>> {
        self.phase2.windows(&self.phase2.test, self.profile.window, self.profile.stride)
    }

    pub fn untrained_windows(&self) -> Result<Vec<Window>> {
        self.phase2.windows(&self.phase2.untrained, self.profile.window, self.profile.stride)
    }
}

#[derive(Clone, Copy)]
enum Split {
    SnapshotTrain = 1,
    SnapshotTest = 2,
    SequenceTrain = 3,
    SequenceTest = 4,
    SequenceUntrained = 5,
}

fn job_seed(master: u64, split: Split, index: usize) -> u64 {
    derive_seed(derive_seed(master, split as u64), index as u64)
}

fn snapshots(
    master: u64,
    split: Split,
    per_object: usize,
    objects: &[ObjectSpec],
    box_spec: &BoxSpec,
    exec: Exec,
) -> Vec<Snapshot> {
    exec.map_range(per_object * objects.len(), |i| {
        let object = i / per_object;
        let obj = &objects[object];
        let seed = job_seed(master, split, i);
        let state = random_placement(box_spec, obj, &mut Rng::new(seed));
        Snapshot {
            object,
            seed,
            image: render_topdown(&state, box_spec, Some(obj)),
            // stored as f32, so keep exactly what a reload yields
            truth: GroundTruth::from_target(
                &GroundTruth::new(state.obj_pos, state.obj_theta, obj.shape, box_spec).to_target(),
            ),
        }
    })
}

struct RawSequence {
    object: usize,
    seed: u64,
    channels: Vec<[f64; CHANNELS]>,
    targets: Vec<f32>,
    keyframes: Vec<Keyframe>,
}

#[allow(clippy::too_many_arguments)]
fn simulate_split(
    master: u64,
    split: Split,
    per_object: usize,
    objects: &[ObjectSpec],
    box_spec: &BoxSpec,
    physics: &PhysicsConfig,
    profile: &Profile,
    exec: Exec,
) -> Result<Vec<RawSequence>> {
    let at_start = matches!(split, Split::SequenceTrain);
    exec.map_range(per_object * objects.len(), |i| {
        let object = i / per_object;
        let obj = &objects[object];
        let seed = job_seed(master, split, i);
        let run = simulate_run(box_spec, obj, physics, seed, profile.sequence_len)?;
        let mut targets = Vec::with_capacity(run.states.len() * TARGET_DIM);
        for s in &run.states {
            targets.extend(GroundTruth::new(s.obj_pos, s.obj_theta, obj.shape, box_spec).to_target());
        }
        let keyframes = slice_windows(i, profile.sequence_len, profile.window, profile.stride)?
            .into_iter()
            .map(|w| {
                let frame = if at_start { w.start } else { w.last() };
                Keyframe {
                    frame,
                    image: render_topdown(&run.states[frame], box_spec, Some(obj)),
                }
            })
            .collect();
        Ok(RawSequence {
            object,
            seed,
            channels: run.frames.iter().map(|f| f.channels()).collect(),
            targets,
            keyframes,
        })
    })
    .into_iter()
    .collect()
}

fn normalize_split(raw: Vec<RawSequence>, stats: &ChannelStats) -> Vec<Sequence> {
    raw.into_iter()
        .map(|r| Sequence {
            object: r.object,
            seed: r.seed,
            len: r.channels.len(),
            frames: r.channels.iter().flat_map(|row| stats.normalize_row(row)).collect(),
            targets: r.targets,
            keyframes: r.keyframes,
        })
        .collect()
}

/// Generates both phases' data from one master seed. Every record is an
/// independent job with its own derived seed, so the result does not depend
/// on `exec`.
pub fn build_datasets(
    master_seed: u64,
    profile: &Profile,
    box_spec: &BoxSpec,
    physics: &PhysicsConfig,
    exec: Exec,
) -> Result<DatasetBundle> {
    let (train_objects, eval_objects) = make_object_set();
    for o in train_objects.iter().chain(&eval_objects) {
        o.validate(box_spec)?;
    }
    let phase1 = Phase1 {
        train: snapshots(master_seed, Split::SnapshotTrain, profile.snapshots_train, &train_objects, box_spec, exec),
        test: snapshots(master_seed, Split::SnapshotTest, profile.snapshots_test, &train_objects, box_spec, exec),
    };
    let sim = |split, n, objs: &[ObjectSpec]| {
        simulate_split(master_seed, split, n, objs, box_spec, physics, profile, exec)
    };
    let train = sim(Split::SequenceTrain, profile.sequences_train, &train_objects)?;
    let test = sim(Split::SequenceTest, profile.sequences_test, &train_objects)?;
    let untrained = sim(Split::SequenceUntrained, profile.sequences_untrained, &eval_objects)?;
    let stats = ChannelStats::from_rows(train.iter().flat_map(|r| r.channels.iter()))?;
    let phase2 = Phase2 {
        train: normalize_split(train, &stats),
        test: normalize_split(test, &stats),
        untrained: normalize_split(untrained, &stats),
        stats,
    };
    Ok(DatasetBundle {
        master_seed,
        profile: profile.clone(),
        box_spec: box_spec.clone(),
        physics: physics.clone(),
        train_objects,
        eval_objects,
        phase1,
        phase2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::classify_shape;

    pub(crate) fn tiny_profile() -> Profile {
        Profile {
            name: "tiny".into(),
            snapshots_train: 2,
            snapshots_test: 1,
            sequences_train: 1,
            sequences_test: 1,
            sequences_untrained: 1,
            sequence_len: 300,
            window: 250,
            stride: 50,
        }
    }

    #[test]
    fn counts_follow_profile() {
        let p = tiny_profile();
        let d = build_datasets(3, &p, &BoxSpec::default(), &PhysicsConfig::default(), Exec::Parallel).unwrap();
        assert_eq!(d.phase1.train.len(), 18);
        assert_eq!(d.phase1.test.len(), 9);
        assert_eq!(d.phase2.train.len(), 9);
        assert_eq!(d.phase2.untrained.len(), 8);
        assert_eq!(d.train_windows().unwrap().len(), 18);
        for s in &d.phase2.train {
            assert_eq!(s.frames.len(), 300 * CHANNELS);
            assert_eq!(s.targets.len(), 300 * TARGET_DIM);
            assert_eq!(s.keyframes.iter().map(|k| k.frame).collect::<Vec<_>>(), vec![0, 50]);
            let class = d.train_objects[s.object].shape;
            assert_eq!(classify_shape(s.target(17)[4] as f64), class);
        }
        for s in &d.phase2.test {
            assert_eq!(s.keyframes.iter().map(|k| k.frame).collect::<Vec<_>>(), vec![249, 299]);
        }
        for (i, s) in d.phase1.train.iter().enumerate() {
            assert_eq!(s.object, i / 2);
        }
        for s in &d.phase2.train {
            for v in &s.frames {
                assert!((0.2 - 1e-6..=0.8 + 1e-6).contains(&(*v as f64)));
            }
        }
    }

    #[test]
    fn full_profile_counts() {
        let p = Profile::full();
        assert_eq!(9 * p.snapshots_train, 270);
        assert_eq!(9 * p.snapshots_test, 36);
        assert_eq!(9 * p.sequences_train, 72);
        assert_eq!(9 * p.sequences_test, 135);
        assert_eq!(9 * p.sequences_train * slice_windows(0, p.sequence_len, p.window, p.stride).unwrap().len(), 1152);
    }

    #[test]
    fn independent_of_execution_policy() {
        let p = tiny_profile();
        let b = BoxSpec::default();
        let ph = PhysicsConfig::default();
        let a = build_datasets(11, &p, &b, &ph, Exec::Parallel).unwrap();
        let s = build_datasets(11, &p, &b, &ph, Exec::Sequential).unwrap();
        assert_eq!(a, s);
    }
}
