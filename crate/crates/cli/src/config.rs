//! Experiment configuration: profile defaults, JSON config files and
//! dot-path overrides.

use std::path::{Path, PathBuf};

use crossmodal::data::Profile;
use crossmodal::ha::HaArch;
use crossmodal::nn::AdamConfig;
use crossmodal::par::Exec;
use crossmodal::sim::{BoxSpec, PhysicsConfig};
use crossmodal::store::sha256_hex;
use crossmodal::vision::VisionArch;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Environment variable naming the artifact root.
pub const ARTIFACTS_ENV: &str = "CROSSMODAL_ARTIFACTS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisionSection {
    pub arch: VisionArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaSection {
    pub arch: HaArch,
    pub epochs: usize,
    pub batch_windows: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineSection {
    pub object: String,
    pub duration_s: f64,
    pub seed: u64,
    pub frames_per_tick: usize,
    pub buffer: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub artifacts: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub profile: Profile,
    pub box_spec: BoxSpec,
    pub physics: PhysicsConfig,
    pub vision: VisionSection,
    pub ha: HaSection,
    pub online: OnlineSection,
    /// Execution policy; results do not depend on it.
    pub exec: Exec,
    pub paths: Paths,
}

impl ExperimentConfig {
    pub fn for_profile(name: &str) -> Result<Self, CliError> {
        let profile =
            Profile::by_name(name).ok_or_else(|| CliError::Config(format!("unknown profile `{name}` (desk or full)")))?;
        let (vision_epochs, ha_epochs) = if name == "full" { (5000, 20000) } else { (500, 2000) };
        Ok(Self {
            master_seed: 1,
            profile,
            box_spec: BoxSpec::default(),
            physics: PhysicsConfig::default(),
            vision: VisionSection {
                arch: VisionArch::default(),
                epochs: vision_epochs,
                batch_size: 32,
                adam: AdamConfig::default(),
            },
            ha: HaSection {
                arch: HaArch::default(),
                epochs: ha_epochs,
                batch_windows: 16,
                adam: AdamConfig::default(),
                clip_norm: 5.0,
            },
            online: OnlineSection {
                object: "prism-light".into(),
                duration_s: 15.0,
                seed: 0,
                frames_per_tick: 5,
                buffer: 64,
            },
            exec: Exec::Parallel,
            paths: Paths {
                artifacts: PathBuf::from("artifacts"),
            },
        })
    }

    /// Profile defaults, then the config file, then `--set` overrides.
    /// The artifact root falls back to `env_root` and then `artifacts`.
    pub fn load(
        profile: &str,
        file: Option<&Path>,
        sets: &[String],
        env_root: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let mut base = Self::for_profile(profile)?;
        if let Some(root) = env_root {
            base.paths.artifacts = root;
        }
        let mut value = serde_json::to_value(&base).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{} is not valid JSON: {e}", path.display())))?;
            merge(&mut value, overlay, "")?;
        }
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.profile;
        if p.window == 0 || p.stride == 0 || p.sequence_len < p.window {
            return Err(CliError::Config(format!(
                "profile needs 0 < window ≤ sequence_len and stride > 0 (window {}, len {}, stride {})",
                p.window, p.sequence_len, p.stride
            )));
        }
        if self.vision.arch.latent != self.ha.arch.latent {
            return Err(CliError::Config(format!(
                "vision latent ({}) must equal the LSTM hidden size ({})",
                self.vision.arch.latent, self.ha.arch.latent
            )));
        }
        self.vision.arch.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.vision.batch_size == 0 || self.ha.batch_windows == 0 {
            return Err(CliError::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }

    /// Hash of everything that can change a numeric result.
    pub fn hash(&self) -> String {
        hash_json(&serde_json::json!({
            "master_seed": self.master_seed,
            "profile": self.profile,
            "box_spec": self.box_spec,
            "physics": self.physics,
            "vision": self.vision,
            "ha": self.ha,
            "online": self.online,
        }))
    }
}

pub fn hash_json(v: &Value) -> String {
    sha256_hex(v.to_string().as_bytes())
}

fn merge(base: &mut Value, overlay: Value, path: &str) -> Result<(), CliError> {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = b.get_mut(&k).ok_or_else(|| CliError::Config(format!("unknown config key `{sub}`")))?;
                merge(slot, v, &sub)?;
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON, else taken as a string.
pub fn apply_set(value: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key.path=value")))?;
    let mut slot = &mut *value;
    for key in path.split('.') {
        slot = match slot {
            Value::Object(m) => m.get_mut(key),
            Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::Config(format!("unknown config key `{path}`")))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let d = ExperimentConfig::for_profile("desk").unwrap();
        assert_eq!((d.vision.epochs, d.ha.epochs), (500, 2000));
        let f = ExperimentConfig::for_profile("full").unwrap();
        assert_eq!((f.vision.epochs, f.ha.epochs), (5000, 20000));
        assert!(matches!(ExperimentConfig::for_profile("huge"), Err(CliError::Config(_))));
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::load(
            "desk",
            None,
            &["ha.epochs=7".into(), "vision.arch.channels.0=8".into(), "online.object=sphere-large".into()],
            Some("/tmp/x".into()),
        )
        .unwrap();
        assert_eq!(c.ha.epochs, 7);
        assert_eq!(c.vision.arch.channels[0], 8);
        assert_eq!(c.online.object, "sphere-large");
        assert_eq!(c.paths.artifacts, PathBuf::from("/tmp/x"));
        assert!(ExperimentConfig::load("desk", None, &["ha.epoch=7".into()], None).is_err());
        assert!(ExperimentConfig::load("desk", None, &["ha.epochs".into()], None).is_err());
        assert!(ExperimentConfig::load("desk", None, &["ha.epochs=\"x\"".into()], None).is_err());
        assert!(ExperimentConfig::load("desk", None, &["ha.arch.latent=10".into()], None).is_err());
    }

    #[test]
    fn config_file_merges() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("c.json");
        std::fs::write(&p, r#"{"master_seed": 9, "ha": {"epochs": 3}}"#).unwrap();
        let c = ExperimentConfig::load("desk", Some(&p), &["ha.epochs=4".into()], None).unwrap();
        assert_eq!((c.master_seed, c.ha.epochs, c.vision.epochs), (9, 4, 500));
        std::fs::write(&p, r#"{"bogus": 1}"#).unwrap();
        assert!(ExperimentConfig::load("desk", Some(&p), &[], None).is_err());
    }

    #[test]
    fn hash_ignores_paths_and_exec() {
        let a = ExperimentConfig::for_profile("desk").unwrap();
        let mut b = a.clone();
        b.paths.artifacts = "elsewhere".into();
        b.exec = Exec::Sequential;
        assert_eq!(a.hash(), b.hash());
        b.master_seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
