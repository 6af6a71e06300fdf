//! Run configuration: every tunable behind one flat `key = value` namespace.

use std::fmt::Write;
use std::path::Path;

use crate::association::image_diagonal;
use crate::error::{Error, Result};
use crate::label_assign::AssignConfig;
use crate::lifting::{CompletionConfig, RotationMode};
use crate::metrics::DEFAULT_IOU_THRESHOLD;
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub completion: CompletionConfig,
    pub assign: AssignConfig,
    pub use_l1: bool,
    /// Gaussian head-weighting width in pixels.
    pub sigma: f64,
    pub iou_threshold: f64,
    pub image_width: f64,
    pub image_height: f64,
    /// Seed of the xoshiro256++ generator used by the scene simulator.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            completion: CompletionConfig::default(),
            assign: AssignConfig::default(),
            use_l1: false,
            sigma: 8.0,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            image_width: 1920.0,
            image_height: 1080.0,
            seed: 42,
        }
    }
}

type Getter = fn(&RunConfig) -> String;
type Setter = fn(&mut RunConfig, &str) -> Result<()>;

struct Key {
    name: &'static str,
    doc: &'static str,
    get: Getter,
    set: Setter,
}

fn parse<T: std::str::FromStr>(value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {value:?}")))
}

macro_rules! key {
    ($name:literal, $doc:literal, |$c:ident| $field:expr) => {
        Key {
            name: $name,
            doc: $doc,
            get: |$c: &RunConfig| $field.to_string(),
            set: |$c: &mut RunConfig, v: &str| {
                $field = parse(v)?;
                Ok(())
            },
        }
    };
}

const KEYS: &[Key] = &[
    key!("w_app", "weight of the appearance cost", |c| c.tracker.association.w_app),
    key!("w_mot", "weight of the motion cost", |c| c.tracker.association.w_mot),
    key!("lambda_cls", "appearance weight of the classification feature", |c| c.tracker.association.feature_weights.cls),
    key!("lambda_reg", "appearance weight of the regression feature", |c| c.tracker.association.feature_weights.reg),
    key!("lambda_head", "appearance weight of the head feature", |c| c.tracker.association.feature_weights.head),
    key!("gate_g", "pairs with a fused cost above this are never matched", |c| c.tracker.association.gate_g),
    key!("patience_w", "frames a track survives without a match", |c| c.tracker.patience_w),
    key!("min_hits", "matches before a track is reported", |c| c.tracker.min_hits),
    key!("init_score_min", "minimum detection score to start a track", |c| c.tracker.init_score_min),
    key!("emit_predictions", "report coasting boxes of confirmed tracks", |c| c.tracker.emit_predictions),
    key!("descriptor_momentum", "weight of the old track descriptor in its running average", |c| c.tracker.descriptor_momentum),
    key!("epsilon_conv", "relative convergence threshold of the iterated update", |c| c.tracker.iterated.epsilon_conv),
    key!("max_iters", "iteration cap of the iterated update", |c| c.tracker.iterated.max_iters),
    key!("d_min", "minimum pseudo-depth", |c| c.completion.depth.d_min),
    key!("depth_eta", "pseudo-depth offset", |c| c.completion.depth.depth_eta),
    key!("y_normalized", "divide the box bottom by image_height before lifting", |c| c.completion.depth.y_normalized),
    Key {
        name: "rotation_mode",
        doc: "rotation of lifted poses: identity or heading",
        get: |c| match c.completion.rotation {
            RotationMode::Identity => "identity".into(),
            RotationMode::Heading => "heading".into(),
        },
        set: |c, v| {
            c.completion.rotation = match v {
                "identity" => RotationMode::Identity,
                "heading" => RotationMode::Heading,
                _ => return Err(Error::Config(format!("unknown rotation mode {v:?}"))),
            };
            Ok(())
        },
    },
    key!("process_std", "process noise of the se3_kalman twist filter", |c| c.completion.filter.process_std),
    key!("measurement_std", "measurement noise of the se3_kalman twist filter", |c| c.completion.filter.measurement_std),
    key!("filter_context", "observed frames per side used by se3_kalman", |c| c.completion.filter.context),
    Key {
        name: "max_gap",
        doc: "longest gap that is filled, 0 for no limit",
        get: |c| c.completion.max_gap.unwrap_or(0).to_string(),
        set: |c, v| {
            let n: u32 = parse(v)?;
            c.completion.max_gap = (n > 0).then_some(n);
            Ok(())
        },
    },
    key!("sigma", "Gaussian head-weighting width in pixels", |c| c.sigma),
    key!("alpha", "IoU-cost weight of label assignment", |c| c.assign.alpha),
    key!("beta", "center-region penalty of label assignment", |c| c.assign.beta),
    key!("eps_iou", "offset inside the IoU-cost logarithm", |c| c.assign.eps_iou),
    key!("q_topk", "IoU candidates summed for dynamic k", |c| c.assign.q_topk),
    key!("center_radius_factor", "center-region half-width in strides", |c| c.assign.center_radius_factor),
    key!("use_l1", "include the L1 box term in the total loss", |c| c.use_l1),
    key!("iou_threshold", "IoU needed for an evaluation match", |c| c.iou_threshold),
    key!("image_width", "image width in pixels", |c| c.image_width),
    key!("image_height", "image height in pixels", |c| c.image_height),
    key!("seed", "seed of the xoshiro256++ scene generator", |c| c.seed),
];

impl RunConfig {
    pub fn key_names() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|k| k.name)
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let k = find(key)?;
        Ok((k.get)(self))
    }

    /// Sets one key. Unknown keys and unparsable values are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = find(key)?;
        (k.set)(self, value.trim()).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its current value, as a loadable config file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{} = {}", k.name, (k.get)(self));
        }
        out
    }

    /// One line per key: name, default and description.
    pub fn describe_keys() -> String {
        let defaults = Self::default();
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "  {:<22} {:<10} {}", k.name, (k.get)(&defaults), k.doc);
        }
        out
    }

    /// Tracker configuration with the motion scale set to the image diagonal.
    pub fn tracker_config(&self) -> TrackerConfig {
        let mut t = self.tracker.clone();
        t.association.motion_scale = image_diagonal(self.image_width, self.image_height);
        t
    }

    pub fn completion_config(&self) -> CompletionConfig {
        let mut c = self.completion.clone();
        c.depth.image_height = self.image_height;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let err = |e: Error| Error::Config(e.to_string());
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config("iou_threshold must be in (0, 1]".into()));
        }
        let a = &self.assign;
        if !(a.alpha >= 0.0 && a.beta > 0.0 && a.eps_iou > 0.0 && a.q_topk > 0 && a.center_radius_factor > 0.0) {
            return Err(Error::Config("label-assignment parameters out of range".into()));
        }
        let f = &self.completion.filter;
        if !(f.process_std > 0.0 && f.measurement_std > 0.0 && f.context > 0) {
            return Err(Error::Config("twist filter parameters must be positive".into()));
        }
        self.tracker_config().validate().map_err(err)?;
        self.completion_config().depth.validate().map_err(err)
    }
}

fn find(name: &str) -> Result<&'static Key> {
    KEYS.iter()
        .find(|k| k.name == name)
        .ok_or_else(|| Error::Config(format!("unknown key {name:?}")))
}
