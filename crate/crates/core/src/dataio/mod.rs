//! File formats: MOTChallenge text, the binary descriptor sidecar, the
//! label-assignment scene description and the synthetic scene generator.

mod assign_scene;
mod descriptors;
mod mot;
mod scene;

pub use assign_scene::{format_assignment_table, parse_assign_scene, AssignScene};
pub use descriptors::{DescriptorFile, DescriptorRecord, DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION};
pub use mot::{format_mot, parse_mot, read_mot, write_mot, MotLine};
pub use scene::{generate_scene, MotionModel, OcclusionWindow, Scene, SceneSpec};
