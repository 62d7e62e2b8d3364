//! Acceleration structure, path backtracing, shadow testing and batching.

mod accel;
mod batch;
mod path;

pub use accel::{build_accel, segment_hits_triangle, Accel};
pub use batch::{attach_fops, count_pairs, FopAttacher, StBatch, DEFAULT_BATCH_CAP};
pub use path::{path_key, Hop, RayPath, Tracer, SURFACE_OFFSET};
