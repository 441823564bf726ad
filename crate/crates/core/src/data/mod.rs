//! Sensor streams to normalized 20x20x3 samples, and their partition into
//! simulated clients.

mod activity;
mod csv_io;
mod dataset;
mod image;
mod partition;
mod stream;
pub mod synth;
mod window;

pub use activity::{Activity, UnknownActivity};
pub use csv_io::{load_csv, write_csv, HEADER};
pub use dataset::ClientDataset;
pub use image::{window_to_image, NormStats, WindowSample};
pub use partition::{
    bounded_composition, build_partition, build_partition_with, composition, ClientEntry,
    Partition, PartitionManifest, PartitionSpec, Scheme,
};
pub use stream::{LabelSegment, Record, SensorStream, DEFAULT_SAMPLE_RATE};
pub use synth::{synthesize_streams, SynthSpec};
pub use window::{segment_windows, windows_with, Window, WindowGeometry, OVERLAP, WINDOW_SECONDS};
