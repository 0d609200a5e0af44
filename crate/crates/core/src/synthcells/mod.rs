//! Synthetic moving-blood-cell videos.

pub mod dataset;
pub mod degrade;
pub mod image;
pub mod motion;
pub mod population;
pub mod render;
pub mod video;

pub use dataset::{
    generate_dataset, split_sizes, DatasetManifest, DifficultyFeatures, ManifestEntry, Split,
    MANIFEST_FILE,
};
pub use degrade::{add_noise, assign_degradation, box_blur, DegradationCategory, DegradationSpec};
pub use image::{Image, Video};
pub use motion::{init_positions, wiener_step, Cell, CellKind};
pub use population::{label_counts, sample_population, PopulationSpec, Task};
pub use render::{render_frame, CellStyle, Palette};
pub use video::{generate_video, generate_video_seeded, GenerationConfig, VideoSample};
