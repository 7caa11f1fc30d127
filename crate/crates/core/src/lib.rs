//! Editing, validation and persistence of graph-structured gas pipeline
//! networks stored as GeoJSON project directories.

pub mod error;
pub mod geomath;
pub mod journal;
pub mod model;
pub mod ops;
pub mod project_io;
pub mod validation;

pub use error::{Error, Result};
pub use journal::{Command, CommandOutcome, Editor, JournalEntry};
pub use model::Dataset;
pub use project_io::{load_project, save_project, Project, ProjectManifest};
