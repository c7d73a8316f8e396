//! Experiment orchestration: trajectory tracking, CSV/SVG output and figure
//! reproductions.

pub mod csvio;
pub mod figures;
pub mod svg;
pub mod trajectory;

pub use csvio::{emit_csv, parse_csv, CSV_HEADER, CSV_SCHEMA_VERSION};
pub use figures::{
    figure_spec, rerun_manifest, run_experiment, run_figure, Column, ExperimentSpec, FigureName, FigureRun,
    Manifest,
};
pub use svg::{emit_svg, Axes, Curve};
pub use trajectory::{make_record, run_tracked, track, Record, Refs, Trajectory};
