//! Free path lengths of the straight-line flow on translation surfaces with
//! obstacles placed at the cone points.
//!
//! - [`surface`]: polygons with translation gluings, cone point data, the SL(2,R) action.
//! - [`trace`]: chart-to-chart flow and the two hitting times (discs and perpendicular segments).
//! - [`zippered`]: exact return-time decomposition over horizontal transversals.
//! - [`distributions`]: Monte Carlo survivor functions and the comparisons built on them.
//! - [`io`]: surface description files and result CSVs.
//!
//! The geometry is generic over [`Scalar`] (`f64` and `f32`); the aliases at
//! the crate root fix it to `f64`, which is what the statistics layer uses.

pub mod builtins;
pub mod distributions;
pub mod geom;
pub mod io;
pub mod scalar;
pub mod surface;
pub mod trace;
pub mod zippered;

pub use distributions::{
    approximation_check, convergence_sweep, estimate_F, estimate_Ftilde, estimate_ftilde,
    ks_distance, renormalization_check, sample_uniform_state, ApproximationReport,
    ConvergenceReport, DistError, EmpiricalCCDF, RenormalizationReport, SamplePlan, TGrid,
    ThetaMode,
};
pub use geom::{renormalization_matrix, Mat2, Vec2};
pub use io::{parse_ccdf_csv, write_ccdf_csv, CsvMetadata, IoError, SurfaceSpec};
pub use scalar::Scalar;
pub use surface::{
    ConePointClass, CornerRef, EdgeGluing, EdgeRef, Polygon, StratumInfo, SurfaceError,
    TranslationSurface,
};
pub use trace::{
    flow, free_path_circular, free_path_segment, step_across_edge, CircularObstacles, HitResult,
    SegmentObstacles, TraceError, UnitTangentState,
};
pub use zippered::{
    compute_decomposition, compute_decomposition_with, Rectangle, Transversal, ZipperedConfig,
    ZipperedDecomposition, ZipperedError,
};

pub type Point = Vec2<f64>;
pub type Matrix = Mat2<f64>;
pub type Surface = TranslationSurface<f64>;
pub type Surface32 = TranslationSurface<f32>;
pub type State = UnitTangentState<f64>;
pub type Decomposition = ZipperedDecomposition<f64>;
