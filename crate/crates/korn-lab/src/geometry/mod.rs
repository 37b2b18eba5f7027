//! Raster domains and their geometry: bundled shapes rasterized onto
//! regular grids, exact distances to the discretized boundary, boundary
//! point clouds, and homogeneity (Assouad) exponent estimation.

mod assouad;
mod domains;
mod grid;
mod io;

pub use assouad::{
    assouad_estimate, box_counting, fit_line, ratio_ladder, AssouadFit, AssouadSample,
    PointCloud,
};
pub use domains::{koch_polygon, point_in_polygon, signed_area, KOCH_SIDE};
pub use grid::{
    boundary_cloud, build_domain, from_fn, from_parts, DomainKind, DomainSpec, Face, GridDomain,
    MAX_KOCH_DEPTH, MIN_RESOLUTION,
};
pub use io::{load_domain, read_domain, save_domain, write_domain};
