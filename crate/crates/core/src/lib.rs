//! Simulation of polarization-entangled photon pairs crossing a plasmonic
//! hole-array film placed at the focus of a confocal telescope.
//!
//! * [`jones`]: Jones vectors and matrices in the lab `(x, y)` basis.
//! * [`film`]: the hole-array transfer matrix `F(q, λ)`.
//! * [`optics`]: lenses, propagation and the telescope-plus-film matrix.
//! * [`quantum`]: post-selected two-photon states and visibilities.
//! * [`scenarios`]: configuration-driven experiment pipelines.

pub mod film;
pub mod jones;
pub mod optics;
pub mod quadrature;
pub mod quantum;
pub mod scenarios;

pub use film::{FilmError, FilmModel, ResonanceFamily, TabulatedFilm};
pub use jones::{ellipse_of, polarizer, rotation, JonesMatrix, JonesVector, PolarizationEllipse};
pub use optics::{
    field_map, telescope_matrix, telescope_matrix_sp, FieldMap, GridSpec, OpticsError, Quadrature,
    SetupParams, TransferMap,
};
pub use quantum::{
    concurrence, postselect_channel, singlet, BiphotonState, GramMatrix, PostselectedState,
    VisibilityResult,
};
pub use scenarios::{ScenarioConfig, ScenarioError, ScenarioKind};
