//! Simulation of planar Brownian excursions cut at horizontal levels, the
//! self-similar growth-fragmentation they carry, and the analytic identities
//! that tie the two together.

pub mod analytics;
pub mod cells;
pub mod error;
pub mod levelcut;
pub mod levy;
pub mod quad;
pub mod rng;
pub mod sampling;
pub mod ssmp;
pub mod stats;

pub use analytics::{
    cumulant_grid, estimate_m_a, estimate_t_c, find_roots, first_hit, green_rc, kappa, kappa_closed,
    martingale_value, mu_z_check, phi_plus, CumulantGrid, MartingaleReport, MuCheckReport, OccupationReport,
};
pub use cells::{
    brw_observables, positive_gf_x, simulate_cell_system, snapshot_xbar, BrwReport, Cell, CellOptions, CellSimulator,
    CellSystem, Snapshot, Truncation,
};
pub use error::{Error, Result};
pub use levelcut::{
    build_split_tree, fragments_at_level, locally_largest, offspring_of_locally_largest, sub_excursion,
    time_in_small_excursions, FragmentSet, JumpRecord, LocallyLargestPath, SplitNode, SplitTree,
};
pub use levy::{psi, sample_levy_xi, CutoffParams, LevyConfig, LevyPath, LevySampler};
pub use rng::RngKey;
pub use sampling::{
    sample_bessel3_bridge, sample_brownian_bridge, sample_cauchy_path, sample_duration, sample_excursion,
    sample_h_excursion, CauchyPath, ExcursionPath, GridSpec, HExcursionPath,
};
pub use ssmp::{cauchy_weighted_xi_oracle, lamperti_z, Lifetime, SsmpPath, SsmpSampler, WeightedSample};
