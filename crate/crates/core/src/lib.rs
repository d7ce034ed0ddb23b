//! Kalman-filter channel tracking for massive MIMO downlinks with sequentially
//! optimal pilot beam design.
//!
//! The crate is organised bottom-up:
//!
//! - [`stats`]: spatial covariance models and their Kronecker eigenstructure.
//! - [`fading`]: Gauss-Markov channel evolution and seeded random streams.
//! - [`kalman`]: full-matrix and eigen-domain Kalman recursions.
//! - [`pilot_design`]: greedy, power-allocated, block-fading and baseline pilot schedules.
//! - [`power_alloc`]: water-filling power allocation and its closed-form approximations.
//! - [`modulation`]: Gray-labelled QPSK / 16QAM mapping and detection.
//! - [`sim`]: Monte Carlo harness producing NMSE, received SNR, rate and BER series.
//!
//! Vectorised channels follow `h = vec(H)` with `H` of size `N_r x N_t`, so entry
//! `t * N_r + r` couples transmit antenna `t` with receive antenna `r`. A pilot beam
//! `s` observed through `S = s ⊗ I` yields `y = Sᴴ h + w`.

pub mod error;
pub mod fading;
pub mod kalman;
pub mod linalg;
pub mod modulation;
pub mod pilot_design;
pub mod power_alloc;
pub mod quadrature;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use fading::{init_channel, step_block, step_symbol, FadingState, RngStream};
pub use kalman::{
    block_update, eigen_update, measurement_update, nmse, predict, Covariance, KalmanState,
    PilotObservation,
};
pub use linalg::{CMatrix, CVector, C64};
pub use modulation::Modulation;
pub use pilot_design::{
    algorithm1_schedule, algorithm2_schedule, baseline_schedule, block_fading_design,
    greedy_index, problem2_schedule, Baseline, PilotSchedule, PilotUse, SlotConfig,
};
pub use power_alloc::{
    highsnr_alloc, lowsnr_alloc, waterfill, waterfill_miso, PowerProblem, WaterfillSolution,
};
pub use sim::{
    monte_carlo, run_episode, ChannelModel, Experiment, ExperimentConfig, FadingMode,
    Method, MetricSeries,
};
pub use stats::{
    doppler_coefficient, dft_tdt_approx, exp_covariance, kron_stats, one_ring_covariance,
    upa_covariance, ChannelStatistics, OneRingGeometry, SpatialCovariance, UpaGeometry,
};
