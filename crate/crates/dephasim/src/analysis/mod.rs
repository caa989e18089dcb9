//! Measurement pipeline on top of the coherence engine: Fourier
//! spectra of free-induction traces, four-model time-constant fitting,
//! echo-peak tracking, and the dynamical-decoupling spacing sweep.

pub mod fit;
pub mod protocols;

pub use fit::{fit_time_constant, FitModel, FitResult};
pub use protocols::{
    dd_sweep, default_spectrum_grid, echo_peak_track, echo_tail_time_constant, echo_time_constant,
    ramsey_model_candidates, ramsey_spectrum, ramsey_time_constant, DdSweepPoint, EchoPeak,
    EchoPeakSeries, EchoSearchGrid, Spectrum,
};
