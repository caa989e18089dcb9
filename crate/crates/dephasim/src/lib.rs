//! Pure-dephasing dynamics of a single qubit coupled to an Ohmic or
//! sub-Ohmic bosonic bath: spectral functions, free-induction decay,
//! Hahn echo and CPMG dynamical decoupling, plus the fitting and sweep
//! protocols built on top of them.

pub mod analysis;
pub mod bath;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod parallel;
pub mod sequence;

pub use bath::{BathSpec, ExpansionConfig, Mode, ModeExpansion};
pub use dynamics::{CoherenceTrace, InitialState};
pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod test_support {
    use crate::bath::{fit_mode_expansion, BathSpec, ExpansionConfig, ModeExpansion};
    use std::sync::OnceLock;

    /// Shared Ohmic reference-bath expansion (horizon 50) so that unit
    /// tests across modules pay the fitting cost once.
    pub fn ohmic_expansion() -> &'static ModeExpansion {
        static CACHE: OnceLock<ModeExpansion> = OnceLock::new();
        CACHE.get_or_init(|| {
            let cfg = ExpansionConfig {
                t_max: 50.0,
                ..Default::default()
            };
            fit_mode_expansion(&BathSpec::reference(1.0), &cfg).unwrap()
        })
    }
}
