//! Calibrating per-outcome estimates for a probe whose photon c picked up a
//! stray phase. With full feedback the outcome distributions are shifted
//! copies of each other, so calibration removes the estimator bias while the
//! Holevo deviation, which ignores a common offset, is unchanged.

use hpea_photonics::circuits::optimal_amplitudes;
use hpea_photonics::hpea::{binary_estimate, Estimator, ProtocolConfig};
use hpea_photonics::metrics::{calibrate_estimator, holevo_from_table, tabulate};
use hpea_photonics::qubit::QubitState;
use hpea_photonics::Complex64;
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Photon c is the least significant qubit: a phase on its V rail
    // multiplies the odd amplitudes.
    let delta = 0.6;
    let psi = optimal_amplitudes(7)?;
    let probe = DVector::from_fn(8, |n, _| Complex64::from_polar(psi[n], -((n & 1) as f64) * delta));
    let config = ProtocolConfig::new(QubitState::from_pure(&probe)?, Estimator::Binary)?;

    let table = tabulate(&config, 720)?;
    let calibrated = Estimator::Calibrated(calibrate_estimator(&table)?);
    for y in 0..config.outcomes() {
        println!(
            "y = {y}: binary {:.4}, calibrated {:.4}",
            binary_estimate(config.k, y),
            calibrated.estimate(config.k, y)
        );
    }
    for (name, est) in [("binary", Estimator::Binary), ("calibrated", calibrated)] {
        let mean: Complex64 = table.iter().map(|d| d.resultant(&est)).sum();
        println!(
            "{name:>10}: bias {:+.5} rad, D_H {:.6}",
            mean.arg(),
            holevo_from_table(&table, &est)?
        );
    }
    Ok(())
}
