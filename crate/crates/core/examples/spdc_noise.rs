//! Higher-order emission of the down-conversion sources: probe-state
//! fidelity and Holevo deviation against source efficiency.

use hpea_photonics::circuits::{optimal_alpha, TargetState};
use hpea_photonics::metrics::fidelity;
use hpea_photonics::noise::{epsilon_from_counts, noisy_probe_state, schmidt_rotations, NoiseConfig, NoiseMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schmidt = schmidt_rotations(optimal_alpha())?;
    println!(
        "pair source gamma = {:.5}, beta = {:.5}; rotations theta_b = {:.4}, theta_c = {:.4}",
        schmidt.gamma, schmidt.beta, schmidt.theta_b, schmidt.theta_c
    );
    println!("eps from 5200 coincidences/s at 80 MHz = {:.4}", epsilon_from_counts(5200.0, 80e6, 0.13, 0.13)?);

    let target = TargetState::OptimalN7.qubit_state()?;
    for eps1 in [0.01, 0.05, 0.1, 0.15] {
        let probe = noisy_probe_state(&NoiseConfig::spdc(eps1, 0.05), NoiseMode::SpdcHigherOrder)?;
        println!(
            "eps1 = {eps1:.2}: F = {:.5}, heralded rate = {:.3e}, {} Fock terms",
            fidelity(&probe.state, &target)?,
            probe.success_probability,
            probe.terms
        );
    }
    Ok(())
}
