//! Builds the three-photon probe state with the NCN and CN gates and
//! compares it with the ideal optimal state.

use hpea_photonics::circuits::{generate_optimal_state, optimal_alpha, trace_generator, real_alpha, TargetState};
use hpea_photonics::metrics::fidelity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alpha = optimal_alpha();
    println!("GHZ weights alpha = {alpha:.6?}");

    let trace = trace_generator(&real_alpha(alpha))?;
    println!(
        "Fock terms: input {}, after NCN {}, output {}",
        trace.input.len(),
        trace.after_ncn.len(),
        trace.output.len()
    );

    let generated = generate_optimal_state(None)?;
    let target = TargetState::OptimalN7.qubit_state()?;
    println!("success probability = {:.6} (1/18 = {:.6})", generated.success_probability, 1.0 / 18.0);
    println!("fidelity with target = {:.12}", fidelity(&generated.state, &target)?);
    for j in 0..4 {
        let ghz = TargetState::Ghz(j).amplitudes()?;
        println!("  <GHZ_{j}|rho|GHZ_{j}> = {:.6}", generated.state.expectation_pure(&ghz));
    }
    Ok(())
}
