//! Monte Carlo ensemble of the adaptive protocol with the optimal probe and
//! with the product (QPEA) input.

use hpea_photonics::circuits::TargetState;
use hpea_photonics::hpea::{qpea_state, run_ensemble, Estimator, ProtocolConfig};
use hpea_photonics::metrics::{exact_holevo_deviation, hl_bound, holevo_from_runs, qpea_bound};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_ens = 20_000;
    let seed = 42;
    for (name, state) in [("optimal", TargetState::OptimalN7.qubit_state()?), ("qpea", qpea_state(2))] {
        let config = ProtocolConfig::new(state, Estimator::Binary)?;
        let runs = run_ensemble(&config, n_ens, seed)?;
        let stats = holevo_from_runs(&runs)?;
        let exact = exact_holevo_deviation(&config, 1024)?;
        println!(
            "{name:>8}: D_H = {:.4} +- {:.4} (exact {exact:.6}, {n_ens} runs)",
            stats.deviation, stats.deviation_stderr
        );
    }
    println!("HL tan^2(pi/9) = {:.6}, QPEA bound = {:.6}", hl_bound(7)?, qpea_bound(7)?);
    Ok(())
}
