//! Outcome probabilities against the phase for the optimal probe, and the
//! analytic estimate density for the optimal and flat coefficient sets.

use std::f64::consts::PI;

use hpea_photonics::circuits::{optimal_amplitudes, TargetState};
use hpea_photonics::hpea::{outcome_distribution, Estimator, ProtocolConfig};
use hpea_photonics::metrics::analytic_pdf;
use hpea_photonics::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ProtocolConfig::new(TargetState::OptimalN7.qubit_state()?, Estimator::Binary)?;
    for phi in [0.0, PI / 8.0, PI / 4.0] {
        let d = outcome_distribution(&config, phi)?;
        let probs: Vec<String> = d.probabilities.iter().map(|p| format!("{p:.3}")).collect();
        println!("phi = {phi:.4}: P(y) = [{}]", probs.join(", "));
    }

    let optimal: Vec<Complex64> = optimal_amplitudes(7)?.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    let flat = vec![Complex64::new(8f64.sqrt().recip(), 0.0); 8];
    println!("{:>8} {:>10} {:>10}", "offset", "optimal", "flat");
    for i in 0..=8 {
        let x = PI * i as f64 / 8.0;
        println!("{x:>8.4} {:>10.5} {:>10.5}", analytic_pdf(&optimal, 0.0, x)?, analytic_pdf(&flat, 0.0, x)?);
    }
    Ok(())
}
