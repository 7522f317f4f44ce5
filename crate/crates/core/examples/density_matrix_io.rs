//! Writes a noisy probe state to the density-matrix file format, reads it
//! back and analyses it.

use hpea_photonics::circuits::{generate_optimal_state, TargetState};
use hpea_photonics::cli::{format_density_matrix, load_density_matrix, save_density_matrix};
use hpea_photonics::metrics::fidelity;
use hpea_photonics::noise::NoiseConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let state = generate_optimal_state(Some(&NoiseConfig::mismatch(0.95)))?.state;
    let path = std::env::temp_dir().join("hpea_example_state.dm");
    save_density_matrix(&path, &state)?;
    let text = format_density_matrix(&state);
    for line in text.lines().take(4) {
        println!("{}", if line.len() > 72 { &line[..72] } else { line });
    }

    let loaded = load_density_matrix(&path)?;
    println!("bit-exact round trip: {}", loaded.state.matrix() == state.matrix());
    println!("repaired on load: {}", loaded.repair.is_some());
    println!("purity = {:.6}", loaded.state.purity());
    println!("fidelity with target = {:.6}", fidelity(&loaded.state, &TargetState::OptimalN7.qubit_state()?)?);
    std::fs::remove_file(&path)?;
    Ok(())
}
