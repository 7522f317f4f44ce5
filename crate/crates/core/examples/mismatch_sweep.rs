//! Holevo deviation of the probe state against mode overlap, with the
//! crossing of the shot-noise limit.

use hpea_photonics::cli::{sweep_mismatch, threshold_crossing, ExperimentConfig};
use hpea_photonics::metrics::{snl_variance, SNL_ANGLES_N7};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig { n_ens: Some(10_000), zeta: Some(0.13), ..ExperimentConfig::default() };
    let points = sweep_mismatch(&cfg)?;
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "xi", "D_H", "stderr", "exact", "F");
    for p in &points {
        println!(
            "{:>6.2} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            p.parameter, p.d_h, p.stderr, p.d_h_exact, p.fidelity
        );
    }
    let snl = snl_variance(&SNL_ANGLES_N7)?;
    match threshold_crossing(&points, snl) {
        Some(x) => println!("D_H exceeds the SNL ({snl:.4}) below xi = {x:.3}"),
        None => println!("D_H stays below the SNL ({snl:.4})"),
    }
    Ok(())
}
