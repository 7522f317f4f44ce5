//! Best precision of independent single photons with optimized measurement
//! angles, against the entangled-probe Heisenberg limit.

use hpea_photonics::metrics::{hl_bound, snl_optimize, snl_variance, SNL_ANGLES_N7};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for m in [1, 3, 7] {
        let r = snl_optimize(m, 32, 1)?;
        println!("N = {m}: V_SNL = {:.6}, HL = {:.6}", r.variance, hl_bound(m)?);
    }
    println!("published seven-angle set: V = {:.6}", snl_variance(&SNL_ANGLES_N7)?);
    Ok(())
}
