//! Hong-Ou-Mandel dip with partially distinguishable photons.

use hpea_photonics::noise::{hom_brute_force, hom_coincidence, hom_visibility};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>5} {:>5} {:>10} {:>10} {:>10}", "xi1", "xi2", "p_coin", "fock", "nu");
    for (x1, x2) in [(1.0, 1.0), (0.95, 0.95), (0.9, 0.8), (0.5, 0.5), (0.0, 1.0)] {
        let h = hom_visibility(x1, x2)?;
        let brute = hom_brute_force(x1, x2, 0.5)?;
        println!("{x1:>5.2} {x2:>5.2} {:>10.6} {brute:>10.6} {:>10.6}", h.p_coin, h.visibility);
    }
    println!("unbalanced splitter eta = 0.3, xi = 1: p_coin = {:.4}", hom_coincidence(0.3, 1.0, 1.0));
    Ok(())
}
