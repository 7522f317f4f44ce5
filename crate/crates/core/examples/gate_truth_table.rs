//! Post-selected CNOT behaviour of the CN gate on the four basis inputs.

use hpea_photonics::circuits::{
    build_cn, canonical_registry, cn_output_frame, postselected_amplitudes, A_H, A_V, B_H, C_H, C_V,
};
use hpea_photonics::fock::{apply_network, FockPolynomial, Monomial};
use hpea_photonics::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = canonical_registry();
    let gate = build_cn().then(&cn_output_frame())?;
    println!("control a, target c (photon b idle in H)");
    for (a, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let modes = [[A_H, A_V][a], B_H, [C_H, C_V][c]];
        let input = FockPolynomial::from_terms(&reg, [(Monomial::from_modes(modes), Complex64::new(1.0, 0.0))])?;
        let (amps, p) = postselected_amplitudes(&apply_network(&input, &gate)?)?;
        let (best, weight) = amps
            .iter()
            .enumerate()
            .map(|(n, z)| (n, z.norm_sqr() / p))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        println!("|{a}{c}> -> |{}{}> with weight {weight:.3}, success {p:.6}", best >> 2, best & 1);
    }
    Ok(())
}
