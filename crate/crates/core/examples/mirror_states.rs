//! g2 at one instant for different initial mirror states: Fock, a coherent
//! superposition and a thermal mixture.

use optoscatter::transient::probabilities;
use optoscatter::{Complex64, MirrorInit, PhotonPacket, SystemParams, Truncation};

fn main() -> optoscatter::Result<()> {
    let params = SystemParams::new(0.3, 0.1)?;
    let packet = PhotonPacket::single_photon_resonant(&params, 0.01)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mirrors = [
        ("fock 0", MirrorInit::Fock(0)),
        ("fock 1", MirrorInit::Fock(1)),
        ("(|0> + |1>)/sqrt2", MirrorInit::Pure(vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)])),
        ("thermal nbar=1", MirrorInit::Thermal(1.0)),
    ];
    let tol = 1e-3;
    for (name, mirror) in mirrors {
        let n_max = mirror.required_cutoff(tol);
        let trunc = Truncation::from_fc_tail(&params, n_max, tol);
        let tr = probabilities(&mirror, &params, &packet, &trunc, &[50.0])?;
        println!("{name:>20}: n_ph = {:2}, g2(50) = {:.4}", trunc.n_ph, tr.g2[0].unwrap_or(f64::NAN));
    }
    Ok(())
}
