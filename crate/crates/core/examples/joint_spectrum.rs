//! Joint spectrum of the two scattered photons on a coarse grid, with its
//! peaks and the frequency correlation.

use optoscatter::spectrum::{joint_spectrum, spectrum_stats, GridSpec};
use optoscatter::{FcOrder, MirrorInit, PhotonPacket, SystemParams, Truncation};

fn main() -> optoscatter::Result<()> {
    let params = SystemParams::new(0.6, 0.1)?;
    let packet = PhotonPacket::single_photon_resonant(&params, 0.01)?;
    let trunc = Truncation::from_fc_tail(&params, 0, 1e-6);
    let grid = GridSpec::square(-2.5, 1.5, 121);

    let s = joint_spectrum(&params, &packet, &trunc, FcOrder::Exact, &MirrorInit::Fock(0), &grid)?;
    let stats = spectrum_stats(&s)?;
    println!("n_ph = {}", trunc.n_ph);
    print!("{}", stats.to_key_value());

    if let Some(path) = std::env::args().nth(1) {
        s.write_csv(std::fs::File::create(&path)?)?;
        println!("grid written to {path}");
    }
    Ok(())
}
