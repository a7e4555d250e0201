//! Cavity-photon probabilities P1(t), P2(t) and g2(t) while a two-photon
//! packet passes through the cavity.

use optoscatter::cli::trace_csv;
use optoscatter::transient::probabilities;
use optoscatter::{MirrorInit, PhotonPacket, SystemParams, Truncation};

fn main() -> optoscatter::Result<()> {
    let params = SystemParams::new(0.3, 0.1)?;
    let packet = PhotonPacket::single_photon_resonant(&params, 0.01)?;
    let times: Vec<f64> = (0..=10).map(|i| 20.0 * i as f64).collect();
    let trace = probabilities(&MirrorInit::Fock(0), &params, &packet, &Truncation::new(4), &times)?;
    print!("{}", trace_csv(&trace));
    Ok(())
}
