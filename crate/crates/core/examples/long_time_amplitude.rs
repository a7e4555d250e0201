//! The scattered two-photon amplitude C(infinity) at a few detunings, and the
//! total outgoing weight, which must be 1 for a unitary scattering process.

use optoscatter::longtime::{assemble_all, long_time_norm, AmplitudeContext};
use optoscatter::quadrature::AdaptiveOptions;
use optoscatter::{Complex64, FcOrder, PhotonPacket, SystemParams, Truncation};

fn main() -> optoscatter::Result<()> {
    let params = SystemParams::new(0.5, 0.1)?;
    let packet = PhotonPacket::single_photon_resonant(&params, 0.01)?;
    let trunc = Truncation::new(6);
    let ctx = AmplitudeContext::new(params, packet, trunc, 0, FcOrder::Exact)?;

    let mut c = vec![Complex64::new(0.0, 0.0); trunc.dim()];
    for (dp, dq) in [(-0.25, -0.25), (-0.25, 0.75), (0.2, -0.6)] {
        assemble_all(&ctx, dp, dq, &mut c);
        let weight: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        println!("dp = {dp:5.2}, dq = {dq:5.2}: sum_m |C_m|^2 = {weight:.6e}, |C_0| = {:.6e}", c[0].norm());
    }

    let report = long_time_norm(&ctx, &AdaptiveOptions::default())?;
    println!(
        "outgoing norm = {:.8} (+/- {:.1e}), fallbacks = {}",
        report.value, report.error_estimate, report.fallbacks
    );
    Ok(())
}
