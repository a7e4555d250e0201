//! Brute-force check: integrate the discretized-continuum equations and
//! compare P1, P2 with the analytic transient result. A small grid keeps the
//! run short; the desk profile is `Discretization::desk()`.

use optoscatter::oracle::{build_initial, integrate, Discretization, OdeOptions};
use optoscatter::transient::probabilities;
use optoscatter::{MirrorInit, PhotonPacket, SystemParams, Truncation};

fn main() -> optoscatter::Result<()> {
    let params = SystemParams::new(0.3, 0.3)?;
    let packet = PhotonPacket::single_photon_resonant(&params, 0.1)?;
    let disc = Discretization::new(241, 4.0, 2)?;

    let mut sys = build_initial(&params, &packet, 0, &disc)?;
    println!("packet weight outside the window: {:.2e}", sys.norm_deficit);
    let traj = integrate(&mut sys, 20.0, 2.0, &OdeOptions::default())?;

    let times: Vec<f64> = traj.iter().map(|s| s.t).collect();
    let exact = probabilities(&MirrorInit::Fock(0), &params, &packet, &Truncation::new(2), &times)?;
    let mut worst = 0.0_f64;
    for (i, s) in traj.iter().enumerate() {
        println!(
            "t = {:5.1}  P1 {:.5} vs {:.5}  P2 {:.5} vs {:.5}",
            s.t, s.p1, exact.p1[i], s.p2, exact.p2[i]
        );
        worst = worst.max((s.p1 - exact.p1[i]).abs()).max((s.p2 - exact.p2[i]).abs());
    }
    println!("max |dP| = {worst:.3e}");
    Ok(())
}
