//! g2 at a fixed probe time as the coupling sweeps through the phonon
//! sideband resonances g0 = sqrt(n/2).

use optoscatter::transient::{g2_scan, sideband_resonances};
use optoscatter::{MirrorInit, Truncation};

fn main() -> optoscatter::Result<()> {
    let g0: Vec<f64> = (0..=30).map(|i| 0.6 + 0.02 * i as f64).collect();
    let points = g2_scan(&g0, 50.0, &MirrorInit::Fock(0), 0.1, 0.01, &Truncation::new(6))?;

    println!("sideband couplings: {:?}", &sideband_resonances(3)[1..]);
    for w in points.windows(3) {
        if let (Some(a), Some(b), Some(c)) = (w[0].g2, w[1].g2, w[2].g2) {
            if b > a && b > c {
                println!("local maximum g2 = {b:.4} at g0 = {:.2}", w[1].g0);
            }
        }
    }
    Ok(())
}
