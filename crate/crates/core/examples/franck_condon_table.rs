//! Displaced-number-state overlaps: the exact table next to its first-order
//! expansion, and the completeness of each row.

use optoscatter::{fc_table, FcOrder};

fn main() -> optoscatter::Result<()> {
    let beta = 0.3;
    let dim = 6;
    let exact = fc_table(beta, dim, FcOrder::Exact)?;
    let first = fc_table(beta, dim, FcOrder::First)?;

    println!("D(beta = {beta}), exact:");
    print!("{}", exact.to_csv());

    let worst = (0..dim)
        .flat_map(|m| (0..dim).map(move |n| (m, n)))
        .map(|(m, n)| (exact.get(m, n) - first.get(m, n)).abs())
        .fold(0.0, f64::max);
    println!("max |exact - first order| = {worst:.3e}");

    let wide = fc_table(beta, 40, FcOrder::Exact)?;
    for m in 0..3 {
        let norm: f64 = wide.row(m).iter().map(|x| x * x).sum();
        println!("row {m}: sum_n D[m][n]^2 = {norm:.15}");
    }
    Ok(())
}
