//! Summed ℓ1 mass vs summed AGF utility, teacher over AGF-pruned student,
//! on five independently trained teachers. Also replays the ratio
//! arithmetic on a pair of saturated-regime sums.
//!
//! `cargo run --release --example proxy_fidelity`

use chanprune::analysis::ProxyFidelityReport;
use chanprune::demos::{demo_proxy_fidelity, ProxyFidelityConfig};

fn main() -> chanprune::Result<()> {
    let saturated = ProxyFidelityReport::from_sums(232_682.0, 1_557.0, 4.89e-4, 2.29e-5)?;
    println!(
        "saturated sums: l1 ratio {:.1}x, AGF ratio {:.1}x",
        saturated.l1_ratio().unwrap(),
        saturated.agf_ratio().unwrap()
    );
    let r = demo_proxy_fidelity(&ProxyFidelityConfig::default(), None)?;
    println!("{}", r.summary());
    Ok(())
}
