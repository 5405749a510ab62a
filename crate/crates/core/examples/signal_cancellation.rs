//! A channel whose signed Taylor terms cancel over the batch: the net
//! first-order score calls it dead, the absolute-gradient score does not.
//!
//! `cargo run --example signal_cancellation`

use chanprune::data::gen_cancellation_probe;
use chanprune::demos::demo_cancellation;

fn main() -> chanprune::Result<()> {
    println!("{}\n", gen_cancellation_probe(0)?.note);
    let r = demo_cancellation(None)?;
    println!("{:>7} {:>10} {:>12}", "channel", "agf", "net taylor");
    for (c, (a, t)) in r.agf.iter().zip(&r.taylor_feature).enumerate() {
        println!("{c:>7} {a:>10.4} {t:>12.3e}");
    }
    println!("\n{}", r.summary());
    Ok(())
}
