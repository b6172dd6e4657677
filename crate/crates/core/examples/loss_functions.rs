//! Evaluate every loss family: ρ, ψ, IRLS weights and the standard-normal
//! expectation E[ψ²] that calibrates Proposal 2 scale.
//!
//!     cargo run --example loss_functions

use robkat::{LossFamily, LossSpec};

fn main() -> robkat::Result<()> {
    let families = [
        LossFamily::LeastSquares,
        LossFamily::Lad,
        LossFamily::Huber,
        LossFamily::Hampel,
        LossFamily::Bisquare,
    ];
    let xs = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];

    for family in families {
        let loss = LossSpec::default_for(family);
        println!(
            "{family:<9} tuning {:?}  monotone ψ: {}  E[ψ²] = {:.10}",
            loss.tuning(),
            loss.monotone_psi(),
            loss.expected_psi_sq()?
        );
        println!("    {:>5} {:>10} {:>10} {:>10}", "x", "rho", "psi", "weight");
        for &x in &xs {
            println!(
                "    {x:>5.1} {:>10.5} {:>10.5} {:>10.5}",
                loss.rho(x)?,
                loss.psi(x)?,
                loss.psi_weight(x)?
            );
        }
    }

    // custom tuning constants
    let tight = LossSpec::parse("huber", Some("0.8"))?;
    println!("\nhuber k = 0.8: E[ψ²] = {:.6}", tight.expected_psi_sq()?);
    let hampel = LossSpec::hampel(2.0, 4.0, 8.0)?;
    println!("hampel (2, 4, 8): ψ(5) = {:.4}", hampel.psi(5.0)?);
    assert!(LossSpec::hampel(3.0, 2.0, 8.0).is_err(), "a < b < r is enforced");
    Ok(())
}
