//! Power curves: rejection rate at α = 0.05 as the genetic effect c grows,
//! for Huber, LAD and least squares. Writes the table as TSV.
//!
//!     cargo run --release --example power_curve [-- cauchy|t3|normal|chisq1|mix10|mix30 [linear|nonlinear]]

use robkat::sim::{run_simulation, SimConfig};

fn main() -> robkat::Result<()> {
    let mut args = std::env::args().skip(1);
    let error_dist = args.next().unwrap_or_else(|| "cauchy".into()).parse()?;
    let h_form = args.next().unwrap_or_else(|| "linear".into()).parse()?;
    let cfg = SimConfig {
        n: 100,
        error_dist,
        h_form,
        c_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0],
        losses: vec!["huber".into(), "lad".into(), "ls".into()],
        replications: 300,
        alpha_levels: vec![0.05],
        seed: 5,
        ..SimConfig::default()
    };
    let res = run_simulation(&cfg)?;
    res.write_tsv(std::io::stdout().lock()).expect("stdout");
    Ok(())
}
