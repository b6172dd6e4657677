//! Build genotype kernels, center them, and check positive
//! semi-definiteness; shows the missing-genotype policy.
//!
//!     cargo run --example kernels

use nalgebra::DMatrix;
use robkat::kernel::{build_kernel, center_kernel, validate_psd};
use robkat::{GenotypeMatrix, KernelKind, KernelMatrix};

fn main() -> robkat::Result<()> {
    // 6 samples × 4 SNPs, one missing call
    let z = GenotypeMatrix::from_rows(&[
        vec![0.0, 1.0, 2.0, 0.0],
        vec![1.0, 1.0, 0.0, 0.0],
        vec![2.0, 0.0, f64::NAN, 1.0],
        vec![0.0, 2.0, 1.0, 0.0],
        vec![1.0, 1.0, 1.0, 2.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])?;
    println!("missing calls: {} (mean-imputed for linear/quadratic, mode for IBS)", z.has_missing());

    for kind in [KernelKind::Linear, KernelKind::Quadratic, KernelKind::Ibs] {
        let k = build_kernel(&z, kind, None)?;
        let kc = center_kernel(&k);
        let d = validate_psd(&kc, 1e-10)?;
        println!(
            "\n{kind} kernel (row 0: {:.3?})\n  centered row sums ≈ 0: {:.1e}; eigenvalues in [{:.3e}, {:.3}], PSD: {}",
            k.matrix().row(0).iter().collect::<Vec<_>>(),
            kc.matrix().row(0).sum().abs(),
            d.min_eigenvalue,
            d.max_eigenvalue,
            d.is_psd
        );
    }

    // weights emphasise SNPs (linear/quadratic only)
    let weighted = build_kernel(&z.impute_mean(), KernelKind::Linear, Some(&[0.5, 2.0, 1.0, 1.0]))?;
    println!("\nweighted linear K[0,0] = {:.3}", weighted.matrix()[(0, 0)]);

    // a user-supplied kernel must be symmetric PSD
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    match KernelMatrix::custom(bad) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("custom kernel rejected: {e}"),
    }
    Ok(())
}
