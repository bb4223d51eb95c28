//! Closed-form perturbed scores of the three target families.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparse_score::target::{
    fit_diag_gaussian, DiagGaussian, GaussianMixture, GaussianUniformProduct, MixtureComponent, TargetDensity,
};

fn main() -> sparse_score::Result<()> {
    let toy: TargetDensity = DiagGaussian::new(vec![0.0; 3], vec![0.08, 1.0, 1.0])?.into();
    let mix: TargetDensity = GaussianMixture::new(vec![
        MixtureComponent {
            weight: 0.5,
            gaussian: DiagGaussian::new(vec![-2.0, 0.0], vec![0.3, 0.3])?,
        },
        MixtureComponent {
            weight: 0.5,
            gaussian: DiagGaussian::new(vec![2.0, 0.0], vec![0.3, 0.3])?,
        },
    ])?
    .into();
    let product: TargetDensity =
        GaussianUniformProduct::from_parts(4, &[0], &[0.0], &[1.0], &[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)])?.into();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for target in [&toy, &mix, &product] {
        let x = vec![0.5; target.dim()];
        println!("{} (d = {})", target.kind(), target.dim());
        for sigma in [0.01, 0.5, 5.0] {
            let s = target.true_score(&x, sigma)?;
            println!(
                "  sigma {sigma:<5} log q = {:>9.4}  score = {s:.4?}",
                target.log_density(&x, sigma)?
            );
        }
        let draws = target.sample(5000, &mut rng);
        let (mean, var) = fit_diag_gaussian(draws.view())?;
        println!("  sample mean {mean:.3?}\n  sample var  {var:.3?}");
    }
    Ok(())
}
