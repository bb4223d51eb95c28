//! How much score mass the best `s` coordinates miss, by noise level, and
//! the knn KL estimate between two sample sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparse_score::metrics::{kl_knn, sparsity_profile, TimeBucket};
use sparse_score::schedule::VeSchedule;
use sparse_score::target::{DiagGaussian, TargetDensity};

fn main() -> sparse_score::Result<()> {
    let target: TargetDensity = DiagGaussian::new(vec![0.0; 3], vec![0.08, 1.0, 1.0])?.into();
    let sched = VeSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for bucket in [TimeBucket::All, TimeBucket::Early, TimeBucket::Late] {
        let p = sparsity_profile(&target, &[1, 2, 3], &sched, bucket, 4000, &mut rng)?;
        println!("{:<6} {:.4?} +- {:.4?}", bucket.name(), p.errors, p.stderr);
    }

    let wide: TargetDensity = DiagGaussian::new(vec![0.0; 3], vec![1.0; 3])?.into();
    let a = target.sample(2000, &mut rng);
    let b = target.sample(2000, &mut rng);
    let c = wide.sample(2000, &mut rng);
    println!("knn KL same target {:.4}", kl_knn(a.view(), b.view(), 5)?);
    println!("knn KL toy vs isotropic {:.4}", kl_knn(a.view(), c.view(), 5)?);
    Ok(())
}
