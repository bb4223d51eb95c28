//! Projection onto the l1 ball and the capped network output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparse_score::scorenet::{project_l1, NetConfig, ScoreModel};

fn main() -> sparse_score::Result<()> {
    let mut v = vec![3.0, -1.0, 0.5, 0.0, -2.0];
    let tau = project_l1(&mut v, 2.0);
    println!(
        "threshold {tau}, projected {v:?}, l1 {}",
        v.iter().map(|x| x.abs()).sum::<f64>()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = ScoreModel::new(3, NetConfig::default(), 1.0, &mut rng)?;
    let x = [4.0, -2.0, 1.0];
    println!(
        "He init: l1 {:.2}, |s|_1 = {:.4}",
        model.l1_norm(),
        l1(&model.forward(&x, 0.3)?)
    );
    model.project();
    println!(
        "projected: l1 {:.2}, |s|_1 = {:.3e}",
        model.l1_norm(),
        l1(&model.forward(&x, 0.3)?)
    );
    Ok(())
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}
