//! Noise levels of the continuous schedule and the discrete chain.

use sparse_score::schedule::{DiscreteSchedule, VeSchedule};

fn main() -> sparse_score::Result<()> {
    let ve = VeSchedule::default();
    println!("t        sigma_t      g_t^2");
    for t in [1e-5, 0.01, 0.1, 0.25, 0.5, 0.75, 1.0] {
        println!("{t:<8} {:<12.6} {:.4}", ve.sigma(t)?, ve.diffusion_sq(t));
    }

    let steps = 50;
    let d = DiscreteSchedule::make(steps, 1.0)?;
    println!("\nconstant beta = {:.6} over {steps} steps", d.beta()[0]);
    for t in [1, 10, 25, 50] {
        println!("alpha_bar[{t:>2}] = {:.6}", d.alpha_bar_at(t)?);
    }
    println!(
        "step bound {:.4}, satisfied: {}",
        d.step_bound(),
        d.satisfies_step_bound()
    );
    Ok(())
}
