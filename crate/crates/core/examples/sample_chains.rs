//! Sampling a standard Gaussian with its exact score under the three step
//! rules, and the pure-noise variance of the plain Langevin update.

use sparse_score::sampler::{langevin_sample, SamplerConfig, StepMode};
use sparse_score::schedule::VeSchedule;
use sparse_score::score::{AnalyticScore, ZeroScore};
use sparse_score::target::{kl_gaussian_moments, DiagGaussian, TargetDensity};

fn main() -> sparse_score::Result<()> {
    let sched = VeSchedule::default();
    let target: TargetDensity = DiagGaussian::standard(3)?.into();
    let gaussian = target.as_gaussian().expect("gaussian");
    let exact = AnalyticScore::new(&target, sched);

    for mode in [StepMode::Langevin, StepMode::Snr { snr: 0.16 }, StepMode::ReverseSde] {
        let cfg = SamplerConfig {
            steps: 200,
            chains: 2000,
            mode,
            ..Default::default()
        };
        let run = langevin_sample(&exact, &sched, &cfg)?;
        println!(
            "{:<12} moment KL {:.4}",
            mode.name(),
            kl_gaussian_moments(run.finals.view(), gaussian)?
        );
    }

    let cfg = SamplerConfig {
        steps: 200,
        chains: 5000,
        ..Default::default()
    };
    let run = langevin_sample(&ZeroScore(3), &sched, &cfg)?;
    let sigma_1 = sched.sigma(1.0)?;
    let var = run.finals.var_axis(ndarray::Axis(0), 1.0);
    println!(
        "zero score: variance {:.2?}, predicted {:.2}",
        var.to_vec(),
        sigma_1 * sigma_1 + 2.0 * run.eta * cfg.steps as f64
    );
    Ok(())
}
