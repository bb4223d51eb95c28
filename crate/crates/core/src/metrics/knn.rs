//! k-nearest-neighbour KL divergence estimate.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

const DIST_FLOOR: f64 = 1e-12;

/// Squared distance to the `k`-th nearest row of `pool`, skipping row `skip`.
fn kth_sq_dist(x: ArrayView1<'_, f64>, pool: ArrayView2<'_, f64>, k: usize, skip: Option<usize>) -> f64 {
    // ascending list of the k best squared distances
    let mut best = vec![f64::INFINITY; k];
    for (j, row) in pool.rows().into_iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let mut d2 = 0.0;
        for (a, b) in x.iter().zip(row) {
            d2 += (a - b) * (a - b);
            if d2 >= best[k - 1] {
                break;
            }
        }
        if d2 < best[k - 1] {
            let pos = best.partition_point(|v| *v <= d2);
            best.insert(pos, d2);
            best.pop();
        }
    }
    best[k - 1]
}

/// `KL(p || q)` from samples of each, in nats, clamped below at 0.
///
/// Uses the `k`-th neighbour distance `rho` within `samples_p` (excluding the
/// point itself) and `nu` to `samples_q`:
/// `d / n sum ln(nu / rho) + ln(m / (n - 1))`.
pub fn kl_knn(samples_p: ArrayView2<'_, f64>, samples_q: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    let (n, d) = samples_p.dim();
    let (m, dq) = samples_q.dim();
    if d != dq {
        return Err(Error::Shape {
            context: "knn KL sample width",
            expected: d,
            got: dq,
        });
    }
    if k == 0 || n <= k || m <= k {
        return Err(Error::Domain(format!(
            "knn KL needs n, m > k >= 1, got n = {n}, m = {m}, k = {k}"
        )));
    }
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = samples_p.row(i);
            let rho = kth_sq_dist(x, samples_p, k, Some(i)).sqrt().max(DIST_FLOOR);
            let nu = kth_sq_dist(x, samples_q, k, None).sqrt().max(DIST_FLOOR);
            (nu / rho).ln()
        })
        .collect();
    let sum = crate::objective::pairwise_sum(&terms);
    let est = d as f64 / n as f64 * sum + (m as f64 / (n as f64 - 1.0)).ln();
    Ok(est.max(0.0))
}
