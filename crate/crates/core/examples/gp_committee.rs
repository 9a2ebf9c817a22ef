//! Four GP experts on a 1-D function, combined by every committee rule and
//! compared with a single GP on the pooled data.

use distml::data::{partition, Dataset, Labels, SplitMode, SplitSpec};
use distml::gp::{gp_fit, fit_experts, CombinationRule, Kernel};

fn main() -> distml::Result<()> {
    let xs: Vec<f64> = (0..200).map(|i| -5.0 + 10.0 * i as f64 / 199.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin() + 0.1 * (3.0 * x).cos()).collect();
    let data = Dataset::new(xs, 1, Some(Labels::Real(ys)))?;
    let parts = partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: 4, seed: 5 })?;

    let grid: Vec<Kernel> = [0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&l| [0.5, 1.0].map(|s2| Kernel::new(l, s2, 0.01)))
        .collect();
    let committee = fit_experts(&parts, &grid)?;
    let full = gp_fit(&data, committee.kernel)?;
    println!("chosen kernel: {:?} (summed log likelihood {:.3})", committee.kernel, committee.score);

    let s2 = committee.kernel.signal_variance;
    let rules = [
        ("poe", CombinationRule::poe()),
        ("gpoe", CombinationRule::gpoe(None)),
        ("bcm", CombinationRule::bcm(s2)),
        ("gbcm", CombinationRule::gbcm(None, s2)),
    ];
    let test: Vec<f64> = (0..=40).map(|i| -6.0 + 12.0 * i as f64 / 40.0).collect();
    for (name, rule) in &rules {
        let mut sq = 0.0;
        for &x in &test {
            let p = committee.predict(&[x], rule)?;
            sq += (p.mu - full.predict(&[x])?.mu).powi(2);
        }
        println!("{name:>5}: rmse vs full GP = {:.4}", (sq / test.len() as f64).sqrt());
    }

    // Far from the data every rule with weights summing to one returns the prior.
    let far = committee.predict(&[100.0], &CombinationRule::gbcm(None, s2))?;
    println!("far field: mean {:.2e}, variance {:.4} (prior {s2})", far.mu, far.var);
    Ok(())
}
