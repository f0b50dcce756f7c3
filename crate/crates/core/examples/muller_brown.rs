//! Simulates the Müller-Brown ensemble, trains a VDE and compares GMRQ
//! scores of the VDE, tICA and PCA coordinates.
//!
//! ```text
//! cargo run --release -p vde --example muller_brown -- [epochs] [n_splits]
//! ```

use std::time::Instant;

use vde::baselines::{LinearProjection, DEFAULT_RIDGE};
use vde::pipeline::{cross_validate, summarize, MsmParams, SplitConfig};
use vde::potentials::MullerBrownParams;
use vde::simulate::{run_ensemble, SimulationConfig};
use vde::vde::{VdeConfig, VdeModel};

fn main() -> vde::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let epochs = args.next().unwrap_or(50);
    let n_splits = args.next().unwrap_or(20);

    let t = Instant::now();
    let trajs = run_ensemble(&MullerBrownParams::default(), &SimulationConfig::default())?;
    println!("simulated {} trajectories in {:.1?}", trajs.len(), t.elapsed());

    let t = Instant::now();
    let config = VdeConfig { epochs, ..Default::default() };
    let model = VdeModel::fit_with_observer(config, &trajs, |e| {
        println!(
            "epoch {:>3}  loss {:.5}  mse {:.5}  kl {:.5}  autocorr {:?}",
            e.epoch, e.total, e.mse, e.kl, e.autocorrelation
        );
    })?;
    println!("trained in {:.1?}", t.elapsed());

    let t = Instant::now();
    let split = SplitConfig { n_splits, ..Default::default() };
    let params = MsmParams::default();
    let vde_scores = cross_validate(&trajs, &split, &params, |_, _| Ok(&model))?;
    let tica = cross_validate(&trajs, &split, &params, |tr, _| {
        LinearProjection::fit_tica(tr, params.lag, 1, DEFAULT_RIDGE)
    })?;
    let pca = cross_validate(&trajs, &split, &params, |tr, _| LinearProjection::fit_pca(tr, 1))?;
    for (name, s) in [("vde", &vde_scores), ("tica", &tica), ("pca", &pca)] {
        let (mean, se) = summarize(s);
        println!("{name:>5}  GMRQ {mean:.4} ± {se:.4}");
    }
    println!("scored in {:.1?}", t.elapsed());
    Ok(())
}
