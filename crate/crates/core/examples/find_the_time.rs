// When will a patient's level cross a threshold? Place a free slice
// between two visits and solve for the time its expected level hits the
// target, exactly and by Monte Carlo.

use itbn::model::{
    Cpd, EdgeDecl, Family, GaussianLinearCpd, InitialCpd, Itbn, ItbnStructure, LinearPredictor,
    ProcessCpd, ProcessDecl,
};
use itbn::splines::SplineSpec;
use itbn::timefind::{find_time, find_time_quantile, Estimator, FreeSlice, TimeQuery};

pub fn run_example() -> itbn::Result<()> {
    // level drifts up by 0.4 per unit time and keeps most of its past
    let s = ItbnStructure::new(
        vec![ProcessDecl::new("level", Family::Gaussian)],
        vec![EdgeDecl::autoregressive("level")],
    );
    let model = Itbn::new(
        s,
        vec![ProcessCpd {
            transition: Cpd::Gaussian(GaussianLinearCpd {
                predictor: LinearPredictor {
                    alpha: SplineSpec::new(1, vec![], vec![0.0, 0.4])?,
                    beta: Some(SplineSpec::constant(1.0)),
                    gamma: vec![],
                },
                precision: 4.0,
            }),
            initial: InitialCpd::Gaussian {
                mean: 5.0,
                precision: 1.0,
            },
        }],
    )?;

    // visits at t = 0, 2 and 10; the free slice goes between 2 and 10
    let free = FreeSlice::new(
        &model,
        vec![0.0, 2.0, 10.0],
        vec![vec![Some(5.0)], vec![Some(5.6)], vec![Some(9.1)]],
    )?;
    let query = TimeQuery::new(0, (2.0, 10.0), 7.0);
    let exact = find_time(&free, &query)?;
    println!(
        "exact: level reaches 7.0 at t = {:.6} (residual {:.1e})",
        exact.t, exact.residual
    );

    let mc = find_time(
        &free,
        &query
            .with_estimator(Estimator::MonteCarlo {
                count: 20_000,
                seed: 7,
            })
            .with_tolerances(1e-3, 1e-6),
    )?;
    println!(
        "monte carlo: t = {:.4}, m(t) = {:.4} ± {:.4} over {} stages",
        mc.t,
        mc.value,
        mc.standard_error,
        mc.trace.len()
    );

    let q90 = find_time_quantile(&free, &query, 0.9)?;
    println!("90% quantile reaches 7.0 at t = {:.4}", q90.t);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
