// Gap-dependent autoregression: the pull towards the previous value
// fades as observations grow further apart, and the spline fit tracks it.

use itbn::learn::{fit_fully_observed, EntityData, ObservationSet};
use itbn::model::{EdgeDecl, Family, ItbnStructure, ProcessDecl};
use itbn::splines::SplineConfig;
use itbn::timegrid::{Resolution, Timeline};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn true_beta(gap: f64) -> f64 {
    0.9 * (-gap / 4.0).exp()
}

pub fn run_example() -> itbn::Result<()> {
    let mut s = ItbnStructure::new(
        vec![ProcessDecl::new("X", Family::Gaussian)
            .with_alpha(SplineConfig::auto(1, 3))
            .with_beta(SplineConfig::auto(1, 3))],
        vec![EdgeDecl::autoregressive("X")],
    );
    s.resolution = Resolution::unit();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let mut data = ObservationSet::for_structure(&s);
    for e in 0..20 {
        let mut ticks = vec![0i64];
        let mut x = vec![Some(2.0 + noise.sample(&mut rng))];
        for _ in 0..60 {
            let gap = rng.random_range(1..=12);
            let b = true_beta(gap as f64);
            let prev = x.last().unwrap().unwrap();
            ticks.push(ticks.last().unwrap() + gap);
            x.push(Some(2.0 * (1.0 - b) + b * prev + noise.sample(&mut rng)));
        }
        let tl = Timeline::from_ticks(format!("e{e}"), ticks, Resolution::unit())?;
        data.push(EntityData::new(
            tl,
            x.into_iter().map(|v| vec![v]).collect(),
        )?)?;
    }

    let fit = fit_fully_observed(&s, &data)?;
    let pred = &fit.processes[0].cpd.transition.predictor();
    let beta = pred.beta.as_ref().unwrap();
    println!("knots {:?}", beta.knots);
    for gap in [1.0, 2.0, 4.0, 8.0, 12.0] {
        println!(
            "gap {gap:>4}: beta true {:.3}, fitted {:.3}",
            true_beta(gap),
            beta.eval(gap)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
