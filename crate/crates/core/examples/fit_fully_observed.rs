// Forward-sample a mixed Gaussian/logistic network, refit it, and read
// off coefficients with standard errors and an AICc knot choice.

use itbn::infer::sample_paths;
use itbn::learn::{fit_fully_observed, select_knot_count, FitOptions};
use itbn::model::{
    BernoulliLogitCpd, Cpd, EdgeDecl, Family, GaussianLinearCpd, InitialCpd, Itbn, ItbnStructure,
    LinearPredictor, ProcessCpd, ProcessDecl, SliceLag,
};
use itbn::splines::{SplineConfig, SplineSpec};
use itbn::timegrid::{simulate_geometric_timeline, Resolution, Timeline};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> itbn::Result<()> {
    let mut s = ItbnStructure::new(
        vec![
            ProcessDecl::new("level", Family::Gaussian)
                .with_alpha(SplineConfig::fixed(1, vec![3.0])),
            ProcessDecl::new("alarm", Family::Bernoulli),
        ],
        vec![
            EdgeDecl::autoregressive("level"),
            EdgeDecl::gamma("level", "alarm", SliceLag::INTRA),
        ],
    );
    s.resolution = Resolution::unit();
    let truth = Itbn::new(
        s.clone(),
        vec![
            ProcessCpd {
                transition: Cpd::Gaussian(GaussianLinearCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::new(1, vec![3.0], vec![0.4, 0.2, -0.25])?,
                        beta: Some(SplineSpec::constant(0.6)),
                        gamma: vec![],
                    },
                    precision: 4.0,
                }),
                initial: InitialCpd::Gaussian {
                    mean: 1.0,
                    precision: 1.0,
                },
            },
            ProcessCpd {
                transition: Cpd::Bernoulli(BernoulliLogitCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::constant(-2.0),
                        beta: None,
                        gamma: vec![1.5],
                    },
                }),
                initial: InitialCpd::Bernoulli { p: 0.3 },
            },
        ],
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = simulate_geometric_timeline(400, 0.4, &mut rng)?;
    let tl = Timeline::from_ticks("unit", g.ticks().to_vec(), Resolution::unit())?;
    let data = sample_paths(&truth, &tl, 4, &mut rng)?;

    let fit = fit_fully_observed(&s, &data)?;
    for p in &fit.processes {
        let coefs = itbn::learn::coefficients_of(p);
        let shown: Vec<String> = coefs
            .iter()
            .zip(&p.standard_errors)
            .map(|(c, se)| format!("{c:.3} ± {se:.3}"))
            .collect();
        println!("{}: {}", p.process, shown.join(", "));
    }
    println!("log-likelihood {:.3}", fit.log_likelihood);

    let auto = {
        let mut a = s.clone();
        a.processes[0].alpha = SplineConfig::auto(1, 1);
        a
    };
    let sel = select_knot_count(&auto, &data, "level", &[0, 1, 2, 3], &FitOptions::default())?;
    for sc in &sel.scores {
        println!(
            "{} knots: AICc {:?}",
            sc.knots,
            sc.aicc.map(|a| (a * 100.0).round() / 100.0)
        );
    }
    println!("chosen: {} knots", sel.best);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
