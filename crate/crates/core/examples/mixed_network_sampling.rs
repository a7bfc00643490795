// A meal indicator acting on glucose after an absorption delay. The
// logistic node rules out exact inference, so the posterior comes from
// likelihood weighting.

use itbn::infer::{likelihood_weighting, sample_network, Evidence};
use itbn::model::{
    BernoulliLogitCpd, Cpd, GaussianLinearCpd, InitialCpd, Itbn, LinearPredictor, ProcessCpd,
};
use itbn::splines::SplineSpec;
use itbn::synthetic::glucose_structure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> itbn::Result<()> {
    let mut s = glucose_structure(30.0);
    // fixed knots keep the example independent of data
    s.processes[0].alpha = itbn::splines::SplineConfig::fixed(1, vec![30.0]);
    s.processes[0].beta = itbn::splines::SplineConfig::fixed(1, vec![30.0]);
    let model = Itbn::new(
        s,
        vec![
            ProcessCpd {
                transition: Cpd::Gaussian(GaussianLinearCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::new(1, vec![30.0], vec![0.2, 0.01, 0.02])?,
                        beta: Some(SplineSpec::new(1, vec![30.0], vec![0.95, -0.002, -0.004])?),
                        gamma: vec![1.5],
                    },
                    precision: 4.0,
                }),
                initial: InitialCpd::Gaussian {
                    mean: 5.0,
                    precision: 1.0,
                },
            },
            ProcessCpd {
                transition: Cpd::Gaussian(GaussianLinearCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::constant(0.0),
                        beta: None,
                        gamma: vec![1.0],
                    },
                    precision: 2.0,
                }),
                initial: InitialCpd::Gaussian {
                    mean: 0.0,
                    precision: 25.0,
                },
            },
            ProcessCpd {
                transition: Cpd::Bernoulli(BernoulliLogitCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::constant(-1.0),
                        beta: None,
                        gamma: vec![],
                    },
                }),
                initial: InitialCpd::Bernoulli { p: 0.5 },
            },
        ],
    )?;

    let times = [0.0, 30.0, 40.0, 55.0, 80.0, 95.0];
    let g = model.unroll_times(&times)?;
    println!(
        "{} nodes, {} invented for the delayed meal edge",
        g.len(),
        g.invented().len()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draw = sample_network(&g, &mut rng);
    println!(
        "one ancestral draw of G' at the slices: {:?}",
        (0..times.len())
            .map(|j| (draw[g.grid_node(1, j).unwrap().0] * 100.0).round() / 100.0)
            .collect::<Vec<_>>()
    );

    // measured glucose at every slice, meal seen at t = 0
    let readings = [5.1, 5.3, 5.2, 6.9, 6.4, 6.0];
    let mut ev = Evidence::new().with(2, 0, 1.0);
    for (j, y) in readings.iter().enumerate() {
        ev.insert(1, j, *y);
    }
    let queries: Vec<_> = (0..times.len())
        .map(|j| g.grid_node(0, j).unwrap())
        .collect();
    let post = likelihood_weighting(&g, &ev, &queries, 50_000, &mut rng)?;
    for (j, e) in post.estimates.iter().enumerate() {
        println!(
            "t = {:>2}: G = {:.3} ± {:.3} (sd {:.3})",
            times[j],
            e.mean,
            e.standard_error,
            e.variance.sqrt()
        );
    }
    println!(
        "effective sample size {:.0} of {}",
        post.effective_sample_size, post.samples
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
