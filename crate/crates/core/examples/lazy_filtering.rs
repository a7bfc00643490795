// Online filtering: each new observation grounds one slice, and the
// result matches a batch filter over the whole timeline.

use itbn::infer::{filter, Evidence, FilterSession};
use itbn::model::{
    Cpd, EdgeDecl, Family, GaussianLinearCpd, InitialCpd, Itbn, ItbnStructure, LinearPredictor,
    ProcessCpd, ProcessDecl, SliceLag,
};
use itbn::splines::SplineSpec;

pub fn run_example() -> itbn::Result<()> {
    let s = ItbnStructure::new(
        vec![
            ProcessDecl::new("x", Family::Gaussian).hidden(),
            ProcessDecl::new("y", Family::Gaussian),
        ],
        vec![
            EdgeDecl::autoregressive("x"),
            EdgeDecl::gamma("x", "y", SliceLag::INTRA),
        ],
    );
    let model = Itbn::new(
        s,
        vec![
            ProcessCpd {
                transition: Cpd::Gaussian(GaussianLinearCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::new(1, vec![], vec![0.0, 0.1])?,
                        beta: Some(SplineSpec::new(1, vec![2.0], vec![0.95, -0.1, 0.08])?),
                        gamma: vec![],
                    },
                    precision: 5.0,
                }),
                initial: InitialCpd::Gaussian {
                    mean: 0.0,
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
                    precision: 10.0,
                }),
                initial: InitialCpd::Gaussian {
                    mean: 0.0,
                    precision: 10.0,
                },
            },
        ],
    )?;

    let stream = [(0.0, 0.1), (0.7, 0.3), (3.2, 0.2), (3.5, 0.6), (9.0, 1.4)];
    let mut session = FilterSession::new(&model)?;
    for &(t, y) in &stream {
        let b = session.advance(t, &[(1, y)])?;
        println!(
            "t = {t:>3}: filtered mean {:.4}, variance {:.4}",
            b.mean[0],
            b.variance(0)
        );
    }

    let times: Vec<f64> = stream.iter().map(|s| s.0).collect();
    let mut ev = Evidence::new();
    for (j, &(_, y)) in stream.iter().enumerate() {
        ev.insert(1, j, y);
    }
    let batch = filter(&model.unroll_times(&times)?, &ev)?;
    let online = session.current()?;
    let last = batch.last().unwrap();
    println!(
        "batch agrees to {:.1e}",
        (last.mean[0] - online.mean[0])
            .abs()
            .max((last.variance(0) - online.variance(0)).abs())
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
