// Posterior of a latent level from a noisy sensor with missing readings,
// checked against dense conditioning, then a forecast past the last slice.

use itbn::infer::{exact_joint, predict, smooth, smooth_slices, Evidence, SliceBelief};
use itbn::model::{
    Cpd, EdgeDecl, Family, GaussianLinearCpd, InitialCpd, Itbn, ItbnStructure, LinearPredictor,
    NodeId, ProcessCpd, ProcessDecl, SliceLag,
};
use itbn::splines::SplineSpec;

/// Latent `level` that relaxes towards 10 faster over longer gaps, read by
/// an unbiased `sensor`.
pub fn tracking_model() -> itbn::Result<Itbn> {
    let s = ItbnStructure::new(
        vec![
            ProcessDecl::new("level", Family::Gaussian).hidden(),
            ProcessDecl::new("sensor", Family::Gaussian),
        ],
        vec![
            EdgeDecl::autoregressive("level"),
            EdgeDecl::gamma("level", "sensor", SliceLag::INTRA),
        ],
    );
    Itbn::new(
        s,
        vec![
            ProcessCpd {
                transition: Cpd::Gaussian(GaussianLinearCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::new(1, vec![4.0], vec![1.0, 0.5, -0.5])?,
                        beta: Some(SplineSpec::new(1, vec![4.0], vec![0.9, -0.05, 0.05])?),
                        gamma: vec![],
                    },
                    precision: 2.0,
                }),
                initial: InitialCpd::Gaussian {
                    mean: 10.0,
                    precision: 0.25,
                },
            },
            ProcessCpd {
                transition: Cpd::Gaussian(GaussianLinearCpd {
                    predictor: LinearPredictor {
                        alpha: SplineSpec::constant(0.0),
                        beta: None,
                        gamma: vec![1.0],
                    },
                    precision: 4.0,
                }),
                initial: InitialCpd::Gaussian {
                    mean: 0.0,
                    precision: 4.0,
                },
            },
        ],
    )
}

pub fn run_example() -> itbn::Result<()> {
    let model = tracking_model()?;
    let times = [0.0, 1.5, 2.0, 6.0, 7.5, 11.0];
    let readings = [Some(9.2), None, Some(10.4), Some(11.9), None, Some(10.1)];
    let g = model.unroll_times(&times)?;
    let mut ev = Evidence::new();
    for (j, r) in readings.iter().enumerate() {
        if let Some(v) = r {
            ev.insert(1, j, *v);
        }
    }

    let kalman = smooth(&g, &ev)?;
    let all: Vec<NodeId> = (0..g.len()).map(NodeId).collect();
    let dense = exact_joint(&g, &ev, &all)?;
    let mut worst: f64 = 0.0;
    for (j, t) in times.iter().enumerate() {
        let a = kalman.get(0, j).unwrap();
        let b = dense.get(0, j).unwrap();
        worst = worst
            .max((a.mean - b.mean).abs())
            .max((a.variance - b.variance).abs());
        println!(
            "t = {t:>4}: level {:.3} (sd {:.3})",
            a.mean,
            a.variance.sqrt()
        );
    }
    println!("largest smoother / dense difference {worst:.1e}");

    let last: SliceBelief = smooth_slices(&g, &ev)?.pop().unwrap();
    let ahead = predict(&model, &last, 14.0)?;
    println!(
        "forecast at t = 14: level {:.3} (sd {:.3})",
        ahead.mean[0],
        ahead.variance(0).sqrt()
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
