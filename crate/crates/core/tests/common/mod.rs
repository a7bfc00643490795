#![allow(dead_code)]

use itbn::infer::sample_entity;
use itbn::learn::ObservationSet;
use itbn::model::{
    BernoulliLogitCpd, Cpd, EdgeDecl, Family, GaussianLinearCpd, InitialCpd, Itbn, ItbnStructure,
    LinearPredictor, ProcessCpd, ProcessDecl, SliceLag,
};
use itbn::splines::{SplineConfig, SplineSpec};
use itbn::timegrid::{Resolution, Timeline};
use rand::Rng;

pub fn gaussian(
    alpha: SplineSpec,
    beta: Option<SplineSpec>,
    gamma: Vec<f64>,
    precision: f64,
) -> Cpd {
    Cpd::Gaussian(GaussianLinearCpd {
        predictor: LinearPredictor { alpha, beta, gamma },
        precision,
    })
}

pub fn logit(alpha: SplineSpec, beta: Option<SplineSpec>, gamma: Vec<f64>) -> Cpd {
    Cpd::Bernoulli(BernoulliLogitCpd {
        predictor: LinearPredictor { alpha, beta, gamma },
    })
}

/// Random all-Gaussian ITBN with `m` processes: intra-slice edges only
/// from lower to higher index, previous-slice edges anywhere, varying
/// coefficients with one fixed knot.
pub fn random_gaussian_model<R: Rng>(m: usize, rng: &mut R) -> Itbn {
    let knot = 1.5;
    let mut processes = Vec::new();
    let mut edges = Vec::new();
    let mut cpds = Vec::new();
    for p in 0..m {
        let name = format!("P{p}");
        let ar = rng.random_bool(0.7);
        if ar {
            edges.push(EdgeDecl::autoregressive(&name));
        }
        let mut gamma = Vec::new();
        for q in 0..m {
            if q < p && rng.random_bool(0.4) {
                edges.push(EdgeDecl::gamma(&format!("P{q}"), &name, SliceLag::INTRA));
                gamma.push(rng.random_range(-1.0..1.0));
            }
            if q != p && rng.random_bool(0.3) {
                edges.push(EdgeDecl::gamma(&format!("P{q}"), &name, SliceLag::PREVIOUS));
                gamma.push(rng.random_range(-0.5..0.5));
            }
        }
        processes.push(
            ProcessDecl::new(&name, Family::Gaussian)
                .with_alpha(SplineConfig::fixed(1, vec![knot]))
                .with_beta(SplineConfig::fixed(1, vec![knot])),
        );
        let alpha = SplineSpec::new(
            1,
            vec![knot],
            vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ],
        )
        .unwrap();
        let beta = ar.then(|| {
            SplineSpec::new(
                1,
                vec![knot],
                vec![
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                ],
            )
            .unwrap()
        });
        cpds.push(ProcessCpd {
            transition: gaussian(alpha, beta, gamma, rng.random_range(0.5..5.0)),
            initial: InitialCpd::Gaussian {
                mean: rng.random_range(-1.0..1.0),
                precision: rng.random_range(0.5..3.0),
            },
        });
    }
    Itbn::new(ItbnStructure::new(processes, edges), cpds).unwrap()
}

/// Increasing times with gaps drawn from `(0.1, 3)`.
pub fn random_times<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut t = rng.random_range(-2.0..2.0);
    (0..n)
        .map(|_| {
            let now = t;
            t += rng.random_range(0.1..3.0);
            now
        })
        .collect()
}

/// Three-process mixed network: a Gaussian level with gap-varying
/// intercept and autoregression, a logistic event driven by the level,
/// and a Gaussian response to both.
pub fn mixed_model() -> Itbn {
    let knot = 2.5;
    let s = ItbnStructure::new(
        vec![
            ProcessDecl::new("level", Family::Gaussian)
                .with_alpha(SplineConfig::fixed(1, vec![knot]))
                .with_beta(SplineConfig::fixed(1, vec![knot])),
            ProcessDecl::new("event", Family::Bernoulli),
            ProcessDecl::new("response", Family::Gaussian),
        ],
        vec![
            EdgeDecl::autoregressive("level"),
            EdgeDecl::gamma("level", "event", SliceLag::INTRA),
            EdgeDecl::autoregressive("event"),
            EdgeDecl::gamma("level", "response", SliceLag::INTRA),
            EdgeDecl::gamma("event", "response", SliceLag::PREVIOUS),
        ],
    );
    let mut s = s;
    s.resolution = Resolution::unit();
    Itbn::new(
        s,
        vec![
            ProcessCpd {
                transition: gaussian(
                    SplineSpec::new(1, vec![knot], vec![0.5, 0.1, -0.15]).unwrap(),
                    Some(SplineSpec::new(1, vec![knot], vec![0.7, -0.05, 0.04]).unwrap()),
                    vec![],
                    4.0,
                ),
                initial: InitialCpd::Gaussian {
                    mean: 1.0,
                    precision: 2.0,
                },
            },
            ProcessCpd {
                transition: logit(
                    SplineSpec::constant(-1.5),
                    Some(SplineSpec::constant(1.0)),
                    vec![0.8],
                ),
                initial: InitialCpd::Bernoulli { p: 0.3 },
            },
            ProcessCpd {
                transition: gaussian(SplineSpec::constant(0.2), None, vec![1.2, -0.7], 9.0),
                initial: InitialCpd::Gaussian {
                    mean: 1.0,
                    precision: 1.0,
                },
            },
        ],
    )
    .unwrap()
}

/// Structure the mixed model is fitted with.
pub fn mixed_structure() -> ItbnStructure {
    mixed_model().structure
}

/// `entities` forward-sampled entities of `slices` slices each, with
/// gaps drawn uniformly from `1..=6` ticks.
pub fn sample_corpus<R: Rng>(
    model: &Itbn,
    entities: usize,
    slices: usize,
    rng: &mut R,
) -> ObservationSet {
    let res = model.structure.resolution;
    let mut data = ObservationSet::for_structure(&model.structure);
    for e in 0..entities {
        let mut ticks = vec![0i64];
        for _ in 1..slices {
            ticks.push(ticks.last().unwrap() + rng.random_range(1..=6));
        }
        let tl = Timeline::from_ticks(format!("e{e}"), ticks, res).unwrap();
        data.push(sample_entity(model, &tl, rng).unwrap()).unwrap();
    }
    data
}
