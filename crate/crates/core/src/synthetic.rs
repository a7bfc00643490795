//! Ready-made structures and synthetic corpora.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::learn::{ObservationSet, Record};
use crate::model::{EdgeDecl, Family, ItbnStructure, ProcessDecl, SliceLag};
use crate::splines::SplineConfig;
use crate::timegrid::Resolution;

/// Meal-to-glucose network: latent glucose `G` with varying
/// autoregression, its measurement `G'`, and a meal indicator `M` acting
/// on `G` after an absorption `delay`.
pub fn glucose_structure(delay: f64) -> ItbnStructure {
    ItbnStructure::new(
        vec![
            ProcessDecl::new("G", Family::Gaussian)
                .hidden()
                .with_alpha(SplineConfig::auto(1, 2))
                .with_beta(SplineConfig::auto(1, 2)),
            ProcessDecl::new("G'", Family::Gaussian),
            ProcessDecl::new("M", Family::Bernoulli),
        ],
        vec![
            EdgeDecl::autoregressive("G"),
            EdgeDecl::gamma("G", "G'", SliceLag::INTRA),
            EdgeDecl::gamma("M", "G", SliceLag::INTRA).with_delay(delay),
        ],
    )
}

/// Glucose-like corpus: `entities` subjects with `per_entity` irregular
/// measurements each, times in minutes since the meal.
///
/// Gaps mix routine 15/30-minute draws with jittered extra draws, so the
/// exact granularity collapses to one minute while observations stay
/// sparse.
pub fn glucose_like<R: Rng + ?Sized>(
    entities: usize,
    per_entity: usize,
    rng: &mut R,
) -> Result<ObservationSet> {
    let resolution = Resolution::unit();
    let noise = Normal::new(0.0, 0.35).expect("valid normal");
    let mut records = Vec::with_capacity(entities * per_entity);
    for e in 0..entities {
        let entity = format!("subject{}", e + 1);
        let baseline = 4.5 + rng.random::<f64>();
        let mut t: i64 = -(rng.random_range(10..40));
        let mut level = baseline;
        for i in 0..per_entity {
            let minutes = t as f64;
            let response = if minutes > 0.0 {
                3.0 * (minutes / 45.0) * (-minutes / 45.0).exp() * std::f64::consts::E
            } else {
                0.0
            };
            level = 0.6 * level + 0.4 * (baseline + response) + noise.sample(rng);
            records.push(Record {
                entity: entity.clone(),
                ticks: t,
                process: "G'".into(),
                value: level,
            });
            if i + 1 < per_entity {
                t += match rng.random_range(0..4) {
                    0 => 15,
                    1 => 30,
                    2 => rng.random_range(5..25),
                    _ => rng.random_range(20..60),
                };
            }
        }
    }
    let structure = glucose_measurement_structure();
    ObservationSet::from_records(&structure, resolution, &records)
}

/// Single observed process with a latent counterpart, used to size the
/// glucose corpus: only `G'` carries data.
pub fn glucose_measurement_structure() -> ItbnStructure {
    let mut s = ItbnStructure::new(
        vec![ProcessDecl::new("G'", Family::Gaussian)
            .hidden()
            .with_alpha(SplineConfig::auto(1, 2))
            .with_beta(SplineConfig::auto(1, 2))],
        vec![EdgeDecl::autoregressive("G'")],
    );
    s.resolution = Resolution::unit();
    s
}
