// Exact timelines, granularity and how much smaller an irregular-time
// network is than a regular-grid expansion.

use itbn::timegrid::{compression_study, discrete_expansion_size, gaps, Resolution, Timeline};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> itbn::Result<()> {
    let res = Resolution::parse("0.25")?;
    let ticks = ["0", "0.5", "2.25", "3", "7.75"]
        .iter()
        .map(|t| res.ticks_from_str(t))
        .collect::<itbn::Result<Vec<_>>>()?;
    let tl = Timeline::from_ticks("patient", ticks, res)?;
    let g = gaps(&tl)?;
    println!("gaps {:?}, granularity {}", g.gaps(), g.granularity());
    println!(
        "{} observed slices vs {} regular slices",
        tl.len(),
        discrete_expansion_size(&tl)?
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [0.2, 0.5, 0.9] {
        let s = compression_study(10_000, p, 20, &mut rng)?;
        println!(
            "p = {p}: mean ratio {:.3} (1/p = {:.3}), Pr(granularity = 1) = {:.2}",
            s.mean_ratio, s.expected_ratio, s.prob_unit_granularity
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
