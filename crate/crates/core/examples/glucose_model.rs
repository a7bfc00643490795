// The glucose-like corpus: irregular draws collapse the regular grid to
// one minute, so a discrete-time model needs far more hidden nodes than
// the irregular-time network. Fitting the irregular model and a
// grid-interpolated discrete analog shows the likelihood cost of the
// regular grid.

use itbn::learn::discrete::discrete_analog;
use itbn::learn::fit_fully_observed;
use itbn::model::node_count_comparison;
use itbn::synthetic::{glucose_like, glucose_measurement_structure};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> itbn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = glucose_like(6, 63, &mut rng)?;
    let s = glucose_measurement_structure();
    let timelines: Vec<_> = data
        .entities()
        .iter()
        .map(|e| e.timeline().clone())
        .collect();
    let (itbn_nodes, dbn_nodes) = node_count_comparison(&s, &timelines)?;
    println!("hidden nodes: irregular-time {itbn_nodes}, discrete-time {dbn_nodes}");

    let mut visible = s.clone();
    visible.processes[0].hidden = false;
    let fit = fit_fully_observed(&visible, &data)?;
    let analog = discrete_analog(&visible, &data)?;
    println!(
        "log-likelihood: irregular-time {:.2}, discrete analog {:.2} ({} grid slices at step {})",
        fit.log_likelihood, analog.log_likelihood, analog.expanded_slices, analog.step
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
