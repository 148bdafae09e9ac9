//! Sentence selection rules on one score vector.

use finex::inference::{dynamic_threshold_elbow, median, ThresholdStrategy};

fn main() -> finex::Result<()> {
    let scores = [0.1, 0.2, 0.9, 0.3, 0.25];
    println!("scores {scores:?}, median {}", median(&scores)?);
    for s in [ThresholdStrategy::fixed(0.5), ThresholdStrategy::median(0.15), ThresholdStrategy::elbow()] {
        println!("{s:<20} -> {:?}", s.select(&scores)?);
    }

    let shifted: Vec<f64> = scores.iter().map(|x| x + 0.05).collect();
    println!("shifted by +0.05, median rule -> {:?}", ThresholdStrategy::median(0.15).select(&shifted)?);

    let curve = [0.95, 0.91, 0.88, 0.41, 0.38, 0.35, 0.33];
    println!("elbow on {curve:?} -> {:?}", dynamic_threshold_elbow(&curve, 0.15)?);
    for delta in [0.0, 0.1, 0.2, 0.4] {
        println!("median(delta={delta}) on curve -> {:?}", ThresholdStrategy::median(delta).select(&curve)?);
    }
    Ok(())
}
