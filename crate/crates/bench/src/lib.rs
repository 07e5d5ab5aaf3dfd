//! Workload builders shared by the criterion benches.

use kgmasd::datafactory::{InstructionSample, Theme};
use kgmasd::infotheory::DiscreteJoint;
use kgmasd::segmenter::Document;

/// `n` samples cycling through every theme.
pub fn samples(n: usize) -> Vec<InstructionSample> {
    (0..n)
        .map(|i| {
            let mut s = InstructionSample::new("Extract triples.", format!("input {i}"), "output");
            s.theme = Theme::ALL[i % Theme::ALL.len()];
            s
        })
        .collect()
}

/// Deterministic `y × s` joint with uneven mass.
pub fn joint(y: usize, s: usize) -> DiscreteJoint {
    let w = (0..y)
        .map(|i| (0..s).map(|j| 1.0 + ((i * 7 + j * 3) % 5) as f64).collect())
        .collect();
    DiscreteJoint::normalized(w).expect("positive weights")
}

/// A document of `n` sentences drawn from a few recurring topics.
pub fn document(n: usize) -> Document {
    const TOPICS: [&str; 4] = [
        "The pump bearing temperature must stay below the alarm limit.",
        "Hydrogen sulfide is a toxic gas that smells like rotten eggs.",
        "Substation voltage is checked daily by the operator.",
        "Flood barriers are inspected before the rainy season.",
    ];
    Document {
        id: "bench".into(),
        sentences: (0..n).map(|i| TOPICS[(i / 5) % TOPICS.len()].to_string()).collect(),
    }
}
