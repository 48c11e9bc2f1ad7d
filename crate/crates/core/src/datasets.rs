//! Synthetic two-class problems with known nonlinear boundaries, and binary
//! task construction over labelled documents.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseVector;
use crate::svm::TrainSet;
use crate::text::Document;

/// The five topics used by default.
pub const DEFAULT_TOPICS: [&str; 5] = ["earn", "acq", "money-fx", "grain", "crude"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Boundary {
    /// `y = 0.5·sin(2πx)` on `[−0.5, 0.5]²`.
    Sin,
    /// `y = 2e^{−4x²} − 1` on `[−1, 1]²`.
    Bump,
}

impl Boundary {
    /// Half-width of the square region centred at the origin.
    pub fn half_width(self) -> f64 {
        match self {
            Boundary::Sin => 0.5,
            Boundary::Bump => 1.0,
        }
    }

    pub fn height(self, x: f64) -> f64 {
        match self {
            Boundary::Sin => 0.5 * libm::sin(2.0 * core::f64::consts::PI * x),
            Boundary::Bump => 2.0 * libm::exp(-4.0 * x * x) - 1.0,
        }
    }

    /// `+1` on or above the boundary.
    pub fn label(self, x: f64, y: f64) -> i8 {
        if y >= self.height(x) {
            1
        } else {
            -1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::Sin => "sin",
            Boundary::Bump => "bump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSpec {
    pub boundary: Boundary,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(boundary: Boundary, n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            boundary,
            n_train,
            n_test,
            seed,
        }
    }
}

/// The RNG for one trial: seeded by `seed`, stream selected by `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Uniform points in the boundary's square, labelled by the boundary.
pub fn sample_points(boundary: Boundary, n: usize, rng: &mut impl Rng) -> TrainSet {
    let w = boundary.half_width();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = w * (2.0 * rng.random::<f64>() - 1.0);
        let y = w * (2.0 * rng.random::<f64>() - 1.0);
        points.push(SparseVector::from_dense(&[x, y]));
        labels.push(boundary.label(x, y));
    }
    TrainSet { points, labels }
}

/// Independent train and test sets for one trial. Not validated: a draw may
/// in principle contain a single class, which training reports.
pub fn gen_synthetic(spec: &SyntheticSpec, trial: u64) -> (TrainSet, TrainSet) {
    let mut rng = trial_rng(spec.seed, trial);
    let train = sample_points(spec.boundary, spec.n_train, &mut rng);
    let test = sample_points(spec.boundary, spec.n_test, &mut rng);
    (train, test)
}

/// Dense coordinates of a synthetic point (absent coordinates are zero).
pub fn coords(p: &SparseVector) -> (f64, f64) {
    (p.get(0), p.get(1))
}

/// Sets each document's label to the first of its topics found in
/// `selected`, or `None` when it has none of them.
pub fn assign_labels(docs: &mut [Document], selected: &[&str]) {
    for d in docs {
        d.label = d
            .topics
            .iter()
            .find(|t| selected.contains(&t.as_str()))
            .cloned();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TaskSpec {
    OneVsRest { positive: String },
    OneVsOne { positive: String, negative: String },
}

impl TaskSpec {
    pub fn name(&self) -> String {
        match self {
            TaskSpec::OneVsRest { positive } => format!("{positive} vs rest"),
            TaskSpec::OneVsOne { positive, negative } => format!("{positive} vs {negative}"),
        }
    }
}

/// Document indices and ±1 labels for a binary task over labelled documents.
///
/// One-vs-rest uses every labelled document. One-vs-one keeps documents
/// labelled with either topic, minus those listing both.
pub fn make_task(docs: &[Document], task: &TaskSpec) -> Result<(Vec<usize>, Vec<i8>)> {
    let mut idx = Vec::new();
    let mut labels = Vec::new();
    match task {
        TaskSpec::OneVsRest { positive } => {
            for (i, d) in docs.iter().enumerate() {
                if let Some(l) = &d.label {
                    idx.push(i);
                    labels.push(if l == positive { 1 } else { -1 });
                }
            }
        }
        TaskSpec::OneVsOne { positive, negative } => {
            for (i, d) in docs.iter().enumerate() {
                let Some(l) = &d.label else { continue };
                let both = d.topics.contains(positive) && d.topics.contains(negative);
                if both {
                    continue;
                }
                if l == positive {
                    idx.push(i);
                    labels.push(1);
                } else if l == negative {
                    idx.push(i);
                    labels.push(-1);
                }
            }
        }
    }
    for (cls, name) in [(1i8, "positive"), (-1i8, "negative")] {
        if !labels.contains(&cls) {
            return Err(Error::EmptyClass(format!(
                "{} has no {name} documents",
                task.name()
            )));
        }
    }
    Ok((idx, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn boundary_examples() {
        assert_eq!(Boundary::Sin.label(0.0, 0.4), 1);
        assert_eq!(Boundary::Bump.label(0.0, 0.5), -1);
        assert_eq!(Boundary::Sin.label(0.0, 0.0), 1);
    }

    #[test]
    fn reproducible_and_in_region() {
        let spec = SyntheticSpec::new(Boundary::Bump, 50, 20, 9);
        let (a, b) = gen_synthetic(&spec, 3);
        assert_eq!(gen_synthetic(&spec, 3), (a.clone(), b.clone()));
        assert_ne!(gen_synthetic(&spec, 4).0, a);
        assert_eq!((a.len(), b.len()), (50, 20));
        for (p, &l) in a.points.iter().zip(&a.labels) {
            let (x, y) = coords(p);
            assert!(x.abs() <= 1.0 && y.abs() <= 1.0);
            assert_eq!(l, Boundary::Bump.label(x, y));
        }
    }

    fn doc(id: &str, topics: &[&str]) -> Document {
        Document::new(id, "", topics.iter().map(|t| t.to_string()).collect())
    }

    #[test]
    fn tasks() {
        let mut docs = vec![
            doc("1", &["acq"]),
            doc("2", &["money-fx", "acq"]),
            doc("3", &["money-fx"]),
            doc("4", &["earn"]),
            doc("5", &["cocoa"]),
        ];
        assign_labels(&mut docs, &DEFAULT_TOPICS);
        assert_eq!(docs[1].label.as_deref(), Some("money-fx"));
        assert_eq!(docs[4].label, None);

        let ovr = make_task(
            &docs,
            &TaskSpec::OneVsRest {
                positive: "acq".into(),
            },
        )
        .unwrap();
        assert_eq!(ovr, (vec![0, 1, 2, 3], vec![1, -1, -1, -1]));

        let ab = TaskSpec::OneVsOne {
            positive: "acq".into(),
            negative: "money-fx".into(),
        };
        let ba = TaskSpec::OneVsOne {
            positive: "money-fx".into(),
            negative: "acq".into(),
        };
        let (i1, l1) = make_task(&docs, &ab).unwrap();
        let (i2, l2) = make_task(&docs, &ba).unwrap();
        assert_eq!(i1, vec![0, 2]);
        assert_eq!(i1, i2);
        assert!(l1.iter().zip(&l2).all(|(a, b)| *a == -*b));

        let none = TaskSpec::OneVsOne {
            positive: "grain".into(),
            negative: "acq".into(),
        };
        assert!(matches!(make_task(&docs, &none), Err(Error::EmptyClass(_))));
    }
}
