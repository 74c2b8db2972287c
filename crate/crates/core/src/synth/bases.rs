//! Bundled binary base distributions.

use crate::data::{Column, FeatureSchema};

use super::analytic::{rat, AnalyticDistribution, Rational};

pub const COVID_FEATURES: [&str; 7] = [
    "aged",
    "gender",
    "cough",
    "fever",
    "sore_throat",
    "shortness_of_breath",
    "contact_risk",
];

fn bern(p: Rational, code: usize) -> Rational {
    if code == 2 {
        p
    } else {
        Rational::from(1) - p
    }
}

/// Seven binary features with a binary diagnosis (class 2 = positive).
/// Half of the population is aged and the positive rate is 40% in both
/// age groups. Symptom rates depend on the diagnosis and on age, so a
/// change in the age-diagnosis mix moves symptom distributions within each
/// class.
pub fn covid_analog() -> AnalyticDistribution {
    let columns = COVID_FEATURES.iter().map(|n| Column::discrete(*n, 2)).collect();
    let schema = FeatureSchema::new(columns, 2).expect("valid schema");
    // P(symptom | y, aged), indexed [y - 1][aged code - 1], in percent
    let rates: [[[i128; 2]; 2]; 6] = [
        [[50, 50], [50, 50]], // gender
        [[10, 55], [75, 85]], // cough
        [[5, 40], [60, 80]],  // fever
        [[15, 35], [50, 45]], // sore throat
        [[5, 45], [40, 70]],  // shortness of breath
        [[30, 20], [60, 50]], // contact risk
    ];
    AnalyticDistribution::from_fn(schema, |c, y| {
        let aged = c[0];
        let mut p = rat(1, 2) * bern(rat(2, 5), y);
        for (j, r) in rates.iter().enumerate() {
            p *= bern(rat(r[y - 1][aged - 1], 100), c[j + 1]);
        }
        p
    })
    .expect("probabilities sum to one")
}

/// Class-conditional rates `(P(x = 2 | y = 1), P(x = 2 | y = 2))` in percent,
/// cycled for the generic binary base.
const BINARY_RATES: [(i128, i128); 7] = [
    (30, 60),
    (40, 70),
    (55, 30),
    (25, 50),
    (60, 40),
    (35, 65),
    (45, 25),
];

/// `d` binary features, conditionally independent given a balanced binary
/// label.
pub fn binary_base(d: usize) -> AnalyticDistribution {
    let columns = (0..d).map(|i| Column::discrete(format!("x{i}"), 2)).collect();
    let schema = FeatureSchema::new(columns, 2).expect("valid schema");
    AnalyticDistribution::from_fn(schema, |c, y| {
        let mut p = rat(1, 2);
        for (j, &code) in c.iter().enumerate() {
            let (a, b) = BINARY_RATES[j % BINARY_RATES.len()];
            p *= bern(rat(if y == 1 { a } else { b }, 100), code);
        }
        p
    })
    .expect("probabilities sum to one")
}
