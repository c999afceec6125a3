//! Fixtures shared by the benches.

use insilico_core::factor::FactorPopulation;
use insilico_core::ingest::{Respondent, ResponseMatrix, Source};
use insilico_core::prompt::ScaleDefinition;
use insilico_core::sampling::{Ethnicity, Gender};
use insilico_core::seed::rng_for;
use insilico_core::stats::Subscale;
use nalgebra::DMatrix;

/// Three factors, three items each.
pub fn population() -> FactorPopulation {
    FactorPopulation::simple(3, 3, 0.7, 0.3)
}

pub fn continuous(n: usize, seed: u64) -> DMatrix<f64> {
    population().sample(n, &mut rng_for(seed, "bench", 0))
}

/// Normal draws cut to a 1..7 scale, with alternating gender.
pub fn likert(n: usize, seed: u64, source: Source) -> ResponseMatrix {
    let data = continuous(n, seed);
    let scale = ScaleDefinition::generic("bench", data.ncols(), 1, 7);
    let ethnicities = [Ethnicity::White, Ethnicity::Black, Ethnicity::Asian];
    let rows = (0..n)
        .map(|r| Respondent {
            id: format!("r{r}"),
            age: Some(20 + (r % 50) as u32),
            gender: Some(if r % 2 == 0 { Gender::Female } else { Gender::Male }),
            ethnicity: ethnicities[r % ethnicities.len()],
            values: (0..data.ncols())
                .map(|c| Some((4.0 + 1.5 * data[(r, c)]).round().clamp(1.0, 7.0)))
                .collect(),
        })
        .collect();
    ResponseMatrix::new(source, scale, rows).expect("fixture is valid")
}

pub fn subscales() -> Vec<Subscale> {
    (0..3)
        .map(|f| Subscale {
            name: format!("F{}", f + 1),
            items: (3 * f..3 * f + 3).collect(),
        })
        .collect()
}
