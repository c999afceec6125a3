use insilico_core::factor::{
    fit_cfa, fit_multigroup, Estimator, FactorPopulation, FitOptions, InvarianceLevel, MeasurementModel,
};
use insilico_core::ingest::{Respondent, ResponseMatrix, Source};
use insilico_core::invariance::{run_ladder, LadderConfig};
use insilico_core::prompt::ScaleDefinition;
use insilico_core::sampling::Ethnicity;
use insilico_core::seed::rng_for;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn population(seed: u64) -> FactorPopulation {
    let mut rng = rng_for(seed, "population", 0);
    let mut pop = FactorPopulation::simple(3, 3, 0.7, 0.3);
    for i in 0..9 {
        pop.loadings[(i, i / 3)] = rng.random_range(0.5..0.85);
        pop.residual_variances[i] = rng.random_range(0.3..0.8);
        pop.intercepts[i] = rng.random_range(2.0..4.0);
    }
    pop
}

fn likert(data: &DMatrix<f64>, prefix: &str) -> ResponseMatrix {
    let scale = ScaleDefinition::generic("prop", data.ncols(), 1, 7);
    let rows = (0..data.nrows())
        .map(|r| Respondent {
            id: format!("{prefix}{r}"),
            age: None,
            gender: None,
            ethnicity: Ethnicity::Unspecified,
            values: (0..data.ncols())
                .map(|c| Some((data[(r, c)]).round().clamp(1.0, 7.0)))
                .collect(),
        })
        .collect();
    ResponseMatrix::new(Source::Simulated, scale, rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fit_is_scale_equivariant(seed in 0u64..1000, k in 0.2f64..5.0) {
        let pop = population(seed);
        let data = pop.sample(250, &mut rng_for(seed, "sample", 0));
        let model = MeasurementModel::blocks(3, 3);
        let a = fit_cfa(&data, &model, &FitOptions::default()).unwrap();
        let b = fit_cfa(&(&data * k), &model, &FitOptions::default()).unwrap();
        prop_assert!(a.converged && b.converged);
        prop_assert!((a.chi2 - b.chi2).abs() < 1e-5 * (1.0 + a.chi2));
        prop_assert!((a.cfi - b.cfi).abs() < 1e-6);
        prop_assert!((a.tli - b.tli).abs() < 1e-6);
        prop_assert!((a.rmsea - b.rmsea).abs() < 1e-6);
        // marker loadings are ratios of item scales, so they do not move;
        // factor variances pick up k²
        for (ra, rb) in a.params[0].loadings.iter().zip(&b.params[0].loadings) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() < 1e-4);
            }
        }
        let (pa, pb) = (a.params[0].factor_covariances[0][0], b.params[0].factor_covariances[0][0]);
        prop_assert!((pb - k * k * pa).abs() < 1e-4 * (1.0 + k * k * pa));
    }

    #[test]
    fn ladder_is_nested(seed in 0u64..1000, shift in 0.0f64..0.6) {
        let pop_a = population(seed);
        let mut pop_b = pop_a.clone();
        pop_b.intercepts[0] += shift;
        pop_b.loadings[(4, 1)] *= 1.0 + shift;
        let mut rng = rng_for(seed, "groups", 0);
        let groups = [pop_a.sample(200, &mut rng), pop_b.sample(220, &mut rng)];
        let model = MeasurementModel::blocks(3, 3);
        let fits: Vec<_> = InvarianceLevel::ALL
            .iter()
            .map(|&l| fit_multigroup(&groups, &model, l, &FitOptions::default()).unwrap())
            .collect();
        for w in fits.windows(2) {
            prop_assert!(w[1].df > w[0].df);
            prop_assert!(w[1].chi2 >= w[0].chi2 - 1e-6 * (1.0 + w[0].chi2));
        }
    }

    #[test]
    fn swapping_groups_keeps_verdicts(seed in 0u64..1000, shift in 0.0f64..1.0) {
        let pop_a = population(seed);
        let mut pop_b = pop_a.clone();
        pop_b.intercepts[2] += shift;
        let mut rng = rng_for(seed, "swap", 0);
        let a = likert(&pop_a.sample(180, &mut rng), "a");
        let b = likert(&pop_b.sample(200, &mut rng), "b");
        let model = MeasurementModel::blocks(3, 3);
        let cfg = LadderConfig {
            fit: FitOptions::default().with_estimator(Estimator::Mlr),
            ..LadderConfig::default()
        };
        let ab = run_ladder(&[("a".into(), a.clone()), ("b".into(), b.clone())], &model, "x", &cfg).unwrap();
        let ba = run_ladder(&[("b".into(), b), ("a".into(), a)], &model, "x", &cfg).unwrap();
        for (r, s) in ab.rungs.iter().zip(&ba.rungs) {
            prop_assert_eq!(r.classification, s.classification);
            prop_assert!((r.fit.chi2 - s.fit.chi2).abs() < 1e-6 * (1.0 + r.fit.chi2));
        }
    }
}

#[test]
fn robust_scaling_is_near_one_for_normal_data() {
    let pop = FactorPopulation::simple(3, 3, 0.7, 0.3);
    let model = MeasurementModel::blocks(3, 3);
    let opts = FitOptions::default().with_estimator(Estimator::Mlr);
    let reps = 40;
    let mut sum = 0.0;
    for r in 0..reps {
        let data = pop.sample(2000, &mut rng_for(11, "mlr", r));
        let fit = fit_cfa(&data, &model, &opts).unwrap();
        assert!((fit.scaling_factor - 1.0).abs() < 0.1, "c = {}", fit.scaling_factor);
        sum += fit.scaling_factor;
    }
    assert!((sum / reps as f64 - 1.0).abs() < 0.03);
}

#[test]
fn heavy_tails_inflate_the_scaling_factor() {
    let pop = FactorPopulation::simple(3, 3, 0.7, 0.3);
    let mut rng = rng_for(12, "tails", 0);
    let mut data = pop.sample(1500, &mut rng);
    // scale mixture of normals: same covariance shape, excess kurtosis
    for mut row in data.row_iter_mut() {
        let w: f64 = if rng.random_bool(0.1) { 3.0 } else { 0.6 };
        row *= w;
    }
    let fit = fit_cfa(&data, &MeasurementModel::blocks(3, 3), &FitOptions::default().with_estimator(Estimator::Mlr))
        .unwrap();
    assert!(fit.scaling_factor > 1.3, "c = {}", fit.scaling_factor);
    assert!(fit.chi2_scaled < fit.chi2);
}
