use insilico_core::factor::FactorPopulation;
use insilico_core::ingest::{Respondent, ResponseMatrix, Source};
use insilico_core::prompt::ScaleDefinition;
use insilico_core::prototyper::{
    compute_cvi, cvi_screen, prototype_scale, replay_trail, CviRule, ExpertRating, PrototypeConfig, PrototypeError,
};
use insilico_core::sampling::Ethnicity;
use insilico_core::seed::rng_for;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Clustered items followed by `noise` pure-noise items, cut to a 1..7 scale.
fn clustered(sizes: &[usize], loading: f64, noise: usize, n: usize, seed: u64) -> ResponseMatrix {
    let m = sizes.len();
    let structural: usize = sizes.iter().sum();
    let p = structural + noise;
    let mut owner = Vec::new();
    for (f, &s) in sizes.iter().enumerate() {
        owner.extend(std::iter::repeat_n(f, s));
    }
    let mut pop = FactorPopulation::simple(m, 1, loading, 0.3);
    pop.loadings = DMatrix::from_fn(p, m, |i, f| if i < structural && owner[i] == f { loading } else { 0.0 });
    pop.residual_variances = DVector::from_fn(p, |i, _| if i < structural { 1.0 - loading * loading } else { 1.0 });
    pop.intercepts = DVector::zeros(p);
    let data = pop.sample(n, &mut rng_for(seed, "prototype_flow", 0));
    let scale = ScaleDefinition::generic("draft", p, 1, 7);
    let rows = (0..n)
        .map(|r| Respondent {
            id: format!("p{r}"),
            age: None,
            gender: None,
            ethnicity: Ethnicity::Unspecified,
            values: (0..p).map(|c| Some((4.0 + 1.5 * data[(r, c)]).round().clamp(1.0, 7.0))).collect(),
        })
        .collect();
    ResponseMatrix::new(Source::Simulated, scale, rows).unwrap()
}

#[test]
fn trail_replays_to_the_same_prototype() {
    let sim = clustered(&[3, 3, 3], 0.7, 3, 400, 1);
    let cols: Vec<usize> = (0..12).collect();
    let cfg = PrototypeConfig::default();
    let proto = prototype_scale(&sim, &cols, &cfg).unwrap();
    assert!(proto.trail.len() <= cols.len());
    let iterations: Vec<usize> = proto.trail.iter().map(|s| s.iteration).collect();
    assert_eq!(iterations, (0..proto.trail.len()).collect::<Vec<_>>(), "one item per iteration");
    assert!(proto.unresolved.is_empty());
    assert!(proto.is_self_consistent());
    let again = replay_trail(&sim, &cols, &proto.trail, &cfg).unwrap();
    assert_eq!(again, proto);
    let log = proto.pruning_log();
    for step in &proto.trail {
        assert!(log.contains(&step.item_id));
    }
}

#[test]
fn thirteen_items_in_five_subscales() {
    let sim = clustered(&[3, 3, 3, 2, 2], 0.8, 2, 900, 2);
    let cols: Vec<usize> = (0..15).collect();
    let proto = prototype_scale(&sim, &cols, &PrototypeConfig::default()).unwrap();
    assert_eq!(proto.n_factors, 5);
    assert_eq!(proto.columns(), (0..13).collect::<Vec<_>>());
    assert_eq!(proto.subscales.len(), 5);
    let model = proto.measurement_model();
    assert_eq!(model.n_factors(), 5);
    assert_eq!(model.n_items(), 13);
    let def = proto.scale_definition(&sim.scale);
    assert_eq!(def.n_items(), 13);
}

#[test]
fn too_small_sample_is_refused() {
    let sim = clustered(&[3, 3, 3], 0.7, 3, 100, 3);
    let err = prototype_scale(&sim, &(0..12).collect::<Vec<_>>(), &PrototypeConfig::default()).unwrap_err();
    assert!(matches!(err, PrototypeError::InsufficientSample { needed: 120, got: 100, .. }));
}

fn ratings(scores: &[(usize, usize, u8)]) -> Vec<ExpertRating> {
    scores
        .iter()
        .map(|&(item, expert, relevance)| ExpertRating {
            item_id: format!("item_{}", item + 1),
            expert_id: format!("e{expert}"),
            relevance,
        })
        .collect()
}

#[test]
fn failing_every_item_is_infeasible() {
    let scale = ScaleDefinition::generic("draft", 4, 1, 5);
    let r: Vec<_> = (0..4).flat_map(|i| (0..3).map(move |e| (i, e, 2))).collect();
    let report = compute_cvi(&ratings(&r), CviRule::Lynn).unwrap();
    assert!(report.items.iter().all(|i| !i.retained));
    assert!(matches!(cvi_screen(&scale, &report), Err(PrototypeError::Infeasible(_))));
}

proptest! {
    #[test]
    fn cvi_ignores_expert_names(
        grid in prop::collection::vec(prop::collection::vec(1u8..=4, 7), 3),
        rename in prop::collection::vec(0usize..1000, 7),
    ) {
        let base: Vec<(usize, usize, u8)> = grid
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(e, &r)| (i, e, r)))
            .collect();
        let a = compute_cvi(&ratings(&base), CviRule::Lynn).unwrap();
        // distinct new names, rows presented in reverse
        let mut renamed: Vec<ExpertRating> = base
            .iter()
            .map(|&(i, e, r)| ExpertRating {
                item_id: format!("item_{}", i + 1),
                expert_id: format!("x{}-{}", rename[e], e),
                relevance: r,
            })
            .collect();
        renamed.reverse();
        let b = compute_cvi(&renamed, CviRule::Lynn).unwrap();
        prop_assert_eq!(a, b);
    }
}
