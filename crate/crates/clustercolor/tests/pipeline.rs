mod common;

use proptest::prelude::*;

use clustercolor::coloring::{run_pipeline, Color, PipelineRun};
use clustercolor::engine::{BandwidthPolicy, Engine};
use clustercolor::netmodel::{generate_planted, Instance, ParamSet, Preset};
use clustercolor::verify;

use common::from_edges;

/// Stages that must keep off the reserved prefix `[1, r_K]` of a member's clique.
const ABOVE_RESERVED: &[&str] = &["colorful-matching", "colorful-matching-cabal", "sct", "outliers"];

fn run(inst: &Instance, seed: u64) -> PipelineRun {
    run_pipeline(&mut Engine::new(inst, seed, BandwidthPolicy::Audit, false)).unwrap()
}

fn assert_valid(inst: &Instance, run: &PipelineRun) {
    assert!(verify::check_proper(inst, &run.coloring).pass);
    assert!(verify::check_total(inst, &run.coloring, 0..inst.num_clusters()).pass);
    let q = inst.delta() as Color + 1;
    assert!(run.coloring.colors().iter().all(|c| c.is_some_and(|c| (1..=q).contains(&c))));
}

fn reserved_violations(run: &PipelineRun) -> Vec<(usize, Color, &'static str)> {
    (0..run.coloring.len())
        .filter_map(|v| {
            let k = run.labeling.clique_of(v)?;
            let c = run.coloring.get(v)?;
            let stage = run.coloring.provenance(v)?;
            (c <= run.labeling.cliques[k].reserved && ABOVE_RESERVED.contains(&stage)).then_some((v, c, stage))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_graphs_are_colored_properly(seed in 0u64..10_000, n in 1usize..60, p in 0.0f64..1.0) {
        let mut rng = clustercolor::rng::CounterRng::for_stage(seed, "gnp", 0, 0);
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|_| rng.bernoulli(p)).collect();
        let inst = from_edges(n, &edges, ParamSet::desk());
        let r = run(&inst, seed);
        assert_valid(&inst, &r);
        let again = run(&inst, seed);
        prop_assert_eq!(r.coloring.colors(), again.coloring.colors());
    }

    #[test]
    fn presets_with_expansion_are_colored_properly(seed in 0u64..10_000, preset in 0usize..4, size in 4usize..40, expansion in 1usize..4) {
        let preset = Preset::ALL[preset];
        let inst = generate_planted(seed, &preset.spec(2, size, expansion)).unwrap().instance;
        let r = run(&inst, seed);
        assert_valid(&inst, &r);
        prop_assert!(reserved_violations(&r).is_empty());
    }
}

#[test]
fn dense_presets_respect_reserved_colors() {
    for (seed, preset) in Preset::ALL.into_iter().enumerate() {
        let inst = generate_planted(seed as u64, &preset.spec(2, 256, 1)).unwrap().instance;
        let r = run(&inst, seed as u64);
        assert_valid(&inst, &r);
        assert!(reserved_violations(&r).is_empty(), "{}: {:?}", preset.name(), reserved_violations(&r));
        assert!(!r.fallback_used, "{}", preset.name());
    }
}

#[test]
fn planted_cabals_are_found_and_colored() {
    let inst = generate_planted(2, &Preset::PlantedCabals.spec(3, 256, 1)).unwrap().instance;
    let r = run(&inst, 2);
    assert_eq!(r.labeling.cliques.len(), 3);
    assert!(r.labeling.cliques.iter().all(|c| c.cabal));
    assert!(r.outcomes.iter().any(|o| o.stage == "put-aside-coloring"));
    assert_valid(&inst, &r);
}

#[test]
fn seeds_change_the_coloring_but_not_validity() {
    let inst = generate_planted(8, &Preset::SparseEr.spec(2, 30, 1)).unwrap().instance;
    let a = run(&inst, 1);
    let b = run(&inst, 2);
    assert_valid(&inst, &a);
    assert_valid(&inst, &b);
    assert_ne!(a.coloring.colors(), b.coloring.colors());
}
