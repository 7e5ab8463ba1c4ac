mod common;

use clustercolor::acd::{classify, degree_estimates, AcdLabeling};
use clustercolor::coloring::{run_pipeline, PartialColoring};
use clustercolor::engine::{BandwidthPolicy, Engine};
use clustercolor::netmodel::ParamSet;
use clustercolor::putaside::{block_of, compute_put_aside, donation_trace_json, DonationRecord};
use clustercolor::verify;

use common::{cliques_with_cross, donor_params};

#[test]
fn put_aside_sets_avoid_each_other() {
    let (inst, groups) = cliques_with_cross(&[256, 256, 256], 6, 3, ParamSet::desk());
    let mut eng = Engine::new(&inst, 3, BandwidthPolicy::Audit, false);
    let mut lab = AcdLabeling::from_cliques(&inst, &groups);
    degree_estimates(&mut eng, &mut lab, inst.params().delta, 0).unwrap();
    classify(&mut lab, inst.params());
    assert!(lab.cliques.iter().all(|c| c.cabal));
    let phi = PartialColoring::new(inst.num_clusters());
    let sets = compute_put_aside(&mut eng, &lab, &phi, &[0, 1, 2], 0).unwrap();
    assert!(sets.accepted);
    let family: Vec<(&[usize], &[usize], u32)> =
        (0..3).map(|k| (lab.cliques[k].members.as_slice(), sets.sets[&k].as_slice(), lab.cliques[k].reserved)).collect();
    assert!(verify::check_put_aside(&inst, &family).pass);
}

#[test]
fn donations_recolor_only_put_aside_nodes_and_donors() {
    let (inst, groups) = cliques_with_cross(&[160], 0, 1, donor_params());
    let mut eng = Engine::new(&inst, 1, BandwidthPolicy::Audit, false);
    let run = run_pipeline(&mut eng).unwrap();
    let report = run.cabals.report.as_ref().expect("the clique is a cabal");
    assert!(!report.donor_branch.is_empty());
    assert!(report.audits.iter().all(|a| a.pass));
    assert!(report.residual.is_empty());

    let put_aside = &run.cabals.put_aside.as_ref().unwrap().sets[&0];
    let b = inst.params().block_size;
    let committed: Vec<&DonationRecord> = run.donations().iter().filter(|d| d.donor.is_some()).collect();
    assert!(!committed.is_empty());
    for d in committed {
        let node = inst.cluster_index(d.node).unwrap();
        let donor = inst.cluster_index(d.donor.unwrap()).unwrap();
        let donated = d.donated.unwrap();
        assert!(put_aside.contains(&node));
        assert!(!put_aside.contains(&donor) && groups[0].contains(&donor));
        assert_eq!(block_of(donated, b), d.block);
        assert_eq!(run.coloring.get(node), Some(donated));
        assert_eq!(run.coloring.get(donor), Some(d.recolor));
        assert_eq!(d.sampled.len(), d.conflicts.len());
    }

    let trace: Vec<DonationRecord> = serde_json::from_str(&donation_trace_json(run.donations())).unwrap();
    assert_eq!(trace, run.donations());
}
