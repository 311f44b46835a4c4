use std::collections::{BTreeMap, BTreeSet};

use recon_core::attack::Reconstruction;
use recon_core::evaluate::*;
use recon_core::model::{
    BedroomClass, Block, EmpiricalDistribution, HouseholdId, HouseholdRecord, RaceGroups, RaceMask, Universe,
    ViolationRule,
};

fn sub(size: u8, race: usize, bed: BedroomClass) -> HouseholdRecord {
    HouseholdRecord::subsidized(size, RaceMask::single(race), 0, bed)
}

fn recon(counts: Vec<(HouseholdRecord, i64)>) -> Reconstruction {
    Reconstruction { block_id: "A".into(), counts, objective: 0.0, penalty: 0.0, exact: true }
}

fn universe(blocks: Vec<Vec<HouseholdRecord>>) -> Universe {
    Universe {
        blocks: blocks
            .into_iter()
            .enumerate()
            .map(|(i, households)| Block {
                block_id: ["A", "B", "C", "D", "E"][i].into(),
                geo_state: "S01".into(),
                position: (i as f64, 0.0),
                households,
            })
            .collect(),
        seed: 0,
        alpha: 1.0,
        race_groups: RaceGroups::default(),
        empirical_reference: EmpiricalDistribution::default(),
    }
}

fn ids(list: &[(usize, usize)]) -> BTreeSet<HouseholdId> {
    list.iter().map(|&(block, index)| HouseholdId { block, index }).collect()
}

#[test]
fn reconstruction_rankings() {
    let rule = ViolationRule::default();
    let key = MatchKey::hud();
    let a = sub(5, 0, BedroomClass::Le1);
    let b = sub(3, 1, BedroomClass::Le1);
    let ok = sub(1, 0, BedroomClass::Ge3);
    let single = rank_from_reconstructions(&[recon(vec![(a, 2), (ok, 1)])], &key, &rule);
    assert_eq!(single.entries, vec![(key.project(&a), 2.0)]);
    let two = rank_from_reconstructions(&[recon(vec![(a, 1), (b, 1)]), recon(vec![(a, 1)])], &key, &rule);
    assert_eq!(two.entries[0].0, key.project(&a));
    assert_eq!(two.entries[1], (key.project(&b), 1.0));
    assert!(rank_from_reconstructions(&[recon(vec![(ok, 3)])], &key, &rule).is_empty());
}

#[test]
fn baseline_orders_by_frequency() {
    let rule = ViolationRule::default();
    let key = MatchKey::broker();
    let a = sub(5, 0, BedroomClass::Le1);
    let b = sub(6, 1, BedroomClass::Eq2);
    let mut sample = vec![a; 2];
    sample.extend(vec![b; 5]);
    sample.push(sub(1, 2, BedroomClass::Le1));
    let r = sampling_baseline(&sample, &key, &rule);
    assert_eq!(r.entries, vec![(key.project(&b), 5.0), (key.project(&a), 2.0)]);
    assert!(sampling_baseline(&[], &key, &rule).is_empty());
}

#[test]
fn putative_violations_and_uniques() {
    let rule = ViolationRule::default();
    let key = MatchKey::hud();
    let v = sub(5, 0, BedroomClass::Le1);
    let twin = sub(3, 0, BedroomClass::Le1);
    let u = universe(vec![vec![v, twin, sub(1, 1, BedroomClass::Ge3)], vec![v]]);
    let link = Linkage::new(&u, &key, rule);
    let ranking = RankedCandidates { provenance: Provenance::SamplingBaseline, entries: vec![(key.project(&v), 1.0)] };
    let flagged: BTreeSet<String> = ["A".to_string()].into();
    let all = link.putative_violations(Rankings::Global(&ranking), 10, &flagged, false);
    assert_eq!(all, ids(&[(0, 0), (0, 1)]));
    assert!(link.putative_violations(Rankings::Global(&ranking), 10, &flagged, true).is_empty());
    let s = score(&all, &link.violations(false));
    assert_eq!((s.precision, s.recall), (Some(1.0), Some(2.0 / 3.0)));
    assert_eq!(link.match_rate(Rankings::Global(&ranking), 2, &flagged), Some(0.5));
}

#[test]
fn score_arithmetic() {
    let v = ids(&[(0, 0), (0, 1), (0, 2), (0, 3)]);
    let s = score(&v, &v);
    assert_eq!((s.precision, s.recall), (Some(1.0), Some(1.0)));
    let s = score(&ids(&[(1, 0)]), &v);
    assert_eq!((s.precision, s.recall), (Some(0.0), Some(0.0)));
    let s = score(&ids(&[(0, 0), (0, 1), (1, 0)]), &v);
    assert_eq!((s.precision, s.recall), (Some(2.0 / 3.0), Some(0.5)));
    let s = score(&BTreeSet::new(), &BTreeSet::new());
    assert_eq!((s.precision, s.recall), (None, None));
}

#[test]
fn block_metric_arithmetic() {
    let rule = ViolationRule::default();
    let bad = vec![sub(5, 0, BedroomClass::Le1)];
    let good = vec![sub(1, 0, BedroomClass::Le1)];
    let u = universe(vec![bad.clone(), bad.clone(), bad.clone(), bad, good]);
    let flagged: BTreeSet<String> = ["A", "B", "E"].iter().map(|s| s.to_string()).collect();
    let m = block_metrics(&flagged, &u, &rule);
    assert_eq!((m.precision, m.recall), (Some(2.0 / 3.0), Some(0.5)));
    let exact: BTreeSet<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
    let m = block_metrics(&exact, &u, &rule);
    assert_eq!((m.precision, m.recall), (Some(1.0), Some(1.0)));
}

#[test]
fn recall_grows_with_k_and_uniques_are_a_subset() {
    let rule = ViolationRule::default();
    let key = MatchKey::sf1();
    let hs = vec![sub(5, 0, BedroomClass::Le1), sub(6, 1, BedroomClass::Le1), sub(5, 0, BedroomClass::Eq2), sub(3, 2, BedroomClass::Le1)];
    let u = universe(vec![hs.clone()]);
    let link = Linkage::new(&u, &key, rule);
    let r = rank_from_reconstructions(&[recon(hs.iter().map(|h| (*h, 1)).collect())], &key, &rule);
    let per_block: BTreeMap<String, RankedCandidates> = [("A".to_string(), r)].into();
    let flagged: BTreeSet<String> = ["A".to_string()].into();
    let truth = link.violations(false);
    let mut prev = BTreeSet::new();
    for k in 1..=5 {
        let vk = link.putative_violations(Rankings::PerBlock(&per_block), k, &flagged, false);
        assert!(prev.is_subset(&vk));
        let uk = link.putative_violations(Rankings::PerBlock(&per_block), k, &flagged, true);
        assert!(uk.is_subset(&vk));
        assert!(score(&vk, &truth).n_hit >= score(&prev, &truth).n_hit);
        prev = vk;
    }
}
