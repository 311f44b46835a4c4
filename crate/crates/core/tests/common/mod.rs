//! Exhaustive oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use recon_core::model::{BedroomClass, Block, HouseholdRecord, RaceGroup, RaceGroups, RaceMask, ViolationRule};
use recon_core::workload::{evaluate, size_top_query, standard_workload, BlockStatistics, QueryKind, Sense};

pub fn small_groups() -> RaceGroups {
    RaceGroups(vec![
        RaceGroup { name: "a_nh".into(), hispanic: false },
        RaceGroup { name: "hisp".into(), hispanic: true },
    ])
}

/// Every valid household record with single race flags and size at most `max_size`.
pub fn full_domain(groups: &RaceGroups, max_size: u8) -> Vec<HouseholdRecord> {
    let mut d = Vec::new();
    for size in 1..=max_size {
        for j in 0..groups.len() {
            for c in 0..=size {
                let r = RaceMask::single(j);
                d.push(HouseholdRecord::unsubsidized(size, r, c));
                for k in BedroomClass::UNITS {
                    d.push(HouseholdRecord::subsidized(size, r, c, k));
                }
            }
        }
    }
    d
}

pub fn stats_of(block: &Block) -> BlockStatistics {
    let mut w = standard_workload(&small_groups());
    w.push(size_top_query(&small_groups()));
    evaluate(block, &w)
}

/// Published answers as rows over `domain`: contributions, equality flag, bound.
pub struct Oracle {
    pub domain: Vec<HouseholdRecord>,
    rows: Vec<(Vec<i64>, bool, i64)>,
    n: i64,
    ns: i64,
    /// Per row, the largest contribution among configurations `i..` (subsidized, unsubsidized).
    suffix_max: Vec<Vec<(i64, i64)>>,
}

impl Oracle {
    pub fn new(stats: &BlockStatistics, groups: &RaceGroups, domain: Vec<HouseholdRecord>, max_size: u8) -> Self {
        let mut w = standard_workload(groups);
        w.push(size_top_query(groups));
        let mut rows = Vec::new();
        for q in &w {
            let Some(mut rhs) = stats.get(&q.id) else { continue };
            if q.kind == QueryKind::HudPopulation {
                // Largest possible subsidized population from the census size counts.
                let mut sizes: Vec<i64> = Vec::new();
                for x in 1..=6 {
                    for _ in 0..stats.get(&format!("sf1_size_{x}")).unwrap_or(0) {
                        sizes.push(x);
                    }
                }
                for _ in 0..stats.get("sf1_size_7plus").unwrap_or(0) {
                    sizes.push(max_size as i64);
                }
                sizes.sort_unstable_by(|a, b| b.cmp(a));
                rhs = rhs.min(sizes.iter().take(stats.n_subsidized as usize).sum());
            }
            let contrib: Vec<i64> = domain.iter().map(|h| q.contribution(h)).collect();
            rows.push((contrib, stats.senses[&q.id] == Sense::Eq, rhs));
        }
        let mut o = Oracle { domain, rows, n: stats.n_total, ns: stats.n_subsidized, suffix_max: Vec::new() };
        o.index();
        o
    }

    fn index(&mut self) {
        self.suffix_max = self
            .rows
            .iter()
            .map(|(c, _, _)| {
                let mut m = vec![(0, 0); self.domain.len() + 1];
                for i in (0..self.domain.len()).rev() {
                    let (s, u) = m[i + 1];
                    m[i] = if self.domain[i].subsidized { (s.max(c[i]), u) } else { (s, u.max(c[i])) };
                }
                m
            })
            .collect();
    }

    pub fn without(mut self, drop: impl Fn(&HouseholdRecord) -> bool) -> Self {
        let keep: Vec<bool> = self.domain.iter().map(|h| !drop(h)).collect();
        let pick = |v: &Vec<i64>| v.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect::<Vec<_>>();
        self.rows = self.rows.iter().map(|(c, e, r)| (pick(c), *e, *r)).collect();
        self.domain = self.domain.iter().zip(&keep).filter(|(_, k)| **k).map(|(h, _)| *h).collect();
        self.index();
        self
    }

    fn dfs(
        &self,
        i: usize,
        n_left: i64,
        ns_left: i64,
        acc: &mut Vec<i64>,
        counts: &mut Vec<i64>,
        dead: &mut HashSet<(usize, i64, i64, Vec<i64>)>,
        visit: &mut dyn FnMut(&[i64]) -> bool,
    ) -> (bool, bool) {
        if n_left == 0 {
            if ns_left != 0 {
                return (false, false);
            }
            let ok = self.rows.iter().zip(acc.iter()).all(|((_, eq, _), a)| if *eq { *a == 0 } else { *a <= 0 });
            return if ok { (true, !visit(counts)) } else { (false, false) };
        }
        if i == self.domain.len() {
            return (false, false);
        }
        let reachable = self.suffix_max.iter().zip(acc.iter()).all(|(m, a)| {
            let (s, u) = m[i];
            *a <= s * ns_left + u * (n_left - ns_left)
        });
        if !reachable {
            return (false, false);
        }
        let key = (i, n_left, ns_left, acc.clone());
        if dead.contains(&key) {
            return (false, false);
        }
        let sub = self.domain[i].subsidized;
        let cap = if sub { ns_left } else { n_left - ns_left };
        let mut any = false;
        for k in (0..=cap).rev() {
            let saved = acc.clone();
            let mut ok = true;
            for (r, (c, eq, _)) in self.rows.iter().enumerate() {
                acc[r] -= c[i] * k;
                if *eq && acc[r] < 0 {
                    ok = false;
                }
                if !*eq {
                    acc[r] = acc[r].max(0);
                }
            }
            if ok {
                counts[i] = k;
                let (found, stop) =
                    self.dfs(i + 1, n_left - k, ns_left - if sub { k } else { 0 }, acc, counts, dead, visit);
                counts[i] = 0;
                any |= found;
                if stop {
                    *acc = saved;
                    return (any, true);
                }
            }
            *acc = saved;
        }
        if !any {
            dead.insert(key);
        }
        (any, false)
    }

    /// Calls `visit` with every feasible count vector until it returns false.
    pub fn for_each(&self, visit: &mut dyn FnMut(&[i64]) -> bool) {
        let mut acc: Vec<i64> = self.rows.iter().map(|(_, _, r)| *r).collect();
        for ((_, eq, r), a) in self.rows.iter().zip(acc.iter_mut()) {
            if !*eq {
                *a = (*r).max(0);
            }
        }
        let mut counts = vec![0; self.domain.len()];
        let mut dead = HashSet::new();
        self.dfs(0, self.n, self.ns, &mut acc, &mut counts, &mut dead, visit);
    }

    pub fn exists(&self) -> bool {
        let mut found = false;
        self.for_each(&mut |_| {
            found = true;
            false
        });
        found
    }

    pub fn histogram(&self, households: &[HouseholdRecord]) -> Vec<i64> {
        let mut c = vec![0; self.domain.len()];
        for h in households {
            c[self.domain.iter().position(|d| d == h).expect("household in domain")] += 1;
        }
        c
    }
}

/// Block must contain a violation: no rule-abiding reconstruction, yet some reconstruction.
pub fn oracle_detect(o: Oracle) -> bool {
    let rule = ViolationRule::default();
    if !o.exists() {
        return false;
    }
    !o.without(|h| rule.is_violation(h)).exists()
}

/// L1 distance between two count vectors after mapping each entry through `key`.
pub fn projected_l1<K: Ord>(domain: &[HouseholdRecord], a: &[i64], b: &[i64], key: impl Fn(&HouseholdRecord) -> Option<K>) -> i64 {
    let mut h: BTreeMap<K, i64> = BTreeMap::new();
    for (g, rec) in domain.iter().enumerate() {
        if let Some(k) = key(rec) {
            *h.entry(k).or_insert(0) += a[g] - b[g];
        }
    }
    h.values().map(|v| v.abs()).sum()
}

/// A random block of `n` households, the first `ns` subsidized, sizes at most `max_size`.
pub fn random_block<R: Rng>(rng: &mut R, n: usize, ns: usize, max_size: u8, groups: usize) -> Block {
    let households = (0..n)
        .map(|i| {
            let size = if rng.gen_bool(0.7) { rng.gen_range(1..=4.min(max_size)) } else { rng.gen_range(1..=max_size) };
            let race = RaceMask::single(rng.gen_range(0..groups));
            let children = rng.gen_range(0..=size);
            if i < ns {
                HouseholdRecord::subsidized(size, race, children, BedroomClass::UNITS[rng.gen_range(0..3)])
            } else {
                HouseholdRecord::unsubsidized(size, race, children)
            }
        })
        .collect();
    Block { block_id: "T".into(), geo_state: "S01".into(), position: (0.0, 0.0), households }
}
