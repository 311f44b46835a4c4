use rand::Rng;

use super::budget::{is_noised, PrivacyBudget};
use super::dgauss::discrete_gaussian;
use crate::workload::{BlockStatistics, CountingQuery, QueryKind};
use crate::Error;

/// Integer apportionment of `total` proportional to `weights` (largest remainder).
/// Remainder ties go to the earlier position; all-zero weights share equally.
pub fn largest_remainder(weights: &[i64], total: i64) -> Vec<i64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let w: Vec<i128> = if weights.iter().all(|v| *v <= 0) {
        vec![1; weights.len()]
    } else {
        weights.iter().map(|v| (*v).max(0) as i128).collect()
    };
    let sum: i128 = w.iter().sum();
    let total = total.max(0) as i128;
    let mut out: Vec<i64> = w.iter().map(|v| (v * total / sum) as i64).collect();
    let mut rem: Vec<(i128, usize)> = w.iter().enumerate().map(|(i, v)| (v * total % sum, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = (total - out.iter().map(|v| *v as i128).sum::<i128>()) as usize;
    for (_, i) in rem.into_iter().take(short) {
        out[i] += 1;
    }
    out
}

fn rescale_family(s: &mut BlockStatistics, ids: &[&str], total: i64) {
    let mut ids: Vec<&str> = ids.iter().copied().filter(|id| s.answers.contains_key(*id)).collect();
    ids.sort();
    let weights: Vec<i64> = ids.iter().map(|id| s.answers[*id]).collect();
    for (id, v) in ids.iter().zip(largest_remainder(&weights, total)) {
        s.answers.insert(id.to_string(), v);
    }
}

/// Consistency post-processing of noisy census answers.
///
/// Negative answers are clipped to zero, the size and race families are
/// apportioned to sum to `invariant_occupied`, population is rebuilt from the
/// size distribution (top bin counted as 7), and children are capped by
/// population. When `hud_noised`, HUD answers are also capped by the subsidized
/// count and the bedroom and householder families are apportioned to it.
pub fn post_process(
    noisy: &BlockStatistics,
    workload: &[CountingQuery],
    invariant_occupied: i64,
    hud_noised: bool,
) -> BlockStatistics {
    let mut s = noisy.clone();
    for v in s.answers.values_mut() {
        *v = (*v).max(0);
    }
    let ids = |pred: &dyn Fn(&QueryKind) -> bool| -> Vec<&str> {
        workload.iter().filter(|q| pred(&q.kind)).map(|q| q.id.as_str()).collect()
    };
    let sizes = ids(&|k| matches!(k, QueryKind::Size(_) | QueryKind::SizeAtLeast(_)));
    rescale_family(&mut s, &sizes, invariant_occupied);
    rescale_family(&mut s, &ids(&|k| matches!(k, QueryKind::Race(_))), invariant_occupied);
    let mut pop = 0;
    let mut any_size = false;
    for q in workload {
        if let Some(v) = s.get(&q.id) {
            match q.kind {
                QueryKind::Size(x) | QueryKind::SizeAtLeast(x) => {
                    pop += x as i64 * v;
                    any_size = true;
                }
                _ => {}
            }
        }
    }
    for q in workload {
        match q.kind {
            QueryKind::Population if any_size && s.answers.contains_key(&q.id) => {
                s.answers.insert(q.id.clone(), pop);
            }
            _ => {}
        }
    }
    let pop_now = workload.iter().find(|q| q.kind == QueryKind::Population).and_then(|q| s.get(&q.id));
    if let Some(p) = pop_now {
        for q in workload.iter().filter(|q| q.kind == QueryKind::Children) {
            if let Some(c) = s.answers.get_mut(&q.id) {
                *c = (*c).min(p);
            }
        }
    }
    if hud_noised {
        let ns = s.n_subsidized;
        let beds = ids(&|k| matches!(k, QueryKind::HudBedroom(_)));
        rescale_family(&mut s, &beds, ns);
        let holders = ids(&|k| matches!(k, QueryKind::HudRace(_) | QueryKind::HudHispanic));
        rescale_family(&mut s, &holders, ns);
        for q in workload.iter().filter(|q| q.kind == QueryKind::HudWithChildren) {
            if let Some(v) = s.answers.get_mut(&q.id) {
                *v = (*v).min(ns);
            }
        }
    }
    s
}

/// Add discrete Gaussian noise to every noised query, then post-process.
pub fn apply_dp<R: Rng>(
    stats: &BlockStatistics,
    workload: &[CountingQuery],
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<BlockStatistics, Error> {
    let mut noisy = stats.clone();
    for q in workload.iter().filter(|q| is_noised(q, budget.hud_noise)) {
        let variance = budget.variance(q)?;
        let v = stats.answer(&q.id)?;
        noisy.answers.insert(q.id.clone(), discrete_gaussian(v, variance, rng));
    }
    Ok(post_process(&noisy, workload, stats.n_total, budget.hud_noise))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportionment_example() {
        let clipped: Vec<i64> = [3, -1, 2].iter().map(|v: &i64| (*v).max(0)).collect();
        assert_eq!(largest_remainder(&clipped, 4), vec![2, 0, 2]);
        assert_eq!(largest_remainder(&[0, 0, 0], 4), vec![2, 1, 1]);
        assert_eq!(largest_remainder(&[5, 1], 0), vec![0, 0]);
        assert_eq!(largest_remainder(&[1, 1, 1], 3), vec![1, 1, 1]);
    }
}
