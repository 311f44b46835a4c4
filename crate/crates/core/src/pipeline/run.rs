use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::artifacts::*;
use super::config::{MechanismConfig, ScenarioConfig};
use super::plots::emit_plots;
use crate::attack::{
    classify_block, enumerate_program, format_reconstructions, format_solvar, parse_solvar, published_workload,
    reconstruct_topt, soft_fit, solution_variability, ConfigurationSpace, Detection, Likelihood, Reconstruction,
    SolvarReport, TopT, Verdict,
};
use crate::evaluate::{format_metrics, format_summary, truth_sample, AttackReport, ReportInputs};
use crate::ipcore::Limits;
use crate::mechanisms::{apply_dp, swap, SwapOutcome};
use crate::model::{generate_universe, read_universe, write_universe, EmpiricalDistribution, RaceGroups, Universe};
use crate::rng::{self, Stream};
use crate::workload::{evaluate, read_statistics, write_statistics, BlockStatistics};
use crate::Error;

pub struct Published {
    pub statistics: Vec<BlockStatistics>,
    pub swap: Option<SwapOutcome>,
}

/// Statistics released for every block of `truth` under `mechanism`.
pub fn publish(truth: &Universe, mechanism: &MechanismConfig, seed: u64) -> Result<Published, Error> {
    let workload = published_workload(&truth.race_groups);
    match mechanism {
        MechanismConfig::Identity => Ok(Published {
            statistics: truth.blocks.par_iter().map(|b| evaluate(b, &workload)).collect(),
            swap: None,
        }),
        MechanismConfig::Swap(cfg) => {
            let out = swap(truth, cfg, seed)?;
            let statistics = out.universe.blocks.par_iter().map(|b| evaluate(b, &workload)).collect();
            Ok(Published { statistics, swap: Some(out) })
        }
        MechanismConfig::Dp(cfg) => {
            let budget = cfg.budget(&workload)?;
            let statistics = truth
                .blocks
                .par_iter()
                .enumerate()
                .map(|(i, b)| {
                    let mut rng = rng::stream(seed, Stream::Noise, i as u64);
                    apply_dp(&evaluate(b, &workload), &workload, &budget, &mut rng)
                })
                .collect::<Result<_, _>>()?;
            Ok(Published { statistics, swap: None })
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AttackArtifacts {
    pub detections: Vec<Detection>,
    /// Ranked reconstructions of flagged blocks.
    pub reconstructions: BTreeMap<String, Vec<Reconstruction>>,
    pub solvar: Vec<SolvarReport>,
    /// Flagged blocks whose enumeration stopped short of `t`.
    pub truncated: usize,
    /// Flagged blocks reconstructed from the soft program.
    pub soft: usize,
}

struct BlockOutcome {
    detection: Detection,
    reconstructions: Vec<Reconstruction>,
    truncated: bool,
    soft: bool,
    solvar: Vec<SolvarReport>,
}

fn dedup_counts(mut recons: Vec<Reconstruction>) -> Vec<Reconstruction> {
    let mut seen = Vec::new();
    recons.retain(|r| {
        let fresh = !seen.contains(&r.counts);
        if fresh {
            seen.push(r.counts.clone());
        }
        fresh
    });
    recons
}

fn attack_block(
    stats: &BlockStatistics,
    groups: &RaceGroups,
    prior: &EmpiricalDistribution,
    cfg: &ScenarioConfig,
) -> Result<BlockOutcome, Error> {
    let opts = &cfg.attack;
    let limits = opts.limits();
    let space = ConfigurationSpace::for_block(stats, groups, opts.space)?;
    let detection = classify_block(stats, &space, &limits)?;
    let mut out = BlockOutcome { detection, reconstructions: Vec::new(), truncated: false, soft: false, solvar: Vec::new() };
    if !out.detection.verdict.is_flagged() || !opts.reconstruct {
        return Ok(out);
    }
    // An inconsistent block has no exact fit at all, so only the soft program is tried.
    let mut top = match out.detection.verdict {
        Verdict::Inconsistent => TopT::default(),
        _ => reconstruct_topt(stats, &space, prior, &opts.topt, &limits)?,
    };
    if top.reconstructions.is_empty() {
        // The prior rules out every exact fit; trade query error for likelihood instead.
        let soft_limits = Limits { max_nodes: opts.soft_max_nodes.min(limits.max_nodes), ..limits };
        let (_, prog) = soft_fit(stats, &space, Likelihood::Prior, prior, opts.lambda, &soft_limits)?;
        top = enumerate_program(&prog, &stats.block_id, &opts.topt, &soft_limits)?;
        top.reconstructions = dedup_counts(top.reconstructions);
        out.soft = true;
    }
    out.truncated = top.truncated;
    if let Some(best) = top.reconstructions.first().filter(|_| !out.soft) {
        for &(preset, subset) in &opts.solvar {
            out.solvar.push(solution_variability(best, stats, &space, preset, subset, &limits)?);
        }
    }
    out.reconstructions = top.reconstructions;
    Ok(out)
}

/// Detection, reconstruction and solution variability for every published block.
pub fn attack(
    statistics: &[BlockStatistics],
    groups: &RaceGroups,
    prior: &EmpiricalDistribution,
    cfg: &ScenarioConfig,
) -> Result<AttackArtifacts, Error> {
    let outcomes: Vec<BlockOutcome> = statistics
        .par_iter()
        .map(|s| attack_block(s, groups, prior, cfg).map_err(|e| Error::Model(format!("block {}: {e}", s.block_id))))
        .collect::<Result<_, _>>()?;
    let mut a = AttackArtifacts::default();
    for o in outcomes {
        a.truncated += o.truncated as usize;
        a.soft += o.soft as usize;
        if !o.reconstructions.is_empty() {
            a.reconstructions.insert(o.detection.block_id.clone(), o.reconstructions);
        }
        a.detections.push(o.detection);
        a.solvar.extend(o.solvar);
    }
    Ok(a)
}

pub fn evaluate_attack(cfg: &ScenarioConfig, truth: &Universe, a: &AttackArtifacts) -> Result<AttackReport, Error> {
    let sample = truth_sample(truth, cfg.evaluation.baseline_fraction, cfg.seed);
    let inputs = ReportInputs {
        scenario: &cfg.label,
        seed: cfg.seed,
        truth,
        rule: cfg.generation.rule,
        detections: &a.detections,
        reconstructions: &a.reconstructions,
        solvar: &a.solvar,
        baseline_sample: &sample,
    };
    AttackReport::build(&inputs, &cfg.evaluation)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Error> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn manifest_for(cfg: &ScenarioConfig, dir: &Path) -> Manifest {
    Manifest::load_or_new(dir, &cfg.label, cfg.seed, cfg.mechanism.label(), cfg.jobs.unwrap_or(0))
}

/// Run `body` with a manifest in `dir`, leaving a FAILED marker behind on error.
fn tracked<T: Send>(
    cfg: &ScenarioConfig,
    dir: &Path,
    body: impl FnOnce(&mut Manifest) -> Result<T, Error> + Send,
) -> Result<T, Error> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let _ = std::fs::remove_file(dir.join(FAILED_FILE));
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let mut m = manifest_for(cfg, dir);
    m.status = "running".into();
    let pool = thread_pool(cfg.jobs)?;
    match pool.install(|| body(&mut m)) {
        Ok(v) => {
            m.status = "ok".into();
            m.write(dir)?;
            Ok(v)
        }
        Err(e) => {
            mark_failed(dir, &mut m, &e);
            Err(e)
        }
    }
}

fn generate_stage(cfg: &ScenarioConfig, dir: &Path, m: &mut Manifest) -> Result<Universe, Error> {
    m.stage("generate", |counts| {
        let g = generate_universe(&cfg.generation, cfg.seed)?;
        for e in &g.log.events {
            log::info!("generation fallback: {e:?}");
        }
        write_universe(&g.universe, &dir.join(UNIVERSE_FILE))?;
        g.universe.empirical_reference.write(&dir.join(EMPIRICAL_FILE))?;
        counts.insert("blocks".into(), g.universe.blocks.len() as u64);
        counts.insert("households".into(), g.universe.households().count() as u64);
        counts.insert("generation_fallbacks".into(), g.log.events.len() as u64);
        Ok(g.universe)
    })
}

fn publish_stage(cfg: &ScenarioConfig, dir: &Path, m: &mut Manifest, truth: &Universe) -> Result<Vec<BlockStatistics>, Error> {
    m.stage("publish", |counts| {
        let p = publish(truth, &cfg.mechanism, cfg.seed)?;
        if let Some(s) = &p.swap {
            for id in &s.skipped {
                log::info!("swap: household {}/{} found no partner", truth.blocks[id.block].block_id, id.index);
            }
            write_universe(&s.universe, &dir.join(SWAPPED_UNIVERSE_FILE))?;
            counts.insert("swap_selected".into(), s.selected as u64);
            counts.insert("swap_swapped".into(), s.swapped as u64);
            counts.insert("swap_skipped".into(), s.skipped.len() as u64);
        }
        write_statistics(&p.statistics, cfg.mechanism.label(), &dir.join(STATISTICS_FILE))?;
        Ok(p.statistics)
    })
}

fn attack_stage(
    cfg: &ScenarioConfig,
    dir: &Path,
    m: &mut Manifest,
    statistics: &[BlockStatistics],
    groups: &RaceGroups,
    prior: &EmpiricalDistribution,
) -> Result<AttackArtifacts, Error> {
    m.stage("attack", |counts| {
        let a = attack(statistics, groups, prior, cfg)?;
        std::fs::write(dir.join(DETECTIONS_FILE), format_detections(&a.detections))?;
        let ranked: Vec<(usize, &Reconstruction)> =
            a.reconstructions.values().flat_map(|rs| rs.iter().enumerate().map(|(i, r)| (i + 1, r))).collect();
        std::fs::write(dir.join(RECONSTRUCTIONS_FILE), format_reconstructions(&ranked, &cfg.attack.space.rule))?;
        std::fs::write(dir.join(SOLVAR_FILE), format_solvar(&a.solvar))?;
        counts.insert("flagged".into(), a.detections.iter().filter(|d| d.verdict.is_flagged()).count() as u64);
        counts.insert("truncated_enumerations".into(), a.truncated as u64);
        counts.insert("soft_reconstructions".into(), a.soft as u64);
        Ok(a)
    })
}

fn write_report(dir: &Path, report: &AttackReport) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join(REPORT_FILE), json + "\n")?;
    let reports = std::slice::from_ref(report);
    std::fs::write(dir.join(METRICS_FILE), format_metrics(reports))?;
    std::fs::write(dir.join(SUMMARY_FILE), format_summary(reports))?;
    Ok(())
}

fn evaluate_stage(
    cfg: &ScenarioConfig,
    dir: &Path,
    m: &mut Manifest,
    truth: &Universe,
    a: &AttackArtifacts,
) -> Result<AttackReport, Error> {
    m.stage("evaluate", |_| {
        let report = evaluate_attack(cfg, truth, a)?;
        write_report(dir, &report)?;
        Ok(report)
    })
}

fn read_truth(dir: &Path) -> Result<Universe, Error> {
    let mut u = read_universe(&dir.join(UNIVERSE_FILE))?;
    u.empirical_reference = EmpiricalDistribution::read(&dir.join(EMPIRICAL_FILE))?;
    Ok(u)
}

/// Generate the ground truth into `dir`.
pub fn generate_into(cfg: &ScenarioConfig, dir: &Path) -> Result<Universe, Error> {
    tracked(cfg, dir, |m| generate_stage(cfg, dir, m))
}

/// Publish statistics from the ground truth persisted in `dir`.
pub fn publish_from(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<BlockStatistics>, Error> {
    tracked(cfg, dir, |m| {
        let truth = m.stage("load", |_| read_truth(dir))?;
        publish_stage(cfg, dir, m, &truth)
    })
}

/// Attack the statistics persisted in `dir`. Uses only the released statistics
/// and the attacker's empirical reference.
pub fn attack_from(cfg: &ScenarioConfig, dir: &Path) -> Result<AttackArtifacts, Error> {
    tracked(cfg, dir, |m| {
        let (stats, prior) = m.stage("load", |_| {
            Ok((read_statistics(&dir.join(STATISTICS_FILE))?, EmpiricalDistribution::read(&dir.join(EMPIRICAL_FILE))?))
        })?;
        attack_stage(cfg, dir, m, &stats, &cfg.generation.race_groups, &prior)
    })
}

/// Score the attack artifacts persisted in `dir` against the ground truth.
pub fn evaluate_from(cfg: &ScenarioConfig, dir: &Path) -> Result<AttackReport, Error> {
    tracked(cfg, dir, |m| {
        let (truth, a) = m.stage("load", |_| {
            let truth = read_truth(dir)?;
            let a = AttackArtifacts {
                detections: parse_detections(&std::fs::read_to_string(dir.join(DETECTIONS_FILE))?)?,
                reconstructions: read_reconstructions(&dir.join(RECONSTRUCTIONS_FILE))?,
                solvar: parse_solvar(&std::fs::read_to_string(dir.join(SOLVAR_FILE))?)?,
                ..Default::default()
            };
            Ok((truth, a))
        })?;
        evaluate_stage(cfg, dir, m, &truth, &a)
    })
}

fn run_with(cfg: &ScenarioConfig, dir: &Path, truth: Option<&Universe>) -> Result<AttackReport, Error> {
    tracked(cfg, dir, |m| {
        m.stages.clear();
        let generated;
        let truth = match truth {
            Some(u) => {
                write_universe(u, &dir.join(UNIVERSE_FILE))?;
                u.empirical_reference.write(&dir.join(EMPIRICAL_FILE))?;
                u
            }
            None => {
                generated = generate_stage(cfg, dir, m)?;
                &generated
            }
        };
        let stats = publish_stage(cfg, dir, m, truth)?;
        let a = attack_stage(cfg, dir, m, &stats, &truth.race_groups, &truth.empirical_reference)?;
        let report = evaluate_stage(cfg, dir, m, truth, &a)?;
        m.stage("plots", |_| emit_plots(std::slice::from_ref(&report), dir))?;
        Ok(report)
    })
}

/// All stages of one scenario and seed, artifacts under `dir`.
pub fn run_in(cfg: &ScenarioConfig, dir: &Path) -> Result<AttackReport, Error> {
    run_with(cfg, dir, None)
}

/// `run_in` with the directory `<out_dir>/<label>/seed-<seed>`.
pub fn run(cfg: &ScenarioConfig) -> Result<AttackReport, Error> {
    run_in(cfg, &run_dir(&cfg.out_dir, &cfg.label, cfg.seed))
}

pub fn run_dir(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join(label).join(format!("seed-{seed}"))
}

/// One row per scenario: flagged-block precision and recall and reconstruction
/// precision and recall at k = 1 on the first match key, pooled over seeds.
pub fn format_comparison(reports: &[AttackReport]) -> String {
    let mut out = "scenario\tseeds\tblocks\tflagged\tblock_precision\tblock_recall\tmatch_key\tprecision_at_1\trecall_at_1\n"
        .to_string();
    let mut by: BTreeMap<&str, Vec<&AttackReport>> = BTreeMap::new();
    for r in reports {
        by.entry(&r.scenario).or_default().push(r);
    }
    let opt = |v: Option<f64>| v.map_or("null".to_string(), |v| format!("{v:.6}"));
    for (scenario, rs) in by {
        let flagged: usize = rs.iter().map(|r| r.blocks.flagged).sum();
        let true_blocks: usize = rs.iter().map(|r| r.blocks.true_blocks).sum();
        let hits: usize = rs.iter().map(|r| r.blocks.hits).sum();
        let blocks: usize = rs.iter().map(|r| r.n_blocks).sum();
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let first = rs.iter().flat_map(|r| r.curves.iter()).find(|p| p.k == 1).map(|p| p.match_key.clone());
        let (mut hit, mut put, mut tru) = (0.0, 0usize, 0usize);
        for p in rs.iter().flat_map(|r| r.curves.iter()) {
            if Some(&p.match_key) == first.as_ref()
                && p.k == 1
                && !p.uniques_only
                && p.method == crate::evaluate::Provenance::Reconstruction
            {
                hit += p.precision.unwrap_or(0.0) * p.n_putative as f64;
                put += p.n_putative;
                tru += p.n_true;
            }
        }
        let _ = writeln!(
            out,
            "{scenario}\t{}\t{blocks}\t{flagged}\t{}\t{}\t{}\t{}\t{}",
            rs.len(),
            opt(ratio(hits, flagged)),
            opt(ratio(hits, true_blocks)),
            first.unwrap_or_else(|| "null".into()),
            opt((put > 0).then(|| hit / put as f64)),
            opt((tru > 0).then(|| hit / tru as f64)),
        );
    }
    out
}

/// Every scenario for every seed of the sweep. Runs land in
/// `<out_dir>/<label>/seed-<seed>`; pooled tables and plots in `out_dir`.
pub fn sweep(cfg: &ScenarioConfig) -> Result<Vec<AttackReport>, Error> {
    cfg.validate()?;
    if cfg.sweep.scenarios.is_empty() {
        return Err(Error::Config("sweep.scenarios must not be empty".into()));
    }
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    let mut reports = Vec::new();
    for &seed in &cfg.sweep.seeds {
        let mut truth: Option<Universe> = None;
        for sc in &cfg.sweep.scenarios {
            let mut c = cfg.clone();
            c.label = sc.label.clone();
            c.mechanism = sc.mechanism.clone();
            c.seed = seed;
            let dir = run_dir(out, &sc.label, seed);
            let r = run_with(&c, &dir, truth.as_ref())?;
            if truth.is_none() {
                truth = Some(read_truth(&dir)?);
            }
            reports.push(r);
        }
    }
    write_pooled(out, &reports)?;
    Ok(reports)
}

fn write_pooled(out: &Path, reports: &[AttackReport]) -> Result<(), Error> {
    std::fs::write(out.join(METRICS_FILE), format_metrics(reports))?;
    std::fs::write(out.join(SUMMARY_FILE), format_summary(reports))?;
    std::fs::write(out.join(COMPARISON_FILE), format_comparison(reports))?;
    emit_plots(reports, out)
}

/// Collect every `report.json` in `dir` and its run subdirectories, then rewrite
/// the pooled tables and plots there.
pub fn report_dir(dir: &Path) -> Result<Vec<AttackReport>, Error> {
    let mut paths = Vec::new();
    let mut visit = |d: &Path| {
        let p = d.join(REPORT_FILE);
        if p.is_file() {
            paths.push(p);
        }
    };
    visit(dir);
    for e in sorted_dirs(dir)? {
        visit(&e);
        for f in sorted_dirs(&e)? {
            visit(&f);
        }
    }
    if paths.is_empty() {
        return Err(Error::Config(format!("no {REPORT_FILE} under {}", dir.display())));
    }
    let mut reports = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        reports.push(
            serde_json::from_str::<AttackReport>(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        );
    }
    reports.sort_by(|a, b| (&a.scenario, a.seed).cmp(&(&b.scenario, b.seed)));
    reports.dedup_by(|a, b| a.scenario == b.scenario && a.seed == b.seed);
    write_pooled(dir, &reports)?;
    Ok(reports)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut v: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    v.sort();
    Ok(v)
}
