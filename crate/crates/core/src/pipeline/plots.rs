//! SVG figures with a tab-separated sidecar holding the plotted numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use plotters::prelude::*;

use crate::evaluate::AttackReport;
use crate::Error;

type Series = (String, Vec<(f64, Option<f64>)>);

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Invariant(format!("plot rendering failed: {e}"))
}

/// Mean over seeds of each curve metric, keyed by scenario and method.
fn curve_series(reports: &[AttackReport], key: &str, metric: fn(&crate::evaluate::CurvePoint) -> Option<f64>) -> Vec<Series> {
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in reports {
        for p in r.curves.iter().filter(|p| p.match_key == key && !p.uniques_only) {
            let e = acc
                .entry(format!("{} {}", r.scenario, p.method.label()))
                .or_default()
                .entry(p.k)
                .or_insert((0.0, 0));
            if let Some(v) = metric(p) {
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(name, pts)| {
            let pts = pts.into_iter().map(|(k, (s, n))| (k as f64, (n > 0).then(|| s / n as f64))).collect();
            (name, pts)
        })
        .collect()
}

fn sidecar(series: &[Series], x: &str, y: &str) -> String {
    let mut out = format!("series\t{x}\t{y}\n");
    for (name, pts) in series {
        for (a, b) in pts {
            let _ = writeln!(out, "{name}\t{a}\t{}", b.map_or("null".to_string(), |v| format!("{v:.6}")));
        }
    }
    out
}

fn line_chart(path: &Path, title: &str, x: &str, y: &str, series: &[Series], y_max: Option<f64>) -> Result<(), Error> {
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|(a, _)| *a));
    let x_max = xs.fold(1.0f64, f64::max);
    let y_top = y_max.unwrap_or_else(|| {
        series.iter().flat_map(|(_, p)| p.iter().filter_map(|(_, b)| *b)).fold(1.0, f64::max) * 1.05
    });
    let root = SVGBackend::new(path, (800, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..x_max, 0.0..y_top)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(x).y_desc(y).draw().map_err(plot_err)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // Missing values break the line rather than being drawn as zero.
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (a, b) in pts {
            match b {
                Some(v) => runs.last_mut().expect("non-empty").push((*a, *v)),
                None => runs.push(Vec::new()),
            }
        }
        let mut labelled = false;
        for run in runs.into_iter().filter(|r| !r.is_empty()) {
            let s = chart.draw_series(LineSeries::new(run, color.stroke_width(2))).map_err(plot_err)?;
            if !labelled {
                s.label(name.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
                labelled = true;
            }
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Precision and recall curves per match key, the cumulative distribution of
/// normalized solution variability, and reconstructed against true violations
/// per block.
pub fn emit_plots(reports: &[AttackReport], dir: &Path) -> Result<(), Error> {
    if reports.is_empty() {
        return Ok(());
    }
    if reports.iter().any(|r| r.k_grid != reports[0].k_grid) {
        return Err(Error::Invariant("reports disagree on the k grid and cannot share a plot".into()));
    }
    let mut keys: Vec<String> = reports.iter().flat_map(|r| r.curves.iter().map(|p| p.match_key.clone())).collect();
    keys.sort();
    keys.dedup();
    for key in &keys {
        for (metric, f) in [
            ("precision", (|p: &crate::evaluate::CurvePoint| p.precision) as fn(&_) -> _),
            ("recall", |p: &crate::evaluate::CurvePoint| p.recall),
        ] {
            let series = curve_series(reports, key, f);
            let stem = format!("{metric}_at_k_{key}");
            std::fs::write(dir.join(format!("{stem}.tsv")), sidecar(&series, "k", metric))?;
            line_chart(&dir.join(format!("{stem}.svg")), &format!("{metric}@k, {key} key"), "k", metric, &series, Some(1.0))?;
        }
    }

    let mut cdf: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for s in &r.solvar {
            if let Some(v) = s.normalized {
                cdf.entry(format!("{} {} {}", r.scenario, s.preset.label(), s.subset.label())).or_default().push(v);
            }
        }
    }
    let series: Vec<Series> = cdf
        .into_iter()
        .map(|(name, mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            (name, v.iter().enumerate().map(|(i, x)| (*x, Some((i + 1) as f64 / n))).collect())
        })
        .collect();
    std::fs::write(dir.join("solvar_cdf.tsv"), sidecar(&series, "normalized_solvar", "cdf"))?;
    line_chart(&dir.join("solvar_cdf.svg"), "solution variability", "normalized solvar", "fraction of blocks", &series, Some(1.0))?;

    let mut pts: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in reports {
        for b in &r.per_block {
            if let Some(v) = b.reconstructed_violations {
                pts.entry(r.scenario.clone()).or_default().push((b.true_violations as f64, v as f64));
            }
        }
    }
    let mut tsv = "scenario\ttrue_violations\treconstructed_violations\n".to_string();
    for (s, p) in &pts {
        for (a, b) in p {
            let _ = writeln!(tsv, "{s}\t{a}\t{b}");
        }
    }
    std::fs::write(dir.join("violations_scatter.tsv"), tsv)?;
    let top = pts.values().flatten().fold(1.0f64, |m, (a, b)| m.max(*a).max(*b)) + 1.0;
    let scatter = dir.join("violations_scatter.svg");
    let root = SVGBackend::new(&scatter, (640, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("violations per flagged block", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(-0.5..top, -0.5..top)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("true").y_desc("reconstructed").draw().map_err(plot_err)?;
    chart.draw_series(LineSeries::new(vec![(0.0, 0.0), (top, top)], BLACK.mix(0.3))).map_err(plot_err)?;
    for (i, (name, p)) in pts.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(p.iter().map(|&xy| Circle::new(xy, 3, color.filled())))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| Circle::new((x + 8, y), 3, color.filled()));
    }
    if !pts.is_empty() {
        chart.configure_series_labels().border_style(BLACK).draw().map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
