//! SVG charts and a markdown summary from evaluation CSVs.
//!
//! Rows on the train/test splits become an AUC-vs-radius chart with CI
//! whiskers (`sweep.svg`); validation rows become a method x classifier heat
//! table (`grid.svg`). Output depends only on the input bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::tables::{parse_eval_csv, variant_radius, EvalRow};
use crate::manifest::Split;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn variant_source(variant: &str) -> &str {
    variant.rsplit_once("_r").map_or(variant, |(s, _)| s)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Series key: (model, source, split).
type Series = (String, String, Split);

/// AUC vs radius with CI whiskers, one polyline per series.
pub fn sweep_svg(rows: &[EvalRow]) -> Option<String> {
    let pts: Vec<(&EvalRow, f64)> = rows
        .iter()
        .filter(|r| r.split != Split::Validation)
        .filter_map(|r| variant_radius(&r.mask_variant).map(|x| (r, x)))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let mut radii: Vec<f64> = pts.iter().map(|p| p.1).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let series: BTreeSet<Series> = pts
        .iter()
        .map(|(r, _)| (r.model.clone(), variant_source(&r.mask_variant).to_string(), r.split))
        .collect();

    let (x0, x1) = (radii[0], *radii.last().unwrap());
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * if radii.len() == 1 { 0.5 } else { (x - x0) / span };
    let py = |y: f64| TOP + ph * (1.0 - y.clamp(0.0, 1.0));

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">AUC vs expansion radius (95% CI)</text>"#, LEFT + pw / 2.0).unwrap();
    // axes and grid lines
    writeln!(s, r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}"/></g>"#, TOP + ph, LEFT + pw, TOP + ph, TOP + ph).unwrap();
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        writeln!(s, r##"<line class="ygrid" x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##, LEFT + pw, LEFT - 6.0, py(v) + 4.0, y = py(v)).unwrap();
    }
    for &r in &radii {
        writeln!(s, r#"<g class="xtick"><line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{r}</text></g>"#, TOP + ph, TOP + ph + 5.0, TOP + ph + 18.0, x = px(r)).unwrap();
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">radius (mm)</text>"#, LEFT + pw / 2.0, H - 10.0).unwrap();
    writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">AUC</text>"#, TOP + ph / 2.0, TOP + ph / 2.0).unwrap();

    for (i, key) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if key.2 == Split::Train { "4 3" } else { "none" };
        let mut mine: Vec<(&EvalRow, f64)> = pts
            .iter()
            .filter(|(r, _)| r.model == key.0 && variant_source(&r.mask_variant) == key.1 && r.split == key.2)
            .copied()
            .collect();
        mine.sort_by(|a, b| a.1.total_cmp(&b.1));
        let line: Vec<String> = mine
            .iter()
            .map(|(r, x)| format!("{:.1},{:.1}", px(*x), py(r.result.auc)))
            .collect();
        writeln!(s, r#"<g class="series" stroke="{color}" fill="{color}">"#).unwrap();
        writeln!(s, r#"<polyline fill="none" stroke-width="2" stroke-dasharray="{dash}" points="{}"/>"#, line.join(" ")).unwrap();
        for (r, x) in &mine {
            let (cx, lo, hi) = (px(*x), py(r.result.ci_low), py(r.result.ci_high));
            writeln!(s, r#"<path class="whisker" fill="none" d="M{cx:.1} {lo:.1}V{hi:.1}M{:.1} {lo:.1}H{:.1}M{:.1} {hi:.1}H{:.1}"/>"#, cx - 4.0, cx + 4.0, cx - 4.0, cx + 4.0).unwrap();
            writeln!(s, r#"<circle cx="{cx:.1}" cy="{:.1}" r="3"/>"#, py(r.result.auc)).unwrap();
        }
        writeln!(s, "</g>").unwrap();
        let ly = TOP + 10.0 + 18.0 * i as f64;
        writeln!(s, r#"<g class="legend"><line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{:.1}" y="{:.1}">{} / {} / {}</text></g>"#, W - RIGHT + 10.0, W - RIGHT + 30.0, W - RIGHT + 35.0, ly + 4.0, esc(&key.1), esc(&key.0), key.2).unwrap();
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// Method x classifier heat table of validation AUCs.
pub fn grid_svg(rows: &[EvalRow]) -> Option<String> {
    let cells: Vec<&EvalRow> = rows.iter().filter(|r| r.split == Split::Validation).collect();
    if cells.is_empty() {
        return None;
    }
    let mut methods: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for c in &cells {
        let m = variant_source(&c.mask_variant);
        if !methods.contains(&m) {
            methods.push(m);
        }
        if !models.contains(&c.model.as_str()) {
            models.push(&c.model);
        }
    }
    let (cw, chh, x0, y0) = (110.0, 36.0, 90.0, 50.0);
    let w = x0 + cw * models.len() as f64 + 20.0;
    let h = y0 + chh * methods.len() as f64 + 20.0;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">Validation AUC</text>"#, w / 2.0).unwrap();
    for (j, m) in models.iter().enumerate() {
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, x0 + cw * (j as f64 + 0.5), y0 - 8.0, esc(m)).unwrap();
    }
    for (i, meth) in methods.iter().enumerate() {
        let y = y0 + chh * i as f64;
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 8.0, y + chh / 2.0 + 4.0, esc(meth)).unwrap();
        for (j, m) in models.iter().enumerate() {
            let Some(c) = cells.iter().find(|c| variant_source(&c.mask_variant) == *meth && c.model == *m) else {
                continue;
            };
            // white at 0.5, saturated blue at 1.0
            let t = ((c.result.auc - 0.5) * 2.0).clamp(0.0, 1.0);
            let ch = |full: f64| (255.0 + (full - 255.0) * t).round() as u8;
            let x = x0 + cw * j as f64;
            writeln!(s, r##"<g class="cell"><rect x="{x:.1}" y="{y:.1}" width="{cw}" height="{chh}" fill="#{:02x}{:02x}{:02x}" stroke="#888888"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text></g>"##, ch(31.0), ch(119.0), ch(180.0), x + cw / 2.0, y + chh / 2.0 + 4.0, c.result.auc).unwrap();
        }
    }
    s.push_str("</svg>\n");
    Some(s)
}

pub fn markdown(rows: &[EvalRow], sources: &[String]) -> String {
    let mut s = String::from("# Evaluation summary\n\n");
    if !sources.is_empty() {
        s.push_str("Inputs:\n\n");
        for src in sources {
            writeln!(s, "- `{src}`").unwrap();
        }
        s.push('\n');
    }
    let grid: Vec<&EvalRow> = rows.iter().filter(|r| r.split == Split::Validation).collect();
    if !grid.is_empty() {
        s.push_str("## Validation grid\n\n| mask | model | AUC | 95% CI | pos/neg |\n|---|---|---|---|---|\n");
        for r in &grid {
            let a = &r.result;
            writeln!(s, "| {} | {} | {:.3} | {:.3} to {:.3} | {}/{} |", r.mask_variant, r.model, a.auc, a.ci_low, a.ci_high, a.n_pos, a.n_neg).unwrap();
        }
        let best = grid
            .iter()
            .fold(grid[0], |b, r| if r.result.auc > b.result.auc { r } else { b });
        writeln!(s, "\nBest cell: {} with {} (AUC {:.3}).\n", best.mask_variant, best.model, best.result.auc).unwrap();
    }
    let sweep: Vec<&EvalRow> = rows.iter().filter(|r| r.split != Split::Validation).collect();
    if !sweep.is_empty() {
        s.push_str("## Expansion sweep\n\n| mask | model | split | AUC | 95% CI | pos/neg |\n|---|---|---|---|---|---|\n");
        for r in &sweep {
            let a = &r.result;
            writeln!(s, "| {} | {} | {} | {:.3} | {:.3} to {:.3} | {}/{} |", r.mask_variant, r.model, r.split, a.auc, a.ci_low, a.ci_high, a.n_pos, a.n_neg).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Reads evaluation CSVs and writes `report.md` plus whichever charts apply.
/// Returns the written paths.
pub fn report(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if csv_paths.is_empty() {
        return Err(Error::InvalidParameter("no input CSVs".into()));
    }
    let mut rows = Vec::new();
    let mut sources = Vec::new();
    for p in csv_paths {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        rows.extend(parse_eval_csv(&text)?);
        sources.push(p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    if let Some(svg) = sweep_svg(&rows) {
        put("sweep.svg", &svg)?;
    }
    if let Some(svg) = grid_svg(&rows) {
        put("grid.svg", &svg)?;
    }
    put("report.md", &markdown(&rows, &sources))?;
    Ok(written)
}
