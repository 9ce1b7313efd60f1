//! Latent embeddings as CSV tables and SVG scatter plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{write_csv, PairedDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::DisentanglerModel;
use crate::parallel::Execution;

pub struct LatentBlock {
    pub name: &'static str,
    pub values: Matrix,
    /// Truth column used to color plots of this block.
    pub color_by: Option<String>,
}

/// The non-empty latent blocks `c_u`, `u`, `c_v`, `v` of every dataset row.
pub fn latent_blocks(model: &DisentanglerModel, ds: &PairedDataset, exec: Execution) -> Result<Vec<LatentBlock>> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    let [c_u, u, c_v, v] = super::encode_rows(model, ds, &rows, exec)?;
    let roles = &ds.provenance.roles;
    let first_truth = ds.truth.as_ref().and_then(|t| t.names.first().cloned());
    let pick = |r: &Option<String>| r.clone().or_else(|| first_truth.clone());
    Ok([
        ("c_u", c_u, pick(&roles.common)),
        ("u", u, pick(&roles.uncommon1)),
        ("c_v", c_v, pick(&roles.common)),
        ("v", v, pick(&roles.uncommon2)),
    ]
    .into_iter()
    .filter(|(_, m, _)| m.cols() > 0)
    .map(|(name, values, color_by)| LatentBlock { name, values, color_by })
    .collect())
}

/// Writes `<block>.csv` (latent columns followed by every truth column) and
/// `<block>.svg` for each latent block; returns the written paths.
pub fn export_embeddings(
    model: &DisentanglerModel,
    ds: &PairedDataset,
    dir: &Path,
    svg: bool,
    exec: Execution,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for block in latent_blocks(model, ds, exec)? {
        let mut header: Vec<String> = (0..block.values.cols()).map(|j| format!("latent_{j}")).collect();
        let table = match &ds.truth {
            Some(t) => {
                header.extend(t.names.iter().cloned());
                block.values.hcat(&t.values)?
            }
            None => block.values.clone(),
        };
        let path = dir.join(format!("{}.csv", block.name));
        write_csv(&path, &header, &table)?;
        written.push(path);
        if svg && block.values.cols() >= 2 {
            let color = block
                .color_by
                .as_ref()
                .and_then(|c| ds.truth.as_ref().and_then(|t| t.column(c)));
            let path = dir.join(format!("{}.svg", block.name));
            let doc = scatter_svg(block.name, &block.values, color.as_deref());
            std::fs::write(&path, doc).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

const PANEL: f64 = 320.0;
const MARGIN: f64 = 24.0;

fn hue(t: f64) -> String {
    format!("hsl({:.0},80%,45%)", 300.0 * t.clamp(0.0, 1.0))
}

/// Scatter plot of a latent block: one panel for two columns, three
/// axis-pair panels for three or more (first three columns).
pub fn scatter_svg(title: &str, values: &Matrix, color: Option<&[f64]>) -> String {
    let pairs: &[(usize, usize)] = if values.cols() >= 3 { &[(0, 1), (0, 2), (1, 2)] } else { &[(0, 1)] };
    let width = pairs.len() as f64 * (PANEL + MARGIN) + MARGIN;
    let height = PANEL + 2.0 * MARGIN;
    let (cmin, cmax) = color.map_or((0.0, 1.0), |c| {
        c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
    });
    let crange = if cmax > cmin { cmax - cmin } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">{title}</text>");
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let x0 = MARGIN + p as f64 * (PANEL + MARGIN);
        let y0 = MARGIN;
        let col_a = values.column(a);
        let col_b = values.column(b);
        let range = |c: &[f64]| {
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
            if hi > lo { (lo, hi - lo) } else { (lo - 0.5, 1.0) }
        };
        let (la, ra) = range(&col_a);
        let (lb, rb) = range(&col_b);
        let _ = writeln!(
            s,
            "<g><rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{PANEL}\" height=\"{PANEL}\" fill=\"none\" stroke=\"#999\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">latent_{a} vs latent_{b}</text>",
            x0 + 4.0,
            y0 + PANEL + 14.0
        );
        for i in 0..values.rows() {
            let x = x0 + 4.0 + (PANEL - 8.0) * (col_a[i] - la) / ra;
            let y = y0 + PANEL - 4.0 - (PANEL - 8.0) * (col_b[i] - lb) / rb;
            let fill = color.map_or_else(|| "#333".to_string(), |c| hue((c[i] - cmin) / crange));
            let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.5\" fill=\"{fill}\"/>");
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
