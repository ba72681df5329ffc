//! Markdown digest of whatever earlier subcommands left in a directory.

use std::fmt::Write as _;
use std::path::Path;

use torsion_lab::output::write_atomic;
use torsion_lab::{Error, Result};

type Rows = Vec<Vec<String>>;

fn read_csv(path: &Path) -> Result<Option<(Vec<String>, Rows)>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Some((header, rows)))
}

fn col(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Config(format!("CSV is missing the `{name}` column")))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

fn md_table(out: &mut String, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn summary_section(dir: &Path, out: &mut String) -> Result<bool> {
    let path = dir.join("summary.json");
    if !path.exists() {
        return Ok(false);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    out.push_str("## Solve\n\n");
    let keys = [
        "level",
        "nodes",
        "tau",
        "area",
        "R",
        "H0",
        "z",
        "u_min",
        "flux_deviation_l2",
        "cg_iterations",
    ];
    md_table(
        out,
        &["quantity", "value"],
        keys.iter()
            .filter_map(|k| v.get(*k).map(|x| vec![k.to_string(), x.to_string()])),
    );
    Ok(true)
}

fn identities_section(dir: &Path, out: &mut String) -> Result<bool> {
    let Some((h, rows)) = read_csv(&dir.join("identities.csv"))? else {
        return Ok(false);
    };
    let (ci, cl, co) = (col(&h, "identity")?, col(&h, "level")?, col(&h, "order_estimate")?);
    let (ca, cr) = (col(&h, "abs_residual")?, col(&h, "rel_residual")?);
    let finest = rows
        .iter()
        .filter_map(|r| r[cl].parse::<usize>().ok())
        .max()
        .unwrap_or(0);
    out.push_str(&format!("## Identities\n\nFinest level {finest}.\n\n"));
    md_table(
        out,
        &["identity", "absolute residual", "relative residual", "order"],
        rows.iter()
            .filter(|r| r[cl].parse::<usize>().ok() == Some(finest))
            .map(|r| {
                let order = if r[co].is_empty() {
                    "-".to_string()
                } else {
                    format!("{:.2}", num(&r[co]))
                };
                vec![
                    r[ci].clone(),
                    format!("{:.3e}", num(&r[ca])),
                    format!("{:.3e}", num(&r[cr])),
                    order,
                ]
            }),
    );
    Ok(true)
}

fn stability_section(dir: &Path, out: &mut String) -> Result<bool> {
    let sweep = read_csv(&dir.join("sweep.csv"))?;
    let fits = read_csv(&dir.join("fits.csv"))?;
    if sweep.is_none() && fits.is_none() {
        return Ok(false);
    }
    out.push_str("## Stability sweep\n\n");
    if let Some((h, rows)) = sweep {
        let cols = ["epsilon", "eta_L2_H", "eta_L2_flux", "gap", "asym", "dual_norm"];
        let idx = cols.iter().map(|c| col(&h, c)).collect::<Result<Vec<_>>>()?;
        md_table(
            out,
            &cols,
            rows.iter()
                .map(|r| idx.iter().map(|&i| format!("{:.4e}", num(&r[i]))).collect()),
        );
    }
    if let Some((h, rows)) = fits {
        let (cx, cy, cs, cc) = (col(&h, "x")?, col(&h, "y")?, col(&h, "slope")?, col(&h, "correlation")?);
        md_table(
            out,
            &["y", "x", "slope", "correlation"],
            rows.iter().map(|r| {
                vec![
                    r[cy].clone(),
                    r[cx].clone(),
                    format!("{:.4}", num(&r[cs])),
                    format!("{:.5}", num(&r[cc])),
                ]
            }),
        );
    }
    Ok(true)
}

fn flow_section(dir: &Path, out: &mut String) -> Result<bool> {
    let Some((h, rows)) = read_csv(&dir.join("trajectory.csv"))? else {
        return Ok(false);
    };
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return Ok(false);
    };
    let (ct, cj, cd, cf) = (
        col(&h, "t")?,
        col(&h, "J")?,
        col(&h, "circle_distance")?,
        col(&h, "flux_deviation")?,
    );
    let j: Vec<f64> = rows.iter().map(|r| num(&r[cj])).collect();
    let trend = if j.windows(2).all(|w| w[1] <= w[0]) {
        "non-increasing"
    } else if j.windows(2).all(|w| w[1] >= w[0]) {
        "non-decreasing"
    } else {
        "not monotone"
    };
    out.push_str("## Flow\n\n");
    md_table(
        out,
        &["quantity", "initial", "final"],
        [
            vec!["t".into(), first[ct].clone(), last[ct].clone()],
            vec!["J".into(), first[cj].clone(), last[cj].clone()],
            vec!["circle distance".into(), first[cd].clone(), last[cd].clone()],
            vec!["flux deviation".into(), first[cf].clone(), last[cf].clone()],
        ],
    );
    let _ = writeln!(out, "{} accepted steps; J is {trend}.\n", rows.len() - 1);
    Ok(true)
}

/// Builds the digest of `dir`, or fails when nothing recognisable is there.
pub(crate) fn build(dir: &Path) -> Result<String> {
    let mut out = String::from("# torsion-lab report\n\n");
    let mut found = false;
    found |= summary_section(dir, &mut out)?;
    found |= identities_section(dir, &mut out)?;
    found |= stability_section(dir, &mut out)?;
    found |= flow_section(dir, &mut out)?;
    if !found {
        return Err(Error::Config(format!("no outputs found in {}", dir.display())));
    }
    Ok(out)
}

pub(crate) fn run(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let text = build(dir)?;
    write_atomic(&dir.join("report.md"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
