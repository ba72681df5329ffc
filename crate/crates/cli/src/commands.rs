use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde_json::json;
use torsion_lab::domain_io::{self, FamilySpec};
use torsion_lab::identities::{self, IdentityReport};
use torsion_lab::output::{write_json, Plot, Series, Table};
use torsion_lab::shapeflow::{self, FlowDirection, FlowOptions};
use torsion_lab::stability::{self, Field, DEFAULT_FITS};
use torsion_lab::{solve as solve_mesh, Domain, Error, Mesh, Result};

use crate::{check_input, check_level, DomainSource, FlowArgs, SolveArgs, StabilityArgs, VerifyArgs};

/// Modes and amplitude of `--seed` domains.
const RANDOM_MODES: usize = 6;
const RANDOM_AMPLITUDE: f64 = 0.3;

fn load_domain(source: &DomainSource) -> Result<Domain> {
    match (&source.domain, source.seed) {
        (Some(path), _) => {
            check_input(path)?;
            domain_io::read_domain(path)
        }
        (None, Some(seed)) => domain_io::random_domain(seed, RANDOM_MODES, RANDOM_AMPLITUDE),
        (None, None) => Err(Error::Config("one of --domain or --seed is required".into())),
    }
}

/// Creates `dir` if needed and checks that it is a writable directory.
fn prepare_out(dir: &Path) -> Result<PathBuf> {
    let io = |e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let meta = std::fs::metadata(dir).map_err(io)?;
    if !meta.is_dir() || meta.permissions().readonly() {
        return Err(Error::Config(format!("{} is not a writable directory", dir.display())));
    }
    Ok(dir.to_path_buf())
}

fn boundary_polyline(domain: &Domain, n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|i| {
            let p = domain.point(2.0 * PI * i as f64 / n as f64);
            (p[0], p[1])
        })
        .collect()
}

pub(crate) fn solve(a: SolveArgs) -> Result<()> {
    check_level(a.level)?;
    let domain = load_domain(&a.source)?;
    let out = prepare_out(&a.output.out)?;
    let mesh = Mesh::build(&domain, a.level)?;
    if a.dump_mesh {
        mesh.write_csv(&out)?;
    }
    let sol = solve_mesh(mesh)?;
    let mesh = sol.mesh();

    let mut nodal = Table::new(&["x", "y", "u", "P", "h"]);
    for (i, p) in mesh.nodes().iter().enumerate() {
        nodal.push(vec![
            p[0].into(),
            p[1].into(),
            sol.u()[i].into(),
            sol.p_nodal()[i].into(),
            sol.h_nodal()[i].into(),
        ]);
    }
    nodal.write(&out.join("solution.csv"))?;

    let flux = sol.boundary_flux();
    let mut boundary = Table::new(&["theta", "u_nu"]);
    for s in &flux {
        boundary.push(vec![s.theta.into(), s.flux.into()]);
    }
    boundary.write(&out.join("boundary.csv"))?;

    let z = sol.z();
    let cg = sol.cg_report();
    let summary = json!({
        "level": mesh.level(),
        "h": mesh.h(),
        "nodes": mesh.node_count(),
        "elements": mesh.triangles().len(),
        "tau": sol.tau(),
        "area": sol.area(),
        "perimeter": sol.perimeter(),
        "R": sol.radius(),
        "H0": sol.h0(),
        "z": [z[0], z[1]],
        "u_min": sol.u_min(),
        "flux_deviation_l2": sol.flux_deviation_l2(),
        "cg_iterations": cg.iterations,
        "cg_relative_residual": cg.relative_residual,
        "domain": domain_io::domain_to_value(&domain),
    });
    write_json(&out.join("summary.json"), &summary)?;

    if a.output.plot {
        Plot {
            title: "boundary flux".into(),
            x_label: "theta".into(),
            y_label: "u_nu".into(),
            series: vec![Series {
                name: "u_nu".into(),
                points: flux.iter().map(|s| (s.theta, s.flux)).collect(),
                markers: false,
            }],
            ..Plot::default()
        }
        .write(&out.join("boundary_flux.svg"))?;
    }
    println!(
        "tau = {}  R = {}  |u_nu - R|_2 = {:e}",
        sol.tau(),
        sol.radius(),
        sol.flux_deviation_l2()
    );
    Ok(())
}

/// Parses `a..b` (inclusive), `a`, or `a,b,c`.
pub(crate) fn parse_levels(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse levels `{text}`; expected a..b, a or a,b,c"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let levels: Vec<usize> = if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("levels `{text}` must be strictly increasing")));
    }
    for &l in &levels {
        check_level(l)?;
    }
    Ok(levels)
}

pub(crate) fn verify(a: VerifyArgs) -> Result<()> {
    let levels = parse_levels(&a.levels)?;
    let domain = load_domain(&a.source)?;
    let out = prepare_out(&a.output.out)?;
    let reports = identities::verify_with(&domain, &levels, a.samples)?;
    identities::reports_table(&reports).write(&out.join("identities.csv"))?;
    if a.output.plot {
        residual_plot(&reports).write(&out.join("identities.svg"))?;
    }
    let finest = *levels.last().unwrap();
    for r in reports.iter().filter(|r| r.level == finest) {
        let order = r.order.map_or("-".to_string(), |o| format!("{o:.2}"));
        println!(
            "{:<20} level {finest}  abs {:.3e}  rel {:.3e}  order {order}",
            r.name, r.abs_residual, r.rel_residual
        );
    }
    Ok(())
}

fn residual_plot(reports: &[IdentityReport]) -> Plot {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.name) {
            names.push(r.name);
        }
    }
    Plot {
        title: "identity residuals".into(),
        x_label: "h".into(),
        y_label: "relative residual".into(),
        log_x: true,
        log_y: true,
        series: names
            .into_iter()
            .map(|n| Series {
                name: n.into(),
                points: reports
                    .iter()
                    .filter(|r| r.name == n)
                    .map(|r| (r.h, r.rel_residual))
                    .collect(),
                markers: true,
            })
            .collect(),
    }
}

pub(crate) fn stability(a: StabilityArgs) -> Result<()> {
    check_input(&a.family)?;
    let mut family: FamilySpec = domain_io::read_family(&a.family)?;
    if let Some(level) = a.level {
        family.level = level;
    }
    check_level(family.level)?;
    let out = prepare_out(&a.output.out)?;
    let records = stability::sweep_with(&family, a.samples)?;
    stability::records_table(&records).write(&out.join("sweep.csv"))?;
    let fits = stability::fits_table(&records, &DEFAULT_FITS)?;
    fits.write(&out.join("fits.csv"))?;
    if a.output.plot {
        let series = |x: Field, y: Field| Series {
            name: format!("{} vs {}", y.name(), x.name()),
            points: records.iter().map(|r| (x.get(r), y.get(r))).collect(),
            markers: true,
        };
        Plot {
            title: "stability sweep".into(),
            x_label: "deviation".into(),
            y_label: "rigidity measure".into(),
            log_x: true,
            log_y: true,
            series: DEFAULT_FITS.iter().map(|&(x, y)| series(x, y)).collect(),
        }
        .write(&out.join("sweep.svg"))?;
    }
    for &(x, y) in &DEFAULT_FITS {
        let f = stability::fit_exponent(&records, x, y)?;
        println!(
            "{} vs {}: slope {:.4}  r {:.5}",
            y.name(),
            x.name(),
            f.slope,
            f.correlation
        );
    }
    Ok(())
}

pub(crate) fn flow(a: FlowArgs) -> Result<()> {
    check_level(a.level)?;
    let domain = load_domain(&a.source)?;
    let out = prepare_out(&a.output.out)?;
    let options = FlowOptions {
        dt: a.dt,
        max_steps: a.max_steps,
        level: a.level,
        freeze_r: a.freeze_r,
        direction: if a.ascent {
            FlowDirection::Ascent
        } else {
            FlowDirection::Descent
        },
        target_distance: a.target,
        samples: a.samples,
        ..FlowOptions::default()
    };
    let (states, failure) = shapeflow::run_flow_partial(&domain, &options)?;
    shapeflow::trajectory_table(&states).write(&out.join("trajectory.csv"))?;
    let (first, last) = (&states[0], states.last().unwrap());
    write_json(
        &out.join("final_domain.json"),
        &domain_io::domain_to_value(&last.domain),
    )?;
    if a.output.plot {
        Plot {
            title: format!("flow boundaries, t = {}", last.t),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                Series {
                    name: "initial".into(),
                    points: boundary_polyline(&first.domain, 256),
                    markers: false,
                },
                Series {
                    name: "final".into(),
                    points: boundary_polyline(&last.domain, 256),
                    markers: false,
                },
            ],
            ..Plot::default()
        }
        .write(&out.join("flow.svg"))?;
    }
    println!(
        "{} steps, t = {}, circle distance {:.3e} -> {:.3e}, flux deviation {:.3e} -> {:.3e}",
        last.step, last.t, first.circle_distance, last.circle_distance, first.flux_deviation, last.flux_deviation
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
