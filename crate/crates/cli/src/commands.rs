use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use hexpepo_core::analysis::{fmt_f64, read_results, write_results};
use hexpepo_core::oracle::statevector_expectation;
use hexpepo_core::pauli::{expectation, PropagationLimits};
use hexpepo_core::pepo::init_pepo;
use hexpepo_core::{error_report, fit_chi_extrapolation, CircuitSpec, Lattice, PauliSum, ResultRow};
use log::info;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{load_lattice, load_observable, Format, MethodConfig, RunConfig};

pub const ENGINE: &str = concat!("hexpepo-core ", env!("CARGO_PKG_VERSION"));

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_point(lattice: &Lattice, obs: &PauliSum, cfg: &RunConfig, theta: f64) -> Result<ResultRow> {
    let circuit = CircuitSpec::new(theta, cfg.steps, cfg.extra_rx)?;
    let start = Instant::now();
    let (value, discarded_weight, num_terms) = match &cfg.method {
        MethodConfig::Pepo { chi, eps, mem_cap } => {
            let mut pepo = init_pepo(lattice, obs)?;
            let report = pepo.evolve(&circuit, *chi, *eps)?;
            let v = pepo.close_and_contract_capped(*mem_cap)?;
            (v, Some(report.total_discarded()), None)
        }
        MethodConfig::Cet { policy } => {
            let (v, op) = expectation(obs, &circuit, lattice, *policy, PropagationLimits::default())?;
            (v, None, Some(op.len()))
        }
        MethodConfig::Oracle => (statevector_expectation(lattice, &circuit, obs)?, None, None),
    };
    let runtime = start.elapsed().as_secs_f64();
    info!("θ={theta:.6} value={value:.12} ({runtime:.2}s)");
    Ok(ResultRow {
        theta,
        method: cfg.method.name().into(),
        param: cfg.method.param(),
        observable: cfg.observable.clone(),
        steps: cfg.steps,
        extra_rx: cfg.extra_rx,
        value,
        discarded_weight,
        num_terms,
        runtime_s: Some(runtime),
    })
}

pub fn run(cfg: RunConfig) -> Result<()> {
    let lattice = load_lattice(&cfg.lattice)?;
    let obs = load_observable(&cfg.observable)?;
    info!(
        "{} on {} ({} sites): {} θ points, T={}{}",
        cfg.method.name(),
        lattice.name(),
        lattice.num_sites(),
        cfg.thetas.len(),
        cfg.steps,
        if cfg.extra_rx { "+1" } else { "" }
    );
    let started = Instant::now();
    let compute = || -> Result<Vec<ResultRow>> {
        cfg.thetas
            .par_iter()
            .map(|&theta| run_point(&lattice, &obs, &cfg, theta).with_context(|| format!("θ = {theta}")))
            .collect()
    };
    let rows = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(compute)?,
        None => compute()?,
    };
    let run_meta = json!({
        "engine": ENGINE,
        "config": &cfg,
        "wall_clock_s": started.elapsed().as_secs_f64(),
    });

    let mut out = sink(cfg.output.as_deref())?;
    match cfg.format {
        Format::Csv => {
            write_results(&rows, &mut out)?;
            if let Some(path) = &cfg.output {
                let meta = sidecar(path);
                std::fs::write(&meta, serde_json::to_string_pretty(&run_meta)?)
                    .with_context(|| format!("writing {}", meta.display()))?;
            }
        }
        Format::Json => {
            let mut doc = run_meta;
            doc["rows"] = serde_json::to_value(&rows)?;
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `results.csv` → `results.csv.meta.json`
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn read_table(path: &Path) -> Result<Vec<ResultRow>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_results(f).with_context(|| format!("reading {}", path.display()))
}

/// `chi=32;eps=0` → 32
fn chi_of(param: &str) -> Option<usize> {
    param
        .split(';')
        .find_map(|kv| kv.strip_prefix("chi="))
        .and_then(|v| v.parse().ok())
}

struct ExtrapolationRow {
    theta: f64,
    observable: String,
    steps: usize,
    extra_rx: bool,
    points: usize,
    chi_max: usize,
    value_chi_max: f64,
    a: Option<f64>,
    b: Option<f64>,
    residual: Option<f64>,
    /// `b` when the fit succeeded, otherwise the largest-χ value.
    estimate: f64,
    status: String,
}

/// (observable, steps, extra_rx, θ bits)
type SeriesKey = (String, usize, bool, u64);

pub fn extrapolate(inputs: &[PathBuf], chis: Option<&[usize]>, output: Option<&Path>) -> Result<()> {
    let mut groups: BTreeMap<SeriesKey, Vec<(usize, f64)>> = BTreeMap::new();
    for path in inputs {
        for row in read_table(path)? {
            if row.method != "pepo" {
                continue;
            }
            let Some(chi) = chi_of(&row.param) else { continue };
            if chis.is_some_and(|keep| !keep.contains(&chi)) {
                continue;
            }
            groups
                .entry((row.observable, row.steps, row.extra_rx, row.theta.to_bits()))
                .or_default()
                .push((chi, row.value));
        }
    }
    anyhow::ensure!(!groups.is_empty(), "no PEPO rows with a chi parameter in the input");

    let mut rows = Vec::new();
    for ((observable, steps, extra_rx, bits), mut pts) in groups {
        pts.sort_by_key(|p| p.0);
        let (chi_max, value_chi_max) = *pts.last().unwrap();
        let mut row = ExtrapolationRow {
            theta: f64::from_bits(bits),
            observable,
            steps,
            extra_rx,
            points: pts.len(),
            chi_max,
            value_chi_max,
            a: None,
            b: None,
            residual: None,
            estimate: value_chi_max,
            status: "ok".into(),
        };
        match fit_chi_extrapolation(&pts) {
            Ok(fit) => {
                row.a = Some(fit.a);
                row.b = Some(fit.b);
                row.residual = Some(fit.residual);
                row.estimate = fit.b;
            }
            Err(e) => row.status = e.to_string(),
        }
        rows.push(row);
    }
    rows.sort_by(|x, y| {
        (&x.observable, x.steps, x.extra_rx)
            .cmp(&(&y.observable, y.steps, y.extra_rx))
            .then(x.theta.total_cmp(&y.theta))
    });

    let mut wr = csv::Writer::from_writer(sink(output)?);
    wr.write_record([
        "theta",
        "observable",
        "steps",
        "extra_rx",
        "points",
        "chi_max",
        "value_chi_max",
        "a",
        "b",
        "residual",
        "estimate",
        "status",
    ])?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in &rows {
        wr.write_record([
            fmt_f64(r.theta),
            r.observable.clone(),
            r.steps.to_string(),
            r.extra_rx.to_string(),
            r.points.to_string(),
            r.chi_max.to_string(),
            fmt_f64(r.value_chi_max),
            opt(r.a),
            opt(r.b),
            opt(r.residual),
            fmt_f64(r.estimate),
            r.status.clone(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn compare(
    reference: &Path,
    candidates: &[PathBuf],
    output: Option<&Path>,
    summary: Option<&Path>,
) -> Result<()> {
    let reference = read_table(reference)?;
    let tables = candidates.iter().map(|p| read_table(p)).collect::<Result<Vec<_>>>()?;
    let report = error_report(&reference, &tables)?;
    report.write_points_csv(sink(output)?)?;
    match summary {
        Some(path) => report.write_summary_csv(sink(Some(path))?)?,
        None => report.write_summary_csv(io::stderr().lock())?,
    }
    Ok(())
}

pub fn lattice_info(spec: &str, lightcone: Option<&[usize]>, steps: usize, dump: Option<&Path>) -> Result<()> {
    let lattice = load_lattice(spec)?;
    let mut degrees = [0usize; 4];
    for s in 0..lattice.num_sites() {
        degrees[lattice.degree(s).min(3)] += 1;
    }
    let mut info = json!({
        "name": lattice.name(),
        "num_sites": lattice.num_sites(),
        "num_edges": lattice.edges().len(),
        "max_degree": lattice.max_degree(),
        "degree_histogram": degrees,
        "edge_layers": lattice.layers().iter().map(Vec::len).collect::<Vec<_>>(),
    });
    if let Some(support) = lightcone {
        let (sub, _) = lattice.extract_lightcone(support, steps)?;
        info["lightcone"] = json!({
            "support": support,
            "steps": steps,
            "num_sites": sub.num_sites(),
            "num_edges": sub.edges().len(),
        });
    }
    if let Some(path) = dump {
        std::fs::write(path, lattice.to_json()?).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &info)?;
    writeln!(out)?;
    Ok(())
}
