//! The subcommand pipelines. All files go through one [`Output`] writer.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;

use netsir::analytics::{final_size_meanfield, final_size_pairwise, reproduction_numbers};
use netsir::special::{
    solve_fixed_delay_meanfield, solve_fixed_delay_pairwise, solve_gamma_chain, solve_markovian_meanfield,
    solve_markovian_pairwise, solve_reference_pairwise, solve_uniform_delay_pairwise,
};
use netsir::volterra::{solve_meanfield, solve_pairwise, ModelParams, ModelSolution};
use netsir::{
    run_ensemble, Ensemble, EnsembleConfig, Graph, GraphSource, Meta, RecoveryDistribution, Series, Trajectory,
};

use crate::config::{dist_tags, ExperimentConfig};
use crate::table::Table;
use crate::{CliError, Command, Model, Special};

/// Pairwise peak prevalence must match the ensemble mean within this
/// relative error.
pub const PEAK_RTOL: f64 = 0.10;
/// Pairwise final size must match the ensemble mean within this relative
/// error.
pub const FINAL_RTOL: f64 = 0.05;

pub fn dispatch(cfg: &ExperimentConfig, command: &Command) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Output::create(cfg)?;
    match command {
        Command::Simulate => simulate(cfg, &mut out)?,
        Command::Solve { model } => solve(cfg, *model, &mut out)?,
        Command::Analytics => analytics(cfg, &mut out)?,
        Command::Compare { gnuplot } => compare(cfg, *gnuplot, &mut out)?,
        Command::GraphGen => graph_gen(cfg, &mut out)?,
    }
    Ok(out.written)
}

/// Sequential writer rooted at the output directory.
pub struct Output {
    dir: PathBuf,
    prefix: String,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn create(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out_dir)
            .map_err(|e| CliError::io(format!("creating {}", cfg.out_dir.display()), e))?;
        Ok(Self {
            dir: cfg.out_dir.clone(),
            prefix: cfg.prefix.clone(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}{name}", self.prefix))
    }

    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let context = || format!("writing {}", path.display());
        let file = File::create(&path).map_err(|e| CliError::io(context(), e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|()| w.flush()).map_err(|e| CliError::io(context(), e))?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// `base.csv` for a single law, `base_<tag>.csv` otherwise.
fn file_name(base: &str, tag: Option<&str>) -> String {
    match tag {
        Some(t) => format!("{base}_{t}.csv"),
        None => format!("{base}.csv"),
    }
}

fn tags(cfg: &ExperimentConfig) -> Vec<Option<String>> {
    if cfg.dists.len() == 1 {
        vec![None]
    } else {
        dist_tags(&cfg.dists).into_iter().map(Some).collect()
    }
}

fn shared_graph(cfg: &ExperimentConfig) -> Result<Option<Graph>, CliError> {
    if let Some(path) = &cfg.graph_file {
        let file = File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
        let g = Graph::read_edge_list(BufReader::new(file))?;
        if (g.num_nodes(), g.degree()) != (cfg.nodes, cfg.degree) {
            return Err(CliError::Config(format!(
                "{} holds a graph with N={}, n={}, config says N={}, n={}",
                path.display(),
                g.num_nodes(),
                g.degree(),
                cfg.nodes,
                cfg.degree
            )));
        }
        return Ok(Some(g));
    }
    if cfg.fresh_graph {
        return Ok(None);
    }
    Ok(Some(Graph::random_regular(cfg.nodes, cfg.degree, cfg.graph_seed)?))
}

fn ensemble(
    cfg: &ExperimentConfig,
    graph: Option<&Graph>,
    dist: &RecoveryDistribution,
    keep_runs: bool,
) -> Result<Ensemble, CliError> {
    let p = cfg.epidemic_params(dist)?;
    let mut ec = EnsembleConfig::new(cfg.runs, cfg.base_seed);
    ec.dt_out = cfg.dt_out;
    ec.keep_runs = keep_runs;
    let source = match graph {
        Some(g) => GraphSource::Shared(g),
        None => GraphSource::Fresh {
            nodes: cfg.nodes,
            degree: cfg.degree,
        },
    };
    Ok(run_ensemble(source, &p, &ec)?)
}

fn simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let graph = shared_graph(cfg)?;
    for (dist, tag) in cfg.dists.iter().zip(tags(cfg)) {
        let ens = ensemble(cfg, graph.as_ref(), dist, cfg.per_run_files)?;
        let meta = cfg.meta("simulate", Some(dist));
        let tag = tag.as_deref();
        out.write(&file_name("sim_mean", tag), |w| {
            Trajectory::write_ensemble_csv(&ens.mean, &ens.std, w, &meta)
        })?;
        out.write(&file_name("sim_std", tag), |w| ens.std.write_csv(w, &meta))?;
        for (k, run) in ens.runs.iter().enumerate() {
            let run_meta = meta.clone().with("run", k);
            let base = format!("sim_run{:04}", k);
            out.write(&file_name(&base, tag), |w| run.write_csv(w, &run_meta))?;
        }
    }
    Ok(())
}

fn solve_model(cfg: &ExperimentConfig, model: Model, p: &ModelParams) -> Result<ModelSolution, CliError> {
    let (h, t_end) = (cfg.h, cfg.t_end);
    let sol = match model {
        Model::Pairwise => solve_pairwise(p, &cfg.solver_config()),
        Model::Meanfield => solve_meanfield(p, &cfg.solver_config()),
        Model::Special(s) => match s {
            Special::Markovian => solve_markovian_pairwise(p, h, t_end),
            Special::Fixed => solve_fixed_delay_pairwise(p, h, t_end),
            Special::Gamma => solve_gamma_chain(p, h, t_end).map(|g| g.solution),
            Special::Uniform => solve_uniform_delay_pairwise(p, h, t_end),
            Special::Reference => solve_reference_pairwise(p, h, t_end),
            Special::MarkovianMeanfield => solve_markovian_meanfield(p, h, t_end),
            Special::FixedMeanfield => solve_fixed_delay_meanfield(p, h, t_end),
        },
    };
    Ok(sol?)
}

fn solver_meta(cfg: &ExperimentConfig, command: &str, model: Model, sol: &ModelSolution, dist: &RecoveryDistribution) -> Meta {
    let mut meta = cfg.meta(command, Some(dist)).with("model", model);
    for w in &sol.warnings {
        meta.push("warning", w);
    }
    meta
}

fn solve(cfg: &ExperimentConfig, model: Model, out: &mut Output) -> Result<(), CliError> {
    for (dist, tag) in cfg.dists.iter().zip(tags(cfg)) {
        let sol = solve_model(cfg, model, &cfg.model_params(dist)?)?;
        for w in &sol.warnings {
            eprintln!("warning: {w}");
        }
        let meta = solver_meta(cfg, "solve", model, &sol, dist);
        let base = format!("solve_{}", model.file_tag());
        out.write(&file_name(&base, tag.as_deref()), |w| sol.trajectory.write_csv(w, &meta))?;
    }
    Ok(())
}

pub const ANALYTICS_COLUMNS: [&str; 11] = [
    "kind",
    "dist",
    "mean",
    "variance",
    "laplace",
    "R0",
    "R0p",
    "s_inf_mf",
    "s_inf_pw",
    "attack_mf",
    "attack_pw",
];

pub fn analytics_table(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let mut table = Table::new(cfg.meta("analytics", None), &ANALYTICS_COLUMNS);
    let s0 = (cfg.nodes - cfg.initial_infected) as f64;
    for dist in &cfg.dists {
        let r = reproduction_numbers(cfg.tau, cfg.degree as f64, cfg.nodes as f64, s0, dist)?;
        let mf = final_size_meanfield(r.r0)?;
        let pw = final_size_pairwise(r.r0p, cfg.degree as f64)?;
        table.push(vec![
            r.family.to_string(),
            dist.to_string(),
            r.mean.to_string(),
            r.variance.to_string(),
            r.laplace_at_tau.to_string(),
            r.r0.to_string(),
            r.r0p.to_string(),
            mf.s_inf.to_string(),
            pw.s_inf.to_string(),
            mf.attack_rate.to_string(),
            pw.attack_rate.to_string(),
        ]);
    }
    Ok(table)
}

fn analytics(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let table = analytics_table(cfg)?;
    print_table(&table);
    out.write("analytics.csv", |w| table.write(w))?;
    Ok(())
}

/// Aligned-column rendering; numbers are shortened to 6 significant digits.
fn print_table(table: &Table) {
    let cell = |s: &str| match s.parse::<f64>() {
        Ok(v) => format!("{v:.6e}"),
        Err(_) => s.to_string(),
    };
    let rows: Vec<Vec<String>> = table.rows.iter().map(|r| r.iter().map(|c| cell(c)).collect()).collect();
    let widths: Vec<usize> = (0..table.header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([table.header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(&table.header));
    for r in &rows {
        println!("{}", line(r));
    }
}

/// Peak prevalence, its time, and the final size `N - [S](t_end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSummary {
    pub peak: f64,
    pub peak_time: f64,
    pub final_size: f64,
}

impl CurveSummary {
    pub fn of(tr: &Trajectory) -> Self {
        let (peak, peak_time) = tr.peak_prevalence();
        Self {
            peak,
            peak_time,
            final_size: tr.s[0] + tr.i[0] + tr.r[0] - tr.last(Series::S),
        }
    }
}

fn rel(a: f64, reference: f64) -> f64 {
    (a - reference).abs() / reference.abs()
}

pub const SUMMARY_COLUMNS: [&str; 18] = [
    "tag",
    "dist",
    "peak_sim",
    "peak_time_sim",
    "final_sim",
    "peak_pw",
    "peak_time_pw",
    "final_pw",
    "peak_mf",
    "peak_time_mf",
    "final_mf",
    "peak_err_pw",
    "final_err_pw",
    "peak_err_mf",
    "final_err_mf",
    "attack_sim",
    "attack_pw",
    "attack_mf",
];

pub const ALIGNED_COLUMNS: [&str; 8] = [
    "t",
    "I_sim",
    "I_sim_std",
    "I_pw",
    "I_mf",
    "S_sim",
    "S_pw",
    "S_mf",
];

fn compare(cfg: &ExperimentConfig, gnuplot: bool, out: &mut Output) -> Result<(), CliError> {
    let graph = shared_graph(cfg)?;
    let mut summary = Table::new(cfg.meta("compare", None), &SUMMARY_COLUMNS);
    let mut report = String::new();
    let mut failures = Vec::new();
    let mut aligned_files = Vec::new();
    let tags_all = dist_tags(&cfg.dists);
    for ((dist, tag), full_tag) in cfg.dists.iter().zip(tags(cfg)).zip(&tags_all) {
        let ens = ensemble(cfg, graph.as_ref(), dist, false)?;
        let p = cfg.model_params(dist)?;
        let pw = solve_model(cfg, Model::Pairwise, &p)?;
        let mf = solve_model(cfg, Model::Meanfield, &p)?;

        let mut aligned = Table::new(cfg.meta("compare", Some(dist)), &ALIGNED_COLUMNS);
        for (k, &t) in ens.mean.t.iter().enumerate() {
            aligned.push(
                [
                    t,
                    ens.mean.i[k],
                    ens.std.i[k],
                    pw.trajectory.value_at(Series::I, t),
                    mf.trajectory.value_at(Series::I, t),
                    ens.mean.s[k],
                    pw.trajectory.value_at(Series::S, t),
                    mf.trajectory.value_at(Series::S, t),
                ]
                .iter()
                .map(f64::to_string)
                .collect(),
            );
        }
        let path = out.write(&file_name("compare", tag.as_deref()), |w| aligned.write(w))?;
        aligned_files.push((full_tag.clone(), path));

        let (sim, spw, smf) = (
            CurveSummary::of(&ens.mean),
            CurveSummary::of(&pw.trajectory),
            CurveSummary::of(&mf.trajectory),
        );
        let nodes = cfg.nodes as f64;
        let peak_err_pw = rel(spw.peak, sim.peak);
        let final_err_pw = rel(spw.final_size, sim.final_size);
        let row = [
            sim.peak,
            sim.peak_time,
            sim.final_size,
            spw.peak,
            spw.peak_time,
            spw.final_size,
            smf.peak,
            smf.peak_time,
            smf.final_size,
            peak_err_pw,
            final_err_pw,
            rel(smf.peak, sim.peak),
            rel(smf.final_size, sim.final_size),
            sim.final_size / nodes,
            spw.final_size / nodes,
            smf.final_size / nodes,
        ];
        summary.push(
            [full_tag.clone(), dist.to_string()]
                .into_iter()
                .chain(row.iter().map(f64::to_string))
                .collect(),
        );

        let _ = writeln!(report, "[{full_tag}] {dist}");
        for (name, s) in [("simulation", sim), ("pairwise", spw), ("mean-field", smf)] {
            let _ = writeln!(
                report,
                "  {name:<11} peak {:9.3} at t = {:6.2}   final size {:9.3}",
                s.peak, s.peak_time, s.final_size
            );
        }
        let _ = writeln!(
            report,
            "  pairwise vs sim:   peak {:.4}, final {:.5}",
            peak_err_pw, final_err_pw
        );
        let _ = writeln!(
            report,
            "  mean-field vs sim: peak {:.4}, final {:.5}",
            rel(smf.peak, sim.peak),
            rel(smf.final_size, sim.final_size)
        );
        let checks = [
            (peak_err_pw < PEAK_RTOL, format!("pairwise peak error {peak_err_pw:.4} < {PEAK_RTOL}")),
            (final_err_pw < FINAL_RTOL, format!("pairwise final-size error {final_err_pw:.5} < {FINAL_RTOL}")),
            (
                smf.final_size > sim.final_size,
                format!("mean-field final size {:.3} > simulation {:.3}", smf.final_size, sim.final_size),
            ),
        ];
        for (ok, what) in checks {
            let _ = writeln!(report, "  {} {what}", if ok { "PASS" } else { "FAIL" });
            if !ok {
                failures.push(format!("{full_tag}: {what}"));
            }
        }
    }
    if let Some(line) = ordering_line(&summary) {
        let _ = writeln!(report, "{line}");
    }
    let verdict = match (failures.is_empty(), cfg.enforce) {
        (true, _) => "all thresholds met".to_string(),
        (false, true) => format!("{} threshold(s) missed", failures.len()),
        (false, false) => format!("{} threshold(s) missed (not enforced)", failures.len()),
    };
    let _ = writeln!(report, "{verdict}");
    print!("{report}");

    out.write("compare_summary.csv", |w| summary.write(w))?;
    out.write("compare_summary.txt", |w| w.write_all(report.as_bytes()))?;
    if gnuplot {
        let script = gnuplot_script(&aligned_files);
        out.write("compare.gp", |w| w.write_all(script.as_bytes()))?;
    }
    if cfg.enforce && !failures.is_empty() {
        return Err(CliError::Threshold(failures.join("; ")));
    }
    Ok(())
}

/// Attack-rate ordering over the families present, largest first, for the
/// simulation and the pairwise model.
fn ordering_line(summary: &Table) -> Option<String> {
    if summary.rows.len() < 2 {
        return None;
    }
    let order = |col: &str| -> String {
        let mut rows: Vec<(String, f64)> = (0..summary.rows.len())
            .map(|r| {
                (
                    summary.get(r, "tag").unwrap_or_default().to_string(),
                    summary.get_f64(r, col).unwrap_or(f64::NAN),
                )
            })
            .collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1));
        rows.into_iter()
            .map(|(t, v)| format!("{t} ({v:.6})"))
            .collect::<Vec<_>>()
            .join(" > ")
    };
    Some(format!(
        "attack-rate ordering:\n  simulation {}\n  pairwise   {}\n  mean-field {}",
        order("attack_sim"),
        order("attack_pw"),
        order("attack_mf")
    ))
}

fn gnuplot_script(files: &[(String, PathBuf)]) -> String {
    let mut s = String::from(
        "# Run from the output directory.\nset datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set xlabel 't'\nset ylabel 'prevalence [I]'\n",
    );
    let plots: Vec<String> = files
        .iter()
        .enumerate()
        .flat_map(|(k, (tag, path))| {
            let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            let lt = k + 1;
            [
                format!("'{file}' using 1:2 with points pt {lt} lc {lt} title '{tag} simulation'"),
                format!("'{file}' using 1:4 with lines dt 1 lc {lt} title '{tag} pairwise'"),
                format!("'{file}' using 1:5 with lines dt 2 lc {lt} title '{tag} mean-field'"),
            ]
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

fn graph_gen(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let g = Graph::random_regular(cfg.nodes, cfg.degree, cfg.graph_seed)?;
    out.write("graph.txt", |w| w.write_all(g.to_edge_list().as_bytes()))?;
    Ok(())
}
