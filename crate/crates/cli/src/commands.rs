use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use inducement_core::data::ingest_csv;
use inducement_core::diagnostics::{diagnose_all, monitored_rows, write_acf_csv, write_summary_csv, write_trace_csv};
use inducement_core::evalue::{compare, observed_ratio_means, write_comparison_csv};
use inducement_core::projection::{project_density, write_results_csv, DensityPosterior};
use inducement_core::reduced_form::fit_reduced_form;
use inducement_core::rng::{chain_rng, derive_seed, stream};
use inducement_core::simulation::{
    compare_monotone, fit_mean_probabilities, recovery_experiment, score, write_reports_csv, Design, RecoveryReport,
};
use inducement_core::subgroup::{default_min_leaf, fit_cart, subgroup_difference, SubgroupResponse};
use inducement_core::{ReducedFormDraws, SensitivitySpec};

use crate::config::{RunConfig, Table};

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    Ok(cfg.output_dir.join(name))
}

fn load_artifact(path: &Path) -> Result<ReducedFormDraws> {
    ReducedFormDraws::read_artifact(path).with_context(|| format!("reading reduced-form artifact {}", path.display()))
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let Some(data_cfg) = &cfg.data else {
        bail!("`fit` needs a [data] section or --data");
    };
    let data = ingest_csv(&data_cfg.path, &data_cfg.schema)
        .with_context(|| format!("ingesting {}", data_cfg.path.display()))?;
    info!(
        "{} rows, {} covariates, {} treated, {} imputed values",
        data.len(),
        data.x.cols(),
        data.treated_count(),
        data.imputed
    );
    let draws = fit_reduced_form(&data, &cfg.bart, cfg.seed)?;
    let path = cfg.artifact.clone().unwrap_or(out_file(cfg, "reduced_form.bin")?);
    draws.write_artifact(&path)?;
    let (g, b1, b0) = draws.posterior_mean();
    let mut w = BufWriter::new(File::create(out_file(cfg, "reduced_form_means.csv")?)?);
    writeln!(w, "# reduced-form posterior means seed={}", cfg.seed)?;
    writeln!(w, "obs,p_g,p_b1,p_b0")?;
    for i in 0..g.len() {
        writeln!(w, "{i},{},{},{}", g[i], b1[i], b0[i])?;
    }
    w.flush()?;
    info!("wrote {} draws to {}", draws.n_draws(), path.display());
    Ok(())
}

fn project_all(cfg: &RunConfig, draws: &ReducedFormDraws, spec: &SensitivitySpec) -> Result<Vec<DensityPosterior>> {
    spec.validate()?;
    spec.densities
        .iter()
        .map(|d| {
            info!("projecting under {}", d.label());
            Ok(project_density(draws, d, spec, cfg.projection_mode(), cfg.seed)?)
        })
        .collect()
}

pub fn project(cfg: &RunConfig) -> Result<()> {
    let draws = load_artifact(&cfg.artifact_path())?;
    let results = project_all(cfg, &draws, &cfg.sensitivity)?;
    write_results_csv(out_file(cfg, "sensitivity.csv")?, &results, cfg.seed)?;
    for (k, r) in results.iter().enumerate() {
        let mut w = BufWriter::new(File::create(out_file(cfg, &format!("units_{}.csv", k + 1))?)?);
        writeln!(w, "# unit posterior means seed={} density={}", cfg.seed, r.label)?;
        writeln!(w, "obs,tau,delta,p_do0")?;
        for i in 0..r.unit_tau.len() {
            writeln!(w, "{i},{},{},{}", r.unit_tau[i], r.unit_delta[i], r.unit_p_do0[i])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn evalue(cfg: &RunConfig) -> Result<()> {
    let draws = load_artifact(&cfg.artifact_path())?;
    let rr = observed_ratio_means(&draws);
    for (k, r) in project_all(cfg, &draws, &cfg.sensitivity)?.iter().enumerate() {
        let rows = compare(&rr, &r.unit_tau)?;
        write_comparison_csv(out_file(cfg, &format!("evalue_{}.csv", k + 1))?, &rows, cfg.seed)?;
        info!("evalue_{}.csv: {}", k + 1, r.label);
    }
    Ok(())
}

fn replicate_seed(master: u64, r: usize) -> u64 {
    if r == 0 {
        master
    } else {
        derive_seed(master, 1000 + r as u64)
    }
}

pub fn simulate(cfg: &RunConfig, table: Table) -> Result<()> {
    let sim = &cfg.simulate;
    let spec = &cfg.sensitivity;
    spec.validate()?;
    let seeds: Vec<u64> = (0..sim.replicates).map(|r| replicate_seed(cfg.seed, r)).collect();
    match table {
        Table::Bivariate | Table::Nonlinear => {
            let design = match table {
                Table::Bivariate => Design::Bivariate(sim.bivariate.clone()),
                _ => Design::Nonlinear(sim.nonlinear.clone()),
            };
            let truth = design.correct_density()?;
            let reports = seeds
                .iter()
                .map(|&s| Ok(recovery_experiment(&design, &cfg.bart, &truth, spec, s)?))
                .collect::<Result<Vec<RecoveryReport>>>()?;
            let name = if table == Table::Bivariate { "recovery_bivariate.csv" } else { "recovery_nonlinear.csv" };
            write_reports_csv(out_file(cfg, name)?, &reports, cfg.seed)?;
        }
        Table::Misspecification => {
            let design = Design::Nonlinear(sim.nonlinear.clone());
            let mut reports = Vec::new();
            for &s in &seeds {
                let data = design.generate(&mut chain_rng(derive_seed(s, stream::SIMULATION)))?;
                let probs = fit_mean_probabilities(&data.data, &cfg.bart, s, true)?;
                for d in &spec.densities {
                    reports.push(score(&data, &probs, d, spec, s)?);
                }
            }
            write_reports_csv(out_file(cfg, "misspecification.csv")?, &reports, cfg.seed)?;
        }
        Table::Monotone => {
            let design = Design::Bivariate(sim.bivariate.clone());
            let truth = design.correct_density()?;
            let mut w = BufWriter::new(File::create(out_file(cfg, "monotone_comparison.csv")?)?);
            writeln!(w, "# monotone comparison seed={}", cfg.seed)?;
            writeln!(w, "model,seed,acrr_true,acrr_est,icrr_cor,icrr_rmse")?;
            for &s in &seeds {
                let c = compare_monotone(&design, &cfg.bart, &truth, spec, s)?;
                for (model, r) in [("monotone", &c.monotone), ("unconstrained", &c.unconstrained)] {
                    writeln!(w, "{model},{s},{},{},{},{}", r.acrr_true, r.acrr_est, r.icrr_cor, r.icrr_rmse)?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn subgroup(cfg: &RunConfig) -> Result<()> {
    let draws = load_artifact(&cfg.artifact_path())?;
    let data = &draws.metadata.data;
    let n = draws.n_obs();
    let spec = SensitivitySpec {
        keep_unit_draws: true,
        ..cfg.sensitivity.clone()
    };
    let min_leaf = cfg.subgroup.min_leaf.unwrap_or_else(|| default_min_leaf(n));
    for (k, r) in project_all(cfg, &draws, &spec)?.iter().enumerate() {
        let units = r.unit_draws.as_ref().expect("unit draws were requested");
        let (means, values) = match cfg.subgroup.response {
            SubgroupResponse::Tau => (&r.unit_tau, &units.tau),
            SubgroupResponse::Delta => (&r.unit_delta, &units.delta),
            SubgroupResponse::PDo0 => (&r.unit_p_do0, &units.p_do0),
        };
        let tree = fit_cart(&data.x, means, cfg.subgroup.max_depth, min_leaf)?;
        let tag = format!("subgroup_{}", k + 1);
        std::fs::write(
            out_file(cfg, &format!("{tag}_tree.txt"))?,
            format!("# density={} seed={}\n{}", r.label, cfg.seed, tree.to_text(&data.covariate_names)),
        )?;
        std::fs::write(
            out_file(cfg, &format!("{tag}_tree.json"))?,
            serde_json::to_string_pretty(&tree.export(&data.covariate_names))?,
        )?;
        let diff = subgroup_difference(&tree, values, n)?;
        let mut w = BufWriter::new(File::create(out_file(cfg, &format!("{tag}_difference.csv"))?)?);
        writeln!(w, "# subgroup difference seed={} density={}", cfg.seed, r.label)?;
        if diff.single_leaf {
            writeln!(w, "# single leaf: no subgroups")?;
            log::warn!("{}: tree has a single leaf", r.label);
        }
        writeln!(w, "draw,difference")?;
        for (d, v) in diff.draws.iter().enumerate() {
            let index = r.draw_indices.get(d).copied().unwrap_or(d);
            writeln!(w, "{index},{v}")?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn diagnose(cfg: &RunConfig, threads: usize) -> Result<()> {
    let draws = load_artifact(&cfg.artifact_path())?;
    let rows = monitored_rows(draws.n_obs(), cfg.diagnose.monitored);
    let mut chains = Vec::with_capacity(3 * rows.len());
    for (name, pick) in [
        ("p_g", ReducedFormDraws::p_g as fn(&ReducedFormDraws, usize) -> &[f64]),
        ("p_b1", ReducedFormDraws::p_b1),
        ("p_b0", ReducedFormDraws::p_b0),
    ] {
        for &i in &rows {
            let chain: Vec<f64> = (0..draws.n_draws()).map(|d| pick(&draws, d)[i]).collect();
            chains.push((format!("{name}[{i}]"), chain));
        }
    }
    let diags = diagnose_all(&chains, threads)?;
    write_summary_csv(out_file(cfg, "diagnostics.csv")?, &diags, cfg.seed)?;
    write_trace_csv(out_file(cfg, "traces.csv")?, &chains, cfg.seed)?;
    write_acf_csv(out_file(cfg, "acf.csv")?, &chains, cfg.diagnose.max_lag, cfg.seed)?;
    Ok(())
}
