use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use qrdesign::analytic::quadratic::{DensityFamilyParams, QuadraticOptions};
use qrdesign::analytic::straight_line::StraightLineOptions;
use qrdesign::design::implement_indices;
use qrdesign::loss::default_r_grid;
use qrdesign::sim::{mse_vs_nu_curve, write_curve_csv, CurvePoint};
use qrdesign::{
    exchange_compound, ga_minimax, loss_fixed_sigma, minbias_design, run_scenario, saturated_design,
    solve_quadratic_continuous, solve_straight_line_discrete, uniform_design, worst_r_loss, Basis,
    DesignMeasure, DesignSpace, LossConfig, LossReport, NamedDesign, VarianceFunction,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, Task};
use crate::CliError;

/// What the summary line reports.
pub struct Outcome {
    pub total: f64,
    pub extra: Vec<(&'static str, String)>,
}

impl Outcome {
    fn total(total: f64) -> Self {
        Self { total, extra: Vec::new() }
    }
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config {
            field: "output".into(),
            reason: format!("cannot create {}: {e}", dir.display()),
        })?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
    }

    /// `design.csv` (with optional `#` header lines) and `design.json`.
    fn design(&self, d: &DesignMeasure, header: &[String]) -> Result<(), CliError> {
        let mut w = self.file("design.csv")?;
        for line in header {
            writeln!(w, "# {line}").map_err(|e| CliError::Io(e.to_string()))?;
        }
        d.write_csv(&mut w)?;
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        let mut j = self.file("design.json")?;
        writeln!(j, "{}", d.to_json()?).and_then(|_| j.flush()).map_err(|e| CliError::Io(e.to_string()))
    }

    fn points(&self, name: &str, xs: &[f64]) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        let mut body = String::from("x\n");
        for x in xs {
            body.push_str(&qrdesign::design::format_f64(*x));
            body.push('\n');
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
    }

    fn curve(&self, name: &str, label: &str, d: &DesignMeasure, ctx: &Ctx) -> Result<(), CliError> {
        let pts: Vec<CurvePoint> = mse_vs_nu_curve(d, &ctx.basis, &ctx.sigma, &ctx.cfg.nu_grid)?
            .into_iter()
            .map(|(nu, rep)| CurvePoint { nu, design: label.to_string(), loss: rep.total })
            .collect();
        let mut w = self.file(name)?;
        write_curve_csv(&pts, &mut w)?;
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }

    /// `loss.json`: the fixed-sigma report and, for comparison, the worst
    /// exponent of the design-coupled class.
    fn loss(&self, d: &DesignMeasure, fixed: &LossReport, ctx: &Ctx) -> Result<(), CliError> {
        let (r, worst) = worst_r_loss(d, &ctx.basis, &LossConfig::new(fixed.nu)?, &default_r_grid())?;
        self.json(
            "loss.json",
            &json!({
                "basis": ctx.basis.describe(),
                "sigma": ctx.sigma.shape().name(),
                "nu": fixed.nu,
                "fixed_sigma": fixed,
                "design_coupled_worst": { "r": r, "total": worst.total,
                    "variance_term": worst.variance_term, "bias_term": worst.bias_term },
            }),
        )
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    basis: Basis,
    sigma: VarianceFunction,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    // Everything that depends only on the configuration is built first, so
    // that bad input is reported as a configuration error.
    let (space, design_in) = match (&cfg.task, &cfg.design) {
        (Task::Loss, Some(file)) => {
            let f = File::open(&file.csv).map_err(|e| CliError::Config {
                field: "design.csv".into(),
                reason: format!("{}: {e}", file.csv.display()),
            })?;
            let d = DesignMeasure::read_csv(f, file.continuous)
                .map_err(|e| CliError::Config { field: "design.csv".into(), reason: e.to_string() })?;
            (d.space().clone(), Some(d))
        }
        _ => (cfg.space()?, None),
    };
    let ctx = Ctx { cfg, basis: cfg.basis()?, sigma: cfg.sigma(&space)? };
    let out = Out::create(&cfg.output)?;
    let nu = cfg.nu_or_default();
    let loss_cfg = LossConfig::new(nu)?;

    match cfg.task {
        Task::Loss | Task::Uniform | Task::Minbias | Task::Saturated => {
            let (d, label) = match cfg.task {
                Task::Loss => (design_in.expect("read above"), "input"),
                Task::Uniform => (uniform_design(space)?, "uniform"),
                Task::Minbias => (minbias_design(space, &ctx.sigma)?, "minbias"),
                _ => (saturated_design(&cfg.spline()?, space)?, "saturated"),
            };
            let rep = loss_fixed_sigma(&d, &ctx.basis, &ctx.sigma, &loss_cfg)?;
            if cfg.task != Task::Loss {
                out.design(&d, &[])?;
            }
            out.loss(&d, &rep, &ctx)?;
            out.curve("curve.csv", label, &d, &ctx)?;
            Ok(Outcome::total(rep.total))
        }
        Task::Straightline => {
            if !matches!(ctx.basis, Basis::Polynomial { degree: 1 }) {
                return Err(CliError::Config { field: "basis".into(), reason: "straightline fits (1, x)".into() });
            }
            let opts = StraightLineOptions { seed: cfg.seed(), ..StraightLineOptions::default() };
            let sol = solve_straight_line_discrete(space, &ctx.sigma, &loss_cfg, &opts)?;
            let residuals = sol.multipliers.side_condition_residuals(&sol.design, &ctx.sigma);
            out.design(&sol.design, &[])?;
            out.json("solution.json", &json!({ "multipliers": sol.multipliers, "side_residuals": residuals }))?;
            out.loss(&sol.design, &sol.loss, &ctx)?;
            out.curve("curve.csv", "straightline", &sol.design, &ctx)?;
            let mut o = Outcome::total(sol.loss.total);
            o.extra.push(("branch", format!("{:?}", sol.multipliers.branch).to_lowercase()));
            Ok(o)
        }
        Task::Quadratic => {
            if !matches!(ctx.basis, Basis::Polynomial { degree: 2 }) && cfg.basis.is_some() {
                return Err(CliError::Config { field: "basis".into(), reason: "quadratic fits (1, x, x^2)".into() });
            }
            let ctx = Ctx { basis: Basis::polynomial(2), ..ctx };
            let opts = QuadraticOptions { seed: cfg.seed(), ..QuadraticOptions::default() };
            let sol = solve_quadratic_continuous(space, &ctx.sigma, &loss_cfg, &opts)?;
            let named: serde_json::Map<String, serde_json::Value> =
                DensityFamilyParams::NAMES.iter().zip(sol.params.a).map(|(k, v)| (k.to_string(), json!(v))).collect();
            out.design(&sol.design, &[])?;
            out.json(
                "params.json",
                &json!({ "branch": sol.branch, "normalization_mode": sol.params.normalization_mode, "a": named }),
            )?;
            out.loss(&sol.design, &sol.loss, &ctx)?;
            out.curve("curve.csv", "quadratic", &sol.design, &ctx)?;
            let mut o = Outcome::total(sol.loss.total);
            o.extra.push(("branch", sol.branch.to_string()));
            Ok(o)
        }
        Task::Compound => {
            let n = cfg.n.expect("validated");
            let c = exchange_compound(space.clone(), &ctx.basis, n, nu, cfg.symmetric)?;
            let d = DesignMeasure::from_indices(space.clone(), &c.support)?;
            let header = [format!("task=compound k_star={} n={n} nu={nu}", c.k_star)];
            out.design(&d, &header)?;
            out.points("points.csv", &c.points)?;
            let support: Vec<f64> = c.support.iter().map(|&i| space.points()[i]).collect();
            out.json(
                "compound.json",
                &json!({ "k_star": c.k_star, "n": n, "objective": c.objective, "support": support,
                    "history": c.history }),
            )?;
            out.loss(&d, &c.loss, &ctx)?;
            let mut o = Outcome::total(c.loss.total);
            o.extra.push(("k_star", c.k_star.to_string()));
            Ok(o)
        }
        Task::Ga => {
            let n = cfg.n.expect("validated");
            let seeds = seed_designs(&space, &ctx, n)?;
            let seeds: Vec<Vec<usize>> = seeds.into_iter().map(|(_, s)| s).collect();
            let seeds = &seeds[..seeds.len().min(cfg.ga.n_seeded)];
            let ga = ga_minimax(space.clone(), &ctx.basis, &ctx.sigma, nu, n, seeds, &cfg.ga)?;
            let pts: Vec<f64> = ga.indices.iter().map(|&i| space.points()[i]).collect();
            out.design(&ga.design, &[format!("task=ga n={n} nu={nu} generations={}", ga.generations)])?;
            out.points("points.csv", &pts)?;
            write_trace(&out, &ga.trace)?;
            out.loss(&ga.design, &ga.loss, &ctx)?;
            out.curve("curve.csv", "ga", &ga.design, &ctx)?;
            let mut o = Outcome::total(ga.loss.total);
            o.extra.push(("generations", ga.generations.to_string()));
            Ok(o)
        }
        Task::Scenario => scenario(cfg, &space, &ctx, &out),
    }
}

/// Seed designs for the genetic search, implemented with `n` points:
/// saturated (spline bases only), uniform and minimum bias.
fn seed_designs(space: &Arc<DesignSpace>, ctx: &Ctx, n: usize) -> Result<Vec<(&'static str, Vec<usize>)>, CliError> {
    let mut seeds = Vec::new();
    if let Basis::CubicBSpline(spline) = &ctx.basis {
        seeds.push(("saturated", implement_indices(&saturated_design(spline, space.clone())?, n)?));
    }
    seeds.push(("uniform", implement_indices(&uniform_design(space.clone())?, n)?));
    seeds.push(("minbias", implement_indices(&minbias_design(space.clone(), &ctx.sigma)?, n)?));
    Ok(seeds)
}

fn write_trace(out: &Out, trace: &[f64]) -> Result<(), CliError> {
    let mut body = String::from("generation,best_fitness\n");
    for (g, f) in trace.iter().enumerate() {
        body.push_str(&format!("{g},{}\n", qrdesign::design::format_f64(*f)));
    }
    let mut w = out.file("trace.csv")?;
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
}

/// Competing designs (saturated, uniform, minimum bias and a genetic minimax
/// design at `nu`) pushed through the Monte-Carlo comparison.
fn scenario(cfg: &RunConfig, space: &Arc<DesignSpace>, ctx: &Ctx, out: &Out) -> Result<Outcome, CliError> {
    if !space.is_discrete() {
        return Err(CliError::Config { field: "space".into(), reason: "the scenario needs a discrete space".into() });
    }
    let n = cfg.n.unwrap_or(200);
    let nu = cfg.nu_or_default();
    let mut named = seed_designs(space, ctx, n)?;
    let seeds: Vec<Vec<usize>> = named.iter().map(|(_, s)| s.clone()).collect();
    let ga = ga_minimax(space.clone(), &ctx.basis, &ctx.sigma, nu, n, &seeds, &cfg.ga)?;
    named.push(("minimax", ga.indices.clone()));
    write_trace(out, &ga.trace)?;
    out.design(&ga.design, &[format!("task=scenario design=minimax n={n} nu={nu}")])?;

    let designs: Vec<NamedDesign> = named
        .iter()
        .map(|(name, idx)| NamedDesign {
            name: name.to_string(),
            points: idx.iter().map(|&i| space.points()[i]).collect(),
        })
        .collect();
    for d in &designs {
        out.points(&format!("points_{}.csv", d.name), &d.points)?;
    }
    let res = run_scenario(&cfg.scenario, space, &designs)?;
    let mut w = out.file("table.csv")?;
    res.write_table_csv(&mut w)?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = out.file("curves.csv")?;
    res.write_curves_csv(&mut w)?;
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let failures: usize = res.table.iter().map(|r| r.failures).sum();
    let mut o = Outcome::total(ga.loss.total);
    o.extra.push(("failures", failures.to_string()));
    Ok(o)
}
