use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use explicit_dpc::condense::{
    build_dpc_raw, condense_mpc, rank_report, reduce_to_beta, ParametricQP, ReductionMaps,
};
use explicit_dpc::datamat::{is_persistently_exciting, min_data_length, partition, HankelPartition};
use explicit_dpc::mpqp::{explicit_solve_with, ExplicitOptions, ExplicitSolution, Polyhedron};
use explicit_dpc::par::Execution;
use explicit_dpc::presets::{self, Scenario};
use explicit_dpc::sysmodel::SystemModel;
use explicit_dpc::verify::{self, Controller, PastWindow, SamplerSpec};
use nalgebra::DVector;
use serde::Serialize;

use crate::export::{self, LawKind, RecoveryJson, SolutionFile};
use crate::problem::{self, rows_of, DomainTarget, Overrides, Resolved, Rows};
use crate::{Cli, Command, ControllerKind, Failure, GlobalOpts};

type Outcome<T = ()> = Result<T, Failure>;

const COUPLING_TOL: f64 = 1e-6;
const COUPLING_WINDOWS: usize = 50;

fn validation(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn io(e: anyhow::Error) -> Failure {
    Failure::Validation(e)
}

fn exec(g: &GlobalOpts) -> Execution {
    if g.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn options(g: &GlobalOpts, tol_opt: Option<f64>) -> ExplicitOptions {
    let mut o = ExplicitOptions { exec: exec(g), ..ExplicitOptions::default() };
    if let Some(t) = tol_opt {
        o.qp_tol = t;
    }
    o
}

fn overrides(g: &GlobalOpts) -> Outcome<Overrides> {
    let v_p = match &g.vp_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(io)?;
            let rows: Rows =
                serde_json::from_str(&text).map_err(|e| validation(anyhow!("{}: {e}", path.display())))?;
            Some(rows)
        }
        None => None,
    };
    Ok(Overrides {
        tol_rank: g.tol_rank,
        tol_opt: g.tol_opt,
        seed: g.seed,
        domain: g.domain.clone(),
        phi: g.phi,
        v_p,
    })
}

fn load(path: &Path, g: &GlobalOpts, target: DomainTarget) -> Outcome<Resolved> {
    let file = problem::load(path)?;
    problem::resolve(&file, &overrides(g)?, target)
}

/// Data-side objects of a resolved problem.
struct DataSide {
    part: HankelPartition,
    maps: ReductionMaps,
    beta: ParametricQP,
}

fn data_side(r: &Resolved) -> Outcome<DataSide> {
    let part = partition(&r.data, r.horizons)?;
    let raw = build_dpc_raw(&part, &r.weights, &r.constraints)?;
    let maps = ReductionMaps::new(&part, &r.reduction)?;
    let beta = reduce_to_beta(&raw, &maps)?;
    Ok(DataSide { part, maps, beta })
}

fn recovery(d: &DataSide) -> RecoveryJson {
    RecoveryJson {
        uf_offset: rows_of(&(&d.part.u_f * &d.maps.w_p_pinv)),
        uf_gain: rows_of(&d.maps.uf_vp_kf()),
    }
}

fn mpc_qp(r: &Resolved) -> Outcome<ParametricQP> {
    Ok(condense_mpc(r.model()?, &r.weights, &r.constraints, r.horizons.n_f)?)
}

fn emit(kind: LawKind, sol: &ExplicitSolution, rec: Option<RecoveryJson>, out: Option<&Path>, csv: Option<&Path>) -> Outcome {
    println!("regions: {}", sol.len());
    let s = &sol.stats;
    println!(
        "facets crossed: {}, unresolved crossings: {}, regions on the domain boundary: {}",
        s.facets_crossed, s.unresolved_crossings, s.domain_clipped
    );
    if let Some(path) = out {
        SolutionFile::new(kind, sol, rec).write_json(path).map_err(io)?;
    }
    if let Some(path) = csv {
        export::write_csv_file(sol, path).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Equivalence {
    max_uf_deviation: f64,
    samples: usize,
    skipped: usize,
}

#[derive(Debug, Serialize)]
struct Coupling {
    windows: usize,
    nondegenerate: usize,
    max_uf_residual: f64,
    max_lambda_residual: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    name: String,
    regions_mpc: usize,
    regions_dpc: usize,
    equivalence: Equivalence,
    coupling: Coupling,
}

impl Summary {
    fn print(&self) {
        println!("{}", self.name);
        println!("  regions (model-based): {}", self.regions_mpc);
        println!("  regions (data-driven): {}", self.regions_dpc);
        let e = &self.equivalence;
        println!(
            "  sampled law gap: {:.3e} over {} samples ({} outside a partition)",
            e.max_uf_deviation, e.samples, e.skipped
        );
        let c = &self.coupling;
        println!(
            "  coupling: {} windows, {} nondegenerate, input residual {:.3e}, multiplier residual {:.3e}: {}",
            c.windows,
            c.nondegenerate,
            c.max_uf_residual,
            c.max_lambda_residual,
            if c.passed { "ok" } else { "MISMATCH" }
        );
    }

    fn write(&self, path: &Path) -> Outcome {
        let text = serde_json::to_string_pretty(self).map_err(validation)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(io)
    }
}

struct Pieces<'a> {
    name: &'a str,
    model: &'a SystemModel,
    mpc: &'a ParametricQP,
    data: &'a DataSide,
    mpc_domain: Option<&'a Polyhedron>,
    dpc_domain: &'a Polyhedron,
}

fn summarize(p: &Pieces<'_>, g: &GlobalOpts, opts: &ExplicitOptions, samples: usize) -> Outcome<Summary> {
    let (part, maps) = (&p.data.part, &p.data.maps);
    let covering;
    let mpc_domain = match p.mpc_domain {
        Some(d) => d,
        None => {
            covering = verify::covering_state_domain(p.model, part, maps, p.dpc_domain)?;
            &covering
        }
    };
    let mpc_sol = explicit_solve_with(p.mpc, mpc_domain, opts)?;
    let dpc_sol = explicit_solve_with(&p.data.beta, p.dpc_domain, opts)?;
    let seed = g.seed.unwrap_or(0);
    let spec = SamplerSpec { exec: opts.exec, ..SamplerSpec::new(samples, seed) };
    let eq = verify::sampled_equivalence(&mpc_sol, &dpc_sol, maps, part, p.model, &spec)?;

    let windows = verify::sample_uniform(p.dpc_domain, COUPLING_WINDOWS, seed.wrapping_add(1))?;
    let mut coupling = Coupling {
        windows: 0,
        nondegenerate: 0,
        max_uf_residual: 0.0,
        max_lambda_residual: 0.0,
        passed: true,
    };
    for xi in windows {
        let rep = verify::check_kkt_coupling(p.mpc, &p.data.beta, maps, part, p.model, &PastWindow::from_vector(xi), COUPLING_TOL)?;
        if !rep.mpc_status.eq(&rep.beta_status) {
            coupling.passed = false;
        }
        if !rep.uf_residual.is_finite() {
            continue;
        }
        coupling.windows += 1;
        coupling.max_uf_residual = coupling.max_uf_residual.max(rep.uf_residual);
        if rep.nondegenerate {
            coupling.nondegenerate += 1;
            coupling.max_lambda_residual = coupling.max_lambda_residual.max(rep.lambda_residual);
        }
        coupling.passed &= rep.passed;
    }
    Ok(Summary {
        name: p.name.to_string(),
        regions_mpc: mpc_sol.len(),
        regions_dpc: dpc_sol.len(),
        equivalence: Equivalence { max_uf_deviation: eq.max_uf_deviation, samples: eq.samples, skipped: eq.skipped },
        coupling,
    })
}

fn run_scenario(sc: &Scenario, g: &GlobalOpts, json: Option<&Path>) -> Outcome {
    let b = sc.build()?;
    let data = DataSide { part: b.partition, maps: b.maps, beta: b.beta };
    let pieces = Pieces {
        name: &sc.name,
        model: &sc.model,
        mpc: &b.mpc,
        data: &data,
        mpc_domain: Some(&sc.mpc_domain),
        dpc_domain: &sc.dpc_domain,
    };
    let summary = summarize(&pieces, g, &options(g, g.tol_opt), 1000)?;
    summary.print();
    if let Some(path) = json {
        summary.write(path)?;
    }
    Ok(())
}

fn check_data(r: &Resolved) -> Outcome {
    let h = r.horizons;
    let (m, n_d) = (r.data.m(), r.data.len());
    let need = min_data_length(m, h.n_p, h.n_f, h.n);
    let order = h.excitation_order();
    let pe = is_persistently_exciting(r.data.u(), m, order, r.reduction.tol_rank);
    println!("samples: {n_d} (at least {need} needed)");
    println!("persistently exciting of order {order}: {}", if pe { "yes" } else { "no" });
    let part = partition(&r.data, h)?;
    let maps = ReductionMaps::new(&part, &r.reduction).map_err(|e| validation(anyhow!(e)))?;
    let rep = rank_report(&part, &maps, m, h.n, h.n_p, h.n_f);
    let flag = |ok: bool| if ok { "ok" } else { "FAIL" };
    println!("columns: {}", rep.l);
    println!("rank W_p: {} (expected {}): {}", rep.rank_wp, m * h.n_p + h.n, flag(rep.wp_rank_ok));
    println!("kernel dimension: {} (at least {}): {}", rep.nu, m * (h.n_f + h.n), flag(rep.nu_ok));
    println!("rank U_f V_p: {} (expected {}): {}", rep.rank_ufvp, m * h.n_f, flag(rep.ufvp_rank_ok));
    if pe && rep.all_ok() {
        Ok(())
    } else {
        Err(validation(anyhow!("data do not support the requested horizons")))
    }
}

fn simulate(r: &Resolved, g: &GlobalOpts, kind: ControllerKind, x0: &[f64], steps: usize, out: Option<&Path>) -> Outcome {
    let model = r.model()?;
    let x0 = DVector::from_column_slice(x0);
    let opts = options(g, r.tol_opt);
    let mpc = mpc_qp(r)?;
    let traj = match kind {
        ControllerKind::Numeric => verify::closed_loop(model, Controller::NumericMpc(&mpc), &x0, steps)?,
        ControllerKind::Mpc => {
            let sol = explicit_solve_with(&mpc, r.mpc_domain()?, &opts)?;
            verify::closed_loop(model, Controller::ExplicitMpc(&sol), &x0, steps)?
        }
        ControllerKind::Dpc => {
            let d = data_side(r)?;
            let sol = explicit_solve_with(&d.beta, &r.dpc_domain, &opts)?;
            let c = Controller::ExplicitDpc { solution: &sol, maps: &d.maps, part: &d.part };
            verify::closed_loop(model, c, &x0, steps)?
        }
    };
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display())).map_err(io)?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let (n, m, p) = (model.n(), model.m(), model.p());
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..p).map(|i| format!("y{i}")));
    w.write_record(&header).map_err(validation)?;
    for k in 0..=steps {
        let mut row = vec![k.to_string()];
        row.extend(traj.states[k].iter().map(f64::to_string));
        match (traj.inputs.get(k), traj.outputs.get(k)) {
            (Some(u), Some(y)) => {
                row.extend(u.iter().map(f64::to_string));
                row.extend(y.iter().map(f64::to_string));
            }
            _ => row.extend(std::iter::repeat_n(String::new(), m + p)),
        }
        w.write_record(&row).map_err(validation)?;
    }
    w.flush().map_err(validation)?;
    if !verify::satisfies_constraints(&traj, &r.constraints, 1e-8) {
        eprintln!("warning: trajectory violates the constraints");
    }
    Ok(())
}

fn evaluate(path: &Path, theta: &[f64]) -> Outcome {
    let file = SolutionFile::read_json(path).map_err(io)?;
    let sol = file.to_solution().map_err(io)?;
    if theta.len() != sol.d_theta {
        return Err(validation(anyhow!("parameter has length {}, expected {}", theta.len(), sol.d_theta)));
    }
    let theta = DVector::from_column_slice(theta);
    let Some(ev) = sol.evaluate(&theta) else {
        return Err(validation(anyhow!("parameter lies outside every region")));
    };
    let join = |v: &DVector<f64>| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    println!("region: {}", ev.region_id);
    println!("z: {}", join(&ev.z));
    match file.kind {
        LawKind::Mpc => println!("u: {}", join(&ev.z)),
        LawKind::Dpc => {
            if let Some(uf) = file.recover(&theta, &ev.z).map_err(io)? {
                println!("u: {}", join(&uf));
            }
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::CheckData { problem } => check_data(&load(problem, g, DomainTarget::Window)?),
        Command::MpcExplicit { problem, out, csv } => {
            let r = load(problem, g, DomainTarget::State)?;
            let sol = explicit_solve_with(&mpc_qp(&r)?, r.mpc_domain()?, &options(g, r.tol_opt))?;
            emit(LawKind::Mpc, &sol, None, out.as_deref(), csv.as_deref())
        }
        Command::DpcExplicit { problem, out, csv } => {
            let r = load(problem, g, DomainTarget::Window)?;
            let d = data_side(&r)?;
            let sol = explicit_solve_with(&d.beta, &r.dpc_domain, &options(g, r.tol_opt))?;
            emit(LawKind::Dpc, &sol, Some(recovery(&d)), out.as_deref(), csv.as_deref())
        }
        Command::Compare { problem, samples, json } => {
            let r = load(problem, g, DomainTarget::Window)?;
            let mpc = mpc_qp(&r)?;
            let data = data_side(&r)?;
            let name = problem.file_stem().map_or("problem".into(), |s| s.to_string_lossy().into_owned());
            let pieces = Pieces {
                name: &name,
                model: r.model()?,
                mpc: &mpc,
                data: &data,
                mpc_domain: r.mpc_domain.as_ref(),
                dpc_domain: &r.dpc_domain,
            };
            let summary = summarize(&pieces, g, &options(g, r.tol_opt), *samples)?;
            summary.print();
            if let Some(path) = json {
                summary.write(path)?;
            }
            if summary.coupling.passed {
                Ok(())
            } else {
                Err(Failure::Numerical(anyhow!("optimality conditions of the two problems disagree")))
            }
        }
        Command::Simulate { problem, controller, x0, steps, out } => {
            let r = load(problem, g, DomainTarget::State)?;
            simulate(&r, g, *controller, x0, *steps, out.as_deref())
        }
        Command::Evaluate { solution, theta } => evaluate(solution, theta),
        Command::Example1 { json } => run_scenario(&presets::example1(), g, json.as_deref()),
        Command::Example2 { json } => {
            let sc = presets::example2(g.seed.unwrap_or(presets::EXAMPLE2_SEED))?;
            run_scenario(&sc, g, json.as_deref())
        }
    }
}
