//! The three benchmark workflows.

use std::fs;

use serde::Serialize;

use pathsens::analysis::{level_set, phase_diagram};
use pathsens::exact::{exact_rer_ctmc, schlogl_law};
use pathsens::models::{Zgb, ZgbLattice};
use pathsens::simulate::{run_ssa, uniform_initial_state, Horizon, SsaConfig};
use pathsens::RngStream;

use crate::config::{ModelSpec, Resolved};
use crate::error::CliError;
use crate::run::{create_out_dir, emit, jump_replicas, langevin_replicas, merge, ssa_config, write_csv, Merged};

pub fn schlogl(r: &Resolved) -> Result<Merged, CliError> {
    let ModelSpec::Schlogl(model) = &r.model else {
        unreachable!("resolved for another model")
    };
    let s = &r.config.schlogl;
    let x0 = s.x0.unwrap_or(100);
    let ssa = ssa_config(r, Horizon::Transitions(r.horizon() as u64));
    let results = jump_replicas(model, r, &ssa, |_| x0)?;
    let mut merged = merge(r, "schlogl", results)?;
    let law = schlogl_law(model, &r.theta, s.x_max.unwrap_or(200))?;
    for (d, eps) in merged.report.directions.iter_mut().zip(&r.directions) {
        let p: Vec<f64> = r.theta.iter().zip(eps.values()).map(|(t, e)| t + e).collect();
        d.exact = Some(exact_rer_ctmc(model, &law, &r.theta, &p)?);
    }
    emit(r, &merged)?;
    Ok(merged)
}

#[derive(Serialize)]
struct LevelRow {
    i: String,
    j: String,
    level: f64,
    x: f64,
    y: f64,
}

pub fn langevin(r: &Resolved) -> Result<Merged, CliError> {
    let ModelSpec::Langevin(model) = &r.model else {
        unreachable!("resolved for another model")
    };
    let l = &r.config.langevin;
    let (box_length, max_momentum) = (l.box_length.unwrap_or(3.0), l.max_momentum.unwrap_or(0.1));
    let results = langevin_replicas(model, r, |rng| uniform_initial_state(model, box_length, max_momentum, rng))?;
    let merged = merge(r, "langevin", results)?;
    emit(r, &merged)?;

    let level = l.level.unwrap_or(0.0);
    if let (Some(fim), true) = (&merged.fim, level > 0.0) {
        let mut rows = Vec::new();
        let k = r.names.len();
        for i in 0..k {
            for j in i + 1..k {
                // A plane whose sub-block is singular has no closed contour.
                let Ok(points) = level_set(fim, i, j, level, l.level_points.unwrap_or(64)) else {
                    continue;
                };
                rows.extend(points.into_iter().map(|[x, y]| LevelRow {
                    i: r.names[i].clone(),
                    j: r.names[j].clone(),
                    level,
                    x,
                    y,
                }));
            }
        }
        write_csv(&r.out.join("level_sets.csv"), &rows)?;
    }
    Ok(merged)
}

pub fn zgb(r: &Resolved) -> Result<Merged, CliError> {
    let ModelSpec::Zgb(model) = &r.model else {
        unreachable!("resolved for another model")
    };
    let side = model.side;
    let ssa = ssa_config(r, Horizon::Time(r.horizon()));
    let results = jump_replicas(model, r, &ssa, |_| ZgbLattice::empty(side).expect("side validated"))?;
    let merged = merge(r, "zgb", results)?;
    emit(r, &merged)?;

    let z = &r.config.zgb;
    if z.snapshots.unwrap_or(false) {
        snapshots(model, r, &ssa)?;
    }
    if !z.phase_k1.is_empty() {
        let grid: Vec<Vec<f64>> = z
            .phase_k1
            .iter()
            .flat_map(|&k1| z.phase_k2.iter().map(move |&k2| vec![k1, k2]))
            .collect();
        let pool = crate::run::thread_pool(&r.config)?;
        let diagram = pool.install(|| {
            phase_diagram(
                model,
                &grid,
                |_| ZgbLattice::empty(side).expect("side validated"),
                &ssa,
                r.seed(),
                &r.estimator_options(),
            )
        });
        create_out_dir(&r.out)?;
        diagram.write_csv(fs::File::create(r.out.join("phase_diagram.csv"))?)?;
        let invalid = diagram.points.iter().filter(|p| !p.valid).count();
        if invalid > 0 {
            println!("  phase diagram: {invalid} of {} grid points invalid", grid.len());
        }
    }
    Ok(merged)
}

/// Final lattices under θ and under θ+ε₀e_k for each k, all driven by the
/// same random stream.
fn snapshots(model: &Zgb, r: &Resolved, ssa: &SsaConfig) -> Result<(), CliError> {
    let eps0 = r.config.directions.epsilon0.unwrap_or(0.02);
    let mut cases = vec![("unperturbed".to_string(), r.theta.clone())];
    for (k, name) in r.names.iter().enumerate() {
        let mut p = r.theta.clone();
        p[k] += eps0;
        pathsens::models::JumpModel::check_params(model, &p)
            .map_err(|e| CliError::Config(format!("snapshot for {name}: {e}")))?;
        cases.push((name.clone(), p));
    }
    create_out_dir(&r.out)?;
    for (name, theta) in cases {
        let mut rng = RngStream::new(r.seed(), 0);
        let lattice = ZgbLattice::empty(model.side)?;
        let run = run_ssa(model, &theta, lattice, ssa, &mut rng, &mut [])?;
        fs::write(r.out.join(format!("snapshot_{name}.txt")), run.final_state.to_text())?;
    }
    Ok(())
}
