use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kgmasd::control::{analyze, simulate, TopologySpec};
use kgmasd::fsutil;
use kgmasd::infotheory::{gamma_report, DiscreteJoint, GarblingKernel};
use kgmasd::sgdlab::{error_floor, run_sgd, theorem2_bound, NoiseModel, QuadraticProblem, SgdConfig};
use serde::Deserialize;

use crate::commands::{reading, Global};
use crate::{ControlArgs, GammaArgs, SgdArgs};

#[derive(Deserialize)]
#[serde(untagged)]
enum JointFile {
    Wrapped { p: Vec<Vec<f64>> },
    Bare(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KernelFile {
    Wrapped { k: Vec<Vec<f64>> },
    Bare(Vec<Vec<f64>>),
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn gamma(args: GammaArgs) -> Result<()> {
    let table = match fsutil::read_json::<JointFile>(&args.joint).with_context(|| reading(&args.joint))? {
        JointFile::Wrapped { p } | JointFile::Bare(p) => p,
    };
    let joint = DiscreteJoint::new(table).context("invalid joint")?;
    let kernel = match &args.kernel {
        Some(path) => {
            let k = match fsutil::read_json::<KernelFile>(path).with_context(|| reading(path))? {
                KernelFile::Wrapped { k } | KernelFile::Bare(k) => k,
            };
            Some(GarblingKernel::new(k).context("invalid kernel")?)
        }
        None => None,
    };
    print_json(&gamma_report(&joint, kernel.as_ref())?)
}

pub fn sgd(global: &Global, args: SgdArgs) -> Result<()> {
    let seed = global.seed.unwrap_or(0);
    let problem = QuadraticProblem::with_spread(args.dim, args.mu, args.l_smooth, seed)?;
    let alpha = args.alpha.unwrap_or(1.0 / problem.l_smooth());
    let noise = NoiseModel::new(args.sigma0_sq, args.c, args.gamma)?;
    let trace = run_sgd(&problem, &noise, &SgdConfig::new(alpha, args.steps, args.seeds, seed))?;
    let gap = trace.mean_subopt[0];
    let bounds = (0..=args.steps)
        .map(|k| theorem2_bound(&problem, &noise, alpha, k, gap))
        .collect::<kgmasd::Result<Vec<_>>>()?;
    fsutil::write_atomic(&args.out, |w| {
        writeln!(w, "k,mean_subopt,stderr,bound")?;
        for (k, bound) in bounds.iter().enumerate() {
            writeln!(w, "{k},{},{},{bound}", trace.mean_subopt[k], trace.stderr[k])?;
        }
        Ok(())
    })?;
    let violations = bounds
        .iter()
        .enumerate()
        .filter(|&(k, b)| trace.mean_subopt[k] > b + 3.0 * trace.stderr[k])
        .count();
    print_json(&serde_json::json!({
        "alpha": alpha,
        "noise_variance": noise.variance(),
        "floor": error_floor(&problem, &noise, alpha),
        "tail": trace.tail,
        "steps_above_bound_plus_3se": violations,
    }))
}

fn topology(spec: &str) -> Result<TopologySpec> {
    if let Some(t) = TopologySpec::named(spec) {
        return Ok(t);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        bail!(
            "topology {spec:?} is neither a known name ({}) nor a JSON file",
            TopologySpec::NAMES.join(", ")
        );
    }
    fsutil::read_json(path).with_context(|| reading(path))
}

pub fn control(args: ControlArgs) -> Result<()> {
    let system = topology(&args.topology)?.build()?;
    let x0 = args.x0.unwrap_or_else(|| vec![1.0; system.n()]);
    let traj = simulate(&system, &x0, args.dt, args.steps)?;
    fsutil::write_atomic(&args.out, |w| {
        let header: Vec<String> = (1..=system.n()).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (t, x) in traj.t.iter().zip(&traj.x) {
            let row: Vec<String> = x.iter().map(f64::to_string).collect();
            writeln!(w, "{t},{}", row.join(","))?;
        }
        Ok(())
    })?;
    let final_norm = traj.x.last().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt());
    print_json(&serde_json::json!({
        "report": analyze(&system)?,
        "converged": traj.converged,
        "diverged_at": traj.diverged_at,
        "final_norm": final_norm,
    }))
}
