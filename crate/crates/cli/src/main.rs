//! Command-line driver: single trials, benchmark matrices, and a
//! bound-vs-Monte-Carlo comparison table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use probcol::collision::{collision_probability_bound, collision_probability_mc};
use probcol::gaussian::{Gaussian3, SpdMatrix3, Vec3};
use probcol::simulator::{parse_method, run_benchmark, run_trial, trial_steps_csv, BenchConfig};
use probcol::{GaussianSphere, RigidSphere, Scenario};

#[derive(Parser)]
#[command(
    name = "probcol",
    about = "Probabilistic collision detection and chance-constrained planning harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop trial of a scenario and write per-step CSV.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Collision method: bound | center | enlarged.
        #[arg(long)]
        method: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark matrix (scenarios x methods x seeds) and write CSVs.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare the probability bound against Monte-Carlo on random pairs.
    Oracle {
        #[arg(long)]
        pairs: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> probcol::Result<()> {
    match command {
        Command::Run {
            scenario,
            method,
            seed,
            out,
        } => {
            let scenario = Scenario::from_file(&scenario)?;
            let delta_cl = scenario.planner.delta_cl.unwrap_or(0.99);
            let method = parse_method(&method, delta_cl)?;
            let report = run_trial(&scenario, method, seed)?;
            std::fs::write(&out, trial_steps_csv(&report))?;
            println!(
                "scenario={} method={} seed={} collisions={} duration={:.3}s \
                 path_length={:.3}m goal_reached={} extensions={} infeasible_steps={}",
                report.scenario,
                report.method,
                report.seed,
                report.collisions,
                report.duration,
                report.path_length,
                report.goal_reached,
                report.extensions,
                report.infeasible_steps
            );
            if report.infeasible_steps > 0 && !report.goal_reached {
                return Err(probcol::Error::Config(
                    "trial ended infeasible without reaching the goal".into(),
                ));
            }
            Ok(())
        }
        Command::Bench { config, out_dir } => {
            let text = std::fs::read_to_string(&config)?;
            let bench: BenchConfig = toml::from_str(&text)
                .map_err(|e| probcol::Error::Config(format!("bench config parse: {e}")))?;
            let base = config
                .parent()
                .map(|p| p.to_path_buf())
                .unwrap_or_else(|| PathBuf::from("."));
            let outcome = run_benchmark(&bench, &base)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("trials.csv"), &outcome.trials_csv)?;
            std::fs::write(out_dir.join("summary.csv"), &outcome.summary_csv)?;
            println!("scenario,method,trials,mean_collisions,mean_duration,mean_path_length");
            for row in &outcome.rows {
                println!(
                    "{},{},{},{:.3},{:.3},{:.3}",
                    row.scenario,
                    row.method,
                    row.trials,
                    row.mean_collisions,
                    row.mean_duration,
                    row.mean_path_length
                );
            }
            Ok(())
        }
        Command::Oracle { pairs, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            println!("pair,bound,mc_estimate,mc_std_error,bound_holds");
            let mut failures = 0usize;
            for i in 0..pairs {
                let (robot, obs) = random_pair(&mut rng);
                let bound = collision_probability_bound(&robot, &obs)?.probability;
                let (mc, se) = collision_probability_mc(&robot, &obs, 100_000, seed ^ i as u64)?;
                let holds = bound >= mc - 3.0 * se;
                if !holds {
                    failures += 1;
                }
                println!("{i},{bound:.9},{mc:.9},{se:.9},{}", holds as u8);
            }
            if failures > 0 {
                return Err(probcol::Error::Config(format!(
                    "bound violated on {failures}/{pairs} pairs"
                )));
            }
            Ok(())
        }
    }
}

/// Random sphere pair spanning desk-scale radii, covariances, and offsets.
fn random_pair(rng: &mut ChaCha8Rng) -> (RigidSphere, GaussianSphere) {
    let robot = RigidSphere::new(
        Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        rng.random_range(0.05..0.5),
    )
    .expect("valid radius");
    let dir = loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0f64..1.0));
        if v.norm() > 1e-3 {
            break v / v.norm();
        }
    };
    let mean = robot.center + dir * rng.random_range(0.0..3.0);
    let cov = SpdMatrix3::from_diagonal(Vec3::from_fn(|_, _| rng.random_range(1e-4..1.0)))
        .expect("valid covariance");
    let gaussian = Gaussian3::new(mean, cov).expect("valid gaussian");
    let obs = GaussianSphere::new(gaussian, rng.random_range(0.05..0.5)).expect("valid radius");
    (robot, obs)
}
