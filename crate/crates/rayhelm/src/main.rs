//! File-based command line front end; all numerics live in the library.

use clap::{Parser, Subcommand};
use rayhelm::geom::{build_mesh, ray_field_from_json, ray_field_to_json};
use rayhelm::nmla::{filter_b, filter_order, fourier_coeffs, sample_count, sample_impedance};
use rayhelm::pipeline::{
    benchmark, emit_report, impedance_trace, probe_mesh, refine_mesh, run_pipeline, AngleSource,
    ExampleId, LowFreqSource, PipelineConfig, RefineRecipe,
};
use rayhelm::pwdg::{assemble, solve as pwdg_solve, uniform_fan_space, write_solution, DiscreteField};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "rayhelm", about = "Ray-adapted plane wave tools for 2-D Helmholtz problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole five-step pipeline from a TOML config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Probe a benchmark field: one point emits the filtered signal as
    /// CSV, a whole coarse mesh emits a ray-field JSON cache.
    Probe {
        #[arg(long, value_enum)]
        example: ExampleCli,
        /// Probe frequency omega~.
        #[arg(long)]
        omega_tilde: f64,
        /// Single probe location "x,y"; omit to probe the whole mesh.
        #[arg(long)]
        at: Option<String>,
        /// Output file (CSV for a point, JSON for a mesh).
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a probed ray-field JSON; writes the refined JSON plus an
    /// optional CSV of per-element fit diagnostics.
    Refine {
        #[arg(long, value_enum)]
        example: ExampleCli,
        #[arg(long)]
        omega_tilde: f64,
        /// Input ray-field JSON from `probe`.
        #[arg(long)]
        rays: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Diagnostics CSV path.
        #[arg(long)]
        diag: Option<PathBuf>,
    },
    /// Measure the global relative L2 projection error at one frequency
    /// and append a CSV row (omega, h, dofs, rel_l2_error) to a results
    /// file.
    Project {
        #[arg(long, value_enum)]
        example: ExampleCli,
        #[arg(long)]
        omega: f64,
        #[arg(long, value_enum, default_value = "post")]
        angles: AngleCli,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the homogeneous low-frequency problem with a uniform
    /// direction fan and write the binary coefficient file.
    Solve {
        #[arg(long, value_enum)]
        example: ExampleCli,
        #[arg(long)]
        omega_tilde: f64,
        /// Elements per axis; defaults to the omega~ h^2 ~ 1 rule.
        #[arg(long)]
        mesh_n: Option<usize>,
        /// Directions per element.
        #[arg(long, default_value_t = 9)]
        fan: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum ExampleCli {
    Example1,
    Example2,
    SyntheticPlaneWave,
}

impl From<ExampleCli> for ExampleId {
    fn from(e: ExampleCli) -> Self {
        match e {
            ExampleCli::Example1 => ExampleId::Example1,
            ExampleCli::Example2 => ExampleId::Example2,
            ExampleCli::SyntheticPlaneWave => ExampleId::SyntheticPlaneWave,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum AngleCli {
    Exact,
    Nmla,
    Post,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    match Cli::parse().command {
        Command::Pipeline { config } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg: PipelineConfig = toml::from_str(&text)?;
            let runs = run_pipeline(&cfg);
            let mut rows = Vec::new();
            for r in runs {
                match r {
                    Ok(run) => {
                        println!(
                            "omega {:>8}: angle err {:.3e}, L2 err {:.3e}, iters {}, {:.1}s",
                            run.row.omega,
                            run.row.max_angle_error,
                            run.row.rel_l2_error,
                            run.row.dls_max_iters,
                            run.row.wall_time
                        );
                        rows.push(run.row);
                    }
                    Err(msg) => eprintln!("failed: {msg}"),
                }
            }
            if !rows.is_empty() {
                let dir = PathBuf::from(&cfg.output_dir);
                emit_report(&cfg, &rows, &dir)?;
                println!("report written to {}", dir.display());
            }
        }
        Command::Probe { example, omega_tilde, at, out } => {
            let bench = benchmark(example.into(), omega_tilde);
            match at {
                Some(spec) => {
                    let (xs, ys) = spec.split_once(',').ok_or("expected --at x,y")?;
                    let r0 = [xs.trim().parse::<f64>()?, ys.trim().parse::<f64>()?];
                    let c0 = bench.ray_medium.c(r0);
                    let rho = omega_tilde.powf(-0.5);
                    let omega0 = omega_tilde * rho / c0;
                    let m = filter_order(omega0);
                    let s = sample_count(m);
                    let samples = sample_impedance(&bench.wave, r0, rho, c0, s)?;
                    let coeffs = fourier_coeffs(&samples, m)?;
                    let signal = filter_b(&coeffs, omega0, s)?;
                    let mut csv = String::from("theta,abs,re,im\n");
                    for (k, v) in signal.grid.iter().enumerate() {
                        let theta = std::f64::consts::TAU * k as f64 / s as f64;
                        csv.push_str(&format!("{theta},{},{},{}\n", v.norm(), v.re, v.im));
                    }
                    std::fs::write(&out, csv)?;
                    println!("filtered signal written to {}", out.display());
                }
                None => {
                    let mesh = build_mesh(bench.domain, omega_tilde.powf(-0.5))?;
                    let (rays, _) = probe_mesh(
                        &bench.wave,
                        &mesh,
                        &bench.ray_medium,
                        bench.eval_margin,
                        rayhelm::nmla::DEFAULT_REL_THRESHOLD,
                    )?;
                    std::fs::write(&out, ray_field_to_json(&rays)?)?;
                    println!(
                        "probed {} elements ({} rays max) -> {}",
                        mesh.n_elements(),
                        rays.max_ray_count(),
                        out.display()
                    );
                }
            }
        }
        Command::Refine { example, omega_tilde, rays, out, diag } => {
            let bench = benchmark(example.into(), omega_tilde);
            let field = ray_field_from_json(&std::fs::read_to_string(&rays)?)?;
            let recipe = RefineRecipe::for_example(example.into(), field.max_ray_count());
            let mesh = field.mesh.clone();
            let refined = refine_mesh(
                &bench.wave,
                &mesh,
                &field,
                &bench.ray_medium,
                bench.eval_margin,
                &recipe,
            )?;
            std::fs::write(&out, ray_field_to_json(&refined.rays)?)?;
            if let Some(diag_path) = diag {
                let mut csv = String::from("element_index,iters,j_final,angle_error\n");
                for e in 0..refined.rays.mesh.n_elements() {
                    let exact = (bench.exact_angles)(refined.probe_centers[e]);
                    let rec = &refined.rays.elements[e];
                    let err = if rec.ray_count() == exact.len() {
                        format!("{:e}", rayhelm::pipeline::match_error(&rec.angles, &exact))
                    } else {
                        String::new()
                    };
                    csv.push_str(&format!(
                        "{e},{},{:e},{err}\n",
                        refined.per_element_iters[e], refined.per_element_j[e]
                    ));
                }
                std::fs::write(&diag_path, csv)?;
            }
            println!("refined rays written to {}", out.display());
        }
        Command::Project { example, omega, angles, out } => {
            let cfg = PipelineConfig {
                example: example.into(),
                omegas: vec![omega],
                angle_source: match angles {
                    AngleCli::Exact => AngleSource::Exact,
                    AngleCli::Nmla => AngleSource::Nmla,
                    AngleCli::Post => AngleSource::Post,
                },
                low_freq_source: LowFreqSource::AnalyticOracle,
                fan_size: 9,
                output_dir: String::new(),
                omega_tilde_override: None,
                peak_threshold: rayhelm::nmla::DEFAULT_REL_THRESHOLD,
            };
            let run = rayhelm::pipeline::run_frequency(&cfg, omega)?;
            let line = format!("{},{},{},{:e}\n", omega, run.row.h, run.row.dofs, run.row.rel_l2_error);
            use std::io::Write;
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&out)?;
            f.write_all(line.as_bytes())?;
            println!(
                "omega {omega}: rel L2 error {:.3e} appended to {}",
                run.row.rel_l2_error,
                out.display()
            );
        }
        Command::Solve { example, omega_tilde, mesh_n, fan, out } => {
            let bench = benchmark(example.into(), omega_tilde);
            let mesh = match mesh_n {
                Some(n) => rayhelm::geom::Mesh { domain: bench.domain, nx: n, ny: n },
                None => build_mesh(bench.domain, omega_tilde.powf(-0.5))?,
            };
            let medium = &bench.ray_medium;
            let space = uniform_fan_space(&mesh, omega_tilde, medium, fan)?;
            let g = impedance_trace(&bench.wave, medium, omega_tilde);
            let system = assemble(&space, medium, &g)?;
            let coefficients = pwdg_solve(&system)?;
            let solution = DiscreteField { space, coefficients };
            write_solution(&out, &solution)?;
            println!(
                "solved {} dofs on {}x{}, coefficients -> {}",
                solution.coefficients.len(),
                mesh.nx,
                mesh.ny,
                out.display()
            );
        }
    }
    Ok(())
}
