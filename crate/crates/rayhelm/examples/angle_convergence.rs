//! Angle-error convergence of the refined ray directions on both
//! heterogeneous benchmarks, omega in {400, 625, 900} with probe frequency
//! sqrt(omega), closed-form probe fields. Prints a table of max angle
//! errors with pairwise orders.

use rayhelm::geom::{build_mesh, interpolate_ray_field, refine_to};
use rayhelm::pipeline::{benchmark, max_angle_error, probe_mesh_expecting, refine_mesh, ExampleId, RefineRecipe};
use rayhelm::pairwise_order;

fn sweep(example: ExampleId, name: &str) -> Result<(), Box<dyn std::error::Error>> {
    println!("{name}:");
    println!("  {:>8} {:>10} {:>14} {:>8} {:>7}", "omega", "omega~", "max angle err", "order", "iters");
    let omegas: [f64; 3] = [400.0, 625.0, 900.0];
    let mut prev: Option<(f64, f64)> = None;
    for &omega in &omegas {
        let omega_tilde = omega.sqrt();
        let bench = benchmark(example, omega_tilde);
        let medium = &bench.ray_medium;
        let mesh0 = build_mesh(bench.domain, omega_tilde.powf(-0.5))?;
        let (probed, _, _) = probe_mesh_expecting(
            &bench.wave,
            &mesh0,
            medium,
            bench.eval_margin,
            0.4,
            Some(bench.ray_count),
        )?;
        let n_bar = probed.max_ray_count();
        let c_min = (0..mesh0.n_elements())
            .map(|e| medium.c(mesh0.barycenter(e)))
            .fold(f64::INFINITY, f64::min);
        let target = 3.0 * n_bar as f64 * c_min / omega_tilde;
        let mesh_t = if target < mesh0.h() { refine_to(&mesh0, target)? } else { mesh0.clone() };
        let init = interpolate_ray_field(&probed, &mesh_t)?;
        let recipe = RefineRecipe::for_example(example, n_bar);
        let refined = refine_mesh(&bench.wave, &mesh_t, &init, medium, bench.eval_margin, &recipe)?;
        let (err, skipped) = max_angle_error(&refined.rays, &refined.probe_centers, &bench);
        let order = prev
            .map(|(po, pe)| format!("{:+.2}", pairwise_order(pe, err, po, omega)))
            .unwrap_or_else(|| "-".into());
        println!(
            "  {omega:>8} {omega_tilde:>10.3} {err:>14.3e} {order:>8} {:>7}{}",
            refined.max_iterations,
            if skipped > 0 { format!("  ({skipped} elements skipped)") } else { String::new() }
        );
        prev = Some((omega, err));
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    sweep(ExampleId::Example1, "single wave, Gaussian-lens amplitude")?;
    sweep(ExampleId::Example2, "two crossing waves, linear slowness-squared")?;
    Ok(())
}
