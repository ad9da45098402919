use rayhelm::geom::{build_mesh, interpolate_ray_field, interpolate_ray_field_bilinear, refine_to};
use rayhelm::pipeline::{benchmark, max_angle_error, probe_mesh_expecting, refine_mesh, ExampleId, RefineRecipe};
use rayhelm::pwspace::global_projection_error;
use rayhelm::pairwise_order;

fn sweep(example: ExampleId, drift: Option<f64>) {
    let omegas: [f64; 3] = [400.0, 625.0, 900.0];
    let mut l2s = Vec::new();
    let mut angs = Vec::new();
    for &omega in &omegas {
        let wt = omega.sqrt();
        let bench_low = benchmark(example, wt);
        let bench_high = benchmark(example, omega);
        let medium = &bench_low.ray_medium;
        let mesh0 = build_mesh(bench_low.domain, wt.powf(-0.5)).unwrap();
        let (probed, _, _) = probe_mesh_expecting(&bench_low.wave, &mesh0, medium, bench_low.eval_margin, 0.4, Some(bench_low.ray_count)).unwrap();
        let n_bar = probed.max_ray_count();
        let c_min = (0..mesh0.n_elements()).map(|e| medium.c(mesh0.barycenter(e))).fold(f64::INFINITY, f64::min);
        let target = 3.0 * n_bar as f64 * c_min / wt;
        let mesh_t = if target < mesh0.h() { refine_to(&mesh0, target).unwrap() } else { mesh0.clone() };
        let init = interpolate_ray_field(&probed, &mesh_t).unwrap();
        let mut recipe = RefineRecipe::for_example(example, n_bar);
        recipe.options_drift_stop = drift;
        let refined = refine_mesh(&bench_low.wave, &mesh_t, &init, medium, bench_low.eval_margin, &recipe).unwrap();
        let (ang, _) = max_angle_error(&refined.rays, &refined.probe_centers, &bench_low);
        angs.push(ang);
        let mesh_h = refine_to(&mesh_t, 1.0 / omega).unwrap();
        let rays_h = interpolate_ray_field_bilinear(&refined.rays, &mesh_h).unwrap();
        let rm = bench_high.ray_medium.clone();
        let l2 = global_projection_error(&bench_high.wave, &mesh_h, &rays_h, omega, &move |p| rm.xi(p)).unwrap();
        l2s.push(l2);
    }
    let o = |v: &Vec<f64>| (pairwise_order(v[0], v[1], 400.0, 625.0), pairwise_order(v[1], v[2], 625.0, 900.0));
    let (a1, a2) = o(&l2s);
    let (g1, g2) = o(&angs);
    println!("{example:?} drift={drift:?}: L2 {:.3e}/{:.3e}/{:.3e} ord {a1:.2}/{a2:.2} | ang {:.2e}/{:.2e}/{:.2e} ord {g1:.2}/{g2:.2}",
             l2s[0], l2s[1], l2s[2], angs[0], angs[1], angs[2]);
}

fn main() {
    for drift in [Some(0.1), Some(0.05), Some(0.02), Some(0.01), None] {
        sweep(ExampleId::Example2, drift);
    }
    for drift in [Some(0.1), Some(0.05), Some(0.02), None] {
        sweep(ExampleId::Example1, drift);
    }
}
