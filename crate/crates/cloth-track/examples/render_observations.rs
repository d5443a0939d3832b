//! Sensing in isolation: what the top-down depth camera sees of a cloth
//! state — z-buffer visibility, picker-tip occlusion, Gaussian noise and
//! dropout — and how the derived depth image and Chamfer distances behave.
//!
//! Run with `cargo run --example render_observations`.

use cloth_track::{
    build_grid_cloth, chamfer_bidirectional, depth_image, dyn_step, render_point_cloud,
    visible_vertices, CameraModel, LowLevelAction, Result, SimParams, Sphere, Vec3,
};

fn main() -> Result<()> {
    let mesh = build_grid_cloth(20, 20, 0.01)?;
    let params = SimParams::default();
    let camera = CameraModel::over_bounds(-0.05, 0.25, -0.05, 0.25, 0.003);

    // A flat cloth is fully visible from above.
    let flat = mesh.rest_state();
    let visible_flat = visible_vertices(&mesh, &flat, &camera)?;
    println!(
        "flat cloth: {}/{} vertices visible",
        visible_flat.len(),
        mesh.num_vertices()
    );

    // Lift one corner so the cloth hangs: the z-buffer now hides the
    // vertices underneath the draped part.
    let mut state = flat.clone();
    let grab = LowLevelAction::pick(0, Vec3::new(0.0, 0.0, 0.006));
    for _ in 0..30 {
        state = dyn_step(&mesh, &state, &params, &grab, None)?;
    }
    let visible_hang = visible_vertices(&mesh, &state, &camera)?;
    println!(
        "hanging cloth: {}/{} vertices visible (self-occlusion)",
        visible_hang.len(),
        mesh.num_vertices()
    );

    // The picker tip occludes a sphere around the grasped vertex.
    let occluder = Sphere { center: state.positions[0], radius: 0.03 };
    let (clean, _) = render_point_cloud(&mesh, &state, &camera, &[], 7)?;
    let (occluded, _) = render_point_cloud(&mesh, &state, &camera, &[occluder], 7)?;
    println!(
        "occluder at the grasp removes {} of {} visible points",
        clean.len() - occluded.len(),
        clean.len()
    );

    // Noise and dropout degrade the cloud; bidirectional Chamfer quantifies
    // how far the noisy cloud sits from the clean one.
    let noisy_camera = CameraModel {
        depth_noise_sigma: 0.002,
        dropout_rate: 0.15,
        ..camera.clone()
    };
    let (noisy, _) = render_point_cloud(&mesh, &state, &noisy_camera, &[], 7)?;
    let chamfer = chamfer_bidirectional(&noisy.points, &clean.points)?;
    println!(
        "noise 2 mm + 15% dropout: {} points remain, Chamfer vs clean {:.2e} m^2 (~3 sigma^2 = {:.2e})",
        noisy.len(),
        chamfer,
        3.0 * noisy_camera.depth_noise_sigma.powi(2)
    );

    // The depth image is derived from the cloud: max height per pixel, NaN
    // where nothing maps.
    let image = depth_image(&clean.points, &camera)?;
    let filled = image.data.iter().filter(|v| v.is_finite()).count();
    println!(
        "depth image {}x{}: {} of {} pixels hit",
        image.width,
        image.height,
        filled,
        image.data.len()
    );
    Ok(())
}
