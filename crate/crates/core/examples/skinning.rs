//! Shape and pose the synthetic humanoid, then report where its joints and
//! vertices end up.

use liquidwarp::body::{forward_kinematics, shape_deform, skin};
use liquidwarp::synthetic::{self, HEIGHT_BETA, LEFT_ARM, NUM_JOINTS};

fn main() -> liquidwarp::Result<()> {
    let model = synthetic::humanoid();
    println!(
        "humanoid: {} vertices, {} faces, {} joints, {} shape coefficients",
        model.num_vertices(),
        model.num_faces(),
        model.num_joints(),
        model.num_betas()
    );

    let mut params = model.rest_params(synthetic::default_camera());
    params.beta[HEIGHT_BETA] = 0.15;
    // Raise the left arm sideways by 90 degrees.
    params.theta[LEFT_ARM] = [0.0, 0.0, std::f64::consts::FRAC_PI_2];

    let shaped = shape_deform(&model, &params.beta)?;
    let joints = forward_kinematics(&model, &shaped, &params.theta)?;
    let names = ["root", "left arm", "right arm", "left leg", "right leg", "head"];
    for (name, t) in names.iter().zip(&joints).take(NUM_JOINTS) {
        let p = t.translation;
        println!("{name:>9}: ({:+.3}, {:+.3}, {:+.3})", p.x, p.y, p.z);
    }

    let mesh = skin(&model, &params)?;
    let (lo, hi) = mesh.vertices.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), v| (lo.min(v.x), hi.max(v.x)),
    );
    println!("posed width: {:.3} (x from {lo:+.3} to {hi:+.3})", hi - lo);
    println!("centroid: {:?}", mesh.centroid().as_slice());
    Ok(())
}
