use compgen_core::kinematics::{random_joints, random_task_target, ArmModel, Axis, IkSettings, JointVector, Vec3};
use nalgebra::{Matrix3, Matrix3x6, Matrix4, Rotation3, Translation3, Unit, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Homogeneous transform product, built only from nalgebra primitives.
fn fk_oracle(arm: &ArmModel, q: &JointVector) -> Vec3 {
    let mut t = Matrix4::<f64>::identity();
    for (joint, &angle) in arm.joints.iter().zip(&q.0) {
        let axis = match joint.axis {
            Axis::X => Vector3::x_axis(),
            Axis::Y => Vector3::y_axis(),
            Axis::Z => Vector3::z_axis(),
        };
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis.into_inner()), angle);
        t = t * rot.to_homogeneous() * Translation3::new(0.0, 0.0, joint.link).to_homogeneous();
    }
    [t[(0, 3)], t[(1, 3)], t[(2, 3)]]
}


#[test]
fn forward_kinematics_matches_transform_product() {
    let arm = ArmModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let q = random_joints(&arm, &mut rng);
        let (a, b) = (arm.forward_kinematics(&q), fk_oracle(&arm, &q));
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn dls_step_matches_dense_linear_solve() {
    let arm = ArmModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let q = random_joints(&arm, &mut rng);
        let target = [rng.gen_range(-0.3..0.3), rng.gen_range(0.1..0.5), rng.gen_range(0.0..0.3)];
        let jac = arm.geometric_jacobian(&q);
        let j = Matrix3x6::from_fn(|r, c| jac[r][c]);
        let fk = fk_oracle(&arm, &q);
        let e = Vector3::new(target[0] - fk[0], target[1] - fk[1], target[2] - fk[2]);
        let a: Matrix3<f64> = j * j.transpose() + Matrix3::identity() * 0.25;
        let y = a.lu().solve(&e).expect("damped system is non-singular");
        let expected: Vector6<f64> = j.transpose() * y;
        let got = arm.dls_step(&q, target, 0.5);
        for k in 0..6 {
            assert!((got[k] - expected[k]).abs() < 1e-9, "dq[{k}] {} vs {}", got[k], expected[k]);
        }
    }
}

#[test]
fn ik_converges_on_random_reachable_targets() {
    let arm = ArmModel::default();
    let settings = IkSettings { damping: 0.5, max_iterations: 99, tolerance: 1e-3 };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let targets: Vec<Vec3> = (0..100).map(|_| random_task_target(&mut rng)).collect();
    let mut converged = 0;
    for t in &targets {
        let sol = arm.solve_ik_dls(*t, arm.home(), &settings);
        assert!(sol.q.is_finite());
        if sol.converged {
            converged += 1;
            let p = arm.forward_kinematics(&sol.q);
            let err = ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2)).sqrt();
            assert!(err < 1e-3);
            assert!(arm.within_limits(&sol.q));
        }
    }
    assert!(converged >= 99, "only {converged}/100 converged");
}
