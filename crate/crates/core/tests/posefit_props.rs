use keyvote::geom::{Point3, RigidTransform, Vec3};
use keyvote::oracle::quaternion_rigid_fit;
use keyvote::posefit::{fit_rigid_transform, CorrespondenceSet};
use keyvote::synth::uniform_rotation;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pose(rng: &mut impl Rng) -> RigidTransform {
    let t = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..2.0));
    RigidTransform::new(uniform_rotation(rng), t).unwrap()
}

fn random_points(rng: &mut impl Rng, k: usize) -> Vec<Point3> {
    (0..k)
        .map(|_| Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect()
}

fn seeded() -> impl Strategy<Value = ChaCha8Rng> {
    any::<u64>().prop_map(ChaCha8Rng::seed_from_u64)
}

#[test]
fn agrees_with_quaternion_oracle_on_noisy_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let k = rng.random_range(3..=16);
        let t = random_pose(&mut rng);
        let model = random_points(&mut rng, k);
        let observed: Vec<Point3> = model
            .iter()
            .map(|p| t.apply(*p) + Vec3::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)))
            .collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let ours = fit_rigid_transform(&CorrespondenceSet::new(model.clone(), observed.clone(), weights.clone()).unwrap()).unwrap();
        let oracle = quaternion_rigid_fit(&model, &observed, &weights);
        assert!((*ours.transform.rotation() - *oracle.rotation()).max_abs() < 1e-9);
        assert!((ours.transform.translation() - oracle.translation()).max_abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn left_invariance(mut rng in seeded(), k in 3usize..16) {
        let t = random_pose(&mut rng);
        let g = random_pose(&mut rng);
        let model = random_points(&mut rng, k);
        let observed: Vec<Point3> = model.iter().map(|p| t.apply(*p) + Vec3::new(rng.random_range(-1e-3..1e-3), 0.0, 0.0)).collect();
        let moved: Vec<Point3> = observed.iter().map(|p| g.apply(*p)).collect();
        let a = fit_rigid_transform(&CorrespondenceSet::unweighted(model.clone(), observed).unwrap()).unwrap();
        let b = fit_rigid_transform(&CorrespondenceSet::unweighted(model, moved).unwrap()).unwrap();
        let expected = g.compose(&a.transform);
        prop_assert!((*b.transform.rotation() - *expected.rotation()).max_abs() <= 1e-9);
        prop_assert!((b.transform.translation() - expected.translation()).max_abs() <= 1e-9);
    }

    #[test]
    fn perturbations_never_improve_the_fit(mut rng in seeded(), k in 3usize..16) {
        let t = random_pose(&mut rng);
        let model = random_points(&mut rng, k);
        let observed: Vec<Point3> = model.iter().map(|p| t.apply(*p) + Vec3::new(rng.random_range(-1e-2..1e-2), rng.random_range(-1e-2..1e-2), 0.0)).collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let corr = CorrespondenceSet::new(model, observed, weights).unwrap();
        let fit = fit_rigid_transform(&corr).unwrap();
        let best = corr.weighted_sse(&fit.transform);
        for _ in 0..100 {
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let Ok(r) = RigidTransform::from_axis_angle(axis, rng.random_range(-0.1f64..0.1).to_radians()) else { continue };
            let dt = Vec3::new(rng.random_range(-1e-4..1e-4), rng.random_range(-1e-4..1e-4), rng.random_range(-1e-4..1e-4));
            let probe = RigidTransform::from_translation(dt).compose(&fit.transform.compose(&r));
            prop_assert!(corr.weighted_sse(&probe) >= best - 1e-15);
        }
    }

    #[test]
    fn reflections_still_give_proper_rotations(mut rng in seeded(), k in 3usize..16, axis in 0usize..3) {
        let model = random_points(&mut rng, k);
        let mirrored: Vec<Point3> = model.iter().map(|p| { let mut q = *p; q[axis] = -q[axis]; q }).collect();
        let fit = fit_rigid_transform(&CorrespondenceSet::unweighted(model, mirrored).unwrap()).unwrap();
        prop_assert!((fit.transform.rotation().determinant() - 1.0).abs() <= 1e-9);
    }
}
