mod common;

use common::{random_solid, volume, watertight, winding_number};
use geomodel::geom::Point;
use geomodel::solids::{tessellate, Quality};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn aabb_holds_every_vertex(seed in any::<u64>(), q in 0u32..=9) {
        let s = random_solid(&mut StdRng::seed_from_u64(seed));
        let b = s.aabb().inflate(1e-9);
        let mesh = tessellate(&s, Quality::new(q).unwrap()).unwrap();
        for v in &mesh.vertices {
            prop_assert!(b.contains(v), "{s:?}: vertex {v:?} outside {b:?}");
        }
    }

    #[test]
    fn meshes_are_closed_and_outward(seed in any::<u64>(), q in 0u32..=9) {
        let s = random_solid(&mut StdRng::seed_from_u64(seed));
        let mesh = tessellate(&s, Quality::new(q).unwrap()).unwrap();
        prop_assert!(watertight(&mesh).is_ok(), "{s:?}: {:?}", watertight(&mesh));
    }

    #[test]
    fn mesh_volume_is_close_at_top_quality(seed in any::<u64>()) {
        let s = random_solid(&mut StdRng::seed_from_u64(seed));
        let mesh = tessellate(&s, Quality::MAX).unwrap();
        let exact = volume(&s);
        let v = common::signed_volume(&mesh);
        prop_assert!(((v - exact) / exact).abs() < 0.02, "{s:?}: mesh {v}, analytic {exact}");
    }
}

/// Membership agrees with the winding number of the fine mesh for points
/// whose membership is stable under moves of 2% of the solid's size.
#[test]
fn contains_matches_mesh_winding_number() {
    let mut rng = StdRng::seed_from_u64(31);
    let (mut checked, mut agree) = (0usize, 0usize);
    for _ in 0..40 {
        let s = random_solid(&mut rng);
        let mesh = tessellate(&s, Quality::MAX).unwrap();
        let b = s.aabb();
        let size = (0..3).map(|k| b.max[k] - b.min[k]).fold(f64::INFINITY, f64::min);
        let delta = 0.02 * size;
        let mut n = 0;
        while n < 150 {
            let p = Point::new(
                rng.gen_range(b.min[0] - delta..b.max[0] + delta),
                rng.gen_range(b.min[1] - delta..b.max[1] + delta),
                rng.gen_range(b.min[2] - delta..b.max[2] + delta),
            );
            let inside = s.contains(&p);
            let stable = (0..3).all(|k| {
                [-delta, delta].iter().all(|d| {
                    let mut q = p;
                    q[k] += d;
                    s.contains(&q) == inside
                })
            });
            if !stable {
                continue;
            }
            n += 1;
            checked += 1;
            agree += ((winding_number(&mesh, &p) > 0.5) == inside) as usize;
        }
    }
    let rate = agree as f64 / checked as f64;
    assert!(rate >= 0.99, "agreement {rate} over {checked} points");
}
