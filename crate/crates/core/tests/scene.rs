mod common;

use common::{canonical, random_scene};
use geomodel::model::parse_document;
use geomodel::scene::{build, compile, BuildOptions, CompiledScene};
use geomodel::solids::Quality;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn scene(xml: &str, optimization: u8) -> CompiledScene {
    let doc = parse_document(xml).unwrap().document;
    let opts = BuildOptions {
        optimization,
        quality: Quality::new(1).unwrap(),
        ..BuildOptions::default()
    };
    compile(build(&doc, &opts).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Every optimization level draws the same world triangles; levels
    /// below 3 keep one instance per placed solid and never add geometry.
    #[test]
    fn optimization_preserves_geometry(seed in any::<u64>()) {
        let rs = random_scene(&mut StdRng::seed_from_u64(seed), 50);
        let scenes: Vec<CompiledScene> = (0..=3).map(|o| scene(&rs.xml, o)).collect();
        let reference = canonical(&scenes[0].world_triangles());
        for (o, s) in scenes.iter().enumerate() {
            prop_assert_eq!(&canonical(&s.world_triangles()), &reference, "opt {}", o);
            prop_assert_eq!(s.stats().triangles_rendered, reference.len());
        }
        for s in &scenes[..3] {
            prop_assert_eq!(s.instances().len(), rs.placed.len());
        }
        let distinct: Vec<usize> = scenes.iter().map(|s| s.stats().distinct_geometries).collect();
        prop_assert_eq!(distinct[0], rs.placed.len());
        prop_assert!(distinct[1] <= distinct[0] && distinct[2] == distinct[1]);
    }
}
