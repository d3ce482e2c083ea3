// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use xbarlife::workload::{
    generate, stats, ActivationDist, GeneratorSpec, SnnGraph, Topology, WorkloadError,
};

fn spec_strategy() -> impl Strategy<Value = GeneratorSpec> {
    let topology = prop_oneof![
        prop::collection::vec(1usize..12, 2..5).prop_map(|layers| Topology::Feedforward { layers }),
        (1usize..30, 0.05f64..1.0)
            .prop_map(|(n, connectivity)| Topology::Reservoir { n, connectivity }),
    ];
    let dist = prop_oneof![
        (0u64..50, 0u64..50).prop_map(|(a, b)| ActivationDist::Uniform {
            lo: a.min(b),
            hi: a.max(b)
        }),
        (0.5f64..2.5, 1u64..500).prop_map(|(s, max)| ActivationDist::Zipf { s, max }),
    ];
    (topology, dist, any::<u64>()).prop_map(|(topology, activations, seed)| GeneratorSpec {
        topology,
        activations,
        seed,
    })
}

#[test]
fn corrupt_file_names_unknown_id() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"neurons":[{"id":1,"kind":"input"}],"synapses":[{"pre":1,"post":7,"weight":0.1,"activations":3}]}"#,
    )
    .unwrap();
    let err = SnnGraph::load(&path).unwrap_err();
    assert!(matches!(err, WorkloadError::Dangling(ref ids) if ids == &[7]));
    assert!(err.to_string().contains('7'));
}

#[test]
fn zipf_total_matches_resummation() {
    let spec = GeneratorSpec {
        topology: Topology::Reservoir {
            n: 60,
            connectivity: 0.2,
        },
        activations: ActivationDist::Zipf { s: 1.2, max: 1000 },
        seed: 17,
    };
    let g = generate(&spec).unwrap();
    let mut total = 0u64;
    for s in &g.synapses {
        total += s.activations;
    }
    assert_eq!(stats(&g).total_activations, total);
    assert!(total > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn save_load_round_trip(spec in spec_strategy()) {
        let g = generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        g.save(&path).unwrap();
        prop_assert_eq!(SnnGraph::load(&path).unwrap(), g);
    }

    #[test]
    fn generation_is_pure(spec in spec_strategy()) {
        prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn feedforward_fan_in_is_previous_layer(layers in prop::collection::vec(1usize..10, 2..5), seed: u64) {
        let spec = GeneratorSpec {
            topology: Topology::Feedforward { layers: layers.clone() },
            activations: ActivationDist::Uniform { lo: 1, hi: 3 },
            seed,
        };
        let g = generate(&spec).unwrap();
        let fan_in = g.fan_in();
        let mut id = 0u32;
        for (l, &size) in layers.iter().enumerate() {
            for _ in 0..size {
                let expect = if l == 0 { 0 } else { layers[l - 1] };
                prop_assert_eq!(fan_in[&id], expect);
                id += 1;
            }
        }
    }
}
